//! Cross-checks on converged orbits: independent routes to the same quantity must agree.

mod common;

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix3, Vector3, Vector6};
use num_complex::Complex64;

use coulomb_braids::dynamics::{action_with_closure, flow, flow_sampled, uniform_grid, FlowOptions, FullState, ReducedState};
use coulomb_braids::secondvar::{
    assemble_quadratic, boundary_blocks, boundary_form, general_boundary_eigenvalues, orbit_jacobi, twisted_boundary,
};
use coulomb_braids::stability::{full_monodromy, full_system, reduced_by_composition, reduced_direct, reduced_monodromy, route_discrepancy, REDUCED_TRIVIAL};
use coulomb_braids::{run_pipeline, PipelineConfig, PipelineResult};

use common::*;

/// The tetrahedral 2/3 class, continued a few steps down from `Q = 24`.
fn circ2() -> &'static PipelineResult {
    static RUN: OnceLock<PipelineResult> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut cfg = PipelineConfig::default();
        cfg.charge_stop.max_records = 5;
        run_pipeline(&waypoints("tetra-circle-two-thirds.txt"), &cfg).unwrap()
    })
}

fn closest(z: Complex64, pool: &[Complex64]) -> f64 {
    pool.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min)
}

#[test]
fn records_solve_their_own_fixed_charge_problem() {
    let run = circ2();
    assert!(run.charge_curve.records.len() >= 3);
    for rec in &run.charge_curve.records {
        let p = run.problem.at_lambda(rec.lambda);
        assert!(p.residual(&rec.x).unwrap().amax() <= p.config.tol);
        let (again, _) = p.solve(&rec.x).unwrap();
        let moved = again.0.iter().zip(&rec.x.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(moved <= 1e-9, "Q = {}: re-solve moved by {moved:e}", rec.lambda);
    }
}

#[test]
fn composed_and_direct_monodromy_agree() {
    let run = circ2();
    let rec = &run.charge_curve.records[0];
    let p = run.problem.at_lambda(rec.lambda);
    let a = reduced_by_composition(&p, &rec.x).unwrap();
    let b = reduced_direct(&p, &rec.x).unwrap();
    assert!(route_discrepancy(&a, &b) <= 1e-7);
}

#[test]
fn reduced_spectrum_sits_inside_full_spectrum() {
    let run = circ2();
    let rec = &run.charge_curve.records[0];
    let p = run.problem.at_lambda(rec.lambda);
    let reduced = reduced_monodromy(&p, &rec.x).unwrap();
    let full = full_monodromy(&p, &rec.x).unwrap();
    assert_eq!(full.dimension, 6 * p.params.n_electrons());
    let pool = full.multipliers();
    // The pair at 1 is a Jordan block whose computed splitting is route dependent.
    let mut nontrivial = reduced.multipliers();
    nontrivial.sort_by(|a, b| (a - 1.0).norm().total_cmp(&(b - 1.0).norm()));
    for &z in &nontrivial[REDUCED_TRIVIAL..] {
        assert!(closest(z, &pool) <= 1e-6 * z.norm().max(1.0), "reduced multiplier {z} missing from the full spectrum");
    }
    assert!(full.spectral_radius >= reduced.spectral_radius * (1.0 - 1e-9));
}

#[test]
fn energy_pair_of_multipliers_sits_at_one() {
    let run = circ2();
    let rec = &run.charge_curve.records[0];
    let p = run.problem.at_lambda(rec.lambda);
    let m = reduced_monodromy(&p, &rec.x).unwrap();
    let mut d: Vec<f64> = m.multipliers().iter().map(|z| (z - 1.0).norm()).collect();
    d.sort_by(f64::total_cmp);
    assert!(d[1] <= 1e-5, "distances to 1: {d:?}");
}

#[test]
fn symmetric_states_stay_symmetric_under_the_full_flow() {
    let run = circ2();
    let rec = &run.charge_curve.records[0];
    let p = run.problem.at_lambda(rec.lambda);
    let (field, x0) = full_system(&p, &rec.x);
    let t = 0.37 * p.params.period;
    let full = flow(&field, &x0, 0.0, t, FlowOptions::default(), &p.config.ode).unwrap().x;
    let reduced = flow(&p.field, &rec.x.node(0), 0.0, t, FlowOptions::default(), &p.config.ode).unwrap().x;
    let expect = FullState::symmetric(&p.params.group, &ReducedState::from_slice(&reduced)).to_vec();
    assert!(rel_err(&full, &expect) <= 1e-9);
}

#[test]
fn orbit_closes_after_the_full_period() {
    let run = circ2();
    for rec in &run.charge_curve.records {
        let p = run.problem.at_lambda(rec.lambda);
        let x0 = rec.x.node(0);
        let end = flow(&p.field, &x0, 0.0, p.params.period, FlowOptions::default(), &p.config.ode).unwrap().x;
        assert!(rel_err(&end, &x0) <= 1e-8);
    }
}

#[test]
fn action_over_one_interval_times_repetitions_matches_full_period() {
    let run = circ2();
    for rec in &run.charge_curve.records {
        let p = run.problem.at_lambda(rec.lambda);
        let intervals = 2048;
        let grid = uniform_grid(0.0, p.params.period, intervals);
        let (_, samples) = flow_sampled(&p.field, &rec.x.node(0), 0.0, p.params.period, &grid, FlowOptions::default(), &p.config.ode).unwrap();
        let samples: Vec<(f64, [f64; 6])> = samples.into_iter().map(|(t, r)| (t, r.x.try_into().unwrap())).collect();
        let whole = action_with_closure(&samples, &p.field, p.params.n_electrons(), &nalgebra::Matrix6::identity()).unwrap();
        let recorded = rec.action.unwrap();
        assert!((whole - recorded).abs() <= 1e-8 * recorded.abs(), "Q = {}: {whole} vs {recorded}", rec.lambda);
    }
}

#[test]
fn potential_hessian_samples_are_symmetric() {
    let run = circ2();
    let rec = &run.charge_curve.records[0];
    let p = run.problem.at_lambda(rec.lambda);
    let data = assemble_quadratic(&p, &rec.x, 64).unwrap();
    assert_eq!(data.pmat.len(), 65);
    for m in &data.pmat {
        assert!((m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0));
    }
}

#[test]
fn energy_is_constant_along_records_at_fixed_charge() {
    let run = circ2();
    for rec in &run.charge_curve.records {
        let p = run.problem.at_lambda(rec.lambda);
        let e = rec.energy.unwrap();
        for i in 0..rec.x.nodes() {
            let ei = p.field.energy(&rec.x.node(i)).unwrap();
            assert!((ei - e).abs() <= 1e-9 * e.abs().max(1.0));
        }
    }
}

/// The twisted boundary matrix is the general boundary form restricted to
/// `α = (β, Rβ)`, checked both pointwise and through the null space of `[R, −I]`.
#[test]
fn twisted_boundary_matches_general_form() {
    let (p, guess) = seeded_problem("tetra-circle-third.txt", 24.0, false, 1.03);
    let (x, _) = p.solve(&guess).unwrap();
    let sol = orbit_jacobi(&p, &x, 200).unwrap();
    let blocks = boundary_blocks(&sol).unwrap();
    let r: Matrix3<f64> = *p.params.twist.rotation();
    let twisted = twisted_boundary(&blocks, &r);
    let b = Matrix3::from_fn(|i, j| twisted.matrix[i][j]);
    let form = boundary_form(&blocks);

    let mut rng = rng(17);
    for _ in 0..20 {
        let beta = Vector3::new(
            rand::Rng::random_range(&mut rng, -1.0..1.0),
            rand::Rng::random_range(&mut rng, -1.0..1.0),
            rand::Rng::random_range(&mut rng, -1.0..1.0),
        );
        let rb = r * beta;
        let alpha = Vector6::new(beta[0], beta[1], beta[2], rb[0], rb[1], rb[2]);
        let general = (alpha.transpose() * &form * alpha)[(0, 0)];
        let restricted = (beta.transpose() * b * beta)[(0, 0)];
        assert!((general - restricted).abs() <= 1e-10 * form.amax());
    }

    let mut d = DMatrix::zeros(3, 6);
    d.view_mut((0, 0), (3, 3)).copy_from(&r);
    d.view_mut((0, 3), (3, 3)).copy_from(&(-Matrix3::identity()));
    let general = general_boundary_eigenvalues(&blocks, &d);
    assert_eq!(general.len(), 3);
    // The orthonormal basis [I; R]/√2 halves the quadratic form.
    for (g, t) in general.iter().zip(twisted.eigenvalues) {
        assert!((2.0 * g - t).abs() <= 1e-9 * form.amax(), "{g} vs {t}");
    }
}

#[test]
fn kepler_pipeline_tracks_the_circle_at_every_charge() {
    let mut cfg = PipelineConfig::default();
    cfg.interactions = false;
    cfg.charge_stop.max_records = 8;
    let run = run_pipeline(&waypoints("tetra-circle-third.txt"), &cfg).unwrap();
    let omega = 2.0 * PI / run.problem.params.period;
    for rec in &run.charge_curve.records {
        let expect = (rec.lambda / (omega * omega)).cbrt();
        for i in 0..rec.x.nodes() {
            let s = rec.x.node(i);
            let r = Vector3::new(s[0], s[1], s[2]).norm();
            let v = Vector3::new(s[3], s[4], s[5]).norm();
            assert!((r - expect).abs() <= 1e-9 * expect, "Q = {}: radius {r} vs {expect}", rec.lambda);
            assert!((v - omega * expect).abs() <= 1e-9 * omega * expect);
        }
    }
}

#[test]
fn twist_maps_the_orbit_onto_itself() {
    let run = circ2();
    let rec = &run.charge_curve.records[0];
    let p = run.problem.at_lambda(rec.lambda);
    let x0 = rec.x.node(0);
    let end = flow(&p.field, &x0, 0.0, p.params.fundamental_time(), FlowOptions::default(), &p.config.ode).unwrap().x;
    assert!(rel_err(&end, &p.params.twist.apply(&x0)) <= 1e-9);
}
