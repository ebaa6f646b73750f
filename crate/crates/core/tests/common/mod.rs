#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use coulomb_braids::seeding::{build_seed, SeedOptions};
use coulomb_braids::symmetry::build_group;
use coulomb_braids::{ProblemParams, ShootingConfig, ShootingProblem, ShootingVector, Waypoints};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Waypoint files in `seeds/`, each an independent free-homotopy class.
pub const SHIPPED: [&str; 5] = [
    "tetra-circle-third.txt",
    "tetra-circle-two-thirds.txt",
    "tetra-cap.txt",
    "octa-z-quarter.txt",
    "octa-cap-third.txt",
];

pub fn seed_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../seeds").join(name)
}

pub fn waypoints(name: &str) -> Waypoints {
    std::fs::read_to_string(seed_path(name)).unwrap().parse().unwrap()
}

/// Unforced problem for a shipped class at charge `q`, with the seed curve as
/// the initial guess. `factor` scales the seed radius.
pub fn seeded_problem(name: &str, q: f64, interactions: bool, factor: f64) -> (ShootingProblem, ShootingVector) {
    let w = waypoints(name);
    let group = Arc::new(build_group(w.group));
    let twist = w.twist(&group).unwrap();
    let mut params = ProblemParams::new(group.clone(), twist.clone(), q);
    params.interactions = interactions;
    let problem = ShootingProblem::new(params, ShootingConfig::default()).unwrap();
    let mut opts = SeedOptions::default();
    opts.radius_factor = Some(opts.factor() * factor);
    let seed = build_seed(&w.vectors(), &twist, &group, q, &opts).unwrap();
    let x = seed.nodes(&problem.times);
    (problem, x)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A state with position of norm in `[0.5, 1.5]` away from every axis, and a random velocity.
pub fn random_state(rng: &mut ChaCha8Rng, group: &coulomb_braids::PolyhedralGroup) -> [f64; 6] {
    loop {
        let mut x = [0.0; 6];
        for v in x.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let u = nalgebra::Vector3::new(x[0], x[1], x[2]);
        let r = u.norm();
        if !(0.5..1.5).contains(&r) {
            continue;
        }
        if coulomb_braids::symmetry::min_distance_to_gamma(&u, group).unwrap() > 0.1 {
            return x;
        }
    }
}

/// `max |a − b| / max(1, max |b|)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
