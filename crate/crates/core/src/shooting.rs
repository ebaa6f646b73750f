//! Multiple shooting for the twisted boundary-value problem `x(T/M) = S x(0)`.
//!
//! Unknowns are the states at `n` nodes of the fundamental interval. Each
//! Newton step solves the `(6n+1) × 6n` system made of the linearized matching
//! conditions and the transversality row `f(x₀)·Δx₀ = 0` in the
//! minimum-norm least-squares sense.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow, flow_sampled, FlowOptions, FlowResult, ParamKind, ProblemParams, ReducedField};
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::linalg::{inf_norm, lstsq_min_norm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub nodes: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub gamma_min: f64,
    /// Relative cutoff on singular values.
    pub rank_tol: f64,
    pub ode: IntegratorConfig,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            nodes: 10,
            tol: 1e-11,
            max_iters: 50,
            gamma_min: 0.1,
            rank_tol: 1e-12,
            ode: IntegratorConfig::default(),
        }
    }
}

/// Concatenated node states `(x₀, …, x_{n−1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShootingVector(pub Vec<f64>);

impl ShootingVector {
    pub fn from_nodes(nodes: &[[f64; 6]]) -> Self {
        ShootingVector(nodes.iter().flatten().copied().collect())
    }

    pub fn nodes(&self) -> usize {
        self.0.len() / 6
    }

    pub fn node(&self, i: usize) -> [f64; 6] {
        let s = &self.0[6 * i..6 * i + 6];
        [s[0], s[1], s[2], s[3], s[4], s[5]]
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn from_dvector(v: &DVector<f64>) -> Self {
        ShootingVector(v.iter().copied().collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    /// `|G|∞` before each iteration and after the last one.
    pub residuals: Vec<f64>,
    pub damping: Vec<f64>,
    pub converged: bool,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Adaptive damping `γ = γ_min / max(γ_min, |ΔX|∞)`.
pub fn damping(gamma_min: f64, step_inf: f64) -> f64 {
    gamma_min / gamma_min.max(step_inf)
}

/// Residual and optional derivatives at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub g: DVector<f64>,
    pub jacobian: Option<DMatrix<f64>>,
    /// `∂G/∂λ` for the field's active parameter.
    pub dlambda: Option<DVector<f64>>,
}

#[derive(Clone)]
pub struct ShootingProblem {
    pub params: ProblemParams,
    pub field: ReducedField,
    /// `0 = τ₀ < … < τₙ = T/M`.
    pub times: Vec<f64>,
    pub config: ShootingConfig,
}

impl ShootingProblem {
    /// Equispaced nodes on the fundamental interval.
    pub fn new(params: ProblemParams, config: ShootingConfig) -> Result<Self> {
        let n = config.nodes;
        if n < 1 {
            return Err(Error::Domain("at least one shooting node is required".into()));
        }
        let tm = params.fundamental_time();
        let times = (0..=n)
            .map(|i| if i == n { tm } else { tm * i as f64 / n as f64 })
            .collect();
        Self::with_times(params, times, config)
    }

    pub fn with_times(params: ProblemParams, times: Vec<f64>, config: ShootingConfig) -> Result<Self> {
        params.validate()?;
        config.ode.validate()?;
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::Domain("node times must start at 0 and contain a segment".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("node times must be strictly increasing".into()));
        }
        if times[times.len() - 1] != params.fundamental_time() {
            return Err(Error::Domain("last node time must equal T/M".into()));
        }
        let field = ReducedField::from_params(&params);
        let mut config = config;
        config.nodes = times.len() - 1;
        Ok(ShootingProblem {
            params,
            field,
            times,
            config,
        })
    }

    pub fn with_field(mut self, field: ReducedField) -> Self {
        self.field = field;
        self
    }

    pub fn nodes(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        6 * self.nodes()
    }

    pub fn param_kind(&self) -> ParamKind {
        self.field.param
    }

    /// Current value of the active continuation parameter.
    pub fn lambda(&self) -> f64 {
        match self.field.param {
            ParamKind::Charge => self.field.q,
            ParamKind::Forcing => self.field.epsilon,
        }
    }

    pub fn set_lambda(&mut self, value: f64) {
        match self.field.param {
            ParamKind::Charge => {
                self.field.q = value;
                self.params.q = value;
            }
            ParamKind::Forcing => {
                self.field.epsilon = value;
                self.params.epsilon = value;
            }
        }
    }

    pub fn at_lambda(&self, value: f64) -> Self {
        let mut p = self.clone();
        p.set_lambda(value);
        p
    }

    fn check_len(&self, x: &ShootingVector) -> Result<()> {
        if x.0.len() != self.dim() {
            return Err(Error::Domain(format!(
                "shooting vector has length {}, expected {}",
                x.0.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn segment_flows(&self, x: &ShootingVector, opts: FlowOptions) -> Result<Vec<FlowResult>> {
        self.check_len(x)?;
        let cfg = self.config.ode;
        (0..self.nodes())
            .into_par_iter()
            .map(|i| {
                flow(&self.field, &x.node(i), self.times[i], self.times[i + 1], opts, &cfg).map_err(|e| {
                    Error::Segment {
                        segment: i,
                        source: Box::new(e),
                    }
                })
            })
            .collect()
    }

    /// Residual together with the requested derivatives.
    pub fn evaluate(&self, x: &ShootingVector, jacobian: bool, dlambda: bool) -> Result<Evaluation> {
        let opts = FlowOptions {
            state_sensitivity: jacobian,
            param_sensitivity: dlambda,
        };
        let flows = self.segment_flows(x, opts)?;
        let n = self.nodes();
        let s = &self.params.twist.s;
        let mut g = DVector::zeros(6 * n);
        for (i, fl) in flows.iter().enumerate() {
            let target = if i + 1 < n {
                DVector::from_column_slice(&x.node(i + 1))
            } else {
                let x0 = nalgebra::Vector6::from_column_slice(&x.node(0));
                DVector::from_column_slice((s * x0).as_slice())
            };
            for k in 0..6 {
                g[6 * i + k] = fl.x[k] - target[k];
            }
        }
        let jac = jacobian.then(|| {
            let mut j = DMatrix::zeros(6 * n, 6 * n);
            for (i, fl) in flows.iter().enumerate() {
                let mut blk = j.view_mut((6 * i, 6 * i), (6, 6));
                blk += fl.a.as_ref().unwrap();
                if i + 1 < n {
                    let mut id = j.view_mut((6 * i, 6 * (i + 1)), (6, 6));
                    id -= DMatrix::<f64>::identity(6, 6);
                } else {
                    let mut corner = j.view_mut((6 * i, 0), (6, 6));
                    corner -= s;
                }
            }
            j
        });
        let dl = dlambda.then(|| {
            let mut v = DVector::zeros(6 * n);
            for (i, fl) in flows.iter().enumerate() {
                v.rows_mut(6 * i, 6).copy_from(fl.w.as_ref().unwrap());
            }
            v
        });
        Ok(Evaluation {
            g,
            jacobian: jac,
            dlambda: dl,
        })
    }

    pub fn residual(&self, x: &ShootingVector) -> Result<DVector<f64>> {
        Ok(self.evaluate(x, false, false)?.g)
    }

    pub fn jacobian(&self, x: &ShootingVector) -> Result<DMatrix<f64>> {
        Ok(self.evaluate(x, true, false)?.jacobian.unwrap())
    }

    /// `f(x₀)` at `τ₀`, the normal of the phase condition.
    pub fn transversality(&self, x: &ShootingVector) -> Result<[f64; 6]> {
        self.field.field(self.times[0], &x.node(0))
    }

    /// True when no forcing is active. Only then do orbits come in one-parameter
    /// families of time shifts that the transversality row has to pin down.
    pub fn is_autonomous(&self) -> bool {
        self.field.forcing.is_none() || self.field.epsilon == 0.0
    }

    /// Stack the shooting Jacobian with the transversality row (autonomous case only).
    pub fn augmented_system(&self, x: &ShootingVector, eval: &Evaluation) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let d = self.dim();
        let jac = eval.jacobian.as_ref().expect("jacobian required");
        let extra = usize::from(self.is_autonomous());
        let mut a = DMatrix::zeros(d + extra, d);
        a.view_mut((0, 0), (d, d)).copy_from(jac);
        if extra == 1 {
            let f0 = self.transversality(x)?;
            for k in 0..6 {
                a[(d, k)] = f0[k];
            }
        }
        let mut b = DVector::zeros(d + extra);
        b.rows_mut(0, d).copy_from(&(-&eval.g));
        Ok((a, b))
    }

    /// Least-squares Newton correction `ΔX`.
    pub fn newton_step(&self, x: &ShootingVector) -> Result<DVector<f64>> {
        let eval = self.evaluate(x, true, false)?;
        self.newton_step_from(x, &eval)
    }

    fn newton_step_from(&self, x: &ShootingVector, eval: &Evaluation) -> Result<DVector<f64>> {
        let (a, b) = self.augmented_system(x, eval)?;
        let (dx, rank) = lstsq_min_norm(&a, &b, self.config.rank_tol)?;
        let required = if self.is_autonomous() { self.dim() - 1 } else { self.dim() };
        if rank < required {
            return Err(Error::Singular { rank, required });
        }
        Ok(dx)
    }

    /// Damped Newton iteration from `guess`.
    pub fn solve(&self, guess: &ShootingVector) -> Result<(ShootingVector, NewtonReport)> {
        let mut x = guess.clone();
        let mut report = NewtonReport::default();
        loop {
            let eval = self.evaluate(&x, true, false)?;
            let res = inf_norm(&eval.g);
            report.residuals.push(res);
            if res <= self.config.tol {
                report.converged = true;
                return Ok((x, report));
            }
            if report.iterations >= self.config.max_iters || !res.is_finite() {
                return Err(Error::NonConvergence {
                    iterations: report.iterations,
                    residual: res,
                });
            }
            let dx = self.newton_step_from(&x, &eval)?;
            let gamma = damping(self.config.gamma_min, inf_norm(&dx));
            report.damping.push(gamma);
            let mut v = x.as_dvector();
            v.axpy(gamma, &dx, 1.0);
            x = ShootingVector::from_dvector(&v);
            report.iterations += 1;
        }
    }

    /// States on a uniform grid of `intervals` steps over `[0, T/M]`, each
    /// integrated from the node of its own segment.
    pub fn sample_orbit(&self, x: &ShootingVector, intervals: usize) -> Result<Vec<(f64, [f64; 6])>> {
        self.check_len(x)?;
        let tm = *self.times.last().unwrap();
        let grid = crate::dynamics::uniform_grid(0.0, tm, intervals);
        let n = self.nodes();
        let cfg = self.config.ode;
        let chunks: Vec<Vec<(f64, [f64; 6])>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (a, b) = (self.times[i], self.times[i + 1]);
                let last = i + 1 == n;
                let outs: Vec<f64> = grid
                    .iter()
                    .copied()
                    .filter(|&t| t >= a && (t < b || (last && t <= b)))
                    .collect();
                let (_, samples) = flow_sampled(&self.field, &x.node(i), a, b, &outs, FlowOptions::default(), &cfg)
                    .map_err(|e| Error::Segment {
                        segment: i,
                        source: Box::new(e),
                    })?;
                Ok(samples
                    .into_iter()
                    .map(|(t, r)| (t, [r.x[0], r.x[1], r.x[2], r.x[3], r.x[4], r.x[5]]))
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::symmetry::{build_group, twist_matrix, GroupKind};
    use nalgebra::Vector3;
    use std::f64::consts::PI;
    use std::sync::Arc;

    /// Circular Kepler orbit around the (1,1,1) axis with the threefold twist.
    pub(crate) fn kepler_problem(q: f64, nodes: usize) -> (ShootingProblem, ShootingVector) {
        let g = Arc::new(build_group(GroupKind::Tetrahedral));
        let axis = g
            .axes
            .iter()
            .position(|a| (a - Vector3::new(1.0, 1.0, 1.0).normalize()).amax() < 1e-12)
            .unwrap();
        let r = g.twist_element(axis, 1.0 / 3.0).unwrap();
        let twist = twist_matrix(&r, 3).unwrap();
        let mut params = ProblemParams::new(g, twist, q);
        params.interactions = false;
        let cfg = ShootingConfig {
            nodes,
            ..Default::default()
        };
        let prob = ShootingProblem::new(params, cfg).unwrap();
        let a = Vector3::new(1.0, 1.0, 1.0).normalize();
        let e1 = Vector3::new(1.0, -1.0, 0.0).normalize();
        let e2 = a.cross(&e1);
        let omega = 2.0 * PI;
        let rad = (q / (omega * omega)).powf(1.0 / 3.0);
        let nodes: Vec<[f64; 6]> = prob.times[..prob.nodes()]
            .iter()
            .map(|&t| {
                let (s, c) = (omega * t).sin_cos();
                let u = (e1 * c + e2 * s) * rad;
                let v = (-e1 * s + e2 * c) * rad * omega;
                [u[0], u[1], u[2], v[0], v[1], v[2]]
            })
            .collect();
        (prob, ShootingVector::from_nodes(&nodes))
    }

    #[test]
    fn damping_cases() {
        assert!((damping(0.1, 10.0) - 0.01).abs() < 1e-15);
        assert_eq!(damping(0.1, 0.1), 1.0);
        assert_eq!(damping(0.1, 0.05), 1.0);
    }

    #[test]
    fn exact_solution_has_tiny_residual() {
        let (prob, x) = kepler_problem(24.0, 10);
        let g = prob.residual(&x).unwrap();
        assert!(inf_norm(&g) < 1e-11, "{}", inf_norm(&g));
        let (_, report) = prob.solve(&x).unwrap();
        assert!(report.iterations <= 1);
    }

    #[test]
    fn single_segment_residual() {
        let (mut prob, x) = kepler_problem(24.0, 10);
        prob = ShootingProblem::new(prob.params.clone(), ShootingConfig { nodes: 1, ..prob.config }).unwrap();
        let mut x0 = ShootingVector(x.0[..6].to_vec());
        x0.0[0] += 1e-3;
        let g = prob.residual(&x0).unwrap();
        let end = flow(&prob.field, &x0.0, 0.0, 1.0 / 3.0, FlowOptions::default(), &prob.config.ode).unwrap();
        let sx = prob.params.twist.apply(&x0.node(0));
        for k in 0..6 {
            assert!((g[k] - (end.x[k] - sx[k])).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_band_structure() {
        let (prob, x) = kepler_problem(24.0, 4);
        let j = prob.jacobian(&x).unwrap();
        let s = prob.params.twist.s;
        for bi in 0..4 {
            for bj in 0..4 {
                let blk = j.view((6 * bi, 6 * bj), (6, 6));
                if bi == 3 && bj == 0 {
                    assert_eq!(blk, -s);
                } else if bj == bi + 1 {
                    assert_eq!(blk, -DMatrix::<f64>::identity(6, 6));
                } else if bi != bj {
                    assert!(blk.iter().all(|v| *v == 0.0));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_times() {
        let (prob, _) = kepler_problem(24.0, 4);
        let p = prob.params.clone();
        let tm = p.fundamental_time();
        assert!(ShootingProblem::with_times(p.clone(), vec![0.0, 0.1, 0.1, tm], prob.config).is_err());
        assert!(ShootingProblem::with_times(p, vec![0.0, 0.2], prob.config).is_err());
    }

    #[test]
    fn step_satisfies_transversality() {
        let (prob, mut x) = kepler_problem(24.0, 5);
        x.0[1] += 1e-3;
        x.0[9] -= 2e-3;
        let dx = prob.newton_step(&x).unwrap();
        let f0 = prob.transversality(&x).unwrap();
        let dot: f64 = (0..6).map(|k| f0[k] * dx[k]).sum();
        let nf = f0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nd = dx.rows(0, 6).norm();
        assert!(dot.abs() <= 1e-10 * nf * nd.max(1e-300), "{dot}");
    }

    #[test]
    fn kepler_converges_quickly() {
        let (prob, mut x) = kepler_problem(24.0, 10);
        for (i, v) in x.0.iter_mut().enumerate() {
            *v += 1e-4 * ((i as f64) * 0.7).sin();
        }
        let (_, report) = prob.solve(&x).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 3, "{report:?}");
    }
}
