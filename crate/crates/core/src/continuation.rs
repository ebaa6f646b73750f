//! Displacement-constrained continuation of shooting solutions.
//!
//! Each new point `(X, λ)` solves `G(X, λ) = 0` together with
//! `|(X, λ) − (Xᵢ, λᵢ)|² = δ²` and the transversality row. The predictor is the
//! secant through the last two points, so turning points in `λ` are followed
//! without special treatment.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::ParamKind;
use crate::error::{Error, Result};
use crate::linalg::{inf_norm, lstsq_min_norm};
use crate::shooting::{damping, ShootingProblem, ShootingVector};

/// Accuracy demanded of the displacement equation.
pub const SPHERE_TOL: f64 = 1e-10;

/// A one-parameter family `G(X, λ) = 0`.
pub trait ContinuationSystem: Sync {
    fn dim(&self) -> usize;
    fn residual(&self, x: &DVector<f64>, lambda: f64) -> Result<DVector<f64>>;
    /// `(G, ∂G/∂X, ∂G/∂λ)`.
    fn linearize(&self, x: &DVector<f64>, lambda: f64) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)>;
    /// Optional phase-condition row acting on `ΔX`.
    fn phase_row(&self, x: &DVector<f64>, lambda: f64) -> Result<Option<DVector<f64>>>;
    fn tol(&self) -> f64;
    fn rank_tol(&self) -> f64 {
        1e-12
    }
    fn gamma_min(&self) -> f64 {
        0.1
    }
}

impl ContinuationSystem for ShootingProblem {
    fn dim(&self) -> usize {
        ShootingProblem::dim(self)
    }

    fn residual(&self, x: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
        self.at_lambda(lambda).residual(&ShootingVector::from_dvector(x))
    }

    fn linearize(&self, x: &DVector<f64>, lambda: f64) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
        let e = self
            .at_lambda(lambda)
            .evaluate(&ShootingVector::from_dvector(x), true, true)?;
        Ok((e.g, e.jacobian.unwrap(), e.dlambda.unwrap()))
    }

    fn phase_row(&self, x: &DVector<f64>, lambda: f64) -> Result<Option<DVector<f64>>> {
        let p = self.at_lambda(lambda);
        if !p.is_autonomous() {
            return Ok(None);
        }
        let f0 = p.transversality(&ShootingVector::from_dvector(x))?;
        let mut row = DVector::zeros(ShootingProblem::dim(self));
        row.rows_mut(0, 6).copy_from_slice(&f0);
        Ok(Some(row))
    }

    fn tol(&self) -> f64 {
        self.config.tol
    }

    fn rank_tol(&self) -> f64 {
        self.config.rank_tol
    }

    fn gamma_min(&self) -> f64 {
        self.config.gamma_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub lambda: f64,
    pub x: ShootingVector,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduced_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conjugate_point: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<String>,
    #[serde(default)]
    pub iterations: usize,
}

impl ContinuationRecord {
    pub fn new(lambda: f64, x: ShootingVector, residual: f64) -> Self {
        ContinuationRecord {
            lambda,
            x,
            residual,
            energy: None,
            action: None,
            reduced_radius: None,
            full_radius: None,
            conjugate_point: None,
            classification: None,
            iterations: 0,
        }
    }

    fn joint(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.x.0.len() + 1);
        z.rows_mut(0, self.x.0.len()).copy_from_slice(&self.x.0);
        z[self.x.0.len()] = self.lambda;
        z
    }

    /// Euclidean distance in the joint `(X, λ)` space.
    pub fn distance(&self, other: &ContinuationRecord) -> f64 {
        (self.joint() - other.joint()).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceStatus {
    LambdaBound,
    RecordCap,
    ReturnedPastTurn,
    StepUnderflow,
    Aborted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationCurve {
    pub kind: ParamKind,
    pub records: Vec<ContinuationRecord>,
    pub turning_points: Vec<usize>,
    pub status: TraceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl ContinuationCurve {
    pub fn min_lambda(&self) -> Option<&ContinuationRecord> {
        self.records.iter().min_by(|a, b| a.lambda.total_cmp(&b.lambda))
    }

    pub fn last(&self) -> Option<&ContinuationRecord> {
        self.records.last()
    }
}

/// Indices `k` where `λ_k − λ_{k−1}` and `λ_{k+1} − λ_k` have opposite signs.
pub fn turning_points(records: &[ContinuationRecord]) -> Vec<usize> {
    (1..records.len().saturating_sub(1))
        .filter(|&k| {
            let before = records[k].lambda - records[k - 1].lambda;
            let after = records[k + 1].lambda - records[k].lambda;
            before * after < 0.0
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub delta: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub grow: f64,
    pub shrink: f64,
    /// Corrections converging within this many iterations enlarge `δ`.
    pub fast_iterations: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            delta: 1e-2,
            delta_min: 1e-5,
            delta_max: 0.5,
            grow: 2.0,
            shrink: 0.5,
            fast_iterations: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Converged { iterations: usize },
    Rejected,
}

/// Grow `δ` after fast convergence, shrink it after a rejection.
pub fn adapt_step(control: StepControl, outcome: StepOutcome) -> Result<StepControl> {
    let mut c = control;
    match outcome {
        StepOutcome::Converged { iterations } => {
            if iterations <= c.fast_iterations {
                c.delta = (c.delta * c.grow).min(c.delta_max);
            }
        }
        StepOutcome::Rejected => {
            if c.delta <= c.delta_min {
                return Err(Error::StepControlExhausted {
                    delta_min: c.delta_min,
                });
            }
            c.delta = (c.delta * c.shrink).max(c.delta_min);
        }
    }
    Ok(c)
}

/// Secant predictor `zᵢ + γ (zᵢ − zᵢ₋₁)` with `γ = δ / |zᵢ − zᵢ₋₁|`.
pub fn predict(
    prev: &ContinuationRecord,
    prev2: &ContinuationRecord,
    delta: f64,
) -> Result<(DVector<f64>, f64)> {
    let zi = prev.joint();
    let diff = &zi - prev2.joint();
    let gap = diff.norm();
    if gap == 0.0 {
        return Err(Error::DegenerateTangent);
    }
    let z = zi + diff * (delta / gap);
    let n = z.len() - 1;
    Ok((z.rows(0, n).into_owned(), z[n]))
}

/// Newton correction on the bordered system around `anchor`.
pub fn correct<S: ContinuationSystem + ?Sized>(
    system: &S,
    guess: (&DVector<f64>, f64),
    anchor: &ContinuationRecord,
    delta: f64,
    max_iters: usize,
) -> Result<ContinuationRecord> {
    let d = system.dim();
    let (mut x, mut lambda) = (guess.0.clone(), guess.1);
    let xa = anchor.x.as_dvector();
    let la = anchor.lambda;
    let mut iterations = 0;
    loop {
        let (g, jac, gl) = system.linearize(&x, lambda)?;
        let dx_anchor = &x - &xa;
        let dl_anchor = lambda - la;
        let sphere = dx_anchor.norm_squared() + dl_anchor * dl_anchor - delta * delta;
        let res = inf_norm(&g);
        if res <= system.tol() && sphere.abs() <= SPHERE_TOL {
            let mut rec = ContinuationRecord::new(lambda, ShootingVector::from_dvector(&x), res);
            rec.iterations = iterations;
            return Ok(rec);
        }
        if iterations >= max_iters || !res.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                residual: res,
            });
        }
        let phase = system.phase_row(&x, lambda)?;
        let rows = d + 1 + usize::from(phase.is_some());
        let mut a = DMatrix::zeros(rows, d + 1);
        a.view_mut((0, 0), (d, d)).copy_from(&jac);
        a.view_mut((0, d), (d, 1)).copy_from(&gl);
        for k in 0..d {
            a[(d, k)] = 2.0 * dx_anchor[k];
        }
        a[(d, d)] = 2.0 * dl_anchor;
        let mut b = DVector::zeros(rows);
        b.rows_mut(0, d).copy_from(&(-&g));
        b[d] = -sphere;
        if let Some(p) = &phase {
            for k in 0..d {
                a[(d + 1, k)] = p[k];
            }
        }
        let (step, rank) = lstsq_min_norm(&a, &b, system.rank_tol())?;
        if rank < d {
            return Err(Error::Singular { rank, required: d });
        }
        let gamma = damping(system.gamma_min(), inf_norm(&step));
        x.axpy(gamma, &step.rows(0, d).into_owned(), 1.0);
        lambda += gamma * step[d];
        iterations += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub max_records: usize,
    /// After a turning point, stop once `λ` climbs back past this value.
    pub return_lambda: Option<f64>,
    pub corrector_iters: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            lambda_min: 1.0,
            lambda_max: f64::INFINITY,
            max_records: 2000,
            return_lambda: None,
            corrector_iters: 10,
        }
    }
}

/// Trace a curve from two nearby solutions. `annotate` is called on every
/// accepted record (including the seeds); an error from it aborts the trace.
pub fn trace<S, F>(
    system: &S,
    kind: ParamKind,
    start1: ContinuationRecord,
    start2: ContinuationRecord,
    stop: &StopCriteria,
    control: StepControl,
    mut annotate: F,
) -> ContinuationCurve
where
    S: ContinuationSystem + ?Sized,
    F: FnMut(&mut ContinuationRecord) -> Result<()>,
{
    let mut curve = ContinuationCurve {
        kind,
        records: Vec::new(),
        turning_points: Vec::new(),
        status: TraceStatus::RecordCap,
        message: None,
    };
    for mut r in [start1, start2] {
        if let Err(e) = annotate(&mut r) {
            curve.status = TraceStatus::Aborted;
            curve.message = Some(e.to_string());
            return curve;
        }
        curve.records.push(r);
    }
    let mut control = control;
    loop {
        let n = curve.records.len();
        let last = &curve.records[n - 1];
        if last.lambda < stop.lambda_min || last.lambda > stop.lambda_max {
            curve.status = TraceStatus::LambdaBound;
            break;
        }
        if n >= stop.max_records {
            curve.status = TraceStatus::RecordCap;
            break;
        }
        if let (Some(back), Some(&tp)) = (stop.return_lambda, curve.turning_points.first()) {
            let prev = curve.records[n - 2].lambda;
            if n - 2 >= tp && (prev - back) * (last.lambda - back) <= 0.0 {
                curve.status = TraceStatus::ReturnedPastTurn;
                break;
            }
        }
        let result = predict(last, &curve.records[n - 2], control.delta)
            .and_then(|(xg, lg)| correct(system, (&xg, lg), last, control.delta, stop.corrector_iters));
        match result {
            Ok(mut rec) => {
                if let Err(e) = annotate(&mut rec) {
                    curve.status = TraceStatus::Aborted;
                    curve.message = Some(e.to_string());
                    break;
                }
                let iterations = rec.iterations;
                curve.records.push(rec);
                curve.turning_points = turning_points(&curve.records);
                control = adapt_step(control, StepOutcome::Converged { iterations })
                    .expect("growth never fails");
            }
            Err(err) => match adapt_step(control, StepOutcome::Rejected) {
                Ok(c) => control = c,
                Err(e) => {
                    curve.status = TraceStatus::StepUnderflow;
                    curve.message = Some(format!("{e}; last error: {err}"));
                    break;
                }
            },
        }
    }
    curve
}
