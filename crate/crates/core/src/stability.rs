//! Floquet multipliers of computed orbits.
//!
//! The reduced monodromy `M₆` only sees perturbations that keep the full
//! symmetry. When all its multipliers sit on the unit circle the full
//! `6N × 6N` matrix is computed as well.

use nalgebra::{DMatrix, Matrix6};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow, FlowOptions, FullField, FullState, ReducedState};
use crate::error::{Error, Result};
use crate::shooting::{ShootingProblem, ShootingVector};

/// Multipliers with modulus above `1 + UNIT_CIRCLE_TOL` count as unstable.
pub const UNIT_CIRCLE_TOL: f64 = 1e-6;

/// Multipliers forced to 1 in the reduced system: time shift and energy.
/// They form a Jordan block, so integration error splits them by roughly the
/// square root of the error and they must not decide stability.
pub const REDUCED_TRIVIAL: usize = 2;

/// In the full system the three angular-momentum components and the
/// rotations they generate add six more.
pub const FULL_TRIVIAL: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonodromyResult {
    pub dimension: usize,
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    /// Real and imaginary parts, sorted by decreasing modulus.
    pub eigenvalues: Vec<(f64, f64)>,
    pub spectral_radius: f64,
    /// `max |MᵀJM − J|` with `J = [[0, I], [−I, 0]]`.
    pub symplectic_defect: f64,
    pub determinant: f64,
    /// Entrywise `|A − B| / (1 + |B|)` between two independent computations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route_discrepancy: Option<f64>,
}

impl MonodromyResult {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let dimension = matrix.nrows();
        let mut eigs = eigenvalues(&matrix)?;
        eigs.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
        let spectral_radius = eigs.first().map_or(0.0, |z| z.norm());
        Ok(MonodromyResult {
            dimension,
            symplectic_defect: symplectic_defect(&matrix),
            determinant: matrix.determinant(),
            eigenvalues: eigs.iter().map(|z| (z.re, z.im)).collect(),
            spectral_radius,
            matrix,
            route_discrepancy: None,
        })
    }

    pub fn multipliers(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|&(re, im)| Complex64::new(re, im)).collect()
    }

    /// Largest modulus once the `trivial` multipliers closest to 1 are set aside.
    pub fn nontrivial_radius(&self, trivial: usize) -> f64 {
        let mut eigs = self.multipliers();
        eigs.sort_by(|a, b| (a - 1.0).norm().total_cmp(&(b - 1.0).norm()));
        eigs.iter().skip(trivial).map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Relative symplectic defect `max |MᵀJM − J| / max(1, max|M|)²`.
    pub fn relative_symplectic_defect(&self) -> f64 {
        self.symplectic_defect / self.matrix.amax().max(1.0).powi(2)
    }
}

/// Eigenvalues of a general real matrix (faer's Hessenberg QR with
/// exceptional shifts, which copes with the clustered unit multipliers).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let eigs = fm
        .eigenvalues()
        .map_err(|e| Error::Domain(format!("eigenvalue computation failed: {e:?}")))?;
    Ok(eigs.iter().map(|z| Complex64::new(z.re, z.im)).collect())
}

/// Standard symplectic form for states laid out as `(positions, velocities)`.
pub fn symplectic_form(dim: usize) -> DMatrix<f64> {
    let h = dim / 2;
    let mut j = DMatrix::zeros(dim, dim);
    for i in 0..h {
        j[(i, h + i)] = 1.0;
        j[(h + i, i)] = -1.0;
    }
    j
}

pub fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let j = symplectic_form(m.nrows());
    (m.transpose() * &j * m - j).amax()
}

pub fn route_discrepancy(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / (1.0 + y.abs()))
        .fold(0.0, f64::max)
}

/// Largest distance from a multiplier to the reciprocal of its best partner,
/// relative to `max(1, |λ|)`.
pub fn reciprocity_error(eigs: &[Complex64]) -> f64 {
    eigs.iter()
        .map(|z| {
            eigs.iter()
                .map(|w| (z - w.inv()).norm() / z.norm().max(1.0))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// `(S⁻¹ A_{T/M})^M`, where `A_{T/M}` is the sensitivity of the fundamental-interval flow.
pub fn reduced_by_composition(problem: &ShootingProblem, x: &ShootingVector) -> Result<DMatrix<f64>> {
    let tm = problem.params.fundamental_time();
    if tm == 0.0 {
        return Ok(DMatrix::identity(6, 6));
    }
    let r = flow(&problem.field, &x.node(0), 0.0, tm, FlowOptions::STATE, &problem.config.ode)?;
    let s: Matrix6<f64> = problem.params.twist.s;
    let s_inv = DMatrix::from_iterator(6, 6, s.transpose().iter().copied());
    let step = s_inv * r.a.unwrap();
    let mut m = DMatrix::identity(6, 6);
    for _ in 0..problem.params.twist.repetitions {
        m = &step * m;
    }
    Ok(m)
}

/// Sensitivity of the reduced flow over the whole period by a single integration.
pub fn reduced_direct(problem: &ShootingProblem, x: &ShootingVector) -> Result<DMatrix<f64>> {
    let period = problem.params.period;
    if period == 0.0 {
        return Ok(DMatrix::identity(6, 6));
    }
    let r = flow(&problem.field, &x.node(0), 0.0, period, FlowOptions::STATE, &problem.config.ode)?;
    Ok(r.a.unwrap())
}

fn require_autonomous(problem: &ShootingProblem) -> Result<()> {
    if !problem.is_autonomous() {
        return Err(Error::Domain("monodromy needs the unforced field (ε = 0)".into()));
    }
    Ok(())
}

/// `M₆` by composition, cross-checked against direct integration over `[0, T]`.
pub fn reduced_monodromy(problem: &ShootingProblem, x: &ShootingVector) -> Result<MonodromyResult> {
    require_autonomous(problem)?;
    let composed = reduced_by_composition(problem, x)?;
    let direct = reduced_direct(problem, x)?;
    let mut out = MonodromyResult::from_matrix(composed)?;
    out.route_discrepancy = Some(route_discrepancy(&out.matrix, &direct));
    Ok(out)
}

/// The unreduced field and symmetric initial state of an orbit.
pub fn full_system(problem: &ShootingProblem, x: &ShootingVector) -> (FullField, Vec<f64>) {
    let mut field = FullField::new(problem.params.n_electrons(), problem.field.q);
    field.interactions = problem.field.interactions;
    let state = FullState::symmetric(&problem.params.group, &ReducedState::from_slice(&x.node(0)));
    (field, state.to_vec())
}

/// `M₆ₙ` from the `6N`-dimensional variational system over `[0, T]`.
pub fn full_monodromy(problem: &ShootingProblem, x: &ShootingVector) -> Result<MonodromyResult> {
    require_autonomous(problem)?;
    let (field, x0) = full_system(problem, x);
    let period = problem.params.period;
    let r = flow(&field, &x0, 0.0, period, FlowOptions::STATE, &problem.config.ode)?;
    MonodromyResult::from_matrix(r.a.unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityVerdict {
    /// `M₆` has a multiplier off the unit circle.
    UnstableReduced,
    /// `M₆` is neutral but `M₆ₙ` is not.
    UnstableFull,
    /// Both spectra on the unit circle.
    Neutral,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityAssessment {
    pub verdict: StabilityVerdict,
    pub reduced: MonodromyResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full: Option<MonodromyResult>,
}

/// The two-step rule with the monodromy computations supplied by the caller.
pub fn assess_with<F>(reduced: MonodromyResult, full: F, tol: f64) -> Result<StabilityAssessment>
where
    F: FnOnce() -> Result<MonodromyResult>,
{
    if reduced.nontrivial_radius(REDUCED_TRIVIAL) > 1.0 + tol {
        return Ok(StabilityAssessment {
            verdict: StabilityVerdict::UnstableReduced,
            reduced,
            full: None,
        });
    }
    let full = full()?;
    let verdict = if full.nontrivial_radius(FULL_TRIVIAL) <= 1.0 + tol {
        StabilityVerdict::Neutral
    } else {
        StabilityVerdict::UnstableFull
    };
    Ok(StabilityAssessment {
        verdict,
        reduced,
        full: Some(full),
    })
}

pub fn assess_stability(problem: &ShootingProblem, x: &ShootingVector) -> Result<StabilityAssessment> {
    let reduced = reduced_monodromy(problem, x)?;
    assess_with(reduced, || full_monodromy(problem, x), UNIT_CIRCLE_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shooting::tests::kepler_problem;

    #[test]
    fn identity_is_neutral_and_escalates() {
        let id = MonodromyResult::from_matrix(DMatrix::identity(6, 6)).unwrap();
        assert_eq!(id.spectral_radius, 1.0);
        assert_eq!(id.symplectic_defect, 0.0);
        let mut escalated = false;
        let a = assess_with(
            id,
            || {
                escalated = true;
                MonodromyResult::from_matrix(DMatrix::identity(12, 12))
            },
            UNIT_CIRCLE_TOL,
        )
        .unwrap();
        assert!(escalated);
        assert_eq!(a.verdict, StabilityVerdict::Neutral);
    }

    #[test]
    fn hyperbolic_stops_at_reduced() {
        let mut m = DMatrix::identity(6, 6);
        m[(0, 0)] = 4.0;
        m[(3, 3)] = 0.25;
        let r = MonodromyResult::from_matrix(m).unwrap();
        assert!(r.symplectic_defect < 1e-15);
        assert!(reciprocity_error(&r.multipliers()) < 1e-15);
        let a = assess_with(r, || panic!("no escalation"), UNIT_CIRCLE_TOL).unwrap();
        assert_eq!(a.verdict, StabilityVerdict::UnstableReduced);
    }

    #[test]
    fn zero_period_gives_identity() {
        let (mut p, x) = kepler_problem(8.0, 4);
        p.params.period = 0.0;
        assert_eq!(reduced_direct(&p, &x).unwrap(), DMatrix::identity(6, 6));
    }

    #[test]
    fn kepler_monodromy() {
        let (p, x) = kepler_problem(8.0, 6);
        let (x, _) = p.solve(&x).unwrap();
        let m = reduced_monodromy(&p, &x).unwrap();
        assert!(m.route_discrepancy.unwrap() < 1e-7, "{:?}", m.route_discrepancy);
        assert!(m.symplectic_defect < 1e-7);
        assert!((m.determinant - 1.0).abs() < 1e-6);
        // Kepler orbits are degenerate: every multiplier is 1.
        for z in m.multipliers() {
            assert!((z - 1.0).norm() < 1e-4, "{z}");
        }
    }
}
