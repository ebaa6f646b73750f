//! Second variation of the reduced action on the fundamental interval.
//!
//! The quadratic form is `∫ v·P v + 2 v̇·Q v + v̇·R v̇` with `P = L_uu`,
//! `Q = 0` and `R = I`, so the Jacobi system reads `Ẏ = Z`, `Ż = P Y`. An
//! orbit is a directional local minimizer iff `det Y₀` has no zero on
//! `(a, b]` and the twisted boundary matrix is positive definite.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::ReducedField;
use crate::error::{Error, Result};
use crate::integrator::{Dop853, IntegratorConfig, OdeSystem};
use crate::linalg::condition_number;
use crate::shooting::{ShootingProblem, ShootingVector};

/// Smallest eigenvalue that still counts as positive.
pub const POSITIVE_TOL: f64 = 1e-9;
/// Inverting `Y` at an endpoint is refused beyond this condition number.
pub const MAX_CONDITION: f64 = 1e12;
/// Bisection stops once the bracket is this short.
pub const ROOT_TOL: f64 = 1e-10;
/// Determinant samples per interval.
pub const DEFAULT_SAMPLES: usize = 1000;

/// Coefficients of the Jacobi system along a reference path.
pub trait JacobiCoefficients: Sync {
    /// Motion of the reference path itself.
    fn path_rhs(&self, t: f64, x: &[f64; 6]) -> Result<[f64; 6]>;
    /// `C = P − QᵀR⁻¹Q`, which is just `P` here.
    fn stiffness(&self, t: f64, x: &[f64; 6]) -> Result<Matrix3<f64>>;
}

/// `P = L_uu` along an orbit of the reduced field.
pub struct OrbitCoefficients<'a> {
    pub field: &'a ReducedField,
}

impl JacobiCoefficients for OrbitCoefficients<'_> {
    fn path_rhs(&self, t: f64, x: &[f64; 6]) -> Result<[f64; 6]> {
        self.field.field(t, x)
    }

    fn stiffness(&self, _t: f64, x: &[f64; 6]) -> Result<Matrix3<f64>> {
        self.field.potential_hessian(&Vector3::new(x[0], x[1], x[2]))
    }
}

/// Constant `C`, for analytic checks.
pub struct ConstantCoefficients(pub Matrix3<f64>);

impl JacobiCoefficients for ConstantCoefficients {
    fn path_rhs(&self, _t: f64, _x: &[f64; 6]) -> Result<[f64; 6]> {
        Ok([0.0; 6])
    }

    fn stiffness(&self, _t: f64, _x: &[f64; 6]) -> Result<Matrix3<f64>> {
        Ok(self.0)
    }
}

/// Sampled coefficient matrices of the quadratic form.
#[derive(Debug, Clone)]
pub struct QuadraticData {
    pub interval: (f64, f64),
    pub times: Vec<f64>,
    pub pmat: Vec<Matrix3<f64>>,
    pub qcross: Vec<Matrix3<f64>>,
    pub rkin: Vec<Matrix3<f64>>,
}

/// Evaluate `P`, `Q`, `R` on `samples` intervals of `[0, T/M]`.
pub fn assemble_quadratic(problem: &ShootingProblem, x: &ShootingVector, samples: usize) -> Result<QuadraticData> {
    let orbit = problem.sample_orbit(x, samples)?;
    let mut data = QuadraticData {
        interval: (0.0, problem.params.fundamental_time()),
        times: Vec::with_capacity(orbit.len()),
        pmat: Vec::with_capacity(orbit.len()),
        qcross: Vec::with_capacity(orbit.len()),
        rkin: Vec::with_capacity(orbit.len()),
    };
    for (t, s) in orbit {
        data.times.push(t);
        data.pmat.push(problem.field.potential_hessian(&Vector3::new(s[0], s[1], s[2]))?);
        data.qcross.push(Matrix3::zeros());
        data.rkin.push(Matrix3::identity());
    }
    Ok(data)
}

/// Reference state, `Y` and `Z` (both column-major) in one vector.
struct JacobiSystem<'a, C: JacobiCoefficients + ?Sized> {
    coeffs: &'a C,
}

const JDIM: usize = 24;

fn split(y: &[f64]) -> ([f64; 6], Matrix3<f64>, Matrix3<f64>) {
    (
        [y[0], y[1], y[2], y[3], y[4], y[5]],
        Matrix3::from_column_slice(&y[6..15]),
        Matrix3::from_column_slice(&y[15..24]),
    )
}

fn pack(x: &[f64; 6], y: &Matrix3<f64>, z: &Matrix3<f64>) -> [f64; JDIM] {
    let mut out = [0.0; JDIM];
    out[..6].copy_from_slice(x);
    out[6..15].copy_from_slice(y.as_slice());
    out[15..].copy_from_slice(z.as_slice());
    out
}

impl<C: JacobiCoefficients + ?Sized> OdeSystem for JacobiSystem<'_, C> {
    fn dim(&self) -> usize {
        JDIM
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (x, ym, zm) = split(y);
        let c = self.coeffs.stiffness(t, &x)?;
        dy[..6].copy_from_slice(&self.coeffs.path_rhs(t, &x)?);
        dy[6..15].copy_from_slice(zm.as_slice());
        dy[15..].copy_from_slice((c * ym).as_slice());
        Ok(())
    }
}

/// Matrix solutions of the Jacobi system on `[a, b]`.
#[derive(Debug, Clone)]
pub struct JacobiSolutions {
    pub a: f64,
    pub b: f64,
    /// Forward solution with `Y(a) = 0`, `Z(a) = I`, sampled on a uniform mesh.
    pub times: Vec<f64>,
    pub states: Vec<[f64; JDIM]>,
    pub det_y0: Vec<f64>,
    pub y0_b: Matrix3<f64>,
    pub z0_b: Matrix3<f64>,
    /// Backward solution with `Y(b) = 0`, `Z(b) = −I`, evaluated at `a`.
    pub yb_a: Matrix3<f64>,
    pub zb_a: Matrix3<f64>,
    /// Largest entry of `ZᵀY − YᵀZ` (zero initially) over both solutions,
    /// relative to `max(1, max|Y|·max|Z|)` at the same time.
    pub wronskian_drift: f64,
    pub ode: IntegratorConfig,
}

fn wronskian_defect(y: &Matrix3<f64>, z: &Matrix3<f64>) -> f64 {
    let w = z.transpose() * y - y.transpose() * z;
    w.amax() / (y.amax() * z.amax()).max(1.0)
}

/// Propagate both matrix solutions. `x_a` and `x_b` are the reference
/// states at the two ends.
pub fn integrate_jacobi<C: JacobiCoefficients + ?Sized>(
    coeffs: &C,
    x_a: &[f64; 6],
    x_b: &[f64; 6],
    (a, b): (f64, f64),
    samples: usize,
    ode: &IntegratorConfig,
) -> Result<JacobiSolutions> {
    if !(b > a) {
        return Err(Error::Domain(format!("empty Jacobi interval [{a}, {b}]")));
    }
    let samples = samples.max(1);
    let sys = JacobiSystem { coeffs };
    let times: Vec<f64> = (0..=samples)
        .map(|k| if k == samples { b } else { a + (b - a) * k as f64 / samples as f64 })
        .collect();
    let mut y = pack(x_a, &Matrix3::zeros(), &Matrix3::identity()).to_vec();
    let mut states = Vec::with_capacity(times.len());
    let mut drift: f64 = 0.0;
    Dop853::new(*ode).integrate(&sys, a, b, &mut y, &times, |_, s| {
        let mut st = [0.0; JDIM];
        st.copy_from_slice(s);
        let (_, ym, zm) = split(s);
        drift = drift.max(wronskian_defect(&ym, &zm));
        states.push(st);
    })?;
    let (_, y0_b, z0_b) = split(&y);
    let det_y0 = states.iter().map(|s| split(s).1.determinant()).collect();

    let mut yb = pack(x_b, &Matrix3::zeros(), &(-Matrix3::identity())).to_vec();
    let back: Vec<f64> = times.iter().rev().copied().collect();
    Dop853::new(*ode).integrate(&sys, b, a, &mut yb, &back, |_, s| {
        let (_, ym, zm) = split(s);
        drift = drift.max(wronskian_defect(&ym, &zm));
    })?;
    let (_, yb_a, zb_a) = split(&yb);
    Ok(JacobiSolutions {
        a,
        b,
        times,
        states,
        det_y0,
        y0_b,
        z0_b,
        yb_a,
        zb_a,
        wronskian_drift: drift,
        ode: *ode,
    })
}

/// Jacobi solutions along a converged orbit on `[0, T/M]`.
pub fn orbit_jacobi(problem: &ShootingProblem, x: &ShootingVector, samples: usize) -> Result<JacobiSolutions> {
    let x0 = x.node(0);
    let xb = problem.params.twist.apply(&x0);
    let coeffs = OrbitCoefficients { field: &problem.field };
    integrate_jacobi(
        &coeffs,
        &x0,
        &xb,
        (0.0, problem.params.fundamental_time()),
        samples,
        &problem.config.ode,
    )
}

impl JacobiSolutions {
    /// `det Y₀(t)`, integrated from the nearest mesh point at or before `t`.
    pub fn det_at<C: JacobiCoefficients + ?Sized>(&self, coeffs: &C, t: f64) -> Result<f64> {
        let h = (self.b - self.a) / (self.times.len() - 1) as f64;
        let k = (((t - self.a) / h).floor().max(0.0) as usize).min(self.times.len() - 1);
        let mut y = self.states[k].to_vec();
        if t != self.times[k] {
            Dop853::new(self.ode).integrate(&JacobiSystem { coeffs }, self.times[k], t, &mut y, &[], |_, _| {})?;
        }
        Ok(split(&y).1.determinant())
    }

    pub fn y0_at(&self, k: usize) -> Matrix3<f64> {
        split(&self.states[k]).1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConjugateScan {
    /// Sign changes of `det Y₀`, refined by bisection.
    pub roots: Vec<f64>,
    /// Local minima of `|det Y₀|` that come close to zero without a sign change.
    pub suspects: Vec<f64>,
}

/// Locate the zeros of `det Y₀` on `(a, b]`, skipping `t < a + 10⁻³(b − a)`
/// where `det Y₀ ~ t³` is still tiny.
pub fn conjugate_scan<C: JacobiCoefficients + ?Sized>(sol: &JacobiSolutions, coeffs: &C) -> Result<ConjugateScan> {
    let start = sol.a + 1e-3 * (sol.b - sol.a);
    let scale = sol.det_y0.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let mut scan = ConjugateScan::default();
    let idx: Vec<usize> = (0..sol.times.len()).filter(|&k| sol.times[k] >= start).collect();
    for w in idx.windows(2) {
        let (k0, k1) = (w[0], w[1]);
        let (d0, d1) = (sol.det_y0[k0], sol.det_y0[k1]);
        if d0 == 0.0 {
            scan.roots.push(sol.times[k0]);
            continue;
        }
        if d0 * d1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (sol.times[k0], sol.times[k1], d0);
            while hi - lo > ROOT_TOL {
                let mid = 0.5 * (lo + hi);
                let fm = sol.det_at(coeffs, mid)?;
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            scan.roots.push(0.5 * (lo + hi));
        }
    }
    let last = *sol.det_y0.last().unwrap();
    if last == 0.0 || last.abs() <= 1e-12 * scale {
        if scan.roots.last().is_none_or(|&r| sol.b - r > ROOT_TOL) {
            scan.roots.push(sol.b);
        }
    }
    for w in idx.windows(3) {
        let (dm, d, dp) = (sol.det_y0[w[0]], sol.det_y0[w[1]], sol.det_y0[w[2]]);
        let same_sign = dm * d > 0.0 && d * dp > 0.0;
        if same_sign && d.abs() < dm.abs() && d.abs() < dp.abs() && d.abs() <= 1e-6 * scale {
            scan.suspects.push(sol.times[w[1]]);
        }
    }
    Ok(scan)
}

fn checked_inverse(m: &Matrix3<f64>, what: &str) -> Result<Matrix3<f64>> {
    let condition = condition_number(&DMatrix::from_column_slice(3, 3, m.as_slice()));
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    m.try_inverse()
        .ok_or_else(|| Error::Domain(format!("{what} is singular")))
}

/// The pieces of the `2n × 2n` boundary form.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryBlocks {
    /// `W_b(a) = Z_b(a) Y_b(a)⁻¹`.
    pub wb_a: Matrix3<f64>,
    /// `W_a(b) = Z_a(b) Y_a(b)⁻¹`.
    pub wa_b: Matrix3<f64>,
    /// `Y_a(b)⁻¹`.
    pub ya_b_inv: Matrix3<f64>,
}

pub fn boundary_blocks(sol: &JacobiSolutions) -> Result<BoundaryBlocks> {
    let ya_b_inv = checked_inverse(&sol.y0_b, "Y₀(b)")?;
    let yb_a_inv = checked_inverse(&sol.yb_a, "Y_b(a)")?;
    Ok(BoundaryBlocks {
        wb_a: sol.zb_a * yb_a_inv,
        wa_b: sol.z0_b * ya_b_inv,
        ya_b_inv,
    })
}

/// `[[−W_b(a), −Y_a⁻¹(b)], [−Y_a⁻ᵀ(b), W_a(b)]]`.
pub fn boundary_form(blocks: &BoundaryBlocks) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(6, 6);
    m.view_mut((0, 0), (3, 3)).copy_from(&(-blocks.wb_a));
    m.view_mut((0, 3), (3, 3)).copy_from(&(-blocks.ya_b_inv));
    m.view_mut((3, 0), (3, 3)).copy_from(&(-blocks.ya_b_inv.transpose()));
    m.view_mut((3, 3), (3, 3)).copy_from(&blocks.wa_b);
    m
}

/// Orthonormal basis of `ker D`.
pub fn null_space(d: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = d.ncols();
    let mut padded = DMatrix::zeros(d.nrows().max(n), n);
    padded.view_mut((0, 0), (d.nrows(), n)).copy_from(d);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cols: Vec<_> = (0..n)
        .filter(|&k| svd.singular_values[k] <= tol * smax.max(1.0))
        .map(|k| v_t.row(k).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Eigenvalues (ascending) of the boundary form restricted to `ker D`.
pub fn general_boundary_eigenvalues(blocks: &BoundaryBlocks, d: &DMatrix<f64>) -> Vec<f64> {
    let n = null_space(d, 1e-12);
    if n.ncols() == 0 {
        return Vec::new();
    }
    let m = boundary_form(blocks);
    let restricted = n.transpose() * m * &n;
    let sym = (&restricted + restricted.transpose()) * 0.5;
    let mut e: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMatrix {
    pub matrix: [[f64; 3]; 3],
    /// Ascending.
    pub eigenvalues: [f64; 3],
    pub symmetry_defect: f64,
}

/// `−W_b(a) − Y_a⁻¹(b) R − Rᵀ Y_a⁻ᵀ(b) + Rᵀ W_a(b) R`, the boundary form on `α = (β, Rβ)`.
pub fn twisted_boundary(blocks: &BoundaryBlocks, r: &Matrix3<f64>) -> BoundaryMatrix {
    let m = -blocks.wb_a - blocks.ya_b_inv * r - r.transpose() * blocks.ya_b_inv.transpose()
        + r.transpose() * blocks.wa_b * r;
    let defect = (m - m.transpose()).amax();
    let sym = (m + m.transpose()) * 0.5;
    let mut e: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    BoundaryMatrix {
        matrix: [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ],
        eigenvalues: [e[0], e[1], e[2]],
        symmetry_defect: defect,
    }
}

pub fn boundary_matrix(sol: &JacobiSolutions, r: &Matrix3<f64>) -> Result<BoundaryMatrix> {
    Ok(twisted_boundary(&boundary_blocks(sol)?, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    DlmPositive,
    NotDlmConjugatePoint,
    NotDlmIndefiniteBoundary,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::DlmPositive => "dlm-positive",
            Classification::NotDlmConjugatePoint => "not-dlm-conjugate-point",
            Classification::NotDlmIndefiniteBoundary => "not-dlm-indefinite-boundary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerVerdict {
    pub legendre_ok: bool,
    pub conjugate_points: Vec<f64>,
    pub suspect_zeros: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryMatrix>,
    pub classification: Classification,
    pub wronskian_drift: f64,
}

/// Decide the verdict from the Jacobi data.
pub fn classify_solutions<C: JacobiCoefficients + ?Sized>(
    sol: &JacobiSolutions,
    coeffs: &C,
    r: &Matrix3<f64>,
) -> Result<MinimizerVerdict> {
    let scan = conjugate_scan(sol, coeffs)?;
    let mut verdict = MinimizerVerdict {
        legendre_ok: true,
        conjugate_points: scan.roots,
        suspect_zeros: scan.suspects,
        boundary: None,
        classification: Classification::NotDlmConjugatePoint,
        wronskian_drift: sol.wronskian_drift,
    };
    if !verdict.conjugate_points.is_empty() {
        return Ok(verdict);
    }
    let bm = boundary_matrix(sol, r)?;
    verdict.classification = if bm.eigenvalues[0] > POSITIVE_TOL {
        Classification::DlmPositive
    } else {
        Classification::NotDlmIndefiniteBoundary
    };
    verdict.boundary = Some(bm);
    Ok(verdict)
}

pub fn classify(problem: &ShootingProblem, x: &ShootingVector) -> Result<MinimizerVerdict> {
    if !problem.is_autonomous() {
        return Err(Error::Domain("the second variation needs the unforced field (ε = 0)".into()));
    }
    let sol = orbit_jacobi(problem, x, DEFAULT_SAMPLES)?;
    let coeffs = OrbitCoefficients { field: &problem.field };
    classify_solutions(&sol, &coeffs, problem.params.twist.rotation())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    fn constant(c: Matrix3<f64>, b: f64) -> (ConstantCoefficients, JacobiSolutions) {
        let k = ConstantCoefficients(c);
        let s = integrate_jacobi(&k, &[0.0; 6], &[0.0; 6], (0.0, b), DEFAULT_SAMPLES, &cfg()).unwrap();
        (k, s)
    }

    #[test]
    fn free_particle() {
        let (k, s) = constant(Matrix3::zeros(), 2.0);
        for (i, &t) in s.times.iter().enumerate() {
            assert!((s.y0_at(i) - Matrix3::identity() * t).amax() < 1e-13);
        }
        assert!(conjugate_scan(&s, &k).unwrap().roots.is_empty());
    }

    #[test]
    fn det_normalization_small_time() {
        let (_, s) = constant(-Matrix3::identity() * 9.0, 1.0);
        let t = s.times[1];
        assert!((s.det_y0[1] / t.powi(3) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn harmonic_conjugate_point() {
        let w = 3.0;
        let (k, s) = constant(-Matrix3::identity() * (w * w), 1.5);
        let scan = conjugate_scan(&s, &k).unwrap();
        assert_eq!(scan.roots.len(), 1, "{scan:?}");
        assert!((scan.roots[0] - PI / w).abs() < 1e-8);
        assert!(s.wronskian_drift < 1e-9);
        for (i, &t) in s.times.iter().enumerate().step_by(97) {
            let exact = ((w * t).sin() / w).powi(3);
            assert!((s.det_y0[i] - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn convex_problem_is_positive() {
        let (kk, l) = (2.0, 0.7);
        let (k, s) = constant(Matrix3::identity() * (kk * kk), l);
        let v = classify_solutions(&s, &k, &Matrix3::identity()).unwrap();
        assert_eq!(v.classification, Classification::DlmPositive);
        let expect = 2.0 * kk * ((kk * l).cosh() - 1.0) / (kk * l).sinh();
        for e in v.boundary.unwrap().eigenvalues {
            assert!((e - expect).abs() < 1e-8 * expect, "{e} vs {expect}");
        }
    }

    #[test]
    fn null_space_of_twist_constraint() {
        let r = crate::symmetry::rodrigues(Vector3::new(1.0, 1.0, 1.0), 2.0 * PI / 3.0);
        let mut d = DMatrix::zeros(6, 6);
        d.view_mut((0, 0), (3, 3)).copy_from(&r);
        d.view_mut((0, 3), (3, 3)).copy_from(&(-Matrix3::identity()));
        let n = null_space(&d, 1e-12);
        assert_eq!(n.ncols(), 3);
        assert!((&d * &n).amax() < 1e-14);
    }
}
