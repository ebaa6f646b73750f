//! Dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimum-norm least-squares solution of `a x ≈ b` by SVD.
///
/// Singular values below `rank_tol · σ_max` are discarded. Returns the
/// solution and the numerical rank.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> Result<(DVector<f64>, usize)> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("Vᵀ requested");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rank_tol * sigma_max;
    let mut x = DVector::zeros(a.ncols());
    let mut rank = 0;
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > cutoff && *s > 0.0 {
            rank += 1;
            let coef = u.column(k).dot(b) / s;
            x += v_t.row(k).transpose() * coef;
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular {
            rank: 0,
            required: a.ncols(),
        });
    }
    Ok((x, rank))
}

/// 2-norm condition number.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = a.singular_values();
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overdetermined_consistent_system() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (x, rank) = lstsq_min_norm(&a, &b, 1e-12).unwrap();
        assert_eq!(rank, 2);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_gives_min_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let (x, rank) = lstsq_min_norm(&a, &b, 1e-12).unwrap();
        assert_eq!(rank, 1);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }
}
