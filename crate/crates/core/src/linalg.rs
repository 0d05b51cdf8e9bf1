//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest condition number accepted before a system is declared singular.
pub const MAX_CONDITION: f64 = 1e12;

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

fn check_conditioning(a: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            what,
            condition: f64::INFINITY,
        });
    }
    let condition = condition_number(a);
    if !(condition < MAX_CONDITION) {
        return Err(Error::Singular { what, condition });
    }
    Ok(())
}

/// Solves `a x = b`, refusing matrices with condition number ≥ 1e12.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    check_conditioning(a, what)?;
    a.clone().lu().solve(b).ok_or(Error::Singular {
        what,
        condition: f64::INFINITY,
    })
}

pub fn inverse(a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    check_conditioning(a, what)?;
    a.clone().try_inverse().ok_or(Error::Singular {
        what,
        condition: f64::INFINITY,
    })
}

/// Symmetric square root factor `L` with `L Lᵀ = V`, clipping eigenvalues in
/// `[-1e-8·tr(V), 0)` to zero. More negative eigenvalues are rejected.
pub fn psd_factor(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (v + v.transpose()) * 0.5;
    let trace = sym.trace().abs();
    let tol = 1e-8 * trace;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(Error::InvalidCovariance {
            min_eigenvalue: min,
            tolerance: tol,
        });
    }
    let mut factor = eig.eigenvectors;
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Ok(factor)
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}
