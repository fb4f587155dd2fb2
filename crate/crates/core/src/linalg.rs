//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Determinant: cofactor formulas up to 3×3, LU with partial pivoting beyond.
pub fn det(m: &DMatrix<f64>) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "determinant of a non-square matrix");
    match m.nrows() {
        0 => 1.0,
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => m.clone().lu().determinant(),
    }
}

pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let scale = m.amax();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Singular(what.to_string()));
    }
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    if inv.iter().any(|v| !v.is_finite()) || inv.amax() * scale > 1e14 {
        return Err(Error::Singular(what.to_string()));
    }
    Ok(inv)
}

pub fn solve(m: &DMatrix<f64>, rhs: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let x = m
        .clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what.to_string()));
    }
    Ok(x)
}

/// Max-norm of a slice.
pub fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Signs of the eigenvalues of a symmetric matrix: (positive, negative, zero).
pub fn signature(m: &DMatrix<f64>, tol: f64) -> (usize, usize, usize) {
    let sym = 0.5 * (m + m.transpose());
    let eig = sym.symmetric_eigenvalues();
    let scale = eig.amax().max(f64::MIN_POSITIVE);
    let mut out = (0, 0, 0);
    for e in eig.iter() {
        if e.abs() <= tol * scale {
            out.2 += 1;
        } else if *e > 0.0 {
            out.0 += 1;
        } else {
            out.1 += 1;
        }
    }
    out
}
