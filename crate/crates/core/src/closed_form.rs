//! Closed-form oracles for the axisymmetric example tubes, in reduced variables (τ, r, g).

use crate::error::{Error, Result};

/// Reduced parameter g = α|y| of the case-1 tube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case1Params {
    pub g: f64,
}

impl Case1Params {
    pub fn new(alpha: f64, y_norm: f64) -> Self {
        Case1Params { g: alpha * y_norm }
    }

    pub fn radii(&self, tau: f64) -> Vec<f64> {
        case1_radii(tau, self.g)
    }

    pub fn waist(&self) -> Option<(f64, f64)> {
        case1_waist(self.g)
    }
}

/// Discriminant 1 + 12g²τ(τ−1).
pub fn case1_discriminant(tau: f64, g: f64) -> f64 {
    1.0 + 12.0 * g * g * (tau * (tau - 1.0))
}

/// Non-negative radii r(τ) of the case-1 neutral tube, ascending.
pub fn case1_radii(tau: f64, g: f64) -> Vec<f64> {
    let disc = case1_discriminant(tau, g);
    if disc < 0.0 || g <= 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let inner = (disc - 1.0).abs() / (sq + 1.0) / (2.0 * g);
    let outer = (1.0 + sq) / (2.0 * g);
    if (outer - inner).abs() <= 1e-12 * outer {
        vec![outer]
    } else {
        vec![inner, outer]
    }
}

/// Radii of the two concentric spheres at τ = ½; absent for g ≥ 1/√3.
pub fn case1_waist(g: f64) -> Option<(f64, f64)> {
    let disc = 1.0 - 3.0 * g * g;
    if g <= 0.0 || disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    Some((3.0 * g / (2.0 * (sq + 1.0)), (1.0 + sq) / (2.0 * g)))
}

/// lim r/τ of the case-1 tube.
pub fn case1_asymptotic_slope() -> f64 {
    3.0f64.sqrt()
}

/// r∞ = α/(|y|(1+β|y|²)) of the case-2 tube far along y.
pub fn case2_asymptotic_radius(alpha: f64, beta: f64, y_norm: f64) -> Result<f64> {
    if y_norm <= 0.0 {
        return Err(Error::Precondition("|y| must be positive".into()));
    }
    let den = y_norm * (1.0 + beta * y_norm * y_norm);
    if den == 0.0 {
        return Err(Error::Precondition("1 + β|y|² vanishes".into()));
    }
    Ok((alpha / den).abs())
}

fn mdot(u: &[f64], v: &[f64]) -> f64 {
    u[0] * v[0] - u[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum::<f64>()
}

fn lin(b: &[f64], v: &[f64]) -> f64 {
    b.iter().zip(v).map(|(a, c)| a * c).sum()
}

/// Case-1 tube equation through 0 and y in Minkowski coordinates (+−…−).
pub fn case1_closed_residual(x: &[f64], y: &[f64], alpha: f64, b: &[f64]) -> Result<f64> {
    if y.len() != x.len() || b.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: if y.len() != x.len() { y.len() } else { b.len() },
        });
    }
    if x.is_empty() {
        return Err(Error::Precondition("empty coordinates".into()));
    }
    let xy = mdot(x, y);
    let xx = mdot(x, x);
    let yy = mdot(y, y);
    let bx = lin(b, x);
    let by = lin(b, y);
    let br = xy * (-2.0 * by + 2.0 * bx) - bx * yy + by * xx;
    Ok(xy * xy - xx * yy - alpha * alpha * br * br)
}
