//! World functions: the `World` trait and the built-in parametric families.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the coordinate chart.
pub type Point = DVector<f64>;

/// Build a point from a coordinate slice.
pub fn point(coords: &[f64]) -> Point {
    DVector::from_column_slice(coords)
}

/// Evaluator of Σ(x,x′) on a chart of dimension `dim`.
///
/// Implementors provide `sigma_raw` and may override `split_raw` when the
/// symmetric/antisymmetric split is known structurally.
pub trait World: Send + Sync {
    fn dim(&self) -> usize;

    /// Short identification used in reports.
    fn label(&self) -> String {
        "custom".into()
    }

    /// Σ(x,x′) without dimension checks.
    fn sigma_raw(&self, x: &[f64], xp: &[f64]) -> f64;

    /// (G, A) without dimension checks.
    fn split_raw(&self, x: &[f64], xp: &[f64]) -> (f64, f64) {
        let s1 = self.sigma_raw(x, xp);
        let s2 = self.sigma_raw(xp, x);
        let a = 0.5 * (s1 - s2);
        (s1 - a, a)
    }

    fn g_raw(&self, x: &[f64], xp: &[f64]) -> f64 {
        self.split_raw(x, xp).0
    }

    fn a_raw(&self, x: &[f64], xp: &[f64]) -> f64 {
        self.split_raw(x, xp).1
    }

    fn sigma(&self, x: &Point, xp: &Point) -> Result<f64> {
        self.check(x)?;
        self.check(xp)?;
        Ok(self.sigma_raw(x.as_slice(), xp.as_slice()))
    }

    fn decompose(&self, x: &Point, xp: &Point) -> Result<(f64, f64)> {
        self.check(x)?;
        self.check(xp)?;
        Ok(self.split_raw(x.as_slice(), xp.as_slice()))
    }

    /// ρ = √(2Σ) as a signed square.
    fn rho(&self, x: &Point, xp: &Point) -> Result<Rho> {
        Ok(Rho::from_squared(2.0 * self.sigma(x, xp)?))
    }

    fn check(&self, p: &Point) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point coordinate".into()));
        }
        Ok(())
    }
}

/// The metric ρ = √(2Σ); imaginary values are kept as their (negative) square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rho {
    Real(f64),
    Imaginary { squared: f64 },
}

impl Rho {
    pub fn from_squared(sq: f64) -> Self {
        if sq >= 0.0 {
            Rho::Real(sq.sqrt())
        } else {
            Rho::Imaginary { squared: sq }
        }
    }

    pub fn squared(&self) -> f64 {
        match *self {
            Rho::Real(r) => r * r,
            Rho::Imaginary { squared } => squared,
        }
    }

    pub fn real(&self) -> Option<f64> {
        match *self {
            Rho::Real(r) => Some(r),
            Rho::Imaginary { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    Euclidean,
    ConstantA,
    Case1,
    Case2,
    CubicA,
}

/// Metric as a signature diagonal or a full symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricSpec {
    Signature(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

/// Serializable description of a built-in world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub kind: WorldKind,
    pub dim: usize,
    pub metric: MetricSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a3: Option<Vec<f64>>,
}

impl WorldSpec {
    pub fn euclidean(metric: &[f64]) -> Self {
        WorldSpec {
            kind: WorldKind::Euclidean,
            dim: metric.len(),
            metric: MetricSpec::Signature(metric.to_vec()),
            b: None,
            alpha: None,
            beta: None,
            a3: None,
        }
    }

    pub fn constant_a(metric: &[f64], a: &[f64]) -> Self {
        WorldSpec {
            kind: WorldKind::ConstantA,
            b: Some(a.to_vec()),
            ..Self::euclidean(metric)
        }
    }

    pub fn case1(metric: &[f64], b: &[f64], alpha: f64) -> Self {
        WorldSpec {
            kind: WorldKind::Case1,
            b: Some(b.to_vec()),
            alpha: Some(alpha),
            ..Self::euclidean(metric)
        }
    }

    pub fn case2(metric: &[f64], b: &[f64], alpha: f64, beta: f64) -> Self {
        WorldSpec {
            kind: WorldKind::Case2,
            b: Some(b.to_vec()),
            alpha: Some(alpha),
            beta: Some(beta),
            ..Self::euclidean(metric)
        }
    }

    /// `a3` is the flattened row-major d×d×d array.
    pub fn cubic_a(metric: &[f64], a3: &[f64]) -> Self {
        WorldSpec {
            kind: WorldKind::CubicA,
            a3: Some(a3.to_vec()),
            ..Self::euclidean(metric)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world spec serializes")
    }

    fn metric_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.dim;
        match &self.metric {
            MetricSpec::Signature(diag) => {
                if diag.len() != d {
                    return Err(Error::InvalidSpec(format!(
                        "signature has length {}, dim is {d}",
                        diag.len()
                    )));
                }
                if diag.iter().any(|&s| s != 1.0 && s != -1.0) {
                    return Err(Error::InvalidSpec("signature entries must be +1 or -1".into()));
                }
                Ok(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
            }
            MetricSpec::Full(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidSpec(format!("metric must be {d}x{d}")));
                }
                let m = DMatrix::from_fn(d, d, |i, k| rows[i][k]);
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("metric has non-finite entries".into()));
                }
                if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                    return Err(Error::InvalidSpec("metric is not symmetric".into()));
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Family {
    Euclidean,
    ConstantA { a: Vec<f64> },
    Case1 { b: Vec<f64>, alpha: f64 },
    Case2 { b: Vec<f64>, alpha: f64, beta: f64 },
    CubicA { a3: Vec<f64> },
}

/// A built-in world constructed from a [`WorldSpec`]. Immutable and thread-safe.
#[derive(Debug, Clone)]
pub struct WorldFunction {
    spec: WorldSpec,
    metric: DMatrix<f64>,
    metric_inv: DMatrix<f64>,
    family: Family,
}

/// Validate a spec and build its evaluator.
pub fn make_world(spec: WorldSpec) -> Result<WorldFunction> {
    WorldFunction::new(spec)
}

impl WorldFunction {
    pub fn new(spec: WorldSpec) -> Result<Self> {
        let d = spec.dim;
        if d == 0 {
            return Err(Error::InvalidSpec("dim must be positive".into()));
        }
        let metric = spec.metric_matrix()?;
        let metric_inv = metric
            .clone()
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::InvalidSpec("metric is singular".into()))?;
        if metric.clone().lu().determinant().abs() < 1e-14 {
            return Err(Error::InvalidSpec("metric is singular".into()));
        }

        let need = |name: &str, present: bool, wanted: bool| -> Result<()> {
            match (present, wanted) {
                (false, true) => Err(Error::InvalidSpec(format!(
                    "kind {:?} requires `{name}`",
                    spec.kind
                ))),
                (true, false) => Err(Error::InvalidSpec(format!(
                    "kind {:?} does not take `{name}`",
                    spec.kind
                ))),
                _ => Ok(()),
            }
        };
        let (wb, wa, wbeta, wa3) = match spec.kind {
            WorldKind::Euclidean => (false, false, false, false),
            WorldKind::ConstantA => (true, false, false, false),
            WorldKind::Case1 => (true, true, false, false),
            WorldKind::Case2 => (true, true, true, false),
            WorldKind::CubicA => (false, false, false, true),
        };
        need("b", spec.b.is_some(), wb)?;
        need("alpha", spec.alpha.is_some(), wa)?;
        need("beta", spec.beta.is_some(), wbeta)?;
        need("a3", spec.a3.is_some(), wa3)?;

        let vector = |v: &Option<Vec<f64>>| -> Result<Vec<f64>> {
            let v = v.clone().unwrap_or_default();
            if v.len() != d {
                return Err(Error::InvalidSpec(format!("`b` must have length {d}")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSpec("`b` has non-finite entries".into()));
            }
            Ok(v)
        };
        let scalar = |name: &str, v: Option<f64>| -> Result<f64> {
            let v = v.unwrap_or(0.0);
            if !v.is_finite() {
                return Err(Error::InvalidSpec(format!("`{name}` is not finite")));
            }
            Ok(v)
        };

        let family = match spec.kind {
            WorldKind::Euclidean => Family::Euclidean,
            WorldKind::ConstantA => Family::ConstantA { a: vector(&spec.b)? },
            WorldKind::Case1 => Family::Case1 {
                b: vector(&spec.b)?,
                alpha: scalar("alpha", spec.alpha)?,
            },
            WorldKind::Case2 => Family::Case2 {
                b: vector(&spec.b)?,
                alpha: scalar("alpha", spec.alpha)?,
                beta: scalar("beta", spec.beta)?,
            },
            WorldKind::CubicA => {
                let a3 = spec.a3.clone().unwrap_or_default();
                if a3.len() != d * d * d {
                    return Err(Error::InvalidSpec(format!("`a3` must have {} entries", d * d * d)));
                }
                if a3.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidSpec("`a3` has non-finite entries".into()));
                }
                let scale = a3.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
                for i in 0..d {
                    for k in 0..d {
                        for l in 0..d {
                            let v = a3[(i * d + k) * d + l];
                            for (p, q, r) in [(i, l, k), (k, i, l), (k, l, i), (l, i, k), (l, k, i)] {
                                if (a3[(p * d + q) * d + r] - v).abs() > 1e-12 * scale {
                                    return Err(Error::InvalidSpec("`a3` is not fully symmetric".into()));
                                }
                            }
                        }
                    }
                }
                Family::CubicA { a3 }
            }
        };
        Ok(WorldFunction {
            spec,
            metric,
            metric_inv,
            family,
        })
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn kind(&self) -> WorldKind {
        self.spec.kind
    }

    /// Constant metric tensor g_ik of the chart.
    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    pub fn metric_inverse(&self) -> &DMatrix<f64> {
        &self.metric_inv
    }

    /// Anisotropy covector b (or the constant a for `constant_a`).
    pub fn b(&self) -> Option<&[f64]> {
        match &self.family {
            Family::ConstantA { a } => Some(a),
            Family::Case1 { b, .. } | Family::Case2 { b, .. } => Some(b),
            _ => None,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.family {
            Family::Case1 { alpha, .. } | Family::Case2 { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self.family {
            Family::Case2 { beta, .. } => Some(beta),
            _ => None,
        }
    }

    pub fn a3(&self) -> Option<&[f64]> {
        match &self.family {
            Family::CubicA { a3 } => Some(a3),
            _ => None,
        }
    }

    /// g(u,v) with the chart metric.
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let d = self.spec.dim;
        let mut s = 0.0;
        for i in 0..d {
            if u[i] == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for k in 0..d {
                row += self.metric[(i, k)] * v[k];
            }
            s += u[i] * row;
        }
        s
    }

    fn split_xi(&self, xi: &[f64]) -> (f64, f64) {
        let q = self.dot(xi, xi);
        let g = 0.5 * q;
        let a = match &self.family {
            Family::Euclidean => 0.0,
            Family::ConstantA { a } => lin(a, xi),
            Family::Case1 { b, alpha } => lin(b, xi) * (1.0 + alpha * q),
            Family::Case2 { b, alpha, beta } => lin(b, xi) * (1.0 + alpha / (1.0 + beta * q)),
            Family::CubicA { a3 } => {
                let d = xi.len();
                let mut s = 0.0;
                for i in 0..d {
                    for k in 0..d {
                        let xik = xi[i] * xi[k];
                        for l in 0..d {
                            s += a3[(i * d + k) * d + l] * xik * xi[l];
                        }
                    }
                }
                s / 6.0
            }
        };
        (g, a)
    }
}

fn lin(b: &[f64], xi: &[f64]) -> f64 {
    b.iter().zip(xi).map(|(p, q)| p * q).sum()
}

impl World for WorldFunction {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn label(&self) -> String {
        self.spec.kind.to_string()
    }

    fn sigma_raw(&self, x: &[f64], xp: &[f64]) -> f64 {
        let (g, a) = self.split_raw(x, xp);
        g + a
    }

    fn split_raw(&self, x: &[f64], xp: &[f64]) -> (f64, f64) {
        let xi: Vec<f64> = x.iter().zip(xp).map(|(p, q)| p - q).collect();
        self.split_xi(&xi)
    }
}

impl<W: World + ?Sized> World for &W {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn sigma_raw(&self, x: &[f64], xp: &[f64]) -> f64 {
        (**self).sigma_raw(x, xp)
    }
    fn split_raw(&self, x: &[f64], xp: &[f64]) -> (f64, f64) {
        (**self).split_raw(x, xp)
    }
}

impl<W: World + ?Sized> World for std::sync::Arc<W> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn sigma_raw(&self, x: &[f64], xp: &[f64]) -> f64 {
        (**self).sigma_raw(x, xp)
    }
    fn split_raw(&self, x: &[f64], xp: &[f64]) -> (f64, f64) {
        (**self).split_raw(x, xp)
    }
}

impl std::fmt::Display for WorldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WorldKind::Euclidean => "euclidean",
            WorldKind::ConstantA => "constant_a",
            WorldKind::Case1 => "case1",
            WorldKind::Case2 => "case2",
            WorldKind::CubicA => "cubic_a",
        })
    }
}

/// Monotone maps f applied to a world function: Σ ↦ f(Σ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum SigmaMap {
    Identity,
    Scale { c: f64 },
    Quadratic { eps: f64 },
}

impl SigmaMap {
    pub fn apply(&self, s: f64) -> f64 {
        match *self {
            SigmaMap::Identity => s,
            SigmaMap::Scale { c } => c * s,
            SigmaMap::Quadratic { eps } => s + eps * s * s,
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match *self {
            SigmaMap::Identity => 1.0,
            SigmaMap::Scale { c } => c,
            SigmaMap::Quadratic { eps } => 1.0 + 2.0 * eps * s,
        }
    }
}

/// The world f∘Σ.
#[derive(Debug, Clone)]
pub struct Reparametrized<W> {
    pub inner: W,
    pub map: SigmaMap,
}

impl<W: World> World for Reparametrized<W> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn label(&self) -> String {
        format!("reparametrized {}", self.inner.label())
    }
    fn sigma_raw(&self, x: &[f64], xp: &[f64]) -> f64 {
        self.map.apply(self.inner.sigma_raw(x, xp))
    }
}
