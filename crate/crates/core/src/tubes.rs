//! Tubes as residual-defined point sets: nth-order tubes, first-order factorization,
//! segments, sections, the sphere, the axisymmetric sampler and broken tubes.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{self, Multivector, Sense};
use crate::error::{Error, Result};
use crate::fd;
use crate::kind::{Kind, TubeKind};
use crate::linalg;
use crate::world::{Point, World, WorldFunction};

/// Skeleton 𝒫ⁿ plus the first-order kind.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeSpec {
    pub skeleton: Multivector,
    pub kind: TubeKind,
}

impl TubeSpec {
    pub fn new<W: World + ?Sized>(w: &W, skeleton: Multivector, kind: TubeKind) -> Result<Self> {
        if skeleton.dim() != w.dim() {
            return Err(Error::DimensionMismatch {
                expected: w.dim(),
                found: skeleton.dim(),
            });
        }
        let f = algebra::gram_fn(w, &skeleton)?;
        if f == 0.0 || !f.is_finite() {
            return Err(Error::DegenerateSkeleton);
        }
        Ok(TubeSpec { skeleton, kind })
    }

    pub fn order(&self) -> usize {
        self.skeleton.order()
    }
}

/// 1e-9·scale^{2(n+1)}, scale = max pairwise √|2G| over the given points.
pub fn membership_tolerance<W: World + ?Sized>(w: &W, points: &[&Point], order: usize) -> f64 {
    let mut scale: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            scale = scale.max((2.0 * w.g_raw(p.as_slice(), q.as_slice())).abs().sqrt());
        }
    }
    1e-9 * scale.powi(2 * (order as i32 + 1))
}

/// Direct first-order residual F_(q)(P₀,P₁,P₂).
pub fn first_order_residual<W: World + ?Sized>(w: &W, kind: Kind, p0: &Point, p1: &Point, p2: &Point) -> Result<f64> {
    for p in [p0, p1, p2] {
        w.check(p)?;
    }
    Ok(first_order_raw(w, kind, p0.as_slice(), p1.as_slice(), p2.as_slice()))
}

fn first_order_raw<W: World + ?Sized>(w: &W, kind: Kind, p0: &[f64], p1: &[f64], p2: &[f64]) -> f64 {
    let l1 = 2.0 * w.g_raw(p0, p1);
    let l2 = 2.0 * w.g_raw(p0, p2);
    let fwd = algebra::vector_product_raw(w, p0, p1, p0, p2);
    let rev = algebra::vector_product_raw(w, p0, p2, p0, p1);
    match kind {
        Kind::Neutral => l1 * l2 - fwd * rev,
        Kind::Future => l1 * l2 - fwd * fwd,
        Kind::Past => l1 * l2 - rev * rev,
    }
}

/// F_{n+1}(𝒫ⁿ ∪ {R}); for n = 1 the kind selects F_(n), F_(f) or F_(p).
pub fn tube_residual<W: World + ?Sized>(w: &W, spec: &TubeSpec, r: &Point) -> Result<f64> {
    w.check(r)?;
    let pts = spec.skeleton.points();
    if spec.order() == 1 {
        return first_order_residual(w, spec.kind, &pts[0], &pts[1], r);
    }
    algebra::gram_fn(w, &spec.skeleton.with_point(r.clone())?)
}

/// The four factors of F_(q) and η_q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factors {
    pub f: [f64; 4],
    pub eta: f64,
}

impl Factors {
    /// −F₀F₁F₂F₃.
    pub fn product(&self) -> f64 {
        -self.f[0] * self.f[1] * self.f[2] * self.f[3]
    }
}

fn checked_sqrt(v: f64, what: &'static str) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::NegativeRadicand { what, value: v });
    }
    Ok(v.sqrt())
}

/// η_f = A₁₀ + A₀₂ + A₂₁.
pub fn eta_f<W: World + ?Sized>(w: &W, p0: &[f64], p1: &[f64], p2: &[f64]) -> f64 {
    w.a_raw(p1, p0) + w.a_raw(p0, p2) + w.a_raw(p2, p1)
}

/// η_q for the given kind.
pub fn eta<W: World + ?Sized>(w: &W, kind: Kind, p0: &Point, p1: &Point, p2: &Point) -> Result<f64> {
    let (p0, p1, p2) = (p0.as_slice(), p1.as_slice(), p2.as_slice());
    let ef = eta_f(w, p0, p1, p2);
    Ok(match kind {
        Kind::Future => ef,
        Kind::Past => -ef,
        Kind::Neutral => {
            let g01 = w.g_raw(p0, p1);
            let g02 = w.g_raw(p0, p2);
            let prod = g01 * g02;
            let root = checked_sqrt(prod, "G01·G02")?;
            let outer = checked_sqrt(4.0 * prod + ef * ef, "4G01G02 + η²")?;
            let den = outer + 2.0 * root;
            if den == 0.0 {
                0.0
            } else {
                ef * ef / den
            }
        }
    })
}

pub fn first_order_factors<W: World + ?Sized>(w: &W, kind: Kind, p0: &Point, p1: &Point, p2: &Point) -> Result<Factors> {
    for p in [p0, p1, p2] {
        w.check(p)?;
    }
    let eta = eta(w, kind, p0, p1, p2)?;
    let (a, b, c) = (p0.as_slice(), p1.as_slice(), p2.as_slice());
    let s02 = checked_sqrt(w.g_raw(a, c), "G02")?;
    let s10 = checked_sqrt(w.g_raw(b, a), "G10")?;
    let g12 = w.g_raw(b, c);
    let u = checked_sqrt(g12 - eta, "G12 − η")?;
    let v = checked_sqrt(g12 - kind.alpha() * eta, "G12 − αη")?;
    Ok(Factors {
        f: [s02 + s10 + u, s02 - s10 + v, s02 + s10 - u, s02 - s10 - v],
        eta,
    })
}

/// √G₀₂ − √G₁₀ + √(G₁₂ − α_qη_q).
pub fn segment_residual<W: World + ?Sized>(w: &W, kind: Kind, p0: &Point, p1: &Point, p2: &Point) -> Result<f64> {
    Ok(first_order_factors(w, kind, p0, p1, p2)?.f[1])
}

/// √(2G(P₀,R)) − √(2G(P₀,P₁)): zero on the sphere about P₀ through P₁.
pub fn sphere_residual<W: World + ?Sized>(w: &W, p0: &Point, p1: &Point, r: &Point) -> Result<f64> {
    for p in [p0, p1, r] {
        w.check(p)?;
    }
    let d0 = checked_sqrt(w.sigma_raw(p0.as_slice(), r.as_slice()) + w.sigma_raw(r.as_slice(), p0.as_slice()), "2G(P0,R)")?;
    let d1 = checked_sqrt(w.sigma_raw(p0.as_slice(), p1.as_slice()) + w.sigma_raw(p1.as_slice(), p0.as_slice()), "2G(P0,P1)")?;
    Ok(d0 - d1)
}

/// Candidates P′ with |Σ(P_l,P′) − Σ(P_l,P)| ≤ tol for every skeleton point.
pub fn section_filter<W: World + ?Sized>(
    w: &W,
    spec: &TubeSpec,
    p: &Point,
    candidates: &[Point],
    tol: f64,
) -> Result<Vec<Point>> {
    let res = tube_residual(w, spec, p)?;
    let mut pts: Vec<&Point> = spec.skeleton.points().iter().collect();
    pts.push(p);
    let mtol = membership_tolerance(w, &pts, spec.order()).max(tol);
    if res.abs() > mtol {
        return Err(Error::Precondition(format!("point is off the tube (residual {res:e})")));
    }
    let skel = spec.skeleton.points();
    let reference: Vec<f64> = skel.iter().map(|q| w.sigma_raw(q.as_slice(), p.as_slice())).collect();
    let mut out = Vec::new();
    for c in candidates {
        w.check(c)?;
        if skel
            .iter()
            .zip(&reference)
            .all(|(q, s)| (w.sigma_raw(q.as_slice(), c.as_slice()) - s).abs() <= tol)
        {
            out.push(c.clone());
        }
    }
    Ok(out)
}

/// Radii of the tube 𝒯₀ᵧ in the plane x = τy + r|y|e⊥.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSample {
    pub tau: f64,
    pub radii: Vec<f64>,
    pub multiplicity: Vec<u8>,
    /// Largest |F|/scale over the accepted roots.
    pub max_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerOptions {
    pub probes: usize,
    /// Overrides 10(1+1/g)·max(1,|τ|).
    pub r_max: Option<f64>,
    pub merge_tol: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            probes: 256,
            r_max: None,
            merge_tol: 1e-8,
        }
    }
}

/// Deterministic unit vector orthogonal to y under the chart metric.
pub fn orthogonal_unit(w: &WorldFunction, y: &[f64]) -> Result<Point> {
    let d = w.dim();
    let yy = w.dot(y, y);
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        let c = w.dot(&e, y) / yy;
        for (ei, yi) in e.iter_mut().zip(y) {
            *ei -= c * yi;
        }
        let n = w.dot(&e, &e);
        if n.abs() > 1e-12 {
            let s = n.abs().sqrt();
            return Ok(Point::from_iterator(d, e.into_iter().map(|v| v / s)));
        }
    }
    Err(Error::Precondition("no direction orthogonal to y".into()))
}

struct Reduced<'a> {
    w: &'a WorldFunction,
    kind: Kind,
    origin: Vec<f64>,
    y: Vec<f64>,
    e: Vec<f64>,
    ynorm: f64,
}

impl Reduced<'_> {
    fn point(&self, tau: f64, r: f64) -> Vec<f64> {
        self.y
            .iter()
            .zip(&self.e)
            .map(|(y, e)| tau * y + r * self.ynorm * e)
            .collect()
    }

    fn h(&self, tau: f64, r: f64) -> f64 {
        first_order_raw(self.w, self.kind, &self.origin, &self.y, &self.point(tau, r))
    }

    /// Magnitude of the terms cancelling inside F.
    fn scale(&self, tau: f64, r: f64) -> f64 {
        let x = self.point(tau, r);
        let (o, y) = (self.origin.as_slice(), self.y.as_slice());
        let l1 = 2.0 * self.w.g_raw(o, y);
        let l2 = 2.0 * self.w.g_raw(o, &x);
        let fwd = algebra::vector_product_raw(self.w, o, y, o, &x);
        let rev = algebra::vector_product_raw(self.w, o, &x, o, y);
        (l1 * l2).abs() + (fwd * rev).abs() + fwd * fwd + rev * rev
    }
}

fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a <= 1e-12 * b.abs().max(1e-300) || m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn polish(f: &dyn Fn(f64) -> f64, r: f64, lo: f64, hi: f64) -> f64 {
    let h = 1e-7 * r.abs().max(1e-12);
    let fr = f(r);
    let df = (f(r + h) - f(r - h)) / (2.0 * h);
    if df == 0.0 || !df.is_finite() {
        return r;
    }
    let cand = r - fr / df;
    if cand > lo && cand < hi && f(cand).abs() < fr.abs() {
        cand
    } else {
        r
    }
}

/// Minimum of s·f on [a,b] by golden-section search.
fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..120 {
        if b - a <= 1e-14 * b.abs() {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn roots_at(red: &Reduced<'_>, tau: f64, r_max: f64, opts: &SamplerOptions) -> TubeSample {
    let f = |r: f64| red.h(tau, r);
    let rel = |r: f64| {
        let s = red.scale(tau, r);
        if s == 0.0 {
            f(r).abs()
        } else {
            f(r).abs() / s
        }
    };
    let n = opts.probes.max(8);
    let lo = r_max * 1e-10;
    let ratio = (r_max / lo).powf(1.0 / (n - 1) as f64);
    let mut rs = vec![0.0];
    rs.extend((0..n).map(|k| lo * ratio.powi(k as i32)));
    let hs: Vec<f64> = rs.iter().map(|&r| f(r)).collect();
    // probes below the rounding floor carry no sign information
    let noise = |k: usize| 1e3 * f64::EPSILON * red.scale(tau, rs[k]);
    let reliable: Vec<usize> = (0..rs.len()).filter(|&k| hs[k].abs() > noise(k)).collect();

    let mut roots: Vec<(f64, u8)> = Vec::new();
    let zero_root = hs[0] == 0.0 || rel(0.0) <= 1e-10;
    if zero_root {
        roots.push((0.0, 1));
    }
    for pair in reliable.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if (hs[a] > 0.0) != (hs[b] > 0.0) {
            if zero_root && a == 0 {
                continue;
            }
            let r = bisect(&f, rs[a], rs[b], hs[a]);
            roots.push((polish(&f, r, rs[a], rs[b]), 1));
        } else if b > a + 1 && !(zero_root && reliable[0] == a && a <= 1) {
            let s = hs[a].signum();
            let (rm, _) = golden_min(&|r: f64| s * f(r), rs[a], rs[b]);
            if rel(rm) <= 1e-10 {
                roots.push((rm, 2));
            }
        }
    }
    for tri in reliable.windows(3) {
        let (a, k, b) = (tri[0], tri[1], tri[2]);
        let s = hs[k].signum();
        let same = hs[a].signum() == s && hs[b].signum() == s;
        if same && s * hs[k] < s * hs[a] && s * hs[k] < s * hs[b] {
            let g = |r: f64| s * f(r);
            let (rm, fm) = golden_min(&g, rs[a], rs[b]);
            if fm < 0.0 {
                let x = bisect(&f, rs[a], rm, hs[a]);
                let y = bisect(&f, rm, rs[b], f(rm));
                roots.push((polish(&f, x, rs[a], rm), 1));
                roots.push((polish(&f, y, rm, rs[b]), 1));
            } else if rel(rm) <= 1e-10 {
                roots.push((rm, 2));
            }
        }
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, u8)> = Vec::new();
    for (r, m) in roots {
        match merged.last_mut() {
            Some((q, mq)) if r - *q < opts.merge_tol * q.max(1.0) => {
                if *q != 0.0 {
                    *q = 0.5 * (*q + r);
                }
                *mq = (*mq + m).min(2);
            }
            _ => merged.push((r, m)),
        }
    }
    let max_residual = merged.iter().map(|&(r, _)| rel(r)).fold(0.0, f64::max);
    TubeSample {
        tau,
        radii: merged.iter().map(|p| p.0).collect(),
        multiplicity: merged.iter().map(|p| p.1).collect(),
        max_residual,
    }
}

/// All radii r ≥ 0 of the first-order tube through the origin and y, per τ.
///
/// Radii are in units of |y|.
pub fn sample_axisymmetric_tube(w: &WorldFunction, y: &Point, kind: TubeKind, tau_grid: &[f64]) -> Result<Vec<TubeSample>> {
    sample_axisymmetric_tube_with(w, y, kind, tau_grid, &SamplerOptions::default())
}

pub fn sample_axisymmetric_tube_with(
    w: &WorldFunction,
    y: &Point,
    kind: TubeKind,
    tau_grid: &[f64],
    opts: &SamplerOptions,
) -> Result<Vec<TubeSample>> {
    w.check(y)?;
    if let Some(t) = tau_grid.iter().find(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("tau {t}")));
    }
    let yv = y.as_slice();
    let yy = w.dot(yv, yv);
    if !(yy > 0.0) {
        return Err(Error::Precondition(format!("y is not timelike (2G(0,y) = {yy:e})")));
    }
    let ynorm = yy.sqrt();
    if let Some(b) = w.b() {
        let gy: Vec<f64> = (0..w.dim()).map(|i| (0..w.dim()).map(|k| w.metric()[(i, k)] * yv[k]).sum()).collect();
        let bb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gg: f64 = gy.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bb > 0.0 {
            let c: f64 = b.iter().zip(&gy).map(|(p, q)| p * q).sum::<f64>() / (bb * gg);
            if (1.0 - c.abs()) > 1e-9 {
                return Err(Error::Precondition("b is not aligned with y".into()));
            }
        }
    }
    let e = orthogonal_unit(w, yv)?;
    let g = w.alpha().map(|a| a.abs() * ynorm).filter(|g| *g > 0.0).unwrap_or(1.0);
    let red = Reduced {
        w,
        kind,
        origin: vec![0.0; w.dim()],
        y: yv.to_vec(),
        e: e.as_slice().to_vec(),
        ynorm,
    };
    Ok(tau_grid
        .par_iter()
        .map(|&tau| {
            let r_max = opts.r_max.unwrap_or(10.0 * (1.0 + 1.0 / g) * tau.abs().max(1.0));
            roots_at(&red, tau, r_max, opts)
        })
        .collect())
}

/// Length condition imposed on each new segment of a broken tube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthConstraint {
    /// √(2G(P_{i+1},P_{i+2})) = μ.
    #[default]
    Symmetric,
    /// 2Σ(P_{i+1},P_{i+2}) = μ² (future), 2Σ(P_{i+2},P_{i+1}) = μ² (past).
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrokenTubeOptions {
    pub constraint: LengthConstraint,
    pub max_iter: usize,
    pub check_multiplicity: bool,
}

impl Default for BrokenTubeOptions {
    fn default() -> Self {
        BrokenTubeOptions {
            constraint: LengthConstraint::Symmetric,
            max_iter: 60,
            check_multiplicity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrokenTube {
    pub vertices: Vec<Point>,
    pub mu: f64,
    pub kind: TubeKind,
    /// Parallelism residual of each adjacent segment pair, NaN where a length is complex.
    pub parallelism: Vec<f64>,
    /// True where perturbed starts converged to a different stationary point.
    pub multiple: Vec<bool>,
}

impl BrokenTube {
    /// max |√(2G(P_i,P_{i+1})) − μ| / μ.
    pub fn length_defect<W: World + ?Sized>(&self, w: &W) -> f64 {
        self.vertices
            .windows(2)
            .map(|p| ((2.0 * w.g_raw(p[0].as_slice(), p[1].as_slice())).abs().sqrt() - self.mu).abs() / self.mu)
            .fold(0.0, f64::max)
    }
}

/// P₁ = P₀ + t·dir with √(2G(P₀,P₁)) = μ, t > 0.
pub fn seed_segment<W: World + ?Sized>(w: &W, p0: &Point, dir: &[f64], mu: f64) -> Result<Point> {
    w.check(p0)?;
    if dir.len() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: dir.len(),
        });
    }
    let at = |t: f64| -> Vec<f64> { p0.iter().zip(dir).map(|(p, d)| p + t * d).collect() };
    let len2 = |t: f64| 2.0 * w.g_raw(p0.as_slice(), &at(t));
    let unit = len2(1.0);
    if !(unit > 0.0) {
        return Err(Error::Precondition("seed direction is not timelike".into()));
    }
    let mut t = mu / unit.sqrt();
    for _ in 0..60 {
        let f = len2(t) - mu * mu;
        let h = 1e-7 * t;
        let df = (len2(t + h) - len2(t - h)) / (2.0 * h);
        if df == 0.0 {
            break;
        }
        let step = f / df;
        t -= step;
        if step.abs() <= 1e-15 * t.abs() {
            break;
        }
    }
    Ok(Point::from_vec(at(t)))
}

struct StepProblem<'a, W: ?Sized> {
    w: &'a W,
    kind: Kind,
    constraint: LengthConstraint,
    pi: Vec<f64>,
    pj: Vec<f64>,
    target: f64,
}

impl<W: World + ?Sized> StepProblem<'_, W> {
    fn objective(&self, x: &[f64]) -> f64 {
        match self.kind {
            Kind::Future => self.w.sigma_raw(&self.pi, x),
            Kind::Past => self.w.sigma_raw(x, &self.pi),
            Kind::Neutral => self.w.g_raw(&self.pi, x),
        }
    }

    fn constraint(&self, x: &[f64]) -> f64 {
        let c = match (self.constraint, self.kind) {
            (LengthConstraint::Symmetric, _) | (_, Kind::Neutral) => self.w.g_raw(&self.pj, x),
            (LengthConstraint::Sigma, Kind::Future) => self.w.sigma_raw(&self.pj, x),
            (LengthConstraint::Sigma, Kind::Past) => self.w.sigma_raw(x, &self.pj),
        };
        c - self.target
    }

    fn gradient(&self, f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| fd::partial(f, x, &[i], h))
    }

    fn hessian(&self, f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> DMatrix<f64> {
        let d = x.len();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for k in i..d {
                let v = fd::partial(f, x, &[i, k], h);
                m[(i, k)] = v;
                m[(k, i)] = v;
            }
        }
        m
    }

    fn system(&self, x: &[f64], lambda: f64) -> (DVector<f64>, DMatrix<f64>) {
        let d = x.len();
        let steps = fd::FdSteps::default_for(x, &self.pj);
        let obj = |z: &[f64]| self.objective(z);
        let con = |z: &[f64]| self.constraint(z);
        let go = self.gradient(&obj, x, steps.h1);
        let gc = self.gradient(&con, x, steps.h1);
        let ho = self.hessian(&obj, x, steps.h2);
        let hc = self.hessian(&con, x, steps.h2);
        let mut r = DVector::zeros(d + 1);
        let mut j = DMatrix::zeros(d + 1, d + 1);
        for i in 0..d {
            r[i] = go[i] - lambda * gc[i];
            for k in 0..d {
                j[(i, k)] = ho[(i, k)] - lambda * hc[(i, k)];
            }
            j[(i, d)] = -gc[i];
            j[(d, i)] = gc[i];
        }
        r[d] = con(x);
        (r, j)
    }

    fn solve(&self, start: &[f64], max_iter: usize, mu: f64) -> Result<Vec<f64>> {
        let d = start.len();
        let mut x = start.to_vec();
        let mut lambda = 2.0;
        let (mut r, mut j) = self.system(&x, lambda);
        let mut converged = false;
        for _ in 0..max_iter {
            let step = linalg::solve(&j, &(-&r), "broken-tube Jacobian")?;
            let mut t = 1.0;
            let norm0 = r.norm();
            let mut accepted = false;
            for _ in 0..30 {
                let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
                let ln = lambda + t * step[d];
                let (rn, jn) = self.system(&xn, ln);
                if rn.norm() < norm0 || rn.norm() <= 1e-13 * mu {
                    x = xn;
                    lambda = ln;
                    r = rn;
                    j = jn;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            let dx = step.rows(0, d).norm() * t;
            if dx <= 1e-10 * mu {
                converged = true;
                break;
            }
            if !accepted {
                converged = dx <= 1e-7 * mu && r.norm() <= 1e-8 * mu;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence(format!("broken-tube step did not converge (residual {:e})", r.norm())));
        }
        // exact constraint by a short projection along its gradient
        let con = |z: &[f64]| self.constraint(z);
        for _ in 0..8 {
            let c = con(&x);
            if c.abs() <= 1e-15 * self.target.abs().max(1e-300) {
                break;
            }
            let g = self.gradient(&con, &x, fd::FdSteps::default_for(&x, &self.pj).h1);
            let gg = g.norm_squared();
            if gg == 0.0 {
                break;
            }
            for (xi, gi) in x.iter_mut().zip(g.iter()) {
                *xi -= c / gg * gi;
            }
        }
        Ok(x)
    }
}

/// Parallelism residual of P_iP_{i+1} and P_{i+1}P_{i+2} for the kind.
pub fn step_parallelism<W: World + ?Sized>(w: &W, kind: Kind, pi: &Point, pj: &Point, pk: &Point) -> Result<f64> {
    let a = Multivector::new(vec![pi.clone(), pj.clone()])?;
    let b = Multivector::new(vec![pj.clone(), pk.clone()])?;
    algebra::parallelism_residual(w, kind, Sense::Parallel, &a, &b)
}

/// Chain of μ-segments from the seed P₀P₁, extended `steps` times.
pub fn build_broken_tube<W: World + ?Sized>(w: &W, kind: TubeKind, p0: &Point, p1: &Point, mu: f64, steps: usize) -> Result<BrokenTube> {
    build_broken_tube_with(w, kind, p0, p1, mu, steps, &BrokenTubeOptions::default())
}

pub fn build_broken_tube_with<W: World + ?Sized>(
    w: &W,
    kind: TubeKind,
    p0: &Point,
    p1: &Point,
    mu: f64,
    steps: usize,
    opts: &BrokenTubeOptions,
) -> Result<BrokenTube> {
    w.check(p0)?;
    w.check(p1)?;
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Precondition("mu must be positive".into()));
    }
    if steps == 0 {
        return Err(Error::Precondition("steps must be at least 1".into()));
    }
    let seed_len = (2.0 * w.g_raw(p0.as_slice(), p1.as_slice())).abs().sqrt();
    if (seed_len - mu).abs() > 1e-8 * mu {
        return Err(Error::Precondition(format!("seed length {seed_len} differs from mu {mu}")));
    }
    let d = w.dim();
    let mut verts = vec![p0.clone(), p1.clone()];
    let mut parallelism = Vec::new();
    let mut multiple = Vec::new();
    let probe: Vec<f64> = (0..d).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } / (d as f64).sqrt()).collect();
    for _ in 0..steps {
        let n = verts.len();
        let (pi, pj) = (&verts[n - 2], &verts[n - 1]);
        let prob = StepProblem {
            w,
            kind,
            constraint: opts.constraint,
            pi: pi.as_slice().to_vec(),
            pj: pj.as_slice().to_vec(),
            target: 0.5 * mu * mu,
        };
        let start: Vec<f64> = pi.iter().zip(pj.iter()).map(|(a, b)| 2.0 * b - a).collect();
        let x = prob.solve(&start, opts.max_iter, mu)?;
        let mut mult = false;
        if opts.check_multiplicity {
            for sgn in [1.0, -1.0] {
                let s: Vec<f64> = start.iter().zip(&probe).map(|(a, p)| a + sgn * 0.1 * mu * p).collect();
                if let Ok(alt) = prob.solve(&s, opts.max_iter, mu) {
                    let diff = alt.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    if diff > 1e-6 * mu {
                        mult = true;
                    }
                }
            }
        }
        let xp = Point::from_vec(x);
        parallelism.push(step_parallelism(w, kind, pi, pj, &xp).unwrap_or(f64::NAN));
        multiple.push(mult);
        verts.push(xp);
    }
    Ok(BrokenTube {
        vertices: verts,
        mu,
        kind,
        parallelism,
        multiple,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form;
    use crate::world::{make_world, point, WorldSpec};

    const MINK: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

    fn case1(alpha: f64) -> WorldFunction {
        make_world(WorldSpec::case1(&MINK, &[1.0, 0.0, 0.0, 0.0], alpha)).unwrap()
    }

    #[test]
    fn line_tube_examples() {
        let w = make_world(WorldSpec::euclidean(&[1.0; 3])).unwrap();
        let skel = Multivector::new(vec![point(&[0.0, 0.0, 0.0]), point(&[1.0, 0.0, 0.0])]).unwrap();
        let spec = TubeSpec::new(&w, skel, Kind::Neutral).unwrap();
        assert_eq!(tube_residual(&w, &spec, &point(&[5.0, 0.0, 0.0])).unwrap(), 0.0);
        assert!((tube_residual(&w, &spec, &point(&[0.0, 1.0, 0.0])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(tube_residual(&w, &spec, &point(&[1.0, 0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_skeleton_rejected() {
        let w = make_world(WorldSpec::euclidean(&[1.0; 2])).unwrap();
        let skel = Multivector::new(vec![point(&[1.0, 1.0]), point(&[1.0, 1.0])]).unwrap();
        assert!(matches!(TubeSpec::new(&w, skel, Kind::Future), Err(Error::DegenerateSkeleton)));
    }

    #[test]
    fn factor_product_matches_direct_residual() {
        let w = case1(0.01);
        let p0 = point(&[0.0, 0.0, 0.0, 0.0]);
        let p1 = point(&[2.0, 0.1, 0.0, 0.0]);
        let p2 = point(&[1.0, 0.3, 0.1, 0.0]);
        for kind in Kind::ALL {
            let f = first_order_factors(&w, kind, &p0, &p1, &p2).unwrap();
            let direct = first_order_residual(&w, kind, &p0, &p1, &p2).unwrap();
            assert!((f.product() - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{kind}");
        }
    }

    #[test]
    fn eta_matches_closed_form() {
        // triple (0, x′, x): η_f = α(−b·x f(x²) + b·x′ f(x′²) + b·ξ f(ξ²)), ξ = x − x′
        let alpha = 0.2;
        let w = case1(alpha);
        let m = |u: &[f64]| u[0] * u[0] - u[1] * u[1] - u[2] * u[2] - u[3] * u[3];
        let o = point(&[0.0; 4]);
        for (x, xp) in [
            ([2.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0]),
            ([0.7, -0.2, 0.4, 0.1], [1.3, 0.5, -0.6, 0.2]),
        ] {
            let xi: Vec<f64> = x.iter().zip(&xp).map(|(a, b)| a - b).collect();
            let expect = alpha * (-x[0] * m(&x) + xp[0] * m(&xp) + xi[0] * m(&xi));
            let got = eta(&w, Kind::Future, &o, &point(&xp), &point(&x)).unwrap();
            assert!((got - expect).abs() < 1e-12 * expect.abs().max(1.0), "{got} vs {expect}");
            assert_eq!(eta(&w, Kind::Past, &o, &point(&xp), &point(&x)).unwrap(), -got);
        }
        let got = eta(&w, Kind::Future, &o, &point(&[1.0, 1.0, 0.0, 0.0]), &point(&[2.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((got + 1.6).abs() < 1e-12);
    }

    #[test]
    fn segment_and_sphere_examples() {
        let w = make_world(WorldSpec::euclidean(&[1.0, 1.0])).unwrap();
        let (p0, p1) = (point(&[0.0, 0.0]), point(&[2.0, 0.0]));
        assert!(segment_residual(&w, Kind::Neutral, &p0, &p1, &point(&[1.0, 0.0])).unwrap().abs() < 1e-15);
        assert!(segment_residual(&w, Kind::Future, &p0, &p1, &point(&[3.0, 0.0])).unwrap() > 0.0);
        let q1 = point(&[1.0, 0.0]);
        assert!(sphere_residual(&w, &p0, &q1, &point(&[0.0, 1.0])).unwrap().abs() < 1e-15);
        assert!((sphere_residual(&w, &p0, &q1, &point(&[2.0, 0.0])).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn minkowski_spacelike_radicand_is_error() {
        let w = make_world(WorldSpec::euclidean(&MINK)).unwrap();
        let r = first_order_factors(&w, Kind::Neutral, &point(&[0.0; 4]), &point(&[0.0, 1.0, 0.0, 0.0]), &point(&[1.0, 0.0, 0.0, 0.0]));
        assert!(matches!(r, Err(Error::NegativeRadicand { .. })));
    }

    #[test]
    fn minimal_section_of_a_line() {
        let w = make_world(WorldSpec::euclidean(&[1.0, 1.0])).unwrap();
        let skel = Multivector::new(vec![point(&[0.0, 0.0]), point(&[1.0, 0.0])]).unwrap();
        let spec = TubeSpec::new(&w, skel, Kind::Neutral).unwrap();
        let p = point(&[0.5, 0.0]);
        let cands = vec![p.clone(), point(&[0.5, 0.1]), point(&[0.6, 0.0])];
        assert_eq!(section_filter(&w, &spec, &p, &cands, 1e-12).unwrap(), vec![p.clone()]);
        assert!(section_filter(&w, &spec, &p, &[], 1e-12).unwrap().is_empty());
        assert!(section_filter(&w, &spec, &point(&[0.5, 1.0]), &cands, 1e-12).is_err());
    }

    #[test]
    fn sampler_reproduces_waist() {
        let w = case1(0.1);
        let s = sample_axisymmetric_tube(&w, &point(&[1.0, 0.0, 0.0, 0.0]), Kind::Neutral, &[0.5]).unwrap();
        let (r1, r2) = closed_form::case1_waist(0.1).unwrap();
        assert_eq!(s[0].radii.len(), 2);
        assert!((s[0].radii[0] - r1).abs() < 1e-9 * r1);
        assert!((s[0].radii[1] - r2).abs() < 1e-9 * r2);
    }

    #[test]
    fn sampler_empty_center_and_line() {
        let w = case1(0.8);
        let s = sample_axisymmetric_tube(&w, &point(&[1.0, 0.0, 0.0, 0.0]), Kind::Neutral, &[0.5]).unwrap();
        assert!(s[0].radii.is_empty());
        let w0 = case1(0.0);
        let s = sample_axisymmetric_tube(&w0, &point(&[1.0, 0.0, 0.0, 0.0]), Kind::Neutral, &[0.2, 0.5, 0.9]).unwrap();
        for t in s {
            assert_eq!(t.radii, vec![0.0]);
        }
    }

    #[test]
    fn sampler_preconditions() {
        let w = case1(0.1);
        assert!(sample_axisymmetric_tube(&w, &point(&[0.0, 1.0, 0.0, 0.0]), Kind::Neutral, &[0.5]).is_err());
        assert!(sample_axisymmetric_tube(&w, &point(&[1.0, 0.5, 0.0, 0.0]), Kind::Neutral, &[0.5]).is_err());
    }

    #[test]
    fn straight_broken_tube_in_minkowski() {
        let w = make_world(WorldSpec::euclidean(&MINK)).unwrap();
        let p0 = point(&[0.0; 4]);
        let p1 = seed_segment(&w, &p0, &[1.0, 0.3, 0.0, 0.0], 0.1).unwrap();
        let bt = build_broken_tube(&w, Kind::Future, &p0, &p1, 0.1, 5).unwrap();
        for k in 2..bt.vertices.len() {
            let expect = 2.0 * &bt.vertices[k - 1] - &bt.vertices[k - 2];
            assert!((&bt.vertices[k] - expect).amax() < 1e-10);
        }
        assert!(bt.length_defect(&w) < 1e-10);
        assert!(bt.parallelism.iter().all(|p| p.abs() < 1e-8 * 0.01));
        assert!(bt.multiple.iter().all(|m| !m));
    }

    #[test]
    fn broken_tube_rejects_bad_seed() {
        let w = make_world(WorldSpec::euclidean(&MINK)).unwrap();
        let p0 = point(&[0.0; 4]);
        let p1 = point(&[0.2, 0.0, 0.0, 0.0]);
        assert!(build_broken_tube(&w, Kind::Future, &p0, &p1, 0.1, 3).is_err());
        assert!(build_broken_tube(&w, Kind::Future, &p0, &p1, 0.2, 0).is_err());
    }

    #[test]
    fn sampler_matches_closed_form_grid() {
        let y = point(&[1.0, 0.0, 0.0, 0.0]);
        let grid: Vec<f64> = (0..41).map(|k| -1.0 + 3.0 * k as f64 / 40.0).collect();
        for g in [0.1, 0.3, 0.5] {
            let w = case1(g);
            let s = sample_axisymmetric_tube(&w, &y, Kind::Neutral, &grid).unwrap();
            for t in &s {
                let want = closed_form::case1_radii(t.tau, g);
                assert_eq!(t.radii.len(), want.len(), "g={g} tau={} got {:?} want {:?}", t.tau, t.radii, want);
                for (a, b) in t.radii.iter().zip(&want) {
                    assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-300), "g={g} tau={} {a} vs {b}", t.tau);
                }
            }
        }
    }

    #[test]
    fn sampler_far_out() {
        let y = point(&[1.0, 0.0, 0.0, 0.0]);
        for g in [0.1, 0.3, 0.5] {
            let s = sample_axisymmetric_tube(&case1(g), &y, Kind::Neutral, &[1000.0, -999.0]).unwrap();
            for t in &s {
                let want = closed_form::case1_radii(t.tau, g);
                assert_eq!(t.radii.len(), 2, "{:?}", t);
                for (a, b) in t.radii.iter().zip(&want) {
                    assert!((a - b).abs() <= 1e-6 * b, "g={g} {a} vs {b}");
                }
            }
        }
        let w = make_world(WorldSpec::case2(&MINK, &[1.0, 0.0, 0.0, 0.0], 0.2, 1.0)).unwrap();
        let s = sample_axisymmetric_tube(&w, &y, Kind::Neutral, &[10.0, 100.0, 1000.0]).unwrap();
        let r = s[2].radii[0];
        assert!((r - 0.1).abs() < 1e-3, "{r}");
    }
}
