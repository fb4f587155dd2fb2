//! Gradient lines from the future, from the past and neutral: implicit
//! Newton solves of the defining equations and RK4 integration of the
//! geodesic equations, plus tools to compare the two.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calculus::{christoffel_jet, coincidence_coefficients, derivative_tensor, Field, JetMode, Side};
use crate::error::{Error, Result};
use crate::fd::FdSteps;
use crate::kind::GradientKind;
use crate::linalg::{amax, solve};
use crate::tensor::Tensor;
use crate::world::{Point, Reparametrized, SigmaMap, World};

/// Below this τ a rough world (a_i ≠ 0) makes the future/past equations unreliable.
pub const ROUGH_TAU: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningCode {
    /// a_i ≠ 0 at the anchor and τ is close to 0.
    RoughAntisymmetry,
    /// Newton failed at this τ; the sample was dropped.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineWarning {
    pub tau: f64,
    pub code: WarningCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: Vec<f64>,
    pub points: Vec<Point>,
    pub kind: GradientKind,
    /// Implicit: relative defect of the defining equation. ODE: change of the
    /// sample under step halving.
    pub residuals: Vec<f64>,
    /// g_ik ẋ^i ẋ^k per sample (ODE only).
    pub energy: Vec<f64>,
    pub warnings: Vec<LineWarning>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_point<W: World + ?Sized>(w: &W, p: &[f64]) -> Result<()> {
    w.check(&DVector::from_column_slice(p))
}

/// The equation F(x) = ∂X(x) − τb for one kind, with the anchor fixed.
struct Implicit<'a, W: World + ?Sized> {
    w: &'a W,
    kind: GradientKind,
    anchor: Vec<f64>,
    b: Vec<f64>,
}

impl<'a, W: World + ?Sized> Implicit<'a, W> {
    fn new(w: &'a W, kind: GradientKind, xa: &[f64], xb: &[f64]) -> Result<Self> {
        let mut s = Implicit {
            w,
            kind,
            anchor: xa.to_vec(),
            b: Vec::new(),
        };
        s.b = s.grad(xb)?;
        if amax(&s.b) == 0.0 {
            return Err(Error::Precondition("gradient at the far endpoint vanishes".into()));
        }
        Ok(s)
    }

    fn field(&self) -> Field {
        match self.kind {
            GradientKind::Neutral => Field::G,
            _ => Field::Sigma,
        }
    }

    fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h = FdSteps::default_for(x, &self.anchor).h1;
        let t = match self.kind {
            GradientKind::Past => derivative_tensor(self.w, Field::Sigma, &self.anchor, x, &[false], h)?,
            _ => derivative_tensor(self.w, self.field(), x, &self.anchor, &[true], h)?,
        };
        Ok(t.data)
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let h = FdSteps::default_for(x, &self.anchor).h2;
        Ok(match self.kind {
            GradientKind::Past => {
                derivative_tensor(self.w, Field::Sigma, &self.anchor, x, &[false, true], h)?.to_matrix()
            }
            _ => derivative_tensor(self.w, self.field(), x, &self.anchor, &[false, true], h)?
                .to_matrix()
                .transpose(),
        })
    }

    fn residual(&self, x: &[f64], tau: f64) -> Result<Vec<f64>> {
        Ok(self.grad(x)?.iter().zip(&self.b).map(|(g, b)| g - tau * b).collect())
    }

    /// Damped Newton; returns the solution and its relative residual.
    fn newton(&self, tau: f64, guess: &[f64]) -> Result<(Vec<f64>, f64)> {
        let bn = amax(&self.b);
        let mut x = guess.to_vec();
        let mut r = self.residual(&x, tau)?;
        let mut rn = amax(&r);
        for _ in 0..80 {
            if rn <= 1e-13 * bn {
                return Ok((x, rn / bn));
            }
            let j = self.jacobian(&x)?;
            let dx = solve(&j, &-DVector::from_column_slice(&r), "gradient-line Jacobian")?;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + lambda * d).collect();
                if let Ok(rt) = self.residual(&trial, tau) {
                    let rtn = amax(&rt);
                    if rtn < rn || rtn <= 1e-13 * bn {
                        let step = lambda * dx.amax();
                        x = trial;
                        r = rt;
                        rn = rtn;
                        accepted = true;
                        if step <= 1e-13 * (1.0 + amax(&x)) {
                            return Ok((x, rn / bn));
                        }
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if rn <= 1e-9 * bn {
            return Ok((x, rn / bn));
        }
        Err(Error::NoConvergence(format!(
            "gradient line at tau = {tau}: relative residual {:.3e}",
            rn / bn
        )))
    }
}

fn check_grid(tau_grid: &[f64]) -> Result<()> {
    if tau_grid.is_empty() {
        return Err(Error::Precondition("empty tau grid".into()));
    }
    if tau_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("tau grid".into()));
    }
    if tau_grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Precondition("tau grid must be strictly increasing".into()));
    }
    Ok(())
}

/// ‖a_i‖ at a point, a_i = [Σ,i].
pub fn rough_norm<W: World + ?Sized>(w: &W, x: &[f64]) -> Result<f64> {
    let h = FdSteps::default_for(x, x).h1;
    Ok(derivative_tensor(w, Field::Sigma, x, x, &[false], h)?.amax())
}

/// Solves the defining equation of the gradient line through xA (τ = 0) and
/// xB (τ = 1) on each τ, warm-starting from the previous samples.
pub fn gradient_line_implicit<W: World + ?Sized>(
    w: &W,
    kind: GradientKind,
    xa: &Point,
    xb: &Point,
    tau_grid: &[f64],
) -> Result<Trajectory> {
    w.check(xa)?;
    w.check(xb)?;
    check_grid(tau_grid)?;
    let (a, b) = (xa.as_slice(), xb.as_slice());
    let sys = Implicit::new(w, kind, a, b)?;
    let rough = kind != GradientKind::Neutral && rough_norm(w, a)? > 1e-10;
    let chord = |t: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect() };

    let mut out = Trajectory {
        params: Vec::new(),
        points: Vec::new(),
        kind,
        residuals: Vec::new(),
        energy: Vec::new(),
        warnings: Vec::new(),
    };
    for &tau in tau_grid {
        let n = out.points.len();
        let guess = match n {
            0 => chord(tau),
            1 => {
                let (t0, p0) = (out.params[0], out.points[0].as_slice());
                p0.iter().zip(&chord(tau)).zip(&chord(t0)).map(|((p, c), c0)| p + c - c0).collect()
            }
            _ => {
                let (t1, t2) = (out.params[n - 2], out.params[n - 1]);
                let (p1, p2) = (&out.points[n - 2], &out.points[n - 1]);
                let s = (tau - t2) / (t2 - t1);
                p2.iter().zip(p1.iter()).map(|(q, p)| q + s * (q - p)).collect()
            }
        };
        let near_zero = rough && tau < ROUGH_TAU;
        let solved = sys.newton(tau, &guess).or_else(|e| if n > 0 { sys.newton(tau, &chord(tau)) } else { Err(e) });
        match solved {
            Ok((x, res)) => {
                if near_zero {
                    out.warnings.push(LineWarning {
                        tau,
                        code: WarningCode::RoughAntisymmetry,
                        message: format!(
                            "a_i != 0 at the anchor: the defining equation is not valid as tau -> 0 (relative residual {res:.3e})"
                        ),
                    });
                }
                out.params.push(tau);
                out.points.push(DVector::from_vec(x));
                out.residuals.push(res);
            }
            Err(e) if near_zero => out.warnings.push(LineWarning {
                tau,
                code: WarningCode::Unresolved,
                message: format!("a_i != 0 at the anchor and the solve failed: {e}"),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// dx/dτ at τ = 0 of the implicit line through xA and xB.
pub fn initial_velocity<W: World + ?Sized>(
    w: &W,
    kind: GradientKind,
    xa: &Point,
    xb: &Point,
) -> Result<Vec<f64>> {
    w.check(xa)?;
    w.check(xb)?;
    let a = xa.as_slice();
    let sys = Implicit::new(w, kind, a, xb.as_slice())?;
    let j = sys.jacobian(a)?;
    Ok(solve(&j, &DVector::from_vec(sys.b.clone()), "gradient-line Jacobian at the anchor")?
        .as_slice()
        .to_vec())
}

/// Which connection drives the ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeForm {
    /// γ̃_f, γ̃_p or γ extracted directly as coincidence limits.
    Tilde,
    /// γ ± β; requires a_i ≡ 0.
    Split,
}

fn connection<W: World + ?Sized>(w: &W, kind: GradientKind, form: OdeForm, x: &[f64]) -> Result<Tensor> {
    match (kind, form) {
        (GradientKind::Neutral, _) => Ok(christoffel_jet(w, Field::G, x, x, Side::X, JetMode::None)?.gamma),
        (GradientKind::Future, OdeForm::Tilde) => {
            Ok(christoffel_jet(w, Field::Sigma, x, x, Side::X, JetMode::None)?.gamma)
        }
        (GradientKind::Past, OdeForm::Tilde) => {
            Ok(christoffel_jet(w, Field::Sigma, x, x, Side::Xp, JetMode::None)?.gamma)
        }
        (_, OdeForm::Split) => {
            let c = coincidence_coefficients(w, x)?;
            let sign = if kind == GradientKind::Future { 1.0 } else { -1.0 };
            let mut g = c.gamma;
            for (v, b) in g.data.iter_mut().zip(&c.beta.data) {
                *v += sign * b;
            }
            Ok(g)
        }
    }
}

fn acceleration<W: World + ?Sized>(
    w: &W,
    kind: GradientKind,
    form: OdeForm,
    x: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    let g = connection(w, kind, form, x)?;
    let d = v.len();
    Ok((0..d)
        .map(|i| {
            let mut s = 0.0;
            for k in 0..d {
                for l in 0..d {
                    s += g.at3(i, k, l) * v[k] * v[l];
                }
            }
            -s
        })
        .collect())
}

fn rk4_run<W: World + ?Sized>(
    w: &W,
    kind: GradientKind,
    form: OdeForm,
    x0: &[f64],
    v0: &[f64],
    span: (f64, f64),
    samples: usize,
    sub: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let d = x0.len();
    let h = (span.1 - span.0) / (samples * sub) as f64;
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut out = vec![(x.clone(), v.clone())];
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    for _ in 0..samples {
        for _ in 0..sub {
            let k1x = v.clone();
            let k1v = acceleration(w, kind, form, &x, &v)?;
            let x2 = axpy(&x, 0.5 * h, &k1x);
            let k2x = axpy(&v, 0.5 * h, &k1v);
            let k2v = acceleration(w, kind, form, &x2, &k2x)?;
            let x3 = axpy(&x, 0.5 * h, &k2x);
            let k3x = axpy(&v, 0.5 * h, &k2v);
            let k3v = acceleration(w, kind, form, &x3, &k3x)?;
            let x4 = axpy(&x, h, &k3x);
            let k4x = axpy(&v, h, &k3v);
            let k4v = acceleration(w, kind, form, &x4, &k4x)?;
            for i in 0..d {
                x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
                v[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
            }
            if x.iter().chain(&v).any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("gradient-line ODE state".into()));
            }
        }
        out.push((x.clone(), v.clone()));
    }
    Ok(out)
}

/// Self-convergence target for the RK4 samples.
pub const ODE_TOL: f64 = 1e-8;
const MAX_SUBSTEPS: usize = 1 << 12;

/// RK4 integration of ẍ^i + γ̃^i_kl ẋ^k ẋ^l = 0 sampled at `steps + 1`
/// equally spaced τ; substeps double until halving changes no sample by
/// more than [`ODE_TOL`].
pub fn gradient_line_ode<W: World + ?Sized>(
    w: &W,
    kind: GradientKind,
    x0: &Point,
    v0: &[f64],
    tau_span: (f64, f64),
    steps: usize,
) -> Result<Trajectory> {
    gradient_line_ode_with(w, kind, OdeForm::Tilde, x0, v0, tau_span, steps)
}

pub fn gradient_line_ode_with<W: World + ?Sized>(
    w: &W,
    kind: GradientKind,
    form: OdeForm,
    x0: &Point,
    v0: &[f64],
    tau_span: (f64, f64),
    steps: usize,
) -> Result<Trajectory> {
    w.check(x0)?;
    check_point(w, v0)?;
    if steps == 0 {
        return Err(Error::Precondition("steps must be positive".into()));
    }
    if !(tau_span.1 > tau_span.0) {
        return Err(Error::Precondition("tau span must be increasing".into()));
    }
    let x = x0.as_slice();
    if form == OdeForm::Split && kind != GradientKind::Neutral {
        let a = rough_norm(w, x)?;
        if a >= 1e-10 {
            return Err(Error::Precondition(format!(
                "the split form needs a_i = 0, found |a| = {a:.3e}"
            )));
        }
    }
    let mut sub = 1;
    let mut coarse = rk4_run(w, kind, form, x, v0, tau_span, steps, sub)?;
    loop {
        if sub >= MAX_SUBSTEPS {
            return Err(Error::NoConvergence(format!(
                "RK4 did not self-converge with {} steps",
                steps * sub
            )));
        }
        sub *= 2;
        let fine = rk4_run(w, kind, form, x, v0, tau_span, steps, sub)?;
        let diffs: Vec<f64> = fine
            .iter()
            .zip(&coarse)
            .map(|((a, _), (b, _))| a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs())))
            .collect();
        if diffs.iter().all(|&e| e < ODE_TOL) {
            let mut energy = Vec::with_capacity(fine.len());
            for (p, v) in &fine {
                let h = FdSteps::default_for(p, p).h2;
                let g = derivative_tensor(w, Field::G, p, p, &[false, false], h)?.to_matrix();
                let vv = DVector::from_column_slice(v);
                energy.push(vv.dot(&(g * &vv)));
            }
            let dt = (tau_span.1 - tau_span.0) / steps as f64;
            return Ok(Trajectory {
                params: (0..=steps).map(|i| tau_span.0 + i as f64 * dt).collect(),
                points: fine.into_iter().map(|(p, _)| DVector::from_vec(p)).collect(),
                kind,
                residuals: diffs,
                energy,
                warnings: Vec::new(),
            });
        }
        coarse = fine;
    }
}

/// Resamples a polyline at `n` points equally spaced in normalized chord length.
pub fn resample_by_chord(points: &[Point], n: usize) -> Vec<Point> {
    assert!(points.len() >= 2 && n >= 2);
    let mut cum = vec![0.0];
    for p in points.windows(2) {
        cum.push(cum.last().unwrap() + (&p[1] - &p[0]).norm());
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let s = total * i as f64 / (n - 1) as f64;
        while j + 2 < cum.len() && cum[j + 1] < s {
            j += 1;
        }
        let seg = cum[j + 1] - cum[j];
        let t = if seg > 0.0 { ((s - cum[j]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        out.push(&points[j] + (&points[j + 1] - &points[j]) * t);
    }
    out
}

/// Max pointwise distance after resampling both curves by chord length.
pub fn chord_aligned_deviation(a: &[Point], b: &[Point], n: usize) -> f64 {
    let (ra, rb) = (resample_by_chord(a, n), resample_by_chord(b, n));
    ra.iter().zip(&rb).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

/// Distance from `target` to the solved line of `sys`, searching τ near the
/// grid sample `j`.
fn distance_to_line<W: World + ?Sized>(sys: &Implicit<'_, W>, line: &Trajectory, j: usize, target: &Point) -> Result<f64> {
    let n = line.len();
    let mut best = (&line.points[j] - target).norm();
    if n < 2 {
        return Ok(best);
    }
    let lo = if j > 0 { j - 1 } else { 0 };
    let hi = (j + 1).min(n - 1);
    let (mut a, mut b) = (line.params[lo], line.params[hi]);
    let mut start = line.points[j].as_slice().to_vec();
    let eval = |t: f64, start: &mut Vec<f64>| -> Result<f64> {
        let (x, _) = sys.newton(t, start)?;
        let d = (DVector::from_column_slice(&x) - target).norm();
        *start = x;
        Ok(d)
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = eval(c, &mut start)?;
    let mut fd = eval(d, &mut start)?;
    while (b - a).abs() > 1e-13 * (1.0 + a.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c, &mut start)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d, &mut start)?;
        }
    }
    best = best.min(fc).min(fd);
    Ok(best)
}

fn one_sided<W: World + ?Sized>(from: &Trajectory, sys: &Implicit<'_, W>, to: &Trajectory) -> Result<f64> {
    let mut worst = 0.0f64;
    for p in &from.points {
        let j = (0..to.len())
            .min_by(|&u, &v| {
                (&to.points[u] - p)
                    .norm()
                    .partial_cmp(&(&to.points[v] - p).norm())
                    .unwrap()
            })
            .unwrap();
        worst = worst.max(distance_to_line(sys, to, j, p)?);
    }
    Ok(worst)
}

/// Max distance between the implicit lines of Σ and f∘Σ (both directions,
/// each point matched to the nearest point of the other continuous line).
pub fn reparam_invariance_check<W: World>(
    w: &W,
    map: SigmaMap,
    kind: GradientKind,
    xa: &Point,
    xb: &Point,
    tau_grid: &[f64],
) -> Result<f64> {
    let base = gradient_line_implicit(w, kind, xa, xb, tau_grid)?;
    let mut values = vec![w.sigma_raw(xa.as_slice(), xb.as_slice()), w.sigma_raw(xb.as_slice(), xa.as_slice())];
    for p in &base.points {
        values.push(w.sigma_raw(p.as_slice(), xa.as_slice()));
        values.push(w.sigma_raw(xa.as_slice(), p.as_slice()));
    }
    let signs: Vec<f64> = values.iter().map(|&s| map.derivative(s)).collect();
    if signs.iter().any(|&v| v == 0.0) || !(signs.iter().all(|&v| v > 0.0) || signs.iter().all(|&v| v < 0.0)) {
        return Err(Error::Precondition("f' changes sign on the encountered range of the world function".into()));
    }
    if map == SigmaMap::Identity {
        return Ok(0.0);
    }
    let rw = Reparametrized { inner: w, map };
    let other = gradient_line_implicit(&rw, kind, xa, xb, tau_grid)?;
    let sys_base = Implicit::new(w, kind, xa.as_slice(), xb.as_slice())?;
    let sys_other = Implicit::new(&rw, kind, xa.as_slice(), xb.as_slice())?;
    Ok(one_sided(&base, &sys_other, &other)?.max(one_sided(&other, &sys_base, &base)?))
}
