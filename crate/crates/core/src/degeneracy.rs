//! Euclideaness conditions and local degeneration of first-order tubes.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{gram_fn, vector_product_raw, Multivector};
use crate::calculus::{derivative_tensor, Field};
use crate::error::{Error, Result};
use crate::fd::FdSteps;
use crate::linalg::{amax, det, inverse, signature, solve};
use crate::world::{Point, World};

/// One named check of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Reported for information only; does not enter any verdict.
    #[serde(default)]
    pub informational: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckResult {
    fn new(name: &str, residual: f64, threshold: f64) -> Self {
        CheckResult {
            name: name.to_string(),
            residual,
            threshold,
            pass: residual <= threshold,
            informational: false,
            note: None,
        }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn informational(mut self) -> Self {
        self.informational = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub subject: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub world: String,
    pub checks: Vec<CheckResult>,
    pub verdicts: Vec<Verdict>,
    /// (positive, negative, zero) eigenvalue counts of the basis metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<String>,
}

impl DegeneracyReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn verdict(&self, subject: &str) -> Option<bool> {
        self.verdicts.iter().find(|v| v.subject == subject).map(|v| v.holds)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Anchor points with their Gram metric and coordinate functionals.
#[derive(Debug, Clone)]
pub struct EuclideanBasis {
    pub points: Vec<Point>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
}

impl EuclideanBasis {
    pub fn new<W: World + ?Sized>(w: &W, points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Precondition("a basis needs at least two points".into()));
        }
        for p in &points {
            w.check(p)?;
        }
        let mv = Multivector::new(points.clone())?;
        let n = points.len() - 1;
        let f = gram_fn(w, &mv)?;
        let p0 = points[0].as_slice();
        let g = DMatrix::from_fn(n, n, |i, k| {
            vector_product_raw(w, p0, points[i + 1].as_slice(), p0, points[k + 1].as_slice())
        });
        let hadamard: f64 = (0..n).map(|i| g[(i, i)].abs()).product();
        if !(f.abs() > 1e-12 * hadamard) {
            return Err(Error::DegenerateSkeleton);
        }
        let g_inv = inverse(&g, "basis metric")?;
        Ok(EuclideanBasis { points, g, g_inv })
    }

    pub fn order(&self) -> usize {
        self.points.len() - 1
    }

    /// x_i(P) = (P₀P_i.P₀P).
    pub fn coords<W: World + ?Sized>(&self, w: &W, p: &[f64]) -> Vec<f64> {
        let p0 = self.points[0].as_slice();
        (1..self.points.len())
            .map(|i| vector_product_raw(w, p0, self.points[i].as_slice(), p0, p))
            .collect()
    }

    /// ½ g^{ik}(x_i(P) − x_i(Q))(x_k(P) − x_k(Q)).
    pub fn reconstruct<W: World + ?Sized>(&self, w: &W, p: &[f64], q: &[f64]) -> f64 {
        let dx = DVector::from_vec(self.coords(w, p)) - DVector::from_vec(self.coords(w, q));
        0.5 * dx.dot(&(&self.g_inv * &dx))
    }
}

/// Targets sampled for condition IV.
pub const CONDITION_IV_TARGETS: usize = 64;
const CONDITION_IV_SEED: u64 = 0x7e0_c0de;
const TOL: f64 = 1e-9;

fn solve_coords<W: World + ?Sized>(w: &W, basis: &EuclideanBasis, target: &[f64], start: &[f64]) -> bool {
    let d = w.dim();
    let n = basis.order();
    if n != d {
        return false;
    }
    let tn = amax(target).max(1.0);
    let resid = |p: &[f64]| -> Vec<f64> {
        basis.coords(w, p).iter().zip(target).map(|(c, t)| c - t).collect()
    };
    let mut p = start.to_vec();
    let mut r = resid(&p);
    for _ in 0..60 {
        let rn = amax(&r);
        if rn <= 1e-10 * tn {
            return true;
        }
        let h = FdSteps::default_for(&p, &p).h1;
        let j = DMatrix::from_fn(n, d, |i, k| {
            let mut a = p.clone();
            let mut b = p.clone();
            a[k] += h;
            b[k] -= h;
            (resid(&a)[i] - resid(&b)[i]) / (2.0 * h)
        });
        let Ok(dp) = solve(&j, &-DVector::from_column_slice(&r), "condition IV Jacobian") else {
            return false;
        };
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = p.iter().zip(dp.iter()).map(|(a, s)| a + lambda * s).collect();
            let rt = resid(&trial);
            if amax(&rt) < rn {
                p = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-10 {
                return false;
            }
        }
    }
    amax(&r) <= 1e-10 * tn
}

/// Conditions I–IV on the chart for a basis 𝒫ⁿ and probe points.
pub fn euclideaness_check<W: World + ?Sized>(w: &W, basis: &[Point], probes: &[Point]) -> Result<DegeneracyReport> {
    if probes.is_empty() {
        return Err(Error::Precondition("no probe points".into()));
    }
    for p in probes {
        w.check(p)?;
    }
    let basis = EuclideanBasis::new(w, basis.to_vec())?;
    let n = basis.order();
    let mut checks = Vec::new();

    let mut sig_scale = 1.0f64;
    let mut asym = 0.0f64;
    for (i, p) in probes.iter().enumerate() {
        for q in &probes[i + 1..] {
            sig_scale = sig_scale.max(w.sigma_raw(p.as_slice(), q.as_slice()).abs());
            asym = asym.max(w.a_raw(p.as_slice(), q.as_slice()).abs());
        }
    }
    checks.push(CheckResult::new("I_symmetry", asym / sig_scale, TOL).note("max |A(P,Q)| over probe pairs, relative"));

    let f_n = det(&basis.g);
    let mut worst = 0.0f64;
    for p in probes {
        let mut pts = basis.points.clone();
        pts.push(p.clone());
        let f = gram_fn(w, &Multivector::new(pts)?)?;
        let own = vector_product_raw(w, basis.points[0].as_slice(), p.as_slice(), basis.points[0].as_slice(), p.as_slice());
        worst = worst.max(f.abs() / (f_n.abs() * own.abs().max(1.0)));
    }
    checks.push(CheckResult::new("II_dimension", worst, TOL).note(format!("F_n = {f_n:.6e}; max |F_(n+1)| / (|F_n| max(1, |P0P.P0P|))")));

    let mut recon = 0.0f64;
    for p in probes {
        for q in probes {
            let s = w.sigma_raw(p.as_slice(), q.as_slice());
            let r = basis.reconstruct(w, p.as_slice(), q.as_slice());
            recon = recon.max((s - r).abs() / s.abs().max(1.0));
        }
    }
    checks.push(CheckResult::new("III_reconstruction", recon, TOL));

    let coords: Vec<Vec<f64>> = probes.iter().map(|p| basis.coords(w, p.as_slice())).collect();
    let span = coords.iter().flatten().fold(1.0f64, |m, c| m.max(c.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(CONDITION_IV_SEED);
    let start = basis.points[0].as_slice();
    let solved = (0..CONDITION_IV_TARGETS)
        .filter(|_| {
            let target: Vec<f64> = (0..n).map(|_| rng.random_range(-span..span)).collect();
            solve_coords(w, &basis, &target, start)
        })
        .count();
    let failure = 1.0 - solved as f64 / CONDITION_IV_TARGETS as f64;
    let mut iv = CheckResult::new("IV_solvability", failure, 0.0)
        .note(format!("{solved}/{CONDITION_IV_TARGETS} sampled coordinate targets solved (sampled proxy)"));
    if n != w.dim() {
        iv = iv.note(format!("basis order {n} differs from chart dimension {}", w.dim()));
    }
    checks.push(iv);

    let (pos, neg, zero) = signature(&basis.g, 1e-12);
    let all = checks.iter().all(|c| c.pass);
    let definite = zero == 0 && (pos == 0 || neg == 0);
    let classification = match (all, definite) {
        (true, true) => "euclidean",
        (true, false) => "pseudo_euclidean",
        _ => "not_euclidean",
    };
    Ok(DegeneracyReport {
        world: w.label(),
        checks,
        verdicts: vec![Verdict {
            subject: "euclidean".into(),
            holds: all && definite,
        }],
        signature: Some([pos, neg, zero]),
        classification: Some(classification.into()),
    })
}

/// Separations for the antisymmetry probes, in units of 1 + ‖x‖∞.
pub const SHORT_SEPARATIONS: [f64; 2] = [1e-2, 1e-1];
/// Separations for the eikonal defect before extrapolation to zero.
pub const EIKONAL_SEPARATIONS: [f64; 2] = [1e-2, 1e-3];
pub const ANTISYM_THRESHOLD: f64 = 1e-8;
pub const EIKONAL_THRESHOLD: f64 = 1e-4;

/// Local degeneration of first-order tubes at x, probed along `probe_dirs`.
pub fn degeneration_check<W: World + ?Sized>(w: &W, x: &Point, probe_dirs: &[Vec<f64>]) -> Result<DegeneracyReport> {
    w.check(x)?;
    if probe_dirs.is_empty() {
        return Err(Error::Precondition("no probe directions".into()));
    }
    let d = w.dim();
    let mut dirs = Vec::with_capacity(probe_dirs.len());
    for u in probe_dirs {
        if u.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: u.len(),
            });
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Precondition("probe directions must be nonzero".into()));
        }
        dirs.push(u.iter().map(|v| v / norm).collect::<Vec<f64>>());
    }
    let xs = x.as_slice();
    let scale = 1.0 + amax(xs);
    let at = |delta: f64, u: &[f64]| -> Vec<f64> { xs.iter().zip(u).map(|(p, q)| p + delta * scale * q).collect() };
    let coincident_a = |p: &[f64]| derivative_tensor(w, Field::Sigma, p, p, &[false], FdSteps::default_for(p, p).h1);
    let coincident_g = |p: &[f64]| -> Result<DMatrix<f64>> {
        let g = derivative_tensor(w, Field::G, p, p, &[false, false], FdSteps::default_for(p, p).h2)?.to_matrix();
        inverse(&g, "coincidence metric g")
    };

    // first-order antisymmetry defect A,k′(x,x′) + a_k(x′)
    let mut antisym = 0.0f64;
    let mut second = 0.0f64;
    for &delta in &SHORT_SEPARATIONS {
        for u in &dirs {
            let xp = at(delta, u);
            let h = FdSteps::default_for(xs, &xp);
            let ap = derivative_tensor(w, Field::A, xs, &xp, &[true], h.h1)?;
            let a0 = coincident_a(&xp)?;
            let v: Vec<f64> = ap.data.iter().zip(&a0.data).map(|(p, q)| p + q).collect();
            for wdir in &dirs {
                antisym = antisym.max(v.iter().zip(wdir).map(|(p, q)| p * q).sum::<f64>().abs());
            }
            // second-order defect contracted with the displacement direction
            let app = derivative_tensor(w, Field::A, xs, &xp, &[true, true], h.h2)?;
            let spp = derivative_tensor(w, Field::Sigma, &xp, &xp, &[true, true], FdSteps::default_for(&xp, &xp).h2)?;
            let gp = derivative_tensor(w, Field::G, xs, &xp, &[true], h.h1)?;
            let g = w.g_raw(xs, &xp);
            let (mut quad, mut norm_a, mut gu) = (0.0, 0.0, 0.0);
            for i in 0..d {
                gu += gp.data[i] * u[i];
                for k in 0..d {
                    let m = app.get(&[i, k]) - spp.get(&[i, k]);
                    quad += m * u[i] * u[k];
                    norm_a += spp.get(&[i, k]) * u[i] * u[k];
                }
            }
            let val = 2.0 * g * quad - gu * gu;
            let denom = (2.0 * g * norm_a).abs() + gu * gu;
            if denom > 0.0 {
                second = second.max(val.abs() / denom);
            }
        }
    }

    // eikonal defect, extrapolated linearly to zero separation
    let mut eikonal = 0.0f64;
    let mut skipped = 0usize;
    for u in &dirs {
        let mut vals = Vec::new();
        for &delta in &EIKONAL_SEPARATIONS {
            let xp = at(delta, u);
            let g2 = 2.0 * w.g_raw(xs, &xp);
            let scale2 = delta * delta * scale * scale;
            if g2.abs() <= 1e-8 * scale2 {
                break;
            }
            let gp = derivative_tensor(w, Field::G, xs, &xp, &[true], FdSteps::default_for(xs, &xp).h1)?;
            let gi = coincident_g(&xp)?;
            let v = DVector::from_vec(gp.data);
            vals.push((v.dot(&(&gi * &v)) - g2) / g2);
        }
        if vals.len() < 2 {
            skipped += 1;
            continue;
        }
        let (d1, d2) = (EIKONAL_SEPARATIONS[0], EIKONAL_SEPARATIONS[1]);
        let e0 = (d1 * vals[1] - d2 * vals[0]) / (d1 - d2);
        eikonal = eikonal.max(e0.abs());
    }
    if skipped == dirs.len() {
        return Err(Error::Precondition("every probe direction is null for G".into()));
    }

    let mut eik = CheckResult::new("eikonal", eikonal, EIKONAL_THRESHOLD)
        .note("relative defect of G,i' g^ik(x') G,k' = 2G, extrapolated to zero separation");
    if skipped > 0 {
        eik = eik.note(format!("{skipped} null probe direction(s) skipped"));
    }
    let checks = vec![
        CheckResult::new("neutral_antisymmetry", antisym, ANTISYM_THRESHOLD)
            .note("max |(A,k' + a_k(x')) w^k| over short separations and probe directions"),
        eik,
        CheckResult::new("future_past_antisymmetry", antisym, ANTISYM_THRESHOLD)
            .note("the nonzero factor 4G divided out; same contraction as neutral_antisymmetry"),
        CheckResult::new("future_past_second_order", second, 1.0)
            .note("relative size of the quadratic form along the displacement")
            .informational(),
    ];
    let neutral = checks[0].pass && checks[1].pass;
    let fp = checks[2].pass && checks[1].pass;
    Ok(DegeneracyReport {
        world: w.label(),
        checks,
        verdicts: vec![
            Verdict {
                subject: "neutral_degenerate".into(),
                holds: neutral,
            },
            Verdict {
                subject: "future_degenerate".into(),
                holds: fp,
            },
            Verdict {
                subject: "past_degenerate".into(),
                holds: fp,
            },
        ],
        signature: None,
        classification: None,
    })
}

/// η_f = A(x,x′) + A(x′,y) + A(y,x).
pub fn eta_triangle<W: World + ?Sized>(w: &W, x: &Point, xp: &Point, y: &Point) -> Result<f64> {
    for p in [x, xp, y] {
        w.check(p)?;
    }
    let (a, b, c) = (x.as_slice(), xp.as_slice(), y.as_slice());
    Ok(w.a_raw(a, b) + w.a_raw(b, c) + w.a_raw(c, a))
}

/// Unit vectors along the axes plus a few fixed oblique directions.
pub fn default_probe_dirs(d: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
        .collect();
    for j in 0..d {
        out.push((0..d).map(|k| if k == j { 2.0 } else { 0.3 + 0.1 * k as f64 }).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{point, WorldSpec};
    use crate::WorldFunction;

    const MINK: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

    fn axes(d: usize) -> Vec<Point> {
        let mut b = vec![point(&vec![0.0; d])];
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            b.push(point(&e));
        }
        b
    }

    fn probes(d: usize, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| point(&(0..d).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn euclidean_passes_everything() {
        for d in 2..=4 {
            let w = WorldFunction::new(WorldSpec::euclidean(&vec![1.0; d])).unwrap();
            let r = euclideaness_check(&w, &axes(d), &probes(d, 50, 1)).unwrap();
            for c in &r.checks {
                assert!(c.pass && c.residual < 1e-8, "{c:?}");
            }
            assert_eq!(r.signature, Some([d, 0, 0]));
            assert_eq!(r.classification.as_deref(), Some("euclidean"));
        }
    }

    #[test]
    fn minkowski_is_pseudo_euclidean() {
        let w = WorldFunction::new(WorldSpec::euclidean(&MINK)).unwrap();
        let r = euclideaness_check(&w, &axes(4), &probes(4, 20, 2)).unwrap();
        assert_eq!(r.classification.as_deref(), Some("pseudo_euclidean"));
        assert_eq!(r.signature, Some([1, 3, 0]));
        assert_eq!(r.verdict("euclidean"), Some(false));
    }

    #[test]
    fn case1_fails_symmetry() {
        let w = WorldFunction::new(WorldSpec::case1(&MINK, &[1.0, 0.0, 0.0, 0.0], 0.2)).unwrap();
        let r = euclideaness_check(&w, &axes(4), &probes(4, 20, 3)).unwrap();
        assert!(!r.check("I_symmetry").unwrap().pass);
        assert_eq!(r.classification.as_deref(), Some("not_euclidean"));
    }

    #[test]
    fn degenerate_basis_rejected() {
        let w = WorldFunction::new(WorldSpec::euclidean(&[1.0, 1.0])).unwrap();
        let b = vec![point(&[0.0, 0.0]), point(&[1.0, 0.0]), point(&[2.0, 0.0])];
        assert_eq!(euclideaness_check(&w, &b, &probes(2, 3, 4)).unwrap_err(), Error::DegenerateSkeleton);
    }

    #[test]
    fn degeneration_taxonomy() {
        let x = point(&[0.2, 0.1, -0.3, 0.05]);
        let dirs = default_probe_dirs(4);
        let mut a3 = vec![0.0; 64];
        for p in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            a3[(p[0] * 4 + p[1]) * 4 + p[2]] = 0.3;
        }
        let cases = [
            (WorldSpec::euclidean(&MINK), true),
            (WorldSpec::constant_a(&MINK, &[0.3, 0.1, 0.0, 0.0]), true),
            (WorldSpec::case1(&MINK, &[1.0, 0.0, 0.0, 0.0], 0.2), false),
            (WorldSpec::case2(&MINK, &[1.0, 0.0, 0.0, 0.0], 0.2, 1.0), false),
            (WorldSpec::cubic_a(&MINK, &a3), false),
        ];
        for (spec, degenerate) in cases {
            let w = WorldFunction::new(spec).unwrap();
            let r = degeneration_check(&w, &x, &dirs).unwrap();
            assert_eq!(r.verdict("neutral_degenerate"), Some(degenerate), "{}", r.to_json());
            assert_eq!(r.verdict("future_degenerate"), Some(degenerate));
            assert!(r.check("eikonal").unwrap().residual < 1e-9, "{}", r.to_json());
        }
    }

    #[test]
    fn eta_triangle_properties() {
        let c = WorldFunction::new(WorldSpec::constant_a(&MINK, &[0.3, 0.1, 0.0, 0.2])).unwrap();
        let w = WorldFunction::new(WorldSpec::case1(&MINK, &[1.0, 0.0, 0.0, 0.0], 0.2)).unwrap();
        let ps = probes(4, 9, 5);
        for t in ps.chunks(3) {
            let (x, xp, y) = (&t[0], &t[1], &t[2]);
            assert!(eta_triangle(&c, x, xp, y).unwrap().abs() < 1e-14);
            let e = eta_triangle(&w, x, xp, y).unwrap();
            assert_eq!(e, eta_triangle(&w, xp, y, x).unwrap());
            assert!((e + eta_triangle(&w, xp, x, y).unwrap()).abs() < 1e-13 * e.abs().max(1.0));
        }
        let m = |u: &[f64]| u[0] * u[0] - u[1] * u[1] - u[2] * u[2] - u[3] * u[3];
        let o = point(&[0.0; 4]);
        for t in ps.chunks(3) {
            let (x, xp) = (t[0].as_slice(), t[1].as_slice());
            let xi: Vec<f64> = x.iter().zip(xp).map(|(a, b)| a - b).collect();
            let expect = 0.2 * (-x[0] * m(x) + xp[0] * m(xp) + xi[0] * m(&xi));
            let got = eta_triangle(&w, &t[0], &t[1], &o).unwrap();
            assert!((got - expect).abs() < 1e-12 * expect.abs().max(1.0));
        }
    }
}
