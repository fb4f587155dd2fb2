#![allow(dead_code)]

use tgeom::{Point, World, WorldFunction, WorldSpec};

pub const MINK: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

/// Symmetrizes sparse (i,k,l,value) entries into a flattened d×d×d array.
pub fn symmetric_a3(d: usize, entries: &[(usize, usize, usize, f64)]) -> Vec<f64> {
    let mut a3 = vec![0.0; d * d * d];
    for &(i, k, l, v) in entries {
        for p in [[i, k, l], [i, l, k], [k, i, l], [k, l, i], [l, i, k], [l, k, i]] {
            a3[(p[0] * d + p[1]) * d + p[2]] = v;
        }
    }
    a3
}

pub fn cubic(scale: f64) -> WorldFunction {
    let entries: Vec<_> = [(0, 0, 1, 1.0), (1, 2, 3, 0.5), (0, 2, 2, -0.7), (3, 3, 3, 0.4)]
        .iter()
        .map(|&(i, k, l, v)| (i, k, l, scale * v))
        .collect();
    WorldFunction::new(WorldSpec::cubic_a(&MINK, &symmetric_a3(4, &entries))).unwrap()
}

pub fn case1(g: f64) -> WorldFunction {
    WorldFunction::new(WorldSpec::case1(&MINK, &[1.0, 0.0, 0.0, 0.0], g)).unwrap()
}

pub fn case2(alpha: f64, beta: f64) -> WorldFunction {
    WorldFunction::new(WorldSpec::case2(&MINK, &[1.0, 0.0, 0.0, 0.0], alpha, beta)).unwrap()
}

pub fn euclidean(metric: &[f64]) -> WorldFunction {
    WorldFunction::new(WorldSpec::euclidean(metric)).unwrap()
}

pub fn constant_a(a: &[f64]) -> WorldFunction {
    WorldFunction::new(WorldSpec::constant_a(&MINK, a)).unwrap()
}

/// Flat world in curvilinear coordinates: Σ = ½|w(x) − w(x′)|².
pub struct Warped;

impl Warped {
    pub fn map(x: &[f64]) -> [f64; 3] {
        [x[0] + 0.1 * x[1] * x[1], x[1] + 0.1 * x[0] * x[2], x[2] + 0.1 * x[0] * x[0]]
    }
}

impl World for Warped {
    fn dim(&self) -> usize {
        3
    }

    fn sigma_raw(&self, x: &[f64], xp: &[f64]) -> f64 {
        let (a, b) = (Self::map(x), Self::map(xp));
        0.5 * a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()
    }

    fn label(&self) -> String {
        "warped".into()
    }
}

pub fn grid(min: f64, max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| min + (max - min) * k as f64 / n as f64).collect()
}

/// Distance from `p` to the polyline `curve` (Euclidean coordinate norm).
pub fn distance_to_polyline(p: &Point, curve: &[Point]) -> f64 {
    curve
        .windows(2)
        .map(|s| {
            let d = &s[1] - &s[0];
            let dd = d.norm_squared();
            let t = if dd == 0.0 { 0.0 } else { ((p - &s[0]).dot(&d) / dd).clamp(0.0, 1.0) };
            (p - (&s[0] + d * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}
