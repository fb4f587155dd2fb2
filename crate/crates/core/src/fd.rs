//! Central finite-difference stencils for mixed partials of a scalar field.

/// Step sizes per derivative order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub h4: f64,
}

impl FdSteps {
    /// h₁ = ε^{1/3}s, h₂ = ε^{1/4}s, h₃ = ε^{1/5}s, h₄ = ε^{1/6}s with s = 1 + ‖z‖∞.
    pub fn default_for(x: &[f64], xp: &[f64]) -> Self {
        let s = 1.0 + crate::linalg::amax(x).max(crate::linalg::amax(xp));
        let eps = f64::EPSILON;
        FdSteps {
            h1: eps.powf(1.0 / 3.0) * s,
            h2: eps.powf(1.0 / 4.0) * s,
            h3: eps.powf(1.0 / 5.0) * s,
            h4: eps.powf(1.0 / 6.0) * s,
        }
    }

    pub fn uniform(h: f64) -> Self {
        FdSteps {
            h1: h,
            h2: h,
            h3: h,
            h4: h,
        }
    }

    pub fn for_order(&self, n: usize) -> f64 {
        match n {
            0 | 1 => self.h1,
            2 => self.h2,
            3 => self.h3,
            _ => self.h4,
        }
    }
}

fn stencil(m: usize) -> (&'static [i32], &'static [f64]) {
    match m {
        1 => (&[-1, 1], &[-0.5, 0.5]),
        2 => (&[-1, 0, 1], &[1.0, -2.0, 1.0]),
        3 => (&[-2, -1, 1, 2], &[-0.5, 1.0, -1.0, 0.5]),
        4 => (&[-2, -1, 0, 1, 2], &[1.0, -4.0, 6.0, -4.0, 1.0]),
        _ => panic!("stencils exist for multiplicities 1..=4"),
    }
}

/// ∂ⁿf/∂z_{v₁}…∂z_{vₙ} at `z` with step `h` (variables may repeat, n ≤ 4).
pub fn partial<F: Fn(&[f64]) -> f64 + ?Sized>(f: &F, z: &[f64], vars: &[usize], h: f64) -> f64 {
    if vars.is_empty() {
        return f(z);
    }
    let mut sorted = vars.to_vec();
    sorted.sort_unstable();
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for v in sorted {
        match groups.last_mut() {
            Some((var, m)) if *var == v => *m += 1,
            _ => groups.push((v, 1)),
        }
    }
    let stencils: Vec<_> = groups.iter().map(|&(_, m)| stencil(m)).collect();
    let mut buf = z.to_vec();
    let mut counter = vec![0usize; groups.len()];
    let mut acc = 0.0;
    loop {
        let mut w = 1.0;
        for (g, &(var, _)) in groups.iter().enumerate() {
            let (off, wt) = stencils[g];
            buf[var] = z[var] + off[counter[g]] as f64 * h;
            w *= wt[counter[g]];
        }
        acc += w * f(&buf);
        let mut g = 0;
        loop {
            if g == groups.len() {
                return acc / h.powi(vars.len() as i32);
            }
            counter[g] += 1;
            if counter[g] < stencils[g].0.len() {
                break;
            }
            counter[g] = 0;
            g += 1;
        }
    }
}

/// Partial of a two-point field φ(x,x′); indices < d refer to x, indices ≥ d to x′.
pub fn two_point<F: Fn(&[f64], &[f64]) -> f64 + ?Sized>(
    f: &F,
    x: &[f64],
    xp: &[f64],
    vars: &[usize],
    h: f64,
) -> f64 {
    let d = x.len();
    let z: Vec<f64> = x.iter().chain(xp).copied().collect();
    partial(&|z: &[f64]| f(&z[..d], &z[d..]), &z, vars, h)
}
