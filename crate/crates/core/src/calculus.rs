//! Two-point tensor calculus by central finite differences: fundamental
//! metrics, Christoffel symbols, coincidence limits, parallel transport and
//! curvature.
//!
//! Index convention: a derivative pattern lists one flag per slot, `false`
//! for an unprimed index (differentiation in x) and `true` for a primed one
//! (differentiation in x′). Tensors are stored row-major in slot order.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::{two_point, FdSteps};
use crate::linalg::inverse;
use crate::tensor::Tensor;
use crate::world::World;

const U: bool = false;
const P: bool = true;

/// Which scalar is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Sigma,
    G,
    A,
}

impl Field {
    pub fn eval<W: World + ?Sized>(self, w: &W, x: &[f64], xp: &[f64]) -> f64 {
        match self {
            Field::Sigma => w.sigma_raw(x, xp),
            Field::G => w.g_raw(x, xp),
            Field::A => w.a_raw(x, xp),
        }
    }
}

fn check_pair<W: World + ?Sized>(w: &W, x: &[f64], xp: &[f64]) -> Result<()> {
    for p in [x, xp] {
        if p.len() != w.dim() {
            return Err(Error::DimensionMismatch {
                expected: w.dim(),
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point coordinate".into()));
        }
    }
    Ok(())
}

/// All derivatives of `field` with the given prime pattern, step `h`.
pub fn derivative_tensor<W: World + ?Sized>(
    w: &W,
    field: Field,
    x: &[f64],
    xp: &[f64],
    pattern: &[bool],
    h: f64,
) -> Result<Tensor> {
    check_pair(w, x, xp)?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Precondition(format!("step must be positive, got {h}")));
    }
    let d = w.dim();
    let rank = pattern.len();
    let f = |a: &[f64], b: &[f64]| field.eval(w, a, b);
    let data: Vec<f64> = (0..d.pow(rank as u32))
        .into_par_iter()
        .map(|flat| {
            let mut vars = vec![0usize; rank];
            let mut r = flat;
            for slot in (0..rank).rev() {
                vars[slot] = r % d + if pattern[slot] { d } else { 0 };
                r /= d;
            }
            two_point(&f, x, xp, &vars, h)
        })
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{field:?} derivative stencil")));
    }
    Ok(Tensor { dim: d, rank, data })
}

fn deriv<W: World + ?Sized>(
    w: &W,
    field: Field,
    x: &[f64],
    xp: &[f64],
    pattern: &[bool],
    steps: &FdSteps,
) -> Result<Tensor> {
    derivative_tensor(w, field, x, xp, pattern, steps.for_order(pattern.len()))
}

/// Derivatives of one field up to the requested order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDerivatives {
    pub d_i: Tensor,
    pub d_ip: Tensor,
    pub d_ikp: Option<Tensor>,
    pub d_ik: Option<Tensor>,
    pub d_ipkp: Option<Tensor>,
    pub d_iklp: Option<Tensor>,
    pub d_ipkpl: Option<Tensor>,
    pub d_ilkpjp: Option<Tensor>,
}

impl FieldDerivatives {
    fn compute<W: World + ?Sized>(
        w: &W,
        field: Field,
        x: &[f64],
        xp: &[f64],
        order: usize,
        steps: &FdSteps,
    ) -> Result<Self> {
        let get = |pattern: &[bool]| -> Result<Option<Tensor>> {
            if pattern.len() <= order {
                deriv(w, field, x, xp, pattern, steps).map(Some)
            } else {
                Ok(None)
            }
        };
        Ok(FieldDerivatives {
            d_i: deriv(w, field, x, xp, &[U], steps)?,
            d_ip: deriv(w, field, x, xp, &[P], steps)?,
            d_ikp: get(&[U, P])?,
            d_ik: get(&[U, U])?,
            d_ipkp: get(&[P, P])?,
            d_iklp: get(&[U, U, P])?,
            d_ipkpl: get(&[P, P, U])?,
            d_ilkpjp: get(&[U, U, P, P])?,
        })
    }

    fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for t in [&self.d_ik, &self.d_ipkp].into_iter().flatten() {
            worst = worst.max(t.symmetry_defect(&[1, 0]));
        }
        for t in [&self.d_iklp, &self.d_ipkpl].into_iter().flatten() {
            worst = worst.max(t.symmetry_defect(&[1, 0, 2]));
        }
        if let Some(t) = &self.d_ilkpjp {
            worst = worst
                .max(t.symmetry_defect(&[1, 0, 2, 3]))
                .max(t.symmetry_defect(&[0, 1, 3, 2]));
        }
        worst
    }
}

/// FD derivatives of Σ, G and A at one two-point anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBundle {
    pub x: Vec<f64>,
    pub xp: Vec<f64>,
    pub max_order: usize,
    pub steps: [f64; 4],
    pub sigma: FieldDerivatives,
    pub g: FieldDerivatives,
    pub a: FieldDerivatives,
    /// Max defect of mixed-partial symmetry within unprimed and primed groups.
    pub symmetry_defect: f64,
    /// Max defect of G,i(x,x′) = G,i′(x′,x) and A,i(x,x′) = −A,i′(x′,x).
    pub swap_defect: f64,
}

/// Central differences of Σ, G and A up to `max_order`; `h = None` uses the
/// default order-dependent steps.
pub fn fd_derivatives<W: World + ?Sized>(
    w: &W,
    x: &[f64],
    xp: &[f64],
    max_order: usize,
    h: Option<f64>,
) -> Result<DerivativeBundle> {
    if !(1..=4).contains(&max_order) {
        return Err(Error::Precondition(format!(
            "max_order must be in 1..=4, got {max_order}"
        )));
    }
    let steps = match h {
        Some(h) if h > 0.0 && h.is_finite() => FdSteps::uniform(h),
        Some(h) => return Err(Error::Precondition(format!("step must be positive, got {h}"))),
        None => FdSteps::default_for(x, xp),
    };
    check_pair(w, x, xp)?;
    let sigma = FieldDerivatives::compute(w, Field::Sigma, x, xp, max_order, &steps)?;
    let g = FieldDerivatives::compute(w, Field::G, x, xp, max_order, &steps)?;
    let a = FieldDerivatives::compute(w, Field::A, x, xp, max_order, &steps)?;
    let symmetry_defect = sigma
        .symmetry_defect()
        .max(g.symmetry_defect())
        .max(a.symmetry_defect());
    let g_swap = deriv(w, Field::G, xp, x, &[P], &steps)?;
    let a_swap = deriv(w, Field::A, xp, x, &[P], &steps)?;
    let mut swap_defect = g.d_i.max_diff(&g_swap);
    for (u, v) in a.d_i.data.iter().zip(&a_swap.data) {
        swap_defect = swap_defect.max((u + v).abs());
    }
    Ok(DerivativeBundle {
        x: x.to_vec(),
        xp: xp.to_vec(),
        max_order,
        steps: [steps.h1, steps.h2, steps.h3, steps.h4],
        sigma,
        g,
        a,
        symmetry_defect,
        swap_defect,
    })
}

/// The mixed matrix S[i][k] = X,ik′ and its contravariant partner C = (Sᵀ)⁻¹.
fn mixed<W: World + ?Sized>(
    w: &W,
    field: Field,
    x: &[f64],
    xp: &[f64],
    steps: &FdSteps,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s = deriv(w, field, x, xp, &[U, P], steps)?.to_matrix();
    let c = inverse(&s.transpose(), "fundamental metric")?;
    Ok((s, c))
}

/// Σ_{ik′}, Σ^{ik′} and their G counterparts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalMetric {
    pub cov: Tensor,
    pub contra: Tensor,
    pub g_cov: Tensor,
    pub g_contra: Tensor,
    /// max |Σ^{ik′}Σ_{lk′} − δ^i_l| over both fields.
    pub identity_defect: f64,
}

fn identity_defect(c: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    let n = c.nrows();
    (c * s.transpose() - DMatrix::<f64>::identity(n, n)).amax()
}

pub fn fundamental_metric<W: World + ?Sized>(w: &W, x: &[f64], xp: &[f64]) -> Result<FundamentalMetric> {
    check_pair(w, x, xp)?;
    let steps = FdSteps::default_for(x, xp);
    let (s, c) = mixed(w, Field::Sigma, x, xp, &steps)?;
    let (gs, gc) = mixed(w, Field::G, x, xp, &steps)?;
    Ok(FundamentalMetric {
        identity_defect: identity_defect(&c, &s).max(identity_defect(&gc, &gs)),
        cov: Tensor::from_matrix(&s),
        contra: Tensor::from_matrix(&c),
        g_cov: Tensor::from_matrix(&gs),
        g_contra: Tensor::from_matrix(&gc),
    })
}

/// Which endpoint a Christoffel symbol lives at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    X,
    Xp,
}

/// Christoffel symbol Γ[i][k][l] and, when requested, its derivative
/// dΓ[i][k][l][m].
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelJet {
    pub gamma: Tensor,
    pub deriv: Option<Tensor>,
}

/// How the derivative of a Christoffel symbol is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetMode {
    None,
    /// Partial derivative at the symbol's own endpoint, the other fixed.
    Partial,
    /// Derivative of the coincidence limit along the diagonal x = x′.
    Coincident,
}

/// Γ̃^i_kl = X^{is′}X,kls′ (side X) or Γ̃^{i′}_{k′l′} = X^{si′}X,k′l′s (side X′).
pub fn christoffel_jet<W: World + ?Sized>(
    w: &W,
    field: Field,
    x: &[f64],
    xp: &[f64],
    side: Side,
    mode: JetMode,
) -> Result<ChristoffelJet> {
    check_pair(w, x, xp)?;
    let d = w.dim();
    let steps = FdSteps::default_for(x, xp);
    let (_, c) = mixed(w, field, x, xp, &steps)?;
    let (base, flip) = match side {
        Side::X => ([U, U, P], false),
        Side::Xp => ([P, P, U], true),
    };
    let cf = |i: usize, s: usize| if flip { c[(s, i)] } else { c[(i, s)] };
    let t = deriv(w, field, x, xp, &base, &steps)?;
    let gamma = Tensor::from_fn(d, 3, |ix| {
        (0..d).map(|s| cf(ix[0], s) * t.at3(ix[1], ix[2], s)).sum()
    });
    let slots: &[bool] = match (mode, side) {
        (JetMode::None, _) => return Ok(ChristoffelJet { gamma, deriv: None }),
        (JetMode::Partial, Side::X) => &[U],
        (JetMode::Partial, Side::Xp) => &[P],
        (JetMode::Coincident, _) => &[U, P],
    };
    let mut ds = Tensor::zeros(d, 3);
    let mut dt = Tensor::zeros(d, 4);
    for &flag in slots {
        let a = deriv(w, field, x, xp, &[U, P, flag], &steps)?;
        let b = deriv(w, field, x, xp, &[base[0], base[1], base[2], flag], &steps)?;
        for (acc, v) in ds.data.iter_mut().zip(&a.data) {
            *acc += v;
        }
        for (acc, v) in dt.data.iter_mut().zip(&b.data) {
            *acc += v;
        }
    }
    // dC_m = −C (dS_m)ᵀ C
    let dc: Vec<DMatrix<f64>> = (0..d)
        .map(|m| {
            let dsm = DMatrix::from_fn(d, d, |a, b| ds.at3(a, b, m));
            -(&c * dsm.transpose() * &c)
        })
        .collect();
    let dcf = |i: usize, s: usize, m: usize| if flip { dc[m][(s, i)] } else { dc[m][(i, s)] };
    let deriv = Tensor::from_fn(d, 4, |ix| {
        let (i, k, l, m) = (ix[0], ix[1], ix[2], ix[3]);
        (0..d)
            .map(|s| dcf(i, s, m) * t.at3(k, l, s) + cf(i, s) * dt.at4(k, l, s, m))
            .sum()
    });
    Ok(ChristoffelJet {
        gamma,
        deriv: Some(deriv),
    })
}

/// The four Christoffel symbols at a two-point anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChristoffelSet {
    pub tilde_x: Tensor,
    pub tilde_xp: Tensor,
    pub g_x: Tensor,
    pub g_xp: Tensor,
}

impl ChristoffelSet {
    /// Max defect of symmetry in the lower indices.
    pub fn symmetry_defect(&self) -> f64 {
        [&self.tilde_x, &self.tilde_xp, &self.g_x, &self.g_xp]
            .iter()
            .map(|t| t.symmetry_defect(&[0, 2, 1]))
            .fold(0.0, f64::max)
    }
}

pub fn christoffels<W: World + ?Sized>(w: &W, x: &[f64], xp: &[f64]) -> Result<ChristoffelSet> {
    let get = |field, side| christoffel_jet(w, field, x, xp, side, JetMode::None).map(|j| j.gamma);
    Ok(ChristoffelSet {
        tilde_x: get(Field::Sigma, Side::X)?,
        tilde_xp: get(Field::Sigma, Side::Xp)?,
        g_x: get(Field::G, Side::X)?,
        g_xp: get(Field::G, Side::Xp)?,
    })
}

/// r^l_{s.ik} = γ^l_{si,k} − γ^l_{sk,i} + γ^p_{si}γ^l_{pk} − γ^p_{sk}γ^l_{pi},
/// with `gamma[l][s][i]` and `gamma_derivs[l][s][i][k] = ∂_kγ^l_si`.
pub fn riemann_from_gamma(gamma: &Tensor, gamma_derivs: &Tensor) -> Result<Tensor> {
    if gamma.rank != 3 {
        return Err(Error::OrderMismatch {
            left: gamma.rank,
            right: 3,
        });
    }
    if gamma_derivs.rank != 4 {
        return Err(Error::OrderMismatch {
            left: gamma_derivs.rank,
            right: 4,
        });
    }
    if gamma.dim != gamma_derivs.dim {
        return Err(Error::DimensionMismatch {
            expected: gamma.dim,
            found: gamma_derivs.dim,
        });
    }
    let d = gamma.dim;
    Ok(Tensor::from_fn(d, 4, |ix| {
        let (l, s, i, k) = (ix[0], ix[1], ix[2], ix[3]);
        let mut v = gamma_derivs.at4(l, s, i, k) - gamma_derivs.at4(l, s, k, i);
        for p in 0..d {
            v += gamma.at3(p, s, i) * gamma.at3(l, p, k) - gamma.at3(p, s, k) * gamma.at3(l, p, i);
        }
        v
    }))
}

/// Max |R̃| of the curvature built from the two-point Christoffel symbols of
/// `field` at both endpoints; these connections are flat.
pub fn flat_curvature_defect<W: World + ?Sized>(
    w: &W,
    field: Field,
    x: &[f64],
    xp: &[f64],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for side in [Side::X, Side::Xp] {
        let jet = christoffel_jet(w, field, x, xp, side, JetMode::Partial)?;
        let r = riemann_from_gamma(&jet.gamma, jet.deriv.as_ref().expect("partial jet"))?;
        worst = worst.max(r.amax());
    }
    Ok(worst)
}

/// One-point coefficients extracted at x′ = x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceCoefficients {
    pub x: Vec<f64>,
    pub a: Tensor,
    pub g: Tensor,
    pub g_inv: Tensor,
    pub g_tilde: Tensor,
    pub g_tilde_inv: Tensor,
    pub sigma_f: Tensor,
    pub sigma_p: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub gamma_tilde_f: Tensor,
    pub gamma_tilde_p: Tensor,
    pub a3: Tensor,
    pub g3: Tensor,
}

/// Residuals of the identities the coefficients satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceDefects {
    pub g_symmetry: f64,
    pub metric_identity: f64,
    pub tilde_identity: f64,
    pub a3_symmetry: f64,
    pub g3_symmetry: f64,
    pub beta_symmetry: f64,
    pub gamma_tilde_f: f64,
    pub gamma_tilde_p: f64,
    pub beta_consistency: f64,
}

pub fn coincidence_coefficients<W: World + ?Sized>(w: &W, x: &[f64]) -> Result<CoincidenceCoefficients> {
    check_pair(w, x, x)?;
    let d = w.dim();
    let steps = FdSteps::default_for(x, x);
    let get = |field, pattern: &[bool]| deriv(w, field, x, x, pattern, &steps);

    let a = get(Field::Sigma, &[U])?;
    let g = get(Field::G, &[U, U])?;
    let gm = g.to_matrix();
    let gi = inverse(&gm, "coincidence metric g")?;
    let mut g_tilde = get(Field::Sigma, &[U, P])?;
    g_tilde.data.iter_mut().for_each(|v| *v = -*v);
    let gti = inverse(&g_tilde.to_matrix(), "coincidence metric g̃")?.transpose();
    let sigma_f = get(Field::Sigma, &[U, U])?;
    let sigma_p = get(Field::Sigma, &[P, P])?;
    let a3 = get(Field::A, &[U, U, U])?;
    let g3 = get(Field::G, &[U, U, U])?;
    let g3p = get(Field::G, &[U, U, P])?;
    let akls = get(Field::A, &[U, U, P])?;

    // g_ik,l = [G,ikl] + [G,ikl′]
    let gd = |i: usize, k: usize, l: usize| g3.at3(i, k, l) + g3p.at3(i, k, l);
    let gamma = Tensor::from_fn(d, 3, |ix| {
        let (i, k, l) = (ix[0], ix[1], ix[2]);
        0.5 * (0..d)
            .map(|s| gi[(s, i)] * (gd(k, s, l) + gd(s, l, k) - gd(l, k, s)))
            .sum::<f64>()
    });
    let beta = Tensor::from_fn(d, 3, |ix| {
        -(0..d).map(|s| gi[(ix[0], s)] * akls.at3(ix[1], ix[2], s)).sum::<f64>()
    });
    let tf = christoffel_jet(w, Field::Sigma, x, x, Side::X, JetMode::None)?.gamma;
    let tp = christoffel_jet(w, Field::Sigma, x, x, Side::Xp, JetMode::None)?.gamma;

    Ok(CoincidenceCoefficients {
        x: x.to_vec(),
        a,
        g,
        g_inv: Tensor::from_matrix(&gi),
        g_tilde,
        g_tilde_inv: Tensor::from_matrix(&gti),
        sigma_f,
        sigma_p,
        gamma,
        beta,
        gamma_tilde_f: tf,
        gamma_tilde_p: tp,
        a3,
        g3,
    })
}

fn contract_first(m: &DMatrix<f64>, t: &Tensor) -> Tensor {
    let d = t.dim;
    Tensor::from_fn(d, 3, |ix| (0..d).map(|p| m[(ix[0], p)] * t.at3(p, ix[1], ix[2])).sum())
}

fn combine(a: &Tensor, b: &Tensor, sign: f64) -> Tensor {
    Tensor {
        dim: a.dim,
        rank: a.rank,
        data: a.data.iter().zip(&b.data).map(|(u, v)| u + sign * v).collect(),
    }
}

impl CoincidenceCoefficients {
    pub fn dim(&self) -> usize {
        self.a.dim
    }

    pub fn defects(&self) -> CoincidenceDefects {
        let d = self.dim();
        let id = DMatrix::<f64>::identity(d, d);
        let g = self.g.to_matrix();
        let gi = self.g_inv.to_matrix();
        let gt = self.g_tilde.to_matrix();
        let u = self.g_tilde_inv.to_matrix();
        let sum = combine(&self.gamma, &self.beta, 1.0);
        let diff = combine(&self.gamma, &self.beta, -1.0);
        let tf = contract_first(&(&u * g.transpose()), &sum);
        let tp = contract_first(&(u.transpose() * g.transpose()), &diff);
        let half = 0.5 * &gi * &gt;
        let beta = contract_first(&half, &combine(&self.gamma_tilde_f, &self.gamma_tilde_p, -1.0));
        let perms3 = [[1, 0, 2], [0, 2, 1], [2, 1, 0]];
        let full = |t: &Tensor| perms3.iter().map(|p| t.symmetry_defect(p)).fold(0.0, f64::max);
        CoincidenceDefects {
            g_symmetry: self.g.symmetry_defect(&[1, 0]),
            metric_identity: (&g * &gi - &id).amax(),
            tilde_identity: (u.transpose() * &gt - &id).amax(),
            a3_symmetry: full(&self.a3),
            g3_symmetry: full(&self.g3),
            beta_symmetry: self.beta.symmetry_defect(&[0, 2, 1]),
            gamma_tilde_f: tf.max_diff(&self.gamma_tilde_f),
            gamma_tilde_p: tp.max_diff(&self.gamma_tilde_p),
            beta_consistency: beta.max_diff(&self.beta),
        }
    }
}

/// Transport spaces: Σ-based or G-based, anchored at x′ or at x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportSpace {
    TildeXprime,
    TildeX,
    GXprime,
    GX,
}

impl std::str::FromStr for TransportSpace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tilde_xprime" => Ok(TransportSpace::TildeXprime),
            "tilde_x" => Ok(TransportSpace::TildeX),
            "g_xprime" => Ok(TransportSpace::GXprime),
            "g_x" => Ok(TransportSpace::GX),
            _ => Err(Error::Precondition(format!("unknown transport space {s:?}"))),
        }
    }
}

/// Transport matrix P[k][m]: b_k = Σ_m P[k][m] b_m.
pub fn transport_tensor<W: World + ?Sized>(
    w: &W,
    space: TransportSpace,
    x: &[f64],
    xp: &[f64],
) -> Result<DMatrix<f64>> {
    check_pair(w, x, xp)?;
    let field = match space {
        TransportSpace::TildeXprime | TransportSpace::TildeX => Field::Sigma,
        TransportSpace::GXprime | TransportSpace::GX => Field::G,
    };
    let steps = FdSteps::default_for(x, xp);
    let s = deriv(w, field, x, xp, &[U, P], &steps)?.to_matrix();
    match space {
        TransportSpace::TildeXprime | TransportSpace::GXprime => {
            let s0 = deriv(w, field, xp, xp, &[U, P], &FdSteps::default_for(xp, xp))?.to_matrix();
            let c0t = inverse(&s0, "fundamental metric at x′")?;
            Ok(s * c0t)
        }
        TransportSpace::TildeX | TransportSpace::GX => {
            let s0 = deriv(w, field, x, x, &[U, P], &FdSteps::default_for(x, x))?.to_matrix();
            let d0 = inverse(&s0, "fundamental metric at x")?;
            Ok((d0 * s).transpose())
        }
    }
}

pub fn parallel_transport<W: World + ?Sized>(
    w: &W,
    space: TransportSpace,
    x: &[f64],
    xp: &[f64],
    covec: &[f64],
) -> Result<Vec<f64>> {
    if covec.len() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: covec.len(),
        });
    }
    let p = transport_tensor(w, space, x, xp)?;
    Ok((0..w.dim())
        .map(|k| (0..w.dim()).map(|m| p[(k, m)] * covec[m]).sum())
        .collect())
}

/// P g̃(x′) Pᵀ: the coincidence metric g̃ at x′ carried to x.
pub fn transported_metric<W: World + ?Sized>(w: &W, x: &[f64], xp: &[f64]) -> Result<DMatrix<f64>> {
    let p = transport_tensor(w, TransportSpace::TildeXprime, x, xp)?;
    let gt = coincidence_coefficients(w, xp)?.g_tilde.to_matrix();
    Ok(&p * gt * p.transpose())
}

/// F[i][l][k][j] = X,ilj′k′ − X,sj′k′ X^{sm′} X,ilm′ for X = Σ or G.
#[cfg(feature = "curvature")]
pub fn f_tensor<W: World + ?Sized>(w: &W, field: Field, x: &[f64], xp: &[f64]) -> Result<Tensor> {
    check_pair(w, x, xp)?;
    let d = w.dim();
    let steps = FdSteps::default_for(x, xp);
    let (_, c) = mixed(w, field, x, xp, &steps)?;
    let q = deriv(w, field, x, xp, &[U, U, P, P], &steps)?;
    let r = deriv(w, field, x, xp, &[U, P, P], &steps)?;
    let t = deriv(w, field, x, xp, &[U, U, P], &steps)?;
    // ct[s][i][l] = Σ_m C[s][m] T[i][l][m]
    let ct = Tensor::from_fn(d, 3, |ix| (0..d).map(|m| c[(ix[0], m)] * t.at3(ix[1], ix[2], m)).sum());
    Ok(Tensor::from_fn(d, 4, |ix| {
        let (i, l, k, j) = (ix[0], ix[1], ix[2], ix[3]);
        q.at4(i, l, j, k) - (0..d).map(|s| r.at3(s, j, k) * ct.at3(s, i, l)).sum::<f64>()
    }))
}

/// Fourth-order objects at a two-point anchor and at coincidence with x.
#[cfg(feature = "curvature")]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBundle {
    pub f_tilde_twopoint: Tensor,
    /// f̃_ilkj = [F̃_{ilk′j′}] at x.
    pub f_tilde: Tensor,
    /// f_ispk = [F_{isp′k′}] at x, built from G.
    pub f_coincident: Tensor,
    pub riemann: Tensor,
    pub riemann_tilde_f: Tensor,
    pub riemann_tilde_p: Tensor,
    pub g: Tensor,
    pub g_tilde: Tensor,
}

/// Max defects of i↔s, p↔k and block swap for a rank-4 tensor.
#[cfg(feature = "curvature")]
pub fn f_symmetry_defect(f: &Tensor) -> f64 {
    f.symmetry_defect(&[1, 0, 2, 3])
        .max(f.symmetry_defect(&[0, 1, 3, 2]))
        .max(f.symmetry_defect(&[2, 3, 0, 1]))
}

#[cfg(feature = "curvature")]
fn coincident_riemann<W: World + ?Sized>(w: &W, field: Field, x: &[f64], side: Side) -> Result<Tensor> {
    let jet = christoffel_jet(w, field, x, x, side, JetMode::Coincident)?;
    riemann_from_gamma(&jet.gamma, jet.deriv.as_ref().expect("coincident jet"))
}

#[cfg(feature = "curvature")]
pub fn curvature<W: World + ?Sized>(w: &W, x: &[f64], xp: &[f64]) -> Result<CurvatureBundle> {
    check_pair(w, x, xp)?;
    let coeffs = coincidence_coefficients(w, x)?;
    Ok(CurvatureBundle {
        f_tilde_twopoint: f_tensor(w, Field::Sigma, x, xp)?,
        f_tilde: f_tensor(w, Field::Sigma, x, x)?,
        f_coincident: f_tensor(w, Field::G, x, x)?,
        riemann: coincident_riemann(w, Field::G, x, Side::X)?,
        riemann_tilde_f: coincident_riemann(w, Field::Sigma, x, Side::X)?,
        riemann_tilde_p: coincident_riemann(w, Field::Sigma, x, Side::Xp)?,
        g: coeffs.g,
        g_tilde: coeffs.g_tilde,
    })
}

#[cfg(feature = "curvature")]
impl CurvatureBundle {
    pub fn dim(&self) -> usize {
        self.g.dim
    }

    /// max |g_lp r^l_{s.ik} + f_ispk − f_kspi|.
    pub fn f_riemann_defect(&self) -> f64 {
        let d = self.dim();
        let (g, r, f) = (&self.g, &self.riemann, &self.f_coincident);
        let t = Tensor::from_fn(d, 4, |ix| {
            let (p, s, i, k) = (ix[0], ix[1], ix[2], ix[3]);
            let lhs: f64 = (0..d).map(|l| g.get(&[l, p]) * r.at4(l, s, i, k)).sum();
            lhs + f.at4(i, s, p, k) - f.at4(k, s, p, i)
        });
        t.amax()
    }

    /// max |f̃_ilkj − f̃_iklj − g̃_pj r̃_(f)^p_{i.kl}|.
    pub fn tilde_f_defect(&self) -> f64 {
        let d = self.dim();
        let (gt, r, f) = (&self.g_tilde, &self.riemann_tilde_f, &self.f_tilde);
        Tensor::from_fn(d, 4, |ix| {
            let (i, l, k, j) = (ix[0], ix[1], ix[2], ix[3]);
            let rhs: f64 = (0..d).map(|p| gt.get(&[p, j]) * r.at4(p, i, k, l)).sum();
            f.at4(i, l, k, j) - f.at4(i, k, l, j) - rhs
        })
        .amax()
    }

    /// max |f̃_ilkj − f̃_iklj − g̃_lp r̃_(p)^p_{k.ij}|.
    pub fn tilde_p_defect(&self) -> f64 {
        let d = self.dim();
        let (gt, r, f) = (&self.g_tilde, &self.riemann_tilde_p, &self.f_tilde);
        Tensor::from_fn(d, 4, |ix| {
            let (i, l, k, j) = (ix[0], ix[1], ix[2], ix[3]);
            let rhs: f64 = (0..d).map(|p| gt.get(&[l, p]) * r.at4(p, k, i, j)).sum();
            f.at4(i, l, k, j) - f.at4(i, k, l, j) - rhs
        })
        .amax()
    }
}

/// |G,i′ g^{ik}(x′) G,k′ − 2G| / |2G| with g the coincidence metric at x′.
pub fn eikonal_defect<W: World + ?Sized>(w: &W, x: &[f64], xp: &[f64]) -> Result<f64> {
    check_pair(w, x, xp)?;
    let d = w.dim();
    let steps = FdSteps::default_for(x, xp);
    let gp = deriv(w, Field::G, x, xp, &[P], &steps)?;
    let g0 = deriv(w, Field::G, xp, xp, &[U, U], &FdSteps::default_for(xp, xp))?.to_matrix();
    let gi = inverse(&g0, "coincidence metric g")?;
    let mut q = 0.0;
    for i in 0..d {
        for k in 0..d {
            q += gp.data[i] * gi[(i, k)] * gp.data[k];
        }
    }
    let two_g = 2.0 * w.g_raw(x, xp);
    if two_g == 0.0 {
        return Err(Error::Precondition("eikonal defect needs G ≠ 0".into()));
    }
    Ok(((q - two_g) / two_g).abs())
}
