//! Scalar Σ-products of vectors and multivectors, Gram functions, collinearity and parallelism.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kind::Kind;
use crate::linalg;
use crate::world::{Point, World};

/// Relative tolerance for the boolean predicates.
pub const REL_TOL: f64 = 1e-9;

/// Ordered tuple P₀P₁…Pₙ of points, n ≥ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Multivector {
    points: Vec<Point>,
}

impl Multivector {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Precondition("a multivector needs at least two points".into()));
        }
        let d = points[0].len();
        for p in &points {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("multivector point".into()));
            }
        }
        Ok(Multivector { points })
    }

    pub fn order(&self) -> usize {
        self.points.len() - 1
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Copy with points `k` and `l` exchanged.
    pub fn transposed(&self, k: usize, l: usize) -> Self {
        let mut points = self.points.clone();
        points.swap(k, l);
        Multivector { points }
    }

    /// Copy with an extra point appended.
    pub fn with_point(&self, r: Point) -> Result<Self> {
        let mut points = self.points.clone();
        points.push(r);
        Multivector::new(points)
    }

    fn check<W: World + ?Sized>(&self, w: &W) -> Result<()> {
        if self.dim() != w.dim() {
            return Err(Error::DimensionMismatch {
                expected: w.dim(),
                found: self.dim(),
            });
        }
        Ok(())
    }
}

fn check_points<W: World + ?Sized>(w: &W, pts: &[&Point]) -> Result<()> {
    for p in pts {
        w.check(p)?;
    }
    Ok(())
}

#[inline]
fn four_term(f: impl Fn(&[f64], &[f64]) -> f64, p0: &[f64], p1: &[f64], q0: &[f64], q1: &[f64]) -> f64 {
    (f(p0, q1) - f(p1, q1)) - (f(p0, q0) - f(p1, q0))
}

pub(crate) fn vector_product_raw<W: World + ?Sized>(w: &W, p0: &[f64], p1: &[f64], q0: &[f64], q1: &[f64]) -> f64 {
    four_term(|a, b| w.sigma_raw(a, b), p0, p1, q0, q1)
}

/// (P₀P₁.Q₀Q₁) = Σ(P₀,Q₁) − Σ(P₁,Q₁) − Σ(P₀,Q₀) + Σ(P₁,Q₀).
pub fn vector_product<W: World + ?Sized>(w: &W, p0: &Point, p1: &Point, q0: &Point, q1: &Point) -> Result<f64> {
    check_points(w, &[p0, p1, q0, q1])?;
    Ok(vector_product_raw(w, p0.as_slice(), p1.as_slice(), q0.as_slice(), q1.as_slice()))
}

/// Symmetric (G) and antisymmetric (A) four-term combinations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductParts {
    pub sym: f64,
    pub antisym: f64,
}

pub fn vector_product_parts<W: World + ?Sized>(
    w: &W,
    p0: &Point,
    p1: &Point,
    q0: &Point,
    q1: &Point,
) -> Result<ProductParts> {
    check_points(w, &[p0, p1, q0, q1])?;
    let (a, b, c, d) = (p0.as_slice(), p1.as_slice(), q0.as_slice(), q1.as_slice());
    Ok(ProductParts {
        sym: four_term(|x, y| w.g_raw(x, y), a, b, c, d),
        antisym: four_term(|x, y| w.a_raw(x, y), a, b, c, d),
    })
}

/// Matrix M_ik = (P₀P_i.Q₀Q_k).
pub fn product_matrix<W: World + ?Sized>(w: &W, p: &Multivector, q: &Multivector) -> Result<DMatrix<f64>> {
    p.check(w)?;
    q.check(w)?;
    if p.order() != q.order() {
        return Err(Error::OrderMismatch {
            left: p.order(),
            right: q.order(),
        });
    }
    let n = p.order();
    let (pp, qq) = (p.points(), q.points());
    Ok(DMatrix::from_fn(n, n, |i, k| {
        vector_product_raw(w, pp[0].as_slice(), pp[i + 1].as_slice(), qq[0].as_slice(), qq[k + 1].as_slice())
    }))
}

/// Scalar Σ-product of two multivectors of equal order.
pub fn multivector_product<W: World + ?Sized>(w: &W, p: &Multivector, q: &Multivector) -> Result<f64> {
    Ok(linalg::det(&product_matrix(w, p, q)?))
}

/// F_n(𝒫ⁿ) = det‖(P₀P_i.P₀P_k)‖.
pub fn gram_fn<W: World + ?Sized>(w: &W, p: &Multivector) -> Result<f64> {
    multivector_product(w, p, p)
}

/// Squared length with its sign flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredLength {
    pub value: f64,
    pub timelike: bool,
}

pub fn squared_length<W: World + ?Sized>(w: &W, p: &Multivector) -> Result<SquaredLength> {
    p.check(w)?;
    let value = if p.order() == 1 {
        2.0 * w.g_raw(p.points()[0].as_slice(), p.points()[1].as_slice())
    } else {
        gram_fn(w, p)?
    };
    Ok(SquaredLength {
        value,
        timelike: value >= 0.0,
    })
}

/// Zero iff P and Q are collinear in the given sense.
pub fn collinearity_residual<W: World + ?Sized>(w: &W, kind: Kind, p: &Multivector, q: &Multivector) -> Result<f64> {
    let pq = multivector_product(w, p, q)?;
    let qp = multivector_product(w, q, p)?;
    let lens = squared_length(w, p)?.value * squared_length(w, q)?.value;
    Ok(match kind {
        Kind::Neutral => pq * qp - lens,
        Kind::Future => pq * pq - lens,
        Kind::Past => qp * qp - lens,
    })
}

pub fn is_collinear<W: World + ?Sized>(w: &W, kind: Kind, p: &Multivector, q: &Multivector) -> Result<bool> {
    let r = collinearity_residual(w, kind, p, q)?;
    let lens = (squared_length(w, p)?.value * squared_length(w, q)?.value).abs();
    let scale = if lens == 0.0 { 1.0 } else { lens };
    Ok(r.abs() <= REL_TOL * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Parallel,
    Antiparallel,
}

fn real_length<W: World + ?Sized>(w: &W, p: &Multivector) -> Result<f64> {
    let sq = squared_length(w, p)?.value;
    if sq < 0.0 {
        return Err(Error::NegativeRadicand {
            what: "multivector length",
            value: sq,
        });
    }
    Ok(sq.sqrt())
}

/// (P.Q) ∓ |P||Q| for the future kind, (Q.P) ∓ |P||Q| for the past kind.
///
/// The neutral kind uses sign((P.Q)+(Q.P))·√((P.Q)(Q.P)).
pub fn parallelism_residual<W: World + ?Sized>(
    w: &W,
    kind: Kind,
    sense: Sense,
    p: &Multivector,
    q: &Multivector,
) -> Result<f64> {
    let lp = real_length(w, p)?;
    let lq = real_length(w, q)?;
    let prod = match kind {
        Kind::Future => multivector_product(w, p, q)?,
        Kind::Past => multivector_product(w, q, p)?,
        Kind::Neutral => {
            let pq = multivector_product(w, p, q)?;
            let qp = multivector_product(w, q, p)?;
            let m = pq * qp;
            if m < 0.0 {
                return Err(Error::NegativeRadicand {
                    what: "neutral parallelism",
                    value: m,
                });
            }
            (pq + qp).signum() * m.sqrt()
        }
    };
    Ok(match sense {
        Sense::Parallel => prod - lp * lq,
        Sense::Antiparallel => prod + lp * lq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{make_world, point, WorldSpec};

    fn mv(pts: &[&[f64]]) -> Multivector {
        Multivector::new(pts.iter().map(|p| point(p)).collect()).unwrap()
    }

    #[test]
    fn unit_vector_products() {
        let w = make_world(WorldSpec::euclidean(&[1.0, 1.0])).unwrap();
        let (o, e) = (point(&[0.0, 0.0]), point(&[1.0, 0.0]));
        assert_eq!(vector_product(&w, &o, &e, &o, &e).unwrap(), 1.0);
        assert_eq!(vector_product(&w, &e, &o, &o, &e).unwrap(), -1.0);
        let wa = make_world(WorldSpec::constant_a(&[1.0, 1.0], &[0.3, 0.0])).unwrap();
        assert!((vector_product(&wa, &o, &e, &o, &e).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parts_cross_check() {
        let w = make_world(WorldSpec::case1(&[1.0, -1.0, -1.0, -1.0], &[1.0, 0.0, 0.0, 0.0], 0.2)).unwrap();
        let p0 = point(&[0.0; 4]);
        let p1 = point(&[1.0, 0.0, 0.0, 0.0]);
        let q0 = point(&[0.0, 1.0, 0.0, 0.0]);
        let q1 = point(&[1.0, 1.0, 0.0, 0.0]);
        let parts = vector_product_parts(&w, &p0, &p1, &q0, &q1).unwrap();
        let fwd = vector_product(&w, &p0, &p1, &q0, &q1).unwrap();
        let rev = vector_product(&w, &q0, &q1, &p0, &p1).unwrap();
        assert!((parts.antisym - 0.5 * (fwd - rev)).abs() < 1e-14);
        assert!((parts.sym + parts.antisym - fwd).abs() < 1e-14);
        let null = vector_product_parts(&w, &p0, &p1, &q0, &q0).unwrap();
        assert_eq!(null, ProductParts { sym: 0.0, antisym: 0.0 });
    }

    #[test]
    fn gram_examples() {
        let w = make_world(WorldSpec::euclidean(&[1.0, 1.0])).unwrap();
        let tri = mv(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(gram_fn(&w, &tri).unwrap(), 1.0);
        assert_eq!(multivector_product(&w, &tri, &tri).unwrap(), 1.0);
        assert_eq!(gram_fn(&w, &mv(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0]])).unwrap(), 0.0);
    }

    #[test]
    fn squared_lengths() {
        let w = make_world(WorldSpec::euclidean(&[1.0, 1.0])).unwrap();
        let l = squared_length(&w, &mv(&[&[0.0, 0.0], &[3.0, 4.0]])).unwrap();
        assert_eq!(l, SquaredLength { value: 25.0, timelike: true });
        let wa = make_world(WorldSpec::constant_a(&[1.0, 1.0], &[0.3, 0.0])).unwrap();
        let l = squared_length(&wa, &mv(&[&[0.0, 0.0], &[1.0, 0.0]])).unwrap();
        assert!((l.value - 1.0).abs() < 1e-15 && l.timelike);
        let wm = make_world(WorldSpec::euclidean(&[1.0, -1.0, -1.0, -1.0])).unwrap();
        let l = squared_length(&wm, &mv(&[&[0.0; 4], &[0.0, 1.0, 0.0, 0.0]])).unwrap();
        assert_eq!(l, SquaredLength { value: -1.0, timelike: false });
    }

    #[test]
    fn order_mismatch() {
        let w = make_world(WorldSpec::euclidean(&[1.0, 1.0])).unwrap();
        let a = mv(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let b = mv(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(
            multivector_product(&w, &a, &b).unwrap_err(),
            Error::OrderMismatch { left: 1, right: 2 }
        );
    }

    #[test]
    fn collinear_along_a_line() {
        let w = make_world(WorldSpec::euclidean(&[1.0, 1.0])).unwrap();
        let p = mv(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let q = mv(&[&[2.0, 2.0], &[5.0, 5.0]]);
        for k in Kind::ALL {
            assert!(collinearity_residual(&w, k, &p, &q).unwrap().abs() < 1e-12);
            assert!(is_collinear(&w, k, &p, &q).unwrap());
        }
    }

    #[test]
    fn parallel_and_antiparallel() {
        let w = make_world(WorldSpec::euclidean(&[1.0, 1.0])).unwrap();
        let p = mv(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let q = mv(&[&[3.0, 1.0], &[5.0, 1.0]]);
        let par = parallelism_residual(&w, Kind::Future, Sense::Parallel, &p, &q).unwrap();
        let anti = parallelism_residual(&w, Kind::Future, Sense::Antiparallel, &p, &q).unwrap();
        assert!(par.abs() < 1e-14);
        assert!((anti - 4.0).abs() < 1e-14);
        let rev = p.transposed(0, 1);
        let r = parallelism_residual(&w, Kind::Future, Sense::Antiparallel, &rev, &q).unwrap();
        assert!(r.abs() < 1e-14);
    }

    #[test]
    fn complex_length_is_an_error() {
        let w = make_world(WorldSpec::euclidean(&[1.0, -1.0])).unwrap();
        let p = mv(&[&[0.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            parallelism_residual(&w, Kind::Future, Sense::Parallel, &p, &p),
            Err(Error::NegativeRadicand { .. })
        ));
    }
}
