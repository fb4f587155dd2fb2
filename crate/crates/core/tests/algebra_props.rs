mod common;

use common::*;
use proptest::prelude::*;
use tgeom::algebra::{gram_fn, multivector_product, product_matrix, vector_product, Multivector};
use tgeom::{point, Point, WorldFunction, WorldSpec};

fn worlds() -> Vec<WorldFunction> {
    vec![case1(0.2), case2(0.2, 1.0), cubic(0.3), constant_a(&[0.3, 0.1, 0.0, 0.2]), euclidean(&MINK)]
}

fn pt() -> impl Strategy<Value = Point> {
    prop::array::uniform4(-1.5f64..1.5).prop_map(|a| point(&a))
}

fn scale(w: &WorldFunction, p: &Multivector, q: &Multivector) -> f64 {
    let m = product_matrix(w, p, q).unwrap();
    m.row_iter().map(|r| r.norm()).product::<f64>().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn vector_product_is_antisymmetric(wi in 0usize..5, p in prop::collection::vec(pt(), 4)) {
        let w = &worlds()[wi];
        let v = vector_product(w, &p[0], &p[1], &p[2], &p[3]).unwrap();
        prop_assert_eq!(vector_product(w, &p[1], &p[0], &p[2], &p[3]).unwrap(), -v);
        prop_assert_eq!(vector_product(w, &p[0], &p[1], &p[3], &p[2]).unwrap(), -v);
    }

    #[test]
    fn transposition_flips_sign(
        wi in 0usize..5,
        n in 1usize..4,
        pts in prop::collection::vec(pt(), 8),
        k in 0usize..4,
        l in 0usize..4,
    ) {
        let w = &worlds()[wi];
        let (k, l) = (k % (n + 1), l % (n + 1));
        prop_assume!(k != l);
        let p = Multivector::new(pts[..=n].to_vec()).unwrap();
        let q = Multivector::new(pts[4..=4 + n].to_vec()).unwrap();
        let base = multivector_product(w, &p, &q).unwrap();
        let s = scale(w, &p, &q);
        let a = multivector_product(w, &p.transposed(k, l), &q).unwrap();
        let b = multivector_product(w, &p, &q.transposed(k, l)).unwrap();
        prop_assert!((a + base).abs() <= 1e-12 * s, "{} {}", a, base);
        prop_assert!((b + base).abs() <= 1e-12 * s, "{} {}", b, base);
    }

    #[test]
    fn gram_is_order_independent(wi in 0usize..5, pts in prop::collection::vec(pt(), 4), seed in any::<u64>()) {
        let w = &worlds()[wi];
        let p = Multivector::new(pts.clone()).unwrap();
        let mut order: Vec<usize> = (0..4).collect();
        let mut s = seed;
        for i in (1..4).rev() {
            order.swap(i, (s % (i as u64 + 1)) as usize);
            s /= 7;
        }
        let q = Multivector::new(order.iter().map(|&i| pts[i].clone()).collect()).unwrap();
        let (a, b) = (gram_fn(w, &p).unwrap(), gram_fn(w, &q).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * scale(w, &p, &p), "{} {}", a, b);
    }

    #[test]
    fn repeated_point_gives_null_product(
        wi in 0usize..5,
        pts in prop::collection::vec(pt(), 6),
        k in 0usize..3,
        l in 0usize..3,
    ) {
        prop_assume!(k != l);
        let w = &worlds()[wi];
        let mut pp = pts[..3].to_vec();
        pp[l] = pp[k].clone();
        let p = Multivector::new(pp).unwrap();
        let q = Multivector::new(pts[3..].to_vec()).unwrap();
        let z = multivector_product(w, &p, &q).unwrap();
        prop_assert!(z.abs() <= 1e-12 * scale(w, &p, &q).max(1.0), "{}", z);
    }

    #[test]
    fn spec_json_round_trip(alpha in -1.0f64..1.0, beta in 0.0f64..2.0, b in prop::array::uniform4(-1.0f64..1.0)) {
        let spec = WorldSpec::case2(&MINK, &b, alpha, beta);
        prop_assert_eq!(WorldSpec::from_json(&spec.to_json()).unwrap(), spec);
    }
}
