use std::sync::OnceLock;

use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use vpb_core::velocity_space::{build_basis, weighted_inner_unchecked, MacroState, VelocityBasis};

fn basis() -> &'static VelocityBasis {
    static B: OnceLock<VelocityBasis> = OnceLock::new();
    B.get_or_init(|| build_basis(4, 12).unwrap())
}

fn cvec(re: &[f64], im: &[f64]) -> DVector<Complex64> {
    DVector::from_iterator(re.len(), re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)))
}

#[test]
fn degree_six_basis_is_orthonormal() {
    let b = build_basis(6, 16).unwrap();
    assert_eq!(b.dim, 84);
    assert!(b.gram_error < 1e-10);
    for (k, idx) in b.invariant_indices.iter().enumerate() {
        assert!(!idx.is_empty(), "invariant {k} has no basis index");
    }
}

#[test]
fn reconstruction_lies_in_null_space() {
    let b = basis();
    let m = MacroState::new(0.7f64, [0.1, -0.4, 0.9], -1.3);
    let f = b.reconstruct(&m);
    assert!(b.micro_part(&f).norm() < 1e-14);
    let back = b.project_macro(&f);
    assert!((back.n - m.n).abs() < 1e-14 && (back.q - m.q).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_sandwich(re in prop::collection::vec(-1.0f64..1.0, 35),
                       im in prop::collection::vec(-1.0f64..1.0, 35),
                       s in 0.05f64..10.0) {
        let f = cvec(&re, &im);
        let plain = f.norm_squared();
        let w = weighted_inner_unchecked(&f, &f, s).re;
        prop_assert!(plain <= w * (1.0 + 1e-14));
        prop_assert!(w <= (1.0 + 1.0 / (s * s)) * plain * (1.0 + 1e-14));
    }

    #[test]
    fn macro_round_trip_is_idempotent(x in prop::collection::vec(-2.0f64..2.0, 35)) {
        let b = basis();
        let f = DVector::from_vec(x);
        let m1 = b.project_macro(&f);
        let m2 = b.project_macro(&b.reconstruct(&m1));
        prop_assert!((m1.n - m2.n).abs() < 1e-12);
        prop_assert!((m1.q - m2.q).abs() < 1e-12);
        for k in 0..3 {
            prop_assert!((m1.m[k] - m2.m[k]).abs() < 1e-12);
        }
        let split = b.macro_part(&f) + b.micro_part(&f) - &f;
        prop_assert!(split.amax() < 1e-13);
    }

    #[test]
    fn weighted_inner_is_hermitian(a in prop::collection::vec(-1.0f64..1.0, 70),
                                   c in prop::collection::vec(-1.0f64..1.0, 70),
                                   s in 0.1f64..5.0) {
        let f = cvec(&a[..35], &a[35..]);
        let g = cvec(&c[..35], &c[35..]);
        let fg = weighted_inner_unchecked(&f, &g, s);
        let gf = weighted_inner_unchecked(&g, &f, s);
        prop_assert!((fg - gf.conj()).norm() < 1e-12);
    }
}
