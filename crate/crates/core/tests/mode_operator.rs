use std::sync::{Arc, OnceLock};

use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use vpb_core::collision::{assemble_l, Backend, CollisionOperator};
use vpb_core::linalg::{eigenvalues, to_complex, to_complex_mat};
use vpb_core::mode_operator::{assemble_b, b_matrix_raw, reduce_to_1d};
use vpb_core::velocity_space::build_basis;

fn hard_sphere() -> &'static Arc<CollisionOperator> {
    static OP: OnceLock<Arc<CollisionOperator>> = OnceLock::new();
    OP.get_or_init(|| Arc::new(assemble_l(Arc::new(build_basis(4, 12).unwrap()), Backend::HardSphere).unwrap()))
}

/// Largest distance from a point of `a` to the nearest point of `b`.
fn spectral_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .map(|x| b.iter().map(|y| (x - y).norm() / (1.0 + x.norm())).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

#[test]
fn zero_knudsen_gives_the_collision_matrix() {
    let op = hard_sphere();
    let b = b_matrix_raw(op, [0.3, -0.2, 0.7], 0.0);
    assert_eq!(b, to_complex_mat(&op.l_matrix));
}

#[test]
fn density_column() {
    let op = hard_sphere();
    let (xi, eps) = ([0.0, 0.5, 0.0], 0.2);
    let m = assemble_b(op, xi, eps).unwrap();
    let mut e0 = DVector::zeros(m.dim());
    e0[0] = Complex64::new(1.0, 0.0);
    // L annihilates χ₀; the field term adds 1/|ξ|² to the streaming of the density
    let want = to_complex(&(op.basis.mult_dir(xi) * &op.basis.chi[0])) * Complex64::new(0.0, -eps * (1.0 + 4.0));
    assert!((m.apply(&e0) - want).norm() < 1e-12);
}

#[test]
fn knudsen_range_is_enforced() {
    let op = hard_sphere();
    for eps in [0.0, 1.0, -0.1, f64::NAN] {
        let e = assemble_b(op, [1.0, 0.0, 0.0], eps).unwrap_err();
        assert!(e.to_string().contains("(0,1)"));
    }
    assert!(assemble_b(op, [0.0; 3], 0.5).is_err());
}

#[test]
fn adjoint_reverses_the_wave_vector() {
    let op = hard_sphere();
    let xi = [0.4, 0.1, -0.8];
    let m = assemble_b(op, xi, 0.3).unwrap();
    let back = b_matrix_raw(op, [-0.4, -0.1, 0.8], 0.3);
    assert!((m.adjoint() - back).norm() < 1e-10 * m.b_matrix.norm());
}

#[test]
fn rotation_preserves_the_spectrum() {
    let op = hard_sphere();
    let m = assemble_b(op, [0.3, 0.6, -0.2], 0.4).unwrap();
    let c = m.canonical();
    assert!(c.is_canonical() && !m.is_canonical());
    let p = to_complex_mat(&m.pushforward());
    let res = (&m.b_matrix * &p - &p * &c.b_matrix).norm();
    assert!(res < 1e-10 * m.b_matrix.norm(), "pushforward residual {res:e}");
    let (a, b) = (eigenvalues(&m.b_matrix).unwrap(), eigenvalues(&c.b_matrix).unwrap());
    assert!(spectral_distance(&a, &b).max(spectral_distance(&b, &a)) < 1e-8);
}

#[test]
fn reduction_is_a_proper_rotation() {
    for xi in [[1.0, 0.0, 0.0], [-2.0, 0.0, 0.0], [0.1, 0.2, 0.3]] {
        let (s, o) = reduce_to_1d(xi).unwrap();
        let img = o * nalgebra::Vector3::from(xi) / s;
        assert!((img - nalgebra::Vector3::x()).norm() < 1e-14);
        assert!((o.determinant() - 1.0).abs() < 1e-13);
    }
}

#[test]
fn numerical_abscissa_is_nonpositive() {
    let op = hard_sphere();
    for (xi, eps) in [([0.05, 0.0, 0.0], 0.9), ([1.0, 1.0, 0.0], 0.5), ([0.0, 0.0, 6.0], 0.1)] {
        let m = assemble_b(op, xi, eps).unwrap();
        assert!(m.numerical_abscissa() <= 1e-10 * m.b_matrix.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mode_operator_is_dissipative(re in prop::collection::vec(-1.0f64..1.0, 35),
                                    im in prop::collection::vec(-1.0f64..1.0, 35),
                                    xi in prop::array::uniform3(-3.0f64..3.0),
                                    eps in 0.01f64..0.99) {
        prop_assume!(xi.iter().map(|x| x * x).sum::<f64>() > 1e-4);
        let m = assemble_b(hard_sphere(), xi, eps).unwrap();
        let f = DVector::from_iterator(35, re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)));
        let q = m.inner(&m.apply(&f), &f).re;
        prop_assert!(q <= 1e-10 * m.b_matrix.norm() * m.inner(&f, &f).re);
    }

    #[test]
    fn metric_norm_bounds(re in prop::collection::vec(-1.0f64..1.0, 35), s in 0.05f64..5.0) {
        let m = assemble_b(hard_sphere(), [0.0, s, 0.0], 0.5).unwrap();
        let f = DVector::from_iterator(35, re.iter().map(|a| Complex64::new(*a, 0.0)));
        let n = m.norm(&f);
        prop_assert!(f.norm() <= n * (1.0 + 1e-14));
        prop_assert!(n <= (1.0 + 1.0 / (s * s)).sqrt() * f.norm() * (1.0 + 1e-14));
    }
}
