use std::sync::{Arc, OnceLock};

use vpb_core::collision::{assemble_l, assemble_l_cached, Backend, CollisionOperator};
use vpb_core::dispersion::resolvent::linv_entry;
use vpb_core::transport::{
    compute_kappas, compute_kappas_forced, crosscheck_b2, isotropy_residual, resolvent_consistency, with_error_bar,
    TransportCoefficients,
};
use vpb_core::velocity_space::{build_basis, default_quad_order};

fn operator(n: usize, backend: Backend) -> CollisionOperator {
    assemble_l(Arc::new(build_basis(n, default_quad_order(n)).unwrap()), backend).unwrap()
}

fn hard_sphere() -> &'static CollisionOperator {
    static OP: OnceLock<CollisionOperator> = OnceLock::new();
    OP.get_or_init(|| operator(4, Backend::HardSphere))
}

#[test]
fn hard_sphere_coefficients_are_positive_and_reproducible() {
    let a = compute_kappas(hard_sphere()).unwrap();
    assert!(a.kappa0 > 0.0 && a.kappa1 > 0.0 && a.kappa11 > 0.0);
    // the longitudinal viscosity is 4/3 of the shear viscosity by isotropy
    assert!((a.kappa11 / a.kappa0 - 4.0 / 3.0).abs() < 1e-10, "{}", a.kappa11 / a.kappa0);
    let b = compute_kappas(&operator(4, Backend::HardSphere)).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    let back: TransportCoefficients = serde_json::from_str(&json).unwrap();
    assert_eq!(a, back);
}

#[test]
fn hard_potential_coefficients_are_positive() {
    let t = compute_kappas(&operator(3, Backend::HardPotential { gamma: 0.5, c: 1.0 })).unwrap();
    assert!(t.kappa0 > 0.0 && t.kappa1 > 0.0);
}

#[test]
fn isotropy_and_resolvent_route_agree() {
    let op = hard_sphere();
    assert!(isotropy_residual(op).unwrap() < 1e-10);
    assert!(resolvent_consistency(op).unwrap() < 1e-10);
}

#[test]
fn synthetic_backend_is_refused_unless_forced() {
    let op = operator(4, Backend::Synthetic { nu_bar: 4.0 });
    assert!(compute_kappas(&op).is_err());
    let t = compute_kappas_forced(&op).unwrap();
    assert!((t.kappa0 - 0.25).abs() < 1e-14);
    assert!((t.kappa1 - 5.0 / 12.0).abs() < 1e-14);
}

#[test]
fn truncation_sequence_is_cauchy() {
    let dir = tempfile::tempdir().unwrap();
    // the shear response lives on even degrees, so refinement goes in steps of two
    let k2 = -linv_entry(&operator(2, Backend::HardSphere), 2, 2).unwrap();
    let k4 = with_error_bar(hard_sphere(), Some(dir.path())).unwrap();
    assert_eq!(k4.reference_degree, Some(6));
    let bar = k4.error_bar.unwrap();
    let (op6, _) = assemble_l_cached(Arc::new(build_basis(6, default_quad_order(6)).unwrap()), Backend::HardSphere, Some(dir.path())).unwrap();
    let k6 = compute_kappas(&op6).unwrap();
    assert!((k4.kappa0 - k6.kappa0).abs() < 0.1 * (k2 - k4.kappa0).abs());
    assert!(bar < 0.05 * k4.kappa1, "{bar:e}");
}

#[test]
fn zero_wave_number_rows_are_skipped() {
    let op = operator(4, Backend::Synthetic { nu_bar: 10.0 });
    assert!(crosscheck_b2(&op, &[0.0], 0.1).is_err());
    let rep = crosscheck_b2(&op, &[0.0, 0.5], 0.1).unwrap();
    assert_eq!(rep.rows.len(), 1);
    assert!(rep.max_rel_err_b2 < 1e-3);
}
