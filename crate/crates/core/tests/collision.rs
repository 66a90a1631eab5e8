use std::f64::consts::{PI, TAU};
use std::sync::{Arc, OnceLock};

use nalgebra::{DVector, Rotation3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpb_core::collision::{assemble_l, assemble_l_cached, nu_hard_sphere, Backend, CollisionOperator};
use vpb_core::quadrature::gauss_legendre;
use vpb_core::velocity_space::build_basis;
use vpb_core::VpbError;

fn hard_sphere() -> &'static CollisionOperator {
    static OP: OnceLock<CollisionOperator> = OnceLock::new();
    OP.get_or_init(|| assemble_l(Arc::new(build_basis(4, 12).unwrap()), Backend::HardSphere).unwrap())
}

/// `∫_{S²} |u·ω| dω` by Gauss–Legendre in `cos θ` split at the equator of `u` and
/// the trapezoid rule in the azimuth.
fn sphere_abs_projection(u: [f64; 3]) -> f64 {
    let r = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let gl = gauss_legendre::<f64>(8).unwrap();
    let nphi = 16;
    let mut acc = 0.0;
    for half in [-1.0, 1.0] {
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let c = 0.5 * (x + half);
            for _ in 0..nphi {
                acc += 0.5 * w * (TAU / nphi as f64) * (r * c).abs();
            }
        }
    }
    acc
}

/// `ν(v) = ∫∫ |(v−v_*)·ω| M(v_*) dω dv_*` by brute-force product quadrature in
/// spherical coordinates centred at `v`.
fn nu_oracle(v: [f64; 3]) -> f64 {
    let a = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let gl = gauss_legendre::<f64>(32).unwrap();
    let nphi = 48;
    let (rmax, pieces) = (a + 14.0, 28);
    let h = rmax / pieces as f64;
    let mut total = 0.0;
    for p in 0..pieces {
        for (xr, wr) in gl.nodes.iter().zip(&gl.weights) {
            let rho = h * (p as f64 + 0.5 * (xr + 1.0));
            for (xc, wc) in gl.nodes.iter().zip(&gl.weights) {
                for k in 0..nphi {
                    let phi = TAU * k as f64 / nphi as f64;
                    let st = (1.0 - xc * xc).sqrt();
                    let d = [st * phi.cos(), st * phi.sin(), *xc];
                    let vs = [v[0] + rho * d[0], v[1] + rho * d[1], v[2] + rho * d[2]];
                    let m = (-0.5 * (vs[0] * vs[0] + vs[1] * vs[1] + vs[2] * vs[2])).exp() / TAU.powf(1.5);
                    // |v − v_*| = ρ, so the ω-integral is 2πρ
                    total += 0.5 * h * wr * wc * (TAU / nphi as f64) * rho * rho * m * 2.0 * PI * rho;
                }
            }
        }
    }
    total
}

#[test]
fn sphere_factor_is_two_pi() {
    for u in [[1.0f64, 0.0, 0.0], [0.0, 0.0, 2.5]] {
        let r = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        assert!((sphere_abs_projection(u) - TAU * r).abs() < 1e-12);
    }
}

#[test]
fn collision_frequency_matches_quadrature_oracle() {
    for v in [[0.0, 0.0, 0.0], [0.7, 0.0, 0.0], [1.0, -2.0, 0.5], [0.0, 3.0, 0.0]] {
        let (got, want) = (nu_hard_sphere(v), nu_oracle(v));
        assert!((got - want).abs() < 1e-8 * want, "v = {v:?}: {got} vs {want}");
    }
    // E|X| = 2√(2/π) for a standard normal vector
    assert!((nu_hard_sphere([0.0; 3]) - 4.0 * (TAU).sqrt()).abs() < 1e-10);
}

#[test]
fn collision_frequency_grows_linearly_and_is_isotropic() {
    let nu = |a: f64| nu_hard_sphere([a, 0.0, 0.0]);
    let slope = (nu(100.0) / nu(50.0)).ln() / 2f64.ln();
    assert!((slope - 1.0).abs() < 1e-3, "slope {slope}");
    assert!((nu(200.0) / 200.0 / TAU - 1.0).abs() < 1e-4);
    let r = Rotation3::from_euler_angles(0.4, -1.2, 2.0);
    let v = nalgebra::Vector3::new(0.3, 1.7, -0.9);
    let w = r * v;
    assert!((nu_hard_sphere([v.x, v.y, v.z]) - nu_hard_sphere([w.x, w.y, w.z])).abs() < 1e-12);
}

#[test]
fn collision_frequency_bounds_at_random_nodes() {
    let op = hard_sphere();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..1000 {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-6.0..6.0));
        let a = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let ratio = nu_hard_sphere(v) / (1.0 + a);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    assert!(lo > 0.0 && hi < f64::INFINITY);
    // the ratio never exceeds its value at the origin
    assert!(hi <= op.nu_at_zero * (1.0 + 1e-12));
    // the minimum sits near |v| = 1+√2, well inside the node cloud, so the fitted
    // lower constant is sharp; the upper one is only sampled away from the origin
    assert!(lo >= op.nu0 * (1.0 - 1e-4), "{lo} vs {}", op.nu0);
    assert!(op.nu1 <= op.nu_at_zero);
}

#[test]
fn hard_sphere_structure() {
    let op = hard_sphere();
    let lnorm = op.l_matrix.norm();
    assert!(op.symmetry_residual() <= 1e-10);
    let sv = op.singular_values();
    assert!(sv[..5].iter().all(|x| *x <= 1e-8 * lnorm));
    assert!(sv[5] > 1e-2 * lnorm);
    assert!(op.spectrum().iter().all(|e| *e <= 1e-10 * lnorm));
    assert!(op.null_residual() <= 1e-10 * lnorm);
    assert!(op.mu_estimate > 0.0);
    assert!(op.nu_at_zero >= op.nu0);
}

#[test]
fn synthetic_backend_is_bgk_like() {
    let b = Arc::new(build_basis(2, 8).unwrap());
    let op = assemble_l(b.clone(), Backend::Synthetic { nu_bar: 1.5 }).unwrap();
    assert!((&op.l_matrix + b.p1() * 1.5).amax() < 1e-15);
    assert!((op.mu_estimate - 1.5).abs() < 1e-12);
    let sv = op.singular_values();
    assert!(sv[..5].iter().all(|x| *x < 1e-14) && (sv[5] - 1.5).abs() < 1e-12);
    let f = DVector::from_element(b.dim, 0.1);
    assert!(matches!(op.apply_gamma(&f, &f), Err(VpbError::Backend { .. })));
}

#[test]
fn hard_potential_backend() {
    let b = Arc::new(build_basis(2, 8).unwrap());
    let op = assemble_l(b, Backend::HardPotential { gamma: 0.5, c: 1.0 }).unwrap();
    assert!(op.symmetry_residual() < 1e-10 && op.mu_estimate > 0.0);
    let sv = op.singular_values();
    assert!(sv[..5].iter().all(|x| *x <= 1e-8 * op.l_matrix.norm()));
    let b = Arc::new(build_basis(2, 8).unwrap());
    assert!(assemble_l(b, Backend::HardPotential { gamma: 1.0, c: 1.0 }).is_err());
}

#[test]
fn linv_examples() {
    let op = hard_sphere();
    let b = &op.basis;
    let zero = DVector::zeros(b.dim);
    assert_eq!(op.solve_linv(&zero).unwrap(), zero);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = b.micro_part(&DVector::from_fn(b.dim, |_, _| rng.gen_range(-1.0..1.0)));
    let u = op.solve_linv(&(&op.l_matrix * &h)).unwrap();
    assert!((u - &h).norm() < 1e-10 * h.norm());
    assert!(matches!(op.solve_linv(&b.chi[0]), Err(VpbError::NotMicroscopic(_))));
    let t = b.mult(0) * &b.chi[2];
    let u = op.solve_linv(&b.micro_part(&t)).unwrap();
    assert!(u.dot(&t) < 0.0);
}

#[test]
fn gamma_of_maxwellian_vanishes() {
    let op = hard_sphere();
    let c0 = &op.basis.chi[0];
    assert!(op.apply_gamma(c0, c0).unwrap().norm() < 1e-12);
}

/// `(residual at the exact rule, residual at the finest rule that does not resolve the pair)`.
/// The exact degree is a safe bound; the rules resolve the pairs below it.
fn gamma_identity(op: &CollisionOperator, f: &DVector<f64>, g: &DVector<f64>, target: &DVector<f64>) -> (f64, f64) {
    let form = op.gamma_form().unwrap();
    let want = -(&op.l_matrix * op.basis.micro_part(target)) * 0.5;
    let exact = form.exact_degree(f, g);
    let res = |d: usize| (form.apply_with_degree(f, g, d).unwrap() - &want).norm();
    let fine = res(exact);
    let coarse = (1..exact).rev().map(res).find(|r| *r > 1e-8).expect("every rule resolves the pair");
    (fine, coarse)
}

#[test]
fn gamma_identities_with_refinement() {
    let op = hard_sphere();
    let b = &op.basis;
    let c0 = &b.chi[0];
    let r2 = b.mult(0) * (b.mult(0) * c0) + b.mult(1) * (b.mult(1) * c0) + b.mult(2) * (b.mult(2) * c0);
    for (i, j) in [(0, 0), (0, 1), (1, 2)] {
        let f = b.mult(i) * c0;
        let g = b.mult(j) * c0;
        let (fine, coarse) = gamma_identity(op, &f, &g, &(b.mult(i) * &g));
        assert!(fine < 1e-10 && fine < coarse, "v{i}v{j}: {fine:e} vs {coarse:e}");
    }
    let f = b.mult(1) * c0;
    let (fine, coarse) = gamma_identity(op, &f, &r2, &(b.mult(1) * &r2));
    assert!(fine < 1e-10 && fine < coarse, "v|v|²: {fine:e} vs {coarse:e}");
    let r4 = b.mult(0) * (b.mult(0) * &r2) + b.mult(1) * (b.mult(1) * &r2) + b.mult(2) * (b.mult(2) * &r2);
    let (fine, coarse) = gamma_identity(op, &r2, &r2, &r4);
    assert!(fine < 1e-10 && fine < coarse, "|v|⁴: {fine:e} vs {coarse:e}");
}

#[test]
fn cached_assembly_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let b = Arc::new(build_basis(2, 8).unwrap());
    let (a, first) = assemble_l_cached(b.clone(), Backend::HardSphere, Some(dir.path())).unwrap();
    let (c, second) = assemble_l_cached(b, Backend::HardSphere, Some(dir.path())).unwrap();
    assert_ne!(first, second);
    assert_eq!(a.l_matrix, c.l_matrix);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn gamma_lands_in_the_micro_space(x in prop::collection::vec(-1.0f64..1.0, 20)) {
        let op = hard_sphere();
        let b = &op.basis;
        // low-degree inputs keep the rule small
        let mut f = DVector::zeros(b.dim);
        let mut g = DVector::zeros(b.dim);
        for k in 0..10 {
            f[k] = x[k];
            g[k] = x[10 + k];
        }
        let out = op.apply_gamma(&f, &g).unwrap();
        prop_assert!(b.macro_part(&out).norm() <= 1e-10 * (1.0 + out.norm()));
    }
}
