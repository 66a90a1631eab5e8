use std::sync::{Arc, OnceLock};

use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use vpb_core::collision::{assemble_l, Backend, CollisionOperator};
use vpb_core::dispersion::asymptotics::{LinearResponse, BRANCHES};
use vpb_core::dispersion::roots::Regime;
use vpb_core::mode_operator::{assemble_b, ModeOperator};
use vpb_core::semigroup::fluid::{
    fluid_closed_form, fluid_semigroup_v, nspf_mode_solve, nspf_ode_oracle, compatible_initial,
};
use vpb_core::semigroup::{fit_decay, propagate_kinetic, DecayModel, PropagateOptions, Propagator, SemigroupSplit};
use vpb_core::velocity_space::{build_basis, MacroState};
use vpb_core::VpbError;

fn hard_sphere() -> &'static Arc<CollisionOperator> {
    static OP: OnceLock<Arc<CollisionOperator>> = OnceLock::new();
    OP.get_or_init(|| Arc::new(assemble_l(Arc::new(build_basis(4, 12).unwrap()), Backend::HardSphere).unwrap()))
}

fn mode() -> &'static (ModeOperator, Propagator) {
    static M: OnceLock<(ModeOperator, Propagator)> = OnceLock::new();
    M.get_or_init(|| {
        let m = assemble_b(hard_sphere(), [0.2, -0.4, 0.3], 0.3).unwrap();
        let p = Propagator::new(&m).unwrap();
        (m, p)
    })
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn cvec(re: &[f64], im: &[f64]) -> DVector<Complex64> {
    DVector::from_iterator(re.len(), re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn semigroup_property(re in prop::collection::vec(-1.0f64..1.0, 35),
                          im in prop::collection::vec(-1.0f64..1.0, 35),
                          t in 0.0f64..0.2, u in 0.0f64..0.2) {
        let (m, p) = mode();
        let f = cvec(&re, &im);
        let a = p.apply(&f, t + u).unwrap();
        let b = p.apply(&p.apply(&f, u).unwrap(), t).unwrap();
        prop_assert!(m.norm(&(a - b)) <= 1e-9 * m.norm(&f));
    }
}

#[test]
fn spectral_path_agrees_with_the_stiff_integrator() {
    let (m, _) = mode();
    let f = cvec(&[0.3; 35], &[-0.1; 35]);
    let times: Vec<f64> = (0..12).map(|k| 0.02 * k as f64).collect();
    let opts = PropagateOptions { with_oracle: true, oracle_rtol: 1e-11 };
    let tr = propagate_kinetic(m, &f, &times, opts).unwrap();
    let dev = tr.oracle_deviation.clone().unwrap();
    assert!(dev.iter().all(|d| *d < 1e-8 * tr.norm_track[0]), "{dev:?}");
    assert!(tr.contraction_violation() <= 1e-12);
    assert!(propagate_kinetic(m, &f, &[0.1, 0.05], opts).is_err());
}

#[test]
fn split_reassembles_and_tracks_branches() {
    let (m, _) = mode();
    let sp = SemigroupSplit::new(m, &Regime::default()).unwrap();
    let f = cvec(&(0..35).map(|k| (k as f64).sin()).collect::<Vec<_>>(), &[0.05; 35]);
    let t = 0.04;
    let (s1, s2) = sp.split(&f, t).unwrap();
    let full = sp.prop.apply(&f, t).unwrap();
    assert!((s1 + s2 - &full).norm() < 1e-14 * full.norm().max(1.0));
    let proj = sp.projector().unwrap();
    assert!(proj.idempotency_residual() < 1e-8);
    assert_eq!(proj.rank(1e-8), 5);
    let spec = sp.spectrum.as_ref().unwrap();
    let tau = t / (m.eps * m.eps);
    for j in BRANCHES {
        let p = spec.branch(j);
        let want = &p.psi * (p.lambda * tau).exp();
        let got = sp.prop.apply(&p.psi, t).unwrap();
        assert!(m.norm(&(got - &want)) < 1e-8, "branch {j}");
        assert!(m.norm(&(sp.s1(&p.psi, t) - &want)) < 1e-8, "branch {j}");
    }
}

#[test]
fn split_outside_the_regime_has_no_hydrodynamic_part() {
    let m = assemble_b(hard_sphere(), [0.0, 0.0, 2.0], 0.5).unwrap();
    let sp = SemigroupSplit::new(&m, &Regime::default()).unwrap();
    assert!(sp.spectrum.is_none() && sp.gap().is_none());
    let f = cvec(&[1.0; 35], &[0.0; 35]);
    assert_eq!(sp.s1(&f, 0.1).norm(), 0.0);
}

fn response() -> LinearResponse {
    LinearResponse::from_operator(hard_sphere()).unwrap()
}

#[test]
fn fluid_semigroup_matches_closed_form() {
    let r = response();
    let xi = [0.3, 0.5, -0.2];
    let u0 = MacroState::new(Complex64::new(0.4, 0.1), [c(0.2), c(-0.7), Complex64::new(0.0, 0.3)], c(-0.5));
    let times = [0.0, 0.5, 1.0, 4.0];
    let v = fluid_semigroup_v(&u0, xi, &times, &r).unwrap();
    for (st, &t) in v.states.iter().zip(&times) {
        let (cf, _) = fluid_closed_form(&u0, xi, t, &r);
        let d = (st.n_hat - cf.n_hat).norm()
            + (st.q_hat - cf.q_hat).norm()
            + (0..3).map(|k| (st.m_hat[k] - cf.m_hat[k]).norm()).sum::<f64>();
        assert!(d < 1e-13, "t = {t}: {d:e}");
        assert!(st.incompressibility_residual(xi) < 1e-14 && st.boussinesq_residual(0.3f64.hypot(0.5).hypot(0.2)) < 1e-14);
    }
    assert!(v.norm_track.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn unforced_fluid_solve_is_the_fluid_semigroup() {
    let r = response();
    let xi = [0.0, 1.2, 0.5];
    let s = 1.3f64;
    let raw = MacroState::new(c(0.3), [c(0.1), c(0.4), c(-0.2)], c(0.6));
    let init = compatible_initial(&raw, xi);
    let times: Vec<f64> = (0..21).map(|k| 0.25 * k as f64).collect();
    let zero3 = vec![[c(0.0); 3]; times.len()];
    let zero = vec![c(0.0); times.len()];
    let sol = nspf_mode_solve(&init, &zero3, &zero, xi, &times, &r).unwrap();
    let v = fluid_semigroup_v(&init, xi, &times, &r).unwrap();
    for (a, b) in sol.iter().zip(&v.states) {
        assert!((a.q_hat - b.q_hat).norm() < 1e-13 && (a.n_hat - b.n_hat).norm() < 1e-13);
        assert!((0..3).all(|k| (a.m_hat[k] - b.m_hat[k]).norm() < 1e-13));
        // density follows the temperature through the constraint
        assert!((a.n_hat + a.q_hat * ((2.0f64 / 3.0).sqrt() * s * s / (1.0 + s * s))).norm() < 1e-13);
    }
    let bad = MacroState::new(c(1.0), [c(0.0), c(1.0), c(0.0)], c(0.0));
    assert!(matches!(
        nspf_mode_solve(&bad, &zero3, &zero, xi, &times, &r),
        Err(VpbError::IncompatibleInitialData { .. })
    ));
}

#[test]
fn forced_fluid_solve_matches_the_ode_oracle() {
    let r = response();
    let xi = [0.4, -0.7, 0.9];
    let init = compatible_initial(&MacroState::new(c(0.3), [c(0.5), c(-0.1), c(0.7)], c(0.6)), xi);
    let times: Vec<f64> = (0..=20).map(|k| 0.15 * k as f64).collect();
    let h1: Vec<[Complex64; 3]> = times.iter().map(|t| [c(t.sin()), Complex64::new(0.2, *t), c(1.0)]).collect();
    let h2: Vec<Complex64> = times.iter().map(|t| Complex64::new(t.cos(), -0.3)).collect();
    let a = nspf_mode_solve(&init, &h1, &h2, xi, &times, &r).unwrap();
    let b = nspf_ode_oracle(&init, &h1, &h2, xi, &times, &r, 1e-12).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.q_hat - y.q_hat).norm() < 1e-10 && (x.n_hat - y.n_hat).norm() < 1e-10);
        assert!((0..3).all(|k| (x.m_hat[k] - y.m_hat[k]).norm() < 1e-10));
    }
}

#[test]
fn decay_fits() {
    let t: Vec<f64> = (0..40).map(|k| 0.1 * k as f64).collect();
    let v: Vec<f64> = t.iter().map(|t| 2.0 * (-3.0 * t).exp()).collect();
    let f = fit_decay(&t, &v, DecayModel::Exp, 0.0).unwrap();
    assert!((f.rate - 3.0).abs() < 1e-12 && f.r_squared > 1.0 - 1e-12);
    let p: Vec<f64> = t.iter().map(|t| (1.0 + t).powf(-0.75)).collect();
    let f = fit_decay(&t, &p, DecayModel::Poly, 0.0).unwrap();
    assert!((f.rate - 0.75).abs() < 1e-12);
    let mut bump = v.clone();
    bump[20] *= 1.5;
    assert!(fit_decay(&t, &bump, DecayModel::Exp, 0.0).is_err());
    assert!(fit_decay(&t[..5], &v[..5], DecayModel::Exp, 0.0).is_err());
}
