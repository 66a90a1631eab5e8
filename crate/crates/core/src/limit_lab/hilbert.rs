//! Formal ε-expansion `f = f₀ + εf₁ + …` checked on the discretization.
//!
//! With `A = −i V_ξ G` the transport part of `B_ε = L + εA`, the first corrector is
//! `P₁f₁ = L⁻¹P₁(A f₀) − L⁻¹Γ(f₀, f₀)`, and the `ε⁰` moment equations pick up
//! `P₀ A P₁f₁`. The linear part must reproduce `−κ₀|ξ|²` on transverse momentum
//! and `−κ₁|ξ|²` on the temperature; the quadratic part must give the momentum
//! flux `m⊗m − |m|²I/3` and the heat flux `(5/3) q m`.

use std::sync::Arc;

use nalgebra::Vector3;
use serde::Serialize;

use super::data::{constraint_residuals, InitialData};
use crate::collision::CollisionOperator;
use crate::dispersion::asymptotics::LinearResponse;
use crate::error::{Result, VpbError};
use crate::linalg::to_complex;
use crate::mode_operator::assemble_b;
use crate::velocity_space::{bilinear, MacroState};
use crate::{CVec, Complex, RVec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HilbertReport {
    pub kappa0: f64,
    pub kappa1: f64,
    /// Largest relative deviation of the extracted diffusion coefficients over the grid.
    pub kappa0_rel_err: f64,
    pub kappa1_rel_err: f64,
    /// Coefficient of `m⊗m − |m|²I/3` in the traceless momentum flux, and the misfit.
    pub momentum_convection: Option<f64>,
    pub momentum_misfit: Option<f64>,
    /// Coefficient of `q m` in the heat flux, and the misfit.
    pub energy_convection: Option<f64>,
    pub energy_misfit: Option<f64>,
    /// Largest `|ξ̂·m̂₀|` and `|n̂₀ + n̂₀/|ξ|² + √(2/3)q̂₀|` of the data, relative to `‖f̂₀‖`.
    pub divergence_residual: f64,
    pub boussinesq_residual: f64,
    /// The quadratic terms are evaluated at one velocity-space triple; the
    /// x-convolutions they stand for are not formed.
    pub convolution_truncated: bool,
}

/// `(A L⁻¹P₁ A f, f) / (|ξ|² (f, f))` at the wave vector `xi`, with `A = (B_ε − L)/ε`.
fn extracted_coefficient(op: &Arc<CollisionOperator>, xi: [f64; 3], f: &CVec) -> Result<f64> {
    let eps = 0.5;
    let mode = assemble_b(op, xi, eps)?;
    let lc = crate::linalg::to_complex_mat(&op.l_matrix);
    let a = (&mode.b_matrix - lc) / Complex::new(eps, 0.0);
    let af = &a * f;
    let micro = op.basis.micro_part(&af);
    let u = op.solve_linv_c(&micro)?;
    let c = bilinear(&(&a * u), f, mode.s) / bilinear(f, f, mode.s);
    Ok(c.re / (mode.s * mode.s))
}

fn unit(v: [f64; 3]) -> Result<Vector3<f64>> {
    let v = Vector3::from(v);
    let n = v.norm();
    if !(n > 0.0) {
        return Err(VpbError::InvalidArgument("direction must be nonzero".into()));
    }
    Ok(v / n)
}

/// `(traceless momentum flux coefficient, misfit, heat flux coefficient, misfit)` of
/// `−L⁻¹P₁Γ(f₀, f₀)` for `f₀ = m·vχ₀ + qχ₄`.
fn convective_coefficients(op: &CollisionOperator, m: [f64; 3], q: f64) -> Result<(f64, f64, f64, f64)> {
    let basis = &op.basis;
    let f0: RVec = basis.reconstruct(&MacroState::new(0.0, m, q));
    let gam = op.apply_gamma(&f0, &f0)?;
    let g = -op.solve_linv(&basis.micro_part(&gam))?;
    let chi0 = &basis.chi[0];
    let mut pi = [[0.0; 3]; 3];
    for k in 0..3 {
        for l in 0..3 {
            pi[k][l] = (basis.mult(k) * (basis.mult(l) * chi0)).dot(&g);
        }
    }
    let tr = (pi[0][0] + pi[1][1] + pi[2][2]) / 3.0;
    let m2 = m.iter().map(|x| x * x).sum::<f64>();
    let (mut num, mut den, mut res) = (0.0, 0.0, 0.0);
    let target = |k: usize, l: usize| m[k] * m[l] - if k == l { m2 / 3.0 } else { 0.0 };
    for k in 0..3 {
        for l in 0..3 {
            let p = pi[k][l] - if k == l { tr } else { 0.0 };
            num += p * target(k, l);
            den += target(k, l) * target(k, l);
        }
    }
    let c_mom = num / den;
    for k in 0..3 {
        for l in 0..3 {
            let p = pi[k][l] - if k == l { tr } else { 0.0 };
            res += (p - c_mom * target(k, l)).powi(2);
        }
    }
    let mom_misfit = (res / den).sqrt();
    let flux: Vec<f64> = (0..3).map(|k| (basis.mult(k) * &basis.chi[4]).dot(&g)).collect();
    let qm: Vec<f64> = m.iter().map(|x| q * x).collect();
    let qq = qm.iter().map(|x| x * x).sum::<f64>();
    let c_en = flux.iter().zip(&qm).map(|(a, b)| a * b).sum::<f64>() / qq;
    let en_misfit = (flux.iter().zip(&qm).map(|(a, b)| (a - c_en * b).powi(2)).sum::<f64>() / qq).sqrt();
    Ok((c_mom, mom_misfit, c_en, en_misfit))
}

/// Runs the expansion check over the grid of `data`, with wave vectors along `direction`.
pub fn hilbert_expansion_check(
    op: &Arc<CollisionOperator>,
    data: &InitialData,
    direction: [f64; 3],
) -> Result<HilbertReport> {
    let basis = &op.basis;
    let r = LinearResponse::from_operator(op)?;
    let (k0, k1) = (r.kappa0(), r.kappa1());
    let e = unit(direction)?;
    // a unit vector orthogonal to ξ̂
    let helper = if e.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let perp = (helper - e * e.dot(&helper)).normalize();
    let shear: RVec = basis.reconstruct(&MacroState::new(0.0, [perp.x, perp.y, perp.z], 0.0));
    let shear = to_complex(&shear);
    let heat = to_complex(&basis.chi[4]);
    let mut e0: f64 = 0.0;
    let mut e1: f64 = 0.0;
    for &s in &data.grid.points {
        let xi = [s * e.x, s * e.y, s * e.z];
        e0 = e0.max((extracted_coefficient(op, xi, &shear)? / k0 - 1.0).abs());
        e1 = e1.max((extracted_coefficient(op, xi, &heat)? / k1 - 1.0).abs());
    }
    let mut div: f64 = 0.0;
    let mut bous: f64 = 0.0;
    for ((m, f), &s) in data.macro_profile.iter().zip(&data.profile).zip(&data.grid.points) {
        let (d, b) = constraint_residuals(m, s);
        let scale = f.norm().max(f64::MIN_POSITIVE);
        div = div.max(d / scale);
        bous = bous.max(b / scale);
    }
    let conv = if op.gamma_form().is_ok() {
        Some(convective_coefficients(op, [0.3, -0.5, 0.4], 0.7)?)
    } else {
        None
    };
    Ok(HilbertReport {
        kappa0: k0,
        kappa1: k1,
        kappa0_rel_err: e0,
        kappa1_rel_err: e1,
        momentum_convection: conv.map(|c| c.0),
        momentum_misfit: conv.map(|c| c.1),
        energy_convection: conv.map(|c| c.2),
        energy_misfit: conv.map(|c| c.3),
        divergence_residual: div,
        boussinesq_residual: bous,
        convolution_truncated: conv.is_some(),
    })
}
