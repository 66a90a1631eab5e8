//! Viscosity and heat-conduction coefficients of the fluid limit, with
//! cross-checks against the dispersion branches.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::collision::{assemble_l_cached, Backend, CollisionOperator};
use crate::dispersion::asymptotics::{b_coeff, LinearResponse};
use crate::dispersion::resolvent::{linv_entry, Resolvent};
use crate::dispersion::roots::{solve_d0, solve_d1};
use crate::dispersion::Regime;
use crate::error::{Result, VpbError};
use crate::velocity_space::build_basis;
use crate::Complex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportCoefficients {
    pub kappa0: f64,
    pub kappa1: f64,
    /// `−(L⁻¹P₁(v₁χ₁), v₁χ₁)`, the longitudinal viscosity entering `b_{±1}`.
    pub kappa11: f64,
    pub backend: Backend,
    pub max_degree: usize,
    pub quad_order: usize,
    pub basis_hash: String,
    /// `max(|Δκ₀|, |Δκ₁|)` against a second truncation level, when measured.
    pub error_bar: Option<f64>,
    pub reference_degree: Option<usize>,
}

fn kappas_unchecked(op: &CollisionOperator) -> Result<TransportCoefficients> {
    let r = LinearResponse::from_operator(op)?;
    let t = TransportCoefficients {
        kappa0: r.kappa0(),
        kappa1: r.kappa1(),
        kappa11: r.kappa11(),
        backend: op.backend,
        max_degree: op.basis.max_degree,
        quad_order: op.basis.quad_order,
        basis_hash: op.basis.descriptor().hash(),
        error_bar: None,
        reference_degree: None,
    };
    if !(t.kappa0 > 0.0 && t.kappa1 > 0.0) {
        return Err(VpbError::Solve(format!(
            "transport coefficients not positive: kappa0 = {}, kappa1 = {} (degree {} too low?)",
            t.kappa0, t.kappa1, t.max_degree
        )));
    }
    Ok(t)
}

/// `κ₀`, `κ₁` of a genuine collision kernel.
pub fn compute_kappas(op: &CollisionOperator) -> Result<TransportCoefficients> {
    if !op.backend.is_genuine() {
        return Err(VpbError::Backend {
            backend: op.backend.name().into(),
            what: "transport coefficients".into(),
        });
    }
    kappas_unchecked(op)
}

/// Same as [`compute_kappas`] without the backend restriction; for testing the
/// synthetic operator, where `κ₀ = ‖P₁(v₁χ₂)‖²/ν̄`.
pub fn compute_kappas_forced(op: &CollisionOperator) -> Result<TransportCoefficients> {
    kappas_unchecked(op)
}

/// Two-level truncation study: coefficients at `max_degree` with the error bar
/// taken from the disagreement with `max_degree + 2`.
pub fn with_error_bar(op: &CollisionOperator, cache_dir: Option<&Path>) -> Result<TransportCoefficients> {
    let mut t = compute_kappas(op)?;
    let n2 = op.basis.max_degree + 2;
    let fine = build_basis(n2, crate::velocity_space::default_quad_order(n2))?;
    let (op2, _) = assemble_l_cached(Arc::new(fine), op.backend, cache_dir)?;
    let t2 = compute_kappas(&op2)?;
    t.error_bar = Some((t.kappa0 - t2.kappa0).abs().max((t.kappa1 - t2.kappa1).abs()));
    t.reference_degree = Some(n2);
    Ok(t)
}

/// `(L⁻¹P₁(v₁χ₂), v₁χ₂) − (L⁻¹P₁(v₂χ₁), v₂χ₁)`.
pub fn isotropy_residual(op: &CollisionOperator) -> Result<f64> {
    let basis = &op.basis;
    let a = linv_entry(op, 2, 2)?;
    let v2 = basis.mult(1);
    let src = basis.micro_part(&(v2 * &basis.chi[1]));
    let u = op.solve_linv(&src)?;
    let b = u.dot(&(v2 * &basis.chi[1]));
    Ok((a - b).abs())
}

/// `κ₀ + R₂₂(0, 0)`, the resolvent route to the same number.
pub fn resolvent_consistency(op: &CollisionOperator) -> Result<f64> {
    let k = compute_kappas_forced(op)?.kappa0;
    let r = Resolvent::new(op).entry(2, 2, Complex::new(0.0, 0.0), 0.0)?;
    Ok((k + r.re).abs().max(r.im.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct B2Row {
    pub s: f64,
    /// Second-order coefficients extracted from the computed roots.
    pub b2_fit: f64,
    pub b0_fit: f64,
    pub b1_fit: f64,
    /// Closed forms.
    pub b2_formula: f64,
    pub b0_formula: f64,
    pub b1_formula: f64,
}

impl B2Row {
    pub fn rel_err_b2(&self) -> f64 {
        ((self.b2_fit - self.b2_formula) / self.b2_formula).abs()
    }

    pub fn rel_err_b0(&self) -> f64 {
        ((self.b0_fit - self.b0_formula) / self.b0_formula).abs()
    }

    pub fn rel_err_b1(&self) -> f64 {
        ((self.b1_fit - self.b1_formula) / self.b1_formula).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct B2Report {
    pub eps: f64,
    pub rows: Vec<B2Row>,
    pub kappa0: f64,
    pub max_rel_err_b2: f64,
    pub max_rel_err_b0: f64,
    /// Spread of `b₂(s)/s²` over the grid relative to its mean.
    pub b2_flatness: f64,
}

/// Polynomial extrapolation to `h = 0` through `(h_k, y_k)` (Neville).
fn extrapolate_to_zero(h: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let n = h.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (h[i + m] * p[i] - h[i] * p[i + 1]) / (h[i + m] - h[i]);
        }
    }
    p[0]
}

/// Extracts `b_j(s) = −lim Re λ_j / ε²` from roots at `ε, ε/2, ε/4, ε/8` and compares
/// with the closed forms. At `s = 0` every coefficient vanishes and the row is skipped.
pub fn crosscheck_b2(op: &CollisionOperator, s_grid: &[f64], eps: f64) -> Result<B2Report> {
    let res = Resolvent::new(op);
    let r = LinearResponse::from_operator(op)?;
    let regime = Regime::default();
    let hs: Vec<f64> = (0..4).map(|k| eps / f64::powi(2.0, k)).collect();
    let mut rows = Vec::new();
    for &s in s_grid.iter().filter(|s| **s > 0.0) {
        let mut q2 = Vec::new();
        let mut q0 = Vec::new();
        let mut q1 = Vec::new();
        for &e in &hs {
            let tr = solve_d0(&res, s, e, &regime)?;
            let long = solve_d1(&res, s, e, &regime, &r)?;
            q2.push(-tr.z.re / (e * e));
            q0.push(-(long[1].z * e).re / (e * e));
            q1.push(-(long[2].z * e).re / (e * e));
        }
        rows.push(B2Row {
            s,
            b2_fit: extrapolate_to_zero(&hs, &q2),
            b0_fit: extrapolate_to_zero(&hs, &q0),
            b1_fit: extrapolate_to_zero(&hs, &q1),
            b2_formula: b_coeff(2, s, &r),
            b0_formula: b_coeff(0, s, &r),
            b1_formula: b_coeff(1, s, &r),
        });
    }
    if rows.is_empty() {
        return Err(VpbError::InvalidArgument("s-grid has no positive entry".into()));
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.b2_fit / (r.s * r.s)).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = ratios.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    Ok(B2Report {
        eps,
        kappa0: r.kappa0(),
        max_rel_err_b2: rows.iter().map(B2Row::rel_err_b2).fold(0.0, f64::max),
        max_rel_err_b0: rows.iter().map(B2Row::rel_err_b0).fold(0.0, f64::max),
        b2_flatness: spread / mean.abs(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::assemble_l;

    fn synthetic(nu: f64) -> CollisionOperator {
        let b = Arc::new(build_basis(4, 12).unwrap());
        assemble_l(b, Backend::Synthetic { nu_bar: nu }).unwrap()
    }

    #[test]
    fn synthetic_kappa_is_explicit_inversion() {
        let op = synthetic(2.5);
        assert!(compute_kappas(&op).is_err());
        let t = compute_kappas_forced(&op).unwrap();
        let b = &op.basis;
        let p = b.micro_part(&(b.mult(0) * &b.chi[2]));
        assert!((t.kappa0 - p.norm_squared() / 2.5).abs() < 1e-14);
        let p4 = b.micro_part(&(b.mult(0) * &b.chi[4]));
        assert!((t.kappa1 - p4.norm_squared() / 2.5).abs() < 1e-14);
    }

    #[test]
    fn neville_recovers_polynomials() {
        let h = [0.4, 0.2, 0.1, 0.05];
        let y: Vec<f64> = h.iter().map(|x| 3.0 - 2.0 * x + 0.5 * x * x * x).collect();
        assert!((extrapolate_to_zero(&h, &y) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_b2_crosscheck() {
        let op = synthetic(10.0);
        let rep = crosscheck_b2(&op, &[0.2, 0.5, 0.8, 1.5], 0.1).unwrap();
        assert!(rep.max_rel_err_b2 < 1e-3, "{rep:?}");
        assert!(rep.max_rel_err_b0 < 1e-3, "{rep:?}");
        assert!(rep.b2_flatness < 1e-6, "{rep:?}");
        assert!(isotropy_residual(&op).unwrap() < 1e-12);
        assert!(resolvent_consistency(&op).unwrap() < 1e-10);
    }
}
