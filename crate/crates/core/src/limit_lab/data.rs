//! Radial initial data on the canonical frame `ξ = s e₁`.

use serde::{Deserialize, Serialize};

use super::grids::SGrid;
use crate::error::{Result, VpbError};
use crate::semigroup::fluid::compatible_initial;
use crate::velocity_space::{MacroState, VelocityBasis};
use crate::{CVec, Complex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Generic,
    WellPrepared,
}

/// What to do with a well-prepared request whose macroscopic data violate the constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompatPolicy {
    Correct,
    Reject,
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub kind: DataKind,
    pub grid: SGrid,
    /// `f̂₀(s e₁, ·)` per grid point.
    pub profile: Vec<CVec>,
    pub macro_profile: Vec<MacroState<Complex>>,
    /// Integrability exponent `p` emulated by the density tail, generic data only.
    pub p_emulated: Option<f64>,
}

fn cz(x: f64) -> Complex {
    Complex::new(x, 0.0)
}

const ZERO: Complex = Complex::new(0.0, 0.0);

fn sqrt23() -> f64 {
    (2.0f64 / 3.0).sqrt()
}

/// Well-prepared macroscopic data: transverse momentum `g(s) e₂`, `q̂ = g(s)`,
/// `n̂ = −√(2/3) s²/(1+s²) q̂`.
fn well_prepared_macro(s: f64, g: f64) -> MacroState<Complex> {
    let q = cz(g);
    MacroState::new(q * (-sqrt23() * s * s / (1.0 + s * s)), [ZERO, cz(g), ZERO], q)
}

/// Generic data: density `s g(s)`, oblique momentum, temperature and a microscopic part.
fn generic(s: f64, g: f64, basis: &VelocityBasis) -> CVec {
    let m = MacroState::new(cz(s * g), [cz(0.6 * g), cz(0.8 * g), ZERO], cz(0.5 * g));
    let mut f = basis.reconstruct(&m);
    if let Some(i) = basis.index_of([1, 1, 0]) {
        f[i] += cz(0.3 * g);
    }
    if let Some(i) = basis.index_of([3, 0, 0]) {
        f[i] += cz(0.2 * g);
    }
    f
}

pub fn make_initial_data(
    kind: DataKind,
    profile: &dyn Fn(f64) -> f64,
    grid: &SGrid,
    basis: &VelocityBasis,
) -> Result<InitialData> {
    let mut prof = Vec::with_capacity(grid.len());
    for &s in &grid.points {
        let g = profile(s);
        if !g.is_finite() {
            return Err(VpbError::InvalidArgument(format!("profile is not finite at s = {s}")));
        }
        prof.push(match kind {
            DataKind::WellPrepared => basis.reconstruct(&well_prepared_macro(s, g)),
            DataKind::Generic => generic(s, g, basis),
        });
    }
    let data = InitialData {
        kind,
        grid: grid.clone(),
        macro_profile: prof.iter().zip(&grid.points).map(|(f, s)| basis.project_macro(f).at_mode(*s)).collect(),
        profile: prof,
        // the density enters as s·g(s), so ∇Δ⁻¹n₀ has a bounded, direction-discontinuous
        // transform at the origin: every p > 1 is admissible, and p → 1 is recorded
        p_emulated: (kind == DataKind::Generic).then_some(1.0),
    };
    data.check(basis)?;
    Ok(data)
}

/// Well-prepared data from prescribed macroscopic values per grid point.
pub fn well_prepared_from_macro(
    grid: &SGrid,
    macros: &[MacroState<Complex>],
    basis: &VelocityBasis,
    policy: CompatPolicy,
) -> Result<InitialData> {
    if macros.len() != grid.len() {
        return Err(VpbError::InvalidArgument("one macroscopic state per grid point is required".into()));
    }
    let mut fixed = Vec::with_capacity(macros.len());
    for (m, &s) in macros.iter().zip(&grid.points) {
        let (div, bous) = constraint_residuals(m, s);
        let scale = [m.n, m.m[0], m.m[1], m.m[2], m.q].iter().map(|z| z.norm()).fold(0.0, f64::max);
        if div.max(bous) <= 1e-12 * scale.max(1e-300) {
            fixed.push(*m);
            continue;
        }
        match policy {
            CompatPolicy::Correct => fixed.push(compatible_initial(m, [s, 0.0, 0.0])),
            CompatPolicy::Reject => {
                let fix = compatible_initial(m, [s, 0.0, 0.0]);
                return Err(VpbError::IncompatibleInitialData {
                    n_suggested: fix.n.re,
                    n_im: fix.n.im,
                    q_suggested: fix.q.re,
                    q_im: fix.q.im,
                });
            }
        }
    }
    let profile: Vec<CVec> = fixed.iter().map(|m| basis.reconstruct(m)).collect();
    let data = InitialData {
        kind: DataKind::WellPrepared,
        grid: grid.clone(),
        macro_profile: fixed.iter().zip(&grid.points).map(|(m, s)| m.at_mode(*s)).collect(),
        profile,
        p_emulated: None,
    };
    data.check(basis)?;
    Ok(data)
}

/// `(|ξ̂·m̂|, |n̂ + n̂/s² + √(2/3) q̂|)` at `ξ = s e₁`.
pub fn constraint_residuals(m: &MacroState<Complex>, s: f64) -> (f64, f64) {
    (m.m[0].norm(), (m.n * (1.0 + 1.0 / (s * s)) + m.q * sqrt23()).norm())
}

impl InitialData {
    pub fn check(&self, basis: &VelocityBasis) -> Result<()> {
        if self.kind != DataKind::WellPrepared {
            return Ok(());
        }
        for ((f, m), &s) in self.profile.iter().zip(&self.macro_profile).zip(&self.grid.points) {
            let scale = f.norm().max(1e-300);
            let micro = basis.micro_part(f).norm();
            let (div, bous) = constraint_residuals(m, s);
            if micro.max(div).max(bous) > 1e-12 * scale {
                return Err(VpbError::InvalidArgument(format!(
                    "well-prepared data violate the constraints at s = {s}: micro {micro:.2e}, div {div:.2e}, boussinesq {bous:.2e}"
                )));
            }
        }
        Ok(())
    }

    pub fn macro_part(&self, k: usize) -> MacroState<Complex> {
        self.macro_profile[k]
    }
}
