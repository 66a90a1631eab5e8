//! Diffusion-limit experiments on radial wave-number grids.
//!
//! Every field lives on `ξ = s e₁`; spatial norms are synthesized from the
//! per-shell ξ-norms with the radial weight `4π s²`.

pub mod data;
pub mod grids;
pub mod hilbert;

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{Backend, CollisionOperator};
use crate::dispersion::asymptotics::{b_coeff, eta, h_canonical, LinearResponse};
use crate::error::{Result, VpbError};
use crate::fit::{loglog_slope, LineFit};
use crate::linalg::to_complex;
use crate::mode_operator::assemble_b;
use crate::semigroup::{fluid_semigroup_v, PropagationPath, Propagator};
use crate::velocity_space::{weighted_inner_unchecked, VelocityBasis};
use crate::{CVec, Complex};
pub use data::{make_initial_data, well_prepared_from_macro, CompatPolicy, DataKind, InitialData};
pub use grids::{layered_times, SGrid, Spacing};
pub use hilbert::{hilbert_expansion_check, HilbertReport};

/// `‖f‖_ξ` at `|ξ| = s`.
pub fn shell_norm(f: &CVec, s: f64) -> f64 {
    weighted_inner_unchecked(f, f, s).re.max(0.0).sqrt()
}

/// `4π Σ s_k² w_k ‖f̂(s_k)‖_{s_k}`.
pub fn synth_norm_linf_p(grid: &SGrid, field: &[CVec]) -> Result<f64> {
    if field.len() != grid.len() {
        return Err(VpbError::InvalidArgument("one coefficient vector per grid point is required".into()));
    }
    let norms: Vec<f64> = field.iter().zip(&grid.points).map(|(f, s)| shell_norm(f, *s)).collect();
    Ok(grid.radial_sum(&norms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckedNorm {
    pub value: f64,
    pub refined: f64,
    pub relative_change: f64,
    /// Set when one refinement moved the value by more than 5%.
    pub too_coarse: bool,
}

/// [`synth_norm_linf_p`] of a field given as a function of `s`, compared against the refined grid.
pub fn synth_norm_checked(grid: &SGrid, field: &dyn Fn(f64) -> CVec) -> Result<CheckedNorm> {
    let eval = |g: &SGrid| -> Result<f64> {
        let f: Vec<CVec> = g.points.iter().map(|s| field(*s)).collect();
        synth_norm_linf_p(g, &f)
    };
    let value = eval(grid)?;
    let refined = eval(&grid.refined()?)?;
    let relative_change = if refined == 0.0 { 0.0 } else { ((value - refined) / refined).abs() };
    Ok(CheckedNorm { value, refined, relative_change, too_coarse: relative_change > 0.05 })
}

/// `(4π Σ s_k² w_k a_k²)^{1/2}`, the radial synthesis of an L² norm.
pub fn synth_norm_l2(grid: &SGrid, shell_norms: &[f64]) -> f64 {
    let sq: Vec<f64> = shell_norms.iter().map(|x| x * x).collect();
    grid.radial_sum(&sq).sqrt()
}

fn shell_oscillation(basis: &VelocityBasis, f0: &CVec, s: f64, t: f64, eps: f64, r: &LinearResponse) -> CVec {
    let p0 = basis.macro_part(f0);
    let mut out = CVec::zeros(f0.len());
    for j in [-1, 1] {
        let h = to_complex(&h_canonical(j, s, basis));
        let c = weighted_inner_unchecked(&p0, &h, s);
        let phase = (eta(j, s) * (t / eps) - b_coeff(j, s, r) * t).exp();
        out += h * (c * phase);
    }
    out
}

/// `u^osc(t) = Σ_{j=±1} e^{η_j t/ε − b_j t} (P₀f̂₀, h_j)_ξ h_j` per shell.
pub fn oscillation_part(data: &InitialData, basis: &VelocityBasis, t: f64, eps: f64, r: &LinearResponse) -> Vec<CVec> {
    data.profile
        .iter()
        .zip(&data.grid.points)
        .map(|(f, s)| shell_oscillation(basis, f, *s, t, eps, r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub eps: f64,
    pub t: f64,
    /// `‖f_ε(t) − u(t)‖` synthesized.
    pub err_linf_p: f64,
    pub err_macro: f64,
    pub err_micro: f64,
    /// `‖f_ε − u − u^osc − e^{tB/ε²}P₁f₀‖` synthesized.
    pub err_corrected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrColumn {
    LinfP,
    Macro,
    Micro,
    Corrected,
}

impl ErrorRow {
    pub fn get(&self, c: ErrColumn) -> f64 {
        match c {
            ErrColumn::LinfP => self.err_linf_p,
            ErrColumn::Macro => self.err_macro,
            ErrColumn::Micro => self.err_micro,
            ErrColumn::Corrected => self.err_corrected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorMeta {
    pub s_grid: SGrid,
    pub basis_hash: String,
    pub backend: Backend,
    pub data_kind: DataKind,
    pub p_emulated: Option<f64>,
    /// `b = min{1, 3/p − 3/2}` for generic data.
    pub layer_exponent: Option<f64>,
    pub kappa0: f64,
    pub kappa1: f64,
    /// Largest eigenvector condition number met along the sweep.
    pub max_condition: f64,
    /// Shells propagated by the stiff integrator instead of the eigenbasis.
    pub ode_shells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub meta: ErrorMeta,
}

pub const CSV_HEADER: &str = "eps,t,err_linf_p,err_macro,err_micro,err_corrected";

impl ErrorTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e}",
                r.eps, r.t, r.err_linf_p, r.err_macro, r.err_micro, r.err_corrected
            );
        }
        out
    }

    /// Distinct ε values in table order.
    pub fn eps_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.eps) {
                v.push(r.eps);
            }
        }
        v
    }

    pub fn rows_for(&self, eps: f64) -> impl Iterator<Item = &ErrorRow> {
        self.rows.iter().filter(move |r| r.eps == eps)
    }

    /// `sup_t w(t)·err(ε, t)`.
    pub fn sup_weighted(&self, eps: f64, column: ErrColumn, weight: &dyn Fn(f64) -> f64) -> f64 {
        self.rows_for(eps).map(|r| weight(r.t) * r.get(column)).fold(0.0, f64::max)
    }

    /// Log–log slope of `sup_t w(t)·err` against ε.
    pub fn eps_slope(&self, column: ErrColumn, weight: &dyn Fn(f64) -> f64) -> Result<LineFit> {
        let eps = self.eps_values();
        if eps.len() < 3 {
            return Err(VpbError::Fit(format!("slope needs at least 3 eps values, got {}", eps.len())));
        }
        let y: Vec<f64> = eps.iter().map(|e| self.sup_weighted(*e, column, weight)).collect();
        loglog_slope(&eps, &y)
    }

    /// Largest `err(t)/err(t₀)` for `t ≥ t₀`, `t₀` the first sample past `ε² ln(1/ε)`.
    pub fn layer_bump(&self, eps: f64, column: ErrColumn) -> Option<f64> {
        let t0 = eps * eps * (1.0 / eps).ln();
        let mut rows = self.rows_for(eps).filter(|r| r.t >= t0);
        let first = rows.next()?.get(column);
        if first <= 0.0 {
            return None;
        }
        Some(rows.map(|r| r.get(column) / first).fold(1.0, f64::max))
    }
}

struct ShellRun {
    /// `[total, macro, micro, corrected]` per output time.
    errs: Vec<[f64; 4]>,
    condition: f64,
    ode: bool,
}

fn shell_errors(
    op: &Arc<CollisionOperator>,
    f0: &CVec,
    s: f64,
    eps: f64,
    times: &[f64],
    r: &LinearResponse,
) -> Result<ShellRun> {
    let basis = &op.basis;
    let mode = assemble_b(op, [s, 0.0, 0.0], eps)?;
    let prop = Propagator::new(&mode)?;
    let p0 = basis.project_macro(f0).at_mode(s);
    let p1f0 = basis.micro_part(f0);
    let fluid = fluid_semigroup_v(&p0, [s, 0.0, 0.0], times, r)?;
    let mut errs = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let f = prop.apply(f0, t)?;
        let u = fluid.states[k].to_coefficients(basis);
        let d = &f - &u;
        let total = mode.norm(&d);
        let mac = mode.norm(&basis.macro_part(&d));
        let mic = mode.norm(&basis.micro_part(&f));
        let corrected = d - shell_oscillation(basis, f0, s, t, eps, r) - prop.apply(&p1f0, t)?;
        errs.push([total, mac, mic, mode.norm(&corrected)]);
    }
    Ok(ShellRun { errs, condition: prop.condition, ode: prop.path == PropagationPath::Ode })
}

/// Kinetic solution against the fluid solution `V(t)P₀f₀` for every ε in `eps_list`,
/// with output times `times_for(ε)`.
pub fn run_convergence_study(
    op: &Arc<CollisionOperator>,
    data: &InitialData,
    eps_list: &[f64],
    times_for: &(dyn Fn(f64) -> Result<Vec<f64>> + Sync),
) -> Result<ErrorTable> {
    if eps_list.is_empty() {
        return Err(VpbError::InvalidArgument("empty eps list".into()));
    }
    if data.profile.first().is_some_and(|f| f.len() != op.dim()) {
        return Err(VpbError::InvalidArgument("initial data were built on a different basis".into()));
    }
    let r = LinearResponse::from_operator(op)?;
    let time_grids: Vec<Vec<f64>> = eps_list.iter().map(|e| times_for(*e)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..eps_list.len())
        .flat_map(|e| (0..data.grid.len()).map(move |k| (e, k)))
        .collect();
    let runs: Vec<ShellRun> = jobs
        .par_iter()
        .map(|&(e, k)| shell_errors(op, &data.profile[k], data.grid.points[k], eps_list[e], &time_grids[e], &r))
        .collect::<Result<_>>()?;
    let ns = data.grid.len();
    let mut rows = Vec::new();
    for (e, &eps) in eps_list.iter().enumerate() {
        let shells = &runs[e * ns..(e + 1) * ns];
        for (ti, &t) in time_grids[e].iter().enumerate() {
            let col = |c: usize| -> f64 {
                let a: Vec<f64> = shells.iter().map(|sr| sr.errs[ti][c]).collect();
                data.grid.radial_sum(&a)
            };
            rows.push(ErrorRow {
                eps,
                t,
                err_linf_p: col(0),
                err_macro: col(1),
                err_micro: col(2),
                err_corrected: col(3),
            });
        }
    }
    let layer_exponent = data.p_emulated.map(|p| (3.0 / p - 1.5).min(1.0));
    Ok(ErrorTable {
        rows,
        meta: ErrorMeta {
            s_grid: data.grid.clone(),
            basis_hash: op.basis.descriptor().hash(),
            backend: op.backend,
            data_kind: data.kind,
            p_emulated: data.p_emulated,
            layer_exponent,
            kappa0: r.kappa0(),
            kappa1: r.kappa1(),
            max_condition: runs.iter().map(|r| r.condition).fold(0.0, f64::max),
            ode_shells: runs.iter().filter(|r| r.ode).count(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerFrequency {
    pub s: f64,
    pub eps: f64,
    /// Angular frequency in physical time.
    pub measured: f64,
    pub predicted: f64,
    pub rel_err: f64,
}

fn windowed_dft(t: &[f64], z: &[Complex], w: &[f64], omega: f64) -> f64 {
    t.iter()
        .zip(z)
        .zip(w)
        .map(|((t, z), w)| z * (*w) * Complex::new(0.0, -omega * t).exp())
        .sum::<Complex>()
        .norm()
}

/// Dominant angular frequency of the density coefficient of `f_ε(t) − u(t)` at one shell,
/// from a Hann-windowed discrete Fourier scan refined by golden-section search.
pub fn layer_frequency(op: &Arc<CollisionOperator>, f0: &CVec, s: f64, eps: f64) -> Result<LayerFrequency> {
    let basis = &op.basis;
    let r = LinearResponse::from_operator(op)?;
    let mode = assemble_b(op, [s, 0.0, 0.0], eps)?;
    let prop = Propagator::new(&mode)?;
    // window of 60ε sampled at ε/8
    let n = 481;
    let dt = eps / 8.0;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let fluid = fluid_semigroup_v(&basis.project_macro(f0).at_mode(s), [s, 0.0, 0.0], &times, &r)?;
    let mut z = Vec::with_capacity(n);
    for (k, &t) in times.iter().enumerate() {
        let d = prop.apply(f0, t)? - fluid.states[k].to_coefficients(basis);
        z.push(d[0]);
    }
    let span = times[n - 1];
    let w: Vec<f64> = times
        .iter()
        .map(|t| 0.5 - 0.5 * (std::f64::consts::TAU * t / span).cos())
        .collect();
    let nyquist = std::f64::consts::PI / dt;
    let step = std::f64::consts::PI / (4.0 * span);
    let lo = 4.0 * std::f64::consts::TAU / span;
    let mut best = (0.0, -1.0);
    let mut om = lo;
    while om < nyquist {
        for sign in [1.0, -1.0] {
            let a = windowed_dft(&times, &z, &w, sign * om);
            if a > best.1 {
                best = (sign * om, a);
            }
        }
        om += step;
    }
    // golden-section refinement of the peak
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if windowed_dft(&times, &z, &w, c) > windowed_dft(&times, &z, &w, d) {
            b = d;
        } else {
            a = c;
        }
    }
    let measured = (0.5 * (a + b)).abs();
    let predicted = (1.0 + 5.0 * s * s / 3.0).sqrt() / eps;
    Ok(LayerFrequency { s, eps, measured, predicted, rel_err: ((measured - predicted) / predicted).abs() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PacketNorms {
    pub eps: f64,
    pub times: Vec<f64>,
    /// Radially synthesized L² norms of `P₀f` and `P₁f`.
    pub macro_l2: Vec<f64>,
    pub micro_l2: Vec<f64>,
}

/// L² norms of the macroscopic and microscopic parts of the kinetic solution for a
/// packet without density component.
pub fn packet_norms(op: &Arc<CollisionOperator>, data: &InitialData, eps: f64, times: &[f64]) -> Result<PacketNorms> {
    let basis = &op.basis;
    for (f, s) in data.profile.iter().zip(&data.grid.points) {
        if f[0].norm() > 1e-14 * f.norm() {
            return Err(VpbError::InvalidArgument(format!(
                "packet has a density component at s = {s}; P_d f0 = 0 is required"
            )));
        }
    }
    let per_shell: Vec<Vec<(f64, f64)>> = data
        .profile
        .par_iter()
        .zip(data.grid.points.par_iter())
        .map(|(f0, &s)| -> Result<Vec<(f64, f64)>> {
            let mode = assemble_b(op, [s, 0.0, 0.0], eps)?;
            let prop = Propagator::new(&mode)?;
            times
                .iter()
                .map(|&t| {
                    let f = prop.apply(f0, t)?;
                    Ok((mode.norm(&basis.macro_part(&f)), mode.norm(&basis.micro_part(&f))))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let synth = |pick: fn(&(f64, f64)) -> f64| -> Vec<f64> {
        (0..times.len())
            .map(|k| {
                let a: Vec<f64> = per_shell.iter().map(|v| pick(&v[k])).collect();
                synth_norm_l2(&data.grid, &a)
            })
            .collect()
    };
    Ok(PacketNorms { eps, times: times.to_vec(), macro_l2: synth(|p| p.0), micro_l2: synth(|p| p.1) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::assemble_l;
    use crate::velocity_space::build_basis;

    fn synthetic(n: usize, nu: f64) -> Arc<CollisionOperator> {
        let b = Arc::new(build_basis(n, 2 * n + 4).unwrap());
        Arc::new(assemble_l(b, Backend::Synthetic { nu_bar: nu }).unwrap())
    }

    #[test]
    fn synth_norm_basics() {
        let grid = SGrid::new(0.5, 1.5, 3, Spacing::Uniform).unwrap();
        let zero = vec![CVec::zeros(4); 3];
        assert_eq!(synth_norm_linf_p(&grid, &zero).unwrap(), 0.0);
        // unit momentum coefficient on the middle shell only
        let mut f = zero.clone();
        f[1] = CVec::from_vec(vec![Complex::new(0.0, 0.0), Complex::new(1.0, 0.0), Complex::new(0.0, 0.0), Complex::new(0.0, 0.0)]);
        let v = synth_norm_linf_p(&grid, &f).unwrap();
        assert!((v - 4.0 * std::f64::consts::PI * grid.weights[1]).abs() < 1e-14);
    }

    #[test]
    fn gaussian_norm_is_resolved() {
        let grid = SGrid::new(0.05, 4.0, 32, Spacing::Uniform).unwrap();
        let chk = synth_norm_checked(&grid, &|s: f64| {
            CVec::from_vec(vec![Complex::new(0.0, 0.0), Complex::new((-s * s).exp(), 0.0)])
        })
        .unwrap();
        assert!(chk.relative_change < 0.01 && !chk.too_coarse, "{chk:?}");
    }

    #[test]
    fn well_prepared_has_no_oscillation() {
        let op = synthetic(4, 10.0);
        let grid = SGrid::new(0.1, 2.0, 6, Spacing::Uniform).unwrap();
        let d = make_initial_data(DataKind::WellPrepared, &|s: f64| (-s * s).exp(), &grid, &op.basis).unwrap();
        let r = LinearResponse::from_operator(&op).unwrap();
        for f in oscillation_part(&d, &op.basis, 0.3, 0.1, &r) {
            assert!(f.norm() < 1e-15);
        }
    }

    #[test]
    fn oscillation_envelope_decays_at_b1() {
        let op = synthetic(4, 10.0);
        let grid = SGrid::new(0.5, 0.6, 2, Spacing::Uniform).unwrap();
        let d = make_initial_data(DataKind::Generic, &|s: f64| (-s * s).exp(), &grid, &op.basis).unwrap();
        let r = LinearResponse::from_operator(&op).unwrap();
        let s = grid.points[0];
        let n = |t: f64| shell_norm(&oscillation_part(&d, &op.basis, t, 0.05, &r)[0], s);
        // the two acoustic branches share b₁ and stay orthogonal, so the envelope is exact
        let ratio = n(2.0) / n(0.0);
        assert!((ratio - (-2.0 * b_coeff(1, s, &r)).exp()).abs() < 1e-12);
    }

    #[test]
    fn error_table_slope_needs_three_eps() {
        let op = synthetic(4, 10.0);
        let grid = SGrid::new(0.2, 1.0, 3, Spacing::Uniform).unwrap();
        let d = make_initial_data(DataKind::WellPrepared, &|s: f64| (-s * s).exp(), &grid, &op.basis).unwrap();
        let tab = run_convergence_study(&op, &d, &[0.2, 0.1], &|e| layered_times(e, 3.0, 4, 4)).unwrap();
        assert!(tab.eps_slope(ErrColumn::LinfP, &|_| 1.0).is_err());
        assert!(tab.rows.iter().all(|r| r.err_linf_p >= 0.0 && r.err_micro >= 0.0));
        assert_eq!(tab.rows[0].t, 0.0);
        assert!(tab.rows[0].err_linf_p < 1e-13);
        let csv = tab.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), tab.rows.len() + 1);
    }

    #[test]
    fn layer_frequency_matches_acoustic_branch() {
        let op = synthetic(4, 10.0);
        let grid = SGrid::new(0.5, 0.6, 2, Spacing::Uniform).unwrap();
        let d = make_initial_data(DataKind::Generic, &|s: f64| (-s * s).exp(), &grid, &op.basis).unwrap();
        let lf = layer_frequency(&op, &d.profile[0], grid.points[0], 0.05).unwrap();
        assert!(lf.rel_err < 0.01, "{lf:?}");
    }
}
