//! Subcommand implementations. Each returns its CSV table and JSON sidecar;
//! writing happens once, on the calling thread.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use vpb_core::collision::cache::CacheStatus;
use vpb_core::collision::{assemble_l_cached, Backend, CollisionOperator};
use vpb_core::dispersion::asymptotics::{AsymptoticCoefficients, LinearResponse};
use vpb_core::dispersion::{hydrodynamic_spectrum, HydroSpectrum};
use vpb_core::dispersion::roots::Regime;
use vpb_core::limit_lab::{
    make_initial_data, run_convergence_study, well_prepared_from_macro, DataKind, ErrColumn, InitialData,
};
use vpb_core::linalg::eigenvalues;
use vpb_core::mode_operator::{assemble_b, ModeOperator};
use vpb_core::semigroup::{propagate_kinetic, PropagateOptions, Propagator, SemigroupSplit};
use vpb_core::transport::{
    compute_kappas_forced, isotropy_residual, resolvent_consistency, with_error_bar, TransportCoefficients,
};
use vpb_core::velocity_space::{build_basis, MacroState};
use vpb_core::{CVec, Complex, VpbError};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Check,
    Spectrum,
    Dispersion,
    Transport,
    Semigroup,
    Converge,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Spectrum => "spectrum",
            Command::Dispersion => "dispersion",
            Command::Transport => "transport",
            Command::Semigroup => "semigroup",
            Command::Converge => "converge",
        }
    }
}

pub struct Context {
    pub config: ExperimentConfig,
    pub cache_dir: Option<PathBuf>,
}

pub struct Output {
    pub csv: String,
    pub json: Value,
    pub failures: usize,
}

pub struct Artifacts {
    pub csv: PathBuf,
    pub json: PathBuf,
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

impl Context {
    fn regime(&self) -> Regime {
        Regime { r0: self.config.tolerances.r0, r1: self.config.tolerances.r1 }
    }

    fn operator_for(&self, max_degree: usize, quad_order: usize) -> Result<Arc<CollisionOperator>, CliError> {
        let basis = Arc::new(build_basis(max_degree, quad_order)?);
        let (op, status) = assemble_l_cached(basis, self.config.backend, self.cache_dir.as_deref())?;
        if let CacheStatus::Rebuilt(reason) = status {
            eprintln!("notice: cached collision matrix rebuilt ({reason})");
        }
        Ok(Arc::new(op))
    }

    pub fn operator(&self) -> Result<Arc<CollisionOperator>, CliError> {
        self.operator_for(self.config.basis.max_degree, self.config.quad_order())
    }

    /// `(s, ε)` pairs in grid-major order.
    fn pairs(&self) -> Result<Vec<(f64, f64)>, CliError> {
        let grid = self.config.grid()?;
        Ok(grid
            .points
            .iter()
            .flat_map(|&s| self.config.eps_list.iter().map(move |&e| (s, e)))
            .collect())
    }

    pub fn initial_data(&self, op: &CollisionOperator) -> Result<InitialData, CliError> {
        let cfg = &self.config;
        let grid = cfg.grid()?;
        let g = cfg.profile();
        match (cfg.data.kind, cfg.data.macro_state) {
            (DataKind::WellPrepared, Some(a)) => {
                let c = |x: f64| Complex::new(x, 0.0);
                let macros: Vec<MacroState<Complex>> = grid
                    .points
                    .iter()
                    .map(|&s| {
                        let w = g(s);
                        MacroState::new(c(a[0] * w), [c(a[1] * w), c(a[2] * w), c(a[3] * w)], c(a[4] * w))
                    })
                    .collect();
                Ok(well_prepared_from_macro(&grid, &macros, &op.basis, cfg.data.compat)?)
            }
            (kind, _) => Ok(make_initial_data(kind, &g, &grid, &op.basis)?),
        }
    }

    pub fn run(&self, cmd: Command) -> Result<Output, CliError> {
        match cmd {
            Command::Check => self.check(),
            Command::Spectrum => self.spectrum(),
            Command::Dispersion => self.dispersion(),
            Command::Transport => self.transport(),
            Command::Semigroup => self.semigroup(),
            Command::Converge => self.converge(),
        }
    }

    fn check(&self) -> Result<Output, CliError> {
        #[derive(Serialize)]
        struct Row {
            check: &'static str,
            value: f64,
            tolerance: f64,
            pass: bool,
        }
        let cfg = &self.config;
        let tol = cfg.tolerances.structure;
        let op = self.operator()?;
        let lnorm = op.l_matrix.norm();
        let mut rows = Vec::new();
        let mut push = |check, value: f64, tolerance: f64, pass: bool| rows.push(Row { check, value, tolerance, pass });
        push("basis_gram_error", op.basis.gram_error, 1e-10, op.basis.gram_error <= 1e-10);
        let sym = op.symmetry_residual() / lnorm;
        push("l_symmetry_rel", sym, 1e-10, sym <= 1e-10);
        let sv = op.singular_values();
        let null = sv.iter().filter(|x| **x <= tol * lnorm).count() as f64;
        push("null_singular_values", null, 5.0, null == 5.0);
        push("coercivity_mu", op.mu_estimate, 0.0, op.mu_estimate > 0.0);
        let nres = op.null_residual() / lnorm;
        push("null_space_residual_rel", nres, tol, nres <= tol);

        let pairs = self.pairs()?;
        let regime = self.regime();
        let per_pair: Vec<(f64, Option<f64>)> = pairs
            .par_iter()
            .map(|&(s, e)| -> Result<_, CliError> {
                let m = assemble_b(&op, [s, 0.0, 0.0], e)?;
                let abscissa = m.numerical_abscissa() / m.b_matrix.norm();
                let dense = if e * s <= regime.r0 {
                    try_spectrum(&m, &regime)?.map(|sp| sp.points.iter().map(|p| p.dense_match).fold(0.0, f64::max))
                } else {
                    Some(0.0)
                };
                Ok((abscissa, dense))
            })
            .collect::<Result<_, _>>()?;
        let abscissa = per_pair.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        push("numerical_abscissa_rel", abscissa, 1e-10, abscissa <= 1e-10);
        let dense = per_pair.iter().filter_map(|p| p.1).fold(0.0, f64::max);
        push("dispersion_dense_match", dense, 1e-8, dense <= 1e-8);
        // pairs whose branch roots could not be continued are reported, not failed;
        // at least one pair must resolve for the dense comparison to mean anything
        let unresolved = per_pair.iter().filter(|p| p.1.is_none()).count();
        push("dispersion_unresolved_pairs", unresolved as f64, pairs.len() as f64, unresolved < pairs.len());

        let t = compute_kappas_forced(&op);
        let (k0, k1) = t.as_ref().map(|t| (t.kappa0, t.kappa1)).unwrap_or((f64::NAN, f64::NAN));
        push("kappa0_positive", k0, 0.0, k0 > 0.0);
        push("kappa1_positive", k1, 0.0, k1 > 0.0);
        let iso = isotropy_residual(&op)?;
        push("isotropy", iso, 1e-10, iso <= 1e-10);
        let rc = resolvent_consistency(&op)?;
        push("resolvent_consistency", rc, 1e-10, rc <= 1e-10);

        // semigroup property and contraction on a seeded random vector at the first pair
        let (s, e) = pairs[0];
        let m = assemble_b(&op, [s, 0.0, 0.0], e)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let f: CVec = DVector::from_fn(op.dim(), |_, _| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let times: Vec<f64> = (0..=10).map(|k| 0.1 * e * e * k as f64).collect();
        let tr = propagate_kinetic(&m, &f, &times, PropagateOptions::default())?;
        let prop = Propagator::new(&m)?;
        let (ta, tb) = (times[3], times[7]);
        let lhs = prop.apply(&f, ta + tb)?;
        let rhs = prop.apply(&prop.apply(&f, tb)?, ta)?;
        let sg = m.norm(&(lhs - rhs)) / m.norm(&f);
        push("semigroup_property", sg, 1e-9, sg <= 1e-9);
        let cv = tr.contraction_violation();
        push("contraction", cv, 1e-12, cv <= 1e-12);

        let failures = rows.iter().filter(|r| !r.pass).count();
        let json = json!({
            "subcommand": "check",
            "backend": op.backend,
            "basis_hash": op.basis.descriptor().hash(),
            "checks": rows.len(),
            "failures": failures,
            "mu": op.mu_estimate,
            "nu0": op.nu0,
            "nu_at_zero": op.nu_at_zero,
        });
        Ok(Output { csv: to_csv(&rows)?, json, failures })
    }

    fn spectrum(&self) -> Result<Output, CliError> {
        #[derive(Serialize)]
        struct Row {
            s: f64,
            eps: f64,
            index: usize,
            re_lambda: f64,
            im_lambda: f64,
        }
        let op = self.operator()?;
        let pairs = self.pairs()?;
        let blocks: Vec<Vec<Row>> = pairs
            .par_iter()
            .map(|&(s, eps)| -> Result<Vec<Row>, CliError> {
                let m = assemble_b(&op, [s, 0.0, 0.0], eps)?;
                let mut ev = eigenvalues(&m.b_matrix)?;
                ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
                Ok(ev
                    .iter()
                    .enumerate()
                    .map(|(index, l)| Row { s, eps, index, re_lambda: l.re, im_lambda: l.im })
                    .collect())
            })
            .collect::<Result<_, _>>()?;
        let abscissa: Vec<f64> = blocks.iter().map(|b| b[0].re_lambda).collect();
        let rows: Vec<Row> = blocks.into_iter().flatten().collect();
        let json = json!({
            "subcommand": "spectrum",
            "backend": op.backend,
            "basis_hash": op.basis.descriptor().hash(),
            "pairs": pairs.len(),
            "max_re_lambda": abscissa.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
        Ok(Output { csv: to_csv(&rows)?, json, failures: 0 })
    }

    fn dispersion(&self) -> Result<Output, CliError> {
        #[derive(Serialize)]
        struct Row {
            branch: i32,
            s: f64,
            eps: f64,
            re_lambda: f64,
            im_lambda: f64,
            remainder: f64,
            det_residual: f64,
            eig_residual: f64,
        }
        let op = self.operator()?;
        let regime = self.regime();
        let response = LinearResponse::from_operator(&op)?;
        let (inside, outside): (Vec<(f64, f64)>, Vec<(f64, f64)>) =
            self.pairs()?.into_iter().partition(|(s, e)| s * e <= regime.r0);
        let blocks: Vec<Option<(Vec<Row>, f64, f64)>> = inside
            .par_iter()
            .map(|&(s, eps)| -> Result<_, CliError> {
                let m = assemble_b(&op, [s, 0.0, 0.0], eps)?;
                let Some(sp) = try_spectrum(&m, &regime)? else {
                    return Ok(None);
                };
                let coeffs = AsymptoticCoefficients::new(s, response, &op.basis);
                let rows = sp
                    .points
                    .iter()
                    .map(|p| Row {
                        branch: p.branch,
                        s,
                        eps,
                        re_lambda: p.lambda.re,
                        im_lambda: p.lambda.im,
                        remainder: (p.lambda - coeffs.seed(p.branch, eps)).norm(),
                        det_residual: p.det_residual,
                        eig_residual: p.eig_residual,
                    })
                    .collect();
                let dense = sp.points.iter().map(|p| p.dense_match).fold(0.0, f64::max);
                Ok(Some((rows, dense, sp.gap)))
            })
            .collect::<Result<_, _>>()?;
        let unresolved: Vec<(f64, f64)> =
            inside.iter().zip(&blocks).filter(|(_, b)| b.is_none()).map(|(p, _)| *p).collect();
        if !unresolved.is_empty() {
            eprintln!("note: branch roots not resolved at {} (s, eps) pairs; see `unresolved_pairs`", unresolved.len());
        }
        let blocks: Vec<(Vec<Row>, f64, f64)> = blocks.into_iter().flatten().collect();
        if !outside.is_empty() {
            eprintln!("note: {} (s, eps) pairs with eps*s > r0 = {} skipped", outside.len(), regime.r0);
        }
        let max_dense = blocks.iter().map(|b| b.1).fold(0.0, f64::max);
        let min_gap = blocks.iter().map(|b| b.2).fold(f64::INFINITY, f64::min);
        let rows: Vec<Row> = blocks.into_iter().flat_map(|b| b.0).collect();
        let json = json!({
            "subcommand": "dispersion",
            "backend": op.backend,
            "basis_hash": op.basis.descriptor().hash(),
            "regime": { "r0": regime.r0, "r1": regime.r1 },
            "pairs": inside.len() - unresolved.len(),
            "skipped_pairs": outside,
            "unresolved_pairs": unresolved,
            "max_dense_match": max_dense,
            "measured_gap": min_gap,
        });
        Ok(Output { csv: to_csv(&rows)?, json, failures: 0 })
    }

    fn transport(&self) -> Result<Output, CliError> {
        let op = self.operator()?;
        let t: TransportCoefficients = if op.backend.is_genuine() {
            with_error_bar(&op, self.cache_dir.as_deref())?
        } else {
            // the synthetic coefficients are explicit; the two-level study is still reported
            let mut t = compute_kappas_forced(&op)?;
            let n2 = op.basis.max_degree + 2;
            let fine = self.operator_for(n2, vpb_core::velocity_space::default_quad_order(n2))?;
            let t2 = compute_kappas_forced(&fine)?;
            t.error_bar = Some((t.kappa0 - t2.kappa0).abs().max((t.kappa1 - t2.kappa1).abs()));
            t.reference_degree = Some(n2);
            t
        };
        #[derive(Serialize)]
        struct Row {
            kappa0: f64,
            kappa1: f64,
            kappa11: f64,
            error_bar: Option<f64>,
            max_degree: usize,
            reference_degree: Option<usize>,
        }
        let row = Row {
            kappa0: t.kappa0,
            kappa1: t.kappa1,
            kappa11: t.kappa11,
            error_bar: t.error_bar,
            max_degree: t.max_degree,
            reference_degree: t.reference_degree,
        };
        let json = json!({
            "subcommand": "transport",
            "kappa0": t.kappa0,
            "kappa1": t.kappa1,
            "kappa11": t.kappa11,
            "error_bar": t.error_bar,
            "basis_hash": t.basis_hash,
            "backend": t.backend,
            "max_degree": t.max_degree,
            "reference_degree": t.reference_degree,
        });
        Ok(Output { csv: to_csv(&[row])?, json, failures: 0 })
    }

    fn semigroup(&self) -> Result<Output, CliError> {
        #[derive(Serialize)]
        struct Row {
            s: f64,
            eps: f64,
            t: f64,
            norm_f: f64,
            norm_p0f: f64,
            norm_p1f: f64,
            norm_s2: Option<f64>,
        }
        let op = self.operator()?;
        let data = self.initial_data(&op)?;
        let regime = self.regime();
        let grid = &data.grid;
        let jobs: Vec<(usize, f64)> = (0..grid.len())
            .flat_map(|k| self.config.eps_list.iter().map(move |&e| (k, e)))
            .collect();
        let blocks: Vec<(Vec<Row>, Option<f64>)> = jobs
            .par_iter()
            .map(|&(k, eps)| -> Result<_, CliError> {
                let s = grid.points[k];
                let m = assemble_b(&op, [s, 0.0, 0.0], eps)?;
                let inside = eps * s <= regime.r0;
                let spectrum = if inside { try_spectrum(&m, &regime)? } else { None };
                // S₂ is reported only where it is defined: outside the regime it is the
                // whole flow, inside it needs resolved branches
                let resolved = !inside || spectrum.is_some();
                let split = SemigroupSplit { prop: Propagator::new(&m)?, spectrum };
                let f0 = &data.profile[k];
                let mut rows = Vec::new();
                for t in self.config.times(eps)? {
                    let (s1, s2) = split.split(f0, t)?;
                    let f = s1 + &s2;
                    let p0 = op.basis.macro_part(&f);
                    let p1 = &f - &p0;
                    rows.push(Row {
                        s,
                        eps,
                        t,
                        norm_f: m.norm(&f),
                        norm_p0f: m.norm(&p0),
                        norm_p1f: m.norm(&p1),
                        norm_s2: resolved.then(|| m.norm(&s2)),
                    });
                }
                Ok((rows, split.gap()))
            })
            .collect::<Result<_, _>>()?;
        let gaps: Vec<Option<f64>> = blocks.iter().map(|b| b.1).collect();
        let rows: Vec<Row> = blocks.into_iter().flat_map(|b| b.0).collect();
        let json = json!({
            "subcommand": "semigroup",
            "backend": op.backend,
            "basis_hash": op.basis.descriptor().hash(),
            "data_kind": data.kind,
            "measured_gap": gaps.iter().flatten().copied().fold(f64::INFINITY, f64::min),
            "shells": grid.len(),
        });
        Ok(Output { csv: to_csv(&rows)?, json, failures: 0 })
    }

    fn converge(&self) -> Result<Output, CliError> {
        let op = self.operator()?;
        let data = self.initial_data(&op)?;
        let cfg = &self.config;
        let table = run_convergence_study(&op, &data, &cfg.eps_list, &|e| cfg.times(e))?;
        let slope = |col: ErrColumn, w: f64| {
            table.eps_slope(col, &move |t: f64| (1.0 + t).powf(w)).ok().map(|f| f.slope)
        };
        let bumps: Vec<Option<f64>> = cfg.eps_list.iter().map(|&e| table.layer_bump(e, ErrColumn::LinfP)).collect();
        let json = json!({
            "subcommand": "converge",
            "meta": table.meta,
            "eps_list": cfg.eps_list,
            "slope_linf_p_weight_3_4": slope(ErrColumn::LinfP, 0.75),
            "slope_corrected_weight_1_2": slope(ErrColumn::Corrected, 0.5),
            "layer_bump": bumps,
        });
        Ok(Output { csv: table.to_csv(), json, failures: 0 })
    }
}

/// Hydrodynamic spectrum, or `None` when the branch roots cannot be continued from
/// their seeds at this `(s, ε)` although `ε s ≤ r₀`.
fn try_spectrum(m: &ModeOperator, regime: &Regime) -> Result<Option<HydroSpectrum>, CliError> {
    match hydrodynamic_spectrum(m, regime) {
        Ok(sp) => Ok(Some(sp)),
        Err(VpbError::Regime(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Writes `<subcommand>-<hash>.{csv,json}` under `dir`.
pub fn write_artifacts(dir: &Path, cmd: Command, hash: &str, out: &Output) -> Result<Artifacts, CliError> {
    std::fs::create_dir_all(dir)?;
    let stem = format!("{}-{hash}", cmd.name());
    let csv = dir.join(format!("{stem}.csv"));
    let json = dir.join(format!("{stem}.json"));
    std::fs::write(&csv, out.csv.as_bytes())?;
    let mut text = serde_json::to_string_pretty(&out.json).expect("json serializes");
    text.push('\n');
    std::fs::write(&json, text)?;
    Ok(Artifacts { csv, json })
}

/// Applies a `--backend` override, keeping the configured parameters when the kind matches.
pub fn override_backend(current: Backend, kind: &str) -> Option<Backend> {
    Some(match (kind, current) {
        ("hard_sphere", _) => Backend::HardSphere,
        ("synthetic", b @ Backend::Synthetic { .. }) => b,
        ("synthetic", _) => Backend::Synthetic { nu_bar: 1.0 },
        ("hard_potential", b @ Backend::HardPotential { .. }) => b,
        ("hard_potential", _) => Backend::HardPotential { gamma: 0.5, c: 1.0 },
        _ => return None,
    })
}
