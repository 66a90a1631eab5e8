//! Kinetic mode propagation `e^{(t/ε²)B_ε(ξ)}`, its hydrodynamic/remainder
//! split, the fluid semigroup and the forced fluid mode equations.

pub mod decay;
pub mod fluid;
pub mod stiff;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dispersion::{hydrodynamic_spectrum, HydroSpectrum, Regime};
use crate::error::{Result, VpbError};
use crate::linalg::{eigen_decomposition, to_complex_mat, EigenDecomposition};
use crate::mode_operator::ModeOperator;
use crate::velocity_space::bilinear;
use crate::{CMat, CVec, Complex};
pub use decay::{fit_decay, DecayFit, DecayModel};
pub use fluid::{
    fluid_closed_form, fluid_semigroup_v, nspf_mode_solve, nspf_ode_oracle, compatible_initial, FluidModeState,
};
use stiff::PadeStepper;

/// Eigenvector conditioning beyond which the spectral path is abandoned.
pub const CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PropagationPath {
    Eigen,
    /// Eigenvectors too ill-conditioned; states come from the stiff integrator.
    Ode,
}

/// `e^{τB}` for one mode, `τ = t/ε²`.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub mode: ModeOperator,
    eig: Option<EigenDecomposition>,
    /// Canonical-to-mode basis rotation, absent for canonical modes.
    push: Option<CMat>,
    pub condition: f64,
    pub path: PropagationPath,
}

impl Propagator {
    pub fn new(mode: &ModeOperator) -> Result<Self> {
        let can = mode.canonical();
        let push = (!mode.is_canonical()).then(|| to_complex_mat(&mode.pushforward()));
        let (eig, condition) = match eigen_decomposition(&can.b_matrix) {
            Ok(e) if e.condition < CONDITION_LIMIT && e.residual < 1e-10 => {
                let k = e.condition;
                (Some(e), k)
            }
            Ok(e) => (None, e.condition),
            Err(_) => (None, f64::INFINITY),
        };
        let path = if eig.is_some() { PropagationPath::Eigen } else { PropagationPath::Ode };
        Ok(Self { mode: mode.clone(), eig, push, condition, path })
    }

    fn to_canonical(&self, f: &CVec) -> CVec {
        match &self.push {
            Some(p) => p.transpose() * f,
            None => f.clone(),
        }
    }

    fn from_canonical(&self, f: CVec) -> CVec {
        match &self.push {
            Some(p) => p * f,
            None => f,
        }
    }

    /// `e^{τB} f` at the rescaled time `τ`.
    pub fn apply_tau(&self, f: &CVec, tau: f64) -> Result<CVec> {
        if tau == 0.0 {
            return Ok(f.clone());
        }
        match &self.eig {
            Some(e) => {
                let g = self.to_canonical(f);
                Ok(self.from_canonical(e.apply_fn(&g, |l| (l * tau).exp())))
            }
            None => Ok(self.ode(f, &[tau], 1e-12)?.pop().expect("one output")),
        }
    }

    /// `e^{(t/ε²)B} f`.
    pub fn apply(&self, f: &CVec, t: f64) -> Result<CVec> {
        self.apply_tau(f, t / (self.mode.eps * self.mode.eps))
    }

    /// Stiff-integrator solution at the rescaled times `taus`.
    pub fn ode(&self, f: &CVec, taus: &[f64], rtol: f64) -> Result<Vec<CVec>> {
        let mode = &self.mode;
        let mut st = PadeStepper::new(&mode.b_matrix, rtol);
        st.integrate(f, taus, &|v: &CVec| mode.norm(v))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PropagateOptions {
    /// Also integrate with the stiff oracle and record the deviation.
    pub with_oracle: bool,
    pub oracle_rtol: f64,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self { with_oracle: false, oracle_rtol: 1e-11 }
    }
}

#[derive(Debug, Clone)]
pub struct ModeTrajectory {
    pub xi: [f64; 3],
    pub eps: f64,
    pub times: Vec<f64>,
    pub states: Vec<CVec>,
    /// `‖f(t)‖_ξ`.
    pub norm_track: Vec<f64>,
    pub path: PropagationPath,
    pub condition: f64,
    /// `‖f_eig(t) − f_ode(t)‖_ξ` when the oracle ran.
    pub oracle_deviation: Option<Vec<f64>>,
}

impl ModeTrajectory {
    /// Largest increase of the norm between consecutive samples, relative to the initial norm.
    pub fn contraction_violation(&self) -> f64 {
        let n0 = self.norm_track.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        self.norm_track
            .windows(2)
            .map(|w| (w[1] - w[0]) / n0)
            .fold(0.0, f64::max)
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.first().is_some_and(|t| *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(VpbError::InvalidArgument("times must be sorted and non-negative".into()));
    }
    Ok(())
}

pub fn propagate_kinetic(
    mode: &ModeOperator,
    f0: &CVec,
    times: &[f64],
    opts: PropagateOptions,
) -> Result<ModeTrajectory> {
    check_times(times)?;
    if f0.len() != mode.dim() {
        return Err(VpbError::InvalidArgument("initial vector has the wrong dimension".into()));
    }
    let prop = Propagator::new(mode)?;
    let e2 = mode.eps * mode.eps;
    let taus: Vec<f64> = times.iter().map(|t| t / e2).collect();
    let need_ode = opts.with_oracle || prop.path == PropagationPath::Ode;
    let ode = if need_ode { Some(prop.ode(f0, &taus, opts.oracle_rtol)?) } else { None };
    let states: Vec<CVec> = match prop.path {
        PropagationPath::Eigen => taus.iter().map(|&t| prop.apply_tau(f0, t)).collect::<Result<_>>()?,
        PropagationPath::Ode => ode.clone().expect("ode path computed"),
    };
    let oracle_deviation = match (&ode, opts.with_oracle) {
        (Some(o), true) => Some(states.iter().zip(o).map(|(a, b)| mode.norm(&(a - b))).collect()),
        _ => None,
    };
    Ok(ModeTrajectory {
        xi: mode.xi,
        eps: mode.eps,
        times: times.to_vec(),
        norm_track: states.iter().map(|f| mode.norm(f)).collect(),
        states,
        path: prop.path,
        condition: prop.condition,
        oracle_deviation,
    })
}

/// `P_ε(ξ) = Σ_j ψ_j (·, conj ψ_j)_ξ` built from the five branch eigenpairs.
#[derive(Debug, Clone)]
pub struct SpectralProjector {
    pub xi: [f64; 3],
    pub eps: f64,
    pub matrix: CMat,
}

impl SpectralProjector {
    pub fn from_spectrum(mode: &ModeOperator, spec: &HydroSpectrum) -> Self {
        let g = to_complex_mat(&mode.metric);
        let n = mode.dim();
        let mut m = DMatrix::zeros(n, n);
        for p in &spec.points {
            m += &p.psi * (p.psi.transpose() * &g);
        }
        Self { xi: mode.xi, eps: mode.eps, matrix: m }
    }

    pub fn idempotency_residual(&self) -> f64 {
        (&self.matrix * &self.matrix - &self.matrix).norm() / self.matrix.norm()
    }

    /// Number of singular values above `tol · σ_max`.
    pub fn rank(&self, tol: f64) -> usize {
        let sv = self.matrix.clone().singular_values();
        let top = sv.max();
        sv.iter().filter(|s| **s > tol * top).count()
    }
}

/// Hydrodynamic part `S₁` and remainder `S₂` of the kinetic semigroup at one mode.
#[derive(Debug, Clone)]
pub struct SemigroupSplit {
    pub prop: Propagator,
    /// `None` outside the regime `ε|ξ| ≤ r₀`, where `S₁ = 0`.
    pub spectrum: Option<HydroSpectrum>,
}

impl SemigroupSplit {
    pub fn new(mode: &ModeOperator, regime: &Regime) -> Result<Self> {
        let prop = Propagator::new(mode)?;
        let spectrum = if mode.eps * mode.s <= regime.r0 {
            Some(hydrodynamic_spectrum(mode, regime)?)
        } else {
            None
        };
        Ok(Self { prop, spectrum })
    }

    /// `Σ_j e^{τλ_j} (f, conj ψ_j)_ξ ψ_j`.
    pub fn s1(&self, f: &CVec, t: f64) -> CVec {
        let mode = &self.prop.mode;
        let tau = t / (mode.eps * mode.eps);
        let mut out = CVec::zeros(f.len());
        if let Some(spec) = &self.spectrum {
            for p in &spec.points {
                let c = bilinear(f, &p.psi, mode.s) * (p.lambda * tau).exp();
                out += &p.psi * c;
            }
        }
        out
    }

    pub fn split(&self, f: &CVec, t: f64) -> Result<(CVec, CVec)> {
        let full = self.prop.apply(f, t)?;
        let s1 = self.s1(f, t);
        let s2 = full - &s1;
        Ok((s1, s2))
    }

    pub fn gap(&self) -> Option<f64> {
        self.spectrum.as_ref().map(|s| s.gap)
    }

    pub fn projector(&self) -> Option<SpectralProjector> {
        self.spectrum.as_ref().map(|s| SpectralProjector::from_spectrum(&self.prop.mode, s))
    }
}

pub fn split_s1_s2(mode: &ModeOperator, f0: &CVec, t: f64) -> Result<(CVec, CVec)> {
    SemigroupSplit::new(mode, &Regime::default())?.split(f0, t)
}

/// `e^{τλ}` helper for callers working in physical time.
pub fn branch_factor(lambda: Complex, t: f64, eps: f64) -> Complex {
    (lambda * (t / (eps * eps))).exp()
}
