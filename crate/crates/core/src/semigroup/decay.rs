//! Decay-rate fits of norm histories.

use serde::Serialize;

use crate::error::{Result, VpbError};
use crate::fit::line_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecayModel {
    /// `(1+t)^{−r}`
    Poly,
    /// `e^{−rt}`
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub rate: f64,
    pub r_squared: f64,
    pub samples: usize,
}

pub const MIN_SAMPLES: usize = 8;

/// Least-squares fit of `values` against `times` in log coordinates over `t ≥ t_start`.
///
/// The tail must be non-increasing (to a relative slack of 1e-12); otherwise the
/// fit is refused.
pub fn fit_decay(times: &[f64], values: &[f64], model: DecayModel, t_start: f64) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(VpbError::Fit("times and values differ in length".into()));
    }
    let (t, v): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t_start)
        .map(|(a, b)| (*a, *b))
        .unzip();
    if t.len() < MIN_SAMPLES {
        return Err(VpbError::Fit(format!(
            "{} samples past t = {t_start}; need at least {MIN_SAMPLES}",
            t.len()
        )));
    }
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err(VpbError::Fit("decay fit needs positive values".into()));
    }
    if let Some(k) = v.windows(2).position(|w| w[1] > w[0] * (1.0 + 1e-12)) {
        return Err(VpbError::Fit(format!(
            "non-monotone tail: value rises from {:.6e} to {:.6e} at t = {}",
            v[k],
            v[k + 1],
            t[k + 1]
        )));
    }
    let x: Vec<f64> = match model {
        DecayModel::Poly => t.iter().map(|t| t.ln_1p()).collect(),
        DecayModel::Exp => t.clone(),
    };
    let y: Vec<f64> = v.iter().map(|v| v.ln()).collect();
    let f = line_fit(&x, &y)?;
    Ok(DecayFit { model, rate: -f.slope, r_squared: f.r_squared, samples: t.len() })
}
