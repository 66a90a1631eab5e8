//! Radial wave-number grids and layered time grids.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VpbError};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    Geometric,
    Gauss,
}

/// Nodes `s_k` and weights `w_k` of a rule for `∫_{min}^{max} · ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SGrid {
    pub min: f64,
    pub max: f64,
    pub spacing: Spacing,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for k in 0..n - 1 {
        let h = 0.5 * (x[k + 1] - x[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}

impl SGrid {
    pub fn new(min: f64, max: f64, count: usize, spacing: Spacing) -> Result<Self> {
        if !(min > 0.0 && max > min && min.is_finite() && max.is_finite()) {
            return Err(VpbError::InvalidArgument(format!(
                "s-grid needs 0 < min < max, got [{min}, {max}] (|xi| = 0 is excluded)"
            )));
        }
        if count < 2 {
            return Err(VpbError::InvalidArgument("s-grid needs at least two points".into()));
        }
        let (points, weights) = match spacing {
            Spacing::Uniform => {
                let p: Vec<f64> = (0..count)
                    .map(|k| min + (max - min) * k as f64 / (count - 1) as f64)
                    .collect();
                let w = trapezoid_weights(&p);
                (p, w)
            }
            Spacing::Geometric => {
                let r = (max / min).ln();
                let p: Vec<f64> = (0..count)
                    .map(|k| min * (r * k as f64 / (count - 1) as f64).exp())
                    .collect();
                let w = trapezoid_weights(&p);
                (p, w)
            }
            Spacing::Gauss => {
                let g = gauss_legendre::<f64>(count)?;
                let (c, h) = (0.5 * (max + min), 0.5 * (max - min));
                (
                    g.nodes.iter().map(|x| c + h * x).collect(),
                    g.weights.iter().map(|w| h * w).collect(),
                )
            }
        };
        Ok(Self { min, max, spacing, points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The same interval with twice as many points.
    pub fn refined(&self) -> Result<Self> {
        let n = match self.spacing {
            Spacing::Gauss => 2 * self.len(),
            _ => 2 * self.len() - 1,
        };
        Self::new(self.min, self.max, n, self.spacing)
    }

    /// `4π Σ s_k² w_k a_k`, the radial synthesis of `∫_{ℝ³} a(|ξ|) dξ`.
    pub fn radial_sum(&self, a: &[f64]) -> f64 {
        4.0 * std::f64::consts::PI
            * self
                .points
                .iter()
                .zip(&self.weights)
                .zip(a)
                .map(|((s, w), a)| s * s * w * a)
                .sum::<f64>()
    }
}

/// `{0} ∪ (0, 10ε] uniform ∪ (10ε, t_max] geometric`, sorted and free of duplicates.
pub fn layered_times(eps: f64, t_max: f64, layer_points: usize, tail_points: usize) -> Result<Vec<f64>> {
    let layer_end = 10.0 * eps;
    if !(t_max > layer_end) {
        return Err(VpbError::InvalidArgument(format!(
            "t_max = {t_max} must exceed the layer window 10*eps = {layer_end}"
        )));
    }
    let mut t = vec![0.0];
    t.extend((1..=layer_points).map(|k| layer_end * k as f64 / layer_points as f64));
    let r = (t_max / layer_end).ln();
    t.extend((1..=tail_points).map(|k| layer_end * (r * k as f64 / tail_points as f64).exp()));
    t.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1.0));
    Ok(t)
}
