//! Experiment configuration: a versioned TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vpb_core::collision::Backend;
use vpb_core::limit_lab::{layered_times, CompatPolicy, DataKind, SGrid, Spacing};
use vpb_core::velocity_space::default_quad_order;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub max_degree: usize,
    /// Defaults to the smallest order resolving products of basis functions.
    #[serde(default)]
    pub quad_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SGridConfig {
    #[serde(default = "default_s_min")]
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_s_min() -> f64 {
    0.05
}

fn default_spacing() -> Spacing {
    Spacing::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGridConfig {
    pub t_max: f64,
    /// Samples inside the layer window `[0, 10ε]`.
    pub layer_points: usize,
    /// Geometric samples on `[10ε, t_max]`.
    pub tail_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_oracle_rtol")]
    pub oracle_rtol: f64,
    #[serde(default = "default_r0")]
    pub r0: f64,
    #[serde(default = "default_r1")]
    pub r1: f64,
    /// Pass threshold for the structural checks of `check`.
    #[serde(default = "default_structure")]
    pub structure: f64,
}

fn default_oracle_rtol() -> f64 {
    1e-11
}
fn default_r0() -> f64 {
    0.3
}
fn default_r1() -> f64 {
    0.1
}
fn default_structure() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { oracle_rtol: default_oracle_rtol(), r0: default_r0(), r1: default_r1(), structure: default_structure() }
    }
}

/// Radial profile `amplitude · exp(−(s/width)²)` carried by the initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_kind")]
    pub kind: DataKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "default_compat")]
    pub compat: CompatPolicy,
    /// Raw `[n, m₁, m₂, m₃, q]` amplitudes for well-prepared data; when absent the
    /// built-in compatible profile is used. Incompatible values are handled per `compat`.
    #[serde(default)]
    pub macro_state: Option<[f64; 5]>,
}

fn default_kind() -> DataKind {
    DataKind::WellPrepared
}
fn one() -> f64 {
    1.0
}
fn default_compat() -> CompatPolicy {
    CompatPolicy::Correct
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { kind: default_kind(), amplitude: 1.0, width: 1.0, compat: default_compat(), macro_state: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    pub eps_list: Vec<f64>,
    pub basis: BasisConfig,
    pub backend: Backend,
    pub s_grid: SGridConfig,
    pub time_grid: TimeGridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub data: DataConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("vpb-out")
}

fn invalid(field: &str, msg: impl Into<String>) -> CliError {
    CliError::Config { field: field.into(), message: msg.into() }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {} (this build reads {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.eps_list.is_empty() {
            return Err(invalid("eps_list", "must not be empty"));
        }
        for (i, e) in self.eps_list.iter().enumerate() {
            if !(*e > 0.0 && *e < 1.0) {
                return Err(invalid(
                    &format!("eps_list[{i}]"),
                    format!("{e} is outside (0,1); the Knudsen parameter must satisfy 0 < eps < 1"),
                ));
            }
        }
        if self.basis.max_degree < 2 {
            return Err(invalid("basis.max_degree", "must be at least 2 to carry the collision invariants"));
        }
        if let Some(q) = self.basis.quad_order {
            if q <= self.basis.max_degree {
                return Err(invalid("basis.quad_order", "must exceed basis.max_degree"));
            }
        }
        let g = &self.s_grid;
        if g.count == 0 {
            return Err(invalid("s_grid.count", "grid must not be empty"));
        }
        if !(g.min > 0.0) {
            return Err(invalid("s_grid.min", "must be positive; |xi| = 0 is excluded"));
        }
        if !(g.max > g.min) {
            return Err(invalid("s_grid.max", "must exceed s_grid.min"));
        }
        let t = &self.time_grid;
        if t.layer_points == 0 || t.tail_points == 0 {
            return Err(invalid("time_grid", "layer_points and tail_points must be positive"));
        }
        for (i, e) in self.eps_list.iter().enumerate() {
            if !(t.t_max > 10.0 * e) {
                return Err(invalid(
                    "time_grid.t_max",
                    format!("must exceed the layer window 10*eps = {} of eps_list[{i}]", 10.0 * e),
                ));
            }
        }
        let tol = &self.tolerances;
        if !(tol.oracle_rtol > 0.0 && tol.r0 > 0.0 && tol.r1 > 0.0 && tol.structure > 0.0) {
            return Err(invalid("tolerances", "all tolerances must be positive"));
        }
        if !(self.data.width > 0.0 && self.data.amplitude.is_finite()) {
            return Err(invalid("data", "width must be positive and amplitude finite"));
        }
        self.backend.validate().map_err(|e| invalid("backend", e.to_string()))?;
        Ok(())
    }

    pub fn quad_order(&self) -> usize {
        self.basis.quad_order.unwrap_or_else(|| default_quad_order(self.basis.max_degree))
    }

    pub fn grid(&self) -> Result<SGrid, CliError> {
        let g = &self.s_grid;
        SGrid::new(g.min, g.max, g.count, g.spacing).map_err(|e| invalid("s_grid", e.to_string()))
    }

    pub fn times(&self, eps: f64) -> vpb_core::Result<Vec<f64>> {
        let t = &self.time_grid;
        layered_times(eps, t.t_max, t.layer_points, t.tail_points)
    }

    pub fn profile(&self) -> impl Fn(f64) -> f64 {
        let (a, w) = (self.data.amplitude, self.data.width);
        move |s: f64| a * (-(s / w) * (s / w)).exp()
    }

    /// Hex prefix of the SHA-256 of the canonical JSON form, ignoring where output goes.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const SAMPLE: &str = r#"
schema_version = 1
seed = 3
eps_list = [0.1, 0.05]

[basis]
max_degree = 4

[backend]
kind = "synthetic"
nu_bar = 2.0

[s_grid]
max = 2.0
count = 4

[time_grid]
t_max = 2.0
layer_points = 4
tail_points = 4
"#;

    #[test]
    fn sample_parses_with_defaults() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.backend, Backend::Synthetic { nu_bar: 2.0 });
        assert_eq!(c.s_grid.min, 0.05);
        assert_eq!(c.quad_order(), default_quad_order(4));
        assert_eq!(c.data.kind, DataKind::WellPrepared);
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn knudsen_range_is_reported_by_field() {
        let bad = SAMPLE.replace("[0.1, 0.05]", "[0.1, 1.0]");
        let e = ExperimentConfig::from_toml(&bad).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("eps_list[1]") && msg.contains("(0,1)"), "{msg}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_carry_a_location() {
        let bad = SAMPLE.replace("seed = 3", "seed = 3\nsede = 4");
        let msg = ExperimentConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(msg.contains("sede") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn schema_version_is_checked() {
        let bad = SAMPLE.replace("schema_version = 1", "schema_version = 2");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }
}
