//! Experiment configuration: a single strict JSON document with a versioned
//! `schema` field.  Unknown keys are rejected; defaults are materialized into
//! the echoed config so every report is self-describing.

use crate::potentials::PotentialSpec;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA: &str = "mflab/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    PotentialReport,
    CriticalPoints,
    Gibbs,
    Simulate,
    Pde,
    Transition,
    SaddleExit,
    Inequalities,
    CurieWeiss,
}

/// Potential block: kind plus its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PotentialConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Row-major symmetric matrix for the encoder potential.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa0: Option<f64>,
}

impl PotentialConfig {
    pub fn to_spec(&self) -> Result<PotentialSpec> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("potential.{name} is required for kind {}", self.kind)))
        };
        match self.kind.as_str() {
            "quadratic" => {
                PotentialSpec::quadratic(need(self.kappa, "kappa")?, self.d.unwrap_or(1))
            }
            "quartic1d" => PotentialSpec::quartic1d(need(self.kappa, "kappa")?),
            "pca" => {
                let rows = self
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::Config("potential.matrix is required for kind pca".into()))?;
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config("potential.matrix must be square".into()));
                }
                let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                PotentialSpec::pca(m, need(self.kappa, "kappa")?)
            }
            "curie-weiss" => PotentialSpec::curie_weiss(
                need(self.sigma2, "sigma2")?,
                need(self.kappa0, "kappa0")?,
            ),
            other => Err(Error::Config(format!(
                "unknown potential kind '{other}' (expected quadratic, quartic1d, pca, curie-weiss)"
            ))),
        }
    }
}

fn default_grid_half() -> f64 {
    2.0
}
fn default_grid_points() -> usize {
    201
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PotentialReportConfig {
    #[serde(default = "default_grid_half")]
    pub grid_half: f64,
    #[serde(default = "default_grid_points")]
    pub points: usize,
}

impl Default for PotentialReportConfig {
    fn default() -> Self {
        Self { grid_half: default_grid_half(), points: default_grid_points() }
    }
}

fn default_box_half() -> f64 {
    3.0
}
fn default_grid_per_axis() -> usize {
    9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CriticalPointsConfig {
    #[serde(default = "default_box_half")]
    pub box_half: f64,
    #[serde(default = "default_grid_per_axis")]
    pub grid_per_axis: usize,
}

impl Default for CriticalPointsConfig {
    fn default() -> Self {
        Self { box_half: default_box_half(), grid_per_axis: default_grid_per_axis() }
    }
}

fn default_xi_grid() -> Vec<f64> {
    (-20..=20).map(|k| k as f64 * 0.1).collect()
}
fn default_n_list() -> Vec<f64> {
    vec![16.0, 64.0, 256.0, 1024.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GibbsConfig {
    /// Tilt values ξ at which the tilted measure is tabulated.
    #[serde(default = "default_xi_grid")]
    pub xi_grid: Vec<f64>,
    /// Particle counts for the Curie–Weiss stationary-entropy table.
    #[serde(default = "default_n_list")]
    pub n_list: Vec<f64>,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { xi_grid: default_xi_grid(), n_list: default_n_list() }
    }
}

fn default_dt() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    10.0
}
fn default_n() -> usize {
    64
}
fn default_one() -> usize {
    1
}
fn default_s2() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateConfig {
    /// "toy" (barycenter interaction) or "curie-weiss" (pairwise).
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_one")]
    pub replicas: usize,
    /// Initial Gaussian cloud.
    #[serde(default)]
    pub init_mean: Vec<f64>,
    #[serde(default = "default_s2")]
    pub init_s2: f64,
    /// Reduce to the closed barycenter diffusion instead of the full system.
    #[serde(default)]
    pub reduced: bool,
}

fn default_model() -> String {
    "toy".into()
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: default_model(),
            n: default_n(),
            dt: default_dt(),
            horizon: default_horizon(),
            replicas: default_one(),
            init_mean: Vec::new(),
            init_s2: default_s2(),
            reduced: false,
        }
    }
}

fn default_n_cells() -> usize {
    400
}
fn default_store_every() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PdeConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_n_cells")]
    pub n_cells: usize,
    #[serde(default = "default_store_every")]
    pub store_every: f64,
    #[serde(default)]
    pub init_mean: f64,
    #[serde(default = "default_s2")]
    pub init_s2: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            horizon: default_horizon(),
            n_cells: default_n_cells(),
            store_every: default_store_every(),
            init_mean: 0.0,
            init_s2: default_s2(),
        }
    }
}

fn default_delta_transition() -> f64 {
    0.3
}
fn default_transition_n() -> Vec<f64> {
    vec![12.0, 16.0, 20.0, 24.0, 28.0]
}
fn default_replicas_transition() -> usize {
    300
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TransitionConfig {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub z: Vec<f64>,
    #[serde(default = "default_delta_transition")]
    pub delta: f64,
    #[serde(default = "default_transition_n")]
    pub n_list: Vec<f64>,
    #[serde(default = "default_replicas_transition")]
    pub replicas: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_delta_exit() -> f64 {
    0.5
}
fn default_exit_n() -> Vec<f64> {
    vec![4096.0]
}
fn default_replicas_exit() -> usize {
    2000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SaddleExitConfig {
    pub z: Vec<f64>,
    #[serde(default = "default_delta_exit")]
    pub delta: f64,
    #[serde(default = "default_exit_n")]
    pub n_list: Vec<f64>,
    #[serde(default = "default_replicas_exit")]
    pub replicas: usize,
}

fn default_r_per_decade() -> usize {
    8
}
fn default_r_min() -> f64 {
    1e-8
}
fn default_r_max() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct InequalitiesConfig {
    #[serde(default = "default_box_half")]
    pub box_half: f64,
    #[serde(default = "default_grid_per_axis")]
    pub grid_per_axis: usize,
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_r_per_decade")]
    pub r_per_decade: usize,
}

impl Default for InequalitiesConfig {
    fn default() -> Self {
        Self {
            box_half: default_box_half(),
            grid_per_axis: default_grid_per_axis(),
            r_min: default_r_min(),
            r_max: default_r_max(),
            r_per_decade: default_r_per_decade(),
        }
    }
}

fn default_kappa0() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CurieWeissConfig {
    #[serde(default = "default_kappa0")]
    pub kappa0: f64,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<f64>,
}

impl Default for CurieWeissConfig {
    fn default() -> Self {
        Self { kappa0: default_kappa0(), n_list: default_n_list() }
    }
}

/// The top-level experiment document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub schema: String,
    pub command: Command,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential_report: Option<PotentialReportConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical_points: Option<CriticalPointsConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gibbs: Option<GibbsConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transition: Option<TransitionConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saddle_exit: Option<SaddleExitConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inequalities: Option<InequalitiesConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curie_weiss: Option<CurieWeissConfig>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Config(format!(
                "unsupported schema '{}' (expected '{SCHEMA}')",
                self.schema
            )));
        }
        // The potential must construct.
        let spec = self.potential.to_spec()?;
        match self.command {
            Command::Transition => {
                let t = self
                    .transition
                    .as_ref()
                    .ok_or_else(|| Error::Config("transition block is required".into()))?;
                for (name, v) in [("x0", &t.x0), ("x1", &t.x1), ("z", &t.z)] {
                    if v.len() != spec.d {
                        return Err(Error::Config(format!(
                            "transition.{name} must have dimension {}",
                            spec.d
                        )));
                    }
                }
            }
            Command::SaddleExit => {
                let s = self
                    .saddle_exit
                    .as_ref()
                    .ok_or_else(|| Error::Config("saddle-exit block is required".into()))?;
                if s.z.len() != spec.d {
                    return Err(Error::Config(format!(
                        "saddle-exit.z must have dimension {}",
                        spec.d
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Fill in every default of the active command block so the echoed config
    /// is self-describing and reproduces the run when re-fed as input.
    pub fn materialized(&self) -> Self {
        let mut cfg = self.clone();
        match cfg.command {
            Command::PotentialReport => {
                cfg.potential_report.get_or_insert_with(Default::default);
            }
            Command::CriticalPoints => {
                cfg.critical_points.get_or_insert_with(Default::default);
            }
            Command::Gibbs => {
                cfg.gibbs.get_or_insert_with(Default::default);
            }
            Command::Simulate => {
                let s = cfg.simulate.get_or_insert_with(Default::default);
                if s.init_mean.is_empty() {
                    if let Ok(spec) = cfg.potential.to_spec() {
                        s.init_mean = vec![0.0; spec.d];
                    }
                }
            }
            Command::Pde => {
                cfg.pde.get_or_insert_with(Default::default);
            }
            Command::Transition | Command::SaddleExit => {}
            Command::Inequalities => {
                cfg.inequalities.get_or_insert_with(Default::default);
            }
            Command::CurieWeiss => {
                cfg.curie_weiss.get_or_insert_with(Default::default);
            }
        }
        cfg
    }
}

pub fn vec_to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_materialize() {
        let text = r#"{
            "schema": "mflab/1",
            "command": "critical-points",
            "potential": {"kind": "quartic1d", "kappa": 1.0},
            "seed": 7
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        let m = cfg.materialized();
        assert!(m.critical_points.is_some());
        // Echo round trip.
        let echo = serde_json::to_string(&m).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&echo).unwrap();
        back.validate().unwrap();
        assert_eq!(back.seed, 7);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = r#"{
            "schema": "mflab/1",
            "command": "gibbs",
            "potential": {"kind": "quartic1d", "kappa": 1.0},
            "bogus": 1
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }

    #[test]
    fn schema_and_kind_errors() {
        let bad_schema = r#"{
            "schema": "mflab/999",
            "command": "gibbs",
            "potential": {"kind": "quartic1d", "kappa": 1.0}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(bad_schema).unwrap();
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let bad_kind = r#"{
            "schema": "mflab/1",
            "command": "gibbs",
            "potential": {"kind": "septic"}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(bad_kind).unwrap();
        assert!(cfg.validate().is_err());
    }
}
