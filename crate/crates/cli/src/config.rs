use std::fs;
use std::path::{Path, PathBuf};

use caplab::{ModelParams, Scheme, State};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_x0() -> State {
    State::new(50.0, 10.0)
}

fn default_dt() -> f64 {
    0.01
}

fn default_scheme() -> Scheme {
    Scheme::Milstein
}

fn default_n_paths() -> usize {
    100
}

fn default_seed() -> u64 {
    20240101
}

fn default_stride() -> usize {
    1
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment: model, initial state, grid, ensemble size and output
/// directory. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub params: ModelParams,
    #[serde(default = "default_x0")]
    pub x0: State,
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(CliError::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(CliError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        let ratio = self.horizon / self.dt;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(CliError::Config(format!(
                "dt {} does not divide horizon {}",
                self.dt, self.horizon
            )));
        }
        if self.record_stride == 0 {
            return Err(CliError::Config("record_stride must be at least 1".into()));
        }
        if self.n_paths == 0 {
            return Err(CliError::Config("n_paths must be at least 1".into()));
        }
        if !(self.x0.is_finite() && self.x0.is_nonnegative()) {
            return Err(CliError::Config("x0 must lie in the nonnegative quadrant".into()));
        }
        Ok(())
    }
}
