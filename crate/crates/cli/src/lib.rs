//! Subcommand implementations behind the `caplab` binary.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use caplab::analysis::{write_regime_csv, RegimeSimConfig, StrongOrderConfig};
use caplab::{
    analysis, classify_regime, ensemble, regime_map, strong_order, Error, RegimeReport, Scheme,
    SimSettings, StrongOrderReport,
};
use thiserror::Error;

pub use config::ScenarioConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e.root() {
            Error::InvalidParameter { .. } | Error::Config(_) => CliError::Config(msg),
            Error::Domain(_) => CliError::Domain(msg),
            Error::Numerical { .. } => CliError::Numerical(msg),
            Error::Path { .. } => unreachable!("root strips path wrappers"),
        }
    }
}

/// Overrides applied on top of a loaded config by the common flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: ScenarioConfig) -> Result<ScenarioConfig, CliError> {
        if let Some(out) = &self.out {
            cfg.outputs = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(paths) = self.paths {
            cfg.n_paths = paths;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create_file(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Config(format!("write failed: {e}"))
}

fn write_with<F>(dir: &Path, name: &str, body: F) -> Result<PathBuf, CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create_file(dir, name)?;
    body(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
    Ok(dir.join(name))
}

fn settings(cfg: &ScenarioConfig, scheme: Scheme) -> SimSettings {
    SimSettings::new(scheme, cfg.horizon, cfg.dt).with_stride(cfg.record_stride)
}

/// Writes `thresholds.json` and returns the report.
pub fn run_thresholds(cfg: &ScenarioConfig) -> Result<RegimeReport, CliError> {
    let report = classify_regime(&cfg.params)?;
    write_with(&cfg.outputs, "thresholds.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)
    })?;
    Ok(report)
}

pub struct SimulateOutput {
    pub stochastic: caplab::Trajectory,
    pub deterministic: caplab::Trajectory,
}

/// Writes `stochastic.csv` (path 0 of the configured scheme) and
/// `deterministic.csv` (RK4) on the same grid.
pub fn run_simulate(cfg: &ScenarioConfig) -> Result<SimulateOutput, CliError> {
    if !cfg.scheme.is_stochastic() {
        return Err(CliError::Config(
            "simulate needs a stochastic scheme (euler-maruyama or milstein)".into(),
        ));
    }
    let stochastic = analysis::simulate_path(&cfg.params, cfg.x0, &settings(cfg, cfg.scheme), cfg.seed, 0)?;
    let deterministic = analysis::simulate_path(
        &cfg.params,
        cfg.x0,
        &settings(cfg, Scheme::Rk4Deterministic),
        cfg.seed,
        0,
    )?;
    write_with(&cfg.outputs, "stochastic.csv", |w| stochastic.write_csv(w))?;
    write_with(&cfg.outputs, "deterministic.csv", |w| deterministic.write_csv(w))?;
    Ok(SimulateOutput {
        stochastic,
        deterministic,
    })
}

/// Writes `ensemble.csv`.
pub fn run_ensemble(cfg: &ScenarioConfig) -> Result<caplab::EnsembleStats, CliError> {
    let stats = ensemble(&cfg.params, cfg.x0, &settings(cfg, cfg.scheme), cfg.n_paths, cfg.seed)?;
    write_with(&cfg.outputs, "ensemble.csv", |w| stats.write_csv(w))?;
    Ok(stats)
}

/// Writes `convergence.json`. The config's `dt` is the reference step and the
/// ladder runs over `dt * 2^level` for `level` in `first_level..=levels`.
pub fn run_convergence(
    cfg: &ScenarioConfig,
    first_level: u32,
    levels: u32,
) -> Result<StrongOrderReport, CliError> {
    let report = strong_order(
        &cfg.params,
        &StrongOrderConfig {
            scheme: cfg.scheme,
            x0: cfg.x0,
            horizon: cfg.horizon,
            dt_fine: cfg.dt,
            first_level,
            levels,
            n_paths: cfg.n_paths,
            seed: cfg.seed,
        },
    )?;
    write_with(&cfg.outputs, "convergence.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)
    })?;
    Ok(report)
}

/// Writes `sweep.csv`. Individual cell failures are recorded in the file and
/// returned alongside the cells; only an empty grid fails the run.
pub fn run_sweep(
    cfg: &ScenarioConfig,
    m_grid: &[f64],
    sigma_grid: &[f64],
) -> Result<Vec<analysis::CellResult>, CliError> {
    let sim = RegimeSimConfig {
        settings: settings(cfg, cfg.scheme),
        x0: cfg.x0,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
    };
    let cells = regime_map(&cfg.params, m_grid, sigma_grid, &sim)?;
    write_with(&cfg.outputs, "sweep.csv", |w| write_regime_csv(&cells, w))?;
    Ok(cells)
}

/// Parses a comma-separated list of numbers; empty lists are config errors.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Config(format!("'{s}' is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Config("grid must contain at least one value".into()));
    }
    Ok(values)
}
