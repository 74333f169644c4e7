//! Time averages, ensemble statistics, extinction detection, empirical strong
//! convergence orders and regime maps.
//!
//! Every multi-path routine simulates paths in parallel but reduces them in
//! `path_index` order, so results do not depend on the number of workers.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::integrators::{simulate, step_count, Scheme, SimSettings, Trajectory};
use crate::model::{classify_regime, persistence_floor, Classification, ModelParams, State};

/// Terminal-mean `v` below which a cell is observed as extinct.
pub const EXTINCTION_EPSILON: f64 = 1e-2;
/// Persistence threshold used when the model has no persistence floor.
pub const DEFAULT_PERSISTENCE_EPSILON: f64 = 1e-1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    U,
    V,
}

/// Running time average `(1/T) ∫_0^T x(s) ds` by the trapezoidal rule over
/// the full-resolution step grid.
pub fn time_average(traj: &Trajectory, component: Component) -> Result<f64> {
    if traj.states.len() < 2 {
        return Err(Error::Config(
            "time average needs a trajectory with at least two points".into(),
        ));
    }
    let integral = match component {
        Component::U => traj.integral.u,
        Component::V => traj.integral.v,
    };
    Ok(integral / traj.horizon())
}

/// Nearest-rank quantile of an ascending slice: the value at rank
/// `ceil(q n)`, clamped to `[1, n]`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Mean, population standard deviation and 5/50/95% nearest-rank quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl Summary {
    /// `values` must be nonempty; it is sorted in place.
    fn of(values: &mut [f64]) -> Self {
        let n = values.len() as f64;
        let mut mean = values.iter().sum::<f64>() / n;
        let mut var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        values.sort_by(f64::total_cmp);
        // identical samples: sum / n need not round back to the sample value
        if values[0] == values[values.len() - 1] {
            mean = values[0];
            var = 0.0;
        }
        Summary {
            mean,
            std: var.sqrt(),
            q05: nearest_rank(values, 0.05),
            q50: nearest_rank(values, 0.50),
            q95: nearest_rank(values, 0.95),
        }
    }
}

/// What one path of an ensemble looked like, at full resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub path_index: u64,
    pub terminal: State,
    pub u_time_avg: f64,
    pub v_time_avg: f64,
    pub clamp_count: usize,
    pub max_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub u: Vec<Summary>,
    pub v: Vec<Summary>,
    pub n_paths: usize,
    /// Fraction of paths with at least one positivity clamp.
    pub clamp_rate: f64,
    pub paths: Vec<PathSummary>,
}

impl EnsembleStats {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,u_mean,u_std,u_q05,u_q50,u_q95,v_mean,v_std,v_q05,v_q50,v_q95")?;
        for ((t, u), v) in self.times.iter().zip(&self.u).zip(&self.v) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt_f64(*t),
                fmt_f64(u.mean),
                fmt_f64(u.std),
                fmt_f64(u.q05),
                fmt_f64(u.q50),
                fmt_f64(u.q95),
                fmt_f64(v.mean),
                fmt_f64(v.std),
                fmt_f64(v.q05),
                fmt_f64(v.q50),
                fmt_f64(v.q95),
            )?;
        }
        Ok(())
    }

    /// Mean over paths of the terminal `v`.
    pub fn terminal_v_mean(&self) -> f64 {
        self.v.last().map_or(f64::NAN, |s| s.mean)
    }

    /// Mean over paths of the pathwise time average of `v`.
    pub fn v_time_avg_mean(&self) -> f64 {
        self.paths.iter().map(|p| p.v_time_avg).sum::<f64>() / self.paths.len() as f64
    }
}

/// Simulates path `path_index` of an ensemble keyed by `seed`.
pub fn simulate_path(
    p: &ModelParams,
    x0: State,
    settings: &SimSettings,
    seed: u64,
    path_index: u64,
) -> Result<Trajectory> {
    let wrap = |e: Error| Error::Path {
        path_index,
        source: Box::new(e),
    };
    let path = if settings.scheme.is_stochastic() {
        let n = settings.n_steps().map_err(wrap)?;
        Some(BrownianPath::generate(seed, path_index, settings.dt, n).map_err(wrap)?)
    } else {
        None
    };
    simulate(p, x0, settings, path.as_ref()).map_err(wrap)
}

/// Runs paths `0..n_paths` and aggregates them per recorded time.
pub fn ensemble(
    p: &ModelParams,
    x0: State,
    settings: &SimSettings,
    n_paths: usize,
    seed: u64,
) -> Result<EnsembleStats> {
    if n_paths == 0 {
        return Err(Error::Config("an ensemble needs at least one path".into()));
    }
    let trajectories = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(p, x0, settings, seed, i))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let times = trajectories[0].times.clone();
    let rows = times.len();
    let (u, v): (Vec<Summary>, Vec<Summary>) = (0..rows)
        .into_par_iter()
        .map(|k| {
            let mut us: Vec<f64> = trajectories.iter().map(|t| t.states[k].u).collect();
            let mut vs: Vec<f64> = trajectories.iter().map(|t| t.states[k].v).collect();
            (Summary::of(&mut us), Summary::of(&mut vs))
        })
        .unzip();

    let paths = trajectories
        .iter()
        .zip(0u64..)
        .map(|(t, i)| {
            Ok(PathSummary {
                path_index: i,
                terminal: t.terminal(),
                u_time_avg: time_average(t, Component::U)?,
                v_time_avg: time_average(t, Component::V)?,
                clamp_count: t.clamp_count(),
                max_total: t.max_total,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let clamped = paths.iter().filter(|p| p.clamp_count > 0).count();
    Ok(EnsembleStats {
        times,
        u,
        v,
        n_paths,
        clamp_rate: clamped as f64 / n_paths as f64,
        paths,
    })
}

/// Outcome of [`detect_extinction`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtinctionDetection {
    /// `v` stays below the threshold on `[time, time + window]`.
    Extinct { time: f64 },
    NotDetected,
    /// The window is longer than the recorded horizon.
    InsufficientHorizon,
}

impl ExtinctionDetection {
    pub fn time(&self) -> Option<f64> {
        match self {
            ExtinctionDetection::Extinct { time } => Some(*time),
            _ => None,
        }
    }
}

/// Earliest recorded time `tau` with `v(t) < threshold` for every recorded
/// `t` in `[tau, tau + window]`, where the window must end within the
/// horizon.
pub fn detect_extinction(traj: &Trajectory, threshold: f64, window: f64) -> Result<ExtinctionDetection> {
    if !(threshold > 0.0 && window > 0.0) {
        return Err(Error::Config(format!(
            "threshold ({threshold}) and window ({window}) must be positive"
        )));
    }
    let horizon = traj.horizon();
    let slack = 1e-9 * horizon.max(window);
    if window > horizon + slack {
        return Ok(ExtinctionDetection::InsufficientHorizon);
    }
    // first_above[i]: smallest j >= i with v_j >= threshold, or len.
    let n = traj.states.len();
    let mut first_above = vec![n; n + 1];
    for i in (0..n).rev() {
        first_above[i] = if traj.states[i].v >= threshold { i } else { first_above[i + 1] };
    }
    for (i, &tau) in traj.times.iter().enumerate() {
        if tau + window > horizon + slack {
            break;
        }
        let j = first_above[i];
        if j == n || traj.times[j] > tau + window + slack {
            return Ok(ExtinctionDetection::Extinct { time: tau });
        }
    }
    Ok(ExtinctionDetection::NotDetected)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongOrderConfig {
    pub scheme: Scheme,
    pub x0: State,
    pub horizon: f64,
    /// Step of the reference solution.
    pub dt_fine: f64,
    /// First coarsening exponent in the ladder (`dt = dt_fine * 2^level`).
    pub first_level: u32,
    /// Last coarsening exponent in the ladder.
    pub levels: u32,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub level: u32,
    pub dt: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongOrderReport {
    pub slope: f64,
    /// Root-mean-square deviation of `log2 error` from the fitted line.
    pub residual: f64,
    pub levels: Vec<LevelError>,
}

/// Ordinary least squares `y = a + b x`; returns `(b, rms residual)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    (slope, (sse / n).sqrt())
}

/// Empirical strong order from pathwise-coupled runs.
///
/// Each path draws one Brownian path at `dt_fine`, integrates the reference
/// solution on it, then integrates again on its coarsenings by `2^level` for
/// every level of the ladder. The error at a level is the mean over paths of
/// `|u_T - u_T^ref| + |v_T - v_T^ref|`; the slope is the least-squares fit of
/// `log2 error` against `log2 dt`.
pub fn strong_order(p: &ModelParams, cfg: &StrongOrderConfig) -> Result<StrongOrderReport> {
    if !cfg.scheme.is_stochastic() {
        return Err(Error::Config("strong order needs a stochastic scheme".into()));
    }
    if cfg.first_level == 0 || cfg.levels < cfg.first_level + 2 {
        return Err(Error::Config(format!(
            "ladder {}..={} needs at least three levels starting from 1 or above",
            cfg.first_level, cfg.levels
        )));
    }
    if cfg.levels > 30 {
        return Err(Error::Config(format!("{} levels is too many", cfg.levels)));
    }
    if cfg.n_paths == 0 {
        return Err(Error::Config("strong order needs at least one path".into()));
    }
    let n_fine = step_count(cfg.horizon, cfg.dt_fine)?;
    let coarsest = 1usize << cfg.levels;
    if n_fine % coarsest != 0 {
        return Err(Error::Config(format!(
            "dt_fine * 2^{} does not divide the horizon ({n_fine} fine steps)",
            cfg.levels
        )));
    }
    let ladder: Vec<u32> = (cfg.first_level..=cfg.levels).collect();

    let per_path = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let wrap = |e: Error| Error::Path {
                path_index: i,
                source: Box::new(e),
            };
            let fine = BrownianPath::generate(cfg.seed, i, cfg.dt_fine, n_fine).map_err(wrap)?;
            let reference = simulate(
                p,
                cfg.x0,
                &SimSettings::new(cfg.scheme, cfg.horizon, cfg.dt_fine),
                Some(&fine),
            )
            .map_err(wrap)?
            .terminal();
            ladder
                .iter()
                .map(|&level| {
                    let coarse = fine.coarsen(1 << level)?;
                    let settings = SimSettings::new(cfg.scheme, cfg.horizon, coarse.dt());
                    let end = simulate(p, cfg.x0, &settings, Some(&coarse))?.terminal();
                    Ok((end.u - reference.u).abs() + (end.v - reference.v).abs())
                })
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let levels: Vec<LevelError> = ladder
        .iter()
        .enumerate()
        .map(|(j, &level)| LevelError {
            level,
            dt: cfg.dt_fine * (1u64 << level) as f64,
            error: per_path.iter().map(|errs| errs[j]).sum::<f64>() / cfg.n_paths as f64,
        })
        .collect();
    if let Some(bad) = levels.iter().find(|l| !(l.error > 0.0 && l.error.is_finite())) {
        return Err(Error::Numerical {
            time: cfg.horizon,
            reason: format!("error at level {} is {}, cannot take its logarithm", bad.level, bad.error),
        });
    }
    let xs: Vec<f64> = levels.iter().map(|l| l.dt.log2()).collect();
    let ys: Vec<f64> = levels.iter().map(|l| l.error.log2()).collect();
    let (slope, residual) = fit_line(&xs, &ys);
    Ok(StrongOrderReport {
        slope,
        residual,
        levels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observed {
    VExtinct,
    VPersists,
    Unclear,
}

impl Observed {
    pub fn as_str(&self) -> &'static str {
        match self {
            Observed::VExtinct => "v_extinct",
            Observed::VPersists => "v_persists",
            Observed::Unclear => "unclear",
        }
    }
}

/// Simulation settings for every cell of a regime map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSimConfig {
    pub settings: SimSettings,
    pub x0: State,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeCell {
    pub m: f64,
    pub sigma: f64,
    pub predicted: Classification,
    pub observed: Observed,
    /// Ensemble mean of the pathwise time average of `v`.
    pub v_time_avg: f64,
    pub terminal_v_mean: f64,
}

/// A cell that could not be evaluated; the sweep goes on without it.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub m: f64,
    pub sigma: f64,
    pub error: Error,
}

pub type CellResult = std::result::Result<RegimeCell, CellFailure>;

/// Classifies what an ensemble shows, using only simulation output.
pub fn observe(stats: &EnsembleStats, persistence_epsilon: f64) -> Observed {
    if stats.terminal_v_mean() < EXTINCTION_EPSILON {
        Observed::VExtinct
    } else if stats.v_time_avg_mean() > persistence_epsilon {
        Observed::VPersists
    } else {
        Observed::Unclear
    }
}

fn evaluate_cell(base: &ModelParams, m: f64, sigma: f64, sim: &RegimeSimConfig) -> Result<RegimeCell> {
    let p = ModelParams::new(base.r(), base.k(), m, base.d(), sigma)?;
    let predicted = classify_regime(&p)?.classification;
    let stats = ensemble(&p, sim.x0, &sim.settings, sim.n_paths, sim.seed)?;
    let eps_p = persistence_floor(&p).map_or(DEFAULT_PERSISTENCE_EPSILON, |f| 0.5 * f);
    Ok(RegimeCell {
        m,
        sigma,
        predicted,
        observed: observe(&stats, eps_p),
        v_time_avg: stats.v_time_avg_mean(),
        terminal_v_mean: stats.terminal_v_mean(),
    })
}

/// Predicted and observed regime for every `(m, sigma)` in the grid product,
/// `m` varying slowest.
pub fn regime_map(
    base: &ModelParams,
    m_grid: &[f64],
    sigma_grid: &[f64],
    sim: &RegimeSimConfig,
) -> Result<Vec<CellResult>> {
    if m_grid.is_empty() || sigma_grid.is_empty() {
        return Err(Error::Config("regime map grids must be nonempty".into()));
    }
    Ok(m_grid
        .iter()
        .flat_map(|&m| sigma_grid.iter().map(move |&sigma| (m, sigma)))
        .map(|(m, sigma)| {
            evaluate_cell(base, m, sigma, sim).map_err(|error| CellFailure { m, sigma, error })
        })
        .collect())
}

/// Writes `m,sigma,predicted,observed,v_time_avg`. Failed cells carry
/// `error` in both label columns and an empty average.
pub fn write_regime_csv<W: Write>(cells: &[CellResult], mut w: W) -> io::Result<()> {
    writeln!(w, "m,sigma,predicted,observed,v_time_avg")?;
    for cell in cells {
        match cell {
            Ok(c) => writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(c.m),
                fmt_f64(c.sigma),
                c.predicted.as_str(),
                c.observed.as_str(),
                fmt_f64(c.v_time_avg)
            )?,
            Err(f) => writeln!(w, "{},{},error,error,", fmt_f64(f.m), fmt_f64(f.sigma))?,
        }
    }
    Ok(())
}
