use std::path::PathBuf;
use std::process::ExitCode;

use caplab::fmt_f64;
use caplab_cli::{
    parse_grid, run_convergence, run_ensemble, run_simulate, run_sweep, run_thresholds, CliError,
    Overrides, ScenarioConfig,
};
use clap::{Parser, Subcommand};

/// Simulate and analyse the stochastic capital-labour model.
#[derive(Debug, Parser)]
#[command(name = "caplab", version)]
struct Cli {
    /// Scenario config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `outputs` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of paths, overriding the config.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Suppress the stdout summary.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Regime thresholds and predicted classification.
    Thresholds,
    /// One stochastic path plus the deterministic companion.
    Simulate,
    /// Per-time ensemble statistics.
    Ensemble,
    /// Empirical strong order from coupled Brownian paths.
    Convergence {
        /// First coarsening exponent: the ladder starts at dt * 2^first_level.
        #[arg(long, default_value_t = 4)]
        first_level: u32,
        /// Last coarsening exponent.
        #[arg(long, default_value_t = 8)]
        levels: u32,
    },
    /// Predicted versus observed regime over an (m, sigma) grid.
    Sweep {
        /// Comma-separated m values.
        #[arg(long)]
        m_grid: String,
        /// Comma-separated sigma values.
        #[arg(long)]
        sigma_grid: String,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <file> is required".into()))?;
    let overrides = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        paths: cli.paths,
    };
    let cfg = overrides.apply(ScenarioConfig::load(path)?)?;
    let say = |line: String| {
        if !cli.quiet {
            println!("{line}");
        }
    };
    match cli.command {
        Command::Thresholds => {
            let report = run_thresholds(&cfg)?;
            say(serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Simulate => {
            let out = run_simulate(&cfg)?;
            let (s, d) = (out.stochastic.terminal(), out.deterministic.terminal());
            say(format!(
                "stochastic terminal u={} v={} clamps={}",
                fmt_f64(s.u),
                fmt_f64(s.v),
                out.stochastic.clamp_count()
            ));
            say(format!("deterministic terminal u={} v={}", fmt_f64(d.u), fmt_f64(d.v)));
        }
        Command::Ensemble => {
            let stats = run_ensemble(&cfg)?;
            say(format!(
                "paths={} terminal v mean={} clamp rate={}",
                stats.n_paths,
                fmt_f64(stats.terminal_v_mean()),
                fmt_f64(stats.clamp_rate)
            ));
        }
        Command::Convergence { first_level, levels } => {
            let report = run_convergence(&cfg, first_level, levels)?;
            say(serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Sweep { m_grid, sigma_grid } => {
            let m_grid = parse_grid(&m_grid)?;
            let sigma_grid = parse_grid(&sigma_grid)?;
            let cells = run_sweep(&cfg, &m_grid, &sigma_grid)?;
            for cell in &cells {
                match cell {
                    Ok(c) => say(format!(
                        "m={} sigma={} predicted={} observed={}",
                        fmt_f64(c.m),
                        fmt_f64(c.sigma),
                        c.predicted,
                        c.observed.as_str()
                    )),
                    Err(f) => eprintln!("m={} sigma={}: {}", fmt_f64(f.m), fmt_f64(f.sigma), f.error),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
