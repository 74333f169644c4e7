//! Simulation and analysis of a stochastic capital-labour model: free jobs
//! `u` growing logistically, an unemployed labour force `v` filling them,
//! and one multiplicative Brownian noise on the filling flow.
//!
//! - [`model`]: parameters, drift/diffusion and closed-form regime thresholds.
//! - [`brownian`]: reproducible, keyed Brownian increments.
//! - [`integrators`]: RK4, Euler–Maruyama and Milstein with trajectory recording.
//! - [`analysis`]: time averages, ensembles, extinction detection, strong
//!   order estimation and regime maps.

pub mod analysis;
pub mod brownian;
pub mod error;
pub mod integrators;
pub mod model;

pub use analysis::{
    detect_extinction, ensemble, regime_map, strong_order, time_average, Component, EnsembleStats,
    ExtinctionDetection, Observed, RegimeCell, RegimeSimConfig, StrongOrderConfig, StrongOrderReport,
};
pub use brownian::BrownianPath;
pub use error::{Error, Result};
pub use integrators::{simulate, step_em, step_milstein, step_rk4, Scheme, SimSettings, Trajectory};
pub use model::{classify_regime, Classification, ModelParams, RegimeReport, State};

/// Shortest decimal that parses back to the same `f64`. Integral values keep
/// a trailing `.0`; very large or small magnitudes use exponent notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
