//! Fixed-step integrators: classical RK4 for the deterministic system,
//! Euler–Maruyama and Milstein for the stochastic one.
//!
//! Stochastic steps that overshoot below zero are clamped componentwise and
//! the event is logged on the trajectory.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::model::{diffusion, drift, ModelParams, State};

/// Relative size below which a negative RK4 component is treated as rounding
/// noise and set to zero.
const RK4_CLAMP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "rk4", alias = "RK4Deterministic")]
    Rk4Deterministic,
    #[serde(rename = "euler-maruyama", alias = "em", alias = "EulerMaruyama")]
    EulerMaruyama,
    #[serde(rename = "milstein", alias = "Milstein")]
    Milstein,
}

impl Scheme {
    pub fn is_stochastic(&self) -> bool {
        !matches!(self, Scheme::Rk4Deterministic)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Rk4Deterministic => "rk4",
            Scheme::EulerMaruyama => "euler-maruyama",
            Scheme::Milstein => "milstein",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" | "rk4deterministic" => Ok(Scheme::Rk4Deterministic),
            "em" | "euler-maruyama" | "eulermaruyama" => Ok(Scheme::EulerMaruyama),
            "milstein" => Ok(Scheme::Milstein),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// One classical Runge–Kutta step of the deterministic system.
pub fn step_rk4(s: State, dt: f64, p: &ModelParams) -> Result<State> {
    let at = |x: State, k: (f64, f64), h: f64| State::new(x.u + h * k.0, x.v + h * k.1);
    let k1 = drift(s, p);
    let k2 = drift(at(s, k1, 0.5 * dt), p);
    let k3 = drift(at(s, k2, 0.5 * dt), p);
    let k4 = drift(at(s, k3, dt), p);
    let next = State::new(
        s.u + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        s.v + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    );
    if !next.is_finite() {
        return Err(Error::Numerical {
            time: f64::NAN,
            reason: format!("RK4 step from ({}, {}) is not finite", s.u, s.v),
        });
    }
    let scale = s.u.abs().max(s.v.abs());
    let fix = |x: f64, name: &str| -> Result<f64> {
        if x >= 0.0 {
            Ok(x)
        } else if -x < RK4_CLAMP_TOLERANCE * scale {
            Ok(0.0)
        } else {
            Err(Error::Numerical {
                time: f64::NAN,
                reason: format!("RK4 step drove {name} to {x}; reduce the step size"),
            })
        }
    };
    Ok(State::new(fix(next.u, "u")?, fix(next.v, "v")?))
}

/// Negative results within this many ulps of the step's operand scale are
/// rounding residue, not overshoot.
const ROUNDING_ULPS: f64 = 4.0;

/// Resolves a possibly negative component. Rounding residue (including
/// negative subnormals left when a component has underflowed) becomes zero
/// silently; anything larger is a positivity clamp.
fn settle(x: f64, scale: f64) -> (f64, bool) {
    if x >= 0.0 {
        (x, false)
    } else if -x <= ROUNDING_ULPS * f64::EPSILON * scale || -x < f64::MIN_POSITIVE {
        (0.0, false)
    } else {
        (0.0, true)
    }
}

fn clamp(next: State, scale_u: f64, scale_v: f64) -> (State, bool) {
    let (u, cu) = settle(next.u, scale_u);
    let (v, cv) = settle(next.v, scale_v);
    (State::new(u, v), cu || cv)
}

fn scale(terms: &[f64]) -> f64 {
    terms.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// One Euler–Maruyama step. Returns the clamped state and whether a clamp
/// happened.
pub fn step_em(s: State, dt: f64, db: f64, p: &ModelParams) -> (State, bool) {
    let (au, av) = drift(s, p);
    let (bu, bv) = diffusion(s, p);
    let (du, dv) = (au * dt, av * dt);
    let (nu, nv) = (bu * db, bv * db);
    clamp(
        State::new(s.u + (du + nu), s.v + (dv + nv)),
        scale(&[s.u, du, nu]),
        scale(&[s.v, dv, nv]),
    )
}

/// Milstein correction for `u`; the `v` correction is its exact negative.
///
/// With `b(u, v) = sigma u v (-1, 1)` and a single noise source the
/// correction is `1/2 (b . grad) b (dB^2 - dt)`, whose `u` component is
/// `1/2 sigma^2 u v (v - u) (dB^2 - dt)`.
pub fn milstein_correction(s: State, dt: f64, db: f64, p: &ModelParams) -> f64 {
    let sigma = p.sigma();
    0.5 * sigma * sigma * s.u * s.v * (s.v - s.u) * (db * db - dt)
}

pub fn step_milstein(s: State, dt: f64, db: f64, p: &ModelParams) -> (State, bool) {
    let (au, av) = drift(s, p);
    let (bu, bv) = diffusion(s, p);
    let c = milstein_correction(s, dt, db, p);
    let (du, dv) = (au * dt, av * dt);
    let (nu, nv) = (bu * db, bv * db);
    clamp(
        State::new(s.u + (du + (nu + c)), s.v + (dv + (nv - c))),
        scale(&[s.u, du, nu, c]),
        scale(&[s.v, dv, nv, c]),
    )
}

/// Time integrals of `u` and `v` accumulated over every step by the
/// trapezoidal rule, independent of the recording stride.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunningIntegral {
    pub u: f64,
    pub v: f64,
}

/// A recorded solution path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub params: ModelParams,
    /// Integration step.
    pub dt: f64,
    /// Number of integration steps between recorded rows.
    pub stride: usize,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Per recorded row: a clamp happened in one of the steps since the
    /// previous row.
    pub clamped_rows: Vec<bool>,
    /// Times of every clamp, at full resolution.
    pub clamp_times: Vec<f64>,
    pub integral: RunningIntegral,
    /// Largest `u + v` seen at any step (full resolution).
    pub max_total: f64,
    pub seed_info: Option<(u64, u64)>,
}

impl Trajectory {
    /// Builds a trajectory directly from recorded values. Integrals and the
    /// maximum total are computed from the records themselves.
    pub fn from_records(
        scheme: Scheme,
        params: ModelParams,
        dt: f64,
        states: Vec<State>,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Config("a trajectory needs at least one state".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {dt}")));
        }
        let times = (0..states.len()).map(|k| k as f64 * dt).collect();
        let mut integral = RunningIntegral::default();
        for w in states.windows(2) {
            integral.u += 0.5 * dt * (w[0].u + w[1].u);
            integral.v += 0.5 * dt * (w[0].v + w[1].v);
        }
        let max_total = states.iter().map(State::total).fold(f64::NEG_INFINITY, f64::max);
        Ok(Trajectory {
            scheme,
            params,
            dt,
            stride: 1,
            clamped_rows: vec![false; states.len()],
            times,
            states,
            clamp_times: Vec::new(),
            integral,
            max_total,
            seed_info: None,
        })
    }

    pub fn clamp_count(&self) -> usize {
        self.clamp_times.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    pub fn terminal(&self) -> State {
        *self.states.last().expect("trajectory is never empty")
    }

    /// Writes `t,u,v,clamped` rows with shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,u,v,clamped")?;
        for ((t, s), c) in self.times.iter().zip(&self.states).zip(&self.clamped_rows) {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(*t),
                fmt_f64(s.u),
                fmt_f64(s.v),
                u8::from(*c)
            )?;
        }
        Ok(())
    }
}

/// Grid and recording settings shared by every simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub scheme: Scheme,
    pub horizon: f64,
    pub dt: f64,
    pub stride: usize,
}

impl SimSettings {
    pub fn new(scheme: Scheme, horizon: f64, dt: f64) -> Self {
        SimSettings {
            scheme,
            horizon,
            dt,
            stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// Number of steps `horizon / dt`, which must be a positive integer to
    /// within `1e-9` relative tolerance.
    pub fn n_steps(&self) -> Result<usize> {
        step_count(self.horizon, self.dt)
    }
}

pub(crate) fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
        return Err(Error::Config(format!(
            "horizon {horizon} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(n as usize)
}

/// Integrates from `x0` over `[0, settings.horizon]`.
///
/// Stochastic schemes need a Brownian path with the same `dt` covering at
/// least `horizon / dt` steps; the deterministic scheme ignores `path`.
pub fn simulate(
    p: &ModelParams,
    x0: State,
    settings: &SimSettings,
    path: Option<&BrownianPath>,
) -> Result<Trajectory> {
    let n = settings.n_steps()?;
    let dt = settings.dt;
    let stride = settings.stride;
    if stride == 0 || n % stride != 0 {
        return Err(Error::Config(format!(
            "record stride {stride} must be positive and divide the {n} steps"
        )));
    }
    if !(x0.is_finite() && x0.is_nonnegative()) {
        return Err(Error::Config(format!("initial state ({}, {}) is not in the nonnegative quadrant", x0.u, x0.v)));
    }
    let noise = if settings.scheme.is_stochastic() {
        let path = path.ok_or_else(|| {
            Error::Config(format!("scheme {} needs a Brownian path", settings.scheme.name()))
        })?;
        if (path.dt() - dt).abs() > 1e-12 * dt {
            return Err(Error::Config(format!(
                "Brownian path step {} does not match requested step {dt}",
                path.dt()
            )));
        }
        if path.len() < n {
            return Err(Error::Config(format!(
                "Brownian path has {} increments, {n} needed",
                path.len()
            )));
        }
        Some(&path.increments()[..n])
    } else {
        None
    };

    let rows = n / stride + 1;
    let mut traj = Trajectory {
        scheme: settings.scheme,
        params: *p,
        dt,
        stride,
        times: Vec::with_capacity(rows),
        states: Vec::with_capacity(rows),
        clamped_rows: Vec::with_capacity(rows),
        clamp_times: Vec::new(),
        integral: RunningIntegral::default(),
        max_total: x0.total(),
        seed_info: path
            .filter(|_| settings.scheme.is_stochastic())
            .map(|b| (b.seed(), b.path_index())),
    };
    traj.times.push(0.0);
    traj.states.push(x0);
    traj.clamped_rows.push(false);

    let mut s = x0;
    let mut pending_clamp = false;
    for k in 0..n {
        let t_next = (k + 1) as f64 * dt;
        let (next, clamped) = match (settings.scheme, noise) {
            (Scheme::Rk4Deterministic, _) => {
                let next = step_rk4(s, dt, p).map_err(|e| match e {
                    Error::Numerical { reason, .. } => Error::Numerical { time: k as f64 * dt, reason },
                    other => other,
                })?;
                (next, false)
            }
            (Scheme::EulerMaruyama, Some(db)) => step_em(s, dt, db[k], p),
            (Scheme::Milstein, Some(db)) => step_milstein(s, dt, db[k], p),
            _ => unreachable!("stochastic schemes always have increments"),
        };
        if !next.is_finite() {
            return Err(Error::Numerical {
                time: t_next,
                reason: format!("state became non-finite ({}, {})", next.u, next.v),
            });
        }
        if clamped {
            traj.clamp_times.push(t_next);
            pending_clamp = true;
        }
        traj.integral.u += 0.5 * dt * (s.u + next.u);
        traj.integral.v += 0.5 * dt * (s.v + next.v);
        traj.max_total = traj.max_total.max(next.total());
        s = next;
        if (k + 1) % stride == 0 {
            traj.times.push(t_next);
            traj.states.push(s);
            traj.clamped_rows.push(pending_clamp);
            pending_clamp = false;
        }
    }
    Ok(traj)
}
