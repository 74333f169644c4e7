//! Model constants, state, drift and diffusion of the capital-labour system,
//! and the closed-form regime thresholds.
//!
//! The deterministic system is
//!
//! ```text
//! du/dt = r u (1 - u/K) - m u v
//! dv/dt = m u v - d v
//! ```
//!
//! and the stochastic system perturbs the job-filling flow `m u v` by a single
//! multiplicative noise `sigma u v dB`, entering the two equations with
//! opposite signs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five model constants.
///
/// `r`, `K`, `m` and `d` are strictly positive, `sigma` is nonnegative.
/// Construct through [`ModelParams::new`] (or deserialize) so the ranges are
/// checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    r: f64,
    #[serde(rename = "K")]
    k: f64,
    m: f64,
    d: f64,
    sigma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    r: f64,
    #[serde(rename = "K")]
    k: f64,
    m: f64,
    d: f64,
    sigma: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.r, raw.k, raw.m, raw.d, raw.sigma)
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and strictly positive",
        })
    }
}

impl ModelParams {
    pub fn new(r: f64, k: f64, m: f64, d: f64, sigma: f64) -> Result<Self> {
        check_positive("r", r)?;
        check_positive("K", k)?;
        check_positive("m", m)?;
        check_positive("d", d)?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                value: sigma,
                reason: "must be finite and nonnegative",
            });
        }
        Ok(ModelParams { r, k, m, d, sigma })
    }

    /// Natural per-capita growth rate of free jobs.
    pub fn r(&self) -> f64 {
        self.r
    }

    /// Carrying capacity of free jobs.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Rate at which the labour force fills free jobs.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// Disappearance rate of the labour force.
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Noise intensity.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `min(r, d)`, the contraction rate of the total `u + v`.
    pub fn mu(&self) -> f64 {
        self.r.min(self.d)
    }

    pub fn with_m(&self, m: f64) -> Result<Self> {
        ModelParams::new(self.r, self.k, m, self.d, self.sigma)
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        ModelParams::new(self.r, self.k, self.m, self.d, sigma)
    }

    fn require_noise(&self, what: &str) -> Result<()> {
        if self.sigma > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{what} is undefined for sigma = 0 (deterministic model)"
            )))
        }
    }
}

/// A point `(u, v)` of the nonnegative quadrant: free jobs and unemployed
/// labour force.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    pub u: f64,
    pub v: f64,
}

impl State {
    pub const fn new(u: f64, v: f64) -> Self {
        State { u, v }
    }

    pub fn total(&self) -> f64 {
        self.u + self.v
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.u >= 0.0 && self.v >= 0.0
    }
}

/// Drift of both the deterministic and the stochastic system.
pub fn drift(s: State, p: &ModelParams) -> (f64, f64) {
    let filling = p.m * s.u * s.v;
    (p.r * s.u * (1.0 - s.u / p.k) - filling, filling - p.d * s.v)
}

/// Diffusion coefficients `(-sigma u v, sigma u v)`. The components are exact
/// negatives of each other.
pub fn diffusion(s: State, p: &ModelParams) -> (f64, f64) {
    let b = p.sigma * s.u * s.v;
    (-b, b)
}

/// `m^2 / (2 sigma^2) - d`. Negative values imply almost-sure extinction of
/// the labour force.
pub fn extinction_index(p: &ModelParams) -> Result<f64> {
    p.require_noise("the extinction index")?;
    Ok(p.m * p.m / (2.0 * p.sigma * p.sigma) - p.d)
}

/// Stochastic threshold `r/d - sigma^2 K^2 / (2d)`.
pub fn r0s(p: &ModelParams) -> f64 {
    p.r / p.d - p.sigma * p.sigma * p.k * p.k / (2.0 * p.d)
}

/// `m - r/K`, the second persistence hypothesis.
pub fn m_minus_r_over_k(p: &ModelParams) -> f64 {
    (p.m * p.k - p.r) / p.k
}

/// Lower bound on the long-run time average of `v`, when both persistence
/// hypotheses (`r0s > 1`, `m > r/K`) hold.
pub fn persistence_floor(p: &ModelParams) -> Option<f64> {
    let r0 = r0s(p);
    if r0 > 1.0 && m_minus_r_over_k(p) > 0.0 {
        Some(p.d * (r0 - 1.0) / (p.m + p.d))
    } else {
        None
    }
}

/// Asymptotic almost-sure cap `rK / min(r, d)` on each compartment.
pub fn ultimate_bound(p: &ModelParams) -> f64 {
    // mu = r cancels exactly
    if p.d >= p.r {
        p.k
    } else {
        p.r * p.k / p.d
    }
}

/// Positive equilibrium of the deterministic system, `(d/m, (r/m)(1 - d/(mK)))`,
/// present only when `d/m < K`.
pub fn interior_equilibrium(p: &ModelParams) -> Option<State> {
    let u = p.d / p.m;
    if u < p.k {
        Some(State::new(u, p.r / p.m * (1.0 - u / p.k)))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Extinction,
    Persistence,
    Indeterminate,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Extinction => "extinction",
            Classification::Persistence => "persistence",
            Classification::Indeterminate => "indeterminate",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All threshold quantities for one parameter set, plus the predicted regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub extinction_index: f64,
    pub r0s: f64,
    #[serde(rename = "m_minus_r_over_K")]
    pub m_minus_r_over_k: f64,
    pub persistence_floor: Option<f64>,
    pub ultimate_bound: f64,
    pub classification: Classification,
    /// Set when the extinction hypothesis and both persistence hypotheses
    /// hold simultaneously; extinction wins.
    pub conflict: bool,
}

/// Evaluates both theorem hypotheses and assembles a [`RegimeReport`].
pub fn classify_regime(p: &ModelParams) -> Result<RegimeReport> {
    let extinction_index = extinction_index(p)?;
    let persistence_floor = persistence_floor(p);
    let extinct = extinction_index < 0.0;
    let persists = persistence_floor.is_some();
    let classification = if extinct {
        Classification::Extinction
    } else if persists {
        Classification::Persistence
    } else {
        Classification::Indeterminate
    };
    Ok(RegimeReport {
        extinction_index,
        r0s: r0s(p),
        m_minus_r_over_k: m_minus_r_over_k(p),
        persistence_floor,
        ultimate_bound: ultimate_bound(p),
        classification,
        conflict: extinct && persists,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig1() -> ModelParams {
        ModelParams::new(1.0, 100.0, 0.001, 0.2, 0.09).unwrap()
    }

    fn fig2() -> ModelParams {
        ModelParams::new(1.0, 100.0, 0.1, 0.2, 0.001).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(ModelParams::new(0.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, -1.0, 1.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, f64::NAN, 1.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 1.0, -0.1).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn drift_vanishes_at_equilibria() {
        let p = fig2();
        assert_eq!(drift(State::new(0.0, 0.0), &p), (0.0, 0.0));
        assert_eq!(drift(State::new(100.0, 0.0), &p), (0.0, 0.0));
        let (du, dv) = drift(State::new(2.0, 9.8), &p);
        assert!(du.abs() < 1e-12 * 9.8 && dv.abs() < 1e-12 * 9.8, "{du} {dv}");
    }

    #[test]
    fn diffusion_examples() {
        let p = fig1();
        assert_eq!(diffusion(State::new(7.0, 0.0), &p), (-0.0, 0.0));
        let (bu, bv) = diffusion(State::new(10.0, 5.0), &p);
        assert!(close(bu, -4.5, 1e-15) && close(bv, 4.5, 1e-15));
        let quiet = p.with_sigma(0.0).unwrap();
        assert_eq!(diffusion(State::new(10.0, 5.0), &quiet), (-0.0, 0.0));
    }

    #[test]
    fn extinction_index_examples() {
        let e = extinction_index(&fig1()).unwrap();
        // 1e-6 / (2 * 0.0081) - 0.2
        assert!((e - (-0.199_938_271_604_938_27)).abs() < 1e-15, "{e}");
        assert!((e - (-0.19994)).abs() < 1e-5);
        let e2 = extinction_index(&fig2()).unwrap();
        assert!(close(e2, 4999.8, 1e-12), "{e2}");
        assert!(matches!(
            extinction_index(&fig1().with_sigma(0.0).unwrap()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn r0s_examples() {
        assert!(close(r0s(&fig2()), 4.975, 1e-12));
        let quiet = fig2().with_sigma(0.0).unwrap();
        assert_eq!(r0s(&quiet), 5.0);
        let unit = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(r0s(&unit), 0.5);
    }

    #[test]
    fn persistence_floor_examples() {
        let f = persistence_floor(&fig2()).unwrap();
        assert!(close(f, 2.65, 1e-12), "{f}");
        // m <= r/K
        let slow = fig2().with_m(0.01).unwrap();
        assert_eq!(persistence_floor(&slow), None);
        // sigma large enough that r0s <= 1
        let noisy = fig2().with_sigma(0.03).unwrap();
        assert!(r0s(&noisy) <= 1.0);
        assert_eq!(persistence_floor(&noisy), None);
    }

    #[test]
    fn ultimate_bound_examples() {
        assert_eq!(ultimate_bound(&fig2()), 500.0);
        let p = ModelParams::new(0.5, 10.0, 1.0, 1.0, 0.1).unwrap();
        assert_eq!(ultimate_bound(&p), 10.0);
        let q = ModelParams::new(0.3, 7.0, 1.0, 0.3, 0.1).unwrap();
        assert!(close(ultimate_bound(&q), 7.0, 1e-15));
    }

    #[test]
    fn classify_table_columns() {
        let r1 = classify_regime(&fig1()).unwrap();
        assert_eq!(r1.classification, Classification::Extinction);
        assert!(!r1.conflict);
        let r2 = classify_regime(&fig2()).unwrap();
        assert_eq!(r2.classification, Classification::Persistence);
        assert_eq!(r2.m_minus_r_over_k, 0.09);
        assert!(r2.persistence_floor.is_some());
    }

    #[test]
    fn classify_indeterminate() {
        let p = ModelParams::new(1.0, 100.0, 0.005, 0.2, 0.005).unwrap();
        let rep = classify_regime(&p).unwrap();
        assert!(close(rep.extinction_index, 0.3, 1e-12));
        assert!(close(rep.m_minus_r_over_k, -0.005, 1e-12));
        assert_eq!(rep.classification, Classification::Indeterminate);
        assert_eq!(rep.persistence_floor, None);
        assert!(classify_regime(&p.with_sigma(0.0).unwrap()).is_err());
    }

    #[test]
    fn interior_equilibrium_examples() {
        let e = interior_equilibrium(&fig2()).unwrap();
        assert!(close(e.u, 2.0, 1e-15) && close(e.v, 9.8, 1e-15));
        // d/m = 200 >= K
        assert_eq!(interior_equilibrium(&fig1()), None);
        let p = ModelParams::new(2.0, 10.0, 1.0, 5.0, 0.0).unwrap();
        assert_eq!(interior_equilibrium(&p), Some(State::new(5.0, 1.0)));
    }

    #[test]
    fn params_json_round_trip_and_validation() {
        let json = r#"{"r":1,"K":100,"m":0.1,"d":0.2,"sigma":0.001}"#;
        let p: ModelParams = serde_json::from_str(json).unwrap();
        assert_eq!(p, fig2());
        let back = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ModelParams>(&back).unwrap(), p);
        assert!(serde_json::from_str::<ModelParams>(
            r#"{"r":1,"K":100,"m":0.1,"d":0.2,"sigma":0.001,"k":3}"#
        )
        .is_err());
        assert!(serde_json::from_str::<ModelParams>(
            r#"{"r":1,"K":100,"m":0.1,"d":0.2,"sigma":-1}"#
        )
        .is_err());
    }

    #[test]
    fn report_json_field_names() {
        let v = serde_json::to_value(classify_regime(&fig1()).unwrap()).unwrap();
        assert_eq!(v["classification"], "extinction");
        assert!(v["persistence_floor"].is_null());
        for key in ["extinction_index", "r0s", "m_minus_r_over_K", "ultimate_bound"] {
            assert!(v[key].is_number(), "{key}");
        }
    }

    fn params() -> impl Strategy<Value = ModelParams> {
        (0.01f64..5.0, 1.0f64..500.0, 1e-4f64..1.0, 0.01f64..5.0, 1e-4f64..0.5)
            .prop_map(|(r, k, m, d, s)| ModelParams::new(r, k, m, d, s).unwrap())
    }

    proptest! {
        #[test]
        fn diffusion_components_cancel(u in 0.0f64..1e3, v in 0.0f64..1e3, p in params()) {
            let (bu, bv) = diffusion(State::new(u, v), &p);
            prop_assert_eq!(bu + bv, 0.0);
        }

        #[test]
        fn classification_matches_thresholds(p in params()) {
            let rep = classify_regime(&p).unwrap();
            prop_assert_eq!(rep.classification == Classification::Extinction, rep.extinction_index < 0.0);
            if rep.classification == Classification::Persistence {
                prop_assert!(rep.persistence_floor.unwrap() > 0.0);
            }
            if let Some(f) = rep.persistence_floor {
                let expect = p.d() * (r0s(&p) - 1.0) / (p.m() + p.d());
                prop_assert!(close(f, expect, 1e-12));
            }
            prop_assert!(rep.ultimate_bound >= p.k());
        }

        #[test]
        fn drift_zero_at_interior_equilibrium(p in params()) {
            if let Some(e) = interior_equilibrium(&p) {
                let (du, dv) = drift(e, &p);
                let scale = p.r() * e.u + p.m() * e.u * e.v + p.d() * e.v;
                prop_assert!(du.abs() <= 1e-12 * scale && dv.abs() <= 1e-12 * scale);
            }
        }
    }
}
