//! Experiment selection by the particle guess heuristic.
//!
//! The repetition count is set inversely to the current uncertainty,
//! `M = ⌈1.25/σ⌉`, and the reference angle is a draw from the current model.
//! With a finite coherence time the count is capped at `T2`, either as a hard
//! minimum or by redrawing `M` from an exponential distribution of mean `T2`.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circular::wrap;
use crate::error::{Error, Result};
use crate::filter::PhaseModel;
use crate::likelihood::ExperimentSpec;

/// Multiplier in `M = ⌈1.25/σ⌉`.
pub const PGH_SCALE: f64 = 1.25;

/// Largest repetition count ever returned (`2^62`).
pub const DEFAULT_M_MAX: f64 = 4_611_686_018_427_387_904.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaConvention {
    /// `θ ~ N(μ, σ²)`.
    Prior,
    /// Draw `x ~ N(μ, σ²)` and form the absolute rotation `−M x mod 2π`, then
    /// express it back as a per-repetition reference angle.
    Pseudocode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapMode {
    /// `M = min(⌈1.25/σ⌉, cap)`.
    Deterministic,
    /// When `1.25/σ ≥ cap`, redraw `M ~ Exponential(mean = cap)`.
    Stochastic,
}

macro_rules! parse_enum {
    ($ty:ty, $($name:literal => $variant:expr),+ $(,)?) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::InvalidConfig(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

parse_enum!(ThetaConvention, "prior" => ThetaConvention::Prior, "pseudocode" => ThetaConvention::Pseudocode);
parse_enum!(CapMode, "deterministic" => CapMode::Deterministic, "stochastic" => CapMode::Stochastic);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    /// Round `M` up to an integer.
    pub integer_m: bool,
    pub m_max: f64,
    pub theta: ThetaConvention,
    pub cap: CapMode,
    /// The cap is `cap_scale · T2`.
    pub cap_scale: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            integer_m: true,
            m_max: DEFAULT_M_MAX,
            theta: ThetaConvention::Prior,
            cap: CapMode::Deterministic,
            cap_scale: 1.0,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_max >= 1.0) {
            return Err(Error::InvalidConfig(format!("m_max must be at least 1, got {}", self.m_max)));
        }
        if !(self.cap_scale > 0.0) {
            return Err(Error::InvalidConfig(format!("cap scale must be positive, got {}", self.cap_scale)));
        }
        Ok(())
    }

    fn finish_m(&self, raw: f64) -> f64 {
        let m = if self.integer_m { raw.ceil().max(1.0) } else { raw.max(f64::MIN_POSITIVE) };
        m.min(self.m_max)
    }
}

fn draw_theta<R: Rng + ?Sized>(model: &PhaseModel, m: f64, convention: ThetaConvention, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let x = model.mu() + model.sigma() * z;
    match convention {
        ThetaConvention::Prior => x,
        ThetaConvention::Pseudocode => -wrap(-m * x) / m,
    }
}

/// Uncapped particle guess heuristic.
pub fn pgh<R: Rng + ?Sized>(model: &PhaseModel, cfg: &DesignConfig, rng: &mut R) -> ExperimentSpec {
    let m = cfg.finish_m(PGH_SCALE / model.sigma());
    let theta = draw_theta(model, m, cfg.theta, rng);
    ExperimentSpec { m, theta }
}

/// Particle guess heuristic with repetitions limited by the coherence time.
pub fn pgh_t2<R: Rng + ?Sized>(model: &PhaseModel, t2: f64, cfg: &DesignConfig, rng: &mut R) -> ExperimentSpec {
    let cap = t2 * cfg.cap_scale;
    if cap.is_infinite() {
        return pgh(model, cfg, rng);
    }
    let raw = PGH_SCALE / model.sigma();
    let m = match cfg.cap {
        CapMode::Deterministic => cfg.finish_m(raw).min(cap),
        CapMode::Stochastic if raw >= cap => {
            let draw = Exp::new(1.0 / cap).expect("positive rate").sample(rng);
            cfg.finish_m(draw)
        }
        CapMode::Stochastic => cfg.finish_m(raw),
    };
    let theta = draw_theta(model, m, cfg.theta, rng);
    ExperimentSpec { m, theta }
}

/// The inexpensive consistency check `θ = μ`, `M = τ/σ`.
pub fn consistency_test_experiment(model: &PhaseModel, tau: f64) -> Result<ExperimentSpec> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidConfig(format!("test strength tau must lie in (0, 1), got {tau}")));
    }
    ExperimentSpec::new(tau / model.sigma(), model.mu())
}
