//! Failure detection and recovery for a running phase estimate.
//!
//! A cheap experiment with `θ = μ` and `M = τ/σ` returns `1` only rarely when
//! the model is right, so observing `1` is grounds for widening the model back
//! to its initial width. Tests are triggered when `log σ` stops falling, or at
//! random with the probability that the eigenstate has decayed since the last
//! experiment.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circular::{distance, wrap};
use crate::design::consistency_test_experiment;
use crate::error::{Error, Result};
use crate::filter::PhaseModel;
use crate::likelihood::{visibility, ExperimentSpec, Outcome};

/// Slope-triggered tests are only allowed while the counter is below this.
pub const SLOPE_TEST_COUNT_LIMIT: u32 = 5;

/// Which decisions advance the counter that gates slope-triggered tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CounterPolicy {
    /// Every decision that does not reset, tested or not.
    EveryDecision,
    /// Only passed tests, so the counter is the number of passes since the last reset.
    PassesSinceReset,
    /// Passed tests on back-to-back decisions; a decision without a test clears it.
    #[default]
    ConsecutivePasses,
}

impl std::str::FromStr for CounterPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "every" | "every-decision" => Ok(Self::EveryDecision),
            "passes" | "passes-since-reset" => Ok(Self::PassesSinceReset),
            "consecutive" | "consecutive-passes" => Ok(Self::ConsecutivePasses),
            _ => Err(Error::InvalidConfig(format!("unknown counter policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetState {
    /// Counter gating slope-triggered tests, cleared on reset.
    pub cnt: u32,
    pub counter: CounterPolicy,
    pub sigma_init: f64,
    pub mu_reset: f64,
    pub sigma_reset: f64,
    /// Threshold `Γ` on the slope of `log σ`.
    pub gamma_threshold: f64,
    pub tau: f64,
    /// Trailing records used for the slope fit.
    pub window: usize,
}

impl ResetState {
    /// Fresh state for a run that starts from `initial`, whose width is also the reset width.
    pub fn new(initial: &PhaseModel, gamma_threshold: f64, tau: f64, window: usize) -> Result<Self> {
        let state = Self {
            cnt: 0,
            counter: CounterPolicy::default(),
            sigma_init: initial.sigma(),
            mu_reset: initial.mu(),
            sigma_reset: initial.sigma(),
            gamma_threshold,
            tau,
            window,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn with_counter(mut self, counter: CounterPolicy) -> Self {
        self.counter = counter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_init > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma_init must be positive, got {}", self.sigma_init)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidConfig(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if self.window < 2 {
            return Err(Error::InvalidConfig("slope window needs at least 2 records".into()));
        }
        if self.gamma_threshold.is_nan() {
            return Err(Error::InvalidConfig("slope threshold is NaN".into()));
        }
        Ok(())
    }
}

/// Probability that the consistency test returns `0` when the model is correct.
pub fn reset_pass_probability(tau: f64) -> f64 {
    0.5 * (1.0 + (-0.5 * tau * tau).exp())
}

/// Likelihood ratio of "model wrong" against "model correct" after the test returns `1`.
///
/// "Model wrong" means the state is still described by the model in force at
/// the last reset.
pub fn bayes_factor(model: &PhaseModel, reset: &ResetState, t2: f64) -> Result<f64> {
    let tau = reset.tau;
    if tau == 0.0 {
        return Err(Error::ZeroTau);
    }
    let sigma = model.sigma();
    let ratio = reset.sigma_reset / sigma;
    let decay = 0.5 * tau * tau * ratio * ratio + sigma * tau / t2;
    let half_angle = 0.5 * tau * (model.mu() - reset.mu_reset) / sigma;
    // 1 − e^{−x} cos y, written to stay accurate when both x and y are small
    let numerator = -(-decay).exp_m1() + (-decay).exp() * 2.0 * half_angle.sin().powi(2);
    let denominator = -(-0.5 * tau * tau).exp_m1();
    Ok(numerator / denominator)
}

/// Least-squares slope of `log σ` against the experiment index.
pub fn log_sigma_slope(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(i, s) in points {
        let dx = i as f64 - mean_x;
        sxy += dx * (s.ln() - mean_y);
        sxx += dx * dx;
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// What [`restart_decision`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartDecision {
    pub model: PhaseModel,
    pub slope: Option<f64>,
    /// The consistency test that was run, with its outcome.
    pub test: Option<(ExperimentSpec, Outcome)>,
    pub reset: bool,
}

impl RestartDecision {
    pub fn tested(&self) -> bool {
        self.test.is_some()
    }
}

/// Decides whether the current estimate is suspect, tests it, and resets on failure.
///
/// `history` holds `(experiment index, σ)` for the records since the last
/// reset; only the trailing `reset.window` entries are used. The mean of the
/// model is never changed here.
pub fn restart_decision<R, T>(
    history: &[(usize, f64)],
    model: &PhaseModel,
    reset: &mut ResetState,
    last_m: f64,
    t2: f64,
    rng: &mut R,
    mut test_executor: T,
) -> Result<RestartDecision>
where
    R: Rng + ?Sized,
    T: FnMut(&ExperimentSpec) -> Outcome,
{
    let start = history.len().saturating_sub(reset.window);
    let slope = log_sigma_slope(&history[start..]);
    let stalled = slope.is_some_and(|d| d >= reset.gamma_threshold) && reset.cnt < SLOPE_TEST_COUNT_LIMIT;
    let u: f64 = rng.random();
    let decayed = u > visibility(last_m, t2);

    if !(stalled || decayed) {
        match reset.counter {
            CounterPolicy::EveryDecision => reset.cnt += 1,
            CounterPolicy::PassesSinceReset => {}
            CounterPolicy::ConsecutivePasses => reset.cnt = 0,
        }
        return Ok(RestartDecision { model: *model, slope, test: None, reset: false });
    }

    let exp = consistency_test_experiment(model, reset.tau)?;
    let outcome = test_executor(&exp);
    match outcome {
        Outcome::Zero => {
            reset.cnt += 1;
            Ok(RestartDecision { model: *model, slope, test: Some((exp, outcome)), reset: false })
        }
        Outcome::One => {
            let widened = model.with_sigma(reset.sigma_init)?;
            reset.cnt = 0;
            reset.mu_reset = widened.mu();
            reset.sigma_reset = widened.sigma();
            Ok(RestartDecision { model: widened, slope, test: Some((exp, outcome)), reset: true })
        }
    }
}

/// Previously learned eigenphases and the promised minimum gap between them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EigenvalueRegistry {
    entries: Vec<PhaseModel>,
    delta: f64,
}

impl EigenvalueRegistry {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::InvalidConfig(format!("spectral gap must be non-negative, got {delta}")));
        }
        Ok(Self { entries: Vec::new(), delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn entries(&self) -> &[PhaseModel] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Width below which a finished segment is worth remembering.
    pub fn record_threshold(&self) -> f64 {
        if self.delta > 0.0 {
            0.5 * self.delta
        } else {
            1e-4
        }
    }

    /// Stores `model` if it is narrow enough. An entry within `Δ` of an
    /// existing one replaces it when it is more precise.
    pub fn record(&mut self, model: &PhaseModel) -> bool {
        if model.sigma() >= self.record_threshold() {
            return false;
        }
        let model = PhaseModel::new(wrap(model.mu()), model.sigma()).expect("valid model");
        if let Some(existing) = self.entries.iter_mut().find(|e| distance(e.mu(), model.mu()) < self.delta) {
            if model.sigma() < existing.sigma() {
                *existing = model;
            }
        } else {
            self.entries.push(model);
        }
        true
    }

    /// Entry whose mean is circularly closest to `mu`.
    pub fn closest(&self, mu: f64) -> Option<&PhaseModel> {
        self.entries.iter().min_by(|a, b| distance(a.mu(), mu).total_cmp(&distance(b.mu(), mu)))
    }
}

/// Replaces `model` by the closest known eigenphase once it is narrower than the gap.
pub fn snap_to_known(model: &PhaseModel, registry: &EigenvalueRegistry) -> PhaseModel {
    if model.sigma() < registry.delta() {
        if let Some(known) = registry.closest(model.mu()) {
            return *known;
        }
    }
    *model
}
