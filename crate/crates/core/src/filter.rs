//! Rejection-sampling Bayes update of a Gaussian phase model.
//!
//! Each update draws `m` samples from the current Gaussian, accepts each with
//! probability `P(E | φ)/κ_E`, and refits a Gaussian to the accepted set. The
//! accepted samples are distributed as the exact posterior, so only the
//! moment-matching step is approximate.
//!
//! Two refits are provided. [`UpdateVariant::Incremental`] keeps running
//! arithmetic moments for the sample and for a copy shifted by π, and keeps
//! whichever branch cut has the smaller variance; it needs no trigonometry
//! beyond the likelihood itself. [`UpdateVariant::Circular`] uses the first
//! trigonometric moment and reports the wrapped-normal standard deviation.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::circular::{signed_difference, wrap};
use crate::error::{Error, Result};
use crate::likelihood::{ExperimentSpec, Likelihood, Outcome};

/// Gaussian model of the eigenphase: mean `mu` in `[0, 2π)` and standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseModel {
    mu: f64,
    sigma: f64,
}

impl PhaseModel {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
            return Err(Error::InvalidModel { mu, sigma });
        }
        Ok(Self { mu: wrap(mu), sigma })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Same mean, new width.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.mu, sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateVariant {
    Incremental,
    Circular,
}

impl std::str::FromStr for UpdateVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incremental" => Ok(Self::Incremental),
            "circular" => Ok(Self::Circular),
            other => Err(Error::InvalidConfig(format!("unknown update variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Samples drawn per update.
    pub samples: usize,
    /// Acceptance scale for outcome 0.
    pub kappa0: f64,
    /// Acceptance scale for outcome 1.
    pub kappa1: f64,
    /// Fewer accepted samples than this leaves the model untouched.
    pub min_accepts: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { samples: 200, kappa0: 1.0, kappa1: 1.0, min_accepts: 2 }
    }
}

impl FilterConfig {
    pub fn with_samples(samples: usize) -> Self {
        Self { samples, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidConfig("filter needs at least one sample per update".into()));
        }
        for k in [self.kappa0, self.kappa1] {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::InvalidConfig(format!("kappa must lie in (0, 1], got {k}")));
            }
        }
        if self.min_accepts < 2 {
            return Err(Error::InvalidConfig("min_accepts must be at least 2".into()));
        }
        Ok(())
    }

    pub fn kappa(&self, e: Outcome) -> f64 {
        match e {
            Outcome::Zero => self.kappa0,
            Outcome::One => self.kappa1,
        }
    }
}

/// Why an update left the model unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SkipReason {
    TooFewAccepted,
    DegenerateResultant,
    ZeroVariance,
}

/// Result of one filter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub model: PhaseModel,
    pub accepted: usize,
    /// Samples whose likelihood exceeded `κ_E`; they were accepted outright.
    pub kappa_violations: usize,
    pub skipped: Option<SkipReason>,
}

/// Welford accumulator for arithmetic mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RunningMoments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    #[inline]
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub(crate) fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; needs `n >= 2`.
    pub(crate) fn variance(&self) -> f64 {
        self.m2 / (self.n as f64 - 1.0)
    }
}

/// First trigonometric moment of displacements from a fixed origin.
///
/// Stores `Σ sin d` and `Σ 2 sin²(d/2)` rather than `Σ cos d` so that
/// `1 − ρ` keeps full precision for very narrow distributions.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct TrigMoments {
    n: usize,
    sum_sin: f64,
    sum_versine: f64,
}

impl TrigMoments {
    #[inline]
    pub(crate) fn push(&mut self, d: f64) {
        let h = (0.5 * d).sin();
        self.n += 1;
        self.sum_sin += d.sin();
        self.sum_versine += 2.0 * h * h;
    }

    /// `(mean displacement, resultant length, circular standard deviation)`.
    pub(crate) fn finish(&self) -> (f64, f64, f64) {
        let n = self.n as f64;
        let s = self.sum_sin / n;
        let a = self.sum_versine / n;
        let c = 1.0 - a;
        let one_minus_rho2 = (2.0 * a - a * a - s * s).max(0.0);
        let rho = (c * c + s * s).sqrt();
        let sigma = (-(-one_minus_rho2).ln_1p()).sqrt();
        (s.atan2(c), rho, sigma)
    }
}

/// Circular mean and wrapped-normal standard deviation `sqrt(−2 ln ρ)` of a set of angles.
pub fn circular_moments(angles: &[f64]) -> Result<(f64, f64)> {
    let Some(&origin) = angles.first() else {
        return Err(Error::DegenerateResultant(0.0));
    };
    let mut acc = TrigMoments::default();
    for &a in angles {
        acc.push(signed_difference(a, origin));
    }
    let (shift, rho, sigma) = acc.finish();
    if rho < RESULTANT_FLOOR {
        return Err(Error::DegenerateResultant(rho));
    }
    Ok((wrap(origin + shift), sigma))
}

const RESULTANT_FLOOR: f64 = 1e-8;

#[inline]
fn accept<L, R>(e: Outcome, x: f64, exp: &ExperimentSpec, kappa: f64, likelihood: &L, rng: &mut R) -> (bool, bool)
where
    L: Likelihood + ?Sized,
    R: Rng + ?Sized,
{
    let p = likelihood.probability(e, x, exp);
    let u: f64 = rng.random();
    (p >= kappa * u, p > kappa)
}

/// Rejection update with the two-cut arithmetic refit.
pub fn update_incremental<L, R>(
    model: &PhaseModel,
    e: Outcome,
    exp: &ExperimentSpec,
    cfg: &FilterConfig,
    likelihood: &L,
    rng: &mut R,
) -> UpdateOutcome
where
    L: Likelihood + ?Sized,
    R: Rng + ?Sized,
{
    let kappa = cfg.kappa(e);
    let mut cut = RunningMoments::default();
    let mut shifted = RunningMoments::default();
    let mut violations = 0;
    for _ in 0..cfg.samples {
        let z: f64 = rng.sample(StandardNormal);
        let x = wrap(model.mu + model.sigma * z);
        let (ok, over) = accept(e, x, exp, kappa, likelihood, rng);
        violations += over as usize;
        if ok {
            cut.push(x);
            shifted.push(wrap(x + PI));
        }
    }
    let accepted = cut.n;
    let skip = |reason| UpdateOutcome { model: *model, accepted, kappa_violations: violations, skipped: Some(reason) };
    if accepted < cfg.min_accepts {
        return skip(SkipReason::TooFewAccepted);
    }
    let (v, vs) = (cut.variance(), shifted.variance());
    let (mean, var) = if vs < v { (shifted.mean() - PI, vs) } else { (cut.mean(), v) };
    if !(var > 0.0) {
        return skip(SkipReason::ZeroVariance);
    }
    UpdateOutcome {
        model: PhaseModel { mu: wrap(mean), sigma: var.sqrt() },
        accepted,
        kappa_violations: violations,
        skipped: None,
    }
}

/// Rejection update with the circular-mean refit.
pub fn update_circular<L, R>(
    model: &PhaseModel,
    e: Outcome,
    exp: &ExperimentSpec,
    cfg: &FilterConfig,
    likelihood: &L,
    rng: &mut R,
) -> UpdateOutcome
where
    L: Likelihood + ?Sized,
    R: Rng + ?Sized,
{
    let kappa = cfg.kappa(e);
    let mut acc = TrigMoments::default();
    let mut violations = 0;
    for _ in 0..cfg.samples {
        let d = model.sigma * rng.sample::<f64, _>(StandardNormal);
        let x = wrap(model.mu + d);
        let (ok, over) = accept(e, x, exp, kappa, likelihood, rng);
        violations += over as usize;
        if ok {
            acc.push(d);
        }
    }
    let accepted = acc.n;
    let skip = |reason| UpdateOutcome { model: *model, accepted, kappa_violations: violations, skipped: Some(reason) };
    if accepted < cfg.min_accepts {
        return skip(SkipReason::TooFewAccepted);
    }
    let (shift, rho, sigma) = acc.finish();
    if rho < RESULTANT_FLOOR {
        return skip(SkipReason::DegenerateResultant);
    }
    if !(sigma > 0.0) {
        return skip(SkipReason::ZeroVariance);
    }
    UpdateOutcome {
        model: PhaseModel { mu: wrap(model.mu + shift), sigma },
        accepted,
        kappa_violations: violations,
        skipped: None,
    }
}

/// Dispatches on the configured variant.
pub fn update<L, R>(
    variant: UpdateVariant,
    model: &PhaseModel,
    e: Outcome,
    exp: &ExperimentSpec,
    cfg: &FilterConfig,
    likelihood: &L,
    rng: &mut R,
) -> UpdateOutcome
where
    L: Likelihood + ?Sized,
    R: Rng + ?Sized,
{
    match variant {
        UpdateVariant::Incremental => update_incremental(model, e, exp, cfg, likelihood, rng),
        UpdateVariant::Circular => update_circular(model, e, exp, cfg, likelihood, rng),
    }
}

/// Accepted samples of a long rejection run, for checking that they follow the posterior.
#[derive(Debug, Clone)]
pub struct AcceptedSamples {
    /// Accepted angles wrapped into `[0, 2π)`.
    pub samples: Vec<f64>,
    pub attempts: usize,
}

impl AcceptedSamples {
    pub fn acceptance_rate(&self) -> f64 {
        self.samples.len() as f64 / self.attempts as f64
    }

    /// Counts samples per bin. Each sample is first expressed as a displacement in
    /// `[-π, π)` from `center`; `edges` are increasing displacements bounding the bins.
    /// Samples outside the outermost edges are dropped.
    pub fn histogram(&self, center: f64, edges: &[f64]) -> Vec<usize> {
        let mut counts = vec![0; edges.len().saturating_sub(1)];
        for &s in &self.samples {
            let d = signed_difference(s, center);
            let idx = edges.partition_point(|&edge| edge <= d);
            if idx > 0 && idx < edges.len() {
                counts[idx - 1] += 1;
            }
        }
        counts
    }
}

/// Runs the rejection loop for `n` attempts and keeps every accepted sample.
pub fn posterior_sampler_validity<L, R>(
    model: &PhaseModel,
    e: Outcome,
    exp: &ExperimentSpec,
    kappa: f64,
    likelihood: &L,
    rng: &mut R,
    n: usize,
) -> AcceptedSamples
where
    L: Likelihood + ?Sized,
    R: Rng + ?Sized,
{
    let mut samples = Vec::new();
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let x = wrap(model.mu + model.sigma * z);
        if accept(e, x, exp, kappa, likelihood, rng).0 {
            samples.push(x);
        }
    }
    AcceptedSamples { samples, attempts: n }
}
