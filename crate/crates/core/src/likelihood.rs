//! Outcome probabilities for the iterative phase-estimation circuit.
//!
//! An experiment applies `M` repetitions of the unitary and compares the
//! accumulated phase against a reference angle `θ`. The probability of
//! observing `0` is `(1 + cos(M(φ − θ)))/2`. Decoherence shrinks the fringe
//! visibility by `e^{−M/T2}` and mixes in a fair coin.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::circular::signed_difference;
use crate::error::{Error, Result};

/// A single binary measurement result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub fn as_u8(self) -> u8 {
        match self {
            Outcome::Zero => 0,
            Outcome::One => 1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Outcome::Zero => Outcome::One,
            Outcome::One => Outcome::Zero,
        }
    }
}

impl From<bool> for Outcome {
    /// `true` maps to `One`.
    fn from(b: bool) -> Self {
        if b {
            Outcome::One
        } else {
            Outcome::Zero
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Controls of one experiment: repetition count `m` and reference angle `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub m: f64,
    pub theta: f64,
}

impl ExperimentSpec {
    pub fn new(m: f64, theta: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidExperiment(format!("repetition count must be positive and finite, got {m}")));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidExperiment(format!("theta must be finite, got {theta}")));
        }
        Ok(Self { m, theta })
    }
}

/// Noise present in the simulated device.
///
/// `t2` may be `f64::INFINITY` for a fully coherent device. `gamma` is the
/// probability that a recorded outcome is replaced by a fair coin flip; it is
/// never visible to the inference engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub t2: f64,
    pub gamma: f64,
}

impl NoiseConfig {
    pub fn new(t2: f64, gamma: f64) -> Result<Self> {
        if !(t2 > 0.0) {
            return Err(Error::InvalidNoise(format!("t2 must be positive, got {t2}")));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidNoise(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(Self { t2, gamma })
    }

    pub fn noiseless() -> Self {
        Self { t2: f64::INFINITY, gamma: 0.0 }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::noiseless()
    }
}

/// `P(e | φ; θ, M)` for a coherent experiment.
///
/// The phase difference is taken on `[-π, π)`, so a non-integer `M` sees the
/// same probability on either side of the branch cut.
pub fn likelihood_ideal(e: Outcome, phi: f64, exp: &ExperimentSpec) -> f64 {
    let c = (exp.m * signed_difference(phi, exp.theta)).cos();
    match e {
        Outcome::Zero => 0.5 * (1.0 + c),
        Outcome::One => 0.5 * (1.0 - c),
    }
}

/// Fringe visibility `e^{−M/T2}`; exactly 1 when `t2` is infinite.
pub fn visibility(m: f64, t2: f64) -> f64 {
    (-m / t2).exp()
}

/// `P(e | φ; θ, M)` for an experiment whose coherence decays with time `t2`.
pub fn likelihood_decoherent(e: Outcome, phi: f64, exp: &ExperimentSpec, t2: f64) -> f64 {
    let v = visibility(exp.m, t2);
    v * likelihood_ideal(e, phi, exp) + 0.5 * (1.0 - v)
}

/// An outcome-probability function used by the filter and the oracle.
pub trait Likelihood {
    fn probability(&self, e: Outcome, phi: f64, exp: &ExperimentSpec) -> f64;
}

impl<F> Likelihood for F
where
    F: Fn(Outcome, f64, &ExperimentSpec) -> f64,
{
    fn probability(&self, e: Outcome, phi: f64, exp: &ExperimentSpec) -> f64 {
        self(e, phi, exp)
    }
}

/// The phase-estimation likelihood with a known decoherence time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLikelihood {
    pub t2: f64,
}

impl PhaseLikelihood {
    pub fn ideal() -> Self {
        Self { t2: f64::INFINITY }
    }

    pub fn with_t2(t2: f64) -> Self {
        Self { t2 }
    }
}

impl Likelihood for PhaseLikelihood {
    #[inline]
    fn probability(&self, e: Outcome, phi: f64, exp: &ExperimentSpec) -> f64 {
        if self.t2.is_infinite() {
            likelihood_ideal(e, phi, exp)
        } else {
            likelihood_decoherent(e, phi, exp, self.t2)
        }
    }
}
