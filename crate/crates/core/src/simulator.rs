//! Ground-truth system that answers experiments with random outcomes.
//!
//! Outcomes are drawn directly from the decohering likelihood at the phase of
//! the current eigenstate. Unmodelled depolarizing noise replaces an outcome
//! by a fair coin with probability `γ`. In tracking runs the eigenstate itself
//! can decay to another one after each experiment.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circular::{distance, wrap};
use crate::error::{Error, Result};
use crate::likelihood::{likelihood_decoherent, visibility, ExperimentSpec, NoiseConfig, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    eigenphases: Vec<f64>,
    current: usize,
    noise: NoiseConfig,
    delta: f64,
}

impl SystemState {
    pub fn new(eigenphases: Vec<f64>, current: usize, noise: NoiseConfig, delta: f64) -> Result<Self> {
        if eigenphases.is_empty() || current >= eigenphases.len() {
            return Err(Error::InvalidConfig("system needs at least one eigenphase and a valid current index".into()));
        }
        let eigenphases: Vec<f64> = eigenphases.into_iter().map(wrap).collect();
        for (i, a) in eigenphases.iter().enumerate() {
            for b in &eigenphases[i + 1..] {
                if distance(*a, *b) < delta {
                    return Err(Error::InfeasibleGap { n: eigenphases.len(), delta });
                }
            }
        }
        Ok(Self { eigenphases, current, noise, delta })
    }

    /// A single eigenphase with the given noise.
    pub fn single(phase: f64, noise: NoiseConfig) -> Self {
        Self { eigenphases: vec![wrap(phase)], current: 0, noise, delta: 0.0 }
    }

    pub fn eigenphases(&self) -> &[f64] {
        &self.eigenphases
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn current_phase(&self) -> f64 {
        self.eigenphases[self.current]
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Probability that the next outcome is `0`.
    pub fn prob_zero(&self, exp: &ExperimentSpec) -> f64 {
        let p = likelihood_decoherent(Outcome::Zero, self.current_phase(), exp, self.noise.t2);
        self.noise.gamma * 0.5 + (1.0 - self.noise.gamma) * p
    }

    pub fn sample_outcome<R: Rng + ?Sized>(&self, exp: &ExperimentSpec, rng: &mut R) -> Outcome {
        if self.noise.gamma > 0.0 && rng.random::<f64>() < self.noise.gamma {
            return Outcome::from(rng.random::<bool>());
        }
        let p0 = likelihood_decoherent(Outcome::Zero, self.current_phase(), exp, self.noise.t2);
        if rng.random::<f64>() < p0 {
            Outcome::Zero
        } else {
            Outcome::One
        }
    }

    /// Lets the eigenstate decay during an experiment of length `exp.m`.
    ///
    /// With probability `1 − e^{−M/T2}` the state is replaced by a uniformly
    /// chosen eigenstate (possibly the same one). Returns whether the index changed.
    pub fn depolarize_step<R: Rng + ?Sized>(&mut self, exp: &ExperimentSpec, rng: &mut R) -> bool {
        if self.noise.t2.is_infinite() {
            return false;
        }
        if rng.random::<f64>() < visibility(exp.m, self.noise.t2) {
            return false;
        }
        let before = self.current;
        self.current = rng.random_range(0..self.eigenphases.len());
        before != self.current
    }
}

/// Free function form of [`SystemState::sample_outcome`].
pub fn sample_outcome<R: Rng + ?Sized>(sys: &SystemState, exp: &ExperimentSpec, rng: &mut R) -> Outcome {
    sys.sample_outcome(exp, rng)
}

/// Builds a system of `n` eigenphases, uniformly distributed subject to a
/// pairwise circular gap of at least `delta`, in a uniformly chosen eigenstate.
pub fn make_system<R: Rng + ?Sized>(n: usize, delta: f64, noise: NoiseConfig, rng: &mut R) -> Result<SystemState> {
    if n == 0 || !(delta >= 0.0) || (n > 1 && n as f64 * delta >= TAU) {
        return Err(Error::InfeasibleGap { n, delta });
    }
    let slack = if n > 1 { TAU - n as f64 * delta } else { TAU };
    // Uniform points on a circle of length `slack`, each gap then widened by `delta`.
    let mut cuts: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * slack).collect();
    cuts.sort_by(f64::total_cmp);
    let rotation = rng.random::<f64>() * TAU;
    let mut phases: Vec<f64> = cuts.iter().enumerate().map(|(i, c)| wrap(rotation + c + i as f64 * delta)).collect();
    phases.shuffle(rng);
    let current = rng.random_range(0..n);
    Ok(SystemState { eigenphases: phases, current, noise, delta })
}

/// One row of an inference trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Experiment number, starting at 1.
    pub index: usize,
    pub m: f64,
    pub theta: f64,
    pub outcome: Outcome,
    /// Model after the update and any restart or snap.
    pub mu: f64,
    pub sigma: f64,
    /// Circular distance from `mu` to the current true eigenphase.
    pub error: f64,
    /// Eigenstate of the system after this experiment.
    pub eigenstate: usize,
    pub tested: bool,
    pub restarted: bool,
    pub skipped: bool,
}

impl TraceRecord {
    pub fn spec(&self) -> ExperimentSpec {
        ExperimentSpec { m: self.m, theta: self.theta }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(m: f64, theta: f64) -> ExperimentSpec {
        ExperimentSpec::new(m, theta).unwrap()
    }

    #[test]
    fn aligned_reference_always_gives_zero() {
        let sys = SystemState::single(2.5, NoiseConfig::noiseless());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for m in [1.0, 7.0, 1e6] {
            for _ in 0..1000 {
                assert_eq!(sys.sample_outcome(&exp(m, 2.5), &mut rng), Outcome::Zero);
            }
        }
    }

    #[test]
    fn full_depolarization_is_a_fair_coin() {
        let sys = SystemState::single(2.5, NoiseConfig::new(f64::INFINITY, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        for e in [exp(1.0, 2.5), exp(13.0, 0.0), exp(2.0, 4.0)] {
            let zeros = (0..n).filter(|_| sys.sample_outcome(&e, &mut rng) == Outcome::Zero).count();
            let f = zeros as f64 / n as f64;
            assert!((f - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt(), "{f}");
            assert_eq!(sys.prob_zero(&e), 0.5);
        }
    }

    #[test]
    fn infinite_t2_never_jumps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut sys = make_system(16, 0.0, NoiseConfig::noiseless(), &mut rng).unwrap();
        let start = sys.current();
        for _ in 0..1000 {
            assert!(!sys.depolarize_step(&exp(1e9, 0.0), &mut rng));
        }
        assert_eq!(sys.current(), start);
    }

    #[test]
    fn long_experiments_always_jump_attempt() {
        // with M/T2 huge the state is redrawn every time; it changes with probability 15/16
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sys = make_system(16, 0.0, NoiseConfig::new(1.0, 0.0).unwrap(), &mut rng).unwrap();
        let n = 16_000;
        let changed = (0..n).filter(|_| sys.depolarize_step(&exp(1e3, 0.0), &mut rng)).count();
        let p = 15.0 / 16.0;
        assert!((changed as f64 / n as f64 - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn make_system_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let one = make_system(1, 10.0, NoiseConfig::noiseless(), &mut rng).unwrap();
        assert_eq!(one.eigenphases().len(), 1);
        let sixteen = make_system(16, 0.0, NoiseConfig::new(1e4, 0.0).unwrap(), &mut rng).unwrap();
        assert_eq!(sixteen.eigenphases().len(), 16);
        for _ in 0..50 {
            let s = make_system(4, 1.0, NoiseConfig::noiseless(), &mut rng).unwrap();
            let p = s.eigenphases();
            for i in 0..4 {
                assert!((0.0..TAU).contains(&p[i]));
                for j in i + 1..4 {
                    assert!(distance(p[i], p[j]) >= 1.0 - 1e-12);
                }
            }
        }
        assert!(matches!(
            make_system(7, 1.0, NoiseConfig::noiseless(), &mut rng),
            Err(Error::InfeasibleGap { .. })
        ));
    }

    #[test]
    fn new_checks_gap_and_index() {
        assert!(SystemState::new(vec![0.0, 0.5], 0, NoiseConfig::noiseless(), 1.0).is_err());
        assert!(SystemState::new(vec![0.0, 0.5], 2, NoiseConfig::noiseless(), 0.1).is_err());
        assert!(SystemState::new(vec![0.1, TAU - 0.1], 1, NoiseConfig::noiseless(), 0.1).is_ok());
    }
}
