#![allow(dead_code)]

use rand::Rng;
use rfpe::circular::signed_difference;
use rfpe::filter::{posterior_sampler_validity, update_circular, update_incremental};
use rfpe::likelihood::PhaseLikelihood;
use rfpe::oracle::{circular_summary, cut_moments, grid_posterior, GridPosterior, DEFAULT_GRID_SIZE};
use rfpe::{ExperimentSpec, FilterConfig, Likelihood, Outcome, PhaseModel};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail probability of Pearson's statistic for observed counts against bin masses.
pub fn chi_square_p(counts: &[usize], masses: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(masses)
        .map(|(&o, &p)| {
            let e = n as f64 * p;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Goodness of fit of accepted samples against the exact posterior.
pub fn sampler_fit<R: Rng>(
    prior: &PhaseModel,
    e: Outcome,
    exp: &ExperimentSpec,
    posterior: &GridPosterior,
    attempts: usize,
    rng: &mut R,
) -> f64 {
    let acc = posterior_sampler_validity(prior, e, exp, 1.0, &PhaseLikelihood::ideal(), rng, attempts);
    let bins = (acc.samples.len() / 25).clamp(2, 20);
    let (edges, masses) = posterior.quantile_bins(prior.mu(), bins);
    let counts = acc.histogram(prior.mu(), &edges);
    chi_square_p(&counts, &masses)
}

/// Standardized deviations of both filter variants from the oracle for one update.
#[derive(Debug, Clone, Copy)]
pub struct OracleComparison {
    pub incremental: (f64, f64),
    pub circular: (f64, f64),
    pub p_value: f64,
    pub skipped: bool,
}

impl OracleComparison {
    pub fn worst_z(&self) -> f64 {
        [self.incremental.0, self.incremental.1, self.circular.0, self.circular.1]
            .iter()
            .fold(0.0f64, |a, z| a.max(z.abs()))
    }
}

pub fn compare_with_oracle<R: Rng>(
    prior: &PhaseModel,
    e: Outcome,
    exp: &ExperimentSpec,
    samples: usize,
    rng: &mut R,
) -> OracleComparison {
    let lik = PhaseLikelihood::ideal();
    let grid = GridPosterior::wrapped_normal(prior.mu(), prior.sigma(), DEFAULT_GRID_SIZE).unwrap();
    let post = grid_posterior(&grid, e, exp, &lik).unwrap();
    let cfg = FilterConfig::with_samples(samples);

    let inc = update_incremental(prior, e, exp, &cfg, &lik, rng);
    let cut = cut_moments(&post);
    let (se_mu, se_sd) = cut.standard_errors(inc.accepted.max(1));
    let incremental =
        (signed_difference(inc.model.mu(), cut.mean) / se_mu, (inc.model.sigma() - cut.sd) / se_sd);

    let circ = update_circular(prior, e, exp, &cfg, &lik, rng);
    let summary = circular_summary(&post).unwrap();
    let (se_mu, se_sd) = summary.standard_errors(circ.accepted.max(1));
    let circular =
        (signed_difference(circ.model.mu(), summary.mean) / se_mu, (circ.model.sigma() - summary.sd) / se_sd);

    let p_value = sampler_fit(prior, e, exp, &post, samples, rng);
    OracleComparison {
        incremental,
        circular,
        p_value,
        skipped: inc.skipped.is_some() || circ.skipped.is_some(),
    }
}

/// Prior predictive probability of `e`.
pub fn evidence(prior: &PhaseModel, e: Outcome, exp: &ExperimentSpec) -> f64 {
    let lik = PhaseLikelihood::ideal();
    let grid = GridPosterior::wrapped_normal(prior.mu(), prior.sigma(), DEFAULT_GRID_SIZE).unwrap();
    grid.nodes().iter().zip(grid.weights()).map(|(&x, &w)| w * lik.probability(e, x, exp)).sum()
}

/// Random single-update instance: σ ∈ [0.01, 0.5], M ∈ [1, 100], either outcome,
/// redrawn until the outcome has prior predictive probability at least 5%.
pub fn random_instance<R: Rng>(rng: &mut R) -> (PhaseModel, Outcome, ExperimentSpec) {
    loop {
        let sigma = rng.random_range(0.01..=0.5);
        let prior = PhaseModel::new(rng.random_range(0.0..std::f64::consts::TAU), sigma).unwrap();
        let m = rng.random_range(1.0..=100.0);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let e = if rng.random::<bool>() { Outcome::One } else { Outcome::Zero };
        let exp = ExperimentSpec::new(m, theta).unwrap();
        if evidence(&prior, e, &exp) >= 0.05 {
            return (prior, e, exp);
        }
    }
}
