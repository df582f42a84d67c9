use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfpe::oracle::{flatness_shift_bound, FlatnessDiagnostic, GridPosterior};

fn bound_for(prior: &GridPosterior, alpha: f64, delta: f64, values: &[f64]) -> rfpe::oracle::ShiftBound {
    flatness_shift_bound(prior, &FlatnessDiagnostic::new(alpha, delta).unwrap(), values).unwrap()
}

#[test]
fn random_perturbations_respect_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let sigma = rng.random_range(0.01..2.0);
        let prior = GridPosterior::normal_window(rng.random_range(-5.0..5.0), sigma, 8.0, 1024).unwrap();
        let alpha = rng.random_range(0.01..1.0);
        let delta = 0.05 * alpha;
        let values: Vec<f64> = (0..1024).map(|_| alpha + rng.random_range(-delta..=delta)).collect();
        let r = bound_for(&prior, alpha, delta, &values);
        assert!(r.satisfied && r.shift <= r.bound, "{r:?}");
        assert!(r.posterior_sd.powi(2) >= r.variance_floor, "{r:?}");
    }
}

#[test]
fn sign_adversary_reaches_the_half_normal_shift() {
    let prior = GridPosterior::normal_window(0.4, 0.2, 10.0, 1 << 14).unwrap();
    let (mu0, sigma) = prior.linear_moments();
    let (alpha, delta) = (1.0, 0.05);
    let values: Vec<f64> = prior.nodes().iter().map(|&x| alpha + delta * (x - mu0).signum()).collect();
    let r = bound_for(&prior, alpha, delta, &values);
    let expected = delta * sigma * (2.0 / std::f64::consts::PI).sqrt() / alpha;
    assert!((r.shift - expected).abs() < 1e-3 * expected, "{} vs {expected}", r.shift);
    assert!(r.satisfied);
}

#[test]
fn linear_adversary_stays_inside() {
    let prior = GridPosterior::normal_window(-1.0, 0.5, 4.0, 4096).unwrap();
    let (mu0, sigma) = prior.linear_moments();
    let (alpha, delta) = (0.5, 0.025);
    let reach = 4.0 * 0.5;
    let values: Vec<f64> = prior.nodes().iter().map(|&x| alpha + delta * (x - mu0) / reach).collect();
    let r = bound_for(&prior, alpha, delta, &values);
    // δ_j ∝ (x − μ0) moves the mean by exactly Σ δ_j w_j (x_j − μ0) / α
    let expected = delta * sigma * sigma / (reach * alpha);
    assert!((r.shift - expected).abs() < 1e-9, "{} vs {expected}", r.shift);
    assert!(r.shift < r.bound);
}

proptest! {
    #[test]
    fn bound_holds_for_any_flat_likelihood(
        seed in any::<u64>(),
        sigma in 0.001f64..3.0,
        alpha in 1e-3f64..10.0,
        ratio in 0.0f64..=0.1,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = GridPosterior::normal_window(0.0, sigma, 8.0, 256).unwrap();
        let delta = ratio * alpha;
        let values: Vec<f64> = (0..256).map(|_| alpha + delta * rng.random_range(-1.0..=1.0)).collect();
        let r = bound_for(&prior, alpha, delta, &values);
        prop_assert!(r.satisfied);
        prop_assert!(r.posterior_sd.powi(2) >= r.variance_floor * (1.0 - 1e-12));
    }
}
