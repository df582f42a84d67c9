use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfpe::likelihood::{likelihood_decoherent, visibility};
use rfpe::simulator::{make_system, SystemState};
use rfpe::{ExperimentSpec, NoiseConfig, Outcome};

#[test]
fn outcome_frequencies_match_the_noisy_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 200_000;
    for (phase, m, theta, t2, gamma) in [
        (0.3, 1.0, 1.2, f64::INFINITY, 0.0),
        (5.9, 40.0, 0.1, 100.0, 0.0),
        (2.0, 7.0, 2.3, 20.0, 0.1),
        (4.4, 500.0, 4.4, 1000.0, 0.3),
    ] {
        let sys = SystemState::single(phase, NoiseConfig::new(t2, gamma).unwrap());
        let exp = ExperimentSpec::new(m, theta).unwrap();
        let p = 0.5 * gamma + (1.0 - gamma) * likelihood_decoherent(Outcome::Zero, phase, &exp, t2);
        assert!((sys.prob_zero(&exp) - p).abs() < 1e-15);
        let zeros = (0..n).filter(|_| sys.sample_outcome(&exp, &mut rng) == Outcome::Zero).count();
        let f = zeros as f64 / n as f64;
        assert!((f - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12, "{f} vs {p}");
    }
}

#[test]
fn eigenstate_survives_with_the_visibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let t2 = 50.0;
    let exp = ExperimentSpec::new(10.0, 0.0).unwrap();
    let eigen = 8;
    let n = 100_000;
    let mut changed = 0;
    for _ in 0..n {
        let mut sys = make_system(eigen, 0.1, NoiseConfig::new(t2, 0.0).unwrap(), &mut rng).unwrap();
        changed += sys.depolarize_step(&exp, &mut rng) as usize;
    }
    // a redraw lands on a different eigenstate with probability 7/8
    let p = (1.0 - visibility(10.0, t2)) * (eigen - 1) as f64 / eigen as f64;
    let f = changed as f64 / n as f64;
    assert!((f - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt(), "{f} vs {p}");
}

#[test]
fn runs_of_experiments_survive_as_a_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let t2 = 200.0;
    let ms = [5.0, 30.0, 12.0, 60.0];
    let n = 50_000;
    let mut survived = 0;
    for _ in 0..n {
        let mut sys = make_system(2, 1.0, NoiseConfig::new(t2, 0.0).unwrap(), &mut rng).unwrap();
        let start = sys.current();
        let mut stayed = true;
        for &m in &ms {
            stayed &= !sys.depolarize_step(&ExperimentSpec::new(m, 0.0).unwrap(), &mut rng);
        }
        if stayed {
            assert_eq!(sys.current(), start);
        }
        survived += stayed as usize;
    }
    // two eigenstates: each step leaves the state alone with probability v + (1 − v)/2
    let p: f64 = ms.iter().map(|&m| 0.5 * (1.0 + visibility(m, t2))).product();
    let f = survived as f64 / n as f64;
    assert!((f - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt(), "{f} vs {p}");
}
