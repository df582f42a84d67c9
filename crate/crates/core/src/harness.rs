//! Full inference runs, trial ensembles and the summary statistics reported on them.
//!
//! A trial repeats design → measure → update → restart check for a fixed
//! number of experiments against a freshly drawn system. Each trial owns its
//! random streams, derived from the master seed and the trial number, so an
//! ensemble is identical whether it runs serially or in parallel.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circular::distance;
use crate::design::{pgh_t2, DesignConfig};
use crate::error::{Error, Result};
use crate::filter::{update, FilterConfig, PhaseModel, UpdateVariant};
use crate::likelihood::{NoiseConfig, PhaseLikelihood};
use crate::restart::{restart_decision, CounterPolicy, snap_to_known, EigenvalueRegistry, ResetState};
use crate::simulator::{make_system, TraceRecord};

/// Standard deviation of a uniformly distributed phase, `π/√3`.
pub const UNIFORM_PHASE_SD: f64 = 1.813_799_364_234_217_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartConfig {
    pub gamma_threshold: f64,
    pub tau: f64,
    pub window: usize,
    pub counter: CounterPolicy,
}

impl Default for RestartConfig {
    fn default() -> Self {
        Self { gamma_threshold: 0.1, tau: 0.1, window: 2, counter: CounterPolicy::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingConfig {
    pub eigenvalues: usize,
    /// Promised minimum gap between eigenphases.
    pub delta: f64,
}

/// Everything needed to run one trial, apart from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiments: usize,
    pub filter: FilterConfig,
    pub update: UpdateVariant,
    pub design: DesignConfig,
    /// Noise of the simulated device. The filter is told `t2` but not `gamma`.
    pub noise: NoiseConfig,
    pub sigma_init: f64,
    pub restart: Option<RestartConfig>,
    pub tracking: Option<TrackingConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiments: 150,
            filter: FilterConfig::default(),
            update: UpdateVariant::Incremental,
            design: DesignConfig::default(),
            noise: NoiseConfig::noiseless(),
            sigma_init: UNIFORM_PHASE_SD,
            restart: None,
            tracking: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.design.validate()?;
        NoiseConfig::new(self.noise.t2, self.noise.gamma)?;
        if !(self.sigma_init > 0.0 && self.sigma_init.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma_init must be positive, got {}", self.sigma_init)));
        }
        if let Some(r) = self.restart {
            let probe = PhaseModel::new(0.0, self.sigma_init)?;
            ResetState::new(&probe, r.gamma_threshold, r.tau, r.window)?;
        }
        if let Some(t) = self.tracking {
            if t.eigenvalues == 0 || !(t.delta >= 0.0) || (t.eigenvalues > 1 && t.eigenvalues as f64 * t.delta >= TAU) {
                return Err(Error::InfeasibleGap { n: t.eigenvalues, delta: t.delta });
            }
        }
        Ok(())
    }
}

/// Independent random stream `stream` of the master seed.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Result of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub records: Vec<TraceRecord>,
    /// The reported estimate: smallest-σ model when restarts are on, else the last model.
    pub estimate: PhaseModel,
    /// Circular distance from `estimate` to the final true eigenphase.
    pub error: f64,
    pub restarts: usize,
    pub skipped_updates: usize,
    pub total_time: f64,
}

/// Runs one trial of `cfg.experiments` experiments.
pub fn run_trial(cfg: &RunConfig, master_seed: u64, trial: u64) -> Result<Trial> {
    cfg.validate()?;
    let mut rng = stream_rng(master_seed, 2 * trial);
    let mut test_rng = stream_rng(master_seed, 2 * trial + 1);

    let (n_eigen, delta) = cfg.tracking.map_or((1, 0.0), |t| (t.eigenvalues, t.delta));
    let mut system = make_system(n_eigen, delta, cfg.noise, &mut rng)?;
    let t2 = cfg.noise.t2;
    let likelihood = PhaseLikelihood::with_t2(t2);
    let tracking = cfg.tracking.is_some();

    let mut model = PhaseModel::new(rng.random::<f64>() * TAU, cfg.sigma_init)?;
    let mut best = model;
    let mut reset_state = match cfg.restart {
        Some(r) => Some(ResetState::new(&model, r.gamma_threshold, r.tau, r.window)?.with_counter(r.counter)),
        None => None,
    };
    let mut registry = EigenvalueRegistry::new(delta)?;
    let mut awaiting_snap = false;
    let mut history: Vec<(usize, f64)> = Vec::new();

    let mut records = Vec::with_capacity(cfg.experiments);
    let (mut restarts, mut skipped_updates, mut total_time) = (0, 0, 0.0);

    for index in 1..=cfg.experiments {
        let exp = pgh_t2(&model, t2, &cfg.design, &mut rng);
        let outcome = system.sample_outcome(&exp, &mut rng);
        if tracking {
            system.depolarize_step(&exp, &mut rng);
        }
        total_time += exp.m;

        let upd = update(cfg.update, &model, outcome, &exp, &cfg.filter, &likelihood, &mut rng);
        let skipped = upd.skipped.is_some();
        skipped_updates += skipped as usize;
        model = upd.model;
        history.push((index, model.sigma()));

        let (mut tested, mut restarted) = (false, false);
        if let Some(state) = reset_state.as_mut() {
            let before = model;
            let sys = &mut system;
            let trng = &mut test_rng;
            let decision = restart_decision(&history, &model, state, exp.m, t2, &mut rng, |e| {
                let o = sys.sample_outcome(e, trng);
                if tracking {
                    sys.depolarize_step(e, trng);
                }
                o
            })?;
            tested = decision.tested();
            if let Some((e, _)) = decision.test {
                total_time += e.m;
            }
            if decision.reset {
                restarted = true;
                restarts += 1;
                registry.record(&before);
                history.clear();
                awaiting_snap = true;
            }
            model = decision.model;
        }
        if awaiting_snap && model.sigma() < registry.delta() {
            model = snap_to_known(&model, &registry);
            awaiting_snap = false;
        }
        if model.sigma() < best.sigma() {
            best = model;
        }

        records.push(TraceRecord {
            index,
            m: exp.m,
            theta: exp.theta,
            outcome,
            mu: model.mu(),
            sigma: model.sigma(),
            error: distance(model.mu(), system.current_phase()),
            eigenstate: system.current(),
            tested,
            restarted,
            skipped,
        });
    }
    registry.record(&model);

    let estimate = if cfg.restart.is_some() { best } else { model };
    Ok(Trial {
        error: distance(estimate.mu(), system.current_phase()),
        estimate,
        records,
        restarts,
        skipped_updates,
        total_time,
    })
}

/// Runs `trials` independent trials in parallel; the result does not depend on the thread count.
pub fn run_ensemble(cfg: &RunConfig, trials: usize, master_seed: u64) -> Result<Vec<Trial>> {
    cfg.validate()?;
    (0..trials as u64).into_par_iter().map(|t| run_trial(cfg, master_seed, t)).collect()
}

/// Per-experiment summary across an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexStats {
    pub index: usize,
    pub median_error: f64,
    pub mean_error: f64,
    pub median_sigma: f64,
    /// Median over trials of the accumulated `Σ M` up to this experiment.
    pub median_time: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub per_index: Vec<IndexStats>,
    /// Error of each trial's reported estimate.
    pub final_errors: Vec<f64>,
    pub final_median: f64,
    pub final_mean: f64,
    pub restarts: usize,
    pub skipped_updates: usize,
    /// Mean over trials of the total evolution time.
    pub mean_total_time: f64,
}

impl Metrics {
    pub fn median_series(&self) -> Vec<f64> {
        self.per_index.iter().map(|s| s.median_error).collect()
    }

    /// Fraction of final errors at or below each threshold.
    pub fn final_cdf(&self, thresholds: &[f64]) -> Vec<f64> {
        empirical_cdf(&self.final_errors, thresholds)
    }
}

/// Fraction of `values` at or below each threshold.
pub fn empirical_cdf(values: &[f64], thresholds: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    thresholds.iter().map(|&x| values.iter().filter(|&&v| v <= x).count() as f64 / n).collect()
}

/// Median of a slice; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Error CDF across the ensemble after experiment `index` (1-based), using the per-record error.
pub fn error_cdf_at(trials: &[Trial], index: usize, thresholds: &[f64]) -> Vec<f64> {
    let errors: Vec<f64> = trials.iter().filter_map(|t| t.records.get(index.wrapping_sub(1))).map(|r| r.error).collect();
    empirical_cdf(&errors, thresholds)
}

pub fn aggregate(trials: &[Trial]) -> Result<Metrics> {
    if trials.is_empty() {
        return Err(Error::InvalidConfig("cannot aggregate an empty ensemble".into()));
    }
    let len = trials.iter().map(|t| t.records.len()).min().unwrap_or(0);
    let mut times = vec![0.0; trials.len()];
    let mut per_index = Vec::with_capacity(len);
    for i in 0..len {
        let errors: Vec<f64> = trials.iter().map(|t| t.records[i].error).collect();
        let sigmas: Vec<f64> = trials.iter().map(|t| t.records[i].sigma).collect();
        for (acc, t) in times.iter_mut().zip(trials) {
            *acc += t.records[i].m;
        }
        per_index.push(IndexStats {
            index: i + 1,
            median_error: median(&errors),
            mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
            median_sigma: median(&sigmas),
            median_time: median(&times),
            restarts: trials.iter().filter(|t| t.records[i].restarted).count(),
        });
    }
    let final_errors: Vec<f64> = trials.iter().map(|t| t.error).collect();
    Ok(Metrics {
        per_index,
        final_median: median(&final_errors),
        final_mean: final_errors.iter().sum::<f64>() / final_errors.len() as f64,
        final_errors,
        restarts: trials.iter().map(|t| t.restarts).sum(),
        skipped_updates: trials.iter().map(|t| t.skipped_updates).sum(),
        mean_total_time: trials.iter().map(|t| t.total_time).sum::<f64>() / trials.len() as f64,
    })
}

/// Window for fitting `error ≈ A e^{−λN}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// First experiment number (1-based) included in the fit.
    pub start: usize,
    /// The fit stops before the first experiment whose error is below this.
    pub floor: f64,
}

impl Default for DecayFit {
    fn default() -> Self {
        Self { start: 1, floor: 1e-13 }
    }
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Fits the exponential decay rate `λ` of an error series indexed by experiment number.
pub fn fit_decay_exponent(series: &[f64], fit: &DecayFit) -> Result<f64> {
    let begin = fit.start.max(1) - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &e) in series.iter().enumerate().skip(begin) {
        if !(e > 0.0) {
            return Err(Error::DegenerateFit(format!("non-positive error {e} at experiment {}", i + 1)));
        }
        if e < fit.floor {
            break;
        }
        xs.push((i + 1) as f64);
        ys.push(-e.ln());
    }
    if xs.len() < 10 {
        return Err(Error::DegenerateFit(format!("only {} points before the floor", xs.len())));
    }
    match ls_slope(&xs, &ys) {
        Some(lambda) if lambda > 0.0 => Ok(lambda),
        Some(lambda) => Err(Error::DegenerateFit(format!("error does not decay (slope {lambda})"))),
        None => Err(Error::DegenerateFit("singular fit".into())),
    }
}

/// Slope of `log error` against `log N` over experiments `from..=to` (1-based).
pub fn loglog_slope(series: &[f64], from: usize, to: usize) -> Result<f64> {
    let to = to.min(series.len());
    if from < 1 || to <= from {
        return Err(Error::DegenerateFit(format!("empty window {from}..={to}")));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        (from..=to).map(|n| ((n as f64).ln(), series[n - 1].ln())).unzip();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::DegenerateFit("non-positive error in window".into()));
    }
    ls_slope(&xs, &ys).ok_or_else(|| Error::DegenerateFit("singular fit".into()))
}

/// `max/min` over `from..=to` of (median accumulated time) × (median error).
pub fn heisenberg_spread(metrics: &Metrics, from: usize, to: usize) -> f64 {
    let products: Vec<f64> = metrics
        .per_index
        .iter()
        .filter(|s| s.index >= from && s.index <= to)
        .map(|s| s.median_time * s.median_error)
        .collect();
    let max = products.iter().cloned().fold(f64::MIN, f64::max);
    let min = products.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

/// First experiment whose median σ is small enough for the `T2` cap to bind.
pub fn cap_onset(metrics: &Metrics, t2: f64) -> Option<usize> {
    let sigma = crate::design::PGH_SCALE / t2;
    metrics.per_index.iter().find(|s| s.median_sigma <= sigma).map(|s| s.index)
}

/// Time from an eigenstate change until the estimate caught up with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recovery {
    /// Experiments from the change until recovery, or until observation stopped.
    pub elapsed: usize,
    /// `false` when the trace ended or the state changed again first.
    pub recovered: bool,
}

/// For every eigenstate change in a trace, the number of experiments until the
/// error to the new eigenphase first drops below `threshold`.
pub fn recovery_times(records: &[TraceRecord], threshold: f64) -> Vec<Recovery> {
    let mut out = Vec::new();
    for (k, pair) in records.windows(2).enumerate() {
        if pair[0].eigenstate == pair[1].eigenstate {
            continue;
        }
        let start = records[k].index;
        let new_state = pair[1].eigenstate;
        let mut event = Recovery { elapsed: 0, recovered: false };
        for r in &records[k + 1..] {
            if r.eigenstate != new_state {
                break;
            }
            event.elapsed = r.index - start;
            if r.error < threshold {
                event.recovered = true;
                break;
            }
        }
        out.push(event);
    }
    out
}

/// Kaplan-Meier estimate of the median recovery time, treating unrecovered
/// events as censored. `None` if the survival curve never reaches one half.
pub fn kaplan_meier_median(events: &[Recovery]) -> Option<usize> {
    let mut sorted = events.to_vec();
    sorted.sort_by_key(|e| (e.elapsed, !e.recovered));
    let mut at_risk = sorted.len();
    let mut survival = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].elapsed;
        let (mut recovered, mut leaving) = (0, 0);
        while i < sorted.len() && sorted[i].elapsed == t {
            recovered += sorted[i].recovered as usize;
            leaving += 1;
            i += 1;
        }
        if recovered > 0 {
            survival *= 1.0 - recovered as f64 / at_risk as f64;
            if survival <= 0.5 {
                return Some(t);
            }
        }
        at_risk -= leaving;
    }
    None
}
