//! Command-line driver: named scenarios, CSV export and run manifests.
//!
//! `rfpe run --preset <name>` runs an ensemble and writes `trace.csv`,
//! `aggregate.csv`, `final.csv` and `manifest.toml` into the output directory.
//! Feeding the manifest back with `--manifest` reproduces every file exactly.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::design::{CapMode, ThetaConvention};
use crate::error::{Error, Result};
use crate::filter::UpdateVariant;
use crate::harness::{
    aggregate, cap_onset, fit_decay_exponent, heisenberg_spread, kaplan_meier_median, loglog_slope, recovery_times,
    run_ensemble, DecayFit, Metrics, RestartConfig, RunConfig, TrackingConfig, Trial,
};
use crate::likelihood::NoiseConfig;
use crate::restart::CounterPolicy;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Noiseless convergence, 150 experiments.
    Fig1,
    /// Decoherent device, experiment length drawn around `T2` once the cap binds.
    T2,
    /// Sixteen-level system whose eigenstate decays; restarts on.
    Tracking,
    /// Depolarizing noise unknown to the filter.
    Gamma,
    /// Noiseless run with restarts, 2000 samples per update.
    Restart,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Preset::Fig1 => "fig1",
            Preset::T2 => "t2",
            Preset::Tracking => "tracking",
            Preset::Gamma => "gamma",
            Preset::Restart => "restart",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Parser)]
#[command(name = "rfpe", version, about = "Rejection-filter phase estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write CSV output plus a manifest.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = Preset::Fig1)]
    preset: Preset,
    /// Samples drawn per update.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long = "n-experiments")]
    n_experiments: Option<usize>,
    /// Decoherence time; `inf` for none.
    #[arg(long)]
    t2: Option<f64>,
    /// Probability that an outcome is replaced by a coin flip.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Slope threshold on `log σ` that triggers a test.
    #[arg(long = "gamma-threshold")]
    gamma_threshold: Option<f64>,
    /// Trailing records used for the slope.
    #[arg(long)]
    window: Option<usize>,
    /// Slope-test counter policy, see `CounterPolicy`.
    #[arg(long)]
    counter: Option<CounterPolicy>,
    /// Minimum gap between eigenphases.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eigenvalues: Option<usize>,
    /// Acceptance scale, applied to both outcomes.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    update: Option<UpdateVariant>,
    #[arg(long = "theta-convention")]
    theta_convention: Option<ThetaConvention>,
    #[arg(long)]
    cap: Option<CapMode>,
    #[arg(long = "cap-scale")]
    cap_scale: Option<f64>,
    #[arg(long, value_enum)]
    restart: Option<Switch>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "rfpe-out")]
    out: PathBuf,
    /// Evaluate the preset's pass criteria and exit with status 2 if any fails.
    #[arg(long)]
    check: bool,
    /// Re-run the scenario recorded in a manifest; other scenario flags are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Everything that determines a run's output. Written as `manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub preset: Preset,
    pub seed: u64,
    pub trials: usize,
    pub config: RunConfig,
}

impl Scenario {
    pub fn preset(preset: Preset) -> Self {
        let mut config = RunConfig::default();
        match preset {
            Preset::Fig1 => {}
            Preset::T2 => {
                config.experiments = 500;
                config.filter.samples = 2000;
                config.noise = NoiseConfig { t2: 1000.0, gamma: 0.0 };
                config.design.cap = CapMode::Stochastic;
            }
            Preset::Tracking => {
                config.experiments = 300;
                config.noise = NoiseConfig { t2: 1e4, gamma: 0.0 };
                config.restart = Some(RestartConfig::default());
                config.tracking = Some(TrackingConfig { eigenvalues: 16, delta: 0.0 });
            }
            Preset::Gamma => {
                config.noise = NoiseConfig { t2: 1000.0, gamma: 0.1 };
            }
            Preset::Restart => {
                config.experiments = 200;
                config.filter.samples = 2000;
                config.restart = Some(RestartConfig::default());
            }
        }
        let trials = if preset == Preset::Tracking { 20 } else { 200 };
        Self { preset, seed: 7, trials, config }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(format!("cannot serialize manifest: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("bad manifest: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("need at least one trial".into()));
        }
        self.config.validate()
    }
}

fn apply_overrides(args: &RunArgs) -> Scenario {
    let mut s = Scenario::preset(args.preset);
    let c = &mut s.config;
    if let Some(v) = args.seed {
        s.seed = v;
    }
    if let Some(v) = args.trials {
        s.trials = v;
    }
    if let Some(v) = args.n_experiments {
        c.experiments = v;
    }
    if let Some(v) = args.m {
        c.filter.samples = v;
    }
    if let Some(v) = args.kappa {
        c.filter.kappa0 = v;
        c.filter.kappa1 = v;
    }
    if let Some(v) = args.t2 {
        c.noise.t2 = v;
    }
    if let Some(v) = args.gamma {
        c.noise.gamma = v;
    }
    if let Some(v) = args.update {
        c.update = v;
    }
    if let Some(v) = args.theta_convention {
        c.design.theta = v;
    }
    if let Some(v) = args.cap {
        c.design.cap = v;
    }
    if let Some(v) = args.cap_scale {
        c.design.cap_scale = v;
    }
    match args.restart {
        Some(Switch::On) if c.restart.is_none() => c.restart = Some(RestartConfig::default()),
        Some(Switch::Off) => c.restart = None,
        _ => {}
    }
    if let Some(r) = c.restart.as_mut() {
        if let Some(v) = args.tau {
            r.tau = v;
        }
        if let Some(v) = args.gamma_threshold {
            r.gamma_threshold = v;
        }
        if let Some(v) = args.window {
            r.window = v;
        }
        if let Some(v) = args.counter {
            r.counter = v;
        }
    }
    if args.eigenvalues.is_some() || args.delta.is_some() {
        let t = c.tracking.get_or_insert(TrackingConfig { eigenvalues: 1, delta: 0.0 });
        if let Some(v) = args.eigenvalues {
            t.eigenvalues = v;
        }
        if let Some(v) = args.delta {
            t.delta = v;
        }
    }
    s
}

/// Formats a float with 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_trace(path: &Path, trials: &[Trial]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record([
        "trial", "index", "m", "theta", "outcome", "mu", "sigma", "error", "eigenstate", "tested", "restarted", "skipped",
    ])
    .map_err(csv_error)?;
    for (t, trial) in trials.iter().enumerate() {
        for r in &trial.records {
            w.write_record([
                t.to_string(),
                r.index.to_string(),
                num(r.m),
                num(r.theta),
                r.outcome.to_string(),
                num(r.mu),
                num(r.sigma),
                num(r.error),
                r.eigenstate.to_string(),
                r.tested.to_string(),
                r.restarted.to_string(),
                r.skipped.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_aggregate(path: &Path, metrics: &Metrics) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["index", "median_error", "mean_error", "median_sigma", "median_time", "restarts"])
        .map_err(csv_error)?;
    for s in &metrics.per_index {
        w.write_record([
            s.index.to_string(),
            num(s.median_error),
            num(s.mean_error),
            num(s.median_sigma),
            num(s.median_time),
            s.restarts.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_final(path: &Path, trials: &[Trial]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["trial", "mu", "sigma", "error", "restarts", "skipped_updates", "total_time"]).map_err(csv_error)?;
    for (t, trial) in trials.iter().enumerate() {
        w.write_record([
            t.to_string(),
            num(trial.estimate.mu()),
            num(trial.estimate.sigma()),
            num(trial.error),
            trial.restarts.to_string(),
            trial.skipped_updates.to_string(),
            num(trial.total_time),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One evaluated pass criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub value: String,
    pub passed: bool,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.value)
    }
}

fn line(name: &str, value: String, passed: bool) -> CheckLine {
    CheckLine { name: name.into(), value, passed }
}

fn decay_line(name: &str, fit: Result<f64>, range: (f64, f64)) -> CheckLine {
    match fit {
        Ok(l) => line(name, format!("lambda = {l:.4}, want [{}, {}]", range.0, range.1), l >= range.0 && l <= range.1),
        Err(e) => line(name, e.to_string(), false),
    }
}

/// Pass criteria for a finished scenario. Some presets run a companion ensemble.
pub fn check(scenario: &Scenario, trials: &[Trial], metrics: &Metrics) -> Result<Vec<CheckLine>> {
    let cfg = &scenario.config;
    let series = metrics.median_series();
    let n = series.len();
    let mut out = Vec::new();
    match scenario.preset {
        Preset::Fig1 => {
            out.push(decay_line("exponential decay", fit_decay_exponent(&series, &DecayFit::default()), (0.12, 0.22)));
            let last = series.last().copied().unwrap_or(f64::NAN);
            out.push(line("final median error", format!("{last:.3e}, want <= 1e-8"), last <= 1e-8));
            let spread = heisenberg_spread(metrics, 20.min(n), n);
            out.push(line("time x error spread", format!("{spread:.3}, want < 10"), spread < 10.0));
        }
        Preset::T2 => {
            let onset = cap_onset(metrics, cfg.noise.t2);
            let slope = onset.ok_or_else(|| Error::DegenerateFit("cap never binds".into())).and_then(|o| loglog_slope(&series, o, n));
            out.push(match slope {
                Ok(s) => line(
                    "post-transition log-log slope",
                    format!("{s:.3} over {}..={n}, want [-0.9, -0.3]", onset.unwrap_or(0)),
                    (-0.9..=-0.3).contains(&s),
                ),
                Err(e) => line("post-transition log-log slope", e.to_string(), false),
            });
        }
        Preset::Tracking => {
            let events: Vec<_> = trials.iter().flat_map(|t| recovery_times(&t.records, 1e-2)).collect();
            let km = kaplan_meier_median(&events);
            let value = format!("{km:?} over {} jumps, want <= 100", events.len());
            out.push(line("median recovery time", value, km.is_some_and(|t| t <= 100)));
        }
        Preset::Gamma => {
            let fit = DecayFit { start: 1, floor: 1e-2 };
            let lambda = fit_decay_exponent(&series, &fit);
            let mut reference = *cfg;
            reference.noise.gamma = 0.0;
            let base = aggregate(&run_ensemble(&reference, scenario.trials, scenario.seed)?)?;
            let lambda0 = fit_decay_exponent(&base.median_series(), &fit);
            out.push(match (lambda, lambda0) {
                (Ok(l), Ok(l0)) => line(
                    "noise slows convergence",
                    format!("lambda = {l:.4} vs {l0:.4} without noise"),
                    cfg.noise.gamma == 0.0 || l < l0,
                ),
                (Err(e), _) | (_, Err(e)) => line("noise slows convergence", e.to_string(), false),
            });
        }
        Preset::Restart => {
            let mut reference = *cfg;
            reference.restart = None;
            let base = aggregate(&run_ensemble(&reference, scenario.trials, scenario.seed)?)?;
            let ratio = metrics.final_mean / base.final_mean;
            out.push(line(
                "restart benefit",
                format!("mean error {:.3e} vs {:.3e}, ratio {ratio:.3e}, want <= 1e-3", metrics.final_mean, base.final_mean),
                ratio <= 1e-3,
            ));
        }
    }
    Ok(out)
}

/// Runs `scenario` and writes its output files into `out`.
pub fn execute(scenario: &Scenario, out: &Path) -> Result<(Vec<Trial>, Metrics)> {
    scenario.validate()?;
    let trials = run_ensemble(&scenario.config, scenario.trials, scenario.seed)?;
    let metrics = aggregate(&trials)?;
    fs::create_dir_all(out)?;
    write_trace(&out.join("trace.csv"), &trials)?;
    write_aggregate(&out.join("aggregate.csv"), &metrics)?;
    write_final(&out.join("final.csv"), &trials)?;
    fs::write(out.join("manifest.toml"), scenario.to_toml()?)?;
    Ok((trials, metrics))
}

fn run_command(args: &RunArgs) -> Result<i32> {
    let scenario = match &args.manifest {
        Some(path) => Scenario::from_toml(&fs::read_to_string(path)?)?,
        None => apply_overrides(args),
    };
    let (trials, metrics) = execute(&scenario, &args.out)?;
    println!(
        "{} trials of {}: final median error {:.3e}, mean {:.3e}, restarts {}, skipped updates {}",
        scenario.trials, scenario.preset, metrics.final_median, metrics.final_mean, metrics.restarts, metrics.skipped_updates
    );
    println!("wrote {}", args.out.display());
    if !args.check {
        return Ok(EXIT_OK);
    }
    let lines = check(&scenario, &trials, &metrics)?;
    for l in &lines {
        println!("{l}");
    }
    Ok(if lines.iter().all(|l| l.passed) { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let Command::Run(args) = cli.command;
    match run_command(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}
