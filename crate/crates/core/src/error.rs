use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("invalid noise configuration: {0}")]
    InvalidNoise(String),

    #[error("invalid phase model: mu = {mu}, sigma = {sigma}")]
    InvalidModel { mu: f64, sigma: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("posterior has zero total weight; the datum is impossible under the prior")]
    ZeroPosterior,

    #[error("resultant length {0:e} is too small to define a circular mean")]
    DegenerateResultant(f64),

    #[error("flatness model not applicable: alpha = {alpha}, delta = {delta} (need alpha >= 10 delta)")]
    FlatnessNotApplicable { alpha: f64, delta: f64 },

    #[error("likelihood value {value} at node {index} lies outside [alpha - delta, alpha + delta]")]
    FlatnessViolated { index: usize, value: f64 },

    #[error("Bayes factor is undefined for tau = 0")]
    ZeroTau,

    #[error("cannot place {n} eigenphases with pairwise gap {delta} on the circle")]
    InfeasibleGap { n: usize, delta: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
