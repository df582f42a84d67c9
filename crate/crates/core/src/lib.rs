//! Adaptive Bayesian eigenphase estimation with a rejection-sampled Gaussian
//! posterior.
//!
//! The crate is organised around the inference loop:
//!
//! * [`likelihood`] gives outcome probabilities for ideal and decohering
//!   phase-estimation experiments.
//! * [`filter`] updates a Gaussian [`PhaseModel`] by rejection sampling.
//! * [`design`] picks the next experiment with the particle guess heuristic.
//! * [`restart`] detects a failed or depolarized estimate and resets it.
//! * [`simulator`] produces measurement outcomes from a ground-truth system.
//! * [`oracle`] performs exact grid Bayes updates for validation.
//! * [`harness`] composes all of the above into trials and ensembles.
//! * [`cli`] drives the harness from the command line.

pub mod circular;
pub mod cli;
pub mod design;
pub mod error;
pub mod filter;
pub mod harness;
pub mod likelihood;
pub mod oracle;
pub mod restart;
pub mod simulator;

pub use error::{Error, Result};
pub use filter::{FilterConfig, PhaseModel, UpdateOutcome, UpdateVariant};
pub use likelihood::{ExperimentSpec, Likelihood, NoiseConfig, Outcome};
