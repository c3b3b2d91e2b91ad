//! Fiducial matching (FIMA) for statistical inference on differentially
//! private categorical data.
//!
//! The crate covers the full pipeline: calibrating and applying additive DP
//! noise to sample proportions and counts ([`mechanisms`]), mapping a DP
//! release to a Monte Carlo fiducial distribution over the underlying class
//! probability ([`sampler`]), turning those draws into percentile confidence
//! intervals and one-/two-sample hypothesis tests ([`inference`]), a
//! chi-square test of independence on privatized contingency tables
//! ([`chisq`]), plug-in inference for saturated logistic models with
//! categorical predictors ([`logistic`]), classical non-private baselines
//! ([`baselines`]), and a seeded Monte Carlo experiment driver that measures
//! coverage, level, power and running time ([`harness`]).
//!
//! All randomness flows through caller-supplied RNG handles; every function
//! is deterministic given a seed, and the experiment harness derives one
//! independent substream per replication so results do not depend on worker
//! scheduling.

pub mod baselines;
pub mod chisq;
pub mod error;
pub mod harness;
pub mod inference;
pub mod logistic;
pub mod mechanisms;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use inference::{ConfidenceInterval, Direction, Sided, TestResult};
pub use mechanisms::{DpRelease, NoiseFamily, PrivacyParams, ReleaseKind};
pub use sampler::{FimaConfig, FimaDraws, Method};
