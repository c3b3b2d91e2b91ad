//! Percentile confidence intervals and hypothesis tests over fiducial draws.
//!
//! Quantiles use the inf-definition: the `ceil(alpha * H)`-th order
//! statistic, not an interpolation. The p-value of a one-sided test is the
//! fraction of draws on the null side of the threshold, which makes tests
//! and one-sided percentile intervals two views of the same order
//! statistics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sampler::FimaDraws;

/// Sidedness of a confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sided {
    TwoSided,
    /// Lower confidence bound; upper end pinned at the parameter-space
    /// boundary.
    LowerOnly,
    /// Upper confidence bound; lower end pinned at the parameter-space
    /// boundary.
    UpperOnly,
}

/// A percentile confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub sided: Sided,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Alternative direction of a one-sided test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Alternative: parameter is below the threshold.
    Less,
    /// Alternative: parameter is above the threshold.
    Greater,
}

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    /// Observed test statistic, when the method has one.
    pub statistic: Option<f64>,
    pub direction: Direction,
}

impl TestResult {
    pub(crate) fn from_p(p_value: f64, alpha: f64, statistic: Option<f64>, direction: Direction) -> Self {
        Self { p_value, reject: p_value < alpha, alpha, statistic, direction }
    }
}

/// ceil with a tolerance for floating-point residue on exact lattice points,
/// so that e.g. `(1 - 0.95) / 2 * 1000` counts as 25, not 26.
fn robust_ceil(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

fn sorted(draws: &[f64]) -> Vec<f64> {
    let mut v = draws.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

fn quantile_of_sorted(sorted: &[f64], alpha: f64) -> f64 {
    let h = sorted.len();
    let k = robust_ceil(alpha * h as f64).clamp(1, h);
    sorted[k - 1]
}

/// Empirical inf-quantile: the `ceil(alpha * H)`-th order statistic.
pub fn percentile_quantile(draws: &[f64], alpha: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(invalid("draw vector is empty"));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(invalid(format!("alpha must be in (0,1), got {alpha}")));
    }
    Ok(quantile_of_sorted(&sorted(draws), alpha))
}

/// Percentile interval over a raw draw vector with explicit parameter-space
/// bounds for the unbounded side of one-sided intervals.
pub fn percentile_ci_bounded(
    draws: &[f64],
    level: f64,
    sided: Sided,
    space: (f64, f64),
) -> Result<ConfidenceInterval> {
    if draws.is_empty() {
        return Err(invalid("draw vector is empty"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(invalid(format!("level must be in (0,1), got {level}")));
    }
    let s = sorted(draws);
    let (lower, upper) = match sided {
        Sided::TwoSided => (
            quantile_of_sorted(&s, (1.0 - level) / 2.0),
            quantile_of_sorted(&s, (1.0 + level) / 2.0),
        ),
        Sided::LowerOnly => (quantile_of_sorted(&s, 1.0 - level), space.1),
        Sided::UpperOnly => (space.0, quantile_of_sorted(&s, level)),
    };
    Ok(ConfidenceInterval { lower, upper, level, sided })
}

/// Percentile interval for fiducial draws; one-sided intervals report the
/// boundary constants `delta` / `1 - delta` on the unbounded side.
pub fn percentile_ci(draws: &FimaDraws, level: f64, sided: Sided) -> Result<ConfidenceInterval> {
    let delta = draws.meta().delta;
    percentile_ci_bounded(draws.values(), level, sided, (delta, 1.0 - delta))
}

/// One-sided test of `H0: theta >= gamma` vs `HA: theta < gamma`
/// (`Direction::Less`), or the mirrored pair for `Direction::Greater`.
/// The p-value is the fraction of draws on the null side.
pub fn one_sample_test(
    draws: &[f64],
    gamma: f64,
    direction: Direction,
    alpha: f64,
) -> Result<TestResult> {
    if draws.is_empty() {
        return Err(invalid("draw vector is empty"));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(invalid(format!("alpha must be in (0,1), got {alpha}")));
    }
    let h = draws.len() as f64;
    let p = match direction {
        Direction::Less => draws.iter().filter(|&&v| v >= gamma).count() as f64 / h,
        Direction::Greater => draws.iter().filter(|&&v| v <= gamma).count() as f64 / h,
    };
    Ok(TestResult::from_p(p, alpha, None, direction))
}

/// Pairwise differences `lambda_h = theta1_h - theta2_h`.
pub fn two_sample_diff_draws(draws1: &[f64], draws2: &[f64]) -> Result<Vec<f64>> {
    if draws1.len() != draws2.len() {
        return Err(invalid(format!(
            "draw vectors must have equal length, got {} and {}",
            draws1.len(),
            draws2.len()
        )));
    }
    if draws1.is_empty() {
        return Err(invalid("draw vectors are empty"));
    }
    Ok(draws1.iter().zip(draws2).map(|(a, b)| a - b).collect())
}

/// One-sided two-sample test on the difference draws with threshold 0:
/// `Direction::Less` tests `H0: theta1 - theta2 >= 0` vs
/// `HA: theta1 - theta2 < 0`.
pub fn two_sample_test(
    draws1: &[f64],
    draws2: &[f64],
    direction: Direction,
    alpha: f64,
) -> Result<TestResult> {
    let lambda = two_sample_diff_draws(draws1, draws2)?;
    one_sample_test(&lambda, 0.0, direction, alpha)
}
