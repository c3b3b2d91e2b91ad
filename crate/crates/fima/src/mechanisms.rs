//! Additive differential-privacy mechanisms for proportions and counts.
//!
//! A release has the form `statistic + (sensitivity / epsilon) * Z` where `Z`
//! is a standard noise variable: Laplace(0,1) for pure epsilon-DP, N(0,1) for
//! Gaussian DP, or a two-sided geometric ("discrete Laplace") on the integer
//! count grid. Released values are *not* clamped: a privatized proportion may
//! leave [0,1] and a privatized count may be negative; downstream inference
//! accounts for that.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Noise family of the additive mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseFamily {
    /// Laplace noise; satisfies pure epsilon-DP under the L1 sensitivity.
    Laplace,
    /// Gaussian noise; satisfies Gaussian DP under the L2 sensitivity.
    Gaussian,
    /// Two-sided geometric noise on the integer count grid,
    /// `P(Z = z) ∝ exp(-|z| * epsilon / sensitivity)`.
    DiscreteLaplace,
}

impl std::fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Laplace => write!(f, "laplace"),
            Self::Gaussian => write!(f, "gaussian"),
            Self::DiscreteLaplace => write!(f, "dlaplace"),
        }
    }
}

/// Privacy budget, noise family and sensitivity of one additive mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    epsilon: f64,
    family: NoiseFamily,
    sensitivity: f64,
}

impl PrivacyParams {
    /// Validated constructor; `epsilon` and `sensitivity` must be positive
    /// and finite.
    pub fn new(family: NoiseFamily, epsilon: f64, sensitivity: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(invalid(format!(
                "sensitivity must be positive and finite, got {sensitivity}"
            )));
        }
        Ok(Self { epsilon, family, sensitivity })
    }

    /// Mechanism for a sample proportion over `n` records (sensitivity 1/n).
    pub fn proportion(family: NoiseFamily, epsilon: f64, n: u64) -> Result<Self> {
        Self::new(family, epsilon, sensitivity_proportion(n)?)
    }

    /// Mechanism for a single class count (sensitivity 1).
    pub fn count(family: NoiseFamily, epsilon: f64) -> Result<Self> {
        Self::new(family, epsilon, 1.0)
    }

    /// Mechanism for a full contingency table of counts: one record moving
    /// changes two cells, so the L1 sensitivity is 2.
    pub fn table(family: NoiseFamily, epsilon: f64) -> Result<Self> {
        Self::new(family, epsilon, 2.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    /// Noise scale `sensitivity / epsilon`.
    pub fn scale(&self) -> f64 {
        self.sensitivity / self.epsilon
    }
}

/// Whether a release carries proportions or counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReleaseKind {
    Proportion,
    Count,
}

/// A privatized statistic vector together with its provenance.
///
/// Values are stored exactly as released: proportions may lie outside [0,1]
/// and counts may be negative or exceed `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpRelease {
    values: Vec<f64>,
    n: u64,
    params: PrivacyParams,
    kind: ReleaseKind,
}

impl DpRelease {
    /// Wrap already-privatized proportions.
    pub fn proportion(values: Vec<f64>, n: u64, params: PrivacyParams) -> Result<Self> {
        Self::build(values, n, params, ReleaseKind::Proportion)
    }

    /// Wrap already-privatized counts.
    pub fn count(values: Vec<f64>, n: u64, params: PrivacyParams) -> Result<Self> {
        Self::build(values, n, params, ReleaseKind::Count)
    }

    fn build(values: Vec<f64>, n: u64, params: PrivacyParams, kind: ReleaseKind) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("release must contain at least one component"));
        }
        if n == 0 {
            return Err(invalid("data size n must be positive"));
        }
        Ok(Self { values, n, params, kind })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn params(&self) -> &PrivacyParams {
        &self.params
    }

    pub fn kind(&self) -> ReleaseKind {
        self.kind
    }
}

/// Sensitivity of a sample proportion over `n` records: exactly 1/n.
pub fn sensitivity_proportion(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    Ok(1.0 / n as f64)
}

fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    // Difference of two unit exponentials is Laplace(0,1); avoids the
    // log-of-zero edge of the inverse-CDF route.
    let e1: f64 = Exp1.sample(rng);
    let e2: f64 = Exp1.sample(rng);
    scale * (e1 - e2)
}

fn geometric<R: Rng + ?Sized>(t: f64, rng: &mut R) -> i64 {
    // P(G = g) = (1 - t) t^g on g >= 0.
    if t <= 0.0 {
        return 0;
    }
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    (u.ln() / t.ln()).floor() as i64
}

/// Two-sided geometric noise with `P(Z = z) ∝ exp(-|z| / b)` on the integers.
fn discrete_laplace<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    let t = (-1.0 / b).exp();
    (geometric(t, rng) - geometric(t, rng)) as f64
}

/// One noise draw in the units of the released statistic.
///
/// Laplace and Gaussian draws have scale `params.scale()`. The discrete
/// Laplace family lives on the integer count grid: the draw is an integer
/// `z` with `P(z) ∝ exp(-|z| * epsilon / sensitivity)`, which yields an
/// epsilon-DP count release at the stated sensitivity. For proportion-scale
/// releases use [`sample_proportion_noise`], which divides the integer draw
/// by `n`.
pub fn sample_noise<R: Rng + ?Sized>(params: &PrivacyParams, rng: &mut R) -> f64 {
    match params.family {
        NoiseFamily::Laplace => laplace(params.scale(), rng),
        NoiseFamily::Gaussian => {
            let z: f64 = StandardNormal.sample(rng);
            params.scale() * z
        }
        NoiseFamily::DiscreteLaplace => discrete_laplace(params.scale(), rng),
    }
}

/// Noise for a proportion-scale statistic over `n` records.
///
/// For the continuous families this is identical to [`sample_noise`]. For
/// the discrete Laplace family the integer draw is taken on the equivalent
/// count grid (count sensitivity `n * params.sensitivity()`) and divided by
/// `n`, so the released proportion still corresponds to an integer count
/// perturbation.
pub fn sample_proportion_noise<R: Rng + ?Sized>(
    params: &PrivacyParams,
    n: u64,
    rng: &mut R,
) -> f64 {
    match params.family {
        NoiseFamily::DiscreteLaplace => {
            let count_sensitivity = params.sensitivity * n as f64;
            let b = count_sensitivity / params.epsilon;
            discrete_laplace(b, rng) / n as f64
        }
        _ => sample_noise(params, rng),
    }
}

/// Privatize a vector of sample proportions component-wise (independent
/// noise per component). Inputs must lie in [0,1]; the release need not.
pub fn privatize_proportions<R: Rng + ?Sized>(
    props: &[f64],
    n: u64,
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<DpRelease> {
    for (k, &p) in props.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("proportion {k} = {p} outside [0,1]")));
        }
    }
    let values = props
        .iter()
        .map(|&p| p + sample_proportion_noise(params, n, rng))
        .collect();
    DpRelease::proportion(values, n, params.clone())
}

/// Privatize a vector of raw counts component-wise. The caller supplies the
/// sensitivity through `params` (1 for a single count, 2 for a full table).
pub fn privatize_counts<R: Rng + ?Sized>(
    counts: &[u64],
    n: u64,
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<DpRelease> {
    let values = counts
        .iter()
        .map(|&c| c as f64 + sample_noise(params, rng))
        .collect();
    DpRelease::count(values, n, params.clone())
}
