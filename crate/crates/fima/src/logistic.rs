//! Plug-in inference for logistic regression with categorical predictors.
//!
//! In a saturated model the cell success probabilities determine the
//! coefficients through the logit link: the intercept is the logit of the
//! reference cell and each remaining coefficient is a logit contrast
//! against it. Applying those transforms to per-cell fiducial draws gives
//! coefficient draws whose percentiles provide confidence intervals.
//! Because draws are confined to `[delta, 1 - delta]`, every logit is
//! finite.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::inference::{percentile_ci_bounded, ConfidenceInterval, Sided};
use crate::mechanisms::PrivacyParams;
use crate::sampler::{fima_sample_from_count, FimaConfig, FimaDraws};

/// Supported saturated designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    /// `logit(theta) = b0 + b1 T` over cells (T=0, T=1).
    OneBinaryPredictor,
    /// `logit(theta) = b0 + b1 T1 + b2 T2` over cells
    /// (0,0), (1,0), (0,1), (1,1); the (1,1) cell is implied by additivity.
    TwoBinaryPredictors,
    /// K cells, one contrast per non-reference cell.
    SaturatedK,
}

/// Cell layout of a design and the reference cell the contrasts use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticDesign {
    kind: DesignKind,
    cell_labels: Vec<String>,
    reference_cell: usize,
}

impl LogisticDesign {
    pub fn one_binary() -> Self {
        Self {
            kind: DesignKind::OneBinaryPredictor,
            cell_labels: vec!["t0".into(), "t1".into()],
            reference_cell: 0,
        }
    }

    pub fn two_binary() -> Self {
        Self {
            kind: DesignKind::TwoBinaryPredictors,
            cell_labels: vec!["t00".into(), "t10".into(), "t01".into(), "t11".into()],
            reference_cell: 0,
        }
    }

    /// Saturated design over `k` cells; the last cell is the reference.
    pub fn saturated(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(invalid("saturated design needs at least 2 cells"));
        }
        Ok(Self {
            kind: DesignKind::SaturatedK,
            cell_labels: (1..=k).map(|i| format!("c{i}")).collect(),
            reference_cell: k - 1,
        })
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn cells(&self) -> usize {
        self.cell_labels.len()
    }

    pub fn cell_labels(&self) -> &[String] {
        &self.cell_labels
    }

    pub fn reference_cell(&self) -> usize {
        self.reference_cell
    }

    /// Coefficient names in output order (intercept first).
    pub fn coefficient_names(&self) -> Vec<String> {
        match self.kind {
            DesignKind::OneBinaryPredictor => vec!["beta0".into(), "beta1".into()],
            DesignKind::TwoBinaryPredictors => {
                vec!["beta0".into(), "beta1".into(), "beta2".into()]
            }
            DesignKind::SaturatedK => {
                let mut names = vec!["beta0".into()];
                names.extend((1..self.cells()).map(|i| format!("beta{i}")));
                names
            }
        }
    }

    /// Cell indices whose logit contrast against the reference defines each
    /// non-intercept coefficient.
    fn contrast_cells(&self) -> Vec<usize> {
        match self.kind {
            DesignKind::OneBinaryPredictor => vec![1],
            // beta1 from the (1,0) cell, beta2 from the (0,1) cell; the
            // (1,1) cell is determined by additivity and enters no contrast.
            DesignKind::TwoBinaryPredictors => vec![1, 2],
            DesignKind::SaturatedK => {
                (0..self.cells()).filter(|&i| i != self.reference_cell).collect()
            }
        }
    }

    /// True coefficient values implied by true cell probabilities.
    pub fn coefficients_from_probs(&self, cell_probs: &[f64]) -> Result<Vec<f64>> {
        if cell_probs.len() != self.cells() {
            return Err(invalid(format!(
                "expected {} cell probabilities, got {}",
                self.cells(),
                cell_probs.len()
            )));
        }
        let b0 = logit(cell_probs[self.reference_cell])?;
        let mut out = vec![b0];
        for &c in &self.contrast_cells() {
            out.push(logit(cell_probs[c])? - b0);
        }
        Ok(out)
    }
}

/// Log-odds; requires `p` strictly inside (0, 1).
pub fn logit(p: f64) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(invalid(format!("logit requires p in (0,1), got {p}")));
    }
    Ok((p / (1.0 - p)).ln())
}

/// Inverse log-odds.
pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Map per-cell fiducial draws to per-coefficient draw vectors.
///
/// `cell_draws` must be ordered like `design.cell_labels()` and share a
/// common draw count. Draw `h` of every coefficient is computed from draw
/// `h` of the cells, so downstream differences stay paired.
pub fn beta_draws(
    cell_draws: &[FimaDraws],
    design: &LogisticDesign,
) -> Result<Vec<(String, Vec<f64>)>> {
    if cell_draws.len() != design.cells() {
        return Err(invalid(format!(
            "expected draws for {} cells, got {}",
            design.cells(),
            cell_draws.len()
        )));
    }
    let h = cell_draws[0].len();
    if cell_draws.iter().any(|d| d.len() != h) {
        return Err(invalid("cell draw vectors must have equal length"));
    }

    let reference = cell_draws[design.reference_cell()].values();
    // Draws live in [delta, 1-delta], so logit never fires its domain error.
    let b0: Vec<f64> = reference.iter().map(|&p| logit(p).expect("draw in (0,1)")).collect();

    let names = design.coefficient_names();
    let mut out = Vec::with_capacity(names.len());
    out.push((names[0].clone(), b0.clone()));
    for (name, &cell) in names[1..].iter().zip(&design.contrast_cells()) {
        let contrast = cell_draws[cell]
            .values()
            .iter()
            .zip(&b0)
            .map(|(&p, &base)| logit(p).expect("draw in (0,1)") - base)
            .collect();
        out.push((name.clone(), contrast));
    }
    Ok(out)
}

/// One coefficient's interval and draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub name: String,
    pub ci: ConfidenceInterval,
    pub draws: Vec<f64>,
}

/// Full plug-in pipeline: per-cell fiducial sampling from privatized success
/// counts, coefficient transforms, and two-sided percentile intervals.
///
/// `cell_counts_dp[k]` is the privatized success count of cell `k` out of
/// `n_per_cell[k]` records; `params` is the per-count mechanism
/// (sensitivity 1), applied independently per cell with its full budget.
pub fn logistic_inference<R: Rng + ?Sized>(
    cell_counts_dp: &[f64],
    n_per_cell: &[u64],
    params: &PrivacyParams,
    design: &LogisticDesign,
    config: &FimaConfig,
    level: f64,
    rng: &mut R,
) -> Result<Vec<CoefficientEstimate>> {
    if cell_counts_dp.len() != design.cells() || n_per_cell.len() != design.cells() {
        return Err(invalid(format!(
            "design has {} cells; got {} counts and {} sizes",
            design.cells(),
            cell_counts_dp.len(),
            n_per_cell.len()
        )));
    }
    let cell_draws: Vec<FimaDraws> = cell_counts_dp
        .iter()
        .zip(n_per_cell)
        .map(|(&x_hat, &nc)| fima_sample_from_count(x_hat, nc, params, config, rng))
        .collect::<Result<_>>()?;
    let coefficients = beta_draws(&cell_draws, design)?;
    coefficients
        .into_iter()
        .map(|(name, draws)| {
            let ci = percentile_ci_bounded(
                &draws,
                level,
                Sided::TwoSided,
                (f64::NEG_INFINITY, f64::INFINITY),
            )?;
            Ok(CoefficientEstimate { name, ci, draws })
        })
        .collect()
}
