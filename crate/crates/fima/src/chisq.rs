//! Chi-square test of independence on a privatized contingency table.
//!
//! The observed statistic is computed directly on the noisy table. The null
//! distribution is simulated: fiducial draws of both marginal probability
//! vectors are formed from the noisy margins (subtracting fresh copies of
//! the summed per-cell noise), their outer product is renormalized to a
//! probability vector, a raw table of `n` multinomial counts is simulated
//! under independence, privatized with fresh table noise, and its statistic
//! recorded. The p-value is the fraction of null statistics at or above the
//! observed one.
//!
//! Noise scales: per-cell table noise has count sensitivity 2 (one record
//! moves two cells). The margin matching subtracts, for each margin entry,
//! the sum of `K_other` fresh per-cell count noises and divides by `n`,
//! which is the same distribution as summing proportion-scale noises of
//! scale `2/(n*epsilon)`.
//!
//! The validity theory assumes a continuous noise family; discrete Laplace
//! noise runs fine operationally but is not covered by it.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::inference::{Direction, TestResult};
use crate::mechanisms::{sample_noise, PrivacyParams};
use crate::sampler::FimaConfig;

/// Expected-count floor guarding the chi-square statistic against division
/// blow-ups on noisy tables; the statistic only feeds a rank comparison.
pub const EXPECTED_COUNT_FLOOR: f64 = 1e-8;

/// A K1 x K2 table of counts. Raw tables hold nonnegative integers summing
/// to `n`; privatized tables hold unconstrained reals (cells may be
/// negative), with `n` the public grand total of the raw table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    cells: Vec<f64>,
    rows: usize,
    cols: usize,
    n: u64,
}

impl ContingencyTable {
    /// Build from raw counts; `n` is their sum.
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        let cells: Vec<Vec<f64>> =
            counts.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect();
        let n: u64 = counts.iter().flatten().sum();
        if n == 0 {
            return Err(invalid("raw table must have a positive grand total"));
        }
        Self::from_cells(&cells, n)
    }

    /// Build from (possibly noisy) real-valued cells with a known raw total.
    pub fn from_cells(cells: &[Vec<f64>], n: u64) -> Result<Self> {
        let rows = cells.len();
        if rows == 0 {
            return Err(invalid("table must have at least one row"));
        }
        let cols = cells[0].len();
        if cols == 0 {
            return Err(invalid("table must have at least one column"));
        }
        if cells.iter().any(|r| r.len() != cols) {
            return Err(invalid("table rows must all have the same length"));
        }
        if n == 0 {
            return Err(invalid("data size n must be positive"));
        }
        Ok(Self { cells: cells.iter().flatten().copied().collect(), rows, cols, n })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn cell(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.cols + j]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Sum of all cells (for a raw table this equals `n`).
    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }
}

/// Row and column sums of the table, clamping nothing.
pub fn marginal_counts(table: &ContingencyTable) -> (Vec<f64>, Vec<f64>) {
    let mut rows = vec![0.0; table.rows];
    let mut cols = vec![0.0; table.cols];
    for i in 0..table.rows {
        for j in 0..table.cols {
            let v = table.cell(i, j);
            rows[i] += v;
            cols[j] += v;
        }
    }
    (rows, cols)
}

/// Privatize every cell of a raw table with independent count noise from
/// `params` (typically table sensitivity 2).
pub fn privatize_table<R: Rng + ?Sized>(
    table: &ContingencyTable,
    params: &PrivacyParams,
    rng: &mut R,
) -> ContingencyTable {
    let cells = table.cells.iter().map(|&c| c + sample_noise(params, rng)).collect();
    ContingencyTable { cells, rows: table.rows, cols: table.cols, n: table.n }
}

/// Fiducial draws for one margin vector of a privatized table.
///
/// Each entry of `margin_hat` is a sum of `k_other` privatized cells, so the
/// matching subtracts a fresh sum of `k_other` per-cell count noises before
/// dividing by `n`; the boundary/Beta draw step then produces a value in
/// `(0, 1)` per entry. Entries need not sum to one.
pub fn fima_margin_draw<R: Rng + ?Sized>(
    margin_hat: &[f64],
    n: u64,
    params: &PrivacyParams,
    k_other: usize,
    config: &FimaConfig,
    rng: &mut R,
) -> Vec<f64> {
    margin_hat
        .iter()
        .map(|&m| {
            let noise_sum: f64 = (0..k_other).map(|_| sample_noise(params, rng)).sum();
            let tilde = (m - noise_sum) / n as f64;
            crate::sampler::draw_beta_shortcut(tilde, n, config.delta, rng)
        })
        .collect()
}

/// Pearson chi-square statistic of a (possibly noisy) table, with expected
/// cells floored at [`EXPECTED_COUNT_FLOOR`].
pub fn chi_square_statistic(table: &ContingencyTable) -> Result<f64> {
    let total = table.total();
    if total <= 0.0 {
        return Err(invalid(format!("table total must be positive, got {total}")));
    }
    let (rows, cols) = marginal_counts(table);
    let mut stat = 0.0;
    for i in 0..table.rows {
        for j in 0..table.cols {
            let e = (rows[i] * cols[j] / total).max(EXPECTED_COUNT_FLOOR);
            let o = table.cell(i, j);
            stat += (o - e) * (o - e) / e;
        }
    }
    Ok(stat)
}

/// Null statistics simulated under independence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChisqNullDraws {
    stats: Vec<f64>,
}

impl ChisqNullDraws {
    pub fn stats(&self) -> &[f64] {
        &self.stats
    }
}

/// Multinomial sample via the conditional-binomial chain.
pub(crate) fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let k = probs.len();
    let mut out = vec![0u64; k];
    let mut remaining = n;
    let mut mass = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == k || mass <= p {
            out[i] = remaining;
            break;
        }
        let cond = (p / mass).clamp(0.0, 1.0);
        let x = Binomial::new(remaining, cond).expect("valid probability").sample(rng);
        out[i] = x;
        remaining -= x;
        mass -= p;
    }
    out
}

/// Independence test on a privatized table.
///
/// Returns the test outcome (statistic = observed chi-square) and the
/// simulated null statistics. `params` carries the table mechanism (count
/// sensitivity 2); `config.draws` is the number of null replicates `H`.
pub fn fima_chisq_test<R: Rng + ?Sized>(
    table_dp: &ContingencyTable,
    params: &PrivacyParams,
    alpha: f64,
    config: &FimaConfig,
    rng: &mut R,
) -> Result<(TestResult, ChisqNullDraws)> {
    config.validate()?;
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(invalid(format!("alpha must be in (0,1), got {alpha}")));
    }
    let n = table_dp.n();
    let observed = chi_square_statistic(table_dp)?;
    let (row_hat, col_hat) = marginal_counts(table_dp);
    let k1 = table_dp.rows();
    let k2 = table_dp.cols();

    let mut stats = Vec::with_capacity(config.draws);
    let mut probs = vec![0.0; k1 * k2];
    for _ in 0..config.draws {
        // Row margins sum K2 cells each; column margins sum K1 cells.
        let theta1 = fima_margin_draw(&row_hat, n, params, k2, config, rng);
        let theta2 = fima_margin_draw(&col_hat, n, params, k1, config, rng);

        // Outer product, renormalized onto the simplex. Draws are strictly
        // inside (0,1), so the grand sum is positive.
        let mut sum = 0.0;
        for i in 0..k1 {
            for j in 0..k2 {
                let v = theta1[i] * theta2[j];
                probs[i * k2 + j] = v;
                sum += v;
            }
        }
        for p in probs.iter_mut() {
            *p /= sum;
        }

        let counts = multinomial(n, &probs, rng);
        let noisy: Vec<f64> =
            counts.iter().map(|&c| c as f64 + sample_noise(params, rng)).collect();
        let sim = ContingencyTable { cells: noisy, rows: k1, cols: k2, n };
        // A simulated table whose noise wipes out the positive total has no
        // defined statistic; ranking it as infinite ties it above any
        // observed value, which errs on the conservative side.
        stats.push(chi_square_statistic(&sim).unwrap_or(f64::INFINITY));
    }

    let p_value =
        stats.iter().filter(|&&s| s >= observed).count() as f64 / config.draws as f64;
    let result = TestResult::from_p(p_value, alpha, Some(observed), Direction::Greater);
    Ok((result, ChisqNullDraws { stats }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::NoiseFamily;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn table(cells: &[[f64; 2]; 2], n: u64) -> ContingencyTable {
        let rows: Vec<Vec<f64>> = cells.iter().map(|r| r.to_vec()).collect();
        ContingencyTable::from_cells(&rows, n).unwrap()
    }

    #[test]
    fn margins_are_plain_sums() {
        let t = table(&[[10.0, 20.0], [30.0, 40.0]], 100);
        let (r, c) = marginal_counts(&t);
        assert_eq!(r, vec![30.0, 70.0]);
        assert_eq!(c, vec![40.0, 60.0]);

        let z = table(&[[0.0, 0.0], [0.0, 0.0]], 1);
        let (r, c) = marginal_counts(&z);
        assert_eq!(r, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);

        let neg = table(&[[-3.0, 2.0], [1.0, -4.5]], 10);
        let (r, c) = marginal_counts(&neg);
        assert_eq!(r, vec![-1.0, -3.5]);
        assert_eq!(c, vec![-2.0, -2.5]);
    }

    #[test]
    fn chi_square_matches_the_two_by_two_closed_form() {
        // n (ad - bc)^2 / (r1 r2 c1 c2)
        let t = table(&[[10.0, 20.0], [30.0, 40.0]], 100);
        let expected = 100.0 * (10.0 * 40.0 - 20.0 * 30.0_f64).powi(2)
            / (30.0 * 70.0 * 40.0 * 60.0);
        let got = chi_square_statistic(&t).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.79365).abs() < 1e-5);

        let indep = table(&[[25.0, 25.0], [25.0, 25.0]], 100);
        assert_eq!(chi_square_statistic(&indep).unwrap(), 0.0);
    }

    #[test]
    fn chi_square_is_transpose_invariant() {
        let t = table(&[[12.0, 7.0], [3.0, 28.0]], 50);
        let tr = table(&[[12.0, 3.0], [7.0, 28.0]], 50);
        assert!(
            (chi_square_statistic(&t).unwrap() - chi_square_statistic(&tr).unwrap()).abs()
                < 1e-12
        );
    }

    #[test]
    fn nonpositive_total_is_rejected() {
        let t = table(&[[-10.0, 2.0], [3.0, 4.0]], 10);
        assert!(chi_square_statistic(&t).is_err());
    }

    #[test]
    fn margin_draws_track_the_truth_without_noise() {
        let n = 1000u64;
        let params = PrivacyParams::table(NoiseFamily::Laplace, 1e9).unwrap();
        let config = FimaConfig::default();
        let mut rng = stream(30);
        let draws = fima_margin_draw(&[500.0, 500.0], n, &params, 2, &config, &mut rng);
        assert!((draws[0] - 0.5).abs() < 0.05);
        assert!((draws[1] - 0.5).abs() < 0.05);
    }

    #[test]
    fn single_cell_margin_reduces_to_the_count_recipe() {
        // k_other = 1 consumes the rng exactly like the single-count path,
        // so the draws agree bit for bit (n a power of two, epsilon 1).
        let n = 64u64;
        let params = PrivacyParams::table(NoiseFamily::Laplace, 1.0).unwrap();
        let config = FimaConfig::default();

        let a: Vec<f64> = (0..200)
            .map(|i| fima_margin_draw(&[40.0], n, &params, 1, &config, &mut stream(i))[0])
            .collect();
        let b: Vec<f64> = (0..200)
            .map(|i| {
                crate::sampler::fima_sample_from_count(
                    40.0,
                    n,
                    &params,
                    &FimaConfig::with_draws(1),
                    &mut stream(i),
                )
                .unwrap()
                .values()[0]
            })
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn margin_noise_sum_has_additive_variance() {
        // Sum of k_other independent Laplace noises at proportion scale
        // 2/(n eps): variance k_other * 2 * (2/(n eps))^2.
        let n = 100u64;
        let eps = 0.5;
        let k_other = 3;
        let params = PrivacyParams::table(NoiseFamily::Laplace, eps).unwrap();
        let mut rng = stream(31);
        let m = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..m {
            let s: f64 =
                (0..k_other).map(|_| sample_noise(&params, &mut rng)).sum::<f64>() / n as f64;
            sum += s;
            sum_sq += s * s;
        }
        let mean = sum / m as f64;
        let var = sum_sq / m as f64 - mean * mean;
        let expected = k_other as f64 * 2.0 * (2.0 / (n as f64 * eps)).powi(2);
        assert!((var - expected).abs() / expected < 0.05, "var {var} vs {expected}");
    }

    #[test]
    fn strongly_dependent_table_rejects_at_weak_noise() {
        // Diagonal-heavy table, epsilon = 10: observed statistic is huge.
        let raw = ContingencyTable::from_counts(&[vec![500, 50], vec![50, 400]]).unwrap();
        let params = PrivacyParams::table(NoiseFamily::Laplace, 10.0).unwrap();
        let mut rng = stream(32);
        let dp = privatize_table(&raw, &params, &mut rng);
        let config = FimaConfig::with_draws(2000);
        let (res, nulls) = fima_chisq_test(&dp, &params, 0.05, &config, &mut rng).unwrap();
        assert!(res.p_value < 0.01, "p = {}", res.p_value);
        assert!(res.reject);
        assert!(nulls.stats().iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn chisq_test_is_deterministic_per_seed() {
        let raw = ContingencyTable::from_counts(&[vec![30, 20], vec![25, 25]]).unwrap();
        let params = PrivacyParams::table(NoiseFamily::Laplace, 0.5).unwrap();
        let config = FimaConfig::with_draws(500);
        let run = |seed| {
            let mut rng = stream(seed);
            let dp = privatize_table(&raw, &params, &mut rng);
            fima_chisq_test(&dp, &params, 0.05, &config, &mut rng).unwrap()
        };
        let (r1, n1) = run(77);
        let (r2, n2) = run(77);
        assert_eq!(r1.p_value, r2.p_value);
        assert_eq!(n1.stats(), n2.stats());
    }

    #[test]
    fn multinomial_sums_to_n() {
        let mut rng = stream(33);
        for _ in 0..100 {
            let sample = multinomial(1000, &[0.1, 0.2, 0.3, 0.4], &mut rng);
            assert_eq!(sample.iter().sum::<u64>(), 1000);
            assert_eq!(sample.len(), 4);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn renormalized_outer_product_is_a_probability_vector(
            seed in 0u64..10_000,
            n in 50u64..5000,
            eps in 0.05f64..5.0,
        ) {
            let params = PrivacyParams::table(NoiseFamily::Laplace, eps).unwrap();
            let config = FimaConfig::default();
            let mut rng = stream(seed);
            let raw = ContingencyTable::from_counts(
                &[vec![n / 4, n / 4], vec![n / 4, n - 3 * (n / 4)]],
            ).unwrap();
            let dp = privatize_table(&raw, &params, &mut rng);
            let (row_hat, col_hat) = marginal_counts(&dp);
            let t1 = fima_margin_draw(&row_hat, n, &params, 2, &config, &mut rng);
            let t2 = fima_margin_draw(&col_hat, n, &params, 2, &config, &mut rng);
            let mut probs = Vec::new();
            let mut sum = 0.0;
            for &a in &t1 {
                for &b in &t2 {
                    probs.push(a * b);
                    sum += a * b;
                }
            }
            prop_assert!(sum > 0.0);
            let total: f64 = probs.iter().map(|p| p / sum).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for p in &probs {
                prop_assert!(p / sum > 0.0 && p / sum < 1.0);
            }
        }
    }
}
