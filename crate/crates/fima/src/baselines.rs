//! Classical non-private baselines: Wald z procedures, the exact binomial
//! test with Clopper-Pearson intervals, and the asymptotic Pearson
//! chi-square test. These run on raw data and serve as comparison methods
//! in the experiment harness.

use statrs::distribution::{Beta, Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

use crate::chisq::{marginal_counts, ContingencyTable};
use crate::error::{invalid, Error, Result};
use crate::inference::{ConfidenceInterval, Direction, Sided, TestResult};

fn check_level(level: f64) -> Result<()> {
    if !(0.0 < level && level < 1.0) {
        return Err(invalid(format!("level must be in (0,1), got {level}")));
    }
    Ok(())
}

fn check_x_n(x: u64, n: u64) -> Result<()> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    if x > n {
        return Err(invalid(format!("x = {x} exceeds n = {n}")));
    }
    Ok(())
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Wald interval `p_hat ± z * sqrt(p_hat (1 - p_hat) / n)`. Degenerates to a
/// point when `p_hat` is 0 or 1.
pub fn np_z_ci(x: u64, n: u64, level: f64) -> Result<ConfidenceInterval> {
    check_x_n(x, n)?;
    check_level(level)?;
    let p_hat = x as f64 / n as f64;
    let se = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
    let z = std_normal().inverse_cdf((1.0 + level) / 2.0);
    Ok(ConfidenceInterval {
        lower: p_hat - z * se,
        upper: p_hat + z * se,
        level,
        sided: Sided::TwoSided,
    })
}

/// One-sided z test for a proportion, with the Wald standard error.
/// `Direction::Less` tests `H0: theta >= gamma` vs `HA: theta < gamma`.
/// With a degenerate standard error the p-value collapses to 0, 1/2 or 1 by
/// the sign of `p_hat - gamma`.
pub fn np_z_test_one(
    x: u64,
    n: u64,
    gamma: f64,
    direction: Direction,
    alpha: f64,
) -> Result<TestResult> {
    check_x_n(x, n)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid(format!("gamma must be in [0,1], got {gamma}")));
    }
    let p_hat = x as f64 / n as f64;
    let se = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
    let diff = p_hat - gamma;
    let z = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    let p = match direction {
        Direction::Less => std_normal().cdf(z),
        Direction::Greater => std_normal().sf(z),
    };
    Ok(TestResult::from_p(p, alpha, Some(z), direction))
}

/// Clopper-Pearson interval from Beta quantiles; boundary counts pin the
/// corresponding endpoint at 0 or 1.
pub fn exact_binomial_ci(x: u64, n: u64, level: f64) -> Result<ConfidenceInterval> {
    check_x_n(x, n)?;
    check_level(level)?;
    let a = (1.0 - level) / 2.0;
    let xf = x as f64;
    let nf = n as f64;
    let lower = if x == 0 {
        0.0
    } else {
        Beta::new(xf, nf - xf + 1.0).unwrap().inverse_cdf(a)
    };
    let upper = if x == n {
        1.0
    } else {
        Beta::new(xf + 1.0, nf - xf).unwrap().inverse_cdf(1.0 - a)
    };
    Ok(ConfidenceInterval { lower, upper, level, sided: Sided::TwoSided })
}

/// Exact one-sided binomial test: `Direction::Less` gives
/// `p = P(Bin(n, gamma) <= x)`.
pub fn exact_binomial_test(
    x: u64,
    n: u64,
    gamma: f64,
    direction: Direction,
    alpha: f64,
) -> Result<TestResult> {
    check_x_n(x, n)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid(format!("gamma must be in [0,1], got {gamma}")));
    }
    let null = Binomial::new(gamma, n).map_err(|e| invalid(e.to_string()))?;
    let p = match direction {
        Direction::Less => null.cdf(x),
        Direction::Greater => 1.0 - if x == 0 { 0.0 } else { null.cdf(x - 1) },
    };
    Ok(TestResult::from_p(p, alpha, Some(x as f64), direction))
}

/// Pooled two-proportion z test. `Direction::Less` tests
/// `H0: theta1 - theta2 >= 0` vs `HA: theta1 - theta2 < 0`.
pub fn np_two_sample_z(
    x1: u64,
    n1: u64,
    x2: u64,
    n2: u64,
    direction: Direction,
    alpha: f64,
) -> Result<TestResult> {
    check_x_n(x1, n1)?;
    check_x_n(x2, n2)?;
    let p1 = x1 as f64 / n1 as f64;
    let p2 = x2 as f64 / n2 as f64;
    let pooled = (x1 + x2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let diff = p1 - p2;
    let z = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    let p = match direction {
        Direction::Less => std_normal().cdf(z),
        Direction::Greater => std_normal().sf(z),
    };
    Ok(TestResult::from_p(p, alpha, Some(z), direction))
}

/// Classical Pearson chi-square test of independence with the asymptotic
/// chi-square p-value on `(K1-1)(K2-1)` degrees of freedom.
///
/// Fails with [`Error::Infeasible`] when any expected count is zero (a
/// degenerate margin), which is where the private test keeps working.
pub fn np_chisq_test(table: &ContingencyTable, alpha: f64) -> Result<TestResult> {
    let total = table.total();
    if total <= 0.0 {
        return Err(invalid("table total must be positive"));
    }
    let (rows, cols) = marginal_counts(table);
    let mut stat = 0.0;
    for i in 0..table.rows() {
        for j in 0..table.cols() {
            let e = rows[i] * cols[j] / total;
            if e <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "expected count for cell ({i},{j}) is zero"
                )));
            }
            let o = table.cell(i, j);
            stat += (o - e) * (o - e) / e;
        }
    }
    let df = (table.rows() - 1) * (table.cols() - 1);
    if df == 0 {
        return Err(invalid("table must have at least two rows and columns"));
    }
    let p = ChiSquared::new(df as f64).unwrap().sf(stat);
    Ok(TestResult::from_p(p, alpha, Some(stat), Direction::Greater))
}
