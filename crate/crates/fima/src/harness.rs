//! Seeded Monte Carlo experiment driver.
//!
//! Runs coverage, level, power and running-time studies over parameter
//! grids, pitting the fiducial matching pipeline against non-private
//! baselines, and emits one row per (method, grid point, metric) as CSV or
//! JSON. Raw simulated data never leaves a replication: only the DP release
//! reaches the private method, while baselines consume the raw data, which
//! mirrors the intended threat model.
//!
//! Each replication draws its RNG substream from
//! `(seed, task, grid index, replication index)`, so results are identical
//! whether replications run sequentially or on a thread pool.

use std::io::{self, Write};
use std::time::Instant;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::chisq::{self, ContingencyTable};
use crate::error::{invalid, Result};
use crate::inference::{one_sample_test, percentile_ci, two_sample_test, Direction, Sided};
use crate::logistic::{logistic_inference, DesignKind, LogisticDesign};
use crate::mechanisms::{
    privatize_counts, sample_proportion_noise, DpRelease, NoiseFamily, PrivacyParams,
};
use crate::rng::substream;
use crate::sampler::{fima_sample, FimaConfig, Method};

/// Experiment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    OneSampleCi,
    OneSampleTest,
    TwoSampleTest,
    ChisqTest,
    LogisticCi,
    RunningTime,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::OneSampleCi => "one-sample-ci",
            Task::OneSampleTest => "one-sample-test",
            Task::TwoSampleTest => "two-sample-test",
            Task::ChisqTest => "chisq-test",
            Task::LogisticCi => "logistic-ci",
            Task::RunningTime => "running-time",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Task::OneSampleCi => 1,
            Task::OneSampleTest => 2,
            Task::TwoSampleTest => 3,
            Task::ChisqTest => 4,
            Task::LogisticCi => 5,
            Task::RunningTime => 6,
        }
    }
}

/// Non-private comparison methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMethod {
    /// Wald z interval / z test (pooled for two samples).
    NpZ,
    /// Exact binomial test and Clopper-Pearson interval.
    ExactBinomial,
    /// Asymptotic Pearson chi-square test.
    NpChisq,
}

impl BaselineMethod {
    fn name(&self) -> &'static str {
        match self {
            BaselineMethod::NpZ | BaselineMethod::NpChisq => "np",
            BaselineMethod::ExactBinomial => "exact",
        }
    }

    fn applies_to(&self, task: Task) -> bool {
        match self {
            BaselineMethod::NpZ => matches!(
                task,
                Task::OneSampleCi | Task::OneSampleTest | Task::TwoSampleTest | Task::RunningTime
            ),
            BaselineMethod::ExactBinomial => {
                matches!(task, Task::OneSampleCi | Task::OneSampleTest | Task::RunningTime)
            }
            BaselineMethod::NpChisq => matches!(task, Task::ChisqTest),
        }
    }
}

/// Full description of one experiment.
///
/// Grid semantics are task-specific: `theta_values` is the true-parameter
/// grid (first-population proportion for two-sample tasks), `gamma_values`
/// the test threshold grid (second-population proportion for two-sample
/// tasks; empty means "gamma = theta", a level study). Chi-square and
/// logistic tasks grid over `n_values` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub task: Task,
    pub n_values: Vec<u64>,
    pub theta_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub epsilon: f64,
    pub family: NoiseFamily,
    /// Replications B per grid point.
    pub replications: usize,
    /// Fiducial draws H per inference call.
    pub draws: usize,
    pub alpha: f64,
    pub seed: u64,
    pub baselines: Vec<BaselineMethod>,
    pub method: Method,
    pub delta: f64,
    /// Chi-square: true cell probabilities, row-major `table_dims`.
    pub cell_probs: Vec<f64>,
    pub table_dims: (usize, usize),
    /// Logistic: design and true per-cell success probabilities.
    pub logistic_design: Option<DesignKind>,
    pub logistic_cell_probs: Vec<f64>,
}

impl ExperimentSpec {
    /// Desk-scale defaults: fast enough to run as a test while keeping the
    /// Monte Carlo error small enough to read the result.
    pub fn desk(task: Task) -> Self {
        let base = Self {
            task,
            n_values: vec![30],
            theta_values: vec![],
            gamma_values: vec![],
            epsilon: 1.0,
            family: NoiseFamily::Laplace,
            replications: 2000,
            draws: 1000,
            alpha: 0.05,
            seed: 1234,
            baselines: vec![BaselineMethod::NpZ],
            method: Method::BetaShortcut,
            delta: crate::sampler::DEFAULT_DELTA,
            cell_probs: vec![],
            table_dims: (2, 2),
            logistic_design: None,
            logistic_cell_probs: vec![],
        };
        match task {
            Task::OneSampleCi => Self { theta_values: vec![0.2, 0.5, 0.8], ..base },
            Task::OneSampleTest => Self { theta_values: vec![0.3, 0.5, 0.7], ..base },
            Task::TwoSampleTest => Self {
                theta_values: vec![0.2],
                gamma_values: vec![0.4, 0.6, 0.8],
                ..base
            },
            Task::ChisqTest => Self {
                n_values: vec![1000],
                epsilon: 0.1,
                replications: 500,
                draws: 2000,
                baselines: vec![BaselineMethod::NpChisq],
                cell_probs: vec![0.25; 4],
                ..base
            },
            Task::LogisticCi => Self {
                n_values: vec![500],
                replications: 2000,
                draws: 2000,
                baselines: vec![],
                logistic_design: Some(DesignKind::OneBinaryPredictor),
                logistic_cell_probs: vec![0.35, 0.93],
                ..base
            },
            Task::RunningTime => Self {
                n_values: vec![8, 16, 32, 64, 128, 256, 512],
                theta_values: vec![0.5],
                replications: 1000,
                baselines: vec![BaselineMethod::NpZ, BaselineMethod::ExactBinomial],
                ..base
            },
        }
    }

    /// Full-scale settings (B = 10^4; H = 10^4 for the chi-square and
    /// logistic tasks). Slow; desk scale is the default everywhere else.
    pub fn paper(task: Task) -> Self {
        let mut spec = Self::desk(task);
        spec.replications = 10_000;
        match task {
            Task::OneSampleCi => {
                // 0.1, 0.11, 0.12, then steps of 0.005 up to 0.985.
                let mut grid = vec![0.1, 0.11];
                let mut t: f64 = 0.12;
                while t < 0.9851 {
                    grid.push((t * 1000.0).round() / 1000.0);
                    t += 0.005;
                }
                spec.theta_values = grid;
            }
            Task::OneSampleTest => {
                spec.theta_values = (1..=9).map(|i| i as f64 / 10.0).collect();
            }
            Task::ChisqTest | Task::LogisticCi => spec.draws = 10_000,
            _ => {}
        }
        spec
    }

    fn fima_config(&self) -> FimaConfig {
        FimaConfig {
            draws: self.draws,
            delta: self.delta,
            method: self.method,
            d_distribution: crate::sampler::DDistribution::Jeffreys,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(invalid("replications B must be at least 1"));
        }
        if self.n_values.is_empty() {
            return Err(invalid("n grid is empty"));
        }
        self.fima_config().validate()?;
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        match self.task {
            Task::OneSampleCi | Task::OneSampleTest | Task::TwoSampleTest | Task::RunningTime => {
                if self.theta_values.is_empty() {
                    return Err(invalid("theta grid is empty"));
                }
                if self.task == Task::TwoSampleTest && self.gamma_values.is_empty() {
                    return Err(invalid("two-sample task needs a second-proportion grid"));
                }
            }
            Task::ChisqTest => {
                let k = self.table_dims.0 * self.table_dims.1;
                if self.table_dims.0 < 2 || self.table_dims.1 < 2 {
                    return Err(invalid("chi-square table needs at least 2x2 cells"));
                }
                if self.cell_probs.len() != k {
                    return Err(invalid(format!(
                        "expected {k} cell probabilities, got {}",
                        self.cell_probs.len()
                    )));
                }
                let sum: f64 = self.cell_probs.iter().sum();
                if self.cell_probs.iter().any(|&p| p <= 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(invalid("cell probabilities must be positive and sum to 1"));
                }
            }
            Task::LogisticCi => {
                let design = self.build_design()?;
                if self.logistic_cell_probs.len() != design.cells() {
                    return Err(invalid(format!(
                        "expected {} cell probabilities, got {}",
                        design.cells(),
                        self.logistic_cell_probs.len()
                    )));
                }
                if self.logistic_cell_probs.iter().any(|&p| !(0.0 < p && p < 1.0)) {
                    return Err(invalid("cell probabilities must be strictly inside (0,1)"));
                }
            }
        }
        Ok(())
    }

    fn build_design(&self) -> Result<LogisticDesign> {
        match self.logistic_design {
            Some(DesignKind::OneBinaryPredictor) => Ok(LogisticDesign::one_binary()),
            Some(DesignKind::TwoBinaryPredictors) => Ok(LogisticDesign::two_binary()),
            Some(DesignKind::SaturatedK) => {
                LogisticDesign::saturated(self.logistic_cell_probs.len())
            }
            None => Err(invalid("logistic task needs a design")),
        }
    }
}

/// One output cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub task: String,
    pub n: u64,
    pub epsilon: f64,
    pub theta: Option<f64>,
    pub gamma: Option<f64>,
    pub metric: String,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    /// Mean wall time of one method call, milliseconds.
    pub ms: f64,
}

/// All rows of one experiment, with the spec echoed for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    /// CSV with the fixed header
    /// `method,task,n,epsilon,theta,gamma,metric,value,stderr,ms`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "method,task,n,epsilon,theta,gamma,metric,value,stderr,ms")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.task,
                r.n,
                r.epsilon,
                r.theta.map(|v| v.to_string()).unwrap_or_default(),
                r.gamma.map(|v| v.to_string()).unwrap_or_default(),
                r.metric,
                r.value.map(|v| v.to_string()).unwrap_or_default(),
                r.stderr.map(|v| v.to_string()).unwrap_or_default(),
                r.ms,
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv rows are ascii")
    }

    /// Rows with wall times zeroed; the statistical content that must be
    /// identical across reruns of the same spec.
    pub fn statistical_rows(&self) -> Vec<ResultRow> {
        self.rows
            .iter()
            .map(|r| ResultRow { ms: 0.0, ..r.clone() })
            .collect()
    }
}

#[derive(Clone, Copy)]
struct GridPoint {
    n: u64,
    theta: Option<f64>,
    gamma: Option<f64>,
}

fn grid(spec: &ExperimentSpec) -> Vec<GridPoint> {
    let mut out = Vec::new();
    match spec.task {
        Task::OneSampleCi | Task::RunningTime => {
            for &n in &spec.n_values {
                for &t in &spec.theta_values {
                    out.push(GridPoint { n, theta: Some(t), gamma: None });
                }
            }
        }
        Task::OneSampleTest => {
            for &n in &spec.n_values {
                for &t in &spec.theta_values {
                    if spec.gamma_values.is_empty() {
                        out.push(GridPoint { n, theta: Some(t), gamma: Some(t) });
                    } else {
                        for &g in &spec.gamma_values {
                            out.push(GridPoint { n, theta: Some(t), gamma: Some(g) });
                        }
                    }
                }
            }
        }
        Task::TwoSampleTest => {
            for &n in &spec.n_values {
                for &t in &spec.theta_values {
                    for &g in &spec.gamma_values {
                        out.push(GridPoint { n, theta: Some(t), gamma: Some(g) });
                    }
                }
            }
        }
        Task::ChisqTest | Task::LogisticCi => {
            for &n in &spec.n_values {
                out.push(GridPoint { n, theta: None, gamma: None });
            }
        }
    }
    out
}

/// Per-replication outcome of one method: one optional value per metric
/// (`None` marks a method failure on this replication) plus the wall time
/// of the method call in nanoseconds.
struct MethodRep {
    values: Vec<Option<f64>>,
    ns: f64,
}

fn time_call<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t0 = Instant::now();
    let out = f();
    (out, t0.elapsed().as_nanos() as f64)
}

#[cfg(feature = "parallel")]
fn run_reps<T: Send>(b: usize, f: impl Fn(usize) -> T + Send + Sync) -> Vec<T> {
    use rayon::prelude::*;
    (0..b).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_reps<T>(b: usize, f: impl Fn(usize) -> T + Send + Sync) -> Vec<T> {
    (0..b).map(f).collect()
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    Binomial::new(n, p).expect("valid binomial parameters").sample(rng)
}

fn is_rate_metric(name: &str) -> bool {
    name.starts_with("coverage") || name == "level" || name == "power"
}

/// Reduce per-replication values into (mean, stderr). Rates get the
/// binomial standard error sqrt(v(1-v)/B); everything else the sample one.
fn reduce(metric: &str, values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    if ok.is_empty() {
        return (None, None);
    }
    let m = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / m;
    let stderr = if is_rate_metric(metric) {
        (mean * (1.0 - mean) / m).sqrt()
    } else {
        let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        (var / m).sqrt()
    };
    (Some(mean), Some(stderr))
}

/// Run the experiment described by `spec`. Deterministic given `spec.seed`
/// up to wall-clock times.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let points = grid(spec);
    let config = spec.fima_config();
    let methods: Vec<&'static str> = std::iter::once("fima")
        .chain(
            spec.baselines
                .iter()
                .filter(|b| b.applies_to(spec.task))
                .map(|b| b.name()),
        )
        .collect();

    let mut rows = Vec::new();
    for (gi, point) in points.iter().enumerate() {
        let metrics = metric_names(spec, point);
        let reps: Vec<Vec<MethodRep>> = if spec.task == Task::RunningTime {
            // Timing runs stay sequential so wall times are not polluted by
            // thread contention; statistical tasks parallelize freely.
            (0..spec.replications)
                .map(|b| run_one(spec, &config, point, gi as u64, b as u64))
                .collect()
        } else {
            run_reps(spec.replications, |b| {
                run_one(spec, &config, point, gi as u64, b as u64)
            })
        };

        for (mi, method) in methods.iter().enumerate() {
            let mean_ms =
                reps.iter().map(|r| r[mi].ns).sum::<f64>() / reps.len() as f64 / 1e6;
            for (ki, metric) in metrics.iter().enumerate() {
                let values: Vec<Option<f64>> = reps.iter().map(|r| r[mi].values[ki]).collect();
                let (value, stderr) = reduce(metric, &values);
                rows.push(ResultRow {
                    method: method.to_string(),
                    task: spec.task.name().to_string(),
                    n: point.n,
                    epsilon: spec.epsilon,
                    theta: point.theta,
                    gamma: point.gamma,
                    metric: metric.clone(),
                    value,
                    stderr,
                    ms: mean_ms,
                });
            }
        }
    }
    Ok(ExperimentResult { spec: spec.clone(), rows })
}

fn metric_names(spec: &ExperimentSpec, point: &GridPoint) -> Vec<String> {
    match spec.task {
        Task::OneSampleCi => vec!["coverage".into(), "length".into()],
        Task::OneSampleTest => {
            if point.theta == point.gamma {
                vec!["level".into()]
            } else {
                vec!["power".into()]
            }
        }
        Task::TwoSampleTest => {
            if point.theta == point.gamma {
                vec!["level".into()]
            } else {
                vec!["power".into()]
            }
        }
        Task::ChisqTest => vec![if is_null_table(&spec.cell_probs, spec.table_dims) {
            "level".into()
        } else {
            "power".into()
        }],
        Task::LogisticCi => {
            let design = spec.build_design().expect("validated");
            let mut out = Vec::new();
            for name in design.coefficient_names() {
                out.push(format!("coverage_{name}"));
                out.push(format!("length_{name}"));
            }
            out
        }
        Task::RunningTime => vec!["ms".into()],
    }
}

/// A cell-probability matrix is a null (independence) model when it equals
/// the outer product of its margins.
fn is_null_table(probs: &[f64], dims: (usize, usize)) -> bool {
    let (k1, k2) = dims;
    let mut rows = vec![0.0; k1];
    let mut cols = vec![0.0; k2];
    for i in 0..k1 {
        for j in 0..k2 {
            rows[i] += probs[i * k2 + j];
            cols[j] += probs[i * k2 + j];
        }
    }
    for i in 0..k1 {
        for j in 0..k2 {
            if (probs[i * k2 + j] - rows[i] * cols[j]).abs() > 1e-9 {
                return false;
            }
        }
    }
    true
}

fn run_one(
    spec: &ExperimentSpec,
    config: &FimaConfig,
    point: &GridPoint,
    gi: u64,
    b: u64,
) -> Vec<MethodRep> {
    let mut rng = substream(spec.seed, &[spec.task.tag(), gi, b]);
    match spec.task {
        Task::OneSampleCi => rep_one_sample_ci(spec, config, point, &mut rng),
        Task::OneSampleTest => rep_one_sample_test(spec, config, point, &mut rng),
        Task::TwoSampleTest => rep_two_sample_test(spec, config, point, &mut rng),
        Task::ChisqTest => rep_chisq(spec, config, point, &mut rng),
        Task::LogisticCi => rep_logistic(spec, config, point, &mut rng),
        Task::RunningTime => rep_running_time(spec, config, point, &mut rng),
    }
}

fn fima_proportion_release<R: Rng + ?Sized>(
    x: u64,
    n: u64,
    spec: &ExperimentSpec,
    rng: &mut R,
) -> DpRelease {
    let params = PrivacyParams::proportion(spec.family, spec.epsilon, n).expect("validated");
    let pi_hat = x as f64 / n as f64 + sample_proportion_noise(&params, n, rng);
    DpRelease::proportion(vec![pi_hat], n, params).expect("non-empty release")
}

fn rep_one_sample_ci(
    spec: &ExperimentSpec,
    config: &FimaConfig,
    point: &GridPoint,
    rng: &mut impl Rng,
) -> Vec<MethodRep> {
    let n = point.n;
    let theta = point.theta.expect("one-sample grid");
    let level = 1.0 - spec.alpha;
    let x = binomial(n, theta, rng);
    let release = fima_proportion_release(x, n, spec, rng);

    let mut out = Vec::new();
    let (ci, ns) = time_call(|| {
        let draws = &fima_sample(&release, config, rng).expect("valid config")[0];
        percentile_ci(draws, level, Sided::TwoSided).expect("non-empty draws")
    });
    out.push(MethodRep {
        values: vec![
            Some(ci.contains(theta) as u8 as f64),
            Some(ci.length()),
        ],
        ns,
    });

    for baseline in spec.baselines.iter().filter(|b| b.applies_to(spec.task)) {
        let (ci, ns) = match baseline {
            BaselineMethod::NpZ => time_call(|| baselines::np_z_ci(x, n, level)),
            BaselineMethod::ExactBinomial => {
                time_call(|| baselines::exact_binomial_ci(x, n, level))
            }
            BaselineMethod::NpChisq => unreachable!("filtered by applies_to"),
        };
        let values = match ci {
            Ok(ci) => vec![Some(ci.contains(theta) as u8 as f64), Some(ci.length())],
            Err(_) => vec![None, None],
        };
        out.push(MethodRep { values, ns });
    }
    out
}

fn rep_one_sample_test(
    spec: &ExperimentSpec,
    config: &FimaConfig,
    point: &GridPoint,
    rng: &mut impl Rng,
) -> Vec<MethodRep> {
    let n = point.n;
    let theta = point.theta.expect("one-sample grid");
    let gamma = point.gamma.expect("test grid");
    let x = binomial(n, theta, rng);
    let release = fima_proportion_release(x, n, spec, rng);

    let mut out = Vec::new();
    let (res, ns) = time_call(|| {
        let draws = &fima_sample(&release, config, rng).expect("valid config")[0];
        one_sample_test(draws.values(), gamma, Direction::Less, spec.alpha)
            .expect("non-empty draws")
    });
    out.push(MethodRep { values: vec![Some(res.reject as u8 as f64)], ns });

    for baseline in spec.baselines.iter().filter(|b| b.applies_to(spec.task)) {
        let (res, ns) = match baseline {
            BaselineMethod::NpZ => {
                time_call(|| baselines::np_z_test_one(x, n, gamma, Direction::Less, spec.alpha))
            }
            BaselineMethod::ExactBinomial => time_call(|| {
                baselines::exact_binomial_test(x, n, gamma, Direction::Less, spec.alpha)
            }),
            BaselineMethod::NpChisq => unreachable!("filtered by applies_to"),
        };
        out.push(MethodRep {
            values: vec![res.ok().map(|r| r.reject as u8 as f64)],
            ns,
        });
    }
    out
}

fn rep_two_sample_test(
    spec: &ExperimentSpec,
    config: &FimaConfig,
    point: &GridPoint,
    rng: &mut impl Rng,
) -> Vec<MethodRep> {
    let n = point.n;
    let theta1 = point.theta.expect("two-sample grid");
    let theta2 = point.gamma.expect("two-sample grid");
    let x1 = binomial(n, theta1, rng);
    let x2 = binomial(n, theta2, rng);
    // Each sample is its own database, so each release spends the full
    // epsilon; the CLI exposes a split for two queries on one database.
    let release1 = fima_proportion_release(x1, n, spec, rng);
    let release2 = fima_proportion_release(x2, n, spec, rng);

    let mut out = Vec::new();
    let (res, ns) = time_call(|| {
        let d1 = &fima_sample(&release1, config, rng).expect("valid config")[0];
        let d2 = &fima_sample(&release2, config, rng).expect("valid config")[0];
        two_sample_test(d1.values(), d2.values(), Direction::Less, spec.alpha)
            .expect("equal draw counts")
    });
    out.push(MethodRep { values: vec![Some(res.reject as u8 as f64)], ns });

    for baseline in spec.baselines.iter().filter(|b| b.applies_to(spec.task)) {
        let (res, ns) = match baseline {
            BaselineMethod::NpZ => time_call(|| {
                baselines::np_two_sample_z(x1, n, x2, n, Direction::Less, spec.alpha)
            }),
            _ => unreachable!("filtered by applies_to"),
        };
        out.push(MethodRep {
            values: vec![res.ok().map(|r| r.reject as u8 as f64)],
            ns,
        });
    }
    out
}

fn rep_chisq(
    spec: &ExperimentSpec,
    config: &FimaConfig,
    point: &GridPoint,
    rng: &mut impl Rng,
) -> Vec<MethodRep> {
    let n = point.n;
    let (k1, k2) = spec.table_dims;
    let counts = chisq::multinomial(n, &spec.cell_probs, rng);
    let raw_rows: Vec<Vec<u64>> =
        (0..k1).map(|i| counts[i * k2..(i + 1) * k2].to_vec()).collect();
    let raw = ContingencyTable::from_counts(&raw_rows).expect("positive total");
    let params = PrivacyParams::table(spec.family, spec.epsilon).expect("validated");
    let table_dp = chisq::privatize_table(&raw, &params, rng);

    let mut out = Vec::new();
    // The private test can fail too (a heavily noised table may lose a
    // positive total); that becomes an NA value like any other method error.
    let (res, ns) = time_call(|| chisq::fima_chisq_test(&table_dp, &params, spec.alpha, config, rng));
    out.push(MethodRep {
        values: vec![res.ok().map(|(r, _)| r.reject as u8 as f64)],
        ns,
    });

    for baseline in spec.baselines.iter().filter(|b| b.applies_to(spec.task)) {
        let (res, ns) = match baseline {
            BaselineMethod::NpChisq => time_call(|| baselines::np_chisq_test(&raw, spec.alpha)),
            _ => unreachable!("filtered by applies_to"),
        };
        out.push(MethodRep {
            values: vec![res.ok().map(|r| r.reject as u8 as f64)],
            ns,
        });
    }
    out
}

fn rep_logistic(
    spec: &ExperimentSpec,
    config: &FimaConfig,
    point: &GridPoint,
    rng: &mut impl Rng,
) -> Vec<MethodRep> {
    let design = spec.build_design().expect("validated");
    let cells = design.cells() as u64;
    let truth = design
        .coefficients_from_probs(&spec.logistic_cell_probs)
        .expect("probs validated");
    let level = 1.0 - spec.alpha;
    // Total n split equally across cells; any remainder goes to the first
    // cells.
    let base = point.n / cells;
    let rem = point.n % cells;
    let n_per_cell: Vec<u64> =
        (0..cells).map(|c| base + u64::from(c < rem)).collect();
    let params = PrivacyParams::count(spec.family, spec.epsilon).expect("validated");

    let counts_dp: Vec<f64> = spec
        .logistic_cell_probs
        .iter()
        .zip(&n_per_cell)
        .map(|(&p, &nc)| {
            let x = binomial(nc, p, rng);
            privatize_counts(&[x], nc, &params, rng).expect("one count").values()[0]
        })
        .collect();

    let (estimates, ns) = time_call(|| {
        logistic_inference(&counts_dp, &n_per_cell, &params, &design, config, level, rng)
            .expect("validated design")
    });
    let mut values = Vec::with_capacity(2 * truth.len());
    for (est, t) in estimates.iter().zip(&truth) {
        values.push(Some(est.ci.contains(*t) as u8 as f64));
        values.push(Some(est.ci.length()));
    }
    vec![MethodRep { values, ns }]
}

fn rep_running_time(
    spec: &ExperimentSpec,
    config: &FimaConfig,
    point: &GridPoint,
    rng: &mut impl Rng,
) -> Vec<MethodRep> {
    let n = point.n;
    let theta = point.theta.expect("running-time grid");
    let level = 1.0 - spec.alpha;
    let x = binomial(n, theta, rng);
    let release = fima_proportion_release(x, n, spec, rng);

    let mut out = Vec::new();
    let (_, ns) = time_call(|| {
        let draws = &fima_sample(&release, config, rng).expect("valid config")[0];
        percentile_ci(draws, level, Sided::TwoSided).expect("non-empty draws")
    });
    out.push(MethodRep { values: vec![Some(ns / 1e6)], ns });

    for baseline in spec.baselines.iter().filter(|b| b.applies_to(spec.task)) {
        let (_, ns) = match baseline {
            BaselineMethod::NpZ => time_call(|| baselines::np_z_ci(x, n, level)),
            BaselineMethod::ExactBinomial => {
                time_call(|| baselines::exact_binomial_ci(x, n, level))
            }
            BaselineMethod::NpChisq => unreachable!("filtered by applies_to"),
        };
        out.push(MethodRep { values: vec![Some(ns / 1e6)], ns });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(task: Task) -> ExperimentSpec {
        let mut spec = ExperimentSpec::desk(task);
        spec.replications = 20;
        spec.draws = 100;
        spec
    }

    #[test]
    fn grid_has_one_row_per_method_metric_cell() {
        let spec = tiny(Task::OneSampleCi);
        let result = run_experiment(&spec).unwrap();
        // 3 grid points x 2 methods x 2 metrics
        assert_eq!(result.rows.len(), 12);
        let fima_rows = result.rows.iter().filter(|r| r.method == "fima").count();
        assert_eq!(fima_rows, 6);
        for r in &result.rows {
            assert!(r.value.is_some());
            assert!(r.stderr.is_some());
        }
    }

    #[test]
    fn same_seed_reproduces_statistical_rows() {
        let spec = tiny(Task::TwoSampleTest);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.statistical_rows(), b.statistical_rows());
    }

    #[test]
    fn different_seeds_differ() {
        let spec = tiny(Task::OneSampleCi);
        let mut spec2 = spec.clone();
        spec2.seed += 1;
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec2).unwrap();
        assert_ne!(a.statistical_rows(), b.statistical_rows());
    }

    #[test]
    fn csv_has_the_fixed_header_and_row_count() {
        let spec = tiny(Task::OneSampleTest);
        let result = run_experiment(&spec).unwrap();
        let csv = result.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,task,n,epsilon,theta,gamma,metric,value,stderr,ms"
        );
        assert_eq!(lines.count(), result.rows.len());
    }

    #[test]
    fn json_round_trips() {
        let spec = tiny(Task::OneSampleCi);
        let result = run_experiment(&spec).unwrap();
        let json = serde_json::to_string(&result).unwrap();
        let back: ExperimentResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, result);
    }

    #[test]
    fn level_metric_is_used_when_gamma_equals_theta() {
        let spec = tiny(Task::OneSampleTest);
        let result = run_experiment(&spec).unwrap();
        assert!(result.rows.iter().all(|r| r.metric == "level"));

        let mut power = tiny(Task::OneSampleTest);
        power.theta_values = vec![0.2];
        power.gamma_values = vec![0.5];
        let result = run_experiment(&power).unwrap();
        assert!(result.rows.iter().all(|r| r.metric == "power"));
    }

    #[test]
    fn chisq_alternative_is_labelled_power() {
        let mut spec = tiny(Task::ChisqTest);
        spec.replications = 5;
        spec.draws = 50;
        assert!(is_null_table(&spec.cell_probs, spec.table_dims));
        spec.cell_probs = vec![0.26, 0.24, 0.24, 0.26];
        assert!(!is_null_table(&spec.cell_probs, spec.table_dims));
        let result = run_experiment(&spec).unwrap();
        assert!(result.rows.iter().all(|r| r.metric == "power"));
    }

    #[test]
    fn logistic_rows_cover_every_coefficient() {
        let mut spec = tiny(Task::LogisticCi);
        spec.replications = 10;
        let result = run_experiment(&spec).unwrap();
        let metrics: Vec<&str> = result.rows.iter().map(|r| r.metric.as_str()).collect();
        assert_eq!(
            metrics,
            vec!["coverage_beta0", "length_beta0", "coverage_beta1", "length_beta1"]
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = ExperimentSpec::desk(Task::OneSampleCi);
        spec.theta_values.clear();
        assert!(run_experiment(&spec).is_err());

        let mut spec = ExperimentSpec::desk(Task::ChisqTest);
        spec.cell_probs = vec![0.5, 0.5, 0.25, 0.25];
        assert!(run_experiment(&spec).is_err());

        let mut spec = ExperimentSpec::desk(Task::OneSampleCi);
        spec.replications = 0;
        assert!(run_experiment(&spec).is_err());
    }

    #[test]
    fn wald_level_is_near_nominal_at_desk_scale() {
        // z-test level at theta0 = 0.5, n = 30: slightly liberal but inside
        // [0.03, 0.08].
        let mut spec = ExperimentSpec::desk(Task::OneSampleTest);
        spec.theta_values = vec![0.5];
        spec.draws = 200;
        let result = run_experiment(&spec).unwrap();
        let np = result
            .rows
            .iter()
            .find(|r| r.method == "np" && r.metric == "level")
            .unwrap();
        let level = np.value.unwrap();
        assert!((0.03..=0.08).contains(&level), "np level {level}");
    }

    #[test]
    fn exact_binomial_coverage_is_conservative() {
        let mut spec = ExperimentSpec::desk(Task::OneSampleCi);
        spec.baselines = vec![BaselineMethod::ExactBinomial];
        spec.draws = 50; // keep the private arm cheap; we read the baseline
        let result = run_experiment(&spec).unwrap();
        for r in result.rows.iter().filter(|r| r.method == "exact" && r.metric == "coverage") {
            let c = r.value.unwrap();
            assert!(c >= 0.95 - 2.0 * r.stderr.unwrap(), "exact coverage {c} at {:?}", r.theta);
        }
    }

    #[test]
    fn infeasible_baseline_becomes_an_na_cell() {
        // A table with an empty row margin: the classical test errors out
        // while the private test still produces a p-value.
        let mut spec = tiny(Task::ChisqTest);
        spec.replications = 3;
        spec.draws = 50;
        spec.n_values = vec![40];
        // Degenerate truth: all mass in one row, so every simulated raw
        // table has a zero row margin.
        spec.cell_probs = vec![0.5 - 1e-12, 0.5 - 1e-12, 1e-12, 1e-12];
        let result = run_experiment(&spec).unwrap();
        let np = result.rows.iter().find(|r| r.method == "np").unwrap();
        assert!(np.value.is_none(), "expected NA cell, got {:?}", np.value);
        let fima = result.rows.iter().find(|r| r.method == "fima").unwrap();
        assert!(fima.value.is_some());
    }
}
