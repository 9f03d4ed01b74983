//! Monte Carlo experiment runner.
//!
//! Each run draws its own noise stream from `(seed, run index)`, simulates the
//! truth and the noisy measurements once, and feeds the same measurement
//! sequence to every configured filter. Runs may execute in parallel; the
//! reduction over runs is sequential and in run order, so results do not
//! depend on the thread count.

mod config;
mod filters;
mod metrics;
mod report;

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{FallingBody, FallingBodyParams, MixedGaussian, Ungm};
use crate::error::{Error, Result};
use crate::model::{GaussianBelief, SystemModel};
use crate::parallel::{map_indexed, Execution};
use crate::unscented::UTConfig;

pub use config::{ConfigFile, FilterList, Overrides};
pub use filters::{parse_filter_list, split_filter_list, FilterSpec, FilterTemplate};
pub use metrics::{mse_metrics, MseSummary};
pub use report::{emit_report, format_display, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Example {
    Ungm,
    FallingBody,
}

impl Example {
    pub fn state_dim(self) -> usize {
        match self {
            Self::Ungm => 1,
            Self::FallingBody => 3,
        }
    }

    /// Names used for the per-component series files.
    pub fn component_names(self) -> Vec<&'static str> {
        match self {
            Self::Ungm => vec!["x"],
            Self::FallingBody => vec!["x1", "x2", "x3"],
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ungm => "ungm",
            Self::FallingBody => "falling-body",
        })
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "ungm" => Ok(Self::Ungm),
            "falling-body" => Ok(Self::FallingBody),
            other => Err(Error::Config(format!("unknown example `{other}`"))),
        }
    }
}

/// Noise scenarios. UNGM accepts `gaussian`, `impulsive-measurement` and
/// `impulsive-both`; the falling body accepts `gaussian` and `impulsive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseCase {
    Gaussian,
    ImpulsiveMeasurement,
    ImpulsiveBoth,
    Impulsive,
}

impl fmt::Display for NoiseCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::ImpulsiveMeasurement => "impulsive-measurement",
            Self::ImpulsiveBoth => "impulsive-both",
            Self::Impulsive => "impulsive",
        })
    }
}

impl FromStr for NoiseCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "impulsive-measurement" => Ok(Self::ImpulsiveMeasurement),
            "impulsive-both" => Ok(Self::ImpulsiveBoth),
            "impulsive" => Ok(Self::Impulsive),
            other => Err(Error::Config(format!("unknown noise case `{other}`"))),
        }
    }
}

/// Truth-side noise, initial conditions and the filter-side model of one
/// (example, noise case) pair.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub process_noise: MixedGaussian,
    pub measurement_noise: MixedGaussian,
    pub initial_truth: DVector<f64>,
    pub initial_belief: GaussianBelief,
    /// Filter-side `Q` (scalar variance on the diagonal).
    pub filter_process_variance: f64,
    /// Filter-side `R`.
    pub filter_measurement_variance: f64,
    pub falling_body: FallingBodyParams,
}

fn mixture(c: &[(f64, f64)]) -> MixedGaussian {
    MixedGaussian::new(c.to_vec()).expect("built-in mixtures are valid")
}

impl Scenario {
    pub fn new(example: Example, noise: NoiseCase) -> Result<Self> {
        let (process_noise, measurement_noise) = match (example, noise) {
            (Example::Ungm, NoiseCase::Gaussian) => (mixture(&[(1.0, 1.0)]), mixture(&[(1.0, 1.0)])),
            (Example::Ungm, NoiseCase::ImpulsiveMeasurement) => {
                (mixture(&[(1.0, 1.0)]), mixture(&[(0.8, 1.0), (0.2, 400.0)]))
            }
            (Example::Ungm, NoiseCase::ImpulsiveBoth) => (
                mixture(&[(0.8, 0.1), (0.2, 10.0)]),
                mixture(&[(0.8, 1.0), (0.2, 400.0)]),
            ),
            (Example::FallingBody, NoiseCase::Gaussian) => {
                (MixedGaussian::zero(), mixture(&[(1.0, 10_000.0)]))
            }
            (Example::FallingBody, NoiseCase::Impulsive | NoiseCase::ImpulsiveMeasurement) => (
                MixedGaussian::zero(),
                mixture(&[(0.7, 1000.0), (0.3, 100_000.0)]),
            ),
            (e, n) => {
                return Err(Error::Config(format!(
                    "noise case `{n}` is not defined for example `{e}`"
                )))
            }
        };
        let (initial_truth, initial_belief) = match example {
            Example::Ungm => (DVector::zeros(1), GaussianBelief::scalar(0.0, 1.0)),
            Example::FallingBody => (
                DVector::from_vec(vec![300_000.0, -20_000.0, 1.0 / 1000.0]),
                GaussianBelief::new(
                    DVector::from_vec(vec![300_000.0, -20_000.0, 0.0009]),
                    DMatrix::from_diagonal(&DVector::from_vec(vec![1e6, 4e6, 1e-6])),
                )?,
            ),
        };
        Ok(Self {
            filter_process_variance: process_noise.variance(),
            filter_measurement_variance: measurement_noise.variance(),
            process_noise,
            measurement_noise,
            initial_truth,
            initial_belief,
            falling_body: FallingBodyParams::default(),
        })
    }

    pub fn filter_model(&self, example: Example) -> Box<dyn SystemModel> {
        match example {
            Example::Ungm => Box::new(Ungm::new(
                self.filter_process_variance,
                self.filter_measurement_variance,
            )),
            Example::FallingBody => {
                let fb = FallingBody::new(self.falling_body, self.filter_measurement_variance);
                if self.filter_process_variance == 0.0 {
                    Box::new(fb)
                } else {
                    Box::new(WithProcessNoise {
                        q: DMatrix::identity(3, 3) * self.filter_process_variance,
                        inner: fb,
                    })
                }
            }
        }
    }
}

/// Wraps a model with a different (isotropic) process-noise covariance.
struct WithProcessNoise<M> {
    inner: M,
    q: DMatrix<f64>,
}

impl<M: SystemModel> SystemModel for WithProcessNoise<M> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn measurement_dim(&self) -> usize {
        self.inner.measurement_dim()
    }
    fn process(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        self.inner.process(k, x)
    }
    fn measure(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        self.inner.measure(k, x)
    }
    fn process_noise(&self) -> &DMatrix<f64> {
        &self.q
    }
    fn measurement_noise(&self) -> &DMatrix<f64> {
        self.inner.measurement_noise()
    }
    fn process_jacobian(&self, k: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.inner.process_jacobian(k, x)
    }
    fn measurement_jacobian(&self, k: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.inner.measurement_jacobian(k, x)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub example: Example,
    pub noise_case: NoiseCase,
    pub filters: Vec<FilterSpec>,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub ut: UTConfig,
    /// Overrides the scenario's filter-side process noise variance.
    pub filter_process_variance: Option<f64>,
    /// Overrides the scenario's filter-side measurement noise variance.
    pub filter_measurement_variance: Option<f64>,
    pub execution: Execution,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(example: Example, noise_case: NoiseCase, filters: Vec<FilterSpec>) -> Self {
        Self {
            example,
            noise_case,
            filters,
            steps: 500,
            runs: 100,
            seed: 0,
            ut: UTConfig::default(),
            filter_process_variance: None,
            filter_measurement_variance: None,
            execution: Execution::default(),
            output_dir: None,
        }
    }

    pub fn steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() {
            return Err(Error::Config("no filters configured".into()));
        }
        if self.steps == 0 || self.runs == 0 {
            return Err(Error::Config("steps and runs must be at least 1".into()));
        }
        let mut seen = HashSet::new();
        for f in &self.filters {
            if !seen.insert(f.to_string()) {
                return Err(Error::Config(format!("filter `{f}` configured twice")));
            }
        }
        for v in [self.filter_process_variance, self.filter_measurement_variance]
            .into_iter()
            .flatten()
        {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("invalid filter noise variance {v}")));
            }
        }
        if self.filter_measurement_variance == Some(0.0) {
            return Err(Error::Config("filter measurement variance must be positive".into()));
        }
        crate::unscented::scaling_factor(self.example.state_dim(), &self.ut)
            .map_err(|e| Error::Config(format!("unscented parameters: {e}")))?;
        self.scenario().map(|_| ())
    }

    /// Scenario with the configured filter-side overrides applied.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = Scenario::new(self.example, self.noise_case)?;
        if let Some(q) = self.filter_process_variance {
            s.filter_process_variance = q;
        }
        if let Some(r) = self.filter_measurement_variance {
            s.filter_measurement_variance = r;
        }
        Ok(s)
    }
}

/// Aggregated results of one filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub spec: FilterSpec,
    pub mse: MseSummary,
    /// Mean fixed-point iterations per measurement update (iterated filters only).
    pub avg_iterations: Option<f64>,
    /// Updates that hit the iteration cap without converging.
    pub nonconverged: usize,
    /// Updates that diverged and fell back to least squares.
    pub fallbacks: usize,
    /// Steps whose update failed outright; the filter carried its prediction.
    pub step_failures: usize,
    /// Accepted posteriors that were not symmetric PSD.
    pub covariance_violations: usize,
    /// Converged MCC updates whose final cost fell below the initial cost.
    pub cost_decreases: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub example: Example,
    pub noise_case: NoiseCase,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub filters: Vec<FilterReport>,
}

impl BenchmarkReport {
    pub fn filter(&self, spec: &FilterSpec) -> Option<&FilterReport> {
        self.filters.iter().find(|f| &f.spec == spec)
    }

    pub fn by_label(&self, label: &str) -> Option<&FilterReport> {
        self.filters.iter().find(|f| f.spec.label() == label)
    }

    /// Largest relative disagreement among the overall-MSE averaging orders.
    pub fn double_average_gap(&self) -> f64 {
        self.filters
            .iter()
            .map(|f| f.mse.double_average_gap())
            .fold(0.0, f64::max)
    }
}

/// Truth trajectory and measurements of one run, steps `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub truth: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

/// Noise stream of run `run`: ChaCha20 keyed by `seed`, stream number `run`.
pub fn run_rng(seed: u64, run: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

/// Simulates truth and noisy measurements for one run.
pub fn simulate(cfg: &ExperimentConfig, scenario: &Scenario, run: usize) -> Result<Trajectory> {
    let mut rng = run_rng(cfg.seed, run);
    // only the noise-free maps are used for the truth
    let truth_model = scenario.filter_model(cfg.example);
    let n = cfg.example.state_dim();
    let mut x = scenario.initial_truth.clone();
    let mut truth = Vec::with_capacity(cfg.steps);
    let mut measurements = Vec::with_capacity(cfg.steps);
    for k in 1..=cfg.steps {
        x = truth_model.process(k, &x);
        for i in 0..n {
            x[i] += scenario.process_noise.sample(&mut rng);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState("truth simulation"));
        }
        let mut y = truth_model.measure(k, &x);
        for v in y.iter_mut() {
            *v += scenario.measurement_noise.sample(&mut rng);
        }
        truth.push(x.clone());
        measurements.push(y);
    }
    Ok(Trajectory {
        truth,
        measurements,
    })
}

#[derive(Debug, Clone, Default)]
struct RunStats {
    squared: Vec<f64>,
    iterations: usize,
    iterated_updates: usize,
    nonconverged: usize,
    fallbacks: usize,
    step_failures: usize,
    covariance_violations: usize,
    cost_decreases: usize,
}

/// Runs one filter over a trajectory.
fn run_filter(
    spec: &FilterSpec,
    model: &dyn SystemModel,
    ut: &UTConfig,
    initial: &GaussianBelief,
    traj: &Trajectory,
) -> RunStats {
    let n = initial.dim();
    let mut stats = RunStats {
        squared: Vec::with_capacity(traj.truth.len() * n),
        ..Default::default()
    };
    let mut belief = initial.clone();
    for (i, (x, y)) in traj.truth.iter().zip(&traj.measurements).enumerate() {
        let k = i + 1;
        match spec.step(&belief, model, ut, y, k) {
            Ok((post, trace)) => {
                if !post.is_consistent() {
                    stats.covariance_violations += 1;
                }
                if let Some(t) = trace {
                    stats.iterations += t.iterations;
                    stats.iterated_updates += 1;
                    stats.nonconverged += usize::from(!t.converged && !t.fell_back);
                    stats.fallbacks += usize::from(t.fell_back);
                    if let (true, Some(a), Some(b)) = (t.converged, t.initial_cost, t.final_cost) {
                        stats.cost_decreases += usize::from(b < a - 1e-9);
                    }
                }
                belief = post;
            }
            Err(_) => {
                stats.step_failures += 1;
                if let Ok(prior) = spec.predict(&belief, model, ut, k) {
                    if prior.mean.iter().all(|v| v.is_finite()) {
                        belief = prior;
                    }
                }
            }
        }
        stats
            .squared
            .extend(x.iter().zip(belief.mean.iter()).map(|(a, b)| (a - b) * (a - b)));
    }
    stats
}

/// Runs the configured Monte Carlo experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let model = scenario.filter_model(cfg.example);
    let model: &dyn SystemModel = model.as_ref();
    if cfg.filters.iter().any(FilterSpec::needs_jacobians)
        && model
            .measurement_jacobian(1, &scenario.initial_belief.mean)
            .is_none()
    {
        return Err(Error::Config("EKF-type filters need analytic Jacobians".into()));
    }

    let per_run: Vec<Result<Vec<RunStats>>> = map_indexed(cfg.runs, cfg.execution, |m| {
        let traj = simulate(cfg, &scenario, m)?;
        Ok(cfg
            .filters
            .iter()
            .map(|f| run_filter(f, model, &cfg.ut, &scenario.initial_belief, &traj))
            .collect())
    });
    let per_run: Vec<Vec<RunStats>> = per_run.into_iter().collect::<Result<_>>()?;

    let n = cfg.example.state_dim();
    let mut filters = Vec::with_capacity(cfg.filters.len());
    for (j, spec) in cfg.filters.iter().enumerate() {
        let squared: Vec<Vec<f64>> = per_run.iter().map(|r| r[j].squared.clone()).collect();
        let mse = MseSummary::from_squared_errors(&squared, cfg.steps, n)?;
        let sum = |f: fn(&RunStats) -> usize| per_run.iter().map(|r| f(&r[j])).sum::<usize>();
        let iterations = sum(|s| s.iterations);
        let updates = sum(|s| s.iterated_updates);
        filters.push(FilterReport {
            spec: *spec,
            mse,
            avg_iterations: (spec.is_iterated() && updates > 0)
                .then(|| iterations as f64 / updates as f64),
            nonconverged: sum(|s| s.nonconverged),
            fallbacks: sum(|s| s.fallbacks),
            step_failures: sum(|s| s.step_failures),
            covariance_violations: sum(|s| s.covariance_violations),
            cost_decreases: sum(|s| s.cost_decreases),
        });
    }
    Ok(BenchmarkReport {
        example: cfg.example,
        noise_case: cfg.noise_case,
        steps: cfg.steps,
        runs: cfg.runs,
        seed: cfg.seed,
        filters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;

    #[test]
    fn parses_names() {
        assert_eq!("falling-body".parse::<Example>().unwrap(), Example::FallingBody);
        assert_eq!("falling_body".parse::<Example>().unwrap(), Example::FallingBody);
        assert_eq!(
            "impulsive_measurement".parse::<NoiseCase>().unwrap(),
            NoiseCase::ImpulsiveMeasurement
        );
        assert!("lorenz".parse::<Example>().is_err());
    }

    #[test]
    fn undefined_noise_case_is_rejected() {
        assert!(Scenario::new(Example::Ungm, NoiseCase::Impulsive).is_err());
        assert!(Scenario::new(Example::FallingBody, NoiseCase::ImpulsiveBoth).is_err());
    }

    #[test]
    fn empty_and_duplicate_filters_are_rejected() {
        let cfg = ExperimentConfig::new(Example::Ungm, NoiseCase::Gaussian, vec![]);
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
        let cfg = ExperimentConfig::new(
            Example::Ungm,
            NoiseCase::Gaussian,
            vec![FilterSpec::Ukf, FilterSpec::Ukf],
        );
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn run_streams_are_independent_of_each_other() {
        use rand::Rng;
        let a: u64 = run_rng(5, 0).random();
        let b: u64 = run_rng(5, 1).random();
        let a2: u64 = run_rng(5, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn noiseless_linear_filtering_is_exact() {
        // exact prior and no noise: every filter reproduces the truth
        let model = LinearModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
        );
        let initial = GaussianBelief::new(DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2)).unwrap();
        let x1 = model.process(1, &initial.mean);
        let traj = Trajectory {
            truth: vec![x1.clone()],
            measurements: vec![model.measure(1, &x1)],
        };
        for spec in [
            FilterSpec::Ukf,
            FilterSpec::Ekf,
            FilterSpec::Hukf(Default::default()),
            FilterSpec::Mcuf(crate::mcuf::McufConfig::new(2.0).unwrap()),
        ] {
            let stats = run_filter(&spec, &model, &UTConfig::default(), &initial, &traj);
            let mse = MseSummary::from_squared_errors(&[stats.squared], 1, 2).unwrap();
            assert!(mse.overall.iter().all(|v| *v < 1e-20), "{spec}: {:?}", mse.overall);
        }
    }

    #[test]
    fn tiny_experiment_report_shape() {
        let cfg = ExperimentConfig::new(
            Example::FallingBody,
            NoiseCase::Gaussian,
            vec![FilterSpec::Ukf, FilterSpec::Ekf],
        )
        .steps(5)
        .runs(3)
        .seed(9);
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.filters.len(), 2);
        assert_eq!(report.filters[0].mse.per_step.len(), 3);
        assert_eq!(report.filters[0].mse.per_step[0].len(), 5);
        assert_eq!(report.filters[0].mse.per_run[0].len(), 3);
        assert!(report.filters[0].avg_iterations.is_none());
        assert!(report.double_average_gap() <= 1e-10);
    }
}
