//! Report files: `summary.tsv`, `mse1_<component>.tsv` and `manifest.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{BenchmarkReport, ExperimentConfig};
use crate::benchmarks::FallingBodyParams;
use crate::error::{Error, Result};
use crate::linalg::MAX_JITTER_DOUBLINGS;
use crate::mcuf::{DIVERGENCE_STEP, WEIGHT_FLOOR};

/// Four significant digits, e.g. `6.897e1`.
pub fn format_display(v: f64) -> String {
    format!("{v:.3e}")
}

/// Shortest representation that parses back to the same `f64`.
fn format_full(v: f64) -> String {
    format!("{v:e}")
}

/// Everything needed to reproduce a report.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub generator: String,
    pub example: String,
    pub noise_case: String,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub rng: String,
    pub execution: String,
    pub filters: Vec<String>,
    pub labels: Vec<String>,
    pub ut_alpha: f64,
    pub ut_beta: f64,
    pub ut_phi: f64,
    pub filter_process_variance: f64,
    pub filter_measurement_variance: f64,
    /// `[weight, variance]` pairs.
    pub truth_process_noise: Vec<[f64; 2]>,
    pub truth_measurement_noise: Vec<[f64; 2]>,
    pub initial_truth: Vec<f64>,
    pub initial_mean: Vec<f64>,
    /// Row-major.
    pub initial_covariance: Vec<Vec<f64>>,
    pub kernel_weight_floor: String,
    pub divergence_step: f64,
    pub cholesky_jitter: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub falling_body: Option<FallingBodyParams>,
}

impl Manifest {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let scenario = cfg.scenario()?;
        let n = cfg.example.state_dim();
        let pairs = |m: &crate::benchmarks::MixedGaussian| {
            m.components().iter().map(|(w, v)| [*w, *v]).collect()
        };
        let cov = &scenario.initial_belief.covariance;
        Ok(Self {
            generator: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            example: cfg.example.to_string(),
            noise_case: cfg.noise_case.to_string(),
            steps: cfg.steps,
            runs: cfg.runs,
            seed: cfg.seed,
            rng: "ChaCha20, stream = run index".into(),
            execution: format!("{:?}", cfg.execution).to_ascii_lowercase(),
            filters: cfg.filters.iter().map(ToString::to_string).collect(),
            labels: cfg.filters.iter().map(|f| f.label()).collect(),
            ut_alpha: cfg.ut.alpha,
            ut_beta: cfg.ut.beta,
            ut_phi: cfg.ut.phi_for(n),
            filter_process_variance: scenario.filter_process_variance,
            filter_measurement_variance: scenario.filter_measurement_variance,
            truth_process_noise: pairs(&scenario.process_noise),
            truth_measurement_noise: pairs(&scenario.measurement_noise),
            initial_truth: scenario.initial_truth.iter().copied().collect(),
            initial_mean: scenario.initial_belief.mean.iter().copied().collect(),
            initial_covariance: (0..n).map(|i| cov.row(i).iter().copied().collect()).collect(),
            kernel_weight_floor: format_full(WEIGHT_FLOOR),
            divergence_step: DIVERGENCE_STEP,
            cholesky_jitter: format!(
                "1e-12*trace/n, doubled up to {MAX_JITTER_DOUBLINGS} times"
            ),
            falling_body: matches!(cfg.example, super::Example::FallingBody)
                .then_some(scenario.falling_body),
        })
    }
}

fn summary_table(report: &BenchmarkReport, components: &[&str]) -> String {
    let mut out = String::from("filter\tlabel");
    for c in components {
        write!(out, "\tmse_{c}\tmse_{c}_display").unwrap();
    }
    out.push_str("\tavg_iterations\tavg_iterations_display\tnonconverged\tfallbacks\tstep_failures\n");
    for f in &report.filters {
        write!(out, "{}\t{}", f.spec, f.spec.label()).unwrap();
        for v in &f.mse.overall {
            write!(out, "\t{}\t{}", format_full(*v), format_display(*v)).unwrap();
        }
        match f.avg_iterations {
            Some(it) => write!(out, "\t{}\t{}", format_full(it), format_display(it)).unwrap(),
            None => out.push_str("\t-\t-"),
        }
        writeln!(out, "\t{}\t{}\t{}", f.nonconverged, f.fallbacks, f.step_failures).unwrap();
    }
    out
}

fn series_table(report: &BenchmarkReport, component: usize) -> String {
    let mut out = String::from("k");
    for f in &report.filters {
        write!(out, "\t{}", f.spec.label()).unwrap();
    }
    out.push('\n');
    for k in 0..report.steps {
        write!(out, "{}", k + 1).unwrap();
        for f in &report.filters {
            write!(out, "\t{}", format_full(f.mse.per_step[component][k])).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes the report into `dir` and returns the written paths.
pub fn emit_report(report: &BenchmarkReport, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if report.filters.len() != cfg.filters.len() || report.steps != cfg.steps {
        return Err(Error::Config("report does not match the configuration".into()));
    }
    let components = cfg.example.component_names();
    let manifest = toml::to_string(&Manifest::from_config(cfg)?)
        .map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;

    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    write("summary.tsv".into(), summary_table(report, &components))?;
    for (i, c) in components.iter().enumerate() {
        write(format!("mse1_{c}.tsv"), series_table(report, i))?;
    }
    write("manifest.txt".into(), manifest)?;
    Ok(written)
}
