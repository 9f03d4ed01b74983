//! Experiment settings from a TOML config file and/or command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{parse_filter_list, Example, ExperimentConfig, NoiseCase};
use crate::error::{Error, Result};
use crate::mcuf::McufConfig;
use crate::parallel::Execution;
use crate::unscented::UTConfig;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FilterList {
    One(String),
    Many(Vec<String>),
}

impl FilterList {
    fn joined(&self) -> String {
        match self {
            Self::One(s) => s.clone(),
            Self::Many(v) => v.join(";"),
        }
    }
}

/// Partially specified settings. Every field is optional so that a config
/// file can be overlaid with explicit flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub example: Option<String>,
    pub noise_case: Option<String>,
    pub filters: Option<FilterList>,
    pub steps: Option<usize>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub sigma_list: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub phi: Option<f64>,
    /// Filter-side process noise variance.
    pub filter_q: Option<f64>,
    /// Filter-side measurement noise variance.
    pub filter_r: Option<f64>,
    pub execution: Option<Execution>,
}

/// Contents of a `--config` file.
pub type ConfigFile = Overrides;

impl Overrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn with_filters(mut self, list: &str) -> Self {
        self.filters = Some(FilterList::One(list.to_string()));
        self
    }

    /// Fields set in `top` win over fields set in `self`.
    pub fn overlay(self, top: Overrides) -> Overrides {
        Overrides {
            example: top.example.or(self.example),
            noise_case: top.noise_case.or(self.noise_case),
            filters: top.filters.or(self.filters),
            steps: top.steps.or(self.steps),
            runs: top.runs.or(self.runs),
            seed: top.seed.or(self.seed),
            epsilon: top.epsilon.or(self.epsilon),
            sigma_list: top.sigma_list.or(self.sigma_list),
            out: top.out.or(self.out),
            alpha: top.alpha.or(self.alpha),
            beta: top.beta.or(self.beta),
            phi: top.phi.or(self.phi),
            filter_q: top.filter_q.or(self.filter_q),
            filter_r: top.filter_r.or(self.filter_r),
            execution: top.execution.or(self.execution),
        }
    }

    pub fn build(&self) -> Result<ExperimentConfig> {
        let missing = |what: &str| Error::Config(format!("missing required setting `{what}`"));
        let example: Example = self.example.as_deref().ok_or_else(|| missing("example"))?.parse()?;
        let noise_case: NoiseCase = self
            .noise_case
            .as_deref()
            .ok_or_else(|| missing("noise-case"))?
            .parse()?;
        let filters = self.filters.as_ref().ok_or_else(|| missing("filters"))?;
        let filters = parse_filter_list(
            &filters.joined(),
            self.epsilon.unwrap_or(McufConfig::DEFAULT_EPSILON),
            self.sigma_list.as_deref().unwrap_or(&[]),
        )?;
        let defaults = UTConfig::default();
        let mut cfg = ExperimentConfig::new(example, noise_case, filters);
        cfg.steps = self.steps.unwrap_or(cfg.steps);
        cfg.runs = self.runs.unwrap_or(cfg.runs);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.ut = UTConfig {
            alpha: self.alpha.unwrap_or(defaults.alpha),
            beta: self.beta.unwrap_or(defaults.beta),
            phi: self.phi.or(defaults.phi),
        };
        cfg.filter_process_variance = self.filter_q;
        cfg.filter_measurement_variance = self.filter_r;
        cfg.execution = self.execution.unwrap_or_default();
        cfg.output_dir = self.out.clone();
        cfg.validate()?;
        Ok(cfg)
    }
}
