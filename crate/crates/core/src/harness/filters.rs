//! Filter specifications (`ukf`, `ekf`, `hekf:gamma=1.345`, `hukf:...`,
//! `mcuf:sigma=2,eps=1e-6,init=ls`) and a uniform stepping interface.

use std::fmt;

use nalgebra::DVector;

use crate::baselines::{ekf_predict, ekf_step, hekf_step, hukf_step, HuberConfig};
use crate::error::{Error, Result};
use crate::mcuf::{mcuf_step, FixedPointTrace, InitMode, McufConfig};
use crate::model::{GaussianBelief, SystemModel};
use crate::unscented::{time_update, ukf_step, UTConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterSpec {
    Ukf,
    Ekf,
    Hekf(HuberConfig),
    Hukf(HuberConfig),
    Mcuf(McufConfig),
}

impl FilterSpec {
    pub fn is_iterated(&self) -> bool {
        matches!(self, Self::Hekf(_) | Self::Hukf(_) | Self::Mcuf(_))
    }

    pub fn needs_jacobians(&self) -> bool {
        matches!(self, Self::Ekf | Self::Hekf(_))
    }

    /// Table label, e.g. `MCUF(sigma=2,eps=1e-6)`.
    pub fn label(&self) -> String {
        match self {
            Self::Ukf => "UKF".into(),
            Self::Ekf => "EKF".into(),
            Self::Hekf(c) => format!("HEKF(gamma={},eps={:e})", c.gamma, c.epsilon),
            Self::Hukf(c) => format!("HUKF(gamma={},eps={:e})", c.gamma, c.epsilon),
            Self::Mcuf(c) => format!("MCUF(sigma={},eps={:e})", c.sigma.get(), c.epsilon),
        }
    }

    pub fn step(
        &self,
        belief: &GaussianBelief,
        model: &dyn SystemModel,
        ut: &UTConfig,
        y: &DVector<f64>,
        k: usize,
    ) -> Result<(GaussianBelief, Option<FixedPointTrace>)> {
        match self {
            Self::Ukf => ukf_step(belief, model, ut, y, k).map(|b| (b, None)),
            Self::Ekf => ekf_step(belief, model, y, k).map(|b| (b, None)),
            Self::Hekf(c) => hekf_step(belief, model, c, y, k).map(|(b, t)| (b, Some(t))),
            Self::Hukf(c) => hukf_step(belief, model, ut, c, y, k).map(|(b, t)| (b, Some(t))),
            Self::Mcuf(c) => mcuf_step(belief, model, ut, c, y, k).map(|(b, t)| (b, Some(t))),
        }
    }

    /// Time update only, used when a measurement update fails.
    pub fn predict(
        &self,
        belief: &GaussianBelief,
        model: &dyn SystemModel,
        ut: &UTConfig,
        k: usize,
    ) -> Result<GaussianBelief> {
        if self.needs_jacobians() {
            ekf_predict(belief, model, k)
        } else {
            time_update(belief, model, ut, k)
        }
    }
}

impl fmt::Display for FilterSpec {
    /// Canonical spec string; parses back to the same filter.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ukf => write!(f, "ukf"),
            Self::Ekf => write!(f, "ekf"),
            Self::Hekf(c) | Self::Hukf(c) => {
                let kind = if matches!(self, Self::Hekf(_)) { "hekf" } else { "hukf" };
                write!(
                    f,
                    "{kind}:gamma={},eps={:e},maxit={}",
                    c.gamma, c.epsilon, c.max_iterations
                )
            }
            Self::Mcuf(c) => write!(
                f,
                "mcuf:sigma={},eps={:e},init={},maxit={}",
                c.sigma.get(),
                c.epsilon,
                match c.init_mode {
                    InitMode::LeastSquares => "ls",
                    InitMode::Prior => "prior",
                },
                c.max_iterations
            ),
        }
    }
}

/// One parsed spec before the global `--epsilon` / `--sigma-list` defaults apply.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterTemplate {
    pub kind: String,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub init: Option<InitMode>,
    pub max_iterations: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| config_err(format!("`{key}` expects a number, got `{v}`")))
}

impl FilterTemplate {
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (kind, params) = match spec.split_once(':') {
            Some((k, p)) => (k.trim(), p),
            None => (spec, ""),
        };
        let kind = kind.to_ascii_lowercase();
        if !matches!(kind.as_str(), "ukf" | "ekf" | "hekf" | "hukf" | "mcuf") {
            return Err(config_err(format!("unknown filter `{kind}`")));
        }
        let mut t = FilterTemplate {
            kind,
            ..Default::default()
        };
        for pair in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| config_err(format!("malformed filter parameter `{pair}`")))?;
            let key = key.trim().to_ascii_lowercase();
            let allowed = match t.kind.as_str() {
                "mcuf" => matches!(key.as_str(), "sigma" | "eps" | "epsilon" | "init" | "maxit"),
                "hekf" | "hukf" => matches!(key.as_str(), "gamma" | "eps" | "epsilon" | "maxit"),
                _ => false,
            };
            if !allowed {
                return Err(config_err(format!("`{}` does not take `{key}`", t.kind)));
            }
            match key.as_str() {
                "sigma" => t.sigma = Some(parse_f64(&key, value)?),
                "gamma" => t.gamma = Some(parse_f64(&key, value)?),
                "eps" | "epsilon" => t.epsilon = Some(parse_f64(&key, value)?),
                "maxit" => {
                    t.max_iterations = Some(value.trim().parse().map_err(|_| {
                        config_err(format!("`maxit` expects an integer, got `{value}`"))
                    })?)
                }
                "init" => {
                    t.init = Some(match value.trim().to_ascii_lowercase().as_str() {
                        "ls" | "least_squares" => InitMode::LeastSquares,
                        "prior" => InitMode::Prior,
                        other => return Err(config_err(format!("unknown init mode `{other}`"))),
                    })
                }
                _ => unreachable!(),
            }
        }
        Ok(t)
    }

    /// Applies global defaults. A `mcuf` without its own `sigma` expands into
    /// one filter per entry of `sigma_list`.
    pub fn resolve(&self, default_epsilon: f64, sigma_list: &[f64]) -> Result<Vec<FilterSpec>> {
        let eps = self.epsilon.unwrap_or(default_epsilon);
        let max_it = self.max_iterations.unwrap_or(McufConfig::DEFAULT_MAX_ITERATIONS);
        let huber = || -> Result<HuberConfig> {
            let mut c = HuberConfig::new(self.gamma.unwrap_or(HuberConfig::DEFAULT_GAMMA))?
                .with_epsilon(eps);
            c.max_iterations = max_it;
            Ok(c)
        };
        let specs = match self.kind.as_str() {
            "ukf" => vec![FilterSpec::Ukf],
            "ekf" => vec![FilterSpec::Ekf],
            "hekf" => vec![FilterSpec::Hekf(huber()?)],
            "hukf" => vec![FilterSpec::Hukf(huber()?)],
            "mcuf" => {
                let sigmas: Vec<f64> = match self.sigma {
                    Some(s) => vec![s],
                    None if !sigma_list.is_empty() => sigma_list.to_vec(),
                    None => {
                        return Err(config_err(
                            "`mcuf` needs `sigma=` or a --sigma-list",
                        ))
                    }
                };
                sigmas
                    .into_iter()
                    .map(|s| {
                        Ok(FilterSpec::Mcuf(
                            McufConfig::new(s)?
                                .with_epsilon(eps)
                                .with_init(self.init.unwrap_or_default())
                                .with_max_iterations(max_it),
                        ))
                    })
                    .collect::<Result<_>>()?
            }
            _ => unreachable!("kind validated in parse"),
        };
        for s in &specs {
            match s {
                FilterSpec::Mcuf(c) => {
                    c.iteration()?;
                }
                FilterSpec::Hekf(c) | FilterSpec::Hukf(c) => {
                    crate::mcuf::IterationSettings::new(c.epsilon, c.max_iterations, InitMode::LeastSquares)?;
                }
                _ => {}
            }
        }
        Ok(specs)
    }
}

/// Splits a filter list. Commas separate both filters and a filter's
/// parameters, so a `key=value` token without a `:` continues the previous
/// filter: `ukf,mcuf:sigma=2,eps=1e-6` is two filters. `;` always separates.
pub fn split_filter_list(list: &str) -> Result<Vec<String>> {
    let mut specs: Vec<String> = Vec::new();
    for group in list.split(';') {
        let mut continuing = false;
        for token in group.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let is_param = token.contains('=') && !token.contains(':');
            if is_param {
                match specs.last_mut() {
                    Some(prev) if continuing => {
                        prev.push(',');
                        prev.push_str(token);
                    }
                    _ => {
                        return Err(config_err(format!(
                            "parameter `{token}` does not follow a filter with parameters"
                        )))
                    }
                }
            } else {
                continuing = token.contains(':');
                specs.push(token.to_string());
            }
        }
    }
    Ok(specs)
}

/// Parses and resolves a whole filter list.
pub fn parse_filter_list(list: &str, default_epsilon: f64, sigma_list: &[f64]) -> Result<Vec<FilterSpec>> {
    let mut out = Vec::new();
    for spec in split_filter_list(list)? {
        out.extend(FilterTemplate::parse(&spec)?.resolve(default_epsilon, sigma_list)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_examples() {
        let specs = parse_filter_list(
            "ukf,ekf,hekf:gamma=1.345,hukf:gamma=1.345,mcuf:sigma=2.0,eps=1e-6,init=ls",
            1e-6,
            &[],
        )
        .unwrap();
        assert_eq!(specs.len(), 5);
        assert_eq!(specs[0], FilterSpec::Ukf);
        assert_eq!(specs[1], FilterSpec::Ekf);
        match specs[4] {
            FilterSpec::Mcuf(c) => {
                assert_eq!(c.sigma.get(), 2.0);
                assert_eq!(c.epsilon, 1e-6);
                assert_eq!(c.init_mode, InitMode::LeastSquares);
            }
            _ => panic!("expected mcuf"),
        }
        match specs[2] {
            FilterSpec::Hekf(c) => assert_eq!(c.gamma, 1.345),
            _ => panic!("expected hekf"),
        }
    }

    #[test]
    fn sigma_list_expands_bare_mcuf() {
        let specs = parse_filter_list("ukf,mcuf", 1e-4, &[2.0, 5.0, 10.0]).unwrap();
        assert_eq!(specs.len(), 4);
        let sig: Vec<f64> = specs
            .iter()
            .filter_map(|s| match s {
                FilterSpec::Mcuf(c) => Some(c.sigma.get()),
                _ => None,
            })
            .collect();
        assert_eq!(sig, vec![2.0, 5.0, 10.0]);
        assert!(specs.iter().all(|s| match s {
            FilterSpec::Mcuf(c) => c.epsilon == 1e-4,
            _ => true,
        }));
    }

    #[test]
    fn display_round_trips() {
        for s in parse_filter_list(
            "ukf;ekf;hekf:gamma=2,eps=1e-3;hukf;mcuf:sigma=3.5,init=prior,maxit=7",
            1e-6,
            &[],
        )
        .unwrap()
        {
            let again = parse_filter_list(&s.to_string(), 0.5, &[]).unwrap();
            assert_eq!(again, vec![s]);
        }
    }

    #[test]
    fn bad_specs_are_config_errors() {
        for bad in [
            "kf",
            "ukf:sigma=2",
            "mcuf",
            "mcuf:sigma=abc",
            "mcuf:sigma=-1",
            "mcuf:sigma=2,init=zero",
            "eps=1e-6",
            "mcuf:sigma",
            "hukf:gamma=0",
            "mcuf:sigma=2,eps=0",
        ] {
            assert!(parse_filter_list(bad, 1e-6, &[]).is_err(), "{bad}");
        }
    }

    #[test]
    fn parameter_after_plain_filter_is_rejected() {
        assert!(split_filter_list("ukf,eps=1").is_err());
    }
}
