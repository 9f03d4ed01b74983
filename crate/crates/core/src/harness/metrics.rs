//! Monte Carlo error aggregates: per-step MSE₁(k), per-run MSE₂(m) and the
//! overall MSE, each per state component.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MseSummary {
    /// `[component][k]`, averaged over runs.
    pub per_step: Vec<Vec<f64>>,
    /// `[component][m]`, averaged over steps.
    pub per_run: Vec<Vec<f64>>,
    /// `[component]`, the mean of `per_run`.
    pub overall: Vec<f64>,
}

impl MseSummary {
    /// Aggregates squared errors laid out as `[run][step * n + component]`.
    pub fn from_squared_errors(squared: &[Vec<f64>], steps: usize, n: usize) -> Result<Self> {
        let runs = squared.len();
        if runs == 0 || steps == 0 || n == 0 {
            return Err(Error::ShapeMismatch("need at least one run, step and component".into()));
        }
        if let Some(bad) = squared.iter().find(|r| r.len() != steps * n) {
            return Err(Error::ShapeMismatch(format!(
                "run has {} squared errors, expected {}",
                bad.len(),
                steps * n
            )));
        }
        let mut per_step = vec![vec![0.0; steps]; n];
        let mut per_run = vec![vec![0.0; runs]; n];
        for (m, run) in squared.iter().enumerate() {
            for k in 0..steps {
                for c in 0..n {
                    let e = run[k * n + c];
                    per_step[c][k] += e;
                    per_run[c][m] += e;
                }
            }
        }
        for c in 0..n {
            per_step[c].iter_mut().for_each(|v| *v /= runs as f64);
            per_run[c].iter_mut().for_each(|v| *v /= steps as f64);
        }
        let overall = per_run
            .iter()
            .map(|r| r.iter().sum::<f64>() / runs as f64)
            .collect();
        Ok(Self {
            per_step,
            per_run,
            overall,
        })
    }

    pub fn components(&self) -> usize {
        self.overall.len()
    }

    /// Largest relative gap between the three ways of computing the overall MSE.
    pub fn double_average_gap(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for c in 0..self.components() {
            let by_step = mean(&self.per_step[c]);
            let by_run = mean(&self.per_run[c]);
            let scale = self.overall[c].abs().max(f64::MIN_POSITIVE);
            worst = worst
                .max((by_step - self.overall[c]).abs() / scale)
                .max((by_run - self.overall[c]).abs() / scale);
        }
        worst
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Squared-error aggregates of estimates against truth, both `[run][step]`.
pub fn mse_metrics(truth: &[Vec<DVector<f64>>], estimates: &[Vec<DVector<f64>>]) -> Result<MseSummary> {
    if truth.len() != estimates.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} truth runs vs {} estimate runs",
            truth.len(),
            estimates.len()
        )));
    }
    let steps = truth.first().map_or(0, Vec::len);
    let n = truth.first().and_then(|r| r.first()).map_or(0, |x| x.len());
    let mut squared = Vec::with_capacity(truth.len());
    for (t_run, e_run) in truth.iter().zip(estimates) {
        if t_run.len() != steps || e_run.len() != steps {
            return Err(Error::ShapeMismatch("runs have different step counts".into()));
        }
        let mut sq = Vec::with_capacity(steps * n);
        for (t, e) in t_run.iter().zip(e_run) {
            if t.len() != n || e.len() != n {
                return Err(Error::ShapeMismatch("state vectors have different lengths".into()));
            }
            sq.extend(t.iter().zip(e.iter()).map(|(a, b)| (a - b) * (a - b)));
        }
        squared.push(sq);
    }
    MseSummary::from_squared_errors(&squared, steps, n)
}
