//! Comparison filters: EKF, Huber-EKF and Huber-UKF.
//!
//! The Huber variants reuse the whitened regression and gain-form iteration
//! of the MCUF with Huber's `ψ(e)/e` weights in place of the Gaussian kernel.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetrize};
use crate::mcuf::{
    build_regression, finish_update, posterior_covariance, prepare_update, reweighted_update,
    FixedPointTrace, InitMode, IterationSettings, McufConfig, PreparedUpdate, ResidualWeight,
};
use crate::model::{GaussianBelief, SystemModel};
use crate::unscented::{accept_posterior, check_measurement, UTConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuberConfig {
    pub gamma: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl HuberConfig {
    /// 95% asymptotic efficiency under Gaussian noise.
    pub const DEFAULT_GAMMA: f64 = 1.345;

    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Huber threshold must be positive, got {gamma}"
            )));
        }
        Ok(Self {
            gamma,
            epsilon: McufConfig::DEFAULT_EPSILON,
            max_iterations: McufConfig::DEFAULT_MAX_ITERATIONS,
        })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    fn settings(&self) -> Result<IterationSettings> {
        IterationSettings::new(self.epsilon, self.max_iterations, InitMode::LeastSquares)
    }
}

impl Default for HuberConfig {
    fn default() -> Self {
        Self::new(Self::DEFAULT_GAMMA).expect("default gamma is positive")
    }
}

/// Huber weight `ψ(e)/e`: 1 inside the threshold, `γ/|e|` outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberWeight(pub f64);

impl ResidualWeight for HuberWeight {
    fn weight(&self, e: f64) -> f64 {
        let a = e.abs();
        if a <= self.0 {
            1.0
        } else {
            self.0 / a
        }
    }
}

/// Diagonal Huber weight matrix for a residual vector.
pub fn huber_reweight(residuals: &DVector<f64>, gamma: f64) -> DMatrix<f64> {
    let w = HuberWeight(gamma);
    DMatrix::from_diagonal(&residuals.map(|e| w.weight(e)))
}

fn jacobians_missing() -> Error {
    Error::InvalidParameter("model does not provide analytic Jacobians".into())
}

/// First-order time update `x⁻ = f(x)`, `P⁻ = F P Fᵀ + Q`.
pub fn ekf_predict(belief: &GaussianBelief, model: &dyn SystemModel, k: usize) -> Result<GaussianBelief> {
    let f = model
        .process_jacobian(k, &belief.mean)
        .ok_or_else(jacobians_missing)?;
    let mean = model.process(k, &belief.mean);
    if !mean.iter().all(|v| v.is_finite()) || !f.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState("process map"));
    }
    let covariance = symmetrize(&(&f * &belief.covariance * f.transpose() + model.process_noise()));
    Ok(GaussianBelief { mean, covariance })
}

fn linearized_measurement(
    prior: &GaussianBelief,
    model: &dyn SystemModel,
    k: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let h = model
        .measurement_jacobian(k, &prior.mean)
        .ok_or_else(jacobians_missing)?;
    let y_pred = model.measure(k, &prior.mean);
    if !y_pred.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState("measurement map"));
    }
    Ok((y_pred, h))
}

/// One EKF cycle with a Joseph-form covariance update.
pub fn ekf_step(
    belief: &GaussianBelief,
    model: &dyn SystemModel,
    y: &DVector<f64>,
    k: usize,
) -> Result<GaussianBelief> {
    check_measurement(model, y)?;
    let prior = ekf_predict(belief, model, k)?;
    let (y_pred, h) = linearized_measurement(&prior, model, k)?;
    let r = model.measurement_noise();
    let s = symmetrize(&(&h * &prior.covariance * h.transpose() + r));
    let gain = cholesky(&s)?.solve(&(&h * &prior.covariance)).transpose();
    let mean = &prior.mean + &gain * (y - y_pred);
    let covariance = posterior_covariance(&prior.covariance, &h, r, &gain)?;
    accept_posterior(mean, covariance)
}

fn huber_update(
    prepared: PreparedUpdate,
    r: &DMatrix<f64>,
    cfg: &HuberConfig,
) -> Result<(GaussianBelief, FixedPointTrace)> {
    if !(cfg.gamma > 0.0) {
        return Err(Error::InvalidParameter("Huber threshold must be positive".into()));
    }
    let settings = cfg.settings()?;
    let weight = HuberWeight(cfg.gamma);
    let solved = reweighted_update(&prepared.regression, &weight, &settings, |_| {});
    finish_update(&prepared, r, solved, cfg.max_iterations)
}

/// Huber-EKF: EKF linearization, Huber-reweighted regression update.
pub fn hekf_step(
    belief: &GaussianBelief,
    model: &dyn SystemModel,
    cfg: &HuberConfig,
    y: &DVector<f64>,
    k: usize,
) -> Result<(GaussianBelief, FixedPointTrace)> {
    check_measurement(model, y)?;
    let prior = ekf_predict(belief, model, k)?;
    let (y_pred, h) = linearized_measurement(&prior, model, k)?;
    let regression = build_regression(&prior, &h, model.measurement_noise(), y, &y_pred)?;
    huber_update(PreparedUpdate { prior, regression }, model.measurement_noise(), cfg)
}

/// Huber-UKF: UT prior and statistical linearization, Huber-reweighted update.
pub fn hukf_step(
    belief: &GaussianBelief,
    model: &dyn SystemModel,
    ut: &UTConfig,
    cfg: &HuberConfig,
    y: &DVector<f64>,
    k: usize,
) -> Result<(GaussianBelief, FixedPointTrace)> {
    let prepared = prepare_update(belief, model, ut, y, k)?;
    huber_update(prepared, model.measurement_noise(), cfg)
}
