//! Unscented transformation and the standard unscented Kalman filter.
//!
//! Sigma points are placed symmetrically around the mean along the columns
//! of the lower Cholesky factor of `(n+λ)P`, with `λ = α²(n+φ) - n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, is_symmetric_psd, symmetrize};
use crate::model::{GaussianBelief, SystemModel};

/// Unscented transform parameters. `phi = None` means the usual `3 - n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTConfig {
    pub alpha: f64,
    pub beta: f64,
    pub phi: Option<f64>,
}

impl Default for UTConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            phi: None,
        }
    }
}

impl UTConfig {
    pub fn phi_for(&self, n: usize) -> f64 {
        self.phi.unwrap_or(3.0 - n as f64)
    }
}

/// `λ = α²(n+φ) - n`; fails unless `n + λ > 0`.
pub fn scaling_factor(n: usize, cfg: &UTConfig) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if !(cfg.alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "UT alpha must be positive, got {}",
            cfg.alpha
        )));
    }
    let nf = n as f64;
    let lambda = cfg.alpha * cfg.alpha * (nf + cfg.phi_for(n)) - nf;
    if nf + lambda <= 0.0 {
        return Err(Error::InvalidScaling(nf + lambda));
    }
    Ok(lambda)
}

/// `2n+1` sigma points with their mean and covariance weights.
#[derive(Debug, Clone)]
pub struct SigmaPointSet {
    pub points: Vec<DVector<f64>>,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

impl SigmaPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    /// `Σ wmᵢ·χᵢ`.
    pub fn mean(&self) -> DVector<f64> {
        weighted_mean(&self.wm, &self.points)
    }
}

pub fn generate_sigma_points(belief: &GaussianBelief, cfg: &UTConfig) -> Result<SigmaPointSet> {
    let n = belief.dim();
    let lambda = scaling_factor(n, cfg)?;
    let spread = n as f64 + lambda;
    let root = cholesky(&(&belief.covariance * spread))?.into_lower();

    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(belief.mean.clone());
    for i in 0..n {
        points.push(&belief.mean + root.column(i));
    }
    for i in 0..n {
        points.push(&belief.mean - root.column(i));
    }

    let w = 1.0 / (2.0 * spread);
    let mut wm = vec![w; 2 * n + 1];
    let mut wc = vec![w; 2 * n + 1];
    wm[0] = lambda / spread;
    wc[0] = lambda / spread + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
    Ok(SigmaPointSet { points, wm, wc })
}

fn weighted_mean(weights: &[f64], values: &[DVector<f64>]) -> DVector<f64> {
    let mut mean = DVector::zeros(values[0].len());
    for (w, v) in weights.iter().zip(values) {
        mean.axpy(*w, v, 1.0);
    }
    mean
}

/// Applies `map` to every sigma point, failing on non-finite output.
pub fn propagate<F>(set: &SigmaPointSet, mut map: F, what: &'static str) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    set.points
        .iter()
        .map(|p| {
            let out = map(p);
            if out.iter().all(|v| v.is_finite()) {
                Ok(out)
            } else {
                Err(Error::NonFiniteState(what))
            }
        })
        .collect()
}

/// Weighted mean and covariance of already-propagated points, plus `additive_cov`.
pub fn weighted_moments(
    set: &SigmaPointSet,
    mapped: &[DVector<f64>],
    additive_cov: Option<&DMatrix<f64>>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if mapped.len() != set.len() || mapped.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "propagated sigma points",
            expected: set.len(),
            actual: mapped.len(),
        });
    }
    let dim = mapped[0].len();
    if mapped.iter().any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            context: "propagated sigma point length",
            expected: dim,
            actual: mapped.iter().map(|v| v.len()).find(|l| *l != dim).unwrap_or(dim),
        });
    }
    let mean = weighted_mean(&set.wm, mapped);
    let mut cov = DMatrix::zeros(dim, dim);
    for (w, v) in set.wc.iter().zip(mapped) {
        let d = v - &mean;
        cov.ger(*w, &d, &d, 1.0);
    }
    if let Some(extra) = additive_cov {
        if extra.nrows() != dim || extra.ncols() != dim {
            return Err(Error::DimensionMismatch {
                context: "additive covariance",
                expected: dim,
                actual: extra.nrows(),
            });
        }
        cov += extra;
    }
    Ok((mean, symmetrize(&cov)))
}

/// Mean and covariance of `map(x)` estimated from the sigma points.
pub fn unscented_moments<F>(
    set: &SigmaPointSet,
    map: F,
    additive_cov: Option<&DMatrix<f64>>,
) -> Result<(DVector<f64>, DMatrix<f64>)>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let mapped = propagate(set, map, "unscented map")?;
    weighted_moments(set, &mapped, additive_cov)
}

/// `P_xy = Σ wcᵢ (χᵢ - x̂)(γᵢ - ŷ)ᵀ`.
pub fn cross_covariance(
    set: &SigmaPointSet,
    prior_mean: &DVector<f64>,
    mapped: &[DVector<f64>],
    mapped_mean: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if mapped.len() != set.len() {
        return Err(Error::DimensionMismatch {
            context: "cross covariance",
            expected: set.len(),
            actual: mapped.len(),
        });
    }
    if prior_mean.len() != set.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "cross covariance prior mean",
            expected: set.state_dim(),
            actual: prior_mean.len(),
        });
    }
    let m = mapped_mean.len();
    let mut pxy = DMatrix::zeros(prior_mean.len(), m);
    for ((w, chi), gamma) in set.wc.iter().zip(&set.points).zip(mapped) {
        if gamma.len() != m {
            return Err(Error::DimensionMismatch {
                context: "cross covariance mapped point",
                expected: m,
                actual: gamma.len(),
            });
        }
        pxy.ger(*w, &(chi - prior_mean), &(gamma - mapped_mean), 1.0);
    }
    Ok(pxy)
}

/// UT time update: propagate the posterior at `k-1` through `f(k, ·)` and add `Q`.
pub fn time_update(
    belief: &GaussianBelief,
    model: &dyn SystemModel,
    cfg: &UTConfig,
    k: usize,
) -> Result<GaussianBelief> {
    let set = generate_sigma_points(belief, cfg)?;
    let mapped = propagate(&set, |x| model.process(k, x), "process map")?;
    let (mean, covariance) = weighted_moments(&set, &mapped, Some(model.process_noise()))?;
    Ok(GaussianBelief { mean, covariance })
}

/// UT measurement prediction from a prior, without the measurement noise term.
#[derive(Debug, Clone)]
pub struct MeasurementPrediction {
    pub sigma_points: SigmaPointSet,
    pub mapped: Vec<DVector<f64>>,
    /// `ŷ`
    pub mean: DVector<f64>,
    /// `Σ wc (γ - ŷ)(γ - ŷ)ᵀ`, no `R`.
    pub covariance: DMatrix<f64>,
    /// `P_xy`
    pub cross_covariance: DMatrix<f64>,
}

/// Redraws sigma points from the prior and pushes them through `h(k, ·)`.
pub fn predict_measurement(
    prior: &GaussianBelief,
    model: &dyn SystemModel,
    cfg: &UTConfig,
    k: usize,
) -> Result<MeasurementPrediction> {
    let set = generate_sigma_points(prior, cfg)?;
    let mapped = propagate(&set, |x| model.measure(k, x), "measurement map")?;
    let (mean, covariance) = weighted_moments(&set, &mapped, None)?;
    let cross = cross_covariance(&set, &prior.mean, &mapped, &mean)?;
    Ok(MeasurementPrediction {
        sigma_points: set,
        mapped,
        mean,
        covariance,
        cross_covariance: cross,
    })
}

pub(crate) fn check_measurement(model: &dyn SystemModel, y: &DVector<f64>) -> Result<()> {
    if y.len() != model.measurement_dim() {
        return Err(Error::DimensionMismatch {
            context: "measurement",
            expected: model.measurement_dim(),
            actual: y.len(),
        });
    }
    Ok(())
}

pub(crate) fn accept_posterior(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<GaussianBelief> {
    let covariance = symmetrize(&covariance);
    if !mean.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState("posterior mean"));
    }
    if !is_symmetric_psd(&covariance) {
        return Err(Error::NotPositiveDefinite { attempts: 0 });
    }
    Ok(GaussianBelief { mean, covariance })
}

/// One UKF predict/update cycle for measurement `y` at step `k`.
pub fn ukf_step(
    belief: &GaussianBelief,
    model: &dyn SystemModel,
    cfg: &UTConfig,
    y: &DVector<f64>,
    k: usize,
) -> Result<GaussianBelief> {
    check_measurement(model, y)?;
    let prior = time_update(belief, model, cfg, k)?;
    let pred = predict_measurement(&prior, model, cfg, k)?;
    let pyy = symmetrize(&(&pred.covariance + model.measurement_noise()));
    let pyy_chol = cholesky(&pyy)?;
    // K = P_xy P_yy⁻¹ = (P_yy⁻¹ P_xyᵀ)ᵀ
    let gain = pyy_chol.solve(&pred.cross_covariance.transpose()).transpose();
    let mean = &prior.mean + &gain * (y - &pred.mean);
    let covariance = &prior.covariance - &gain * &pyy * gain.transpose();
    accept_posterior(mean, covariance)
}
