//! Maximum correntropy unscented filter.
//!
//! The UT supplies the prior and a statistical linearization `H` of the
//! measurement map. Prior and measurement are then stacked into a whitened
//! linear regression `D = W·x + e` with `E[eeᵀ] = I`, and the posterior mean
//! maximizes `Σ G_σ(dᵢ - wᵢ·x)` over that regression. The maximizer is found
//! by fixed-point iteration in Kalman-gain form: each pass reweights the
//! prior covariance and measurement noise by the inverse kernel weights of the
//! current residuals and recomputes the gain.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::correntropy::{gaussian_kernel, mcc_cost, KernelBandwidth};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetrize, vstack, vstack_vec, CholeskyFactor};
use crate::model::{GaussianBelief, SystemModel};
use crate::unscented::{
    accept_posterior, check_measurement, predict_measurement, time_update, UTConfig,
};

/// Floor applied to kernel weights before they are inverted.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// A relative step above this at the iteration cap is reported as divergence.
pub const DIVERGENCE_STEP: f64 = 1.0;

/// Whitened statistical linear regression `D = W·x + e`.
#[derive(Debug, Clone)]
pub struct RegressionModel {
    pub d: DVector<f64>,
    pub w: DMatrix<f64>,
    /// Measurement slope matrix (m×n).
    pub h: DMatrix<f64>,
    /// Cholesky factor of the prior covariance.
    pub sp: CholeskyFactor,
    /// Cholesky factor of the measurement noise covariance.
    pub sr: CholeskyFactor,
    pub prior_mean: DVector<f64>,
    pub y_pred: DVector<f64>,
    pub y: DVector<f64>,
}

impl RegressionModel {
    pub fn state_dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn measurement_dim(&self) -> usize {
        self.y.len()
    }

    pub fn innovation(&self) -> DVector<f64> {
        &self.y - &self.y_pred
    }

    /// Whitened residuals `D - W·x`.
    pub fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.d - &self.w * x
    }

    /// `(WᵀW)⁻¹WᵀD`.
    pub fn least_squares(&self) -> Result<DVector<f64>> {
        let normal = cholesky(&(self.w.transpose() * &self.w))?;
        Ok(normal.solve_vec(&(self.w.transpose() * &self.d)))
    }

    /// Gain with reweighted prior and noise covariances:
    /// `K = P̃Hᵀ(HP̃Hᵀ + R̃)⁻¹`, `P̃ = S_p C_x⁻¹ S_pᵀ`, `R̃ = S_r C_y⁻¹ S_rᵀ`.
    pub fn weighted_gain(&self, state_weights: &[f64], meas_weights: &[f64]) -> Result<DMatrix<f64>> {
        let p_tilde = scaled_outer(self.sp.lower(), state_weights)?;
        let r_tilde = scaled_outer(self.sr.lower(), meas_weights)?;
        let innovation_cov = symmetrize(&(&self.h * &p_tilde * self.h.transpose() + r_tilde));
        let chol = cholesky(&innovation_cov)?;
        // K = P̃Hᵀ S⁻¹ = (S⁻¹ H P̃)ᵀ
        Ok(chol.solve(&(&self.h * &p_tilde)).transpose())
    }

    /// Gain with all weights equal to one.
    pub fn unweighted_gain(&self) -> Result<DMatrix<f64>> {
        self.weighted_gain(&vec![1.0; self.state_dim()], &vec![1.0; self.measurement_dim()])
    }
}

/// `S·diag(1/c)·Sᵀ`.
fn scaled_outer(s: &DMatrix<f64>, weights: &[f64]) -> Result<DMatrix<f64>> {
    if weights.len() != s.ncols() {
        return Err(Error::DimensionMismatch {
            context: "weight vector",
            expected: s.ncols(),
            actual: weights.len(),
        });
    }
    let mut scaled = s.clone();
    for (j, w) in weights.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / w.max(WEIGHT_FLOOR));
    }
    Ok(symmetrize(&(scaled * s.transpose())))
}

/// `H = (P⁻¹·P_xy)ᵀ`, computed with a Cholesky solve.
pub fn measurement_slope(p_prior: &DMatrix<f64>, p_xy: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if p_xy.nrows() != p_prior.nrows() {
        return Err(Error::DimensionMismatch {
            context: "measurement slope",
            expected: p_prior.nrows(),
            actual: p_xy.nrows(),
        });
    }
    Ok(cholesky(p_prior)?.solve(p_xy).transpose())
}

/// Stacks prior and measurement into the whitened regression.
pub fn build_regression(
    prior: &GaussianBelief,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
    y_pred: &DVector<f64>,
) -> Result<RegressionModel> {
    let n = prior.dim();
    let m = y.len();
    if h.nrows() != m || h.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "slope matrix",
            expected: m * n,
            actual: h.nrows() * h.ncols(),
        });
    }
    if r.nrows() != m || y_pred.len() != m {
        return Err(Error::DimensionMismatch {
            context: "measurement block",
            expected: m,
            actual: if r.nrows() != m { r.nrows() } else { y_pred.len() },
        });
    }
    let sp = cholesky(&prior.covariance)?;
    let sr = cholesky(r)?;

    let lifted = y - y_pred + h * &prior.mean;
    let d = vstack_vec(&sp.solve_lower_vec(&prior.mean), &sr.solve_lower_vec(&lifted));
    let w = vstack(&sp.inverse_lower(), &sr.solve_lower(h));

    Ok(RegressionModel {
        d,
        w,
        h: h.clone(),
        sp,
        sr,
        prior_mean: prior.mean.clone(),
        y_pred: y_pred.clone(),
        y: y.clone(),
    })
}

/// Starting point of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Prior,
    #[default]
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McufConfig {
    pub sigma: KernelBandwidth,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub init_mode: InitMode,
}

impl McufConfig {
    pub const DEFAULT_EPSILON: f64 = 1e-6;
    pub const DEFAULT_MAX_ITERATIONS: usize = 50;

    pub fn new(sigma: f64) -> Result<Self> {
        Ok(Self {
            sigma: KernelBandwidth::new(sigma)?,
            epsilon: Self::DEFAULT_EPSILON,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            init_mode: InitMode::LeastSquares,
        })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_init(mut self, init_mode: InitMode) -> Self {
        self.init_mode = init_mode;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn iteration(&self) -> Result<IterationSettings> {
        IterationSettings::new(self.epsilon, self.max_iterations, self.init_mode)
    }
}

/// Stopping rule and initialization shared by the reweighted solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSettings {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub init_mode: InitMode,
}

impl IterationSettings {
    pub fn new(epsilon: f64, max_iterations: usize, init_mode: InitMode) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "convergence threshold must be positive, got {epsilon}"
            )));
        }
        if max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        Ok(Self {
            epsilon,
            max_iterations,
            init_mode,
        })
    }
}

/// Per-residual weight function of an iteratively reweighted update.
pub trait ResidualWeight {
    fn weight(&self, residual: f64) -> f64;
}

impl ResidualWeight for KernelBandwidth {
    fn weight(&self, residual: f64) -> f64 {
        gaussian_kernel(residual, *self)
    }
}

/// Outcome bookkeeping of one fixed-point solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointTrace {
    pub iterations: usize,
    pub converged: bool,
    /// The step fell back to the least-squares solution after divergence.
    pub fell_back: bool,
    /// Diagonals of `C̃_x` then `C̃_y` used for the final gain.
    pub final_weights: Vec<f64>,
    /// Cost `Σ weight(eᵢ)`-style objective at the initial iterate (MCC only).
    pub initial_cost: Option<f64>,
    pub final_cost: Option<f64>,
    pub last_step: f64,
}

/// State of one pass of the fixed-point loop, handed to observers.
#[derive(Debug)]
pub struct IterationRecord<'a> {
    pub iteration: usize,
    pub previous: &'a DVector<f64>,
    pub state_weights: &'a [f64],
    pub measurement_weights: &'a [f64],
    pub estimate: &'a DVector<f64>,
    pub gain: &'a DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ReweightedSolution {
    pub mean: DVector<f64>,
    pub gain: DMatrix<f64>,
    pub trace: FixedPointTrace,
}

fn relative_step(current: &DVector<f64>, previous: &DVector<f64>) -> f64 {
    let step = (current - previous).norm();
    let base = previous.norm();
    if base == 0.0 {
        step
    } else {
        step / base
    }
}

/// Iteratively reweighted update in gain form for an arbitrary weight function.
///
/// Returns [`Error::Diverged`] when the iteration cap is reached and the last
/// relative step still exceeds [`DIVERGENCE_STEP`].
pub fn reweighted_update<W, O>(
    reg: &RegressionModel,
    weight: &W,
    settings: &IterationSettings,
    mut observer: O,
) -> Result<ReweightedSolution>
where
    W: ResidualWeight + ?Sized,
    O: FnMut(&IterationRecord<'_>),
{
    let n = reg.state_dim();
    let innovation = reg.innovation();
    let mut previous = match settings.init_mode {
        InitMode::Prior => reg.prior_mean.clone(),
        InitMode::LeastSquares => reg.least_squares()?,
    };

    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    let mut converged = false;
    let mut weights = Vec::new();
    let mut gain = DMatrix::zeros(n, reg.measurement_dim());

    while iterations < settings.max_iterations {
        iterations += 1;
        weights = reg
            .residuals(&previous)
            .iter()
            .map(|e| weight.weight(*e).max(WEIGHT_FLOOR))
            .collect();
        let (cx, cy) = weights.split_at(n);
        gain = reg.weighted_gain(cx, cy)?;
        let estimate = &reg.prior_mean + &gain * &innovation;
        if !estimate.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState("fixed-point iterate"));
        }
        observer(&IterationRecord {
            iteration: iterations,
            previous: &previous,
            state_weights: cx,
            measurement_weights: cy,
            estimate: &estimate,
            gain: &gain,
        });
        last_step = relative_step(&estimate, &previous);
        previous = estimate;
        if last_step <= settings.epsilon {
            converged = true;
            break;
        }
    }

    if !converged && last_step > DIVERGENCE_STEP {
        return Err(Error::Diverged {
            iterations,
            last_step,
        });
    }

    Ok(ReweightedSolution {
        mean: previous,
        gain,
        trace: FixedPointTrace {
            iterations,
            converged,
            fell_back: false,
            final_weights: weights,
            initial_cost: None,
            final_cost: None,
            last_step,
        },
    })
}

/// MCC fixed-point measurement update. The trace records the MCC cost at the
/// initial and final iterates.
pub fn fixed_point_update(reg: &RegressionModel, cfg: &McufConfig) -> Result<ReweightedSolution> {
    fixed_point_update_observed(reg, cfg, |_| {})
}

pub fn fixed_point_update_observed<O>(
    reg: &RegressionModel,
    cfg: &McufConfig,
    observer: O,
) -> Result<ReweightedSolution>
where
    O: FnMut(&IterationRecord<'_>),
{
    let mut observer = observer;
    let settings = cfg.iteration()?;
    let mut start = None;
    let mut solution = reweighted_update(reg, &cfg.sigma, &settings, |rec| {
        if rec.iteration == 1 {
            start = Some(rec.previous.clone());
        }
        observer(rec);
    })?;
    let start = start.expect("at least one iteration runs");
    solution.trace.initial_cost = Some(mcc_cost(reg.residuals(&start).as_slice(), cfg.sigma)?);
    solution.trace.final_cost = Some(mcc_cost(reg.residuals(&solution.mean).as_slice(), cfg.sigma)?);
    Ok(solution)
}

/// Solves the weighted regression two ways: directly as
/// `(WᵀCW)⁻¹WᵀCD` and through the reweighted Kalman gain. Returns
/// `(matrix_form, gain_form)`.
pub fn gain_form_equivalence(
    reg: &RegressionModel,
    state_weights: &[f64],
    meas_weights: &[f64],
) -> Result<(DVector<f64>, DVector<f64>)> {
    if state_weights.len() != reg.state_dim() || meas_weights.len() != reg.measurement_dim() {
        return Err(Error::DimensionMismatch {
            context: "weight vector",
            expected: reg.state_dim() + reg.measurement_dim(),
            actual: state_weights.len() + meas_weights.len(),
        });
    }
    if state_weights.iter().chain(meas_weights).any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidParameter("weights must be strictly positive".into()));
    }
    let c: Vec<f64> = state_weights.iter().chain(meas_weights).copied().collect();
    let mut cw = reg.w.clone();
    for (i, ci) in c.iter().enumerate() {
        cw.row_mut(i).scale_mut(*ci);
    }
    let normal = cholesky(&(reg.w.transpose() * &cw))?;
    let matrix_form = normal.solve_vec(&(cw.transpose() * &reg.d));

    let gain = reg.weighted_gain(state_weights, meas_weights)?;
    let gain_form = &reg.prior_mean + gain * reg.innovation();
    Ok((matrix_form, gain_form))
}

/// Joseph-form update `(I-KH)P(I-KH)ᵀ + KRKᵀ`, symmetrized.
pub fn posterior_covariance(
    p_prior: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    gain: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = p_prior.nrows();
    let m = r.nrows();
    if h.nrows() != m || h.ncols() != n || gain.nrows() != n || gain.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "posterior covariance",
            expected: n * m,
            actual: gain.nrows() * gain.ncols(),
        });
    }
    let a = DMatrix::identity(n, n) - gain * h;
    Ok(symmetrize(
        &(&a * p_prior * a.transpose() + gain * r * gain.transpose()),
    ))
}

/// Everything the measurement update needs: the UT prior and the regression.
#[derive(Debug, Clone)]
pub struct PreparedUpdate {
    pub prior: GaussianBelief,
    pub regression: RegressionModel,
}

/// Time update, measurement prediction, slope and whitened regression.
pub fn prepare_update(
    belief: &GaussianBelief,
    model: &dyn SystemModel,
    ut: &UTConfig,
    y: &DVector<f64>,
    k: usize,
) -> Result<PreparedUpdate> {
    check_measurement(model, y)?;
    let prior = time_update(belief, model, ut, k)?;
    let pred = predict_measurement(&prior, model, ut, k)?;
    let h = measurement_slope(&prior.covariance, &pred.cross_covariance)?;
    let regression = build_regression(&prior, &h, model.measurement_noise(), y, &pred.mean)?;
    Ok(PreparedUpdate { prior, regression })
}

/// Finishes a reweighted update: least-squares fallback on divergence, then
/// the Joseph covariance with the final gain.
pub(crate) fn finish_update(
    prepared: &PreparedUpdate,
    r: &DMatrix<f64>,
    solved: Result<ReweightedSolution>,
    max_iterations: usize,
) -> Result<(GaussianBelief, FixedPointTrace)> {
    let reg = &prepared.regression;
    let solution = match solved {
        Ok(s) => s,
        Err(Error::Diverged { iterations, last_step }) => {
            let gain = reg.unweighted_gain()?;
            ReweightedSolution {
                mean: &reg.prior_mean + &gain * reg.innovation(),
                gain,
                trace: FixedPointTrace {
                    iterations: iterations.min(max_iterations),
                    converged: false,
                    fell_back: true,
                    final_weights: vec![1.0; reg.state_dim() + reg.measurement_dim()],
                    initial_cost: None,
                    final_cost: None,
                    last_step,
                },
            }
        }
        Err(e) => return Err(e),
    };
    let covariance = posterior_covariance(&prepared.prior.covariance, &reg.h, r, &solution.gain)?;
    Ok((accept_posterior(solution.mean, covariance)?, solution.trace))
}

/// One MCUF predict/update cycle for measurement `y` at step `k`.
pub fn mcuf_step(
    belief: &GaussianBelief,
    model: &dyn SystemModel,
    ut: &UTConfig,
    cfg: &McufConfig,
    y: &DVector<f64>,
    k: usize,
) -> Result<(GaussianBelief, FixedPointTrace)> {
    let prepared = prepare_update(belief, model, ut, y, k)?;
    let solved = fixed_point_update(&prepared.regression, cfg);
    finish_update(&prepared, model.measurement_noise(), solved, cfg.max_iterations)
}
