//! The Gaussian belief carried by every filter and the system-model
//! abstraction the filters consume.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky};

/// State mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "belief covariance",
                expected: n,
                actual: covariance.nrows().max(covariance.ncols()),
            });
        }
        Ok(Self { mean, covariance })
    }

    pub fn scalar(mean: f64, variance: f64) -> Self {
        Self {
            mean: DVector::from_element(1, mean),
            covariance: DMatrix::from_element(1, 1, variance),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Covariance is symmetric and positive semidefinite within `1e-10`.
    pub fn is_consistent(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite()) && linalg::is_symmetric_psd(&self.covariance)
    }
}

/// A discrete-time nonlinear system with additive noise:
///
/// ```text
/// x(k) = f(k, x(k-1)) + q(k-1)
/// y(k) = h(k, x(k))   + r(k)
/// ```
///
/// `process(k, x)` maps the state at step `k-1` to step `k`. Implementations
/// must be pure.
pub trait SystemModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn measurement_dim(&self) -> usize;

    fn process(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;

    fn measure(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;

    /// Process noise covariance `Q` (n×n, may be zero).
    fn process_noise(&self) -> &DMatrix<f64>;

    /// Measurement noise covariance `R` (m×m, positive definite).
    fn measurement_noise(&self) -> &DMatrix<f64>;

    /// Jacobian of `process` at `x`; needed only by the EKF family.
    fn process_jacobian(&self, _k: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Jacobian of `measure` at `x`; needed only by the EKF family.
    fn measurement_jacobian(&self, _k: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// Checks dimensions, symmetry and definiteness of the model's noise covariances.
pub fn validate_model(model: &dyn SystemModel) -> Result<()> {
    let n = model.state_dim();
    let m = model.measurement_dim();
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput);
    }
    let q = model.process_noise();
    let r = model.measurement_noise();
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "process noise",
            expected: n,
            actual: q.nrows(),
        });
    }
    if r.nrows() != m || r.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "measurement noise",
            expected: m,
            actual: r.nrows(),
        });
    }
    if !linalg::is_symmetric_psd(q) {
        return Err(Error::InvalidParameter("process noise must be symmetric PSD".into()));
    }
    if !linalg::is_symmetric_psd(r) || linalg::min_eigenvalue(r) <= 0.0 {
        return Err(Error::InvalidParameter(
            "measurement noise must be symmetric positive definite".into(),
        ));
    }
    cholesky(r).map(|_| ())
}

/// `x(k) = A·x(k-1) + b`, `y(k) = C·x(k)`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub transition: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub observation: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(
        transition: DMatrix<f64>,
        observation: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Self {
        let n = transition.nrows();
        Self {
            transition,
            offset: DVector::zeros(n),
            observation,
            q,
            r,
        }
    }
}

impl SystemModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    fn measurement_dim(&self) -> usize {
        self.observation.nrows()
    }

    fn process(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.transition * x + &self.offset
    }

    fn measure(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.observation * x
    }

    fn process_noise(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn measurement_noise(&self) -> &DMatrix<f64> {
        &self.r
    }

    fn process_jacobian(&self, _k: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.transition.clone())
    }

    fn measurement_jacobian(&self, _k: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.observation.clone())
    }
}
