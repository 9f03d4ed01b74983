//! Gaussian-kernel correntropy and the MCC cost.

use crate::error::{Error, Result};

/// Gaussian kernel bandwidth `σ > 0`, in units of the whitened residual.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct KernelBandwidth(f64);

impl KernelBandwidth {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && !sigma.is_nan() {
            Ok(Self(sigma))
        } else {
            Err(Error::InvalidParameter(format!(
                "kernel bandwidth must be positive, got {sigma}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `exp(-e²/(2σ²))`. Not clamped: extreme residuals may underflow to exactly 0.
#[inline]
pub fn gaussian_kernel(e: f64, sigma: KernelBandwidth) -> f64 {
    let s = sigma.0;
    (-(e * e) / (2.0 * s * s)).exp()
}

/// Sample-mean correntropy estimate `(1/N) Σ G_σ(x(i) - y(i))`.
pub fn sample_correntropy(x: &[f64], y: &[f64], sigma: KernelBandwidth) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| gaussian_kernel(a - b, sigma))
        .sum();
    Ok(total / x.len() as f64)
}

/// MCC cost `J_L = Σᵢ G_σ(eᵢ)` over the whitened regression residuals.
pub fn mcc_cost(residuals: &[f64], sigma: KernelBandwidth) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(residuals.iter().map(|e| gaussian_kernel(*e, sigma)).sum())
}
