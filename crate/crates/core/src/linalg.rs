//! Dense matrix helpers shared by every filter: jittered Cholesky,
//! symmetrization, triangular solves and PSD checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Number of times the diagonal jitter is doubled before giving up.
pub const MAX_JITTER_DOUBLINGS: u32 = 8;

/// Lower-triangular factor `L` with `A = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn into_lower(self) -> DMatrix<f64> {
        self.lower
    }

    /// Diagonal jitter that had to be added before the factorization succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// `L·Lᵀ`, the (jittered) matrix that was factored.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    /// Solves `L·X = B`.
    pub fn solve_lower(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.lower
            .solve_lower_triangular(rhs)
            .expect("cholesky factor has a strictly positive diagonal")
    }

    pub fn solve_lower_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(rhs)
            .expect("cholesky factor has a strictly positive diagonal")
    }

    /// Solves `A·X = B` with `A = L·Lᵀ`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self.solve_lower(rhs);
        self.lower
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a strictly positive diagonal")
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let y = self.solve_lower_vec(rhs);
        self.lower
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a strictly positive diagonal")
    }

    /// `L⁻¹`, lower triangular.
    pub fn inverse_lower(&self) -> DMatrix<f64> {
        self.solve_lower(&DMatrix::identity(self.dim(), self.dim()))
    }
}

/// `(A + Aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "symmetrize needs a square matrix");
    (a + a.transpose()) * 0.5
}

/// Cholesky factorization of a symmetric matrix.
///
/// The input is symmetrized first. If the plain factorization fails, `δ·I` is
/// added with `δ` starting at `1e-12·trace(A)/n` and doubled up to
/// [`MAX_JITTER_DOUBLINGS`] times.
pub fn cholesky(a: &DMatrix<f64>) -> Result<CholeskyFactor> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "cholesky",
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    let n = a.nrows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite { attempts: 0 });
    }
    let sym = symmetrize(a);
    if let Some(lower) = factor(&sym) {
        return Ok(CholeskyFactor { lower, jitter: 0.0 });
    }

    let trace = sym.trace();
    let mut delta = if trace > 0.0 {
        1e-12 * trace / n as f64
    } else {
        // All-zero (or negative-trace) input: fall back to an absolute floor.
        1e-12
    };
    for _ in 0..=MAX_JITTER_DOUBLINGS {
        let mut jittered = sym.clone();
        for i in 0..n {
            jittered[(i, i)] += delta;
        }
        if let Some(lower) = factor(&jittered) {
            return Ok(CholeskyFactor { lower, jitter: delta });
        }
        delta *= 2.0;
    }
    Err(Error::NotPositiveDefinite {
        attempts: MAX_JITTER_DOUBLINGS + 1,
    })
}

fn factor(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(a.clone())?;
    let lower = chol.unpack();
    if lower.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
        Some(lower)
    } else {
        None
    }
}

/// Frobenius norm of `A - Aᵀ` relative to `‖A‖`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(a));
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Symmetric to `1e-10` relative and no eigenvalue below `-1e-10·‖A‖`.
pub fn is_symmetric_psd(a: &DMatrix<f64>) -> bool {
    if !a.is_square() || a.iter().any(|v| !v.is_finite()) {
        return false;
    }
    asymmetry(a) <= 1e-10 && min_eigenvalue(a) >= -1e-10 * a.norm().max(f64::MIN_POSITIVE)
}

/// Stacks `top` over `bottom`.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

pub fn vstack_vec(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(top.len() + bottom.len());
    out.rows_mut(0, top.len()).copy_from(top);
    out.rows_mut(top.len(), bottom.len()).copy_from(bottom);
    out
}
