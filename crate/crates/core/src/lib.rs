//! Robust nonlinear state estimation with the maximum correntropy unscented
//! filter (MCUF), plus UKF, EKF, Huber-EKF and Huber-UKF baselines and a
//! Monte Carlo harness for the UNGM and falling-body benchmarks.
//!
//! ```
//! use mcuf_core::benchmarks::Ungm;
//! use mcuf_core::mcuf::{mcuf_step, McufConfig};
//! use mcuf_core::model::GaussianBelief;
//! use mcuf_core::unscented::UTConfig;
//! use nalgebra::DVector;
//!
//! let model = Ungm::new(1.0, 1.0);
//! let belief = GaussianBelief::scalar(0.0, 1.0);
//! let y = DVector::from_element(1, 3.2);
//! let (posterior, trace) = mcuf_step(
//!     &belief,
//!     &model,
//!     &UTConfig::default(),
//!     &McufConfig::new(2.0).unwrap(),
//!     &y,
//!     1,
//! )
//! .unwrap();
//! assert!(trace.converged);
//! assert!(posterior.is_consistent());
//! ```

pub mod baselines;
pub mod benchmarks;
pub mod correntropy;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mcuf;
pub mod model;
pub mod parallel;
pub mod unscented;

pub use error::{Error, Result};
