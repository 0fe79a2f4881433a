//! Weak and strong convergence studies for the theta-scheme applied to the
//! stochastic heat equation `dX + A X dt = Q^{1/2} dW` on `(0, 1)`.
//!
//! Errors are computed from exact Gaussian laws wherever possible; Monte
//! Carlo is used only as a cross-check.

pub mod covariance;
pub mod error;
pub mod fem1d;
pub mod law;
pub mod linalg;
pub mod mc;
pub mod rate;
pub mod spectral;
pub mod study;

pub use covariance::{CovarianceModel, NoiseSpec, RegularityIndices};
pub use error::{Error, Hypothesis, Result};
pub use fem1d::{DiscreteSpace, SpaceVariant};
pub use law::{Functional, GaussianState};
pub use rate::{fit_rate, RateFit};
pub use spectral::{SpectralModel, ThetaScheme};
