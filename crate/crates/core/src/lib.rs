//! Continuous-time stochastic filtering for signal–observation systems whose
//! initial condition is correlated with the observation noise.
//!
//! The toolkit covers:
//!
//! - [`corrkernel`]: the deterministic kernels (`g`, `g'`, `lambda`, `r`) that
//!   turn the correlated observation noise into a Brownian motion of the
//!   enlarged filtration;
//! - [`models`]: linear and nonlinear signal–observation models and the
//!   augmented system on `U = (X, Xbar, N)` obtained from them;
//! - [`simulate`]: reproducible Monte Carlo path bundles realizing the
//!   prescribed correlation exactly at the grid level;
//! - [`kalman`]: the anticipative Kalman–Bucy filter on the augmented state,
//!   the classical baseline that ignores the correlation, and a brute-force
//!   Gaussian-conditioning oracle;
//! - [`stability`]: algebraic Riccati fixed points, spectral margins,
//!   detectability/stabilizability tests, decay-rate fits and the Gaussian
//!   Wasserstein distance;
//! - [`volterra`]: finite filters for weighted Volterra observations with
//!   separable kernels;
//! - [`particle`]: a bootstrap particle filter on the augmented system for
//!   nonlinear models;
//! - [`strategy`]: a name-indexed registry of interchangeable filtering
//!   strategies used by the CLI.

pub mod corrkernel;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod kalman;
pub mod linalg;
pub mod models;
pub mod particle;
pub mod rng;
pub mod serial;
pub mod simulate;
pub mod stability;
pub mod strategy;
pub mod volterra;

pub use error::{Error, Result};
pub use grid::TimeGrid;
