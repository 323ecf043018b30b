//! Dynamic state estimation of a synchronous machine with cubature Kalman
//! filters.
//!
//! - [`filter`]: generic cubature prediction plus the classical and
//!   Huber-robustified measurement updates, selectable by name.
//! - [`machine`]: fourth-order machine dynamics, PMU measurement model and
//!   measurement covariance.
//! - [`noise`]: seeded Gaussian, Laplace and Cauchy noise plus outlier
//!   injection.
//! - [`scenario`]: steady-state initialization, fault profiles, truth
//!   rollout and end-to-end filter runs.
//! - [`metrics`]: estimation-accuracy indicators and relative improvement.

pub mod filter;
pub mod linalg;
pub mod linear;
pub mod machine;
pub mod metrics;
pub mod noise;
pub mod scenario;
