//! Cubature Kalman filtering over an abstract discrete-time model.
//!
//! The recursion is split into a time prediction ([`time_predict`]) and a
//! measurement update. Two updates ship: the classical cubature update
//! ([`ckf_update`]) and a Huber-reweighted variant ([`rckf_update`]) that
//! inflates the measurement covariance of channels whose standardized
//! innovation exceeds the Huber threshold. Both are exposed as
//! [`UpdateStrategy`] trait objects and registered by name in a
//! [`FilterRegistry`], which is how the scenario runner and the CLI pick them.

mod cubature;
mod huber;
mod run;
mod strategy;
#[cfg(test)]
mod testing;

pub use cubature::{ckf_update, cubature_points, time_predict, CubatureSet, UpdateIntermediates};
pub use huber::{huber_cost, huber_reweight, huber_weight, rckf_update, HuberConfig, HuberResult};
pub use run::{run_filter, run_filter_observed, FilterRun, StepError};
pub use strategy::{CkfStrategy, FilterRegistry, RckfStrategy, UpdateOutcome, UpdateStrategy};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, LinalgError};

/// Nonlinear discrete-time state-space model `x' = f(x, u)`, `z = h(x, u)`.
///
/// Implementations must be deterministic and return vectors of length
/// [`state_dim`](Self::state_dim) and [`measurement_dim`](Self::measurement_dim).
pub trait ProcessModel {
    fn state_dim(&self) -> usize;
    fn measurement_dim(&self) -> usize;
    fn transition(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn observe(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("{what}: {source}")]
    DecompositionFailure {
        what: &'static str,
        #[source]
        source: LinalgError,
    },
    #[error("non-finite value in {0}")]
    NonFiniteState(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("innovation variance of channel {channel} is not positive ({value:e})")]
    DegenerateChannel { channel: usize, value: f64 },
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("measurement covariance must be diagonal")]
    NonDiagonalNoise,
    #[error("unknown filter variant `{0}`")]
    UnknownVariant(String),
}

/// State estimate and error covariance at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub step_index: usize,
}

impl FilterState {
    pub fn new(x_hat: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        Self {
            x_hat,
            covariance,
            step_index: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x_hat.len()
    }

    /// Symmetry holds to `1e-12 · max|P|` and the smallest eigenvalue is
    /// above `-1e-10 · trace(P)`.
    pub fn is_healthy(&self) -> bool {
        let p = &self.covariance;
        let scale = linalg::max_abs(p);
        let asym = linalg::max_abs(&(p - p.transpose()));
        let trace = p.trace();
        asym <= 1e-12 * scale && linalg::min_eigenvalue(p) >= -1e-10 * trace.abs()
    }
}

/// Process and measurement noise covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCovariances {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl NoiseCovariances {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self, FilterError> {
        if q.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(FilterError::NonFiniteState("noise covariance"));
        }
        if linalg::min_eigenvalue(&q) < -1e-12 * q.trace().abs() {
            return Err(FilterError::InvalidConfig("Q must be positive semidefinite".into()));
        }
        linalg::cholesky_lower(&r).map_err(|source| FilterError::DecompositionFailure {
            what: "measurement covariance R",
            source,
        })?;
        Ok(Self { q, r })
    }
}

fn check_finite_vec(v: &DVector<f64>, what: &'static str) -> Result<(), FilterError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(FilterError::NonFiniteState(what))
    }
}

fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<(), FilterError> {
    if expected == actual {
        Ok(())
    } else {
        Err(FilterError::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}
