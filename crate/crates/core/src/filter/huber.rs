use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cubature::{check_measurement, MeasurementMoments, UpdateIntermediates};
use super::{FilterError, FilterState, ProcessModel};

/// Huber threshold and the number of reweighting passes per update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HuberConfig {
    pub c: f64,
    pub max_reweight_passes: usize,
}

impl Default for HuberConfig {
    fn default() -> Self {
        Self {
            c: 1.5,
            max_reweight_passes: 1,
        }
    }
}

impl HuberConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(FilterError::InvalidConfig(format!(
                "huber threshold c must be positive, got {}",
                self.c
            )));
        }
        if self.max_reweight_passes == 0 {
            return Err(FilterError::InvalidConfig(
                "max_reweight_passes must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-channel outcome of one Huber reweighting.
#[derive(Debug, Clone, PartialEq)]
pub struct HuberResult {
    pub standardized_residuals: DVector<f64>,
    pub weights: DVector<f64>,
    pub r_bar: DMatrix<f64>,
}

impl HuberResult {
    pub fn all_inliers(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }
}

/// Huber weight: 1 inside the threshold, `c / |r|` outside.
pub fn huber_weight(residual: f64, c: f64) -> f64 {
    let a = residual.abs();
    if a <= c {
        1.0
    } else {
        c / a
    }
}

/// Huber score: quadratic inside the threshold, linear outside.
pub fn huber_cost(residual: f64, c: f64) -> f64 {
    let a = residual.abs();
    if a <= c {
        0.5 * a * a
    } else {
        c * a - 0.5 * c * c
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Standardizes the innovation by the innovation standard deviations and
/// inflates each diagonal entry of `r` by the inverse Huber weight.
pub fn huber_reweight(
    innovation: &DVector<f64>,
    innovation_cov: &DMatrix<f64>,
    r: &DMatrix<f64>,
    cfg: &HuberConfig,
) -> Result<HuberResult, FilterError> {
    cfg.validate()?;
    let m = innovation.len();
    if innovation_cov.nrows() != m || r.nrows() != m {
        return Err(FilterError::DimensionMismatch {
            what: "huber inputs",
            expected: m,
            actual: innovation_cov.nrows().min(r.nrows()),
        });
    }
    if !is_diagonal(r) {
        return Err(FilterError::NonDiagonalNoise);
    }
    let mut standardized = DVector::zeros(m);
    let mut weights = DVector::zeros(m);
    let mut r_bar = DMatrix::zeros(m, m);
    for i in 0..m {
        let var = innovation_cov[(i, i)];
        if !(var > 0.0) {
            return Err(FilterError::DegenerateChannel {
                channel: i,
                value: var,
            });
        }
        let rs = innovation[i] / var.sqrt();
        let w = huber_weight(rs, cfg.c);
        standardized[i] = rs;
        weights[i] = w;
        // p̄ᵢᵢ = wᵢ / Rᵢᵢ and R̄ = P̄⁻¹
        r_bar[(i, i)] = if w == 1.0 { r[(i, i)] } else { r[(i, i)] / w };
    }
    Ok(HuberResult {
        standardized_residuals: standardized,
        weights,
        r_bar,
    })
}

/// Cubature update with the measurement covariance replaced by its
/// Huber-corrected version.
///
/// The predicted measurement and cross-covariance are computed once; only
/// the innovation covariance is rebuilt with `R̄`. Extra passes
/// (`max_reweight_passes > 1`) restandardize against the rebuilt innovation
/// covariance, always scaling the original `r`.
pub fn rckf_update(
    pred: &FilterState,
    z: &DVector<f64>,
    model: &dyn ProcessModel,
    u: &DVector<f64>,
    r: &DMatrix<f64>,
    cfg: &HuberConfig,
) -> Result<(FilterState, UpdateIntermediates, HuberResult), FilterError> {
    cfg.validate()?;
    check_measurement(model, z, r)?;
    let moments = MeasurementMoments::compute(pred, model, u)?;
    let innovation = z - &moments.z_hat;
    let mut pzz = moments.innovation_cov(r);
    let mut huber = huber_reweight(&innovation, &pzz, r, cfg)?;
    for _ in 1..cfg.max_reweight_passes {
        pzz = moments.innovation_cov(&huber.r_bar);
        let next = huber_reweight(&innovation, &pzz, r, cfg)?;
        let settled = next.weights == huber.weights;
        huber = next;
        if settled {
            break;
        }
    }
    let (post, inter) = moments.finish(pred, z, &huber.r_bar)?;
    Ok((post, inter, huber))
}
