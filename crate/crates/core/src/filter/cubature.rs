use nalgebra::{DMatrix, DVector};

use super::{check_dim, check_finite_vec, FilterError, FilterState, ProcessModel};
use crate::linalg::{self, CholeskyFactor};

/// The 2n equally weighted points of the third-degree spherical-radial rule.
#[derive(Debug, Clone)]
pub struct CubatureSet {
    pub points: Vec<DVector<f64>>,
    pub weight: f64,
}

impl CubatureSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> DVector<f64> {
        let n = self.points.first().map_or(0, |p| p.len());
        self.points
            .iter()
            .fold(DVector::zeros(n), |acc, p| acc + p * self.weight)
    }

    /// `(1/2n) Σ Xᵢ Xᵢᵀ − x̄ x̄ᵀ` in raw (uncentered) form.
    pub fn raw_covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let n = mean.len();
        let second = self
            .points
            .iter()
            .fold(DMatrix::zeros(n, n), |acc, p| acc + linalg::outer(p, p) * self.weight);
        second - linalg::outer(&mean, &mean)
    }
}

/// Points `Xᵢ = S ζᵢ + x̂` with `ζᵢ = ±√n eᵢ`; the first n carry the plus sign.
pub fn cubature_points(x_hat: &DVector<f64>, sqrt_cov: &DMatrix<f64>) -> CubatureSet {
    let n = x_hat.len();
    let radius = (n as f64).sqrt();
    let mut points = Vec::with_capacity(2 * n);
    for i in 0..n {
        points.push(x_hat + sqrt_cov.column(i) * radius);
    }
    for i in 0..n {
        points.push(x_hat - sqrt_cov.column(i) * radius);
    }
    CubatureSet {
        points,
        weight: 1.0 / (2 * n) as f64,
    }
}

fn factor(p: &DMatrix<f64>, what: &'static str) -> Result<CholeskyFactor, FilterError> {
    linalg::cholesky_lower(p).map_err(|source| FilterError::DecompositionFailure { what, source })
}

/// Propagates the cubature points of `state` through the transition and
/// returns the predicted mean and covariance (with `q` added).
pub fn time_predict(
    state: &FilterState,
    model: &dyn ProcessModel,
    u: &DVector<f64>,
    q: &DMatrix<f64>,
) -> Result<FilterState, FilterError> {
    let n = model.state_dim();
    check_dim("state", n, state.dim())?;
    check_dim("process noise Q", n, q.nrows())?;
    let chol = factor(&state.covariance, "state covariance")?;
    let set = cubature_points(&state.x_hat, &chol.lower);

    let mut propagated = Vec::with_capacity(set.len());
    for point in &set.points {
        let next = model.transition(point, u);
        check_dim("transition output", n, next.len())?;
        check_finite_vec(&next, "propagated cubature point")?;
        propagated.push(next);
    }
    let w = set.weight;
    let x_pred = propagated
        .iter()
        .fold(DVector::zeros(n), |acc, p| acc + p * w);
    // centered accumulation; algebraically the raw second moment minus x̂x̂ᵀ
    let mut p_pred = q.clone();
    for p in &propagated {
        let d = p - &x_pred;
        p_pred += linalg::outer(&d, &d) * w;
    }
    Ok(FilterState {
        x_hat: x_pred,
        covariance: linalg::symmetrize(&p_pred),
        step_index: state.step_index + 1,
    })
}

/// Predicted-measurement quantities of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateIntermediates {
    pub z_hat: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub cross_cov: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub innovation: DVector<f64>,
}

/// Moments of the measurement cubature points before any noise covariance
/// is added.
#[derive(Debug, Clone)]
pub(crate) struct MeasurementMoments {
    pub z_hat: DVector<f64>,
    pub spread: DMatrix<f64>,
    pub cross_cov: DMatrix<f64>,
}

impl MeasurementMoments {
    pub fn compute(
        pred: &FilterState,
        model: &dyn ProcessModel,
        u: &DVector<f64>,
    ) -> Result<Self, FilterError> {
        let n = model.state_dim();
        let m = model.measurement_dim();
        check_dim("predicted state", n, pred.dim())?;
        let chol = factor(&pred.covariance, "predicted covariance")?;
        let set = cubature_points(&pred.x_hat, &chol.lower);
        let w = set.weight;

        let mut zs = Vec::with_capacity(set.len());
        for point in &set.points {
            let z = model.observe(point, u);
            check_dim("observation output", m, z.len())?;
            check_finite_vec(&z, "measurement cubature point")?;
            zs.push(z);
        }
        let z_hat = zs.iter().fold(DVector::zeros(m), |acc, z| acc + z * w);
        let mut spread = DMatrix::zeros(m, m);
        let mut cross_cov = DMatrix::zeros(n, m);
        for (x, z) in set.points.iter().zip(&zs) {
            let dz = z - &z_hat;
            let dx = x - &pred.x_hat;
            spread += linalg::outer(&dz, &dz) * w;
            cross_cov += linalg::outer(&dx, &dz) * w;
        }
        Ok(Self {
            z_hat,
            spread,
            cross_cov,
        })
    }

    pub fn innovation_cov(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::symmetrize(&(&self.spread + r))
    }

    /// Gain and posterior for a given effective measurement covariance.
    pub fn finish(
        &self,
        pred: &FilterState,
        z: &DVector<f64>,
        r_eff: &DMatrix<f64>,
    ) -> Result<(FilterState, UpdateIntermediates), FilterError> {
        let pzz = self.innovation_cov(r_eff);
        let chol = factor(&pzz, "innovation covariance")?;
        // W = Pxz Pzz⁻¹  ⇔  Pzz Wᵀ = Pxzᵀ
        let gain = chol.solve(&self.cross_cov.transpose()).transpose();
        let innovation = z - &self.z_hat;
        let x_post = &pred.x_hat + &gain * &innovation;
        let p_post = &pred.covariance - &gain * &pzz * gain.transpose();
        check_finite_vec(&x_post, "posterior state")?;
        if p_post.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::NonFiniteState("posterior covariance"));
        }
        let post = FilterState {
            x_hat: x_post,
            covariance: linalg::symmetrize(&p_post),
            step_index: pred.step_index,
        };
        Ok((
            post,
            UpdateIntermediates {
                z_hat: self.z_hat.clone(),
                innovation_cov: pzz,
                cross_cov: self.cross_cov.clone(),
                gain,
                innovation,
            },
        ))
    }
}

pub(crate) fn check_measurement(
    model: &dyn ProcessModel,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<(), FilterError> {
    let m = model.measurement_dim();
    check_dim("measurement", m, z.len())?;
    check_dim("measurement covariance R", m, r.nrows())?;
    check_dim("measurement covariance R", m, r.ncols())?;
    check_finite_vec(z, "measurement")
}

/// Classical cubature measurement update.
pub fn ckf_update(
    pred: &FilterState,
    z: &DVector<f64>,
    model: &dyn ProcessModel,
    u: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<(FilterState, UpdateIntermediates), FilterError> {
    check_measurement(model, z, r)?;
    MeasurementMoments::compute(pred, model, u)?.finish(pred, z, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::testing::{random_linear, random_spd};
    use crate::linear::LinearModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_covariance_points() {
        let set = cubature_points(&DVector::zeros(2), &DMatrix::identity(2, 2));
        let r = 2.0_f64.sqrt();
        let expected = [[r, 0.0], [0.0, r], [-r, 0.0], [0.0, -r]];
        assert_eq!(set.len(), 4);
        assert_eq!(set.weight, 0.25);
        for (p, e) in set.points.iter().zip(expected) {
            assert!((p[0] - e[0]).abs() < 1e-15 && (p[1] - e[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn four_dim_radius_is_two() {
        let set = cubature_points(&DVector::zeros(4), &DMatrix::identity(4, 4));
        assert_eq!(set.len(), 8);
        for p in &set.points {
            assert!((p.norm() - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn moments_match_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..=6);
            let p = random_spd(&mut rng, n);
            let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let chol = linalg::cholesky_lower(&p).unwrap();
            let set = cubature_points(&x, &chol.lower);
            assert!((set.mean() - &x).amax() <= 1e-12);
            let rel = linalg::max_abs(&(set.raw_covariance() - &p)) / linalg::max_abs(&p);
            assert!(rel <= 1e-10, "relative covariance error {rel}");
        }
    }

    #[test]
    fn identity_dynamics_without_noise() {
        let model = LinearModel::identity(3, 2);
        let state = FilterState::new(
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.2, 0.1])),
        );
        let pred = time_predict(&state, &model, &DVector::zeros(0), &DMatrix::zeros(3, 3)).unwrap();
        assert!((pred.x_hat - &state.x_hat).amax() < 1e-14);
        assert!(linalg::max_abs(&(pred.covariance - &state.covariance)) < 1e-14);
        assert_eq!(pred.step_index, 1);
    }

    #[test]
    fn linear_prediction_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let model = random_linear(&mut rng, 4, 3);
            let p = random_spd(&mut rng, 4);
            let q = random_spd(&mut rng, 4) * 0.01;
            let x = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let u = DVector::from_fn(model.b.ncols(), |_, _| rng.random_range(-1.0..1.0));
            let state = FilterState::new(x.clone(), p.clone());
            let pred = time_predict(&state, &model, &u, &q).unwrap();
            let x_ref = &model.a * &x + &model.b * &u;
            let p_ref = &model.a * &p * model.a.transpose() + &q;
            assert!((pred.x_hat - x_ref).amax() < 1e-10);
            assert!(linalg::max_abs(&(pred.covariance - p_ref)) < 1e-10);
        }
    }

    #[test]
    fn zero_innovation_keeps_mean_but_shrinks_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = random_linear(&mut rng, 4, 3);
        let pred = FilterState::new(DVector::from_element(4, 0.3), random_spd(&mut rng, 4));
        let r = DMatrix::identity(3, 3) * 0.1;
        let z_hat = &model.h * &pred.x_hat;
        let (post, inter) = ckf_update(&pred, &z_hat, &model, &DVector::zeros(0), &r).unwrap();
        assert!((post.x_hat - &pred.x_hat).amax() < 1e-13);
        let expected = &pred.covariance - &inter.gain * &inter.innovation_cov * inter.gain.transpose();
        assert!(linalg::max_abs(&(&post.covariance - expected)) < 1e-14);
        assert!(post.covariance.trace() < pred.covariance.trace());
    }

    #[test]
    fn gain_equals_cross_cov_times_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_linear(&mut rng, 4, 3);
        let pred = FilterState::new(DVector::zeros(4), random_spd(&mut rng, 4));
        let r = random_spd(&mut rng, 3);
        let z = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let (_, inter) = ckf_update(&pred, &z, &model, &DVector::zeros(0), &r).unwrap();
        let inv = inter.innovation_cov.clone().try_inverse().unwrap();
        let direct = &inter.cross_cov * inv;
        assert!(linalg::max_abs(&(direct - &inter.gain)) <= 1e-10 * linalg::max_abs(&inter.gain));
    }

    #[test]
    fn measurement_dimension_checked() {
        let model = LinearModel::identity(2, 2);
        let pred = FilterState::new(DVector::zeros(2), DMatrix::identity(2, 2));
        let err = ckf_update(
            &pred,
            &DVector::zeros(3),
            &model,
            &DVector::zeros(0),
            &DMatrix::identity(2, 2),
        )
        .unwrap_err();
        assert!(matches!(err, FilterError::DimensionMismatch { .. }));
    }

    #[test]
    fn non_finite_transition_is_reported() {
        struct Blowup;
        impl ProcessModel for Blowup {
            fn state_dim(&self) -> usize {
                1
            }
            fn measurement_dim(&self) -> usize {
                1
            }
            fn transition(&self, x: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
                x.map(|v| if v > 0.0 { f64::INFINITY } else { v })
            }
            fn observe(&self, x: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
                x.clone()
            }
        }
        let state = FilterState::new(DVector::zeros(1), DMatrix::identity(1, 1));
        let err = time_predict(&state, &Blowup, &DVector::zeros(0), &DMatrix::zeros(1, 1)).unwrap_err();
        assert!(matches!(err, FilterError::NonFiniteState(_)));
    }
}
