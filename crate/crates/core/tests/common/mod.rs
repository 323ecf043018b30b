#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `G Gᵀ + floor·I`, well away from singular.
pub fn spd(rng: &mut impl Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let g = normal_matrix(rng, n, n);
    &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}

/// Random `A` with spectral norm 0.95.
pub fn stable(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = normal_matrix(rng, n, n);
    let norm = a.clone().svd(false, false).singular_values.max();
    a * (0.95 / norm)
}

/// Textbook Kalman filter step.
pub fn kalman_step(
    x: &DVector<f64>,
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    u: &DVector<f64>,
    z: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let xp = a * x + b * u;
    let pp = a * p * a.transpose() + q;
    let s = h * &pp * h.transpose() + r;
    let k = &pp * h.transpose() * s.clone().try_inverse().expect("S invertible");
    let x_new = &xp + &k * (z - h * &xp);
    let p_new = &pp - &k * s * k.transpose();
    (x_new, (&p_new + p_new.transpose()) * 0.5)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
