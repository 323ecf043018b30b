use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::linear::LinearModel;

pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Random model with spectral radius below one.
pub fn random_linear(rng: &mut impl Rng, n: usize, m: usize) -> LinearModel {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let radius = raw
        .clone()
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.norm()));
    let a = raw * (0.95 / radius.max(1e-9));
    let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let h = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    LinearModel::new(a, b, h)
}

#[allow(dead_code)]
pub fn random_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}
