//! Linear-Gaussian model `x' = A x + B u`, `z = H x`.

use nalgebra::{DMatrix, DVector};

use crate::filter::ProcessModel;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, h: DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "A must be square");
        assert_eq!(b.nrows(), a.nrows(), "B rows must match state dimension");
        assert_eq!(h.ncols(), a.nrows(), "H columns must match state dimension");
        Self { a, b, h }
    }

    /// Identity dynamics with no inputs, observing the first `m` states.
    pub fn identity(n: usize, m: usize) -> Self {
        Self::new(
            DMatrix::identity(n, n),
            DMatrix::zeros(n, 0),
            DMatrix::identity(m, n),
        )
    }
}

impl ProcessModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }

    fn transition(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        if self.b.ncols() == 0 {
            &self.a * x
        } else {
            &self.a * x + &self.b * u
        }
    }

    fn observe(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        &self.h * x
    }
}
