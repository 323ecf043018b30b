//! Small dense linear-algebra helpers shared by the filters.
//!
//! Everything here works on `nalgebra` dynamic matrices. Dimensions are tiny
//! (n = 4, m = 3 for the machine model) so clarity wins over blocking tricks.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative jitter levels tried, in order, after a plain factorization fails.
/// Each level is scaled by `trace(P) / n`.
pub const JITTER_LEVELS: [f64; 3] = [1e-12, 1e-9, 1e-6];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("cholesky factorization failed after jitter escalation (last pivot {pivot:e})")]
    NotPositiveDefinite { pivot: f64 },
}

/// Lower-triangular Cholesky factor together with the diagonal jitter that
/// had to be added to obtain it.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub lower: DMatrix<f64>,
    pub jitter: f64,
}

impl CholeskyFactor {
    /// Solves `L Lᵀ X = B` for `X`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let l = &self.lower;
        let n = l.nrows();
        let mut out = rhs.clone();
        for col in 0..out.ncols() {
            // forward: L y = b
            for i in 0..n {
                let mut acc = out[(i, col)];
                for k in 0..i {
                    acc -= l[(i, k)] * out[(k, col)];
                }
                out[(i, col)] = acc / l[(i, i)];
            }
            // backward: Lᵀ x = y
            for i in (0..n).rev() {
                let mut acc = out[(i, col)];
                for k in (i + 1)..n {
                    acc -= l[(k, i)] * out[(k, col)];
                }
                out[(i, col)] = acc / l[(i, i)];
            }
        }
        out
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.lower.nrows();
        self.solve(&DMatrix::identity(n, n))
    }
}

/// `(P + Pᵀ) / 2`.
pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

fn plain_cholesky(p: &DMatrix<f64>) -> Result<DMatrix<f64>, f64> {
    let n = p.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = p[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(diag);
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut acc = p[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / ljj;
        }
    }
    Ok(l)
}

/// Lower Cholesky factor of the symmetrized input, escalating diagonal jitter
/// through [`JITTER_LEVELS`] before giving up.
pub fn cholesky_lower(p: &DMatrix<f64>) -> Result<CholeskyFactor, LinalgError> {
    if p.nrows() != p.ncols() {
        return Err(LinalgError::NotSquare {
            rows: p.nrows(),
            cols: p.ncols(),
        });
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let sym = symmetrize(p);
    let mut last_pivot = match plain_cholesky(&sym) {
        Ok(lower) => return Ok(CholeskyFactor { lower, jitter: 0.0 }),
        Err(pivot) => pivot,
    };
    let n = sym.nrows().max(1);
    let trace = sym.trace();
    let scale = if trace > 0.0 { trace / n as f64 } else { 1.0 };
    for level in JITTER_LEVELS {
        let jitter = level * scale;
        let mut shifted = sym.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        match plain_cholesky(&shifted) {
            Ok(lower) => return Ok(CholeskyFactor { lower, jitter }),
            Err(pivot) => last_pivot = pivot,
        }
    }
    Err(LinalgError::NotPositiveDefinite { pivot: last_pivot })
}

/// Outer product `a bᵀ`.
pub fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

/// Largest absolute entry, zero for an empty matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}
