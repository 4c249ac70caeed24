//! Dense and sparse linear algebra used by the rest of the crate.

mod band;
mod cg;
mod eigen;
mod sparse;

pub use band::BandCholesky;
pub use cg::{conjugate_gradient, CgOutcome};
pub use eigen::{
    generalized_symmetric_eigenvalues, jacobi_eigenvalues, nonsymmetric_eigenvalues,
};
pub use sparse::CsrMatrix;

use nalgebra::DMatrix;

/// Max-row-sum norm.
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
