//! Sparse symmetric storage, shift-and-invert solves and a small dense
//! symmetric eigensolver.

mod cg;
mod cholesky;
mod dense;
pub mod market;
mod ordering;
mod shift;
mod sparse;

pub use cg::{pcg, CgOutcome};
pub use cholesky::{SpdFactor, SymbolicCholesky};
pub use dense::{dense_sym_eig, DenseEigen, DenseMatrix};
pub use ordering::{nested_dissection, reverse_cuthill_mckee, Ordering};
pub use shift::{Backend, ShiftInvert};
pub use sparse::SparseMatrix;

/// Euclidean dot product.
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

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}
