use super::{pcg, Ordering, SparseMatrix, SpdFactor};
use crate::error::{Error, Result};

/// How `(A - sigma B)^{-1}` is applied.
#[derive(Clone, Debug)]
pub enum Backend {
    /// Sparse Cholesky with the given fill-reducing ordering.
    Cholesky(Ordering),
    /// Jacobi-preconditioned conjugate gradients.
    Cg { tol: f64, max_iter: usize },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Cholesky(Ordering::Rcm)
    }
}

#[derive(Clone, Debug)]
enum Inner {
    Factor(SpdFactor),
    Cg { matrix: SparseMatrix, tol: f64, max_iter: usize },
}

/// The shift-and-invert operator `P = (A - sigma B)^{-1}`.
#[derive(Clone, Debug)]
pub struct ShiftInvert {
    sigma: f64,
    inner: Inner,
}

impl ShiftInvert {
    /// Prepares `P`. A failed factorization means the shifted operator is not
    /// positive definite, i.e. `sigma` is not below the smallest eigenvalue.
    pub fn new(a: &SparseMatrix, b: &SparseMatrix, sigma: f64, backend: &Backend) -> Result<Self> {
        if a.n() != b.n() {
            return Err(Error::DimensionMismatch { expected: a.n(), got: b.n() });
        }
        if !sigma.is_finite() {
            return Err(Error::config(format!("shift must be finite, got {sigma}")));
        }
        let shifted = if sigma == 0.0 { a.clone() } else { a.linear_combination(1.0, b, -sigma)? };
        let inner = match backend {
            Backend::Cholesky(ordering) => {
                let mut f = SpdFactor::new(&shifted, ordering)
                    .map_err(|e| Error::ShiftTooLarge { sigma, detail: e.to_string() })?;
                f.set_sigma(sigma);
                Inner::Factor(f)
            }
            Backend::Cg { tol, max_iter } => Inner::Cg { matrix: shifted, tol: *tol, max_iter: *max_iter },
        };
        Ok(Self { sigma, inner })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n(&self) -> usize {
        match &self.inner {
            Inner::Factor(f) => f.n(),
            Inner::Cg { matrix, .. } => matrix.n(),
        }
    }

    /// Returns `(A - sigma B)^{-1} rhs`.
    pub fn apply(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: rhs.len() });
        }
        match &self.inner {
            Inner::Factor(f) => f.solve(rhs),
            Inner::Cg { matrix, tol, max_iter } => match pcg(matrix, rhs, *tol, *max_iter) {
                Ok(out) => Ok(out.x),
                Err(Error::Data(detail)) => Err(Error::ShiftTooLarge { sigma: self.sigma, detail }),
                Err(Error::NotConverged { iterations, residual }) => Err(Error::ShiftTooLarge {
                    sigma: self.sigma,
                    detail: format!("CG stalled at relative residual {residual:.3e} after {iterations} iterations"),
                }),
                Err(e) => Err(e),
            },
        }
    }
}
