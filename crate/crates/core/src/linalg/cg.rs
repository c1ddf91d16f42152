use super::{axpy, dot, norm2, SparseMatrix};
use crate::error::{Error, Result};

/// Result of a preconditioned conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Euclidean residual norm after each iteration (entry 0 is the initial residual).
    pub residuals: Vec<f64>,
}

/// Jacobi-preconditioned CG for `M x = b`, stopping at `||r|| <= tol ||b||`.
///
/// Non-positive curvature `p^T M p <= 0` means `M` is not positive definite
/// and is reported as a data error.
pub fn pcg(m: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
    pcg_observed(m, b, tol, max_iter, |_| {})
}

fn pcg_observed(
    m: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(&[f64]),
) -> Result<CgOutcome> {
    let n = m.n();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    let diag = m.diagonal_values();
    if let Some((i, d)) = diag.iter().enumerate().find(|(_, &d)| !(d > 0.0)) {
        return Err(Error::data(format!("non-positive diagonal entry {d:.3e} at row {i}")));
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    let mut residuals = vec![b_norm];
    if b_norm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, residuals });
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut mp = vec![0.0; n];
    for it in 1..=max_iter {
        m.mul_vec_into(&p, &mut mp);
        let curvature = dot(&p, &mp);
        if !(curvature > 0.0) {
            return Err(Error::data(format!("non-positive curvature {curvature:.3e} in CG iteration {it}")));
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &mp, &mut r);
        observe(&x);
        let rn = norm2(&r);
        residuals.push(rn);
        if rn <= tol * b_norm {
            return Ok(CgOutcome { x, iterations: it, residuals });
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual: *residuals.last().unwrap() / b_norm })
}
