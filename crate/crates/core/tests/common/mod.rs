//! Shared helpers: an independent dense oracle built on nalgebra and the
//! invariant checks used by both the property suite and the acceptance run.
#![allow(dead_code)]

pub mod invariants;
pub mod oracle;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use pseig::linalg::SparseMatrix;

pub fn to_nalgebra(m: &SparseMatrix) -> DMatrix<f64> {
    let n = m.n();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, v) in m.row(i) {
            d[(i, j)] += v;
        }
    }
    d
}

/// Dense generalized eigenpairs of `A x = lambda B x`, ascending, with
/// B-orthonormal eigenvectors.
pub struct DenseSpectrum {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn dense_generalized(a: &SparseMatrix, b: &SparseMatrix) -> DenseSpectrum {
    let a = to_nalgebra(a);
    let b = to_nalgebra(b);
    let l = b.clone().cholesky().expect("B must be SPD").l();
    let l_inv = l.clone().try_inverse().expect("invertible factor");
    let c = &l_inv * a * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt_inv = l_inv.transpose();
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let y: DVector<f64> = eig.eigenvectors.column(i).into();
            (&lt_inv * y).iter().copied().collect()
        })
        .collect();
    DenseSpectrum { values, vectors }
}

/// `min_s ||x - s v||_B` over `s = +-1`.
pub fn b_distance_up_to_sign(b: &SparseMatrix, x: &[f64], v: &[f64]) -> f64 {
    let dist = |s: f64| {
        let d: Vec<f64> = x.iter().zip(v).map(|(p, q)| p - s * q).collect();
        b.bilinear(&d, &d).max(0.0).sqrt()
    };
    dist(1.0).min(dist(-1.0))
}

/// Least-squares slope of `log(err)` against `log(l)`.
pub fn loglog_slope(l: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = l.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
