//! Up-looking sparse Cholesky factorization `P M P^T = L L^T`.

use super::{Ordering, SparseMatrix};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Ordering, elimination tree and column structure of `L`.
#[derive(Clone, Debug)]
pub struct SymbolicCholesky {
    n: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    parent: Vec<usize>,
    col_ptr: Vec<usize>,
}

/// Upper triangle of the permuted matrix in compressed-column form.
struct PermutedUpper {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

fn permuted_upper(m: &SparseMatrix, perm: &[usize], inv: &[usize]) -> PermutedUpper {
    let n = m.n();
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx = Vec::with_capacity(m.nnz() / 2 + n);
    let mut values = Vec::with_capacity(m.nnz() / 2 + n);
    col_ptr.push(0);
    for k in 0..n {
        for (c, v) in m.row(perm[k]) {
            let i = inv[c];
            if i <= k {
                row_idx.push(i);
                values.push(v);
            }
        }
        col_ptr.push(row_idx.len());
    }
    PermutedUpper { col_ptr, row_idx, values }
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal), written to
/// `stack[top..]` in topological order.
fn ereach(upper: &PermutedUpper, k: usize, parent: &[usize], stack: &mut [usize], mark: &mut [usize]) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    for p in upper.col_ptr[k]..upper.col_ptr[k + 1] {
        let mut i = upper.row_idx[p];
        if i >= k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

impl SymbolicCholesky {
    pub fn analyze(m: &SparseMatrix, ordering: &Ordering) -> Self {
        let n = m.n();
        let perm = ordering.permutation(m);
        let mut inv_perm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv_perm[p] = k;
        }
        let upper = permuted_upper(m, &perm, &inv_perm);

        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for p in upper.col_ptr[k]..upper.col_ptr[k + 1] {
                let mut i = upper.row_idx[p];
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        let mut counts = vec![1usize; n];
        let mut stack = vec![0; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(&upper, k, &parent, &mut stack, &mut mark);
            for &j in &stack[top..n] {
                counts[j] += 1;
            }
        }
        let mut col_ptr = vec![0; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        Self { n, perm, inv_perm, parent, col_ptr }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries of `L`, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.col_ptr[self.n]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }
}

/// Numeric Cholesky factor of an SPD matrix, typically `A - sigma B`.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    symbolic: SymbolicCholesky,
    row_idx: Vec<u32>,
    values: Vec<f64>,
    sigma: f64,
}

impl SpdFactor {
    /// Analyzes and factors `m`.
    pub fn new(m: &SparseMatrix, ordering: &Ordering) -> Result<Self> {
        let symbolic = SymbolicCholesky::analyze(m, ordering);
        Self::with_symbolic(symbolic, m)
    }

    /// Numeric factorization reusing a symbolic analysis of the same pattern.
    pub fn with_symbolic(symbolic: SymbolicCholesky, m: &SparseMatrix) -> Result<Self> {
        let n = symbolic.n;
        if m.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.n() });
        }
        if n > u32::MAX as usize {
            return Err(Error::Unsupported("more than 2^32 unknowns".into()));
        }
        let upper = permuted_upper(m, &symbolic.perm, &symbolic.inv_perm);
        let nnz = symbolic.factor_nnz();
        let mut row_idx = vec![0u32; nnz];
        let mut values = vec![0.0; nnz];
        let mut next: Vec<usize> = symbolic.col_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut stack = vec![0; n];
        let mut mark = vec![NONE; n];

        for k in 0..n {
            let top = ereach(&upper, k, &symbolic.parent, &mut stack, &mut mark);
            x[k] = 0.0;
            for p in upper.col_ptr[k]..upper.col_ptr[k + 1] {
                x[upper.row_idx[p]] = upper.values[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..n] {
                let start = symbolic.col_ptr[i];
                let lki = x[i] / values[start];
                x[i] = 0.0;
                for p in start + 1..next[i] {
                    x[row_idx[p] as usize] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                row_idx[p] = k as u32;
                values[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::data(format!("matrix is not positive definite (pivot {d:.3e} at step {k} of {n})")));
            }
            let p = next[k];
            next[k] += 1;
            row_idx[p] = k as u32;
            values[p] = d.sqrt();
        }
        Ok(Self { symbolic, row_idx, values, sigma: 0.0 })
    }

    pub(crate) fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    /// Shift recorded for this factor (zero for plain SPD solves).
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.symbolic.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        let mut out = vec![0.0; n];
        self.solve_into(b, &mut out);
        Ok(out)
    }

    pub(crate) fn solve_into(&self, b: &[f64], out: &mut [f64]) {
        let n = self.n();
        let cp = &self.symbolic.col_ptr;
        let mut z: Vec<f64> = self.symbolic.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            let zj = z[j] / self.values[cp[j]];
            z[j] = zj;
            for p in cp[j] + 1..cp[j + 1] {
                z[self.row_idx[p] as usize] -= self.values[p] * zj;
            }
        }
        for j in (0..n).rev() {
            let mut acc = z[j];
            for p in cp[j] + 1..cp[j + 1] {
                acc -= self.values[p] * z[self.row_idx[p] as usize];
            }
            z[j] = acc / self.values[cp[j]];
        }
        for (k, &p) in self.symbolic.perm.iter().enumerate() {
            out[p] = z[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;

    fn tridiag(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn two_by_two_solve() {
        let m = SparseMatrix::from_dense(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        for ord in [Ordering::Natural, Ordering::Rcm] {
            let f = SpdFactor::new(&m, &ord).unwrap();
            let x = f.solve(&[3.0, 3.0]).unwrap();
            assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn tridiagonal_round_trip() {
        let m = tridiag(200);
        let b: Vec<f64> = (0..200).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let f = SpdFactor::new(&m, &Ordering::Rcm).unwrap();
        let x = f.solve(&b).unwrap();
        let r: Vec<f64> = m.spmv(&x).unwrap().iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(norm2(&r) <= 1e-10 * norm2(&b));
        // A tridiagonal matrix has no fill under the natural ordering.
        let nat = SymbolicCholesky::analyze(&m, &Ordering::Natural);
        assert_eq!(nat.factor_nnz(), 2 * 200 - 1);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let m = SparseMatrix::from_dense(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(SpdFactor::new(&m, &Ordering::Natural), Err(Error::Data(_))));
    }
}
