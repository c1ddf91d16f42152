//! Cell correctors, homogenized coefficients and the limit spectrum of the
//! weighted problem in the expanding directions.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::assembly::{
    assemble_corrector_rhs, assemble_pencil, assemble_weighted_stiffness, for_each_quad_point, CoefficientSpec,
    ScalarField, Tensor, Weight,
};
use crate::eigensolve::{deflated_smallest_k, SolverConfig};
use crate::error::{Error, Result};
use crate::grid::{
    build_box_mesh, build_dof_map, BoundaryCondition, BoundarySpec, DofMap, DomainSpec, ElementOrder, Mesh, MAX_DIM,
};
use crate::linalg::{pcg, Backend, DenseMatrix, SparseMatrix, SpdFactor};

/// Relative gap below which two limit eigenvalues count as one degenerate level.
pub const DEGENERACY_TOL: f64 = 1e-6;

/// Off-diagonal tolerance relative to `trace(D) / p`.
pub const OFFDIAG_TOL: f64 = 1e-6;

/// Checks that `dofmap` has the cell-problem boundary conditions.
fn check_cell_dofmap(mesh: &Mesh, dofmap: &DofMap) -> Result<()> {
    let bc = dofmap.boundary();
    if mesh.domain().p == 0 {
        return Err(Error::config("correctors need at least one expanding direction"));
    }
    if bc.bx != BoundaryCondition::Periodic {
        return Err(Error::config("cell problem must be periodic in the expanding directions"));
    }
    if mesh.domain().q > 0 && bc.by == BoundaryCondition::Dirichlet {
        return Err(Error::config("cell problem must not eliminate the fixed-direction boundary"));
    }
    Ok(())
}

/// Replaces row and column `k` by the identity, pinning that unknown to zero.
fn pin(m: &SparseMatrix, k: usize) -> Result<SparseMatrix> {
    let n = m.n();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(m.nnz());
    let mut values = Vec::with_capacity(m.nnz());
    row_ptr.push(0);
    for i in 0..n {
        for (j, v) in m.row(i) {
            if i == k || j == k {
                if i == j {
                    col_idx.push(j);
                    values.push(1.0);
                }
            } else {
                col_idx.push(j);
                values.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    SparseMatrix::from_csr(n, row_ptr, col_idx, values)
}

/// Solves the cell problems `-div(rho (e_i + grad theta_i)) = 0`,
/// `i = 1..p`, each normalized to `int rho theta_i = 0`.
pub fn solve_correctors(
    mesh: &Arc<Mesh>,
    dofmap: &Arc<DofMap>,
    rho: &Weight,
    backend: &Backend,
) -> Result<Vec<ScalarField>> {
    check_cell_dofmap(mesh, dofmap)?;
    let k = assemble_weighted_stiffness(mesh, dofmap, rho)?;
    let n = k.n();
    // Cholesky needs a definite matrix: pin the unknown with the strongest
    // coupling. CG works on the consistent singular system directly.
    let (pinned, mut solve): (Option<usize>, Box<dyn FnMut(&[f64]) -> Result<Vec<f64>>>) = match backend {
        Backend::Cholesky(ordering) => {
            let diag = k.diagonal_values();
            let pinned = (0..n).max_by(|&a, &b| diag[a].total_cmp(&diag[b])).unwrap_or(0);
            let f = SpdFactor::new(&pin(&k, pinned)?, ordering)?;
            (Some(pinned), Box::new(move |rhs| f.solve(rhs)))
        }
        Backend::Cg { tol, max_iter } => {
            let (tol, max_iter) = (*tol, *max_iter);
            let k = &k;
            (
                None,
                Box::new(move |rhs| {
                    let out = pcg(k, rhs, tol, max_iter)?;
                    Ok(out.x)
                }),
            )
        }
    };
    let mass_weights = weighted_mass_lumps(mesh, dofmap, rho)?;
    let total: f64 = mass_weights.iter().sum();
    let mut out = Vec::with_capacity(mesh.domain().p);
    for i in 0..mesh.domain().p {
        let mut f = assemble_corrector_rhs(mesh, dofmap, rho, i)?;
        match pinned {
            Some(j) => f[j] = 0.0,
            None => {
                let mean = f.iter().sum::<f64>() / n as f64;
                f.iter_mut().for_each(|v| *v -= mean);
            }
        }
        let mut theta = solve(&f)?;
        let mean: f64 = theta.iter().zip(&mass_weights).map(|(t, w)| t * w).sum::<f64>() / total;
        theta.iter_mut().for_each(|t| *t -= mean);
        out.push(ScalarField::new(mesh.clone(), dofmap.clone(), theta)?);
    }
    Ok(out)
}

/// `int rho phi_j` for every DOF `j`, so that `int rho u = sum_j u_j w_j`.
fn weighted_mass_lumps(mesh: &Mesh, dofmap: &DofMap, rho: &Weight) -> Result<Vec<f64>> {
    let dim = mesh.dim();
    let mut w = vec![0.0; dofmap.n_free()];
    for_each_quad_point(mesh, |qp| {
        let r = qp.weight * rho.eval(&qp.z[..dim]);
        for (&node, v) in qp.nodes.iter().zip(qp.values) {
            if let Some(j) = dofmap.dof(node) {
                w[j] += r * v;
            }
        }
        Ok(())
    })?;
    Ok(w)
}

/// `int rho theta` of a discrete field.
pub fn weighted_mean_integral(theta: &ScalarField, rho: &Weight) -> Result<f64> {
    let dim = theta.mesh().dim();
    let mut s = 0.0;
    for_each_quad_point(theta.mesh(), |qp| {
        s += qp.weight * rho.eval(&qp.z[..dim]) * qp.interpolate(theta.nodal());
        Ok(())
    })?;
    Ok(s)
}

/// `D_ij = int rho (delta_ij + d theta_j / dx_i)` and `C = int rho` over the cell.
pub fn homogenized_coefficients(mesh: &Mesh, rho: &Weight, correctors: &[ScalarField]) -> Result<(DenseMatrix, f64)> {
    let p = mesh.domain().p;
    if correctors.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: correctors.len() });
    }
    for c in correctors {
        if c.mesh().node_dims() != mesh.node_dims() || c.mesh().n_active_cells() != mesh.n_active_cells() {
            return Err(Error::config("corrector lives on a different mesh"));
        }
    }
    let dim = mesh.dim();
    let mut d = DenseMatrix::zeros(p, p);
    let mut c_bar = 0.0;
    for_each_quad_point(mesh, |qp| {
        let wr = qp.weight * rho.eval(&qp.z[..dim]);
        c_bar += wr;
        for (j, theta) in correctors.iter().enumerate() {
            let g = qp.gradient(theta.nodal());
            for i in 0..p {
                let delta = if i == j { 1.0 } else { 0.0 };
                d[(i, j)] += wr * (delta + g[i]);
            }
        }
        Ok(())
    })?;
    Ok((d, c_bar))
}

/// One eigenpair of the homogenized limit problem.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitPair {
    pub nu: f64,
    /// Sine frequencies `m_i` (empty for numerically computed pairs).
    pub multi_index: Vec<usize>,
    /// Amplitude `N` of `N prod sin(m_i pi x_i)`.
    pub normalization: f64,
}

impl LimitPair {
    /// Limit eigenfunction `N prod_i sin(m_i pi x_i)` on `(0,1)^p`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.normalization * self.multi_index.iter().zip(x).map(|(&m, &xi)| (m as f64 * PI * xi).sin()).product::<f64>()
    }
}

fn is_diagonal(d: &DenseMatrix) -> bool {
    let p = d.rows();
    let trace: f64 = (0..p).map(|i| d[(i, i)]).sum();
    let tol = OFFDIAG_TOL * trace.abs() / p as f64;
    (0..p).all(|i| (0..p).all(|j| i == j || d[(i, j)].abs() <= tol))
}

/// Closed-form limit eigenpairs `nu = pi^2 sum D_ii m_i^2 / C`, sorted
/// ascending with ties ordered by the last index first.
pub fn analytic_limit_eigenpairs(d_bar: &DenseMatrix, c_bar: f64, m_max: usize) -> Result<Vec<LimitPair>> {
    let p = d_bar.rows();
    if p == 0 || p > MAX_DIM || d_bar.cols() != p {
        return Err(Error::config("homogenized diffusion must be a non-empty square matrix"));
    }
    if !(c_bar > 0.0) {
        return Err(Error::data(format!("homogenized density {c_bar} is not positive")));
    }
    if !is_diagonal(d_bar) {
        return Err(Error::Unsupported("homogenized diffusion is not diagonal".into()));
    }
    let normalization = 2f64.powf(p as f64 / 2.0) / c_bar.sqrt();
    let k = m_max.max(1);
    let mut pairs = Vec::new();
    let mut idx = vec![1usize; p];
    loop {
        let s: f64 = (0..p).map(|i| d_bar[(i, i)] * (idx[i] * idx[i]) as f64).sum();
        pairs.push(LimitPair { nu: PI * PI * s / c_bar, multi_index: idx.clone(), normalization });
        let mut d = 0;
        while d < p && idx[d] == k {
            idx[d] = 1;
            d += 1;
        }
        if d == p {
            break;
        }
        idx[d] += 1;
    }
    pairs.sort_by(|a, b| a.nu.total_cmp(&b.nu));
    // Within a degenerate level the last index varies slowest.
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && is_degenerate(pairs[start].nu, pairs[end].nu) {
            end += 1;
        }
        pairs[start..end].sort_by(|a, b| a.multi_index.iter().rev().cmp(b.multi_index.iter().rev()));
        start = end;
    }
    pairs.truncate(m_max);
    Ok(pairs)
}

/// Limit eigenvalues of `-div(D grad u) = nu C u` on `(0,1)^p` with Dirichlet
/// conditions, computed on a Q2 mesh with `cells` intervals per direction.
pub fn numeric_limit_eigenvalues(d_bar: &DenseMatrix, c_bar: f64, m_max: usize, cells: usize) -> Result<Vec<f64>> {
    let p = d_bar.rows();
    let dom = DomainSpec::new(0, p, 1.0, 1.0)?;
    let mesh = build_box_mesh(&dom, &vec![cells; p], ElementOrder::Quadratic)?;
    let dm = build_dof_map(&mesh, &BoundarySpec::dirichlet())?;
    let mut t: Tensor = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..p {
        for j in 0..p {
            t[i][j] = d_bar[(i, j)] / c_bar;
        }
    }
    let (a, b) = assemble_pencil(&mesh, &dm, &CoefficientSpec::weighted(Weight::One).with_diffusion(t))?;
    let cfg = SolverConfig::default().with_tol(1e-9).with_k_max(500);
    let out = deflated_smallest_k(&a, &b, &cfg, m_max)?;
    if !out.complete {
        let last = out.pairs.last().expect("at least one run");
        return Err(Error::NotConverged { iterations: last.iterations, residual: last.final_residual() });
    }
    Ok(out.pairs.iter().map(|r| r.lambda).collect())
}

/// Correctors, homogenized coefficients and limit spectrum.
#[derive(Clone, Debug)]
pub struct HomogenizedModel {
    pub d_bar: DenseMatrix,
    pub c_bar: f64,
    pub correctors: Vec<ScalarField>,
    /// Limit eigenpairs; for non-diagonal `D` only `nu` is filled in.
    pub limit: Vec<LimitPair>,
}

impl HomogenizedModel {
    /// Runs the whole cell-problem chain for `m_max` limit eigenpairs.
    pub fn compute(
        mesh: &Arc<Mesh>,
        dofmap: &Arc<DofMap>,
        rho: &Weight,
        m_max: usize,
        backend: &Backend,
    ) -> Result<Self> {
        let correctors = solve_correctors(mesh, dofmap, rho, backend)?;
        let (d_bar, c_bar) = homogenized_coefficients(mesh, rho, &correctors)?;
        let limit = match analytic_limit_eigenpairs(&d_bar, c_bar, m_max) {
            Ok(l) => l,
            Err(Error::Unsupported(_)) => numeric_limit_eigenvalues(&d_bar, c_bar, m_max, 16)?
                .into_iter()
                .map(|nu| LimitPair { nu, multi_index: Vec::new(), normalization: f64::NAN })
                .collect(),
            Err(e) => return Err(e),
        };
        Ok(Self { d_bar, c_bar, correctors, limit })
    }

    /// Flat `key = value` text block.
    pub fn to_key_value(&self) -> String {
        let p = self.d_bar.rows();
        let mut s = String::new();
        let _ = writeln!(s, "p = {p}");
        for i in 0..p {
            for j in 0..p {
                let _ = writeln!(s, "d_bar_{}_{} = {:.12e}", i + 1, j + 1, self.d_bar[(i, j)]);
            }
        }
        let _ = writeln!(s, "c_bar = {:.12e}", self.c_bar);
        for (k, pair) in self.limit.iter().enumerate() {
            let _ = writeln!(s, "nu_{} = {:.12e}", k + 1, pair.nu);
            if !pair.multi_index.is_empty() {
                let idx: Vec<String> = pair.multi_index.iter().map(|m| m.to_string()).collect();
                let _ = writeln!(s, "index_{} = {}", k + 1, idx.join(" "));
            }
        }
        if let Some(pair) = self.limit.first() {
            let _ = writeln!(s, "normalization = {:.12e}", pair.normalization);
        }
        s
    }
}

/// True if `a` and `b` belong to the same degenerate level.
pub fn is_degenerate(a: f64, b: f64) -> bool {
    (a - b).abs() <= DEGENERACY_TOL * a.abs().max(b.abs())
}

/// Rotates a B-orthonormal pair `(x2, x3)` of a degenerate eigenspace
/// towards the targets: `x_i' = <x2, t_i>_B x2 + <x3, t_i>_B x3`, then
/// B-normalized.
pub fn align_degenerate_pair(
    x2: &[f64],
    x3: &[f64],
    t2: &[f64],
    t3: &[f64],
    b: &SparseMatrix,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = b.n();
    for v in [x2, x3, t2, t3] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
    }
    let project = |t: &[f64]| -> Result<Vec<f64>> {
        let bt = b.spmv(t)?;
        let c2: f64 = x2.iter().zip(&bt).map(|(p, q)| p * q).sum();
        let c3: f64 = x3.iter().zip(&bt).map(|(p, q)| p * q).sum();
        let t_norm: f64 = t.iter().zip(&bt).map(|(p, q)| p * q).sum::<f64>().max(0.0).sqrt();
        if (c2 * c2 + c3 * c3).sqrt() <= 1e-12 * t_norm || t_norm == 0.0 {
            return Err(Error::Alignment("target is orthogonal to the eigenspace".into()));
        }
        let mut y: Vec<f64> = x2.iter().zip(x3).map(|(p, q)| c2 * p + c3 * q).collect();
        let nb = b.bilinear(&y, &y).sqrt();
        y.iter_mut().for_each(|v| *v /= nb);
        Ok(y)
    };
    Ok((project(t2)?, project(t3)?))
}
