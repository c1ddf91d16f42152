//! Shifted inverse power iteration and LOPCG for the smallest eigenpairs of
//! a symmetric pencil `(A, B)`, with B-orthogonal deflation.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dense_sym_eig, norm2, scale, Backend, DenseMatrix, ShiftInvert, SparseMatrix};

/// Relative B-norm below which a trial direction counts as dependent.
pub const DROP_TOL: f64 = 1e-12;

/// Converged (or best available) eigenpair and its iteration history.
#[derive(Clone, Debug)]
pub struct EigResult {
    pub lambda: f64,
    /// B-normalized eigenvector, largest-magnitude entry positive.
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||A x_k - lambda_k B x_k||_2`, entry `k` for iterate `k` (0 = start vector).
    pub residuals: Vec<f64>,
    /// Rayleigh quotients of the iterates, same indexing as `residuals`.
    pub rayleigh: Vec<f64>,
    pub converged: bool,
}

impl EigResult {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::INFINITY)
    }

    /// Writes the history as `k,residual,rayleigh` rows.
    pub fn write_history_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,residual,rayleigh")?;
        for (k, (r, l)) in self.residuals.iter().zip(&self.rayleigh).enumerate() {
            writeln!(w, "{k},{r:.6e},{l:.12e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    InversePower,
    Lopcg,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub sigma: f64,
    pub tol: f64,
    pub k_max: usize,
    /// Start vector; all ones when `None`.
    pub x0: Option<Vec<f64>>,
    /// LOPCG's `x_{-1}`; the first unit vector when `None`.
    pub x_prev: Option<Vec<f64>>,
    pub backend: Backend,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { sigma: 0.0, tol: 1e-10, k_max: 100, x0: None, x_prev: None, backend: Backend::default() }
    }
}

impl SolverConfig {
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_start(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.k_max == 0 {
            return Err(Error::config("k_max must be at least 1"));
        }
        for v in [&self.x0, &self.x_prev].into_iter().flatten() {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        Ok(())
    }

    fn start(&self, n: usize) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| vec![1.0; n])
    }

    fn previous(&self, n: usize) -> Vec<f64> {
        self.x_prev.clone().unwrap_or_else(|| {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        })
    }
}

/// `x^T A x / x^T B x`.
pub fn rayleigh_quotient(a: &SparseMatrix, b: &SparseMatrix, x: &[f64]) -> Result<f64> {
    if x.len() != a.n() || x.len() != b.n() {
        return Err(Error::DimensionMismatch { expected: a.n(), got: x.len() });
    }
    let xbx = b.bilinear(x, x);
    if !(xbx > 0.0) {
        return Err(Error::data(format!("x^T B x = {xbx:.3e} is not positive")));
    }
    Ok(a.bilinear(x, x) / xbx)
}

/// B-orthonormal vectors with their `B`-images, used for deflation and
/// Gram–Schmidt.
struct BBasis<'a> {
    b: &'a SparseMatrix,
    vecs: Vec<Vec<f64>>,
    bvecs: Vec<Vec<f64>>,
}

impl<'a> BBasis<'a> {
    fn new(b: &'a SparseMatrix) -> Self {
        Self { b, vecs: Vec::new(), bvecs: Vec::new() }
    }

    fn from_vectors(b: &'a SparseMatrix, vecs: &[Vec<f64>]) -> Self {
        let bvecs = vecs.iter().map(|v| b.spmv(v).expect("dimension checked")).collect();
        Self { b, vecs: vecs.to_vec(), bvecs }
    }

    /// Removes the components along the basis (two passes).
    fn project_out(&self, v: &mut [f64]) {
        for _ in 0..2 {
            for (u, bu) in self.vecs.iter().zip(&self.bvecs) {
                let c: f64 = bu.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                axpy(-c, u, v);
            }
        }
    }

    /// Orthonormalizes `v` against the basis and appends it unless it is
    /// dependent (relative B-norm below [`DROP_TOL`]).
    fn push(&mut self, mut v: Vec<f64>) -> bool {
        let before = self.b.bilinear(&v, &v).max(0.0).sqrt();
        if !(before > 0.0) || !before.is_finite() {
            return false;
        }
        self.project_out(&mut v);
        let bv = self.b.spmv(&v).expect("dimension checked");
        let after = bv.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
        if after < DROP_TOL * before {
            return false;
        }
        scale(1.0 / after, &mut v);
        let mut bv = bv;
        scale(1.0 / after, &mut bv);
        self.vecs.push(v);
        self.bvecs.push(bv);
        true
    }
}

fn check_pencil(a: &SparseMatrix, b: &SparseMatrix, p: &ShiftInvert) -> Result<()> {
    if a.n() != b.n() || p.n() != a.n() {
        return Err(Error::DimensionMismatch { expected: a.n(), got: b.n().min(p.n()) });
    }
    Ok(())
}

fn check_deflation(b: &SparseMatrix, deflation: &[Vec<f64>]) -> Result<()> {
    for v in deflation {
        if v.len() != b.n() {
            return Err(Error::DimensionMismatch { expected: b.n(), got: v.len() });
        }
    }
    Ok(())
}

/// Normalizes in the B-norm and returns `(Ax, Bx, lambda, residual)`.
fn evaluate(a: &SparseMatrix, b: &SparseMatrix, x: &mut [f64]) -> Result<(Vec<f64>, Vec<f64>, f64, f64)> {
    let mut bx = b.spmv(x)?;
    let nb: f64 = bx.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
    if !(nb > 0.0) || !nb.is_finite() {
        return Err(Error::data(format!("iterate has B-norm^2 {nb:.3e}")));
    }
    let s = 1.0 / nb.sqrt();
    scale(s, x);
    scale(s, &mut bx);
    let ax = a.spmv(x)?;
    let lambda: f64 = ax.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
    let r: Vec<f64> = ax.iter().zip(&bx).map(|(p, q)| p - lambda * q).collect();
    Ok((ax, bx, lambda, norm2(&r)))
}

fn fix_sign(x: &mut [f64]) {
    let pivot = x.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if pivot < 0.0 {
        scale(-1.0, x);
    }
}

fn start_vector(cfg: &SolverConfig, deflation: &BBasis<'_>, n: usize) -> Result<Vec<f64>> {
    let mut x = cfg.start(n);
    let before = norm2(&x);
    deflation.project_out(&mut x);
    if norm2(&x) > 1e-10 * before {
        return Ok(x);
    }
    let mut x = generic_start(n);
    let before = norm2(&x);
    deflation.project_out(&mut x);
    if norm2(&x) > 1e-10 * before {
        return Ok(x);
    }
    let mut best: Option<Vec<f64>> = None;
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        deflation.project_out(&mut e);
        if best.as_ref().map_or(true, |b| norm2(&e) > norm2(b)) {
            best = Some(e);
        }
    }
    match best {
        Some(x) if norm2(&x) > 1e-8 => Ok(x),
        _ => Err(Error::config("start vector vanishes after deflation")),
    }
}

/// Shifted inverse power iteration with a fresh `(A - sigma B)^{-1}`.
pub fn inverse_power(a: &SparseMatrix, b: &SparseMatrix, cfg: &SolverConfig) -> Result<EigResult> {
    let p = ShiftInvert::new(a, b, cfg.sigma, &cfg.backend)?;
    inverse_power_with(a, b, &p, cfg, &[])
}

/// Shifted inverse power iteration `x_k = P B x_{k-1}` with iterates kept
/// B-orthogonal to `deflation`.
pub fn inverse_power_with(
    a: &SparseMatrix,
    b: &SparseMatrix,
    p: &ShiftInvert,
    cfg: &SolverConfig,
    deflation: &[Vec<f64>],
) -> Result<EigResult> {
    check_pencil(a, b, p)?;
    check_deflation(b, deflation)?;
    let n = a.n();
    cfg.validate(n)?;
    let defl = BBasis::from_vectors(b, deflation);
    let mut x = start_vector(cfg, &defl, n)?;
    let (_, mut bx, mut lambda, mut res) = evaluate(a, b, &mut x)?;
    let mut residuals = vec![res];
    let mut rayleigh = vec![lambda];
    let mut k = 0;
    while res >= cfg.tol && k < cfg.k_max {
        k += 1;
        let mut y = p.apply(&bx)?;
        defl.project_out(&mut y);
        x = y;
        (_, bx, lambda, res) = evaluate(a, b, &mut x)?;
        residuals.push(res);
        rayleigh.push(lambda);
    }
    fix_sign(&mut x);
    Ok(EigResult { lambda, x, iterations: k, residuals, rayleigh, converged: res < cfg.tol })
}

/// LOPCG with a fresh `(A - sigma B)^{-1}` preconditioner.
pub fn lopcg(a: &SparseMatrix, b: &SparseMatrix, cfg: &SolverConfig) -> Result<EigResult> {
    let p = ShiftInvert::new(a, b, cfg.sigma, &cfg.backend)?;
    lopcg_with(a, b, &p, cfg, &[])
}

/// Locally optimal preconditioned CG: each step minimizes the Rayleigh
/// quotient over `span{x_{k-1}, P r_{k-1}, x_{k-2}}`.
pub fn lopcg_with(
    a: &SparseMatrix,
    b: &SparseMatrix,
    p: &ShiftInvert,
    cfg: &SolverConfig,
    deflation: &[Vec<f64>],
) -> Result<EigResult> {
    check_pencil(a, b, p)?;
    check_deflation(b, deflation)?;
    let n = a.n();
    cfg.validate(n)?;
    let defl = BBasis::from_vectors(b, deflation);
    let mut x = start_vector(cfg, &defl, n)?;
    let mut x_old = cfg.previous(n);
    defl.project_out(&mut x_old);
    let (mut ax, mut bx, mut lambda, mut res) = evaluate(a, b, &mut x)?;
    let mut residuals = vec![res];
    let mut rayleigh = vec![lambda];
    let mut k = 0;
    while res >= cfg.tol && k < cfg.k_max {
        k += 1;
        let r: Vec<f64> = ax.iter().zip(&bx).map(|(p, q)| p - lambda * q).collect();
        let mut w = p.apply(&r)?;
        defl.project_out(&mut w);

        let mut basis = BBasis::new(b);
        basis.vecs.reserve(3);
        basis.push(x.clone());
        basis.push(w);
        basis.push(x_old);
        let m = basis.vecs.len();
        let av: Vec<Vec<f64>> = basis.vecs.iter().map(|v| a.spmv(v)).collect::<Result<_>>()?;
        let am = DenseMatrix::from_fn(m, m, |i, j| {
            let s: f64 = basis.vecs[i].iter().zip(&av[j]).map(|(p, q)| p * q).sum();
            let t: f64 = basis.vecs[j].iter().zip(&av[i]).map(|(p, q)| p * q).sum();
            0.5 * (s + t)
        });
        let bm = DenseMatrix::from_fn(m, m, |i, j| {
            let s: f64 = basis.vecs[i].iter().zip(&basis.bvecs[j]).map(|(p, q)| p * q).sum();
            let t: f64 = basis.vecs[j].iter().zip(&basis.bvecs[i]).map(|(p, q)| p * q).sum();
            0.5 * (s + t)
        });
        let ritz = dense_sym_eig(&am, &bm)?;
        let alpha = ritz.vectors.column(0);
        let mut next = vec![0.0; n];
        for (c, v) in alpha.iter().zip(&basis.vecs) {
            axpy(*c, v, &mut next);
        }
        x_old = std::mem::replace(&mut x, next);
        (ax, bx, lambda, res) = evaluate(a, b, &mut x)?;
        residuals.push(res);
        rayleigh.push(lambda);
    }
    fix_sign(&mut x);
    Ok(EigResult { lambda, x, iterations: k, residuals, rayleigh, converged: res < cfg.tol })
}

/// Runs the chosen solver against a prepared shift-invert operator.
pub fn solve_with(
    solver: Solver,
    a: &SparseMatrix,
    b: &SparseMatrix,
    p: &ShiftInvert,
    cfg: &SolverConfig,
    deflation: &[Vec<f64>],
) -> Result<EigResult> {
    match solver {
        Solver::InversePower => inverse_power_with(a, b, p, cfg, deflation),
        Solver::Lopcg => lopcg_with(a, b, p, cfg, deflation),
    }
}

/// Deterministic start vector without mirror symmetries, so that it is not
/// orthogonal to antisymmetric eigenvectors the way `1` is.
pub fn generic_start(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 + 0.5 * (0.7548776662 * (i + 1) as f64).fract()).collect()
}

/// `cfg` for the `k`-th deflated run: later runs use [`generic_start`]
/// unless a start vector was given.
pub fn deflated_config(cfg: &SolverConfig, k: usize, n: usize) -> SolverConfig {
    let mut c = cfg.clone();
    if k > 0 && c.x0.is_none() {
        c.x0 = Some(generic_start(n));
    }
    c
}

/// Result of a deflated multi-eigenpair run.
#[derive(Clone, Debug)]
pub struct DeflatedResult {
    /// Eigenpairs in ascending order.
    pub pairs: Vec<EigResult>,
    /// False if a sub-run stagnated; `pairs` then holds the runs up to and
    /// including the failed one.
    pub complete: bool,
}

/// The `m` smallest eigenpairs by sequential LOPCG runs, each kept
/// B-orthogonal to the previously converged vectors.
pub fn deflated_smallest_k(a: &SparseMatrix, b: &SparseMatrix, cfg: &SolverConfig, m: usize) -> Result<DeflatedResult> {
    if m == 0 {
        return Err(Error::config("number of eigenpairs must be at least 1"));
    }
    let p = ShiftInvert::new(a, b, cfg.sigma, &cfg.backend)?;
    deflated_smallest_k_with(a, b, &p, cfg, m)
}

pub fn deflated_smallest_k_with(
    a: &SparseMatrix,
    b: &SparseMatrix,
    p: &ShiftInvert,
    cfg: &SolverConfig,
    m: usize,
) -> Result<DeflatedResult> {
    if m > a.n() {
        return Err(Error::config(format!("requested {m} eigenpairs of a {}-dimensional pencil", a.n())));
    }
    let mut pairs: Vec<EigResult> = Vec::with_capacity(m);
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(m);
    for _ in 0..m {
        let res = lopcg_with(a, b, p, &deflated_config(cfg, found.len(), a.n()), &found)?;
        let ok = res.converged;
        found.push(res.x.clone());
        pairs.push(res);
        if !ok {
            return Ok(DeflatedResult { pairs, complete: false });
        }
    }
    pairs.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
    Ok(DeflatedResult { pairs, complete: true })
}
