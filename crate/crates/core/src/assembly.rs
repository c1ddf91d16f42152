//! Assembly of the weighted pencil `(A, B)`, corrector systems and
//! quadrature-based field utilities on structured Q1/Q2 meshes.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{DofMap, Mesh, Point, MAX_DIM};
use crate::linalg::SparseMatrix;
use crate::potentials::PotentialSpec;

/// Constant symmetric diffusion tensor; only the leading `dim x dim` block is used.
pub type Tensor = [[f64; MAX_DIM]; MAX_DIM];

pub fn identity_tensor() -> Tensor {
    let mut t = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, row) in t.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    t
}

/// Diagonal tensor with the given entries (missing trailing entries are 1).
pub fn diagonal_tensor(d: &[f64]) -> Tensor {
    let mut t = identity_tensor();
    for (i, &v) in d.iter().enumerate().take(MAX_DIM) {
        t[i][i] = v;
    }
    t
}

// ---------------------------------------------------------------------------
// Reference element

fn lagrange_1d(degree: usize, xi: f64) -> ([f64; 3], [f64; 3]) {
    match degree {
        1 => ([1.0 - xi, xi, 0.0], [-1.0, 1.0, 0.0]),
        _ => (
            [2.0 * (xi - 0.5) * (xi - 1.0), -4.0 * xi * (xi - 1.0), 2.0 * xi * (xi - 0.5)],
            [4.0 * xi - 3.0, 4.0 - 8.0 * xi, 4.0 * xi - 1.0],
        ),
    }
}

/// Gauss–Legendre points and weights on `[0, 1]`.
fn gauss_1d(n: usize) -> Vec<(f64, f64)> {
    match n {
        2 => {
            let a = 0.5 / 3f64.sqrt();
            vec![(0.5 - a, 0.5), (0.5 + a, 0.5)]
        }
        _ => {
            let a = 0.5 * (0.6f64).sqrt();
            vec![(0.5 - a, 5.0 / 18.0), (0.5, 4.0 / 9.0), (0.5 + a, 5.0 / 18.0)]
        }
    }
}

/// Shape values and reference gradients of all local nodes at `xi`.
fn shape_at(dim: usize, degree: usize, xi: &Point, values: &mut Vec<f64>, grads: &mut Vec<Point>) {
    values.clear();
    grads.clear();
    let mut v1 = [[0.0; 3]; MAX_DIM];
    let mut d1 = [[0.0; 3]; MAX_DIM];
    for d in 0..dim {
        let (v, g) = lagrange_1d(degree, xi[d]);
        v1[d] = v;
        d1[d] = g;
    }
    let n = |d: usize| if d < dim { degree + 1 } else { 1 };
    for a2 in 0..n(2) {
        for a1 in 0..n(1) {
            for a0 in 0..n(0) {
                let a = [a0, a1, a2];
                let mut val = 1.0;
                let mut grad = [0.0; MAX_DIM];
                for d in 0..dim {
                    val *= v1[d][a[d]];
                }
                for (g, grad_g) in grad.iter_mut().enumerate().take(dim) {
                    let mut p = 1.0;
                    for d in 0..dim {
                        p *= if d == g { d1[d][a[d]] } else { v1[d][a[d]] };
                    }
                    *grad_g = p;
                }
                values.push(val);
                grads.push(grad);
            }
        }
    }
}

/// Tensor Gauss rule with `order + 1` points per direction and the shape
/// tables at its points.
#[derive(Clone, Debug)]
struct RefElement {
    n_loc: usize,
    points: Vec<Point>,
    weights: Vec<f64>,
    values: Vec<f64>,
    grads: Vec<Point>,
}

impl RefElement {
    fn new(dim: usize, degree: usize) -> Self {
        let g = gauss_1d(degree + 1);
        let n = |d: usize| if d < dim { g.len() } else { 1 };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for q2 in 0..n(2) {
            for q1 in 0..n(1) {
                for q0 in 0..n(0) {
                    let q = [q0, q1, q2];
                    let mut p = [0.0; MAX_DIM];
                    let mut w = 1.0;
                    for d in 0..dim {
                        p[d] = g[q[d]].0;
                        w *= g[q[d]].1;
                    }
                    points.push(p);
                    weights.push(w);
                }
            }
        }
        let n_loc = (degree + 1).pow(dim as u32);
        let mut values = Vec::with_capacity(points.len() * n_loc);
        let mut grads = Vec::with_capacity(points.len() * n_loc);
        let (mut v, mut gr) = (Vec::new(), Vec::new());
        for p in &points {
            shape_at(dim, degree, p, &mut v, &mut gr);
            values.extend_from_slice(&v);
            grads.extend_from_slice(&gr);
        }
        Self { n_loc, points, weights, values, grads }
    }
}

// ---------------------------------------------------------------------------
// Quadrature visitor

/// Data available at one quadrature point of an active cell.
pub struct QuadPoint<'a> {
    pub cell: usize,
    pub z: Point,
    /// Physical quadrature weight (includes the cell Jacobian).
    pub weight: f64,
    /// Global node indices of the cell, local order.
    pub nodes: &'a [usize],
    /// Shape function values at the point.
    pub values: &'a [f64],
    /// Physical shape function gradients at the point.
    pub grads: &'a [Point],
}

impl QuadPoint<'_> {
    /// Interpolates nodal data at this point.
    pub fn interpolate(&self, nodal: &[f64]) -> f64 {
        self.nodes.iter().zip(self.values).map(|(&n, v)| nodal[n] * v).sum()
    }

    /// Gradient of nodal data at this point.
    pub fn gradient(&self, nodal: &[f64]) -> Point {
        let mut g = [0.0; MAX_DIM];
        for (&n, gr) in self.nodes.iter().zip(self.grads) {
            let u = nodal[n];
            for d in 0..MAX_DIM {
                g[d] += u * gr[d];
            }
        }
        g
    }
}

/// Calls `f` for every quadrature point of every active cell, in cell order.
pub fn for_each_quad_point(mesh: &Mesh, mut f: impl FnMut(&QuadPoint<'_>) -> Result<()>) -> Result<()> {
    let dim = mesh.dim();
    let re = RefElement::new(dim, mesh.order().degree());
    let h: Vec<f64> = (0..dim).map(|d| mesh.spacing(d)).collect();
    let jac: f64 = h.iter().product();
    let mut nodes = Vec::with_capacity(re.n_loc);
    let mut grads = vec![[0.0; MAX_DIM]; re.n_loc];
    for cell in 0..mesh.n_cells() {
        if !mesh.is_active(cell) {
            continue;
        }
        mesh.cell_nodes_into(cell, &mut nodes);
        let corner = mesh.cell_corner(cell);
        for (q, p) in re.points.iter().enumerate() {
            let mut z = [0.0; MAX_DIM];
            for d in 0..dim {
                z[d] = corner[d] + h[d] * p[d];
            }
            let base = q * re.n_loc;
            for (a, g) in grads.iter_mut().enumerate() {
                let r = re.grads[base + a];
                for d in 0..dim {
                    g[d] = r[d] / h[d];
                }
            }
            f(&QuadPoint {
                cell,
                z,
                weight: re.weights[q] * jac,
                nodes: &nodes,
                values: &re.values[base..base + re.n_loc],
                grads: &grads,
            })?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Discrete fields

/// A finite element function on a mesh/DOF map pair.
#[derive(Clone, Debug)]
pub struct ScalarField {
    mesh: Arc<Mesh>,
    dofmap: Arc<DofMap>,
    coeffs: Vec<f64>,
    nodal: Vec<f64>,
    periodic_extension: bool,
}

impl ScalarField {
    pub fn new(mesh: Arc<Mesh>, dofmap: Arc<DofMap>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != dofmap.n_free() {
            return Err(Error::DimensionMismatch { expected: dofmap.n_free(), got: coeffs.len() });
        }
        if dofmap.n_nodes() != mesh.n_nodes() {
            return Err(Error::config("DOF map does not belong to the mesh"));
        }
        let nodal = dofmap.to_nodal(&coeffs);
        Ok(Self { mesh, dofmap, coeffs, nodal, periodic_extension: false })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<Mesh>, dofmap: Arc<DofMap>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let dim = mesh.dim();
        let coeffs = dofmap.dof_coords(&mesh).iter().map(|z| f(&z[..dim])).collect();
        Self::new(mesh, dofmap, coeffs)
    }

    /// Evaluates outside the mesh by periodic extension in the expanding directions.
    pub fn with_periodic_extension(mut self) -> Self {
        self.periodic_extension = true;
        self
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dofmap(&self) -> &Arc<DofMap> {
        &self.dofmap
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Values at every mesh node (zero on eliminated nodes).
    pub fn nodal(&self) -> &[f64] {
        &self.nodal
    }

    fn locate(&self, z: &[f64]) -> (usize, Point) {
        let m = &*self.mesh;
        let dom = m.domain();
        let mut idx = [0usize; MAX_DIM];
        let mut xi = [0.0; MAX_DIM];
        for d in 0..m.dim() {
            let mut t = z[d] - m.origin()[d];
            if self.periodic_extension && dom.is_expanding(d) {
                t = t.rem_euclid(dom.extent(d));
            }
            let s = t / m.spacing(d);
            let cells = m.cells_per_dir()[d];
            let c = (s.floor().max(0.0) as usize).min(cells - 1);
            idx[d] = c;
            xi[d] = s - c as f64;
        }
        let c = m.cells_per_dir();
        let cell = match m.dim() {
            1 => idx[0],
            2 => idx[0] + c[0] * idx[1],
            _ => idx[0] + c[0] * (idx[1] + c[1] * idx[2]),
        };
        (cell, xi)
    }

    /// Value at an arbitrary point.
    pub fn eval(&self, z: &[f64]) -> f64 {
        let (cell, xi) = self.locate(z);
        let mut nodes = Vec::with_capacity(self.mesh.nodes_per_cell());
        self.mesh.cell_nodes_into(cell, &mut nodes);
        let (mut v, mut g) = (Vec::new(), Vec::new());
        shape_at(self.mesh.dim(), self.mesh.order().degree(), &xi, &mut v, &mut g);
        nodes.iter().zip(&v).map(|(&n, s)| self.nodal[n] * s).sum()
    }

    /// Gradient at an arbitrary point.
    pub fn eval_grad(&self, z: &[f64]) -> Point {
        let (cell, xi) = self.locate(z);
        let dim = self.mesh.dim();
        let mut nodes = Vec::new();
        self.mesh.cell_nodes_into(cell, &mut nodes);
        let (mut v, mut g) = (Vec::new(), Vec::new());
        shape_at(dim, self.mesh.order().degree(), &xi, &mut v, &mut g);
        let mut out = [0.0; MAX_DIM];
        for (&n, gr) in nodes.iter().zip(&g) {
            for d in 0..dim {
                out[d] += self.nodal[n] * gr[d] / self.mesh.spacing(d);
            }
        }
        out
    }

    fn same_discretization(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
            || (self.mesh.node_dims() == other.mesh.node_dims()
                && self.mesh.origin() == other.mesh.origin()
                && (0..self.mesh.dim()).all(|d| self.mesh.spacing(d) == other.mesh.spacing(d))
                && self.mesh.order() == other.mesh.order())
    }
}

// ---------------------------------------------------------------------------
// Coefficients

/// The weight `rho` of the pencil.
#[derive(Clone)]
pub enum Weight {
    One,
    Analytic(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
    /// Square of a discrete field, evaluated pointwise.
    FieldSquared(Arc<ScalarField>),
}

impl std::fmt::Debug for Weight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Weight::One => write!(f, "One"),
            Weight::Analytic(_) => write!(f, "Analytic(..)"),
            Weight::FieldSquared(_) => write!(f, "FieldSquared(..)"),
        }
    }
}

impl Weight {
    pub fn analytic(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Weight::Analytic(Arc::new(f))
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Weight::One => 1.0,
            Weight::Analytic(f) => f(z),
            Weight::FieldSquared(u) => {
                let v = u.eval(z);
                v * v
            }
        }
    }

    fn checked(&self, z: &[f64]) -> Result<f64> {
        let r = self.eval(z);
        if !r.is_finite() {
            return Err(Error::data(format!("non-finite weight at {z:?}")));
        }
        if r < 0.0 {
            return Err(Error::data(format!("negative weight {r:.3e} at {z:?}")));
        }
        Ok(r)
    }
}

/// Coefficients of `-div(rho D grad u) + V u = lambda rho u`.
#[derive(Clone, Debug)]
pub struct CoefficientSpec {
    pub rho: Weight,
    pub potential: PotentialSpec,
    /// Constant diffusion tensor `D`; identity when `None`.
    pub diffusion: Option<Tensor>,
}

impl CoefficientSpec {
    /// `rho = 1`, `D = I` with the given potential.
    pub fn schroedinger(potential: PotentialSpec) -> Self {
        Self { rho: Weight::One, potential, diffusion: None }
    }

    /// Weighted problem without potential.
    pub fn weighted(rho: Weight) -> Self {
        Self { rho, potential: PotentialSpec::zero(), diffusion: None }
    }

    pub fn with_diffusion(mut self, d: Tensor) -> Self {
        self.diffusion = Some(d);
        self
    }
}

// ---------------------------------------------------------------------------
// Sparsity pattern and assembly

/// CSR pattern of the DOF adjacency induced by active cells.
struct Pattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Pattern {
    fn build(mesh: &Mesh, dofmap: &DofMap) -> Self {
        let n = dofmap.n_free();
        // Nodes sharing each DOF (periodic classes).
        let mut count = vec![0usize; n + 1];
        for node in 0..mesh.n_nodes() {
            if let Some(d) = dofmap.dof(node) {
                count[d + 1] += 1;
            }
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let mut class = vec![0usize; count[n]];
        let mut fill = count.clone();
        for node in 0..mesh.n_nodes() {
            if let Some(d) = dofmap.dof(node) {
                class[fill[d]] = node;
                fill[d] += 1;
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        let mut row = Vec::new();
        let mut cell_nodes = Vec::new();
        for d in 0..n {
            row.clear();
            for &node in &class[count[d]..count[d + 1]] {
                for cell in mesh.cells_of_node(node) {
                    if !mesh.is_active(cell) {
                        continue;
                    }
                    mesh.cell_nodes_into(cell, &mut cell_nodes);
                    row.extend(cell_nodes.iter().filter_map(|&m| dofmap.dof(m)));
                }
            }
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(&row);
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }

    fn position(&self, i: usize, j: usize) -> usize {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        self.row_ptr[i] + row.binary_search(&j).expect("entry outside the assembled pattern")
    }

    fn into_matrix(self, values: Vec<f64>) -> Result<SparseMatrix> {
        SparseMatrix::from_csr(self.n, self.row_ptr, self.col_idx, values)
    }
}

struct ElementLoop<'a> {
    mesh: &'a Mesh,
    dofmap: &'a DofMap,
}

impl ElementLoop<'_> {
    /// Visits active cells; `local` fills the element matrices, which are
    /// scattered into each target value array.
    fn run<const K: usize>(
        &self,
        pattern: &Pattern,
        mut local: impl FnMut(&CellData<'_>, &mut [Vec<f64>; K]) -> Result<()>,
    ) -> Result<[Vec<f64>; K]> {
        let mesh = self.mesh;
        let dim = mesh.dim();
        let re = RefElement::new(dim, mesh.order().degree());
        let n_loc = re.n_loc;
        let h: Vec<f64> = (0..dim).map(|d| mesh.spacing(d)).collect();
        let jac: f64 = h.iter().product();
        let nnz = pattern.col_idx.len();
        let mut out: [Vec<f64>; K] = std::array::from_fn(|_| vec![0.0; nnz]);
        let mut elem: [Vec<f64>; K] = std::array::from_fn(|_| vec![0.0; n_loc * n_loc]);
        let mut nodes = Vec::with_capacity(n_loc);
        let mut dofs: Vec<Option<usize>> = Vec::with_capacity(n_loc);
        let mut zs = vec![[0.0; MAX_DIM]; re.points.len()];
        let mut grads = vec![[0.0; MAX_DIM]; re.grads.len()];
        let mut positions = vec![usize::MAX; n_loc * n_loc];
        for cell in 0..mesh.n_cells() {
            if !mesh.is_active(cell) {
                continue;
            }
            mesh.cell_nodes_into(cell, &mut nodes);
            dofs.clear();
            dofs.extend(nodes.iter().map(|&n| self.dofmap.dof(n)));
            if dofs.iter().all(|d| d.is_none()) {
                continue;
            }
            let corner = mesh.cell_corner(cell);
            for (z, p) in zs.iter_mut().zip(&re.points) {
                for d in 0..dim {
                    z[d] = corner[d] + h[d] * p[d];
                }
            }
            for (g, r) in grads.iter_mut().zip(&re.grads) {
                for d in 0..dim {
                    g[d] = r[d] / h[d];
                }
            }
            for e in elem.iter_mut() {
                e.iter_mut().for_each(|v| *v = 0.0);
            }
            let data = CellData { dim, n_loc, z: &zs, weights: &re.weights, jac, values: &re.values, grads: &grads };
            local(&data, &mut elem)?;
            for a in 0..n_loc {
                let Some(i) = dofs[a] else { continue };
                for b in 0..n_loc {
                    positions[a * n_loc + b] = match dofs[b] {
                        Some(j) => pattern.position(i, j),
                        None => usize::MAX,
                    };
                }
            }
            for (o, e) in out.iter_mut().zip(&elem) {
                for a in 0..n_loc {
                    if dofs[a].is_none() {
                        continue;
                    }
                    for b in 0..n_loc {
                        let p = positions[a * n_loc + b];
                        if p != usize::MAX {
                            o[p] += e[a * n_loc + b];
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Per-cell quadrature tables handed to element kernels.
struct CellData<'a> {
    dim: usize,
    n_loc: usize,
    z: &'a [Point],
    weights: &'a [f64],
    jac: f64,
    values: &'a [f64],
    grads: &'a [Point],
}

fn checked_potential(v: &PotentialSpec, z: &[f64]) -> Result<f64> {
    let val = v.eval(z);
    if !val.is_finite() {
        return Err(Error::data(format!("non-finite potential at {z:?}")));
    }
    Ok(val)
}

/// Assembles `A` (weighted stiffness plus potential mass) and `B` (weighted
/// mass) over the active cells.
pub fn assemble_pencil(mesh: &Mesh, dofmap: &DofMap, coeff: &CoefficientSpec) -> Result<(SparseMatrix, SparseMatrix)> {
    check_pair(mesh, dofmap)?;
    let pattern = Pattern::build(mesh, dofmap);
    let tensor = coeff.diffusion.unwrap_or_else(identity_tensor);
    let has_potential = !coeff.potential.is_zero();
    let [a_vals, b_vals] = ElementLoop { mesh, dofmap }.run::<2>(&pattern, |c, [ke, me]| {
        let n = c.n_loc;
        for q in 0..c.weights.len() {
            let z = &c.z[q][..c.dim];
            let w = c.weights[q] * c.jac;
            let rho = coeff.rho.checked(z)?;
            let v = if has_potential { checked_potential(&coeff.potential, z)? } else { 0.0 };
            let phi = &c.values[q * n..(q + 1) * n];
            let grad = &c.grads[q * n..(q + 1) * n];
            // D grad phi_b, reused across a.
            let mut dg = [[0.0; MAX_DIM]; 27];
            for b in 0..n {
                for i in 0..c.dim {
                    dg[b][i] = (0..c.dim).map(|j| tensor[i][j] * grad[b][j]).sum();
                }
            }
            for a in 0..n {
                let wa = w * phi[a];
                for b in a..n {
                    let stiff: f64 = (0..c.dim).map(|i| grad[a][i] * dg[b][i]).sum();
                    let mass = wa * phi[b];
                    ke[a * n + b] += w * rho * stiff + v * mass;
                    me[a * n + b] += rho * mass;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                ke[a * n + b] = ke[b * n + a];
                me[a * n + b] = me[b * n + a];
            }
        }
        Ok(())
    })?;
    let b_pattern = Pattern { n: pattern.n, row_ptr: pattern.row_ptr.clone(), col_idx: pattern.col_idx.clone() };
    Ok((pattern.into_matrix(a_vals)?, b_pattern.into_matrix(b_vals)?))
}

fn check_pair(mesh: &Mesh, dofmap: &DofMap) -> Result<()> {
    if dofmap.n_nodes() != mesh.n_nodes() {
        return Err(Error::config("DOF map does not belong to the mesh"));
    }
    Ok(())
}

/// Weighted stiffness `K` of the cell problem (no potential, no mass).
pub fn assemble_weighted_stiffness(mesh: &Mesh, dofmap: &DofMap, rho: &Weight) -> Result<SparseMatrix> {
    check_pair(mesh, dofmap)?;
    let pattern = Pattern::build(mesh, dofmap);
    let [vals] = ElementLoop { mesh, dofmap }.run::<1>(&pattern, |c, [ke]| {
        let n = c.n_loc;
        for q in 0..c.weights.len() {
            let wr = c.weights[q] * c.jac * rho.checked(&c.z[q][..c.dim])?;
            let grad = &c.grads[q * n..(q + 1) * n];
            for a in 0..n {
                for b in a..n {
                    let s: f64 = (0..c.dim).map(|i| grad[a][i] * grad[b][i]).sum();
                    ke[a * n + b] += wr * s;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                ke[a * n + b] = ke[b * n + a];
            }
        }
        Ok(())
    })?;
    pattern.into_matrix(vals)
}

/// Relative tolerance of the corrector compatibility check.
pub const CORRECTOR_CONSISTENCY_TOL: f64 = 1e-10;

/// Right-hand side `f_j = -int rho d(v_j)/dx_i` of the cell problem for
/// direction `i`, checked for compatibility with the constant nullspace.
pub fn assemble_corrector_rhs(mesh: &Mesh, dofmap: &DofMap, rho: &Weight, i: usize) -> Result<Vec<f64>> {
    check_pair(mesh, dofmap)?;
    if i >= mesh.domain().p {
        return Err(Error::config(format!(
            "corrector direction {} is not an expanding direction (p = {})",
            i + 1,
            mesh.domain().p
        )));
    }
    let mut f = vec![0.0; dofmap.n_free()];
    // Sum of |contributions|: the scale of round-off in 1^T f.
    let mut gross = 0.0;
    for_each_quad_point(mesh, |qp| {
        let r = rho.checked(&qp.z[..mesh.dim()])?;
        for (&node, g) in qp.nodes.iter().zip(qp.grads) {
            if let Some(j) = dofmap.dof(node) {
                let c = qp.weight * r * g[i];
                f[j] -= c;
                gross += c.abs();
            }
        }
        Ok(())
    })?;
    let sum: f64 = f.iter().sum();
    let limit = CORRECTOR_CONSISTENCY_TOL * gross;
    if sum.abs() > limit {
        return Err(Error::InconsistentSystem { sum: sum.abs(), limit });
    }
    Ok(f)
}

/// `(K, f)` of the corrector problem `-div(rho (e_i + grad theta_i)) = 0`.
pub fn assemble_corrector_system(
    mesh: &Mesh,
    dofmap: &DofMap,
    rho: &Weight,
    i: usize,
) -> Result<(SparseMatrix, Vec<f64>)> {
    let f = assemble_corrector_rhs(mesh, dofmap, rho, i)?;
    Ok((assemble_weighted_stiffness(mesh, dofmap, rho)?, f))
}

// ---------------------------------------------------------------------------
// Norms

/// Weighted norms of `u - v` and the inner product of `u` and `v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldNorms {
    pub l2_error: f64,
    /// `||u - v|| / ||v||`, `None` when `v` vanishes.
    pub relative_error: Option<f64>,
    pub inner: f64,
}

/// Quadrature evaluation of `||u - v||_rho`, the relative error and `<u, v>_rho`.
pub fn field_norms(u: &ScalarField, v: &ScalarField, rho: &Weight) -> Result<FieldNorms> {
    if !u.same_discretization(v) {
        return Err(Error::config("fields live on different meshes"));
    }
    let dim = u.mesh.dim();
    let (mut diff2, mut v2, mut uv) = (0.0, 0.0, 0.0);
    for_each_quad_point(&u.mesh, |qp| {
        let w = qp.weight * rho.checked(&qp.z[..dim])?;
        let a = qp.interpolate(&u.nodal);
        let b = qp.interpolate(&v.nodal);
        diff2 += w * (a - b) * (a - b);
        v2 += w * b * b;
        uv += w * a * b;
        Ok(())
    })?;
    Ok(FieldNorms { l2_error: diff2.sqrt(), relative_error: (v2 > 0.0).then(|| (diff2 / v2).sqrt()), inner: uv })
}

/// Like [`field_norms`] with an analytic reference `f` in place of `v`.
pub fn field_norms_analytic(u: &ScalarField, f: impl Fn(&[f64]) -> f64, rho: &Weight) -> Result<FieldNorms> {
    let dim = u.mesh.dim();
    let (mut diff2, mut v2, mut uv) = (0.0, 0.0, 0.0);
    for_each_quad_point(&u.mesh, |qp| {
        let z = &qp.z[..dim];
        let w = qp.weight * rho.checked(z)?;
        let a = qp.interpolate(&u.nodal);
        let b = f(z);
        diff2 += w * (a - b) * (a - b);
        v2 += w * b * b;
        uv += w * a * b;
        Ok(())
    })?;
    Ok(FieldNorms { l2_error: diff2.sqrt(), relative_error: (v2 > 0.0).then(|| (diff2 / v2).sqrt()), inner: uv })
}

/// `int rho` over the active cells.
pub fn integrate_weight(mesh: &Mesh, rho: &Weight) -> Result<f64> {
    let dim = mesh.dim();
    let mut total = 0.0;
    for_each_quad_point(mesh, |qp| {
        total += qp.weight * rho.checked(&qp.z[..dim])?;
        Ok(())
    })?;
    Ok(total)
}
