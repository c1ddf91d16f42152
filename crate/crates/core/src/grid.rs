//! Structured tensor-product meshes on box domains, cell masking and
//! degree-of-freedom maps under per-direction boundary conditions.
//!
//! Directions are ordered with the `p` expanding directions first, followed by
//! the `q` fixed directions. Nodes and cells are numbered lexicographically with
//! the first direction running fastest.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Highest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// A point in up to three dimensions; unused trailing components are zero.
pub type Point = [f64; MAX_DIM];

/// The box `(0,L)^p x (0,ell)^q`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub p: usize,
    pub q: usize,
    pub length: f64,
    pub ell: f64,
}

impl DomainSpec {
    pub fn new(p: usize, q: usize, length: f64, ell: f64) -> Result<Self> {
        if p + q == 0 || p + q > MAX_DIM {
            return Err(Error::config(format!("dimension p + q = {} must lie in 1..={MAX_DIM}", p + q)));
        }
        if !(length > 0.0 && length.is_finite()) || !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::config(format!("box lengths must be positive and finite (L = {length}, ell = {ell})")));
        }
        Ok(Self { p, q, length, ell })
    }

    pub fn dim(&self) -> usize {
        self.p + self.q
    }

    /// Edge length of direction `d`.
    pub fn extent(&self, d: usize) -> f64 {
        if d < self.p {
            self.length
        } else {
            self.ell
        }
    }

    /// Volume of the box.
    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.extent(d)).product()
    }

    /// True if direction `d` is one of the expanding (`x`) directions.
    pub fn is_expanding(&self, d: usize) -> bool {
        d < self.p
    }
}

/// Lagrange element order on hexahedral/quadrilateral/interval cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementOrder {
    Linear,
    Quadratic,
}

impl ElementOrder {
    pub fn degree(self) -> usize {
        match self {
            ElementOrder::Linear => 1,
            ElementOrder::Quadratic => 2,
        }
    }
}

impl TryFrom<usize> for ElementOrder {
    type Error = Error;

    fn try_from(value: usize) -> Result<Self> {
        match value {
            1 => Ok(ElementOrder::Linear),
            2 => Ok(ElementOrder::Quadratic),
            other => Err(Error::config(format!("element order must be 1 or 2, got {other}"))),
        }
    }
}

/// Geometric region used for cell masks and barrier potentials.
#[derive(Clone)]
pub enum Region {
    /// Every point.
    Everything,
    /// Union of open disks in the first two coordinates.
    UnionOfDisks { centers: Vec<[f64; 2]>, radius: f64 },
    /// Arbitrary membership test.
    Custom(Arc<dyn Fn(&[f64]) -> bool + Send + Sync>),
}

impl Region {
    /// Chain of `n` disks of radius `big_r` centered at `(big_r + 2(i-1)r, 0)`.
    pub fn disk_chain(n: usize, big_r: f64, r: f64) -> Self {
        let centers = (0..n).map(|i| [big_r + 2.0 * i as f64 * r, 0.0]).collect();
        Region::UnionOfDisks { centers, radius: big_r }
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        match self {
            Region::Everything => true,
            Region::UnionOfDisks { centers, radius } => centers.iter().any(|c| {
                let dx = z[0] - c[0];
                let dy = z[1] - c[1];
                (dx * dx + dy * dy).sqrt() < *radius
            }),
            Region::Custom(f) => f(z),
        }
    }
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Everything => write!(f, "Everything"),
            Region::UnionOfDisks { centers, radius } => {
                f.debug_struct("UnionOfDisks").field("centers", centers).field("radius", radius).finish()
            }
            Region::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Structured tensor-product mesh with an optional active-cell mask.
#[derive(Clone, Debug)]
pub struct Mesh {
    domain: DomainSpec,
    dim: usize,
    order: ElementOrder,
    origin: Point,
    cells: [usize; MAX_DIM],
    node_dims: [usize; MAX_DIM],
    spacing: Point,
    active: Vec<bool>,
    node_used: Vec<bool>,
    masked: bool,
}

/// Builds the full (unmasked) tensor-product mesh of `domain`.
pub fn build_box_mesh(domain: &DomainSpec, cells_per_dir: &[usize], order: ElementOrder) -> Result<Mesh> {
    let dim = domain.dim();
    if cells_per_dir.len() != dim {
        return Err(Error::config(format!(
            "domain has {dim} directions but {} cell counts were given",
            cells_per_dir.len()
        )));
    }
    if cells_per_dir.iter().any(|&c| c == 0) {
        return Err(Error::config("every direction needs at least one cell"));
    }
    let k = order.degree();
    let mut cells = [1; MAX_DIM];
    let mut node_dims = [1; MAX_DIM];
    let mut spacing = [0.0; MAX_DIM];
    for d in 0..dim {
        cells[d] = cells_per_dir[d];
        node_dims[d] = k * cells_per_dir[d] + 1;
        spacing[d] = domain.extent(d) / cells_per_dir[d] as f64;
    }
    let n_cells: usize = cells.iter().product();
    let n_nodes: usize = node_dims.iter().product();
    Ok(Mesh {
        domain: domain.clone(),
        dim,
        order,
        origin: [0.0; MAX_DIM],
        cells,
        node_dims,
        spacing,
        active: vec![true; n_cells],
        node_used: vec![true; n_nodes],
        masked: false,
    })
}

impl Mesh {
    /// Translates the mesh so that its lower corner sits at `origin`.
    pub fn with_origin(mut self, origin: &[f64]) -> Result<Self> {
        if origin.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: origin.len() });
        }
        self.origin[..self.dim].copy_from_slice(origin);
        Ok(self)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> ElementOrder {
        self.order
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn cells_per_dir(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn node_dims(&self) -> &[usize] {
        &self.node_dims[..self.dim]
    }

    /// Cell width `h_d` in direction `d`.
    pub fn spacing(&self, d: usize) -> f64 {
        self.spacing[d]
    }

    /// Largest cell width.
    pub fn max_spacing(&self) -> f64 {
        (0..self.dim).map(|d| self.spacing[d]).fold(0.0, f64::max)
    }

    pub fn n_nodes(&self) -> usize {
        self.node_used.len()
    }

    pub fn n_cells(&self) -> usize {
        self.active.len()
    }

    pub fn n_active_cells(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Number of nodes that touch at least one active cell.
    pub fn n_used_nodes(&self) -> usize {
        self.node_used.iter().filter(|&&u| u).count()
    }

    pub fn is_masked(&self) -> bool {
        self.masked
    }

    pub fn is_active(&self, cell: usize) -> bool {
        self.active[cell]
    }

    pub fn is_node_used(&self, node: usize) -> bool {
        self.node_used[node]
    }

    /// Total measure of the active cells.
    pub fn active_volume(&self) -> f64 {
        let cell_volume: f64 = (0..self.dim).map(|d| self.spacing[d]).product();
        cell_volume * self.n_active_cells() as f64
    }

    pub fn node_multi_index(&self, node: usize) -> [usize; MAX_DIM] {
        let mut rest = node;
        let mut idx = [0; MAX_DIM];
        for d in 0..MAX_DIM {
            idx[d] = rest % self.node_dims[d];
            rest /= self.node_dims[d];
        }
        idx
    }

    pub fn node_index(&self, idx: &[usize; MAX_DIM]) -> usize {
        idx[0] + self.node_dims[0] * (idx[1] + self.node_dims[1] * idx[2])
    }

    pub fn cell_multi_index(&self, cell: usize) -> [usize; MAX_DIM] {
        let mut rest = cell;
        let mut idx = [0; MAX_DIM];
        for d in 0..MAX_DIM {
            idx[d] = rest % self.cells[d];
            rest /= self.cells[d];
        }
        idx
    }

    /// Coordinate of a node, computed as `origin + i * (h / order)`.
    pub fn node_coord(&self, node: usize) -> Point {
        let idx = self.node_multi_index(node);
        let k = self.order.degree() as f64;
        let mut z = [0.0; MAX_DIM];
        for d in 0..self.dim {
            z[d] = self.origin[d] + idx[d] as f64 * (self.spacing[d] / k);
        }
        z
    }

    /// Lower corner of a cell.
    pub fn cell_corner(&self, cell: usize) -> Point {
        let idx = self.cell_multi_index(cell);
        let mut z = [0.0; MAX_DIM];
        for d in 0..self.dim {
            z[d] = self.origin[d] + idx[d] as f64 * self.spacing[d];
        }
        z
    }

    pub fn cell_center(&self, cell: usize) -> Point {
        let mut z = self.cell_corner(cell);
        for d in 0..self.dim {
            z[d] += 0.5 * self.spacing[d];
        }
        z
    }

    /// Number of nodes per element, `(order + 1)^dim`.
    pub fn nodes_per_cell(&self) -> usize {
        (self.order.degree() + 1).pow(self.dim as u32)
    }

    /// Global node indices of a cell, local ordering lexicographic with the
    /// first direction fastest.
    pub fn cell_nodes_into(&self, cell: usize, out: &mut Vec<usize>) {
        out.clear();
        let k = self.order.degree();
        let c = self.cell_multi_index(cell);
        let n_loc = |d: usize| if d < self.dim { k + 1 } else { 1 };
        for a2 in 0..n_loc(2) {
            for a1 in 0..n_loc(1) {
                for a0 in 0..n_loc(0) {
                    let idx = [k * c[0] + a0, k * c[1] + a1, k * c[2] + a2];
                    out.push(self.node_index(&idx));
                }
            }
        }
    }

    pub fn cell_nodes(&self, cell: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes_per_cell());
        self.cell_nodes_into(cell, &mut out);
        out
    }

    /// Cells (active or not) that contain the node.
    pub fn cells_of_node(&self, node: usize) -> Vec<usize> {
        let k = self.order.degree();
        let idx = self.node_multi_index(node);
        let mut ranges = [(0usize, 0usize); MAX_DIM];
        for d in 0..MAX_DIM {
            if d >= self.dim {
                ranges[d] = (0, 0);
                continue;
            }
            let i = idx[d];
            let lo = if i >= k { (i - k).div_ceil(k) } else { 0 };
            let hi = (i / k).min(self.cells[d] - 1);
            ranges[d] = (lo, hi);
        }
        let mut out = Vec::new();
        for c2 in ranges[2].0..=ranges[2].1 {
            for c1 in ranges[1].0..=ranges[1].1 {
                for c0 in ranges[0].0..=ranges[0].1 {
                    out.push(c0 + self.cells[0] * (c1 + self.cells[1] * c2));
                }
            }
        }
        out
    }

    /// Deactivates every cell whose center fails `keep`. Masks intersect.
    pub fn mask_cells(&self, keep: impl Fn(&[f64]) -> bool) -> Result<Mesh> {
        let mut out = self.clone();
        for cell in 0..out.active.len() {
            if out.active[cell] {
                let c = self.cell_center(cell);
                out.active[cell] = keep(&c[..self.dim]);
            }
        }
        if !out.active.iter().any(|&a| a) {
            return Err(Error::config("cell mask removed every cell"));
        }
        out.node_used = vec![false; out.n_nodes()];
        let mut buf = Vec::new();
        for cell in 0..out.active.len() {
            if out.active[cell] {
                out.cell_nodes_into(cell, &mut buf);
                for &n in &buf {
                    out.node_used[n] = true;
                }
            }
        }
        out.masked = out.active.iter().any(|&a| !a) || self.masked;
        Ok(out)
    }

    /// Masks with a [`Region`] evaluated at cell centers.
    pub fn mask_region(&self, region: &Region) -> Result<Mesh> {
        self.mask_cells(|z| region.contains(z))
    }
}

/// Summary line: dimensions, cells, active count.
impl fmt::Display for Mesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells: Vec<String> = self.cells_per_dir().iter().map(|c| c.to_string()).collect();
        write!(
            f,
            "mesh d={} (p={}, q={}) Q{} cells={} active={}/{} nodes={}",
            self.dim,
            self.domain.p,
            self.domain.q,
            self.order.degree(),
            cells.join("x"),
            self.n_active_cells(),
            self.n_cells(),
            self.n_used_nodes()
        )?;
        if self.masked {
            write!(f, " (masked, O(h) boundary approximation)")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
    Periodic,
}

/// Treatment of boundaries created by cell masking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InternalBoundary {
    /// Homogeneous Dirichlet ("hard barrier").
    #[default]
    Eliminate,
    /// Natural (Neumann) condition.
    Natural,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundarySpec {
    pub bx: BoundaryCondition,
    pub by: BoundaryCondition,
    pub internal: InternalBoundary,
}

impl BoundarySpec {
    pub fn new(bx: BoundaryCondition, by: BoundaryCondition) -> Self {
        Self { bx, by, internal: InternalBoundary::Eliminate }
    }

    pub fn dirichlet() -> Self {
        Self::new(BoundaryCondition::Dirichlet, BoundaryCondition::Dirichlet)
    }

    pub fn with_internal(mut self, internal: InternalBoundary) -> Self {
        self.internal = internal;
        self
    }

    fn for_direction(&self, domain: &DomainSpec, d: usize) -> BoundaryCondition {
        if domain.is_expanding(d) {
            self.bx
        } else {
            self.by
        }
    }
}

/// Map from mesh nodes to free degrees of freedom.
#[derive(Clone, Debug)]
pub struct DofMap {
    n_free: usize,
    node_to_dof: Vec<Option<usize>>,
    periodic_rep: Vec<usize>,
    dof_to_node: Vec<usize>,
    bc: BoundarySpec,
}

impl DofMap {
    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Free DOF of a node, `None` if eliminated or outside the active mesh.
    pub fn dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    /// Periodic representative of a node (the node itself if not identified).
    pub fn representative(&self, node: usize) -> usize {
        self.periodic_rep[node]
    }

    /// Representative node carrying a DOF.
    pub fn node_of_dof(&self, dof: usize) -> usize {
        self.dof_to_node[dof]
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.bc
    }

    pub fn n_nodes(&self) -> usize {
        self.node_to_dof.len()
    }

    /// Coordinates of the representative node of each DOF.
    pub fn dof_coords(&self, mesh: &Mesh) -> Vec<Point> {
        self.dof_to_node.iter().map(|&n| mesh.node_coord(n)).collect()
    }

    /// Scatters a DOF vector into nodal values (zero on eliminated nodes).
    pub fn to_nodal(&self, values: &[f64]) -> Vec<f64> {
        self.node_to_dof.iter().map(|d| d.map(|i| values[i]).unwrap_or(0.0)).collect()
    }
}

/// Builds the DOF map of `mesh` under `bc`.
pub fn build_dof_map(mesh: &Mesh, bc: &BoundarySpec) -> Result<DofMap> {
    let dim = mesh.dim();
    let domain = mesh.domain();
    let n_nodes = mesh.n_nodes();
    let dims = mesh.node_dims().to_vec();

    let mut eliminated = vec![false; n_nodes];
    for node in 0..n_nodes {
        if !mesh.is_node_used(node) {
            continue;
        }
        let idx = mesh.node_multi_index(node);
        for d in 0..dim {
            if bc.for_direction(domain, d) == BoundaryCondition::Dirichlet && (idx[d] == 0 || idx[d] == dims[d] - 1) {
                eliminated[node] = true;
            }
        }
        if mesh.is_masked()
            && bc.internal == InternalBoundary::Eliminate
            && mesh.cells_of_node(node).iter().any(|&c| !mesh.is_active(c))
        {
            eliminated[node] = true;
        }
    }

    let periodic_dirs: Vec<usize> =
        (0..dim).filter(|&d| bc.for_direction(domain, d) == BoundaryCondition::Periodic).collect();
    let mut rep: Vec<usize> = (0..n_nodes).collect();
    for node in 0..n_nodes {
        let mut idx = mesh.node_multi_index(node);
        let mut moved = false;
        for &d in &periodic_dirs {
            if idx[d] == dims[d] - 1 {
                idx[d] = 0;
                moved = true;
            }
        }
        if moved {
            let r = mesh.node_index(&idx);
            if mesh.is_node_used(node) != mesh.is_node_used(r) {
                return Err(Error::config(
                    "periodic boundary requested on faces that the cell mask does not keep congruent",
                ));
            }
            rep[node] = r;
        }
    }

    let mut class_eliminated = vec![false; n_nodes];
    for node in 0..n_nodes {
        if mesh.is_node_used(node) && eliminated[node] {
            class_eliminated[rep[node]] = true;
        }
    }

    let mut rep_dof = vec![None; n_nodes];
    let mut dof_to_node = Vec::new();
    for node in 0..n_nodes {
        if mesh.is_node_used(node) && rep[node] == node && !class_eliminated[node] {
            rep_dof[node] = Some(dof_to_node.len());
            dof_to_node.push(node);
        }
    }
    let node_to_dof: Vec<Option<usize>> =
        (0..n_nodes).map(|n| if mesh.is_node_used(n) { rep_dof[rep[n]] } else { None }).collect();

    if dof_to_node.is_empty() {
        return Err(Error::config("boundary conditions leave no free degrees of freedom"));
    }
    Ok(DofMap { n_free: dof_to_node.len(), node_to_dof, periodic_rep: rep, dof_to_node, bc: *bc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use BoundaryCondition::*;

    fn square(cells: usize, order: ElementOrder) -> Mesh {
        let dom = DomainSpec::new(1, 1, 1.0, 1.0).unwrap();
        build_box_mesh(&dom, &[cells, cells], order).unwrap()
    }

    #[test]
    fn lattice_counts() {
        let m = square(2, ElementOrder::Linear);
        assert_eq!(m.n_nodes(), 9);
        assert_eq!(m.n_cells(), 4);

        let dom = DomainSpec::new(1, 1, 2.0, 1.0).unwrap();
        let m = build_box_mesh(&dom, &[4, 2], ElementOrder::Quadratic).unwrap();
        assert_eq!(m.n_nodes(), 45);

        let dom = DomainSpec::new(2, 1, 1.0, 1.0).unwrap();
        let m = build_box_mesh(&dom, &[10, 10, 10], ElementOrder::Linear).unwrap();
        assert_eq!(m.n_nodes(), 1331);
        assert_eq!(m.spacing(0), 0.1);
    }

    #[test]
    fn node_coordinates_are_index_times_spacing() {
        let dom = DomainSpec::new(1, 1, 3.0, 1.0).unwrap();
        let m = build_box_mesh(&dom, &[7, 3], ElementOrder::Linear).unwrap();
        for node in 0..m.n_nodes() {
            let idx = m.node_multi_index(node);
            let z = m.node_coord(node);
            assert_eq!(z[0], idx[0] as f64 * (3.0 / 7.0));
            assert_eq!(z[1], idx[1] as f64 * (1.0 / 3.0));
        }
    }

    #[test]
    fn configuration_errors() {
        let dom = DomainSpec::new(1, 1, 1.0, 1.0).unwrap();
        assert!(matches!(build_box_mesh(&dom, &[2], ElementOrder::Linear), Err(Error::Config(_))));
        assert!(build_box_mesh(&dom, &[2, 0], ElementOrder::Linear).is_err());
        assert!(DomainSpec::new(2, 2, 1.0, 1.0).is_err());
        assert!(DomainSpec::new(0, 0, 1.0, 1.0).is_err());
        assert!(DomainSpec::new(1, 0, -1.0, 1.0).is_err());
        assert!(ElementOrder::try_from(3).is_err());
    }

    #[test]
    fn disk_mask_removes_corners() {
        let dom = DomainSpec::new(1, 1, 4.0, 4.0).unwrap();
        let m = build_box_mesh(&dom, &[4, 4], ElementOrder::Linear).unwrap();
        let masked = m.mask_cells(|z| ((z[0] - 2.0).powi(2) + (z[1] - 2.0).powi(2)).sqrt() < 2.0).unwrap();
        // Brute force over the 16 centers.
        let mut expected = 0;
        for j in 0..4 {
            for i in 0..4 {
                let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
                if ((x - 2.0f64).powi(2) + (y - 2.0f64).powi(2)).sqrt() < 2.0 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 12);
        assert_eq!(masked.n_active_cells(), expected);
        // Corner nodes no longer touch an active cell.
        assert!(!masked.is_node_used(0));
        assert_eq!(masked.n_used_nodes(), 25 - 4);
    }

    #[test]
    fn identity_mask_and_empty_mask() {
        let m = square(3, ElementOrder::Quadratic);
        let same = m.mask_cells(|_| true).unwrap();
        assert_eq!(same.n_active_cells(), m.n_active_cells());
        assert!(!same.is_masked());
        assert!(matches!(m.mask_cells(|_| false), Err(Error::Config(_))));
    }

    #[test]
    fn single_disk_chain_mask_matches_enumeration() {
        let dom = DomainSpec::new(1, 1, 2.0, 2.0).unwrap();
        let n = 40;
        let m = build_box_mesh(&dom, &[n, n], ElementOrder::Linear).unwrap().with_origin(&[0.0, -1.0]).unwrap();
        let region = Region::disk_chain(1, 1.0, 0.9);
        let masked = m.mask_region(&region).unwrap();
        let h = 2.0 / n as f64;
        let mut count = 0;
        for j in 0..n {
            for i in 0..n {
                let x = (i as f64 + 0.5) * h;
                let y = -1.0 + (j as f64 + 0.5) * h;
                if ((x - 1.0).powi(2) + y * y).sqrt() < 1.0 {
                    count += 1;
                }
            }
        }
        assert_eq!(masked.n_active_cells(), count);
    }

    fn line(cells: usize) -> Mesh {
        let dom = DomainSpec::new(0, 1, 1.0, 1.0).unwrap();
        build_box_mesh(&dom, &[cells], ElementOrder::Linear).unwrap()
    }

    #[test]
    fn one_dimensional_dof_counts() {
        let m = line(4);
        let d = build_dof_map(&m, &BoundarySpec::new(Neumann, Dirichlet)).unwrap();
        assert_eq!(d.n_free(), 3);
        let d = build_dof_map(&m, &BoundarySpec::new(Neumann, Periodic)).unwrap();
        assert_eq!(d.n_free(), 4);
        assert_eq!(d.dof(4), d.dof(0));
        let d = build_dof_map(&m, &BoundarySpec::new(Neumann, Neumann)).unwrap();
        assert_eq!(d.n_free(), 5);
    }

    #[test]
    fn periodic_x_dirichlet_y() {
        let m = square(2, ElementOrder::Linear);
        let d = build_dof_map(&m, &BoundarySpec::new(Periodic, Dirichlet)).unwrap();
        assert_eq!(d.n_free(), 2);
    }

    #[test]
    fn all_dirichlet_leaves_interior() {
        let dom = DomainSpec::new(1, 1, 1.0, 1.0).unwrap();
        let m = build_box_mesh(&dom, &[5, 3], ElementOrder::Linear).unwrap();
        let d = build_dof_map(&m, &BoundarySpec::dirichlet()).unwrap();
        assert_eq!(d.n_free(), 4 * 2);
        let single = line(1);
        assert!(build_dof_map(&single, &BoundarySpec::new(Neumann, Dirichlet)).is_err());
    }

    #[test]
    fn masked_boundary_nodes_are_eliminated() {
        let dom = DomainSpec::new(1, 1, 4.0, 4.0).unwrap();
        let m = build_box_mesh(&dom, &[4, 4], ElementOrder::Linear).unwrap();
        let masked = m.mask_cells(|z| !(z[0] < 1.0 && z[1] < 1.0)).unwrap();
        let natural = BoundarySpec::new(Neumann, Neumann).with_internal(InternalBoundary::Natural);
        let hard = BoundarySpec::new(Neumann, Neumann);
        let dn = build_dof_map(&masked, &natural).unwrap();
        let dh = build_dof_map(&masked, &hard).unwrap();
        assert_eq!(dn.n_free(), 24);
        // Nodes (1,0), (1,1), (0,1) touch the removed cell.
        assert_eq!(dh.n_free(), 21);
    }

    #[test]
    fn periodic_with_incompatible_mask_fails() {
        let dom = DomainSpec::new(1, 1, 4.0, 4.0).unwrap();
        let m = build_box_mesh(&dom, &[4, 4], ElementOrder::Linear).unwrap();
        let masked = m.mask_cells(|z| !(z[0] < 1.0 && z[1] > 3.0)).unwrap();
        let bc = BoundarySpec::new(Periodic, Neumann);
        assert!(matches!(build_dof_map(&masked, &bc), Err(Error::Config(_))));
    }

    #[test]
    fn display_mentions_counts() {
        let m = square(2, ElementOrder::Linear);
        let s = m.to_string();
        assert!(s.contains("cells=2x2"));
        assert!(s.contains("active=4/4"));
    }
}
