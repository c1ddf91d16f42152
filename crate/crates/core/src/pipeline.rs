//! Experiment orchestration: quasi-optimal shifts from the unit cell,
//! swept solves on expanding domains, the factorization check and CSV output.

use std::f64::consts::PI;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::assembly::{assemble_pencil, diagonal_tensor, field_norms_analytic, CoefficientSpec, ScalarField, Weight};
use crate::eigensolve::{deflated_config, solve_with, EigResult, Solver, SolverConfig};
use crate::error::{Error, Result};
use crate::grid::{
    build_box_mesh, build_dof_map, BoundaryCondition, BoundarySpec, DofMap, DomainSpec, ElementOrder, Mesh, Region,
};
use crate::homogenize::{align_degenerate_pair, is_degenerate, HomogenizedModel};
use crate::linalg::{Backend, Ordering, ShiftInvert, SparseMatrix};
use crate::potentials::{CoulombChain, PotentialKind, PotentialSpec, WellNorm};

/// Header of `summary.csv`.
pub const SUMMARY_HEADER: &str = "L,n_nodes,lambda1,max_phi1,k_it,t_eig";

/// Slack allowed when checking `sigma <= lambda_1`.
pub const SHIFT_SLACK: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Configuration

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentId {
    LaplaceGap,
    PrecondCompare,
    HomogStudy,
    Chain,
    KronigPenney,
    FactorizationCheck,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::LaplaceGap,
        ExperimentId::PrecondCompare,
        ExperimentId::HomogStudy,
        ExperimentId::Chain,
        ExperimentId::KronigPenney,
        ExperimentId::FactorizationCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::LaplaceGap => "laplace-gap",
            ExperimentId::PrecondCompare => "precond-compare",
            ExperimentId::HomogStudy => "homog-study",
            ExperimentId::Chain => "chain",
            ExperimentId::KronigPenney => "kronig-penney",
            ExperimentId::FactorizationCheck => "factorization-check",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment '{s}'")))
    }
}

/// How the shift is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShiftMode {
    /// `sigma = 0`.
    None,
    /// `sigma = f * lambda_inf`, `f` in `[0, 1]`.
    Fraction(f64),
    /// `sigma = lambda_inf`.
    Optimal,
    Manual(f64),
}

impl ShiftMode {
    /// Parses `none | good | optimal | manual`; `good` uses `fraction`.
    pub fn parse(name: &str, sigma: Option<f64>, fraction: f64) -> Result<Self> {
        let mode = match name {
            "none" => ShiftMode::None,
            "good" => ShiftMode::Fraction(fraction),
            "optimal" => ShiftMode::Optimal,
            "manual" => {
                ShiftMode::Manual(sigma.ok_or_else(|| Error::config("shift mode 'manual' needs a sigma value"))?)
            }
            other => return Err(Error::config(format!("unknown shift mode '{other}'"))),
        };
        mode.validate()?;
        Ok(mode)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ShiftMode::Fraction(f) if !(0.0..=1.0).contains(&f) => {
                Err(Error::config(format!("shift fraction {f} outside [0, 1]")))
            }
            ShiftMode::Manual(s) if !s.is_finite() => Err(Error::config("manual shift must be finite")),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ShiftMode::None => "none",
            ShiftMode::Fraction(_) => "good",
            ShiftMode::Optimal => "optimal",
            ShiftMode::Manual(_) => "manual",
        }
    }

    fn needs_cell(&self) -> bool {
        matches!(self, ShiftMode::Fraction(_) | ShiftMode::Optimal)
    }
}

fn solver_label(s: Solver) -> &'static str {
    match s {
        Solver::InversePower => "ip",
        Solver::Lopcg => "lopcg",
    }
}

fn parse_solver(s: &str) -> Result<Solver> {
    match s {
        "ip" => Ok(Solver::InversePower),
        "lopcg" => Ok(Solver::Lopcg),
        other => Err(Error::config(format!("unknown solver '{other}'"))),
    }
}

/// Disk-chain geometry: disks of radius `big_r` with centers `2 r` apart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainParams {
    pub big_r: f64,
    pub r: f64,
    pub charge: f64,
    pub cutoff: f64,
}

impl ChainParams {
    fn period(&self) -> f64 {
        2.0 * self.r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    /// `(0, L)^p x (0, ell)^q`.
    Box,
    DiskChain(ChainParams),
}

/// How shifted systems are solved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BackendChoice {
    /// Cholesky with reverse Cuthill–McKee in 1D/2D, nested dissection in 3D.
    Auto,
    Rcm,
    NestedDissection,
    Cg {
        tol: f64,
        max_iter: usize,
    },
}

impl BackendChoice {
    fn parse(s: &str, cg_tol: f64, cg_max_iter: usize) -> Result<Self> {
        match s {
            "auto" => Ok(BackendChoice::Auto),
            "rcm" => Ok(BackendChoice::Rcm),
            "nd" => Ok(BackendChoice::NestedDissection),
            "cg" => Ok(BackendChoice::Cg { tol: cg_tol, max_iter: cg_max_iter }),
            other => Err(Error::config(format!("unknown backend '{other}'"))),
        }
    }

    /// Concrete backend for a discretization.
    pub fn resolve(&self, mesh: &Mesh, dofmap: &DofMap) -> Backend {
        match *self {
            BackendChoice::Auto if mesh.dim() < 3 => Backend::Cholesky(Ordering::Rcm),
            BackendChoice::Rcm => Backend::Cholesky(Ordering::Rcm),
            BackendChoice::Auto | BackendChoice::NestedDissection => {
                Backend::Cholesky(Ordering::NestedDissection(Arc::new(dofmap.dof_coords(mesh))))
            }
            BackendChoice::Cg { tol, max_iter } => Backend::Cg { tol, max_iter },
        }
    }
}

/// A fully resolved experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub p: usize,
    pub q: usize,
    pub ell: f64,
    /// Period of the data in the expanding directions; `L` counts periods.
    pub period: f64,
    pub geometry: Geometry,
    pub lengths: Vec<usize>,
    /// Intervals per period in every expanding direction.
    pub cells: usize,
    /// Intervals across `(0, ell)`.
    pub cells_y: usize,
    pub order: ElementOrder,
    pub potential: PotentialSpec,
    pub solver: Solver,
    pub shift_mode: ShiftMode,
    /// Relative reduction applied to cell-derived shifts.
    pub back_off: f64,
    pub tol: f64,
    pub k_max: usize,
    pub m: usize,
    pub backend: BackendChoice,
    /// Cells per period for the factorization check refinement study.
    pub refinements: Vec<usize>,
    pub out: PathBuf,
}

/// Raw overrides, as read from a config file or collected from CLI flags.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub ell: Option<f64>,
    pub period: Option<f64>,
    pub lengths: Option<Vec<usize>>,
    pub cells: Option<usize>,
    pub cells_y: Option<usize>,
    pub order: Option<usize>,
    pub potential: Option<PotentialConfig>,
    pub solver: Option<String>,
    pub shift_mode: Option<String>,
    pub sigma: Option<f64>,
    pub fraction: Option<f64>,
    pub back_off: Option<f64>,
    pub tol: Option<f64>,
    pub k_max: Option<usize>,
    pub m: Option<usize>,
    pub backend: Option<String>,
    pub cg_tol: Option<f64>,
    pub cg_max_iter: Option<usize>,
    pub refinements: Option<Vec<usize>>,
    pub big_r: Option<f64>,
    pub r: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Potential as written in a config file.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero,
    Constant {
        value: f64,
    },
    ProductSine {
        amplitude: f64,
        wavenumber: f64,
    },
    SineY2 {
        amplitude: f64,
    },
    OpticalLattice {
        #[serde(default = "default_lattice_amplitude")]
        amplitude: f64,
        #[serde(default = "default_lattice_omega")]
        omega: f64,
        #[serde(default = "default_one")]
        big_r: f64,
        #[serde(default = "default_lattice_d")]
        d: f64,
    },
    CoulombChain {
        #[serde(default = "default_one")]
        charge: f64,
        #[serde(default = "default_cutoff")]
        cutoff: f64,
    },
    KronigPenney {
        #[serde(default = "default_lattice_amplitude")]
        height: f64,
        #[serde(default = "default_half_width")]
        half_width: f64,
        #[serde(default)]
        norm: NormConfig,
    },
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum NormConfig {
    L1,
    #[default]
    Linf,
}

fn default_lattice_amplitude() -> f64 {
    100.0
}
fn default_lattice_omega() -> f64 {
    9.0
}
fn default_lattice_d() -> f64 {
    0.1
}
fn default_one() -> f64 {
    1.0
}
fn default_cutoff() -> f64 {
    1e-4
}
fn default_half_width() -> f64 {
    0.25
}

impl ConfigOverrides {
    /// Parses a TOML config. Top-level keys apply to every experiment; a
    /// table named after the experiment id overrides them.
    pub fn from_toml(text: &str, id: ExperimentId) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        let section = table.remove(id.as_str());
        for other in ExperimentId::ALL {
            table.remove(other.as_str());
        }
        if let Some(section) = section {
            let toml::Value::Table(section) = section else {
                return Err(Error::config(format!("'{id}' must be a table")));
            };
            for (k, v) in section {
                table.insert(k, v);
            }
        }
        toml::Value::Table(table).try_into().map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    /// Reads and parses a config file.
    pub fn from_file(path: &Path, id: ExperimentId) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text, id)
    }

    /// Fields set in `other` win.
    pub fn merge(self, other: ConfigOverrides) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            p,
            q,
            ell,
            period,
            lengths,
            cells,
            cells_y,
            order,
            potential,
            solver,
            shift_mode,
            sigma,
            fraction,
            back_off,
            tol,
            k_max,
            m,
            backend,
            cg_tol,
            cg_max_iter,
            refinements,
            big_r,
            r,
            out
        )
    }
}

impl ExperimentConfig {
    /// Built-in defaults for each experiment.
    pub fn defaults(id: ExperimentId) -> Self {
        let base = Self {
            id,
            p: 1,
            q: 1,
            ell: 1.0,
            period: 1.0,
            geometry: Geometry::Box,
            lengths: vec![1, 2, 4, 8, 16],
            cells: 64,
            cells_y: 64,
            order: ElementOrder::Linear,
            potential: PotentialSpec::zero(),
            solver: Solver::Lopcg,
            shift_mode: ShiftMode::Optimal,
            back_off: 0.0,
            tol: 1e-10,
            k_max: 100,
            m: 1,
            backend: BackendChoice::Auto,
            refinements: vec![16, 32, 64],
            out: PathBuf::from("out"),
        };
        match id {
            ExperimentId::LaplaceGap => Self { lengths: vec![1, 2, 4, 8, 16, 32], m: 2, ..base },
            ExperimentId::PrecondCompare => Self {
                lengths: vec![1, 2, 4, 8, 16, 32],
                cells: 100,
                cells_y: 100,
                potential: PotentialSpec::sine_y2(100.0),
                ..base
            },
            ExperimentId::HomogStudy => Self {
                p: 2,
                lengths: vec![1, 2, 4, 8],
                cells: 4,
                cells_y: 6,
                order: ElementOrder::Quadratic,
                shift_mode: ShiftMode::None,
                k_max: 500,
                m: 3,
                ..base
            },
            ExperimentId::Chain => {
                let chain = ChainParams { big_r: 1.0, r: 0.9, charge: 1.0, cutoff: 1e-4 };
                Self {
                    ell: 2.0 * chain.big_r,
                    period: chain.period(),
                    geometry: Geometry::DiskChain(chain),
                    lengths: vec![1, 2, 4, 8],
                    cells: 36,
                    cells_y: 40,
                    potential: PotentialSpec::coulomb(CoulombChain::chain(1, 1.0, 0.9, 1.0, 1e-4)),
                    back_off: 1e-4,
                    ..base
                }
            }
            ExperimentId::KronigPenney => Self {
                p: 2,
                lengths: vec![1, 2, 4],
                cells: 10,
                cells_y: 10,
                potential: PotentialSpec::kronig_penney(WellNorm::LInf),
                ..base
            },
            ExperimentId::FactorizationCheck => Self {
                ell: PI,
                period: PI,
                lengths: vec![4],
                potential: PotentialSpec::product_sine(100.0, 1.0),
                m: 2,
                ..base
            },
        }
    }

    /// Defaults overlaid with `ov`, then validated.
    pub fn resolve(id: ExperimentId, ov: ConfigOverrides) -> Result<Self> {
        let mut c = Self::defaults(id);
        if let Some(v) = ov.p {
            c.p = v;
        }
        if let Some(v) = ov.q {
            c.q = v;
        }
        if let Some(v) = ov.ell {
            c.ell = v;
        }
        if let Some(v) = ov.lengths {
            c.lengths = v;
        }
        if let Some(v) = ov.order {
            c.order = ElementOrder::try_from(v)?;
        }
        if let Some(pc) = &ov.potential {
            c.potential = pc.to_spec()?;
            if ov.period.is_none() {
                c.period = c.potential.period().unwrap_or(c.period);
            }
        }
        if let Geometry::DiskChain(mut chain) = c.geometry {
            if let Some(v) = ov.big_r {
                chain.big_r = v;
            }
            if let Some(v) = ov.r {
                chain.r = v;
            }
            if let Some(PotentialConfig::CoulombChain { charge, cutoff }) = ov.potential {
                chain.charge = charge;
                chain.cutoff = cutoff;
            } else if ov.potential.is_some() {
                return Err(Error::config("the chain experiment needs a coulomb-chain potential"));
            }
            c.ell = 2.0 * chain.big_r;
            c.period = chain.period();
            c.geometry = Geometry::DiskChain(chain);
        } else if ov.big_r.is_some() || ov.r.is_some() {
            return Err(Error::config("'big_r' and 'r' only apply to the chain experiment"));
        }
        if let Some(v) = ov.period {
            c.period = v;
        }
        let cells_changed = ov.cells.is_some();
        if let Some(v) = ov.cells {
            c.cells = v;
        }
        c.cells_y = match ov.cells_y {
            Some(v) => v,
            None if cells_changed || ov.ell.is_some() || ov.period.is_some() => {
                (c.ell * c.cells as f64 / c.period).round() as usize
            }
            None => c.cells_y,
        };
        if let Some(v) = ov.solver {
            c.solver = parse_solver(&v)?;
        }
        let fraction = ov.fraction.unwrap_or(0.99);
        if let Some(v) = ov.shift_mode {
            c.shift_mode = ShiftMode::parse(&v, ov.sigma, fraction)?;
        } else if let Some(s) = ov.sigma {
            c.shift_mode = ShiftMode::Manual(s);
        }
        if let Some(v) = ov.back_off {
            c.back_off = v;
        }
        if let Some(v) = ov.tol {
            c.tol = v;
        }
        if let Some(v) = ov.k_max {
            c.k_max = v;
        }
        if let Some(v) = ov.m {
            c.m = v;
        }
        if let Some(v) = ov.backend {
            c.backend = BackendChoice::parse(&v, ov.cg_tol.unwrap_or(1e-12), ov.cg_max_iter.unwrap_or(20_000))?;
        }
        if let Some(v) = ov.refinements {
            c.refinements = v;
        }
        if let Some(v) = ov.out {
            c.out = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        DomainSpec::new(self.p, self.q, self.period, self.ell)?;
        if self.lengths.is_empty() || self.lengths.contains(&0) {
            return Err(Error::config("lengths must be a non-empty list of positive integers"));
        }
        if self.cells == 0 || self.cells_y == 0 {
            return Err(Error::config("cell counts must be positive"));
        }
        if !(self.period > 0.0) || !(self.ell > 0.0) {
            return Err(Error::config("period and ell must be positive"));
        }
        if !(self.tol > 0.0) || self.k_max == 0 || self.m == 0 {
            return Err(Error::config("tol, k_max and m must be positive"));
        }
        if !(0.0..1.0).contains(&self.back_off) {
            return Err(Error::config(format!("back_off {} outside [0, 1)", self.back_off)));
        }
        self.shift_mode.validate()?;
        if let Geometry::DiskChain(chain) = self.geometry {
            if self.p != 1 || self.q != 1 {
                return Err(Error::config("the disk chain is two-dimensional"));
            }
            if !(chain.r > 0.0 && chain.r < chain.big_r) {
                return Err(Error::config("disk chain needs 0 < r < big_r"));
            }
            let h = chain.period() / self.cells as f64;
            let offset = (chain.big_r - chain.r) / h;
            if (offset - offset.round()).abs() > 1e-8 {
                return Err(Error::config("cell width must divide big_r - r so cell and chain meshes match"));
            }
        }
        if self.id == ExperimentId::FactorizationCheck {
            if self.p != 1 || self.refinements.is_empty() || self.refinements.contains(&0) {
                return Err(Error::config("factorization check needs p = 1 and positive refinements"));
            }
        }
        Ok(())
    }

    fn backend_for(&self, mesh: &Mesh, dofmap: &DofMap) -> Backend {
        self.backend.resolve(mesh, dofmap)
    }

    fn solver_config(&self, sigma: f64, backend: Backend) -> SolverConfig {
        SolverConfig { sigma, tol: self.tol, k_max: self.k_max, x0: None, x_prev: None, backend }
    }
}

impl PotentialConfig {
    pub fn to_spec(&self) -> Result<PotentialSpec> {
        Ok(match *self {
            PotentialConfig::Zero => PotentialSpec::zero(),
            PotentialConfig::Constant { value } => PotentialKind::Constant(value).into(),
            PotentialConfig::ProductSine { amplitude, wavenumber } => {
                if wavenumber == 0.0 {
                    return Err(Error::config("product-sine wavenumber must be non-zero"));
                }
                PotentialSpec::product_sine(amplitude, wavenumber)
            }
            PotentialConfig::SineY2 { amplitude } => PotentialSpec::sine_y2(amplitude),
            PotentialConfig::OpticalLattice { amplitude, omega, big_r, d } => {
                PotentialKind::OpticalLattice { amplitude, omega, big_r, d }.into()
            }
            PotentialConfig::CoulombChain { charge, cutoff } => {
                if !(cutoff > 0.0) {
                    return Err(Error::config("coulomb cutoff must be positive"));
                }
                PotentialSpec::coulomb(CoulombChain::chain(1, 1.0, 0.9, charge, cutoff))
            }
            PotentialConfig::KronigPenney { height, half_width, norm } => PotentialKind::KronigPenney {
                height,
                half_width,
                norm: match norm {
                    NormConfig::L1 => WellNorm::L1,
                    NormConfig::Linf => WellNorm::LInf,
                },
            }
            .into(),
        })
    }
}

// ---------------------------------------------------------------------------
// Discretizations

/// A mesh with its DOF map.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    pub dofmap: Arc<DofMap>,
}

impl Discretization {
    pub fn new(mesh: Mesh, bc: &BoundarySpec) -> Result<Self> {
        let dofmap = build_dof_map(&mesh, bc)?;
        Ok(Self { mesh: Arc::new(mesh), dofmap: Arc::new(dofmap) })
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_used_nodes()
    }

    pub fn n_dofs(&self) -> usize {
        self.dofmap.n_free()
    }

    pub fn field(&self, coeffs: Vec<f64>) -> Result<ScalarField> {
        ScalarField::new(self.mesh.clone(), self.dofmap.clone(), coeffs)
    }
}

fn cell_counts(cfg: &ExperimentConfig, periods: usize) -> Vec<usize> {
    let mut c = vec![cfg.cells * periods; cfg.p];
    c.extend(std::iter::repeat(cfg.cells_y).take(cfg.q));
    c
}

/// The unit-cell mesh: one period, periodic in `x`, Dirichlet in `y`.
pub fn cell_discretization(cfg: &ExperimentConfig) -> Result<(Discretization, PotentialSpec)> {
    let bc = BoundarySpec::new(BoundaryCondition::Periodic, BoundaryCondition::Dirichlet);
    match cfg.geometry {
        Geometry::Box => {
            let dom = DomainSpec::new(cfg.p, cfg.q, cfg.period, cfg.ell)?;
            let mesh = build_box_mesh(&dom, &cell_counts(cfg, 1), cfg.order)?;
            Ok((Discretization::new(mesh, &bc)?, cfg.potential.clone()))
        }
        Geometry::DiskChain(ch) => {
            let dom = DomainSpec::new(1, 1, ch.period(), 2.0 * ch.big_r)?;
            let mesh = build_box_mesh(&dom, &[cfg.cells, cfg.cells_y], cfg.order)?
                .with_origin(&[ch.big_r - ch.r, -ch.big_r])?
                .mask_region(&Region::disk_chain(1, ch.big_r, ch.r))?;
            let v = PotentialSpec::coulomb(CoulombChain::chain(1, ch.big_r, ch.r, ch.charge, ch.cutoff));
            Ok((Discretization::new(mesh, &bc)?, v))
        }
    }
}

/// The expanding-domain mesh for `l` periods, Dirichlet everywhere.
pub fn expanding_discretization(cfg: &ExperimentConfig, l: usize) -> Result<(Discretization, PotentialSpec)> {
    let bc = BoundarySpec::dirichlet();
    match cfg.geometry {
        Geometry::Box => {
            let dom = DomainSpec::new(cfg.p, cfg.q, l as f64 * cfg.period, cfg.ell)?;
            let mesh = build_box_mesh(&dom, &cell_counts(cfg, l), cfg.order)?;
            Ok((Discretization::new(mesh, &bc)?, cfg.potential.clone()))
        }
        Geometry::DiskChain(ch) => {
            let h = ch.period() / cfg.cells as f64;
            let width = 2.0 * ch.big_r + (l - 1) as f64 * ch.period();
            let nx = (width / h).round() as usize;
            let dom = DomainSpec::new(1, 1, width, 2.0 * ch.big_r)?;
            let mesh = build_box_mesh(&dom, &[nx, cfg.cells_y], cfg.order)?
                .with_origin(&[0.0, -ch.big_r])?
                .mask_region(&Region::disk_chain(l, ch.big_r, ch.r))?;
            let v = PotentialSpec::coulomb(CoulombChain::chain(l, ch.big_r, ch.r, ch.charge, ch.cutoff));
            Ok((Discretization::new(mesh, &bc)?, v))
        }
    }
}

// ---------------------------------------------------------------------------
// Shift

/// The quasi-optimal shift and how it was obtained.
#[derive(Clone, Debug)]
pub struct ShiftReport {
    /// Shift handed to the solver.
    pub sigma: f64,
    /// Ground eigenvalue of the cell problem, if one was solved.
    pub lambda_cell: Option<f64>,
    pub back_off: f64,
    pub cell_nodes: usize,
    pub cell_dofs: usize,
    pub cell_iterations: usize,
    pub wall_time: Duration,
}

/// Solution of a unit-cell problem.
#[derive(Clone, Debug)]
pub struct CellSolution {
    pub disc: Discretization,
    pub result: EigResult,
    pub wall_time: Duration,
}

/// Ground state of the cell pencil by unshifted LOPCG.
pub fn solve_cell_problem(
    disc: Discretization,
    potential: &PotentialSpec,
    tol: f64,
    backend: &BackendChoice,
) -> Result<CellSolution> {
    let t0 = Instant::now();
    let (a, b) = assemble_pencil(&disc.mesh, &disc.dofmap, &CoefficientSpec::schroedinger(potential.clone()))?;
    let cfg =
        SolverConfig::default().with_tol(tol).with_k_max(1000).with_backend(backend.resolve(&disc.mesh, &disc.dofmap));
    let p = ShiftInvert::new(&a, &b, 0.0, &cfg.backend)?;
    let result = solve_with(Solver::Lopcg, &a, &b, &p, &cfg, &[])?;
    if !result.converged {
        return Err(Error::NotConverged { iterations: result.iterations, residual: result.final_residual() });
    }
    Ok(CellSolution { disc, result, wall_time: t0.elapsed() })
}

/// `sigma = lambda_1` of the periodic-`x` / Dirichlet-`y` cell pencil,
/// reduced by the relative `back_off`.
pub fn compute_quasi_optimal_shift(
    cell: Discretization,
    potential: &PotentialSpec,
    tol: f64,
    back_off: f64,
    backend: &BackendChoice,
) -> Result<ShiftReport> {
    let sol = solve_cell_problem(cell, potential, tol, backend)?;
    let lambda = sol.result.lambda;
    Ok(ShiftReport {
        sigma: lambda - back_off * lambda.abs(),
        lambda_cell: Some(lambda),
        back_off,
        cell_nodes: sol.disc.n_nodes(),
        cell_dofs: sol.disc.n_dofs(),
        cell_iterations: sol.result.iterations,
        wall_time: sol.wall_time,
    })
}

fn shift_for(mode: ShiftMode, optimal: Option<&ShiftReport>) -> Result<ShiftReport> {
    let need = || optimal.cloned().ok_or_else(|| Error::config("cell shift not computed"));
    Ok(match mode {
        ShiftMode::None => ShiftReport {
            sigma: 0.0,
            lambda_cell: optimal.and_then(|r| r.lambda_cell),
            back_off: 0.0,
            cell_nodes: 0,
            cell_dofs: 0,
            cell_iterations: 0,
            wall_time: Duration::ZERO,
        },
        ShiftMode::Manual(s) => ShiftReport { sigma: s, back_off: 0.0, ..shift_for(ShiftMode::None, optimal)? },
        ShiftMode::Optimal => need()?,
        ShiftMode::Fraction(f) => {
            let r = need()?;
            ShiftReport { sigma: f * r.lambda_cell.expect("cell solved"), ..r }
        }
    })
}

// ---------------------------------------------------------------------------
// Expanding-domain solves

/// One solve on `Omega_L`.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub length: usize,
    pub n_nodes: usize,
    pub n_dofs: usize,
    pub sigma: f64,
    /// Eigenpairs in ascending order (`m` of them when all converged).
    pub pairs: Vec<EigResult>,
    pub max_phi1: f64,
    pub t_eig: Duration,
    /// Set when `sigma > lambda_1 + SHIFT_SLACK`.
    pub shift_violation: bool,
}

impl RunRecord {
    pub fn ground(&self) -> &EigResult {
        &self.pairs[0]
    }

    pub fn converged(&self) -> bool {
        self.pairs.iter().all(|p| p.converged)
    }

    pub fn summary_row(&self) -> String {
        let g = self.ground();
        format!(
            "{},{},{:.12e},{:.12e},{},{:.6}",
            self.length,
            self.n_nodes,
            g.lambda,
            self.max_phi1,
            g.iterations,
            self.t_eig.as_secs_f64()
        )
    }
}

/// Solves for `m` eigenpairs with `solver`, deflating converged vectors.
/// Stops at the first run that fails to converge.
pub fn solve_pencil(
    a: &SparseMatrix,
    b: &SparseMatrix,
    solver: Solver,
    cfg: &SolverConfig,
    m: usize,
) -> Result<Vec<EigResult>> {
    let p = ShiftInvert::new(a, b, cfg.sigma, &cfg.backend)?;
    let mut pairs: Vec<EigResult> = Vec::with_capacity(m);
    for _ in 0..m {
        let found: Vec<Vec<f64>> = pairs.iter().map(|r| r.x.clone()).collect();
        let r = solve_with(solver, a, b, &p, &deflated_config(cfg, found.len(), a.n()), &found)?;
        let ok = r.converged;
        pairs.push(r);
        if !ok {
            break;
        }
    }
    pairs.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
    Ok(pairs)
}

fn run_one(
    cfg: &ExperimentConfig,
    disc: &Discretization,
    coeff: &CoefficientSpec,
    length: usize,
    sigma: f64,
    solver: Solver,
) -> Result<RunRecord> {
    let t0 = Instant::now();
    let (a, b) = assemble_pencil(&disc.mesh, &disc.dofmap, coeff)?;
    let scfg = cfg.solver_config(sigma, cfg.backend_for(&disc.mesh, &disc.dofmap));
    let pairs = solve_pencil(&a, &b, solver, &scfg, cfg.m)?;
    let t_eig = t0.elapsed();
    let g = &pairs[0];
    let max_phi1 = g.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let shift_violation = sigma > g.lambda + SHIFT_SLACK;
    if shift_violation {
        eprintln!(
            "warning: shift {sigma:.8} exceeds lambda_1 = {:.8} at L = {length} (pre-asymptotic regime)",
            g.lambda
        );
    }
    Ok(RunRecord {
        length,
        n_nodes: disc.n_nodes(),
        n_dofs: disc.n_dofs(),
        sigma,
        pairs,
        max_phi1,
        t_eig,
        shift_violation,
    })
}

/// Shift plus one record per length.
#[derive(Clone, Debug)]
pub struct ExpandingRun {
    pub shift: ShiftReport,
    pub runs: Vec<RunRecord>,
}

/// The cell shift for `cfg`, solved only if the shift mode needs it.
pub fn cell_shift(cfg: &ExperimentConfig) -> Result<Option<ShiftReport>> {
    if !cfg.shift_mode.needs_cell() {
        return Ok(None);
    }
    let (cell, v) = cell_discretization(cfg)?;
    Ok(Some(compute_quasi_optimal_shift(cell, &v, cfg.tol, cfg.back_off, &cfg.backend)?))
}

/// Computes the shift, then solves on `Omega_L` for every configured `L`.
pub fn solve_expanding_problem(cfg: &ExperimentConfig) -> Result<ExpandingRun> {
    solve_expanding_with(cfg, |_| Ok(()))
}

fn solve_expanding_with(
    cfg: &ExperimentConfig,
    mut on_run: impl FnMut(&RunRecord) -> Result<()>,
) -> Result<ExpandingRun> {
    let shift = shift_for(cfg.shift_mode, cell_shift(cfg)?.as_ref())?;
    let mut runs = Vec::with_capacity(cfg.lengths.len());
    for &l in &cfg.lengths {
        let (disc, v) = expanding_discretization(cfg, l)?;
        let rec = run_one(cfg, &disc, &CoefficientSpec::schroedinger(v), l, shift.sigma, cfg.solver)?;
        on_run(&rec)?;
        runs.push(rec);
    }
    Ok(ExpandingRun { shift, runs })
}

// ---------------------------------------------------------------------------
// Factorization check

/// One row of the factorization study.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizationRow {
    pub cells_per_period: usize,
    pub m: usize,
    pub lambda: f64,
    pub lambda_cell: f64,
    pub lambda_remainder: f64,
}

impl FactorizationRow {
    pub fn defect(&self) -> f64 {
        (self.lambda - self.lambda_cell - self.lambda_remainder).abs()
    }

    pub fn relative_defect(&self) -> f64 {
        self.defect() / self.lambda.abs()
    }
}

/// Compares `lambda^(k)` on `Omega_L` with the cell ground state plus the
/// `k`-th eigenvalue of the `(phi_y)^2`-weighted remainder problem, for
/// `k = 1..m` and every refinement in `cfg.refinements`.
pub fn factorization_check(cfg: &ExperimentConfig) -> Result<Vec<FactorizationRow>> {
    if cfg.geometry != Geometry::Box || cfg.p != 1 {
        return Err(Error::config("factorization check needs a box with one expanding direction"));
    }
    let l = *cfg.lengths.first().expect("validated");
    let mut rows = Vec::new();
    for &r in &cfg.refinements {
        let c =
            ExperimentConfig { cells: r, cells_y: (cfg.ell * r as f64 / cfg.period).round() as usize, ..cfg.clone() };
        let (cell, v) = cell_discretization(&c)?;
        let cell = solve_cell_problem(cell, &v, c.tol, &c.backend)?;
        let lambda_cell = cell.result.lambda;
        let phi = Arc::new(cell.disc.field(cell.result.x.clone())?.with_periodic_extension());

        let (full, v) = expanding_discretization(&c, l)?;
        let sigma = lambda_cell * (1.0 - c.back_off.max(1e-6));
        let full_run = run_one(&c, &full, &CoefficientSpec::schroedinger(v), l, sigma, Solver::Lopcg)?;

        let dom = DomainSpec::new(c.p, c.q, l as f64 * c.period, c.ell)?;
        let mesh = build_box_mesh(&dom, &cell_counts(&c, l), c.order)?;
        let rem =
            Discretization::new(mesh, &BoundarySpec::new(BoundaryCondition::Dirichlet, BoundaryCondition::Neumann))?;
        let rem_run = run_one(&c, &rem, &CoefficientSpec::weighted(Weight::FieldSquared(phi)), l, 0.0, Solver::Lopcg)?;

        if !full_run.converged() || !rem_run.converged() {
            let bad = full_run.pairs.iter().chain(&rem_run.pairs).find(|p| !p.converged).expect("one failed");
            return Err(Error::NotConverged { iterations: bad.iterations, residual: bad.final_residual() });
        }
        for k in 0..c.m {
            rows.push(FactorizationRow {
                cells_per_period: r,
                m: k + 1,
                lambda: full_run.pairs[k].lambda,
                lambda_cell,
                lambda_remainder: rem_run.pairs[k].lambda,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Homogenization study

/// The degenerate layered weight
/// `(27/4 y^2 (1 - y) (10 cos^2(pi x1) + 10 cos^2(pi x2) + 1.1 - sin^2(pi y)))^2`.
pub fn layered_weight(z: &[f64]) -> f64 {
    let (x1, x2, y) = (z[0], z[1], z[2]);
    let c1 = (PI * x1).cos();
    let c2 = (PI * x2).cos();
    let s = (PI * y).sin();
    let f = 27.0 / 4.0 * y * y * (1.0 - y) * (10.0 * c1 * c1 + 10.0 * c2 * c2 + 1.1 - s * s);
    f * f
}

/// Errors of the scaled problem at one `L` against the homogenized limit.
#[derive(Clone, Debug)]
pub struct HomogRow {
    pub length: usize,
    pub m: usize,
    /// `L^2 lambda_L^(m)`.
    pub lambda_scaled: f64,
    pub nu: f64,
    pub eigenvalue_error: f64,
    /// Relative `L^2(Omega_1)` error of the (aligned) eigenfunction.
    pub eigenfunction_error: f64,
}

/// Homogenized model plus the per-`L` comparison.
#[derive(Clone, Debug)]
pub struct HomogStudy {
    pub model: HomogenizedModel,
    pub rows: Vec<HomogRow>,
    pub runs: Vec<RunRecord>,
}

/// Correctors on the cell mesh, then the rescaled problem
/// `-div(rho(Lx, y) diag(1, .., L^2) grad u) = mu rho(Lx, y) u` on the unit
/// box for each `L`, with `mu = L^2 lambda_L` compared against `nu`.
pub fn homogenization_study(cfg: &ExperimentConfig, rho: Weight) -> Result<HomogStudy> {
    homogenization_study_with(cfg, rho, |_| Ok(()))
}

fn homogenization_study_with(
    cfg: &ExperimentConfig,
    rho: Weight,
    mut on_run: impl FnMut(&RunRecord) -> Result<()>,
) -> Result<HomogStudy> {
    if cfg.geometry != Geometry::Box || cfg.period != 1.0 {
        return Err(Error::config("homogenization study needs a box with unit period"));
    }
    let cell_dom = DomainSpec::new(cfg.p, cfg.q, 1.0, cfg.ell)?;
    let cell = Discretization::new(
        build_box_mesh(&cell_dom, &cell_counts(cfg, 1), cfg.order)?,
        &BoundarySpec::new(BoundaryCondition::Periodic, BoundaryCondition::Neumann),
    )?;
    let backend = cfg.backend_for(&cell.mesh, &cell.dofmap);
    let model = HomogenizedModel::compute(&cell.mesh, &cell.dofmap, &rho, cfg.m, &backend)?;
    if model.limit.iter().any(|p| p.multi_index.is_empty()) {
        return Err(Error::Unsupported("eigenfunction comparison needs a diagonal homogenized diffusion".into()));
    }
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let dim = cfg.p + cfg.q;
    for &l in &cfg.lengths {
        let lf = l as f64;
        let mut counts = vec![cfg.cells * l; cfg.p];
        counts.extend(std::iter::repeat(cfg.cells_y).take(cfg.q));
        let dom = DomainSpec::new(cfg.p, cfg.q, 1.0, cfg.ell)?;
        let disc = Discretization::new(
            build_box_mesh(&dom, &counts, cfg.order)?,
            &BoundarySpec::new(BoundaryCondition::Dirichlet, BoundaryCondition::Neumann),
        )?;
        let p = cfg.p;
        let rho_cell = rho.clone();
        let rho_l = Weight::analytic(move |z| {
            let mut s = [0.0; 3];
            for d in 0..dim {
                s[d] = if d < p { lf * z[d] } else { z[d] };
            }
            rho_cell.eval(&s[..dim])
        });
        let mut diag = vec![1.0; cfg.p];
        diag.extend(std::iter::repeat(lf * lf).take(cfg.q));
        let coeff = CoefficientSpec::weighted(rho_l).with_diffusion(diagonal_tensor(&diag));
        let sigma = match cfg.shift_mode {
            ShiftMode::Manual(s) => s,
            _ => 0.0,
        };
        let rec = run_one(cfg, &disc, &coeff, l, sigma, cfg.solver)?;
        on_run(&rec)?;
        if !rec.converged() {
            let bad = rec.pairs.iter().find(|r| !r.converged).expect("one failed");
            runs.push(rec.clone());
            return Err(Error::NotConverged { iterations: bad.iterations, residual: bad.final_residual() });
        }
        let (_, b) = assemble_pencil(&disc.mesh, &disc.dofmap, &coeff)?;
        let targets: Vec<Vec<f64>> = model
            .limit
            .iter()
            .map(|pair| disc.dofmap.dof_coords(&disc.mesh).iter().map(|z| pair.eval(&z[..p])).collect())
            .collect();
        let mut vecs: Vec<Vec<f64>> = rec.pairs.iter().map(|r| r.x.clone()).collect();
        let mut k = 0;
        while k < vecs.len() {
            let nu = model.limit[k].nu;
            if k + 1 < vecs.len() && is_degenerate(nu, model.limit[k + 1].nu) {
                let (a2, a3) = align_degenerate_pair(&vecs[k], &vecs[k + 1], &targets[k], &targets[k + 1], &b)?;
                vecs[k] = a2;
                vecs[k + 1] = a3;
                k += 2;
            } else {
                k += 1;
            }
        }
        for (k, (x, pair)) in vecs.iter_mut().zip(&model.limit).enumerate() {
            if b.bilinear(x, &targets[k]) < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            let u = disc.field(x.clone())?;
            let norms = field_norms_analytic(&u, |z| pair.eval(&z[..p]), &Weight::One)?;
            let lambda = rec.pairs[k].lambda;
            rows.push(HomogRow {
                length: l,
                m: k + 1,
                lambda_scaled: lambda,
                nu: pair.nu,
                eigenvalue_error: (lambda - pair.nu).abs() / pair.nu,
                eigenfunction_error: norms.relative_error.unwrap_or(f64::NAN),
            });
        }
        runs.push(rec);
    }
    Ok(HomogStudy { model, rows, runs })
}

// ---------------------------------------------------------------------------
// Experiment runner

/// What an experiment wrote and whether its primary runs converged.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub files: Vec<PathBuf>,
    pub shift: Option<ShiftReport>,
    pub runs: Vec<RunRecord>,
}

struct CsvFile {
    path: PathBuf,
    w: BufWriter<File>,
}

impl CsvFile {
    fn create(dir: &Path, name: &str, header: &str) -> Result<Self> {
        let path = dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{header}")?;
        Ok(Self { path, w })
    }

    fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.w, "{line}")?;
        self.w.flush()?;
        Ok(())
    }
}

fn write_history(dir: &Path, run: &str, r: &EigResult) -> Result<PathBuf> {
    let path = dir.join(format!("history_{run}.csv"));
    let mut w = BufWriter::new(File::create(&path)?);
    r.write_history_csv(&mut w)?;
    w.flush()?;
    Ok(path)
}

fn first_failure(runs: &[RunRecord]) -> Option<Error> {
    runs.iter()
        .flat_map(|r| &r.pairs)
        .find(|p| !p.converged)
        .map(|p| Error::NotConverged { iterations: p.iterations, residual: p.final_residual() })
}

/// Runs an experiment and writes its CSV files into `cfg.out`. Rows are
/// flushed as they are produced, so a failing run leaves earlier results.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    fs::create_dir_all(&cfg.out)?;
    let dir = cfg.out.as_path();
    let mut files = Vec::new();
    let outcome = match cfg.id {
        ExperimentId::LaplaceGap => run_laplace_gap(cfg, dir, &mut files)?,
        ExperimentId::PrecondCompare => run_precond_compare(cfg, dir, &mut files)?,
        ExperimentId::HomogStudy => run_homog_study(cfg, dir, &mut files)?,
        ExperimentId::Chain | ExperimentId::KronigPenney => run_sweep(cfg, dir, &mut files)?,
        ExperimentId::FactorizationCheck => run_factorization(cfg, dir, &mut files)?,
    };
    Ok(ExperimentOutcome { files, ..outcome })
}

fn run_sweep(cfg: &ExperimentConfig, dir: &Path, files: &mut Vec<PathBuf>) -> Result<ExperimentOutcome> {
    let mut summary = CsvFile::create(dir, "summary.csv", SUMMARY_HEADER)?;
    let (name, header) = match cfg.id {
        ExperimentId::Chain => ("chain.csv", "N,n_nodes,lambda1,k_it,t_eig,t_eig_per_cell,sigma"),
        _ => ("scaling.csv", "L,n_nodes,lambda1,k_it,t_eig,t_eig_per_cell,sigma"),
    };
    let mut extra = CsvFile::create(dir, name, header)?;
    files.push(summary.path.clone());
    files.push(extra.path.clone());
    let cells_of = |l: usize| (l as f64).powi(cfg.p as i32);
    let res = solve_expanding_with(cfg, |rec| {
        summary.row(&rec.summary_row())?;
        let g = rec.ground();
        let t = rec.t_eig.as_secs_f64();
        extra.row(&format!(
            "{},{},{:.12e},{},{:.6},{:.6},{:.12e}",
            rec.length,
            rec.n_nodes,
            g.lambda,
            g.iterations,
            t,
            t / cells_of(rec.length),
            rec.sigma
        ))?;
        files.push(write_history(dir, &format!("L{}", rec.length), g)?);
        Ok(())
    })?;
    if let Some(e) = first_failure(&res.runs) {
        return Err(e);
    }
    Ok(ExperimentOutcome { files: Vec::new(), shift: Some(res.shift), runs: res.runs })
}

fn run_laplace_gap(cfg: &ExperimentConfig, dir: &Path, files: &mut Vec<PathBuf>) -> Result<ExperimentOutcome> {
    if cfg.m < 2 {
        return Err(Error::config("laplace-gap needs m >= 2"));
    }
    let mut summary = CsvFile::create(dir, "summary.csv", SUMMARY_HEADER)?;
    let mut gap = CsvFile::create(dir, "gap.csv", "L,lambda1,lambda2,sigma,ratio,shifted_ratio")?;
    files.push(summary.path.clone());
    files.push(gap.path.clone());
    let res = solve_expanding_with(cfg, |rec| {
        summary.row(&rec.summary_row())?;
        files.push(write_history(dir, &format!("L{}", rec.length), rec.ground())?);
        if rec.pairs.len() >= 2 {
            let (l1, l2) = (rec.pairs[0].lambda, rec.pairs[1].lambda);
            let s = rec.sigma;
            gap.row(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                rec.length,
                l1,
                l2,
                s,
                l1 / l2,
                (l1 - s) / (l2 - s)
            ))?;
        }
        Ok(())
    })?;
    if let Some(e) = first_failure(&res.runs) {
        return Err(e);
    }
    Ok(ExperimentOutcome { files: Vec::new(), shift: Some(res.shift), runs: res.runs })
}

fn run_precond_compare(cfg: &ExperimentConfig, dir: &Path, files: &mut Vec<PathBuf>) -> Result<ExperimentOutcome> {
    let mut summary = CsvFile::create(dir, "summary.csv", SUMMARY_HEADER)?;
    let mut grid = CsvFile::create(dir, "precond.csv", "shift_mode,solver,L,sigma,k_it,converged,lambda1,residual")?;
    files.push(summary.path.clone());
    files.push(grid.path.clone());
    let (cell, v) = cell_discretization(cfg)?;
    let optimal = compute_quasi_optimal_shift(cell, &v, cfg.tol, cfg.back_off, &cfg.backend)?;
    let fraction = match cfg.shift_mode {
        ShiftMode::Fraction(f) => f,
        _ => 0.99,
    };
    let modes = [ShiftMode::None, ShiftMode::Fraction(fraction), ShiftMode::Optimal];
    let mut primary = Vec::new();
    for &l in &cfg.lengths {
        let (disc, v) = expanding_discretization(cfg, l)?;
        let coeff = CoefficientSpec::schroedinger(v);
        for mode in modes {
            let shift = shift_for(mode, Some(&optimal))?;
            for solver in [Solver::InversePower, Solver::Lopcg] {
                let rec = run_one(cfg, &disc, &coeff, l, shift.sigma, solver)?;
                let g = rec.ground();
                grid.row(&format!(
                    "{},{},{},{:.12e},{},{},{:.12e},{:.6e}",
                    mode.label(),
                    solver_label(solver),
                    l,
                    shift.sigma,
                    g.iterations,
                    g.converged,
                    g.lambda,
                    g.final_residual()
                ))?;
                files.push(write_history(dir, &format!("{}_{}_L{l}", mode.label(), solver_label(solver)), g)?);
                if mode.label() == cfg.shift_mode.label() && solver == cfg.solver {
                    summary.row(&rec.summary_row())?;
                    primary.push(rec);
                }
            }
        }
    }
    if let Some(e) = first_failure(&primary) {
        return Err(e);
    }
    Ok(ExperimentOutcome { files: Vec::new(), shift: Some(optimal), runs: primary })
}

fn run_homog_study(cfg: &ExperimentConfig, dir: &Path, files: &mut Vec<PathBuf>) -> Result<ExperimentOutcome> {
    if cfg.p != 2 || cfg.q != 1 {
        return Err(Error::config("homog-study uses the layered weight in three dimensions (p = 2, q = 1)"));
    }
    let mut summary = CsvFile::create(dir, "summary.csv", SUMMARY_HEADER)?;
    files.push(summary.path.clone());
    let study = homogenization_study_with(cfg, Weight::analytic(layered_weight), |rec| {
        summary.row(&rec.summary_row())?;
        for (k, r) in rec.pairs.iter().enumerate() {
            files.push(write_history(dir, &format!("L{}_m{}", rec.length, k + 1), r)?);
        }
        Ok(())
    })?;
    let model_path = dir.join("homog_model.txt");
    fs::write(&model_path, study.model.to_key_value())?;
    files.push(model_path);
    let mut errors = CsvFile::create(dir, "homog.csv", "L,m,lambda_scaled,nu,eigenvalue_error,eigenfunction_error")?;
    files.push(errors.path.clone());
    for r in &study.rows {
        errors.row(&format!(
            "{},{},{:.12e},{:.12e},{:.6e},{:.6e}",
            r.length, r.m, r.lambda_scaled, r.nu, r.eigenvalue_error, r.eigenfunction_error
        ))?;
    }
    Ok(ExperimentOutcome { files: Vec::new(), shift: None, runs: study.runs })
}

fn run_factorization(cfg: &ExperimentConfig, dir: &Path, files: &mut Vec<PathBuf>) -> Result<ExperimentOutcome> {
    let rows = factorization_check(cfg)?;
    let mut out = CsvFile::create(
        dir,
        "factorization.csv",
        "cells_per_period,m,lambda,lambda_cell,lambda_remainder,defect,relative_defect",
    )?;
    files.push(out.path.clone());
    for r in &rows {
        out.row(&format!(
            "{},{},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e}",
            r.cells_per_period,
            r.m,
            r.lambda,
            r.lambda_cell,
            r.lambda_remainder,
            r.defect(),
            r.relative_defect()
        ))?;
    }
    Ok(ExperimentOutcome { files: Vec::new(), shift: None, runs: Vec::new() })
}
