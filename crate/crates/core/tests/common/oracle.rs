//! Small shipped pencils and their comparison against the dense oracle.

use std::sync::Arc;

use nalgebra::DVector;
use pseig::assembly::{assemble_pencil, CoefficientSpec, Weight};
use pseig::eigensolve::{deflated_config, inverse_power_with, lopcg_with, EigResult, SolverConfig};
use pseig::grid::{build_box_mesh, build_dof_map, BoundaryCondition, BoundarySpec, DomainSpec, ElementOrder};
use pseig::linalg::{Backend, Ordering, ShiftInvert, SparseMatrix};
use pseig::pipeline::{cell_discretization, layered_weight, ConfigOverrides, ExperimentConfig, ExperimentId};
use pseig::potentials::PotentialSpec;

use super::{b_distance_up_to_sign, dense_generalized, to_nalgebra};

pub const LAMBDA_TOL: f64 = 1e-8;
pub const VECTOR_TOL: f64 = 1e-6;
pub const MAX_DOFS: usize = 200;
/// Deflated LOPCG pairs compared; inverse power is checked on the ground
/// pair only, since its deflated runs cannot converge past the error already
/// present in the vectors they are deflated against.
const PAIRS: usize = 3;

pub struct Pencil {
    pub name: &'static str,
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    pub coords: Vec<pseig::grid::Point>,
}

fn experiment_cell(name: &'static str, id: ExperimentId, ov: ConfigOverrides) -> Pencil {
    let cfg = ExperimentConfig::resolve(id, ov).expect("valid config");
    let (disc, v) = cell_discretization(&cfg).expect("cell mesh");
    let (a, b) = assemble_pencil(&disc.mesh, &disc.dofmap, &CoefficientSpec::schroedinger(v)).expect("assembly");
    Pencil { name, a, b, coords: disc.dofmap.dof_coords(&disc.mesh) }
}

fn box_pencil(
    name: &'static str,
    dom: DomainSpec,
    cells: &[usize],
    order: ElementOrder,
    bc: BoundarySpec,
    coeff: CoefficientSpec,
) -> Pencil {
    let mesh = build_box_mesh(&dom, cells, order).expect("mesh");
    let dm = build_dof_map(&mesh, &bc).expect("dofs");
    let (a, b) = assemble_pencil(&mesh, &dm, &coeff).expect("assembly");
    Pencil { name, a, b, coords: dm.dof_coords(&mesh) }
}

/// Every small pencil the experiments are built from, at oracle size.
pub fn shipped_pencils() -> Vec<Pencil> {
    let cells = |c: usize, cy: usize| ConfigOverrides { cells: Some(c), cells_y: Some(cy), ..Default::default() };
    let periodic_y0 = BoundarySpec::new(BoundaryCondition::Periodic, BoundaryCondition::Dirichlet);
    let lattice = PotentialSpec::optical_lattice();
    let lattice_period = lattice.period().expect("periodic");
    vec![
        box_pencil(
            "laplace-9x9",
            DomainSpec::new(1, 1, 1.0, 1.0).unwrap(),
            &[10, 10],
            ElementOrder::Linear,
            BoundarySpec::dirichlet(),
            CoefficientSpec::schroedinger(PotentialSpec::zero()),
        ),
        box_pencil(
            "laplace-q2-two-periods",
            DomainSpec::new(1, 1, 2.0, 1.0).unwrap(),
            &[6, 3],
            ElementOrder::Quadratic,
            BoundarySpec::dirichlet(),
            CoefficientSpec::schroedinger(PotentialSpec::zero()),
        ),
        experiment_cell("laplace-cell", ExperimentId::LaplaceGap, cells(12, 12)),
        experiment_cell("sine-y2-cell", ExperimentId::PrecondCompare, cells(12, 12)),
        experiment_cell("kronig-penney-cell", ExperimentId::KronigPenney, cells(5, 5)),
        experiment_cell("product-sine-cell", ExperimentId::FactorizationCheck, cells(12, 12)),
        experiment_cell("coulomb-cell", ExperimentId::Chain, cells(18, 10)),
        box_pencil(
            "optical-lattice-cell",
            DomainSpec::new(1, 1, lattice_period, 1.0).unwrap(),
            &[10, 12],
            ElementOrder::Linear,
            periodic_y0,
            CoefficientSpec::schroedinger(lattice),
        ),
        box_pencil(
            "layered-weight-cell",
            DomainSpec::new(2, 1, 1.0, 1.0).unwrap(),
            &[4, 4, 6],
            ElementOrder::Linear,
            periodic_y0,
            CoefficientSpec::weighted(Weight::analytic(layered_weight)),
        ),
        box_pencil(
            "weighted-q2-cell",
            DomainSpec::new(1, 1, 1.0, 1.0).unwrap(),
            &[4, 5],
            ElementOrder::Quadratic,
            periodic_y0,
            CoefficientSpec::weighted(Weight::analytic(|z| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * z[0]).cos())),
        ),
    ]
}

/// Worst deviations of one solver from the dense spectrum.
#[derive(Clone, Debug)]
pub struct OracleReport {
    pub n: usize,
    pub lambda_err: f64,
    pub vector_err: f64,
}

/// B-distance from `x` to the dense eigenspace of `lambda`, aligning sign
/// when that eigenspace is one-dimensional.
fn eigenspace_distance(b: &SparseMatrix, values: &[f64], vectors: &[Vec<f64>], lambda: f64, x: &[f64]) -> f64 {
    let cluster: Vec<usize> =
        (0..values.len()).filter(|&j| (values[j] - lambda).abs() <= 1e-6 * lambda.abs().max(1.0)).collect();
    if let [j] = cluster.as_slice() {
        return b_distance_up_to_sign(b, x, &vectors[*j]);
    }
    let bx = b.spmv(x).unwrap();
    let mut r = x.to_vec();
    for &j in &cluster {
        let c: f64 = vectors[j].iter().zip(&bx).map(|(p, q)| p * q).sum();
        for (ri, vi) in r.iter_mut().zip(&vectors[j]) {
            *ri -= c * vi;
        }
    }
    b.bilinear(&r, &r).max(0.0).sqrt()
}

/// Runs the solver for the lowest pairs and measures the worst
/// eigenvalue and eigenvector deviation from the dense oracle.
pub fn compare_solver(p: &Pencil, inverse_power: bool) -> Result<OracleReport, String> {
    let n = p.a.n();
    if n > MAX_DOFS {
        return Err(format!("{} has {n} DOFs, above the oracle limit", p.name));
    }
    let dense = dense_generalized(&p.a, &p.b);
    let cfg = SolverConfig::default().with_tol(1e-10).with_k_max(if inverse_power { 20_000 } else { 2_000 });
    let op = ShiftInvert::new(&p.a, &p.b, 0.0, &cfg.backend).map_err(|e| e.to_string())?;
    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut report = OracleReport { n, lambda_err: 0.0, vector_err: 0.0 };
    let pairs = if inverse_power { 1 } else { PAIRS };
    for k in 0..pairs {
        let c = deflated_config(&cfg, k, n);
        let r: EigResult = if inverse_power {
            inverse_power_with(&p.a, &p.b, &op, &c, &found)
        } else {
            lopcg_with(&p.a, &p.b, &op, &c, &found)
        }
        .map_err(|e| e.to_string())?;
        if !r.converged {
            return Err(format!("pair {k} did not converge (residual {:.2e})", r.final_residual()));
        }
        report.lambda_err = report.lambda_err.max((r.lambda - dense.values[k]).abs());
        report.vector_err =
            report.vector_err.max(eigenspace_distance(&p.b, &dense.values, &dense.vectors, r.lambda, &r.x));
        found.push(r.x);
    }
    Ok(report)
}

/// Largest relative difference between every backend's `(A - sigma B)^{-1} r`
/// and a dense solve.
pub fn compare_backends(p: &Pencil, sigma: f64) -> Result<f64, String> {
    let n = p.a.n();
    let shifted = p.a.linear_combination(1.0, &p.b, -sigma).map_err(|e| e.to_string())?;
    let rhs: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.4).collect();
    let exact =
        to_nalgebra(&shifted).cholesky().ok_or("shifted matrix not SPD")?.solve(&DVector::from_vec(rhs.clone()));
    let backends = [
        Backend::Cholesky(Ordering::Natural),
        Backend::Cholesky(Ordering::Rcm),
        Backend::Cholesky(Ordering::NestedDissection(Arc::new(p.coords.clone()))),
        Backend::Cg { tol: 1e-13, max_iter: 20 * n },
    ];
    let mut worst = 0.0f64;
    for be in &backends {
        let x = ShiftInvert::new(&p.a, &p.b, sigma, be)
            .and_then(|op| op.apply(&rhs))
            .map_err(|e| format!("{be:?}: {e}"))?;
        let diff: f64 = x.iter().zip(exact.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
        worst = worst.max(diff / exact.norm());
    }
    Ok(worst)
}
