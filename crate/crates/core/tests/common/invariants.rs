//! Invariant checks over small random discretizations. Each check returns
//! `Err(message)` on violation so it can run under proptest or a plain loop.

use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use pseig::assembly::{assemble_pencil, CoefficientSpec, Weight};
use pseig::eigensolve::{deflated_smallest_k, inverse_power, lopcg, SolverConfig};
use pseig::grid::{
    build_box_mesh, build_dof_map, BoundaryCondition, BoundarySpec, DofMap, DomainSpec, ElementOrder, Mesh, Region,
};
use pseig::homogenize::{homogenized_coefficients, solve_correctors, weighted_mean_integral};
use pseig::linalg::{Backend, SparseMatrix};
use pseig::potentials::{barrier_wrap, PotentialSpec};

use super::to_nalgebra;

pub type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bc_strategy() -> impl Strategy<Value = BoundaryCondition> {
    prop_oneof![Just(BoundaryCondition::Dirichlet), Just(BoundaryCondition::Neumann), Just(BoundaryCondition::Periodic),]
}

/// A small random pencil: box mesh, boundary conditions, weight and potential.
#[derive(Clone, Debug)]
pub struct PencilCase {
    pub p: usize,
    pub q: usize,
    pub cells: Vec<usize>,
    pub order: ElementOrder,
    pub bx: BoundaryCondition,
    pub by: BoundaryCondition,
    pub rho_amp: f64,
    pub v_amp: f64,
}

impl PencilCase {
    pub fn build(&self) -> Result<(Mesh, DofMap, SparseMatrix, SparseMatrix), String> {
        let dom = DomainSpec::new(self.p, self.q, 1.0, 1.0).map_err(|e| e.to_string())?;
        let mesh = build_box_mesh(&dom, &self.cells, self.order).map_err(|e| e.to_string())?;
        let dm = build_dof_map(&mesh, &BoundarySpec::new(self.bx, self.by)).map_err(|e| e.to_string())?;
        let amp = self.rho_amp;
        let coeff = CoefficientSpec {
            rho: Weight::analytic(move |z| 1.0 + amp * (2.0 * PI * z[0]).cos()),
            potential: PotentialSpec::product_sine(self.v_amp, PI),
            diffusion: None,
        };
        let (a, b) = assemble_pencil(&mesh, &dm, &coeff).map_err(|e| e.to_string())?;
        Ok((mesh, dm, a, b))
    }

    /// `A` is definite when some boundary is eliminated.
    pub fn a_definite(&self) -> bool {
        self.bx == BoundaryCondition::Dirichlet || (self.q > 0 && self.by == BoundaryCondition::Dirichlet)
    }
}

pub fn pencil_case() -> impl Strategy<Value = PencilCase> {
    (1usize..=2, 0usize..=1)
        .prop_flat_map(|(p, q)| {
            let d = p + q;
            let max_cells = if d == 3 { 3 } else { 5 };
            (
                Just(p),
                Just(q),
                prop::collection::vec(2usize..=max_cells, d),
                prop_oneof![Just(ElementOrder::Linear), Just(ElementOrder::Quadratic)],
                bc_strategy(),
                bc_strategy(),
                0.0f64..0.9,
                0.0f64..50.0,
            )
        })
        .prop_map(|(p, q, cells, order, bx, by, rho_amp, v_amp)| PencilCase {
            p,
            q,
            cells,
            order,
            bx,
            by,
            rho_amp,
            v_amp,
        })
        .prop_filter("need free DOFs", |c| c.build().map(|(_, dm, _, _)| dm.n_free() >= 3).unwrap_or(false))
}

/// Definite cases only.
pub fn definite_pencil_case() -> impl Strategy<Value = PencilCase> {
    pencil_case()
        .prop_map(|mut c| {
            c.bx = BoundaryCondition::Dirichlet;
            c
        })
        .prop_filter("need free DOFs", |c| c.build().map(|(_, dm, _, _)| dm.n_free() >= 3).unwrap_or(false))
}

/// Symmetry of `A` and `B`, `B` SPD, `A` SPD when a boundary is eliminated.
pub fn check_assembly(case: &PencilCase) -> Check {
    let (_, _, a, b) = case.build()?;
    for (name, m) in [("A", &a), ("B", &b)] {
        let defect = m.symmetry_defect();
        ensure(defect <= 1e-12 * m.max_abs(), || format!("{name} asymmetric: {defect:e}"))?;
    }
    ensure(to_nalgebra(&b).cholesky().is_some(), || "B is not positive definite".into())?;
    if case.a_definite() {
        ensure(to_nalgebra(&a).cholesky().is_some(), || "A is not positive definite".into())?;
    }
    Ok(())
}

/// Rayleigh quotients of LOPCG never increase.
pub fn check_lopcg_monotone(case: &PencilCase) -> Check {
    let (_, _, a, b) = case.build()?;
    let r = lopcg(&a, &b, &SolverConfig::default().with_tol(1e-9).with_k_max(300)).map_err(|e| e.to_string())?;
    let slack = 1e-12 * r.lambda.abs().max(1.0);
    for w in r.rayleigh.windows(2) {
        ensure(w[1] <= w[0] + slack, || format!("Rayleigh quotient rose from {} to {}", w[0], w[1]))?;
    }
    ensure(r.converged, || format!("LOPCG did not converge ({} iterations)", r.iterations))
}

/// Deflated eigenpairs are ascending, B-normalized and B-orthogonal.
pub fn check_deflation(case: &PencilCase) -> Check {
    let (_, _, a, b) = case.build()?;
    let cfg = SolverConfig::default().with_tol(1e-9).with_k_max(500);
    let out = deflated_smallest_k(&a, &b, &cfg, 3).map_err(|e| e.to_string())?;
    ensure(out.complete, || "a deflated run stagnated".into())?;
    for w in out.pairs.windows(2) {
        ensure(w[0].lambda <= w[1].lambda, || "eigenvalues not ascending".into())?;
    }
    for (i, x) in out.pairs.iter().enumerate() {
        let n = b.bilinear(&x.x, &x.x);
        ensure((n - 1.0).abs() <= 1e-10, || format!("pair {i} has B-norm^2 {n}"))?;
        for y in &out.pairs[i + 1..] {
            let ip = b.bilinear(&x.x, &y.x).abs();
            ensure(ip <= 1e-8, || format!("|x_i^T B x_j| = {ip:e}"))?;
        }
    }
    Ok(())
}

/// Cell problem plus an expanding domain built from the same spacing.
#[derive(Clone, Debug)]
pub struct ShiftCase {
    pub cells: usize,
    pub length: usize,
    pub v_amp: f64,
}

pub fn shift_case() -> impl Strategy<Value = ShiftCase> {
    (3usize..=5, 1usize..=3, 0.0f64..60.0).prop_map(|(cells, length, v_amp)| ShiftCase { cells, length, v_amp })
}

/// Inverse power with `sigma = 0` and `sigma = lambda_inf` converge to the same pair.
pub fn check_ordering_preserved(case: &ShiftCase) -> Check {
    let v = PotentialSpec::sine_y2(case.v_amp);
    let coeff = CoefficientSpec::schroedinger(v);
    let pencil = |len: usize, bc: BoundarySpec| -> Result<(SparseMatrix, SparseMatrix), String> {
        let dom = DomainSpec::new(1, 1, len as f64, 1.0).map_err(|e| e.to_string())?;
        let mesh =
            build_box_mesh(&dom, &[case.cells * len, case.cells], ElementOrder::Linear).map_err(|e| e.to_string())?;
        let dm = build_dof_map(&mesh, &bc).map_err(|e| e.to_string())?;
        assemble_pencil(&mesh, &dm, &coeff).map_err(|e| e.to_string())
    };
    let (ca, cb) = pencil(1, BoundarySpec::new(BoundaryCondition::Periodic, BoundaryCondition::Dirichlet))?;
    let cfg = SolverConfig::default().with_tol(1e-11).with_k_max(5000);
    let sigma = lopcg(&ca, &cb, &cfg).map_err(|e| e.to_string())?.lambda;
    let (a, b) = pencil(case.length, BoundarySpec::dirichlet())?;
    let r0 = inverse_power(&a, &b, &cfg).map_err(|e| e.to_string())?;
    let rs = inverse_power(&a, &b, &cfg.clone().with_sigma(sigma)).map_err(|e| e.to_string())?;
    ensure(r0.converged && rs.converged, || "inverse power did not converge".into())?;
    ensure((r0.lambda - rs.lambda).abs() <= 1e-8, || format!("lambda {} vs {}", r0.lambda, rs.lambda))?;
    let d = super::b_distance_up_to_sign(&b, &r0.x, &rs.x);
    ensure(d <= 1e-6, || format!("eigenvectors differ by {d:e} in the B-norm"))
}

/// Barrier penalties `a1 <= a2` give ordered ground eigenvalues.
pub fn check_barrier_monotone(cells: usize, a1: f64, a2: f64) -> Check {
    let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
    let dom = DomainSpec::new(1, 1, 2.0, 1.0).map_err(|e| e.to_string())?;
    let mesh = build_box_mesh(&dom, &[2 * cells, cells], ElementOrder::Linear).map_err(|e| e.to_string())?;
    let dm = build_dof_map(&mesh, &BoundarySpec::dirichlet()).map_err(|e| e.to_string())?;
    let region = Region::UnionOfDisks { centers: vec![[0.5, 0.5], [1.5, 0.5]], radius: 0.45 };
    let ground = |a: f64| -> Result<f64, String> {
        let v = barrier_wrap(PotentialSpec::sine_y2(10.0), region.clone(), a);
        let (am, bm) = assemble_pencil(&mesh, &dm, &CoefficientSpec::schroedinger(v)).map_err(|e| e.to_string())?;
        let r = lopcg(&am, &bm, &SolverConfig::default().with_tol(1e-10).with_k_max(500)).map_err(|e| e.to_string())?;
        ensure(r.converged, || "barrier solve did not converge".into())?;
        Ok(r.lambda)
    };
    let (l1, l2) = (ground(lo)?, ground(hi)?);
    ensure(l1 <= l2 + 1e-9 * l2.abs().max(1.0), || format!("lambda({lo}) = {l1} > lambda({hi}) = {l2}"))
}

/// Weighted cell problem for the corrector checks.
#[derive(Clone, Debug)]
pub struct CorrectorCase {
    pub p: usize,
    pub q: usize,
    pub cells: usize,
    pub order: ElementOrder,
    pub a: f64,
    pub b: f64,
}

pub fn corrector_case() -> impl Strategy<Value = CorrectorCase> {
    (1usize..=2, 0usize..=1, 3usize..=6, any::<bool>(), -0.5f64..0.5, -0.2f64..0.2).prop_map(
        |(p, q, cells, quad, a, b)| CorrectorCase {
            p,
            q,
            cells: if p + q == 3 { cells.min(4) } else { cells },
            order: if quad { ElementOrder::Quadratic } else { ElementOrder::Linear },
            a,
            b,
        },
    )
}

/// Correctors have zero weighted mean; `D` is finite with positive diagonal.
pub fn check_corrector(case: &CorrectorCase) -> Check {
    let dom = DomainSpec::new(case.p, case.q, 1.0, 1.0).map_err(|e| e.to_string())?;
    let mesh =
        Arc::new(build_box_mesh(&dom, &vec![case.cells; case.p + case.q], case.order).map_err(|e| e.to_string())?);
    let dm = Arc::new(
        build_dof_map(&mesh, &BoundarySpec::new(BoundaryCondition::Periodic, BoundaryCondition::Neumann))
            .map_err(|e| e.to_string())?,
    );
    let (a, b, d) = (case.a, case.b, case.p + case.q);
    let rho = Weight::analytic(move |z| {
        let last = z[d - 1];
        1.0 + a * (2.0 * PI * z[0]).cos() + b * (2.0 * PI * z[0]).sin() * (1.0 + last)
    });
    for backend in [Backend::default(), Backend::Cg { tol: 1e-12, max_iter: 10_000 }] {
        let th = solve_correctors(&mesh, &dm, &rho, &backend).map_err(|e| e.to_string())?;
        let total = pseig::assembly::integrate_weight(&mesh, &rho).map_err(|e| e.to_string())?;
        for t in &th {
            let mean = weighted_mean_integral(t, &rho).map_err(|e| e.to_string())?;
            ensure(mean.abs() <= 1e-9 * total, || format!("corrector mean {mean:e} vs total {total}"))?;
        }
        let (dbar, cbar) = homogenized_coefficients(&mesh, &rho, &th).map_err(|e| e.to_string())?;
        ensure(cbar > 0.0 && cbar.is_finite(), || format!("C = {cbar}"))?;
        for i in 0..case.p {
            ensure(dbar[(i, i)] > 0.0, || format!("D[{i},{i}] = {}", dbar[(i, i)]))?;
            for j in 0..case.p {
                ensure(dbar[(i, j)].is_finite(), || "non-finite D entry".into())?;
            }
        }
    }
    Ok(())
}
