//! Potentials: product sines, the optical lattice, truncated Coulomb chains
//! with ghost centers, Kronig–Penney wells and the barrier wrapper.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::grid::Region;

/// Norm used to decide whether a point lies inside a Kronig–Penney well.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WellNorm {
    L1,
    LInf,
}

/// Truncated Coulomb chain `sum_i -Z / max(|z - c_i|, b)` over the centers
/// closer than `range`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoulombChain {
    pub centers: Vec<[f64; 2]>,
    pub charge: f64,
    pub cutoff: f64,
    pub range: f64,
    /// Constant added everywhere (restores a non-negative potential).
    pub lift: f64,
}

impl CoulombChain {
    /// `n` centers at `(R + 2(i-1)r, 0)` plus one ghost center on either end.
    pub fn chain(n: usize, big_r: f64, r: f64, charge: f64, cutoff: f64) -> Self {
        let mut centers: Vec<[f64; 2]> = Vec::with_capacity(n + 2);
        centers.push([big_r - 2.0 * r, 0.0]);
        for i in 0..n {
            centers.push([big_r + 2.0 * i as f64 * r, 0.0]);
        }
        centers.push([big_r + 2.0 * n as f64 * r, 0.0]);
        Self { centers, charge, cutoff, range: big_r, lift: 0.0 }
    }

    pub fn with_lift(mut self, lift: f64) -> Self {
        self.lift = lift;
        self
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.lift + coulomb_chain(z, &self.centers, self.charge, self.cutoff, self.range)
    }
}

/// Sum of truncated Coulomb terms over `centers` within distance `range`.
pub fn coulomb_chain(z: &[f64], centers: &[[f64; 2]], charge: f64, cutoff: f64, range: f64) -> f64 {
    centers
        .iter()
        .map(|c| {
            let dx = z[0] - c[0];
            let dy = z.get(1).copied().unwrap_or(0.0) - c[1];
            (dx * dx + dy * dy).sqrt()
        })
        .filter(|&dist| dist < range)
        .map(|dist| -charge / dist.max(cutoff))
        .sum()
}

/// The kind of potential, without barrier.
#[derive(Clone)]
pub enum PotentialKind {
    Zero,
    Constant(f64),
    /// `amplitude * prod_i sin(wavenumber * z_i)^2` over every coordinate.
    ProductSine {
        amplitude: f64,
        wavenumber: f64,
    },
    /// `amplitude * sin(pi x)^2 y^2`.
    SineY2 {
        amplitude: f64,
    },
    /// `amplitude * (1 - sin(w pi (x - d) / (2(R - d))) sin(w pi (y - (R - d)) / (2(R - d))))`.
    OpticalLattice {
        amplitude: f64,
        omega: f64,
        big_r: f64,
        d: f64,
    },
    CoulombChain(CoulombChain),
    /// Zero inside `||z mod 1 - 1/2|| < half_width`, `height` elsewhere.
    KronigPenney {
        height: f64,
        half_width: f64,
        norm: WellNorm,
    },
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::Zero => write!(f, "Zero"),
            PotentialKind::Constant(c) => write!(f, "Constant({c})"),
            PotentialKind::ProductSine { amplitude, wavenumber } => {
                write!(f, "ProductSine {{ amplitude: {amplitude}, wavenumber: {wavenumber} }}")
            }
            PotentialKind::SineY2 { amplitude } => write!(f, "SineY2 {{ amplitude: {amplitude} }}"),
            PotentialKind::OpticalLattice { amplitude, omega, big_r, d } => {
                write!(f, "OpticalLattice {{ amplitude: {amplitude}, omega: {omega}, R: {big_r}, d: {d} }}")
            }
            PotentialKind::CoulombChain(c) => write!(f, "{c:?}"),
            PotentialKind::KronigPenney { height, half_width, norm } => {
                write!(f, "KronigPenney {{ height: {height}, half_width: {half_width}, norm: {norm:?} }}")
            }
            PotentialKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Penalty `a` added on the complement of `region`.
#[derive(Clone, Debug)]
pub struct Barrier {
    pub region: Region,
    pub penalty: f64,
}

/// A potential, optionally wrapped by a barrier.
#[derive(Clone, Debug)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub barrier: Option<Barrier>,
}

impl From<PotentialKind> for PotentialSpec {
    fn from(kind: PotentialKind) -> Self {
        Self { kind, barrier: None }
    }
}

impl PotentialSpec {
    pub fn zero() -> Self {
        PotentialKind::Zero.into()
    }

    pub fn product_sine(amplitude: f64, wavenumber: f64) -> Self {
        PotentialKind::ProductSine { amplitude, wavenumber }.into()
    }

    pub fn sine_y2(amplitude: f64) -> Self {
        PotentialKind::SineY2 { amplitude }.into()
    }

    /// Optical lattice with the usual `omega = 9, R = 1, d = 0.1`.
    pub fn optical_lattice() -> Self {
        PotentialKind::OpticalLattice { amplitude: 100.0, omega: 9.0, big_r: 1.0, d: 0.1 }.into()
    }

    pub fn kronig_penney(norm: WellNorm) -> Self {
        PotentialKind::KronigPenney { height: 100.0, half_width: 0.25, norm }.into()
    }

    pub fn coulomb(chain: CoulombChain) -> Self {
        PotentialKind::CoulombChain(chain).into()
    }

    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        PotentialKind::Custom(Arc::new(f)).into()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PotentialKind::Zero) && self.barrier.is_none()
    }

    /// Value at `z` (one entry per spatial direction).
    pub fn eval(&self, z: &[f64]) -> f64 {
        let base = eval_kind(&self.kind, z);
        match &self.barrier {
            Some(b) if !b.region.contains(z) => base + b.penalty,
            _ => base,
        }
    }

    /// Declared period in the expanding directions, `None` if unknown.
    pub fn period(&self) -> Option<f64> {
        match &self.kind {
            PotentialKind::Zero | PotentialKind::Constant(_) => Some(1.0),
            PotentialKind::ProductSine { wavenumber, .. } => Some(PI / wavenumber.abs()),
            PotentialKind::SineY2 { .. } | PotentialKind::KronigPenney { .. } => Some(1.0),
            PotentialKind::OpticalLattice { omega, big_r, d, .. } => Some(4.0 * (big_r - d) / omega),
            PotentialKind::CoulombChain(c) => match c.centers.as_slice() {
                [a, b, ..] => Some(b[0] - a[0]),
                _ => None,
            },
            PotentialKind::Custom(_) => None,
        }
    }

    /// Largest absolute value the potential can take, if known analytically.
    pub fn bound(&self) -> Option<f64> {
        let base = match &self.kind {
            PotentialKind::Zero => Some(0.0),
            PotentialKind::Constant(c) => Some(c.abs()),
            PotentialKind::ProductSine { amplitude, .. } => Some(amplitude.abs()),
            PotentialKind::SineY2 { .. } | PotentialKind::Custom(_) => None,
            PotentialKind::OpticalLattice { amplitude, .. } => Some(2.0 * amplitude.abs()),
            PotentialKind::CoulombChain(c) => {
                // At most two centers of a chain with spacing > range can be in reach.
                Some(c.lift.abs() + 2.0 * c.charge.abs() / c.cutoff)
            }
            PotentialKind::KronigPenney { height, .. } => Some(height.abs()),
        }?;
        Some(base + self.barrier.as_ref().map_or(0.0, |b| b.penalty.abs()))
    }
}

fn eval_kind(kind: &PotentialKind, z: &[f64]) -> f64 {
    match kind {
        PotentialKind::Zero => 0.0,
        PotentialKind::Constant(c) => *c,
        PotentialKind::ProductSine { amplitude, wavenumber } => {
            amplitude * z.iter().map(|&t| (wavenumber * t).sin().powi(2)).product::<f64>()
        }
        PotentialKind::SineY2 { amplitude } => {
            let y = z.get(1).copied().unwrap_or(0.0);
            amplitude * (PI * z[0]).sin().powi(2) * y * y
        }
        PotentialKind::OpticalLattice { amplitude, omega, big_r, d } => {
            let s = 2.0 * (big_r - d);
            let y = z.get(1).copied().unwrap_or(0.0);
            let sx = (omega * PI * (z[0] - d) / s).sin();
            let sy = (omega * PI * (y - (big_r - d)) / s).sin();
            amplitude * (1.0 - sx * sy)
        }
        PotentialKind::CoulombChain(c) => c.eval(z),
        PotentialKind::KronigPenney { height, half_width, norm } => {
            let offsets = z.iter().map(|&t| (t.rem_euclid(1.0) - 0.5).abs());
            let dist = match norm {
                WellNorm::L1 => offsets.sum::<f64>(),
                WellNorm::LInf => offsets.fold(0.0, f64::max),
            };
            if dist < *half_width {
                0.0
            } else {
                *height
            }
        }
        PotentialKind::Custom(f) => f(z),
    }
}

/// Returns `V + penalty` on the complement of `region`, `V` elsewhere.
pub fn barrier_wrap(v: PotentialSpec, region: Region, penalty: f64) -> PotentialSpec {
    PotentialSpec { kind: v.kind, barrier: Some(Barrier { region, penalty }) }
}
