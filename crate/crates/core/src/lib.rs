//! Shift-and-invert eigensolvers for periodic Schrödinger-type eigenvalue
//! problems on anisotropically expanding boxes, with the unit-cell and
//! homogenization machinery needed to pick a quasi-optimal shift.

pub mod assembly;
pub mod eigensolve;
pub mod error;
pub mod grid;
pub mod homogenize;
pub mod linalg;
pub mod pipeline;
pub mod potentials;

pub use error::{Error, Result};
