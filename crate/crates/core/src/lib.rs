//! Exact quantum evolution and nonadiabatic (Aharonov-Anandan) geometric
//! phases for spin-s neutral particles and spin-orbit charged particles in
//! rotating or arbitrarily varying magnetic fields.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charged_atom;
pub mod error;
pub mod general_field;
pub mod linalg;
pub mod neutral_rotating;
pub mod oracle;
pub mod rational;
pub mod runner;
pub mod scenario;
pub mod spin_algebra;
pub mod sweep;
pub mod validation;

pub use error::{PhaseError, Result};
pub use spin_algebra::{SpinOps, SpinQuantum, UnitVector3};
