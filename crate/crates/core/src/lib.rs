//! Optimization-based atomistic-to-continuum coupling for a one-dimensional
//! Lennard-Jones chain with a manufactured point defect.
//!
//! The crate builds the domain decomposition and graded finite element mesh,
//! assembles the coupled problem (gradient-mismatch objective constrained by
//! atomistic and Cauchy–Born equilibrium), solves its KKT system by Newton's
//! method and measures the error against the exact lattice solution.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling_opt;
pub mod domain_mesh;
pub mod error;
pub mod harness;
pub mod lattice_potential;
pub mod linalg;
pub mod models;
pub mod oracle_error;

pub use error::{AtcError, Result};
