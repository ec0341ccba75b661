//! Solvers for linearly constrained convex programs `min f(x) s.t. Ax = b`
//! where `f` is only reachable through its proximal mapping.
//!
//! The crate covers the balanced augmented Lagrangian family (plain,
//! dual-primal and accelerated), the classical baselines they generalize,
//! ADMM on primal and dual lifts, Douglas-Rachford splitting, and the
//! 24-order Gauss-Seidel scheme over the lifted dual. A diagnostics layer
//! checks iterate-level equivalences between these methods and the ergodic
//! gap bounds they satisfy.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accelerated;
pub mod baseline;
pub mod cli;
pub mod diagnostics;
pub mod dual_admm;
mod error;
pub mod lifted;
pub mod linalg;
pub mod pairings;
pub mod parallel;
pub mod problem;
pub mod scheme;

pub use error::{Error, Result};

/// Dense column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;

pub(crate) fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}
