//! Finite element solvers for the Moreau–Yosida regularized dual formulation
//! of optimal plate-thickness design.
//!
//! The state and adjoint equations are discretized either by lowest-order
//! Raviart–Thomas mixed elements or by continuous piecewise linears; the
//! control is recovered pointwise from the adjoint by projection. A damped
//! semismooth Newton method solves each regularized problem and a path driver
//! couples the regularization parameter to mesh refinement.

pub mod error;
pub mod harness;
pub mod kkt;
pub mod linalg;
pub mod mesh;
pub mod poisson_p1;
pub mod poisson_rt0;
pub mod problems;
pub mod quadrature;
pub mod solver;
pub mod source;

pub use error::{Error, Result};
