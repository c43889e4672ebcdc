//! Conjugate instants along geodesics, studied through curves of Lagrangian
//! subspaces and paths of self-adjoint operators at finite truncation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conjugate;
pub mod construct;
pub mod curve;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod morse;
pub mod random;
pub mod symplectic;
pub mod system;

pub use error::{Error, Result};
pub use linalg::{SymOperator, Tolerance};
