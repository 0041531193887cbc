//! Numerical verification laboratory for the constant rank property of convex
//! solutions to fully nonlinear elliptic equations `F(D²u, Du, u, x) = 0`.
//!
//! Modules, bottom-up:
//!
//! - [`symmat`]: Jacobi eigensolver, the weighted eigenvalue sum `Q^(ℓ)`, and
//!   derivative formulas for simple Hessian eigenvalues.
//! - [`field`]: scalar fields with fourth-order jets, polynomial fitting and
//!   the eigenvalue-splitting perturbation.
//! - [`operator`]: operator jets, the structural quadratic form and its strict
//!   variant, and a direct convexity sampler.
//! - [`rank`]: rank maps, null-direction tracking and the fixed-direction
//!   certificate.
//! - [`ineq`]: `Q`-jets, the twice-differentiated equation, the differential
//!   inequality audit and the regularity lemmas.
//! - [`solver`]: finite-difference Newton solver for Dirichlet problems.
//! - [`scenario`]: TOML scenario runner and report emission.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod exec;
pub mod field;
pub mod ineq;
pub mod operator;
pub mod rank;
pub mod scenario;
pub mod solver;
pub mod symmat;
pub mod tensor;

pub use error::{Error, Result};
pub use exec::Execution;
pub use tensor::{Mat, SymMatrix, Tensor3, Tensor4};
