//! Dense convex QP solver that works on the dual problem with an active-set
//! method. The working-set linear systems are maintained through recursive
//! LDL' updates, so each change to the active set costs a rank-one
//! modification instead of a refactorization. Ill-conditioned problems can be
//! solved through outer proximal-point iterations that reuse the inner
//! solver's state between passes.
//!
//! Layout:
//! - [`factor`]: recursive LDL' factorization (append row, delete row, solve,
//!   null vector of a singular factor).
//! - [`problem`]: problem containers and the transformation into the dual
//!   space (Cholesky of the Hessian, constraint normalization).
//! - [`solver`]: the dual active-set iteration itself.
//! - [`prox`]: proximal-point outer loop for semidefinite or ill-conditioned
//!   Hessians.
//! - [`oracle`]: slow but independent reference machinery (KKT residuals,
//!   exhaustive active-set enumeration) used for validation.
//! - [`harness`]: problem generator, file format, benchmark and warm-start
//!   sequence drivers backing the `daqp` binary.

pub mod factor;
pub mod harness;
pub mod oracle;
pub mod problem;
pub mod prox;
pub mod solver;

pub use oracle::{brute_force_solve, kkt_residual, KktReport, OracleError};
pub use problem::{cholesky_upper, transform, Bounds, LdProblem, ProblemError, QProblem};
pub use prox::{prox_solve, prox_solve_stats, ProxStats};
pub use solver::{solve, solve_warm, DualSolver, Settings, Side, SolveResult, Status};
