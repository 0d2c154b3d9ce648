//! Dense semidefinite programming over Hermitian, real symmetric and
//! nonnegative-orthant blocks.
//!
//! Problems are stated as
//!
//! ```text
//! min / max  sum_b <C_b, X_b> + offset
//! s.t.       sum_b <A_ib, X_b> = b_i,   X_b in its cone,
//! ```
//!
//! with `<C, X> = Re Tr(C X)`. Matrix-valued constraints are expanded into
//! scalar rows by [`SdpProblem::add_matrix_eq`] and
//! [`SdpProblem::add_matrix_ineq`].

pub mod error;
pub mod problem;
pub mod solver;
pub mod verify;

pub use error::SdpError;
pub use problem::{
    BlockId, BlockKind, Coef, LinearConstraint, LinearMap, MatrixConstraint, Relation, SdpProblem,
    Sense,
};
pub use solver::{solve, BlockValue, SdpSolution, SolveOptions, Status};
pub use verify::{evaluate, verify_solution, Metrics};
