//! Conic modeling layer.
//!
//! Programs are built from affine expressions over scalar variables and carry linear, second-order
//! cone and PSD constraints. Complex Hermitian PSD variables are lowered to their real symmetric
//! embedding `[[Re X, -Im X], [Im X, Re X]] ⪰ 0` before solving. The backend is Clarabel.

// Link the system BLAS/LAPACK the backend's SDP support needs.
extern crate openblas_src;

mod expr;
mod program;
mod solve;

pub use expr::{CExpr, LinExpr, Var};
pub use program::{CVecVar, ConicProgram, HermitianVar, PsdBlock, SolverSettings};
pub use solve::{solve, Solution, Status};

#[derive(Debug, thiserror::Error)]
pub enum ConicError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("backend error: {0}")]
    Backend(String),
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
