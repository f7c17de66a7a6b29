//! Dense real and complex linear algebra used throughout the crate.
//!
//! Vectorization is column-stacking everywhere: `vec(H P) = (Pᵀ ⊗ I) vec(H)`.

mod complex;
mod eig;
mod real;
mod solve;

pub use complex::{dft_matrix, kron, CMatrix};
pub use eig::{spectral_solve, sym_eig, SymEig};
pub use real::{dot, norm_sq, Matrix};
pub use solve::{cholesky, solve_spd, Cholesky};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix size {rows}x{cols} overflows usize")]
    DimensionOverflow { rows: usize, cols: usize },
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NonConvergence { sweeps: usize, off_norm: f64 },
    #[error("shifted spectrum is singular: c*lambda + d = {0:e} at or below 1e-14")]
    SingularShift(f64),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
}
