//! Dense and sparse linear-algebra substrate.
//!
//! Sparse systems from the structured meshes in this crate have small
//! bandwidth after a reverse Cuthill-McKee reordering, so [`factorize`]
//! permutes into band form and runs a banded LU with partial pivoting. The
//! factors are immutable and may be shared across threads; every solve uses
//! its own scratch buffer.

mod banded;
mod chol;
mod eigen;
mod sparse;

pub use banded::Factorization;
pub use chol::{cholesky, psd_sqrt_factor};
pub use eigen::{sym_eig, truncated_sym_eig, DenseOp, EigenPairs, SymmetricOp};
pub use sparse::SparseOperator;

/// Relative pivot threshold below which a factorization is declared singular.
pub const SINGULAR_PIVOT_REL: f64 = 1e-14;

#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    #[error("singular matrix: pivot {pivot:.3e} below threshold at column {column}")]
    Singular { column: usize, pivot: f64 },
    #[error("eigensolver failed to converge after {iterations} iterations")]
    EigNonConvergence { iterations: usize },
    #[error("matrix not positive definite after maximum jitter {max_jitter:.1e}")]
    Indefinite { max_jitter: f64 },
    #[error("requested rank {rank} exceeds dimension {dim}")]
    RankExceedsDimension { rank: usize, dim: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Factorize a sparse operator for repeated solves.
///
/// The factors can be reused for any number of right-hand sides without
/// refactoring; see [`Factorization::solve`].
pub fn factorize(a: &SparseOperator) -> Result<Factorization, LinalgError> {
    Factorization::new(a)
}
