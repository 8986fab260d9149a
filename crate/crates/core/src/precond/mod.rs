//! Schwarz preconditioners, the hybrid constrained-coarse-space
//! preconditioner, PCG with a Lanczos condition estimate, and a dense
//! condition-number oracle.

mod hybrid;
mod pcg;
mod schwarz;

pub use hybrid::{CoarseOperator, HybridCem, HybridOptions, LocalWeighting};
pub use pcg::{dense_cond_oracle, pcg, PcgOptions, SolveReport};
pub use schwarz::{CoarseSolver, Exact, Identity, LocalSolver, OneLevel, TwoLevel};

use crate::error::Result;
use crate::scalar::Scalar;

/// Action of an approximate inverse `z = M⁻¹ r`.
pub trait Preconditioner<T: Scalar>: Send + Sync {
    fn apply(&self, r: &[T]) -> Result<Vec<T>>;
    fn dim(&self) -> usize;
    fn name(&self) -> &'static str;
}
