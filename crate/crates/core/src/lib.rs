//! Overlapping domain-decomposition preconditioners for two-dimensional
//! Darcy flow with high-contrast coefficients.
//!
//! The crate assembles Q1 finite elements on a uniform fine grid nested in a
//! coarse grid, builds coarse spaces from local spectral problems (full,
//! snapshot-reduced, χ-only, or constrained energy minimizing), and combines
//! them with overlapping Schwarz local solvers into preconditioners for CG.
//!
//! Numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix `f64`.

pub mod coarse;
pub mod coeff;
pub mod error;
pub mod fem;
pub mod grid;
pub mod precond;
pub mod scalar;

pub use error::{Error, Result};
pub use grid::{BoundaryCondition, GridHierarchy, Region};
pub use precond::{pcg, PcgOptions, Preconditioner, SolveReport};
pub use scalar::Scalar;

pub type Field = coeff::CoefficientField<f64>;
pub type Field32 = coeff::CoefficientField<f32>;
pub type Matrix = fem::CsrMatrix<f64>;
pub type Operator = fem::SparseOperator<f64>;
pub type Basis = coarse::CoarseBasis<f64>;
pub type Pou = coarse::PartitionOfUnity<f64>;
pub type CemSpace = coarse::CemCoarseSpace<f64>;
pub type Hybrid = precond::HybridCem<f64>;
