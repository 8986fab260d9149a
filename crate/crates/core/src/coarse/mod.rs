//! Coarse spaces: partition of unity, spectral and snapshot spaces on
//! coarse-node neighborhoods, and the constrained energy-minimizing space.

pub mod basis;
pub mod cem;
pub mod pou;
pub mod snapshot;
pub mod spectral;

pub use basis::{CoarseBasis, CoarseSpaceInfo, SparseColumn, SpaceVariant};
pub use cem::{
    build_cem_aux, build_cem_basis, oversampled, AuxCell, BrokenField, CemAux, CemCoarseSpace,
    ConstrainedOperator,
};
pub use pou::{build_pou, HatFunction, PartitionOfUnity};
pub use snapshot::{build_all_snapshots, build_gmsfem_space, build_snapshot_space, SnapshotSpace};
pub use spectral::{
    build_hat_space, build_spectral_space, local_pencil, MassWeight, RegionSpectrum, Selection,
    SpectralCoarseSpace,
};
