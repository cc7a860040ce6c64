//! Proper orthogonal decomposition of fluctuation snapshots and the
//! Galerkin-reduced solver.

pub mod basis;
pub mod files;
pub mod reduced;

pub use basis::{
    build_basis, collect_snapshots, gram_pod, hex, periodicity_defect, project,
    reconstruction_error, snapshot_rank, DnsRecord, ReducedBasis, SnapshotMeta, SnapshotSet,
    FLUCTUATION_FLOOR, RANK_TOLERANCE,
};
pub use files::{load_basis, load_snapshots, save_basis, save_snapshots};
pub use reduced::{
    coefficient_matrix, solve_reduced, ReducedSolution, ReducedSolver, ReducedState,
};
