//! Periodic cell discretization and the full-order constrained solver.

pub mod assembly;
pub mod dns;
pub mod element;
pub mod mesh;
pub mod sparse;

pub use assembly::{assemble, homogenize, Assembler, Assembly, Materials};
pub use dns::{solve_dns, DnsSolution, DnsSolver, SolverConfig, SolverState, StateRecording};
pub use element::{fbar_deformation, ElementGeometry};
pub use mesh::{
    build_rve_mesh, GeometryConfig, Pairing, Particle, PeriodicMesh, Phase, QuadRule,
    QUAD_POINTS_PER_ELEMENT,
};
pub use sparse::{linear_solve_count, total_linear_solve_count, SparseLu, SparsePattern};
