//! Monge approximations of bicausal couplings: partitions, cell-preserving
//! split maps, the composed biadapted maps, and their verification.
//!
//! Discrete measures rarely admit biadapted bijections at base resolution,
//! so every map here acts on micro-atoms; couplings are compared after
//! projecting back to the base spaces.

mod feasibility;
mod monge;
mod partition;
mod split;

pub use feasibility::{biadapted_feasibility, Feasibility, FeasibilityWitness};
pub use monge::{
    cell_agreement, convergence_report, convergence_row, mesh_bound_check, monge_approximation, ordered_meshes,
    partitions_for, surjective_approximation, surjective_report, CellAgreement, CellRow, ConvergenceReport,
    ConvergenceRow, MeshBound, MeshSpec, MongeApproximation, SurjectiveApproximation, SurjectiveReport, SurjectiveRow,
};
pub use partition::{grid_partition, Partition};
pub use split::{split_bijection, SplitMap};
