//! Cluster synchronization of directed, weighted Kuramoto networks.
//!
//! * [`model`]: networks, partitions, characteristic matrices and `Ā`.
//! * [`analysis`]: whether a partition is phase synchronizable.
//! * [`control`]: smallest (Frobenius) masked weight change that makes it so.
//! * [`simulator`]: RK4 integration and per-cluster cohesion metrics.
//! * [`io`]: network JSON, report JSON and CSV outputs.

pub mod analysis;
pub mod control;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod model;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod simulator;

pub use analysis::{classify, SyncVerdict, DEFAULT_TOL};
pub use control::{
    apply_perturbation, solve_constrained, solve_unconstrained, verify_solution,
    PerturbationResult, SparsityMask,
};
pub use error::{Error, Result};
pub use model::{
    build_inter_cluster_matrix, CharacteristicBasis, InterClusterMatrix, NetworkSpec, Partition,
};
pub use simulator::{integrate, SimConfig, Trajectory};
