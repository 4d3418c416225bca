//! Simulation-based calibration: replication runs and their diagnostics.

mod diagnostics;
mod replication;

pub use diagnostics::{
    diagnostics, diagnostics_with_alphas, ks_uniformity, rank_quantile, z_score, SbcDiagnostics,
    DEFAULT_ALPHAS,
};
pub use replication::{
    run_parameter_z_scores, run_replications, ReplicationFailure, ReplicationMode, ReplicationSet,
    RunOptions, StartMode,
};
