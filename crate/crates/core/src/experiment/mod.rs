//! Reproducible epsilon sweeps driven by a flat text config.

pub mod config;
pub mod report;
pub mod sweep;

pub use config::RunConfig;
pub use report::{convergence_table, CauchyRow, EpsilonEntry, EpsilonStats, SweepReport};
pub use sweep::{
    analyze_trajectory, execute, run_epsilon, run_sweep, write_artifacts, CellReport, EpsilonRun, SweepOutcome,
    CELLS_HEADER, IDENTITY_HEADER,
};
