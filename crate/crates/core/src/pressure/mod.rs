//! Finite-stage pressures on discretized unstable leaves.

mod cover;
mod metric;
mod optimize;
mod table;

pub use cover::{cover_pressure_small, cover_pressure_table, CoverReport, CoverStage, OpenCover, JOIN_LIMIT};
pub use metric::{build_conflicts, required_sample_size, ConflictStructure, LeafMetric, DENSITY_FACTOR, SLACK};
pub use optimize::{
    ball_sup_weights, brute_force_oracle, greedy_max_separated, max_weight_separated_dp, min_weight_spanning_dp,
    oracle_suite, random_instance, CoveringSolution, Method, OracleMode, OracleSolution, OracleSuiteReport,
    PackingSolution, ORACLE_LIMIT,
};
pub use table::{
    additive_stage_pressure, audit_rows, estimate, estimate_pressure, finite_stage_row, run_pressure, sample_weights,
    EpsilonEstimate, PressureEstimate, PressureParams, PressureRow, PressureTable, RowAudit, MIN_STAGES, ROW_TOLERANCE,
};
