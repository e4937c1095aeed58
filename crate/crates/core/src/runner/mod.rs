//! Experiment configuration, orchestration and artifact output.
//!
//! A run writes `<run_id>.csv` (one row per round, columns [`CSV_COLUMNS`],
//! preceded by the line [`CSV_SCHEMA_LINE`]) and `<run_id>.summary.json`.

mod config;
mod experiment;
mod output;
mod sweep;

pub use config::{check_run_id, ExperimentConfig, InitConfig, MetricsFlags};
pub use experiment::{execute, initial_point, RunData, RunFailure, RunSeries, RunSummary, SUMMARY_SCHEMA};
pub use output::{
    format_real, read_csv, write_artifacts, write_csv, write_json, ArtifactSet, CsvTable, CSV_COLUMNS,
    CSV_SCHEMA_LINE,
};
pub use sweep::{
    check, compare, format_table, run_experiment, run_sweep, CheckReport, CompareOutcome, ProbeResult,
    RunDigest, RunOutcome, SweepAxis, SweepEntry, SweepOutcome, SweepSummary,
};
