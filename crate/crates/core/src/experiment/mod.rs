//! Config-driven multi-seed, multi-method experiments and their on-disk
//! artifacts.

pub mod artifacts;
pub mod config;
pub mod runner;

pub use artifacts::{
    emit_privacy_sweep, emit_uplift_points, read_privacy_sweep, read_uplift_points, render_report, report_csv, sha256_hex,
    write_run, write_sweep, ArtifactWriter, Manifest, SavedModel, SweepRow,
};
pub use config::{ExperimentConfig, Method, TrimMode};
pub use runner::{
    audit_clients, build_report, load_dataset, mean_audit_auc, prepare_seed, run_cell, run_cell_with, run_experiment,
    reaudit, run_sweep, split_hash, Cell, CellResult, ClientRow, ExperimentReport, ExperimentRun, ReportRow, SeedData, Stat,
};
