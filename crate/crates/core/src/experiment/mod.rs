//! Protocols end to end: data preparation, fold runs, CER reports, the
//! spatial band-power analysis, and the report files.

mod config;
mod data;
mod report;
mod run;
mod spatial;

pub use config::{ExperimentConfig, DEFAULT_HELD_OUT_WORD};
pub use data::{prepare, read_epochs, write_epochs, PreparedData};
pub use report::{cer_csv, emit_reports, emit_spatial, topography_csv, EvalReport, Split, SubjectRow, Timing, TrialResult};
pub use run::{
    execute_run, finish_run, fit_run_bank, fold_split, forbidden_trials, hash_matrix, run_pipeline, run_prepared, run_prepared_outputs,
    run_specs, train_run, AuditRecord, RunOutput, RunSpec, RunSummary,
};
pub use spatial::{color_limit, spatial_analysis, topography_svg, SpatialReport, ANALYSIS_BAND_HZ};
