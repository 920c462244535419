//! Monte-Carlo experiment harness.

pub mod pipeline;
pub mod report;
pub mod runner;
pub mod spec;

pub use pipeline::{calibrate_trial, csi_hash, run_methods, synthesize_trial, MethodResult, StageConfig};
pub use report::{format_table, summarize, Stat, Summary};
pub use runner::{read_rows, run_point, run_sweep, run_trial, ResultRow, RunOptions, SweepOutcome, CSV_SCHEMA_VERSION};
pub use spec::{preset, Composition, ExperimentSpec, Method, PipelineOptions, Sweep, SweepAxis, SweepPoint, PRESETS};
