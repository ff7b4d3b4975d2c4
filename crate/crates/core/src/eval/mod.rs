//! Experiment configs, runs, reports and comparisons.

pub mod compare;
pub mod config;
pub mod metrics;
pub mod report;
pub mod runner;

pub use compare::{compare_reports, ComparisonTable};
pub use config::{ExperimentConfig, IndexFilter, Method, TrainRegime};
pub use metrics::{evaluate, ConfusionMatrix, Metrics};
pub use report::MetricsReport;
pub use runner::{
    rerun_from_manifest, run_config_file, run_experiment, sha256_hex, write_outputs, Manifest,
    RunOptions, RunOutput,
};
