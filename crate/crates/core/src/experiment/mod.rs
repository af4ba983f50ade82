//! Config-driven experiment commands shared by the command-line front end.

mod commands;
mod config;

pub use commands::{
    cmd_eval, cmd_gen_data, cmd_report, cmd_retrieve, cmd_shape_metrics, cmd_train, format_ranked,
    format_shape_metrics, load_dataset, CHECKPOINT_FILE, HISTORY_FILE, REPORT_CSV, REPORT_TABLE, SUMMARY_CSV,
};
pub use config::{DataConfig, EvalConfig, ExperimentConfig, ModelConfig, TrainingConfig, OUTPUT_DIR_ENV};
