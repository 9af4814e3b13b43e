//! Configuration, result emission and dataset replay.

mod config;
mod emit;
mod replay;

pub use config::{
    parse_config, parse_config_str, parse_replay_config, parse_replay_config_str, ExperimentConfig,
    OutputConfig, OutputFormat, ReplayConfig,
};
pub use emit::{
    emit_results, format_float, read_regret_csv, read_summary_csv, write_regret_csv, write_summary_csv,
    RegretRow, ResultTables, SummaryRow, REGRET_HEADER, SUMMARY_HEADER,
};
pub use replay::{
    fit_replay_environment, parse_interactions, parse_items, read_interactions_csv, read_items_csv,
    replay_from_dataset, simulate_logged_data, synthetic_ids, write_interactions_csv, write_items_csv,
    ItemTable, ReplayOutcome,
};

use crate::error::Result;
use crate::sim::{replicate, Aggregate};

/// Runs every replication of a synthetic experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Aggregate> {
    config.validate()?;
    replicate(&config.experiment(), &config.seeds())
}
