//! Experiment driver: scenario configs, the round loop, metrics, CSV
//! artifacts and multi-seed comparisons.

mod compare;
mod config;
mod metrics;
mod output;
mod run;

pub use compare::{compare, compare_text, seeded, sweep, sweep_configs, write_compare, CompareRow, DEFAULT_SEEDS, SWEEP_PARAMS};
pub use config::{ChurnEvent, DataConfig, FlConfig, PartitionConfig, ScenarioConfig, TierConfig};
pub use metrics::{
    iqr, mean, quantile, rolling_mean, round_x, rows_of, std_dev, RoundRow, RunSummary, ROUND_X_TOLERANCE, ROUND_X_WINDOW,
    TAIL_WINDOW,
};
pub use output::{
    read_manifest, read_rounds, report, summary_text, write_run, Manifest, CLIENTS_FILE, MANIFEST_FILE, ROUNDS_FILE,
    SCHEMA_VERSION, SUMMARY_CSV, SUMMARY_TXT, TRACE_FILE,
};
pub use run::{run, RoundRecord, RunArtifact, Simulation, TraceRow};
