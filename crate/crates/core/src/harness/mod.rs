//! Experiment orchestration: configs, replicated runs, baseline comparisons,
//! bound sweeps and the `acfl` command line.
//!
//! Every random draw of replicate `r` comes from a stream keyed by
//! `(master_seed, tag, [r])`, so results do not depend on scheduling and two
//! methods run at the same seed see the same data, coding noise and stragglers.

mod cli;
mod compare;
mod config;
mod experiment;
mod output;
mod tradeoff;

pub use cli::cli_main;
pub use compare::{
    at_noise_level, compare_baselines, compare_with, simulate_comparison, write_comparison, Adaptive, Baseline,
    Comparison, FixedWeight, LevelComparison, MethodRuns, OracleWeight,
};
pub use config::{
    CompareConfig, DatasetConfig, ExperimentConfig, NoiseSpec, PolicySpec, RunConfig, ScheduleSpec, StragglerConfig,
    TradeoffConfig,
};
pub use experiment::{
    calibrate_oracle_bounds, coded_digest, dataset_digest, mean_stderr, prepare, resolve_policy, run_experiment,
    simulate, summarize, write_run, OracleBounds, Prepared, ReplicateOutcome, RunResult, StreamDigests, SummaryRow,
    CODING_TAG, DATASET_TAG, INIT_TAG, STRAGGLER_TAG,
};
pub use output::{write_summary_csv, write_trace_csv, write_tradeoff_csv, SUMMARY_HEADER, TRACE_HEADER};
pub use tradeoff::{tradeoff_curves, write_tradeoff, TradeoffCurves};
