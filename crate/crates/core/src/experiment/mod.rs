//! Configuration-driven experiment pipeline: single runs, sweeps, and the
//! dataset utilities used by the command-line front end.

mod config;
mod run;
mod sweep;
mod tools;

pub use config::{AttackSpec, DatasetSpec, ExperimentConfig, PartitionSpec, SweepAxes, TrainSpec};
pub use run::{
    cmd_run, derive_seed, execute, materialize, poison, PlanSummary, RunMetrics, RunOutput, RunRecord, TrainSummary,
};
pub use sweep::{aggregate_csv, cmd_sweep, expand, mean_std, median, Cell, CellSummary};
pub use tools::{convert, gen_sbm, inspect, out_dir, summarize, ConvertSummary, DatasetSummary};
