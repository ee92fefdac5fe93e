//! Run configuration, experiment execution, sweeps and the theory checks.
//!
//! A run directory holds `config.json` (normalized config plus derived
//! values), `metrics.jsonl`, `events.jsonl` and `summary.json`.

pub mod config;
pub mod gradcheck;
pub mod metrics;
pub mod runner;
pub mod sweep;
pub mod theory;

pub use config::{parse_config, parse_raw, Derived, Overrides, ResolvedConfig, RunConfig};
pub use gradcheck::{gradcheck, GradcheckReport};
pub use metrics::{
    emit_record, parse_record, read_metrics, write_metrics, LossKind, MetricsRecord, Summary,
};
pub use runner::{execute, execute_on, run_experiment, write_run, RunResult};
pub use sweep::{read_table, sweep, Grid, SweepReport, SweepRow};
pub use theory::{log_log_slope, mean_and_std_err, verify_theory, TheoryOptions, TheoryReport};
