use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::algorithms::{run_training, TrainOutcome};
use crate::cluster::write_events_jsonl;
use crate::error::Result;
use crate::workloads::Workload;

use super::config::ResolvedConfig;
use super::metrics::{write_metrics, LossKind, MetricsRecord, Summary};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const CONFIG_FILE: &str = "config.json";

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub summary: Summary,
    pub metrics: Vec<MetricsRecord>,
    pub outcome: TrainOutcome,
}

pub fn loss_kind(workload: &Workload) -> LossKind {
    if workload.quadratic().is_some() {
        LossKind::Suboptimality
    } else {
        LossKind::TrainLoss
    }
}

/// Builds the workload and runs training; writes nothing.
pub fn execute(config: &ResolvedConfig) -> Result<RunResult> {
    let workload = config.workload().build(config.config.seed)?;
    execute_on(&workload, config)
}

/// Like [`execute`] with a prebuilt workload (reused across seeds or cells).
pub fn execute_on(workload: &Workload, config: &ResolvedConfig) -> Result<RunResult> {
    let outcome = run_training(workload, &config.trainer)?;
    let kind = loss_kind(workload);
    let averaged_loss = outcome
        .averaged_iterate
        .as_ref()
        .and_then(|x| workload.suboptimality(x))
        .transpose()?;
    let metrics = outcome
        .diagnostics
        .records
        .iter()
        .map(|r| MetricsRecord::from_step(r, kind))
        .collect();
    let summary = Summary::from_outcome(&outcome, kind, config.derived.total_steps, averaged_loss);
    Ok(RunResult {
        summary,
        metrics,
        outcome,
    })
}

/// Writes `config.json`, `metrics.jsonl`, `events.jsonl` and `summary.json` into `dir`.
pub fn write_run(dir: &Path, config: &ResolvedConfig, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), config.normalized_json()? + "\n")?;

    let mut metrics = BufWriter::new(File::create(dir.join(METRICS_FILE))?);
    write_metrics(&result.metrics, &mut metrics)?;
    metrics.flush()?;

    let mut events = BufWriter::new(File::create(dir.join(EVENTS_FILE))?);
    write_events_jsonl(&result.outcome.events, &mut events)?;
    events.flush()?;

    fs::write(
        dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&result.summary)? + "\n",
    )?;
    Ok(())
}

/// Runs the experiment and, when the config names an output directory, writes its files.
pub fn run_experiment(config: &ResolvedConfig) -> Result<RunResult> {
    let result = execute(config)?;
    if let Some(dir) = config.out_dir() {
        write_run(dir, config, &result)?;
    }
    Ok(result)
}
