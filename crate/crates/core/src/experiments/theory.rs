use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::algorithms::Variant;
use crate::error::{Error, Result};

use super::config::{ResolvedConfig, RunConfig};
use super::runner::execute;
use super::sweep::set_path;

pub const MIN_SEEDS: usize = 3;
pub const DEFAULT_SEEDS: usize = 10;
/// Accepted range for the log–log slope of error against K.
pub const SLOPE_RANGE: (f64, f64) = (-1.15, -0.7);
/// Required error reduction when T doubles.
pub const DOUBLING_FACTOR: f64 = 1.6;
pub const NOISELESS_TOLERANCE: f64 = 1e-10;
/// Largest factor by which the doubling check may extend the horizon to
/// leave the capped-step regime.
pub const MAX_HORIZON_GROWTH: u64 = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryOptions {
    pub seeds: usize,
    pub worker_counts: Vec<usize>,
    pub sync_intervals: Vec<u64>,
    /// Horizon of the H sweep; short so the `κH²σ²/(μT²)` term is visible.
    pub h_sweep_steps: u64,
    pub noiseless_workers: usize,
    /// Minimum horizon of the noiseless run. It is extended, if needed, to
    /// `40 / (μα)` steps so the exponential term can reach the tolerance.
    pub noiseless_steps: u64,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        Self {
            seeds: DEFAULT_SEEDS,
            worker_counts: vec![1, 2, 4, 8],
            sync_intervals: vec![2, 4, 8],
            h_sweep_steps: 1_000,
            noiseless_workers: 4,
            noiseless_steps: 10_000,
        }
    }
}

/// Mean and standard error of the weighted-average suboptimality at one setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub workers: usize,
    pub h: u64,
    pub total_steps: u64,
    pub mean: f64,
    pub std_err: f64,
    pub samples: Vec<f64>,
}

impl ErrorEstimate {
    fn new(workers: usize, h: u64, total_steps: u64, samples: Vec<f64>) -> Self {
        let (mean, std_err) = mean_and_std_err(&samples);
        Self {
            workers,
            h,
            total_steps,
            mean,
            std_err,
            samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub requirement: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub seeds: usize,
    pub speedup: Vec<ErrorEstimate>,
    pub slope: f64,
    pub sync_sweep: Vec<ErrorEstimate>,
    pub doubling: [ErrorEstimate; 2],
    pub noiseless_steps: u64,
    pub noiseless_suboptimality: f64,
    pub checks: Vec<Check>,
    /// Whether the H sweep error is non-decreasing in H (reported, not gated).
    pub sync_sweep_increasing: bool,
    pub pass: bool,
}

pub fn mean_and_std_err(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("points", "need at least two points"));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::invalid(
            "points",
            "log–log fit needs positive values",
        ));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "x values are all equal"));
    }
    Ok(sxy / sxx)
}

fn variant_config(base: &Value, edits: &[(&str, Value)]) -> Result<ResolvedConfig> {
    let mut doc = base.clone();
    for (path, value) in edits {
        set_path(&mut doc, path, value.clone())?;
    }
    let raw: RunConfig = serde_json::from_value(doc)?;
    raw.resolve()
}

/// Runs every seed of one setting in parallel and returns the per-seed values.
fn run_seeds(
    base: &Value,
    first_seed: u64,
    seeds: usize,
    edits: &[(&str, Value)],
    pick: fn(&super::metrics::Summary) -> Option<f64>,
) -> Result<Vec<f64>> {
    (0..seeds as u64)
        .into_par_iter()
        .map(|i| {
            let mut e = edits.to_vec();
            e.push(("seed", Value::from(first_seed + i)));
            let config = variant_config(base, &e)?;
            let summary = execute(&config)?.summary;
            if summary.diverged {
                return Err(Error::invalid(
                    "verify_theory",
                    format!("run diverged: {:?}", summary.divergence_message),
                ));
            }
            pick(&summary)
                .ok_or_else(|| Error::invalid("verify_theory", "no weighted-average iterate"))
        })
        .collect()
}

fn averaged(s: &super::metrics::Summary) -> Option<f64> {
    s.averaged_loss
}

fn last(s: &super::metrics::Summary) -> Option<f64> {
    Some(s.final_loss)
}

/// Speedup, sync-interval, horizon-doubling and noiseless checks for a
/// quadratic theory-mode configuration.
pub fn verify_theory(base: &ResolvedConfig, options: &TheoryOptions) -> Result<TheoryReport> {
    if options.seeds < MIN_SEEDS {
        return Err(Error::config(
            "seeds",
            format!(
                "need at least {MIN_SEEDS} seeds to fit a slope, got {}",
                options.seeds
            ),
        ));
    }
    if base.config.algorithm.variant != Variant::PalsgdTheory {
        return Err(Error::config(
            "algorithm.variant",
            "verify-theory requires palsgd_theory",
        ));
    }
    if !base.config.workload.is_quadratic() {
        return Err(Error::config(
            "workload.kind",
            "verify-theory requires the quadratic workload",
        ));
    }
    let mut raw = base.config.clone();
    raw.output.dir = None;
    // The summary needs only the final record.
    raw.output.metrics_every = Some(u64::MAX);
    let doc = serde_json::to_value(&raw)?;
    let seed0 = raw.seed;
    let total = base.derived.total_steps;
    let h = raw.schedule.h;
    let k_fixed = raw.workers;

    let mut speedup = Vec::new();
    for &k in &options.worker_counts {
        let samples = run_seeds(
            &doc,
            seed0,
            options.seeds,
            &[("workers", Value::from(k))],
            averaged,
        )?;
        speedup.push(ErrorEstimate::new(k, h, total, samples));
    }
    let slope = log_log_slope(
        &speedup
            .iter()
            .map(|e| (e.workers as f64, e.mean))
            .collect::<Vec<_>>(),
    )?;

    let mut sync_sweep = Vec::new();
    for &hh in &options.sync_intervals {
        let edits = [
            ("schedule.h", Value::from(hh)),
            ("schedule.total_steps", Value::from(options.h_sweep_steps)),
        ];
        let samples = run_seeds(&doc, seed0, options.seeds, &edits, averaged)?;
        sync_sweep.push(ErrorEstimate::new(
            k_fixed,
            hh,
            options.h_sweep_steps,
            samples,
        ));
    }
    let sync_sweep_increasing = sync_sweep.windows(2).all(|w| w[1].mean >= w[0].mean);

    // With a capped step size the error plateaus at a T-independent floor;
    // the 1/T regime starts once the log term sets α.
    let mut t0 = total;
    while t0 < total.saturating_mul(MAX_HORIZON_GROWTH) {
        let probe = variant_config(&doc, &[("schedule.total_steps", Value::from(t0))])?;
        if probe.derived.theory_capped == Some(false) {
            break;
        }
        t0 *= 2;
    }
    let short_edits = [("schedule.total_steps", Value::from(t0))];
    let short = ErrorEstimate::new(
        k_fixed,
        h,
        t0,
        run_seeds(&doc, seed0, options.seeds, &short_edits, averaged)?,
    );
    let long_edits = [("schedule.total_steps", Value::from(2 * t0))];
    let long = ErrorEstimate::new(
        k_fixed,
        h,
        2 * t0,
        run_seeds(&doc, seed0, options.seeds, &long_edits, averaged)?,
    );
    let doubling_ratio = short.mean / long.mean;

    let noiseless_probe = variant_config(
        &doc,
        &[
            ("workload.noise_sigma", Value::from(0.0)),
            ("workers", Value::from(options.noiseless_workers)),
        ],
    )?;
    let mu = noiseless_probe.trainer.averaging_mu.unwrap_or(1.0);
    let needed = (40.0 / (mu * noiseless_probe.derived.alpha)).ceil() as u64;
    let noiseless_steps = options.noiseless_steps.max(needed);
    let noiseless_edits = [
        ("workload.noise_sigma", Value::from(0.0)),
        ("workers", Value::from(options.noiseless_workers)),
        ("schedule.total_steps", Value::from(noiseless_steps)),
    ];
    let noiseless = variant_config(&doc, &noiseless_edits)?;
    let noiseless_suboptimality = last(&execute(&noiseless)?.summary).unwrap_or(f64::INFINITY);

    let checks = vec![
        Check {
            name: "speedup_slope".into(),
            value: slope,
            requirement: format!("in [{}, {}]", SLOPE_RANGE.0, SLOPE_RANGE.1),
            pass: (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&slope),
        },
        Check {
            name: "horizon_doubling_ratio".into(),
            value: doubling_ratio,
            requirement: format!(">= {DOUBLING_FACTOR}"),
            pass: doubling_ratio >= DOUBLING_FACTOR,
        },
        Check {
            name: "noiseless_suboptimality".into(),
            value: noiseless_suboptimality,
            requirement: format!("< {NOISELESS_TOLERANCE:e}"),
            pass: noiseless_suboptimality < NOISELESS_TOLERANCE,
        },
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(TheoryReport {
        seeds: options.seeds,
        speedup,
        slope,
        sync_sweep,
        doubling: [short, long],
        noiseless_steps,
        noiseless_suboptimality,
        checks,
        sync_sweep_increasing,
        pass,
    })
}
