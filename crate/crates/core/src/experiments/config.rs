use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::algorithms::{theory_schedule, LrSchedule, Schedule, TrainerConfig, Variant};
use crate::cluster::ClusterSpec;
use crate::error::{Error, Result};
use crate::optim::{InnerConfig, OuterConfig};
use crate::workloads::{SamplingPolicy, WorkloadSpec};

/// Step budget used when neither `total_steps` nor `epochs` is given.
pub const DEFAULT_TOTAL_STEPS: u64 = 1_000;
/// Above this many steps metrics are written every 10 steps instead of every step.
pub const DENSE_METRICS_LIMIT: u64 = 10_000;

/// A run configuration as written by the user. Every section except
/// `workload` has defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub cluster: ClusterSpec,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub batch_size: usize,
    #[serde(default)]
    pub sampling: SamplingPolicy,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub parallel_workers: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    /// Defaults depend on the variant.
    #[serde(default)]
    pub inner: Option<InnerConfig>,
    #[serde(default)]
    pub outer: Option<OuterConfig>,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        Self {
            variant: default_variant(),
            inner: None,
            outer: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// Inner step size. Derived (and must be omitted) in theory mode.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Mixing rate. Derived (and must be omitted) in theory mode.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_h")]
    pub h: u64,
    /// DDP steps before local updates start; rounded up to a multiple of `h`.
    #[serde(default)]
    pub warmup_steps: u64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    #[serde(default)]
    pub total_steps: Option<u64>,
    /// Alternative budget in passes over the training set.
    #[serde(default)]
    pub epochs: Option<f64>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            alpha: None,
            eta: None,
            p: default_p(),
            h: default_h(),
            warmup_steps: 0,
            lr_schedule: LrSchedule::Constant,
            total_steps: None,
            epochs: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Defaults to 1 for runs of up to 10⁴ steps and 10 beyond.
    #[serde(default)]
    pub metrics_every: Option<u64>,
    /// Held-out evaluation cadence; evaluation always runs at the last step.
    #[serde(default)]
    pub eval_every: Option<u64>,
}

fn one() -> usize {
    1
}
fn default_variant() -> Variant {
    Variant::Palsgd
}
fn default_p() -> f64 {
    0.05
}
fn default_h() -> u64 {
    16
}
const DEFAULT_ALPHA: f64 = 0.01;
const DEFAULT_ETA: f64 = 1.0;

/// Values computed during resolution rather than read from the document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub alpha: f64,
    pub eta: f64,
    pub total_steps: u64,
    pub warmup_end: u64,
    pub metrics_every: u64,
    /// Whether the theory step size hit the `p / (48 L H)` cap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory_capped: Option<bool>,
}

/// A validated configuration: the normalized document plus what the trainer needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedConfig {
    /// Input with defaults filled in. Theory-mode `alpha`/`eta` stay empty
    /// so the dump parses back to the same run.
    pub config: RunConfig,
    pub derived: Derived,
    pub trainer: TrainerConfig,
}

#[derive(Serialize)]
struct NormalizedDump<'a> {
    config: &'a RunConfig,
    derived: &'a Derived,
}

impl ResolvedConfig {
    pub fn workload(&self) -> &WorkloadSpec {
        &self.config.workload
    }

    pub fn out_dir(&self) -> Option<&PathBuf> {
        self.config.output.dir.as_ref()
    }

    /// Pretty JSON `{ "config": …, "derived": … }`.
    pub fn normalized_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NormalizedDump {
            config: &self.config,
            derived: &self.derived,
        })?)
    }
}

/// Parses and validates a JSON run configuration.
pub fn parse_config(text: &str) -> Result<ResolvedConfig> {
    let raw: RunConfig =
        serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
    raw.resolve()
}

/// Spectrum bounds, noise level and initial distance of a quadratic spec.
fn quadratic_constants(spec: &WorkloadSpec) -> Option<(f64, f64, f64, f64)> {
    match spec {
        WorkloadSpec::Quadratic {
            mu,
            l,
            noise_sigma,
            init_distance_sq,
            hessian_diag,
            ..
        } => {
            let (lo, hi) = match hessian_diag {
                Some(d) => (
                    d.iter().copied().fold(f64::INFINITY, f64::min),
                    d.iter().copied().fold(0.0, f64::max),
                ),
                None => (*mu, *l),
            };
            Some((lo, hi, *noise_sigma, *init_distance_sq))
        }
        _ => None,
    }
}

impl RunConfig {
    /// Fills defaults, derives the step budget and theory step sizes, and
    /// validates every section.
    pub fn resolve(mut self) -> Result<ResolvedConfig> {
        self.workload.validate()?;
        let variant = self.algorithm.variant;
        if self.workers == 0 {
            return Err(Error::config("workers", "K must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        let s = &self.schedule;
        if !(0.0..1.0).contains(&s.p) {
            return Err(Error::config(
                "schedule.p",
                format!("p must be in [0, 1), got {}", s.p),
            ));
        }
        if s.h == 0 {
            return Err(Error::config("schedule.h", "H must be >= 1"));
        }

        let total_steps = match (s.total_steps, s.epochs) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "schedule.epochs",
                    "give either total_steps or epochs, not both",
                ))
            }
            (Some(t), None) => t,
            (None, Some(epochs)) => {
                let n = self.workload.dataset_len().ok_or_else(|| {
                    Error::config(
                        "schedule.epochs",
                        "epoch budgets need a dataset-backed workload",
                    )
                })?;
                if !(epochs > 0.0 && epochs.is_finite()) {
                    return Err(Error::config("schedule.epochs", "must be > 0"));
                }
                let per_step = (self.workers * self.batch_size) as f64;
                (epochs * n as f64 / per_step).ceil() as u64
            }
            (None, None) => DEFAULT_TOTAL_STEPS,
        };
        if total_steps == 0 {
            return Err(Error::config("schedule.total_steps", "T must be >= 1"));
        }

        let mut theory_capped = None;
        let mut averaging_mu = None;
        let (alpha, eta) = if variant == Variant::PalsgdTheory {
            if s.alpha.is_some() || s.eta.is_some() {
                return Err(Error::config(
                    "schedule.alpha",
                    "theory mode derives alpha and eta; remove them from the config",
                ));
            }
            if !(s.p > 0.0 && s.p <= 0.5) {
                return Err(Error::config(
                    "schedule.p",
                    format!(
                        "theory mode requires the convergence-bound condition 0 < p <= 1/2, got {}",
                        s.p
                    ),
                ));
            }
            if s.lr_schedule != LrSchedule::Constant {
                return Err(Error::config(
                    "schedule.lr_schedule",
                    "theory mode uses a constant step size",
                ));
            }
            let (mu, l, sigma, d0) = quadratic_constants(&self.workload).ok_or_else(|| {
                Error::config(
                    "workload.kind",
                    "theory mode requires the quadratic workload",
                )
            })?;
            if d0 <= 0.0 {
                return Err(Error::config(
                    "workload.init_distance_sq",
                    "theory mode requires d0 > 0",
                ));
            }
            let th = theory_schedule(mu, l, s.p, s.h, total_steps, self.workers, sigma, d0)
                .map_err(|e| Error::config("schedule", e.to_string()))?;
            theory_capped = Some(th.capped);
            averaging_mu = Some(mu);
            (th.alpha, th.eta)
        } else {
            let alpha = *self.schedule.alpha.get_or_insert(DEFAULT_ALPHA);
            let eta = *self.schedule.eta.get_or_insert(DEFAULT_ETA);
            (alpha, eta)
        };

        let mut schedule =
            Schedule::constant(alpha, eta, self.schedule.p, self.schedule.h, total_steps);
        schedule.warmup_steps = self.schedule.warmup_steps;
        schedule.lr_schedule = self.schedule.lr_schedule.clone();

        let mut trainer = TrainerConfig::new(variant, schedule, self.workers, self.seed);
        if let Some(inner) = &self.algorithm.inner {
            trainer.inner = inner.clone();
        }
        if let Some(outer) = &self.algorithm.outer {
            trainer.outer = outer.clone();
        }
        trainer = trainer.resolved();
        self.algorithm.inner = Some(trainer.inner.clone());
        self.algorithm.outer = Some(trainer.outer.clone());

        let metrics_every = match self.output.metrics_every {
            Some(0) => return Err(Error::config("output.metrics_every", "must be >= 1")),
            Some(n) => n,
            None if total_steps <= DENSE_METRICS_LIMIT => 1,
            None => 10,
        };
        self.output.metrics_every = Some(metrics_every);
        trainer.cluster = self.cluster.clone();
        trainer.batch_size = self.batch_size;
        trainer.sampling = self.sampling;
        trainer.record_every = metrics_every;
        trainer.eval_every = self.output.eval_every;
        trainer.averaging_mu = averaging_mu;
        trainer.parallel_workers = self.parallel_workers;
        trainer.validate()?;

        let warmup_end = match variant {
            Variant::Ddp => total_steps,
            _ => trainer.schedule.warmup_end(),
        };
        Ok(ResolvedConfig {
            derived: Derived {
                alpha,
                eta,
                total_steps,
                warmup_end,
                metrics_every,
                theory_capped,
            },
            config: self,
            trainer,
        })
    }
}

/// Command-line overrides applied before resolution.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub metrics_every: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            config.output.dir = Some(dir.clone());
        }
        if let Some(n) = self.metrics_every {
            config.output.metrics_every = Some(n);
        }
    }
}

/// Parses the raw document without resolving it.
pub fn parse_raw(text: &str) -> Result<RunConfig> {
    serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))
}
