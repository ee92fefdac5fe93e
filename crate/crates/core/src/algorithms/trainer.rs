use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterSpec, CommEvent, SimClock};
use crate::error::{Error, Result};
use crate::optim::{InnerConfig, InnerKind, InnerOptimizer, OuterConfig, OuterOptimizer};
use crate::vecmath::{mean_of, ParamVector};
use crate::workloads::{SamplingPolicy, Workload};

use super::schedule::Schedule;
use super::worker::{consensus_probe, ddp_step, palsgd_local_step, sync_round, StepKind, Worker};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ddp,
    LocalSgd,
    Diloco,
    Palsgd,
    PalsgdTheory,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ddp => "ddp",
            Variant::LocalSgd => "local_sgd",
            Variant::Diloco => "diloco",
            Variant::Palsgd => "palsgd",
            Variant::PalsgdTheory => "palsgd_theory",
        }
    }

    /// Whether the variant takes pseudo-sync steps.
    pub fn mixes(self) -> bool {
        matches!(self, Variant::Palsgd | Variant::PalsgdTheory)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub variant: Variant,
    pub inner: InnerConfig,
    pub outer: OuterConfig,
    pub schedule: Schedule,
    pub workers: usize,
    pub seed: u64,
    pub cluster: ClusterSpec,
    pub batch_size: usize,
    pub sampling: SamplingPolicy,
    /// Record diagnostics after every `record_every`-th step (and the last).
    pub record_every: u64,
    /// Held-out evaluation cadence; `None` evaluates only at the last step.
    pub eval_every: Option<u64>,
    /// Strong-convexity constant for the `(1 − μα)^{−(t+1)}` weighted iterate.
    pub averaging_mu: Option<f64>,
    /// Run worker-local steps on the rayon pool. Results are identical.
    pub parallel_workers: bool,
}

impl TrainerConfig {
    pub fn new(variant: Variant, schedule: Schedule, workers: usize, seed: u64) -> Self {
        let (inner, outer) = match variant {
            Variant::Ddp | Variant::LocalSgd | Variant::PalsgdTheory => {
                (InnerConfig::sgd(), OuterConfig::averaging())
            }
            Variant::Diloco | Variant::Palsgd => {
                (InnerConfig::adamw(), OuterConfig::nesterov(0.7, 0.9))
            }
        };
        Self {
            variant,
            inner,
            outer,
            schedule,
            workers,
            seed,
            cluster: ClusterSpec::default(),
            batch_size: 1,
            sampling: SamplingPolicy::WithReplacement,
            record_every: 1,
            eval_every: None,
            averaging_mu: None,
            parallel_workers: false,
        }
    }

    /// Applies the constraints each variant imposes: no pseudo-sync outside
    /// PALSGD, plain averaging for Local SGD, SGD/SGD(lr 1) in theory mode.
    pub fn resolved(&self) -> TrainerConfig {
        let mut c = self.clone();
        match c.variant {
            Variant::Ddp => c.schedule.p = 0.0,
            Variant::LocalSgd => {
                c.schedule.p = 0.0;
                c.outer = OuterConfig::averaging();
            }
            Variant::Diloco => c.schedule.p = 0.0,
            Variant::Palsgd => {}
            Variant::PalsgdTheory => {
                c.inner.kind = InnerKind::Sgd;
                c.outer = OuterConfig::averaging();
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("workers", "K must be >= 1"));
        }
        if self.record_every == 0 {
            return Err(Error::config("metrics_every", "must be >= 1"));
        }
        if self.eval_every == Some(0) {
            return Err(Error::config("eval_every", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        self.schedule.validate()?;
        self.inner.validate("algorithm.inner")?;
        self.outer.validate("algorithm.outer")?;
        self.cluster.validate(self.workers)?;
        if self.variant == Variant::PalsgdTheory
            && !(self.schedule.p > 0.0 && self.schedule.p <= 0.5)
        {
            return Err(Error::config(
                "schedule.p",
                "theory mode requires 0 < p <= 1/2",
            ));
        }
        Ok(())
    }
}

/// Diagnostics snapshot after step `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub sim_time_s: f64,
    /// `F(x̄) − F(x*)` when the optimum is known, training loss of `x̄` otherwise.
    pub loss: f64,
    pub eval_loss: Option<f64>,
    pub eval_accuracy: Option<f64>,
    pub xi: f64,
    pub mean_model_distance: f64,
    pub sync_count: u64,
    pub comm_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub records: Vec<StepRecord>,
}

impl Diagnostics {
    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }
}

/// Why and where a run stopped early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub step: u64,
    pub message: String,
    pub last_record: Option<StepRecord>,
}

/// Online `x̂ = Σ w_t x_t / Σ w_t` with `w_{t+1} / w_t = 1 / ratio`.
///
/// Sums are kept normalized by the newest weight, so long horizons do not
/// overflow.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedAverage {
    ratio: f64,
    sum: Option<ParamVector>,
    norm: f64,
}

impl WeightedAverage {
    /// Weights `w_t = (1 − μα)^{−(t+1)}`.
    pub fn exponential(mu: f64, alpha: f64) -> Self {
        Self {
            ratio: 1.0 - mu * alpha,
            sum: None,
            norm: 0.0,
        }
    }

    pub fn add(&mut self, x: &ParamVector) -> Result<()> {
        match &mut self.sum {
            None => self.sum = Some(x.clone()),
            Some(s) => {
                s.scale_in_place(self.ratio);
                s.axpy_in_place(1.0, x)?;
            }
        }
        self.norm = self.norm * self.ratio + 1.0;
        Ok(())
    }

    pub fn value(&self) -> Option<ParamVector> {
        self.sum.as_ref().map(|s| {
            let mut v = s.clone();
            v.scale_in_place(1.0 / self.norm);
            v
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub variant: Variant,
    pub final_global: ParamVector,
    pub diagnostics: Diagnostics,
    /// Theory-mode weighted average of the worker means `x̄^(t)`, `t < T`.
    pub averaged_iterate: Option<ParamVector>,
    pub events: Vec<CommEvent>,
    pub sim_time_s: f64,
    pub steps_completed: u64,
    pub gradient_steps: Vec<u64>,
    pub pseudo_sync_steps: Vec<u64>,
    pub divergence: Option<DivergenceReport>,
}

impl TrainOutcome {
    pub fn sync_count(&self) -> usize {
        self.events.len()
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn comm_seconds(&self) -> f64 {
        self.events.iter().map(|e| e.duration_s).sum()
    }
}

/// What one call to [`Trainer::step`] did.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub t: u64,
    pub ddp: bool,
    pub synced: bool,
    pub kinds: Vec<StepKind>,
}

/// Bulk-synchronous training loop shared by every variant.
pub struct Trainer<'w> {
    workload: &'w Workload,
    config: TrainerConfig,
    workers: Vec<Worker>,
    global: ParamVector,
    outer: OuterOptimizer,
    clock: SimClock,
    events: Vec<CommEvent>,
    comm_seconds: f64,
    t: u64,
    warmup_end: u64,
    averager: Option<WeightedAverage>,
    diagnostics: Diagnostics,
    gradient_steps: Vec<u64>,
    pseudo_sync_steps: Vec<u64>,
}

impl<'w> Trainer<'w> {
    pub fn new(workload: &'w Workload, config: &TrainerConfig) -> Result<Self> {
        config.validate()?;
        let config = config.resolved();
        let dim = workload.dim();
        let init = workload.initial_point(config.seed);
        let samplers = workload.samplers(
            config.workers,
            config.seed,
            config.batch_size,
            config.sampling,
        )?;
        let workers = samplers
            .into_iter()
            .enumerate()
            .map(|(k, sampler)| {
                Worker::new(
                    k,
                    init.clone(),
                    InnerOptimizer::new(config.inner.clone(), dim),
                    sampler,
                    config.seed,
                )
            })
            .collect();
        let warmup_end = match config.variant {
            Variant::Ddp => config.schedule.total_steps,
            _ => config.schedule.warmup_end(),
        };
        let averager = config
            .averaging_mu
            .map(|mu| WeightedAverage::exponential(mu, config.schedule.alpha));
        Ok(Self {
            workload,
            outer: OuterOptimizer::new(config.outer.clone(), dim),
            clock: SimClock::new(config.workers),
            workers,
            global: init,
            events: Vec::new(),
            comm_seconds: 0.0,
            t: 0,
            warmup_end,
            averager,
            diagnostics: Diagnostics::default(),
            gradient_steps: vec![0; config.workers],
            pseudo_sync_steps: vec![0; config.workers],
            config,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn workers(&self) -> &[Worker] {
        &self.workers
    }

    pub fn global(&self) -> &ParamVector {
        &self.global
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn events(&self) -> &[CommEvent] {
        &self.events
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    /// Next step index.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn warmup_end(&self) -> u64 {
        self.warmup_end
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.config.schedule.total_steps
    }

    fn worker_mean(&self) -> Result<ParamVector> {
        mean_of(self.workers.iter().map(|w| &w.params))
    }

    fn push_event(&mut self, event: CommEvent) {
        self.comm_seconds += event.duration_s;
        self.events.push(event);
    }

    /// Executes iteration `t` on every worker, plus the all-reduce if due.
    pub fn step(&mut self) -> Result<StepReport> {
        let t = self.t;
        let total = self.config.schedule.total_steps;
        if t >= total {
            return Err(Error::invalid("t", "training already finished"));
        }
        if let Some(avg) = &mut self.averager {
            let mean = mean_of(self.workers.iter().map(|w| &w.params))?;
            avg.add(&mean)?;
        }
        let schedule = &self.config.schedule;
        let report = if t < self.warmup_end {
            let event = ddp_step(
                &mut self.workers,
                self.workload,
                schedule,
                &mut self.clock,
                &self.config.cluster,
                self.config.seed,
                t,
            )?;
            self.push_event(event);
            self.global.clone_from(&self.workers[0].params);
            self.gradient_steps.iter_mut().for_each(|c| *c += 1);
            StepReport {
                t,
                ddp: true,
                synced: true,
                kinds: vec![StepKind::Gradient; self.workers.len()],
            }
        } else {
            let workload = self.workload;
            let kinds: Vec<StepKind> = if self.config.parallel_workers {
                self.workers
                    .par_iter_mut()
                    .map(|w| palsgd_local_step(w, workload, schedule, t))
                    .collect::<Result<_>>()?
            } else {
                self.workers
                    .iter_mut()
                    .map(|w| palsgd_local_step(w, workload, schedule, t))
                    .collect::<Result<_>>()?
            };
            for (k, kind) in kinds.iter().enumerate() {
                let is_gradient = *kind == StepKind::Gradient;
                self.clock
                    .advance_step(&self.config.cluster, self.config.seed, k, t, is_gradient);
                if is_gradient {
                    self.gradient_steps[k] += 1;
                } else {
                    self.pseudo_sync_steps[k] += 1;
                }
            }
            let synced = (t + 1).is_multiple_of(schedule.h) || t + 1 == total;
            if synced {
                let event = sync_round(
                    &mut self.workers,
                    &mut self.global,
                    &mut self.outer,
                    &mut self.clock,
                    &self.config.cluster,
                    t,
                )?;
                self.push_event(event);
            }
            StepReport {
                t,
                ddp: false,
                synced,
                kinds,
            }
        };
        self.t += 1;
        if self.t.is_multiple_of(self.config.record_every) || self.t == total {
            self.record(t)?;
        }
        Ok(report)
    }

    fn record(&mut self, t: u64) -> Result<()> {
        let mean = self.worker_mean()?;
        let consensus = consensus_probe(&self.workers)?;
        let last = t + 1 == self.config.schedule.total_steps;
        let eval_due = last
            || self
                .config
                .eval_every
                .is_some_and(|e| (t + 1).is_multiple_of(e));
        let eval = if eval_due {
            self.workload.evaluate(&mean).transpose()?
        } else {
            None
        };
        self.diagnostics.records.push(StepRecord {
            t,
            sim_time_s: self.clock.now(),
            loss: self.workload.progress_loss(&mean)?,
            eval_loss: eval.map(|e| e.loss),
            eval_accuracy: eval.map(|e| e.accuracy),
            xi: consensus.xi,
            mean_model_distance: consensus.mean_model_distance,
            sync_count: self.events.len() as u64,
            comm_seconds: self.comm_seconds,
        });
        Ok(())
    }

    /// Runs to completion. A non-finite parameter stops the run and is
    /// reported in [`TrainOutcome::divergence`]; other errors propagate.
    pub fn run(mut self) -> Result<TrainOutcome> {
        let mut divergence = None;
        while !self.is_finished() {
            match self.step() {
                Ok(_) => {}
                Err(Error::NonFinite(what)) => {
                    divergence = Some(DivergenceReport {
                        step: self.t,
                        message: format!("non-finite value in {what}"),
                        last_record: self.diagnostics.last().cloned(),
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(TrainOutcome {
            variant: self.config.variant,
            averaged_iterate: self.averager.as_ref().and_then(WeightedAverage::value),
            sim_time_s: self.clock.now(),
            steps_completed: self.t,
            final_global: self.global,
            diagnostics: self.diagnostics,
            events: self.events,
            gradient_steps: self.gradient_steps,
            pseudo_sync_steps: self.pseudo_sync_steps,
            divergence,
        })
    }
}

/// Builds a trainer and runs it to completion.
pub fn run_training(workload: &Workload, config: &TrainerConfig) -> Result<TrainOutcome> {
    Trainer::new(workload, config)?.run()
}
