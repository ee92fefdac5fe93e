use crate::cluster::{ClusterSpec, CommEvent, SimClock};
use crate::error::{Error, Result};
use crate::optim::{InnerOptimizer, OuterOptimizer};
use crate::vecmath::{mean_of, ParamVector, Purpose, RngStream};
use crate::workloads::{Sampler, Workload};

use super::schedule::Schedule;

/// Which branch a local step took.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Gradient,
    PseudoSync,
}

/// A worker's local model, its copy of the last synchronized global model,
/// inner optimizer state and private random streams.
#[derive(Clone, Debug)]
pub struct Worker {
    pub index: usize,
    pub params: ParamVector,
    pub anchor: ParamVector,
    pub inner: InnerOptimizer,
    pub sampler: Sampler,
    coin: RngStream,
}

impl Worker {
    pub fn new(
        index: usize,
        init: ParamVector,
        inner: InnerOptimizer,
        sampler: Sampler,
        seed: u64,
    ) -> Self {
        Self {
            index,
            anchor: init.clone(),
            params: init,
            inner,
            sampler,
            coin: RngStream::new(seed, index as u64, Purpose::Bernoulli),
        }
    }

    /// The pseudo-sync coin `b ~ U[0, 1)` for iteration `t`.
    pub fn coin(&self, t: u64) -> f64 {
        let mut s = self.coin.clone();
        s.seek(t);
        s.draw_uniform()
    }

    /// Draws a sample from the shard and applies one inner-optimizer step.
    pub fn gradient_step(&mut self, workload: &Workload, lr: f64) -> Result<()> {
        let sample = workload.draw_sample(&mut self.sampler);
        let g = workload.stochastic_gradient(&self.params, &sample)?;
        self.inner.step(&mut self.params, &g, lr)?;
        if !self.params.is_finite() {
            return Err(Error::NonFinite("worker parameters"));
        }
        Ok(())
    }

    /// `x_k ← x_k − beta·(x_k − anchor)`. Touches neither the inner optimizer
    /// nor the data stream.
    pub fn pseudo_sync(&mut self, beta: f64) -> Result<()> {
        self.params.contract_toward(&self.anchor, beta)?;
        if !self.params.is_finite() {
            return Err(Error::NonFinite("worker parameters"));
        }
        Ok(())
    }

    /// Sets both the local model and the anchor to `global`.
    pub fn adopt(&mut self, global: &ParamVector) {
        self.params.clone_from(global);
        self.anchor.clone_from(global);
    }
}

/// One local iteration of PALSGD for worker `k` at step `t`.
///
/// With probability `p` (coin `b ≤ p`) the worker pulls toward its anchor with
/// coefficient `α_t η_t / p`; otherwise it takes a gradient step with step
/// size `α_t / (1 − p)`. For `p = 0` the pseudo-sync branch is disabled and no
/// coin is drawn, which makes this exactly a Local SGD step.
pub fn palsgd_local_step(
    worker: &mut Worker,
    workload: &Workload,
    schedule: &Schedule,
    t: u64,
) -> Result<StepKind> {
    if schedule.p > 0.0 && worker.coin(t) <= schedule.p {
        worker.pseudo_sync(schedule.mixing_coefficient(t))?;
        Ok(StepKind::PseudoSync)
    } else {
        worker.gradient_step(workload, schedule.gradient_lr(t))?;
        Ok(StepKind::Gradient)
    }
}

/// Local SGD iteration: always a gradient step with step size `α_t`.
pub fn local_sgd_step(
    worker: &mut Worker,
    workload: &Workload,
    schedule: &Schedule,
    t: u64,
) -> Result<()> {
    worker.gradient_step(workload, schedule.alpha_at(t))
}

/// All-reduce of the outer gradient `Δ = mean_k(global − x_k)` followed by the
/// outer optimizer step. Every worker then holds the new global model as both
/// its local model and its anchor.
pub fn sync_round(
    workers: &mut [Worker],
    global: &mut ParamVector,
    outer: &mut OuterOptimizer,
    clock: &mut SimClock,
    cluster: &ClusterSpec,
    t: u64,
) -> Result<CommEvent> {
    if workers.is_empty() {
        return Err(Error::Empty("worker list"));
    }
    let diffs = workers
        .iter()
        .map(|w| global.sub(&w.params))
        .collect::<Result<Vec<_>>>()?;
    let delta = mean_of(&diffs)?;
    outer.step(global, &delta)?;
    if !global.is_finite() {
        return Err(Error::NonFinite("global model"));
    }
    for w in workers.iter_mut() {
        w.adopt(global);
        if w.inner.config().reset_on_sync {
            w.inner.reset();
        }
    }
    let event = CommEvent::new(
        t,
        cluster.payload_bytes(global.dim()),
        workers.len(),
        &cluster.allreduce,
    );
    clock.barrier(event.duration_s);
    Ok(event)
}

/// One fully synchronous step: gradients are averaged across workers and
/// every worker applies the same inner update with step size `α_t`.
pub fn ddp_step(
    workers: &mut [Worker],
    workload: &Workload,
    schedule: &Schedule,
    clock: &mut SimClock,
    cluster: &ClusterSpec,
    seed: u64,
    t: u64,
) -> Result<CommEvent> {
    if workers.is_empty() {
        return Err(Error::Empty("worker list"));
    }
    let grads = workers
        .iter_mut()
        .map(|w| {
            let sample = workload.draw_sample(&mut w.sampler);
            workload.stochastic_gradient(&w.params, &sample)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_grad = mean_of(&grads)?;
    let lr = schedule.alpha_at(t);
    for w in workers.iter_mut() {
        w.inner.step(&mut w.params, &mean_grad, lr)?;
        if !w.params.is_finite() {
            return Err(Error::NonFinite("worker parameters"));
        }
        w.anchor.clone_from(&w.params);
        clock.advance_step(cluster, seed, w.index, t, true);
    }
    let event = CommEvent::new(
        t,
        cluster.payload_bytes(mean_grad.dim()),
        workers.len(),
        &cluster.allreduce,
    );
    clock.barrier(event.duration_s);
    Ok(event)
}

/// Consensus quantities of the current state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Consensus {
    /// `Ξ = (1/K) Σ_k ‖x_k − anchor_k‖²`.
    pub xi: f64,
    /// `(1/K) Σ_k ‖x_k − x̄‖²`.
    pub mean_model_distance: f64,
}

pub fn consensus_probe(workers: &[Worker]) -> Result<Consensus> {
    if workers.is_empty() {
        return Err(Error::Empty("worker list"));
    }
    let k = workers.len() as f64;
    let mean = mean_of(workers.iter().map(|w| &w.params))?;
    let mut xi = 0.0;
    let mut spread = 0.0;
    for w in workers {
        xi += w.params.distance_sq(&w.anchor)?;
        spread += w.params.distance_sq(&mean)?;
    }
    Ok(Consensus {
        xi: xi / k,
        mean_model_distance: spread / k,
    })
}
