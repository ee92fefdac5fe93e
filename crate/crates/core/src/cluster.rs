//! Logical-clock model of a K-worker cluster.
//!
//! Each worker accrues compute time independently; an all-reduce is a barrier
//! that lifts every worker to the slowest one and then adds the modeled
//! communication time.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{Purpose, RngStream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllReduceAlgorithm {
    #[default]
    Ring,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllReduceModel {
    #[serde(default = "default_latency")]
    pub latency_s: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_bytes_per_s: f64,
    #[serde(default)]
    pub algorithm: AllReduceAlgorithm,
}

fn default_latency() -> f64 {
    1e-4
}
fn default_bandwidth() -> f64 {
    1e9
}

impl Default for AllReduceModel {
    fn default() -> Self {
        Self {
            latency_s: default_latency(),
            bandwidth_bytes_per_s: default_bandwidth(),
            algorithm: AllReduceAlgorithm::Ring,
        }
    }
}

/// Ring all-reduce: `2(K−1)` latency-bound rounds moving `2(K−1)/K` of the
/// payload through each link. Zero for a single worker.
pub fn allreduce_time(bytes: u64, k: usize, model: &AllReduceModel) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    let rounds = 2.0 * (k - 1) as f64;
    match model.algorithm {
        AllReduceAlgorithm::Ring => {
            model.latency_s * rounds
                + (rounds / k as f64) * bytes as f64 / model.bandwidth_bytes_per_s
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    /// Seconds per gradient step on a worker with multiplier 1.
    #[serde(default = "default_compute")]
    pub compute_time_s: f64,
    /// Per-worker slowdown factors (stragglers). Missing entries default to 1.
    #[serde(default)]
    pub worker_multipliers: Vec<f64>,
    /// Each step's compute time is scaled by `1 + jitter·u`, `u ~ U[0, 1)`.
    #[serde(default)]
    pub jitter: f64,
    /// Cost of a pseudo-sync step relative to a gradient step.
    #[serde(default = "default_mixing_fraction")]
    pub mixing_cost_fraction: f64,
    #[serde(default)]
    pub allreduce: AllReduceModel,
    #[serde(default = "default_bytes_per_param")]
    pub bytes_per_param: u64,
}

fn default_compute() -> f64 {
    1e-3
}
fn default_mixing_fraction() -> f64 {
    0.01
}
fn default_bytes_per_param() -> u64 {
    4
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            compute_time_s: default_compute(),
            worker_multipliers: Vec::new(),
            jitter: 0.0,
            mixing_cost_fraction: default_mixing_fraction(),
            allreduce: AllReduceModel::default(),
            bytes_per_param: default_bytes_per_param(),
        }
    }
}

impl ClusterSpec {
    pub fn validate(&self, workers: usize) -> Result<()> {
        if workers == 0 {
            return Err(Error::config("workers", "K must be >= 1"));
        }
        let non_neg = |v: f64| v >= 0.0 && v.is_finite();
        if !non_neg(self.compute_time_s) {
            return Err(Error::config("cluster.compute_time_s", "must be >= 0"));
        }
        if self.worker_multipliers.len() > workers {
            return Err(Error::config(
                "cluster.worker_multipliers",
                format!(
                    "{} entries for {workers} workers",
                    self.worker_multipliers.len()
                ),
            ));
        }
        if !self.worker_multipliers.iter().all(|&m| non_neg(m)) {
            return Err(Error::config("cluster.worker_multipliers", "must be >= 0"));
        }
        if !non_neg(self.jitter) {
            return Err(Error::config("cluster.jitter", "must be >= 0"));
        }
        if !non_neg(self.mixing_cost_fraction) {
            return Err(Error::config(
                "cluster.mixing_cost_fraction",
                "must be >= 0",
            ));
        }
        if !non_neg(self.allreduce.latency_s) {
            return Err(Error::config("cluster.allreduce.latency_s", "must be >= 0"));
        }
        if !(self.allreduce.bandwidth_bytes_per_s > 0.0
            && self.allreduce.bandwidth_bytes_per_s.is_finite())
        {
            return Err(Error::config(
                "cluster.allreduce.bandwidth_bytes_per_s",
                "must be > 0",
            ));
        }
        if !matches!(self.bytes_per_param, 4 | 8) {
            return Err(Error::config("cluster.bytes_per_param", "must be 4 or 8"));
        }
        Ok(())
    }

    pub fn multiplier(&self, worker: usize) -> f64 {
        self.worker_multipliers.get(worker).copied().unwrap_or(1.0)
    }

    /// Compute time of worker `k`'s step `t`. Jitter is keyed by `(k, t)` so
    /// it does not depend on which branch earlier steps took.
    pub fn step_time(&self, seed: u64, worker: usize, t: u64, is_gradient_step: bool) -> f64 {
        let mut dt = self.compute_time_s * self.multiplier(worker);
        if self.jitter > 0.0 {
            let u = RngStream::at(seed, worker as u64, Purpose::Jitter, t).draw_uniform();
            dt *= 1.0 + self.jitter * u;
        }
        if is_gradient_step {
            dt
        } else {
            dt * self.mixing_cost_fraction
        }
    }

    pub fn payload_bytes(&self, params: usize) -> u64 {
        self.bytes_per_param * params as u64
    }
}

/// Per-worker and global elapsed simulated time.
#[derive(Clone, Debug, PartialEq)]
pub struct SimClock {
    workers: Vec<f64>,
    global: f64,
}

impl SimClock {
    pub fn new(workers: usize) -> Self {
        Self {
            workers: vec![0.0; workers],
            global: 0.0,
        }
    }

    pub fn from_times(times: Vec<f64>) -> Self {
        let global = times.iter().copied().fold(0.0, f64::max);
        Self {
            workers: times,
            global,
        }
    }

    pub fn worker_times(&self) -> &[f64] {
        &self.workers
    }

    /// Time of the last barrier.
    pub fn global(&self) -> f64 {
        self.global
    }

    /// Latest worker time: what a wall clock would read right now.
    pub fn now(&self) -> f64 {
        self.workers.iter().copied().fold(self.global, f64::max)
    }

    pub fn advance(&mut self, worker: usize, seconds: f64) {
        self.workers[worker] += seconds;
    }

    /// Charges one local step of worker `k` at iteration `t`.
    pub fn advance_step(
        &mut self,
        cluster: &ClusterSpec,
        seed: u64,
        worker: usize,
        t: u64,
        is_gradient_step: bool,
    ) {
        let dt = cluster.step_time(seed, worker, t, is_gradient_step);
        self.advance(worker, dt);
    }

    /// Every worker waits for the slowest, then all spend `duration` together.
    pub fn barrier(&mut self, duration: f64) {
        let end = self.now() + duration;
        self.workers.iter_mut().for_each(|w| *w = end);
        self.global = end;
    }
}

/// One all-reduce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommEvent {
    pub t: u64,
    pub bytes: u64,
    pub duration_s: f64,
    pub k: usize,
}

impl CommEvent {
    pub fn new(t: u64, bytes: u64, k: usize, model: &AllReduceModel) -> Self {
        Self {
            t,
            bytes,
            duration_s: allreduce_time(bytes, k, model),
            k,
        }
    }
}

/// Writes one JSON object per event.
pub fn write_events_jsonl<W: Write>(events: &[CommEvent], mut out: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(latency: f64, bw: f64) -> AllReduceModel {
        AllReduceModel {
            latency_s: latency,
            bandwidth_bytes_per_s: bw,
            algorithm: AllReduceAlgorithm::Ring,
        }
    }

    #[test]
    fn allreduce_examples() {
        assert_eq!(allreduce_time(1 << 20, 1, &model(1.0, 1.0)), 0.0);
        assert_eq!(allreduce_time(4096, 2, &model(0.0, 512.0)), 8.0);
        assert!((allreduce_time(0, 4, &model(1e-3, 1e9)) - 6e-3).abs() < 1e-18);
    }

    #[test]
    fn step_time_examples() {
        let spec = ClusterSpec {
            compute_time_s: 1.0,
            worker_multipliers: vec![1.0, 1.0, 1.0, 2.0],
            ..ClusterSpec::default()
        };
        assert_eq!(spec.step_time(0, 0, 0, true), 1.0);
        assert_eq!(spec.step_time(0, 0, 0, false), 0.01);
        assert_eq!(spec.step_time(0, 3, 5, true), 2.0);
        // Workers beyond the multiplier list run at base speed.
        assert_eq!(spec.multiplier(7), 1.0);
    }

    #[test]
    fn jitter_is_bounded_and_deterministic() {
        let spec = ClusterSpec {
            compute_time_s: 1.0,
            jitter: 0.5,
            ..ClusterSpec::default()
        };
        for t in 0..100 {
            let a = spec.step_time(9, 1, t, true);
            assert!((1.0..1.5).contains(&a));
            assert_eq!(a, spec.step_time(9, 1, t, true));
        }
    }

    #[test]
    fn barrier_examples() {
        let mut c = SimClock::from_times(vec![2.0, 2.0]);
        c.barrier(0.0);
        assert_eq!(c.worker_times(), &[2.0, 2.0]);

        let mut c = SimClock::from_times(vec![1.0, 3.0]);
        c.barrier(0.0);
        assert_eq!(c.worker_times(), &[3.0, 3.0]);

        let mut c = SimClock::from_times(vec![1.0, 3.0]);
        c.barrier(2.0);
        assert_eq!(c.worker_times(), &[5.0, 5.0]);
        assert_eq!(c.global(), 5.0);
    }

    #[test]
    fn events_export_as_jsonl() {
        let m = model(0.0, 8.0);
        let events = vec![CommEvent::new(3, 16, 2, &m), CommEvent::new(7, 16, 2, &m)];
        let mut buf = Vec::new();
        write_events_jsonl(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "{\"t\":3,\"bytes\":16,\"duration_s\":2.0,\"k\":2}\n{\"t\":7,\"bytes\":16,\"duration_s\":2.0,\"k\":2}\n"
        );
    }

    #[test]
    fn validation() {
        assert!(ClusterSpec::default().validate(4).is_ok());
        let bad = ClusterSpec {
            bytes_per_param: 2,
            ..ClusterSpec::default()
        };
        assert!(bad.validate(4).is_err());
        let bad = ClusterSpec {
            worker_multipliers: vec![1.0; 5],
            ..ClusterSpec::default()
        };
        assert!(bad.validate(4).is_err());
    }
}
