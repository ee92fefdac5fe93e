#![allow(dead_code)]

use palsgd::algorithms::{Schedule, TrainerConfig, Variant};
use palsgd::workloads::{Workload, WorkloadSpec};

pub fn quadratic(dim: usize, mu: f64, l: f64, sigma: f64, seed: u64) -> Workload {
    WorkloadSpec::Quadratic {
        dim,
        mu,
        l,
        noise_sigma: sigma,
        init_distance_sq: 1.0,
        hessian_diag: None,
    }
    .build(seed)
    .unwrap()
}

#[allow(clippy::too_many_arguments)]
pub fn config(
    variant: Variant,
    alpha: f64,
    p: f64,
    eta: f64,
    h: u64,
    steps: u64,
    workers: usize,
    seed: u64,
) -> TrainerConfig {
    TrainerConfig::new(
        variant,
        Schedule::constant(alpha, eta, p, h, steps),
        workers,
        seed,
    )
}
