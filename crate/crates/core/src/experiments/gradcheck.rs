use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::vecmath::{Purpose, RngStream};
use crate::workloads::{SamplingPolicy, Workload};
use crate::ParamVector;

pub const FD_STEP: f64 = 1e-5;
pub const DEFAULT_PROBES: usize = 10;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// `‖g_analytic − g_numeric‖ / max(‖g_analytic‖, ‖g_numeric‖)`.
    pub relative_error: f64,
    pub max_abs_error: f64,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub dim: usize,
    pub step: f64,
    pub probes: Vec<ProbeResult>,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Central finite-difference gradient of `f` at `x`.
pub fn numeric_gradient(
    x: &ParamVector,
    step: f64,
    mut f: impl FnMut(&ParamVector) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.dim());
    for i in 0..x.dim() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + step;
        let up = f(&probe)?;
        probe.as_mut_slice()[i] = orig - step;
        let down = f(&probe)?;
        probe.as_mut_slice()[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

pub fn compare(analytic: &[f64], numeric: &[f64]) -> ProbeResult {
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    ProbeResult {
        relative_error: if scale == 0.0 {
            0.0
        } else {
            norm(&diff) / scale
        },
        max_abs_error: diff.iter().fold(0.0, |m, d| m.max(d.abs())),
        gradient_norm: norm(analytic),
    }
}

/// Checks minibatch gradients at `probes` random points around the initial
/// model, each against a freshly drawn minibatch.
pub fn gradcheck(
    workload: &Workload,
    seed: u64,
    batch_size: usize,
    probes: usize,
) -> Result<GradcheckReport> {
    let mut sampler = workload
        .samplers(1, seed, batch_size, SamplingPolicy::WithReplacement)?
        .remove(0);
    let mut rng = RngStream::new(seed, 0, Purpose::Probe);
    let base = workload.initial_point(seed);
    let mut results = Vec::with_capacity(probes);
    for _ in 0..probes {
        let mut x = base.clone();
        for v in x.as_mut_slice() {
            *v += rng.draw_gaussian(0.5);
        }
        let sample = workload.draw_sample(&mut sampler);
        let analytic = workload.stochastic_gradient(&x, &sample)?;
        let numeric = numeric_gradient(&x, FD_STEP, |p| workload.sample_loss(p, &sample))?;
        results.push(compare(analytic.as_slice(), &numeric));
    }
    let max_relative_error = results
        .iter()
        .fold(0.0, |m: f64, r| m.max(r.relative_error));
    Ok(GradcheckReport {
        dim: workload.dim(),
        step: FD_STEP,
        probes: results,
        max_relative_error,
        tolerance: TOLERANCE,
        pass: max_relative_error < TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_gradient_of_cubic() {
        let x = ParamVector::from_slice(&[1.0, -2.0]).unwrap();
        let g = numeric_gradient(&x, 1e-5, |p| {
            Ok(p.as_slice()[0].powi(3) + 2.0 * p.as_slice()[1])
        })
        .unwrap();
        assert!((g[0] - 3.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn compare_detects_wrong_gradient() {
        assert_eq!(compare(&[1.0, 2.0], &[1.0, 2.0]).relative_error, 0.0);
        assert!(compare(&[1.0, 2.0], &[1.0, 2.5]).relative_error > 0.1);
        assert_eq!(compare(&[0.0], &[0.0]).relative_error, 0.0);
    }
}
