//! Stochastic objectives `F(x) = E_ξ f(x, ξ)` and per-worker sampling.

mod data;
mod logistic;
mod mlp;
mod quadratic;

pub use data::{
    generate_holdout, generate_logistic_data, generate_synthetic_classification, shard_dataset,
    ClassificationSpec, Dataset, Sampler, SamplingPolicy, Shard,
};
pub use logistic::Logistic;
pub use mlp::{Activation, Mlp, MlpSpec};
pub use quadratic::{Quadratic, QuadraticSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{ParamVector, Purpose, RngStream};

/// Workload section of a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadSpec {
    Quadratic {
        dim: usize,
        #[serde(default = "one")]
        mu: f64,
        #[serde(default = "one")]
        l: f64,
        #[serde(default)]
        noise_sigma: f64,
        /// `‖x⁰ − x*‖²`.
        #[serde(default = "one")]
        init_distance_sq: f64,
        /// Overrides the linear `mu..l` spectrum when present.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hessian_diag: Option<Vec<f64>>,
    },
    Logistic {
        samples: usize,
        dim: usize,
        #[serde(default)]
        l2_reg: f64,
    },
    Mlp {
        hidden: Vec<usize>,
        #[serde(default = "relu")]
        activation: Activation,
        data: ClassificationSpec,
    },
}

fn one() -> f64 {
    1.0
}

fn relu() -> Activation {
    Activation::Relu
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            WorkloadSpec::Quadratic {
                dim,
                mu,
                l,
                noise_sigma,
                init_distance_sq,
                hessian_diag,
            } => {
                if *dim == 0 {
                    return Err(Error::config("workload.dim", "must be >= 1"));
                }
                match hessian_diag {
                    Some(diag) => {
                        if diag.len() != *dim {
                            return Err(Error::config(
                                "workload.hessian_diag",
                                format!("length {} != dim {dim}", diag.len()),
                            ));
                        }
                        if diag.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                            return Err(Error::config(
                                "workload.hessian_diag",
                                "entries must be > 0",
                            ));
                        }
                    }
                    None => {
                        if !(*mu > 0.0 && mu.is_finite()) {
                            return Err(Error::config("workload.mu", "must be > 0"));
                        }
                        if !(*l >= *mu && l.is_finite()) {
                            return Err(Error::config("workload.l", "must satisfy l >= mu"));
                        }
                        if *dim == 1 && l != mu {
                            return Err(Error::config("workload.l", "dim 1 requires l == mu"));
                        }
                    }
                }
                if !(*noise_sigma >= 0.0 && noise_sigma.is_finite()) {
                    return Err(Error::config("workload.noise_sigma", "must be >= 0"));
                }
                if !(*init_distance_sq >= 0.0 && init_distance_sq.is_finite()) {
                    return Err(Error::config("workload.init_distance_sq", "must be >= 0"));
                }
            }
            WorkloadSpec::Logistic {
                samples,
                dim,
                l2_reg,
            } => {
                if *samples == 0 || *dim == 0 {
                    return Err(Error::config("workload.samples/dim", "must be >= 1"));
                }
                if !(*l2_reg >= 0.0 && l2_reg.is_finite()) {
                    return Err(Error::config("workload.l2_reg", "must be >= 0"));
                }
            }
            WorkloadSpec::Mlp { hidden, data, .. } => {
                if hidden.contains(&0) {
                    return Err(Error::config("workload.hidden", "widths must be >= 1"));
                }
                data.validate()
                    .map_err(|e| Error::config("workload.data", e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, WorkloadSpec::Quadratic { .. })
    }

    /// Number of training samples, if the workload is backed by a dataset.
    pub fn dataset_len(&self) -> Option<usize> {
        match self {
            WorkloadSpec::Quadratic { .. } => None,
            WorkloadSpec::Logistic { samples, .. } => Some(*samples),
            WorkloadSpec::Mlp { data, .. } => Some(data.samples_per_class * data.classes),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Workload> {
        self.validate()?;
        Ok(match self {
            WorkloadSpec::Quadratic {
                dim,
                mu,
                l,
                noise_sigma,
                init_distance_sq,
                hessian_diag,
            } => {
                let diag = hessian_diag
                    .clone()
                    .unwrap_or_else(|| Quadratic::linear_spectrum(*dim, *mu, *l));
                let mut x_star = vec![0.0; *dim];
                RngStream::new(seed, 0, Purpose::Init).fill_gaussian(&mut x_star, 1.0);
                let quad = Quadratic::new(QuadraticSpec {
                    hessian_diag: diag,
                    x_star: ParamVector::new(x_star)?,
                    noise_sigma: *noise_sigma,
                })?;
                Workload::Quadratic {
                    quad,
                    init_distance_sq: *init_distance_sq,
                }
            }
            WorkloadSpec::Logistic {
                samples,
                dim,
                l2_reg,
            } => Workload::Logistic(Logistic::new(
                generate_logistic_data(*samples, *dim, seed)?,
                *l2_reg,
            )?),
            WorkloadSpec::Mlp {
                hidden,
                activation,
                data,
            } => Workload::Mlp(Mlp::new(
                &MlpSpec {
                    hidden: hidden.clone(),
                    activation: *activation,
                    data: data.clone(),
                },
                seed,
            )?),
        })
    }
}

/// One stochastic draw: an optimum shift for the quadratic, a minibatch otherwise.
#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    Shift(Vec<f64>),
    Batch(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug)]
pub enum Workload {
    Quadratic {
        quad: Quadratic,
        init_distance_sq: f64,
    },
    Logistic(Logistic),
    Mlp(Mlp),
}

impl Workload {
    pub fn dim(&self) -> usize {
        match self {
            Workload::Quadratic { quad, .. } => quad.dim(),
            Workload::Logistic(m) => m.dim(),
            Workload::Mlp(m) => m.dim(),
        }
    }

    pub fn quadratic(&self) -> Option<&Quadratic> {
        match self {
            Workload::Quadratic { quad, .. } => Some(quad),
            _ => None,
        }
    }

    pub fn dataset_len(&self) -> Option<usize> {
        match self {
            Workload::Quadratic { .. } => None,
            Workload::Logistic(m) => Some(m.data().len()),
            Workload::Mlp(m) => Some(m.train_data().len()),
        }
    }

    /// Starting point shared by every worker.
    pub fn initial_point(&self, seed: u64) -> ParamVector {
        match self {
            Workload::Quadratic {
                quad,
                init_distance_sq,
            } => {
                let mut dir = vec![0.0; quad.dim()];
                RngStream::new(seed, 1, Purpose::Init).fill_gaussian(&mut dir, 1.0);
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let radius = init_distance_sq.sqrt();
                let mut x = quad.x_star().clone();
                for (xi, di) in x.as_mut_slice().iter_mut().zip(&dir) {
                    *xi += radius * di / norm;
                }
                x
            }
            Workload::Logistic(m) => ParamVector::zeros(m.dim()),
            Workload::Mlp(m) => m.init_params(seed),
        }
    }

    /// One sampler per worker over an IID shard of the training data.
    pub fn samplers(
        &self,
        workers: usize,
        seed: u64,
        batch_size: usize,
        policy: SamplingPolicy,
    ) -> Result<Vec<Sampler>> {
        if workers == 0 {
            return Err(Error::invalid("K", "need at least one worker"));
        }
        match self.dataset_len() {
            None => Ok((0..workers)
                .map(|k| Sampler::new(k, None, seed, 1, policy))
                .collect()),
            Some(n) => Ok(shard_dataset(n, workers, seed)?
                .into_iter()
                .map(|shard| Sampler::new(shard.worker, Some(shard), seed, batch_size, policy))
                .collect()),
        }
    }

    pub fn draw_sample(&self, sampler: &mut Sampler) -> Sample {
        match self {
            Workload::Quadratic { quad, .. } => {
                Sample::Shift(quad.draw_shift(sampler.stream_mut()))
            }
            _ => Sample::Batch(sampler.draw_batch()),
        }
    }

    pub fn stochastic_gradient(&self, x: &ParamVector, sample: &Sample) -> Result<ParamVector> {
        match (self, sample) {
            (Workload::Quadratic { quad, .. }, Sample::Shift(xi)) => {
                quad.stochastic_gradient(x, xi)
            }
            (Workload::Logistic(m), Sample::Batch(b)) => m.batch_gradient(x, b),
            (Workload::Mlp(m), Sample::Batch(b)) => m.batch_gradient(x, b),
            _ => Err(Error::invalid(
                "sample",
                "sample kind does not match workload",
            )),
        }
    }

    pub fn sample_loss(&self, x: &ParamVector, sample: &Sample) -> Result<f64> {
        match (self, sample) {
            (Workload::Quadratic { quad, .. }, Sample::Shift(xi)) => quad.sample_loss(x, xi),
            (Workload::Logistic(m), Sample::Batch(b)) => m.batch_loss(x, b),
            (Workload::Mlp(m), Sample::Batch(b)) => m.batch_loss(x, b),
            _ => Err(Error::invalid(
                "sample",
                "sample kind does not match workload",
            )),
        }
    }

    /// `F(x)`: closed form for the quadratic, exact training-set mean otherwise.
    pub fn full_objective(&self, x: &ParamVector) -> Result<f64> {
        match self {
            Workload::Quadratic { quad, .. } => quad.full_objective(x),
            Workload::Logistic(m) => m.full_objective(x),
            Workload::Mlp(m) => m.full_objective(x),
        }
    }

    pub fn full_gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        match self {
            Workload::Quadratic { quad, .. } => quad.full_gradient(x),
            Workload::Logistic(m) => m.full_gradient(x),
            Workload::Mlp(m) => m.full_gradient(x),
        }
    }

    /// `F(x) − F(x*)` when the optimum is known.
    pub fn suboptimality(&self, x: &ParamVector) -> Option<Result<f64>> {
        self.quadratic().map(|q| q.suboptimality(x))
    }

    /// Suboptimality where known, training loss otherwise.
    pub fn progress_loss(&self, x: &ParamVector) -> Result<f64> {
        match self {
            Workload::Quadratic { quad, .. } => quad.suboptimality(x),
            _ => self.full_objective(x),
        }
    }

    /// Held-out loss and accuracy (classification workloads only).
    pub fn evaluate(&self, x: &ParamVector) -> Option<Result<EvalMetrics>> {
        match self {
            Workload::Mlp(m) => Some(
                m.evaluate(x)
                    .map(|(loss, accuracy)| EvalMetrics { loss, accuracy }),
            ),
            Workload::Logistic(m) => Some(m.accuracy(x).and_then(|accuracy| {
                Ok(EvalMetrics {
                    loss: m.full_objective(x)?,
                    accuracy,
                })
            })),
            Workload::Quadratic { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_spec(sigma: f64) -> WorkloadSpec {
        WorkloadSpec::Quadratic {
            dim: 8,
            mu: 1.0,
            l: 4.0,
            noise_sigma: sigma,
            init_distance_sq: 2.5,
            hessian_diag: None,
        }
    }

    #[test]
    fn quadratic_initial_distance() {
        let w = quad_spec(1.0).build(3).unwrap();
        let q = w.quadratic().unwrap();
        let x0 = w.initial_point(3);
        assert!((x0.distance_sq(q.x_star()).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn quadratic_samplers_have_no_shard() {
        let w = quad_spec(1.0).build(3).unwrap();
        let s = w
            .samplers(4, 3, 1, SamplingPolicy::WithReplacement)
            .unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|s| s.shard().is_none()));
    }

    #[test]
    fn data_samplers_shard_evenly() {
        let spec = WorkloadSpec::Logistic {
            samples: 10,
            dim: 2,
            l2_reg: 0.1,
        };
        let w = spec.build(0).unwrap();
        let sizes: Vec<usize> = w
            .samplers(3, 0, 4, SamplingPolicy::WithReplacement)
            .unwrap()
            .iter()
            .map(|s| s.shard().unwrap().len())
            .collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert!(w
            .samplers(11, 0, 4, SamplingPolicy::WithReplacement)
            .is_err());
    }

    #[test]
    fn mismatched_sample_kind_is_an_error() {
        let w = quad_spec(0.0).build(0).unwrap();
        let x = w.initial_point(0);
        assert!(w.stochastic_gradient(&x, &Sample::Batch(vec![0])).is_err());
    }

    #[test]
    fn spec_rejects_unknown_keys() {
        let err = serde_json::from_str::<WorkloadSpec>(r#"{"kind":"quadratic","dim":2,"sigma":1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn spec_validation() {
        let bad = WorkloadSpec::Quadratic {
            dim: 2,
            mu: 2.0,
            l: 1.0,
            noise_sigma: 0.0,
            init_distance_sq: 1.0,
            hessian_diag: None,
        };
        assert!(bad.validate().is_err());
    }
}
