use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{Purpose, RngStream};

/// In-memory labelled dataset with row-major features.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::invalid(
                "features",
                format!(
                    "expected {} values, got {}",
                    labels.len() * dim,
                    features.len()
                ),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(
                "labels",
                format!("label {bad} >= class count {classes}"),
            ));
        }
        Ok(Self {
            features,
            labels,
            dim,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// CSV with columns `x0..x{d-1},label`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.label(i).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Gaussian-cluster classification data: one isotropic cluster per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationSpec {
    pub classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    #[serde(default = "default_eval_samples_per_class")]
    pub eval_samples_per_class: usize,
    #[serde(default = "default_center_scale")]
    pub center_scale: f64,
    #[serde(default = "default_cluster_std")]
    pub cluster_std: f64,
}

fn default_eval_samples_per_class() -> usize {
    100
}
fn default_center_scale() -> f64 {
    1.0
}
fn default_cluster_std() -> f64 {
    1.0
}

impl ClassificationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("classes", "need at least 2 classes"));
        }
        if self.dim == 0 || self.samples_per_class == 0 || self.eval_samples_per_class == 0 {
            return Err(Error::invalid("dim/samples", "must be positive"));
        }
        if !(self.center_scale >= 0.0 && self.cluster_std >= 0.0) {
            return Err(Error::invalid(
                "center_scale/cluster_std",
                "must be non-negative",
            ));
        }
        Ok(())
    }

    fn centers(&self, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0, Purpose::Dataset);
        let mut c = vec![0.0; self.classes * self.dim];
        rng.fill_gaussian(&mut c, self.center_scale);
        c
    }

    fn draw(&self, seed: u64, split: u64, per_class: usize) -> Result<Dataset> {
        let centers = self.centers(seed);
        let mut rng = RngStream::new(seed, split, Purpose::Dataset);
        let n = per_class * self.classes;
        let mut features = vec![0.0; n * self.dim];
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % self.classes;
            let row = &mut features[i * self.dim..(i + 1) * self.dim];
            rng.fill_gaussian(row, self.cluster_std);
            for (v, c) in row
                .iter_mut()
                .zip(&centers[class * self.dim..(class + 1) * self.dim])
            {
                *v += c;
            }
            labels.push(class);
        }
        Dataset::new(features, labels, self.dim, self.classes)
    }
}

/// Training split. Deterministic in `seed`.
pub fn generate_synthetic_classification(spec: &ClassificationSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    spec.draw(seed, 1, spec.samples_per_class)
}

/// Held-out split drawn from the same class centers as the training split.
pub fn generate_holdout(spec: &ClassificationSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    spec.draw(seed, 2, spec.eval_samples_per_class)
}

/// Binary logistic-regression data with labels drawn from a planted model.
pub fn generate_logistic_data(samples: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if samples == 0 || dim == 0 {
        return Err(Error::invalid("samples/dim", "must be positive"));
    }
    let mut rng = RngStream::new(seed, 0, Purpose::Dataset);
    let mut truth = vec![0.0; dim];
    rng.fill_gaussian(&mut truth, 1.0);
    let mut features = vec![0.0; samples * dim];
    rng.fill_gaussian(&mut features, 1.0);
    let labels = features
        .chunks(dim)
        .map(|row| {
            let z: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum();
            let prob = 1.0 / (1.0 + (-z).exp());
            usize::from(rng.draw_uniform() < prob)
        })
        .collect();
    Dataset::new(features, labels, dim, 2)
}

/// Indices of the training set owned by one worker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shard {
    pub worker: usize,
    pub indices: Vec<usize>,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// IID partition of `0..n` into `k` shards whose sizes differ by at most one.
/// The first `n % k` shards get the extra element.
pub fn shard_dataset(n: usize, k: usize, seed: u64) -> Result<Vec<Shard>> {
    if k == 0 {
        return Err(Error::invalid("K", "need at least one worker"));
    }
    if n == 0 {
        return Err(Error::Empty("dataset"));
    }
    if k > n {
        return Err(Error::invalid(
            "K",
            format!("{k} workers exceed {n} samples"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::new(seed, 0, Purpose::Shard).shuffle(&mut order);
    let base = n / k;
    let extra = n % k;
    let mut shards = Vec::with_capacity(k);
    let mut start = 0;
    for worker in 0..k {
        let size = base + usize::from(worker < extra);
        shards.push(Shard {
            worker,
            indices: order[start..start + size].to_vec(),
        });
        start += size;
    }
    Ok(shards)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPolicy {
    /// Uniform with replacement within the shard.
    #[default]
    WithReplacement,
    /// Reshuffle the shard every epoch and walk it in order.
    EpochShuffle,
}

/// Per-worker sample source. Owns the worker's data stream.
#[derive(Clone, Debug)]
pub struct Sampler {
    worker: usize,
    shard: Option<Shard>,
    stream: RngStream,
    batch_size: usize,
    policy: SamplingPolicy,
    order: Vec<usize>,
    cursor: usize,
}

impl Sampler {
    pub fn new(
        worker: usize,
        shard: Option<Shard>,
        seed: u64,
        batch_size: usize,
        policy: SamplingPolicy,
    ) -> Self {
        Self {
            worker,
            shard,
            stream: RngStream::new(seed, worker as u64, Purpose::Data),
            batch_size: batch_size.max(1),
            policy,
            order: Vec::new(),
            cursor: 0,
        }
    }

    pub fn worker(&self) -> usize {
        self.worker
    }

    pub fn shard(&self) -> Option<&Shard> {
        self.shard.as_ref()
    }

    pub fn stream(&self) -> &RngStream {
        &self.stream
    }

    pub(crate) fn stream_mut(&mut self) -> &mut RngStream {
        &mut self.stream
    }

    /// Draws `batch_size` dataset indices from the shard.
    ///
    /// # Panics
    /// If the sampler has no shard.
    pub(crate) fn draw_batch(&mut self) -> Vec<usize> {
        let shard = self.shard.as_ref().expect("data sampler without shard");
        let mut batch = Vec::with_capacity(self.batch_size);
        match self.policy {
            SamplingPolicy::WithReplacement => {
                for _ in 0..self.batch_size {
                    batch.push(shard.indices[self.stream.draw_index(shard.len())]);
                }
            }
            SamplingPolicy::EpochShuffle => {
                for _ in 0..self.batch_size {
                    if self.cursor == self.order.len() {
                        self.order = shard.indices.clone();
                        self.stream.shuffle(&mut self.order);
                        self.cursor = 0;
                    }
                    batch.push(self.order[self.cursor]);
                    self.cursor += 1;
                }
            }
        }
        batch
    }
}
