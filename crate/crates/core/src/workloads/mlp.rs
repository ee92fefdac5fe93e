use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::vecmath::{ParamVector, Purpose, RngStream};

use super::data::{
    generate_holdout, generate_synthetic_classification, ClassificationSpec, Dataset,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    pub data: ClassificationSpec,
}

fn default_activation() -> Activation {
    Activation::Relu
}

#[derive(Clone, Copy, Debug)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the row-major `fan_out × fan_in` weight block; biases follow it.
    offset: usize,
}

impl Layer {
    fn bias_offset(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }
}

/// Dense network with a softmax cross-entropy head, trained on synthetic
/// Gaussian-cluster data. Gradients come from hand-written backpropagation.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
    dim: usize,
    train: Dataset,
    eval: Dataset,
}

/// Scratch buffers for one forward/backward pass.
struct Tape {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(spec: &MlpSpec, seed: u64) -> Result<Self> {
        if spec.hidden.contains(&0) {
            return Err(Error::invalid("hidden", "layer widths must be positive"));
        }
        let train = generate_synthetic_classification(&spec.data, seed)?;
        let eval = generate_holdout(&spec.data, seed)?;
        let mut widths = vec![spec.data.dim];
        widths.extend(&spec.hidden);
        widths.push(spec.data.classes);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for pair in widths.windows(2) {
            layers.push(Layer {
                fan_in: pair[0],
                fan_out: pair[1],
                offset,
            });
            offset += pair[0] * pair[1] + pair[1];
        }
        Ok(Self {
            layers,
            activation: spec.activation,
            dim: offset,
            train,
            eval,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn train_data(&self) -> &Dataset {
        &self.train
    }

    pub fn eval_data(&self) -> &Dataset {
        &self.eval
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    /// Gaussian weights with variance `gain / fan_in`, zero biases.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let gain = match self.activation {
            Activation::Relu => 2.0,
            Activation::Tanh => 1.0,
        };
        let mut rng = RngStream::new(seed, 0, Purpose::Init);
        let mut theta = vec![0.0; self.dim];
        for layer in &self.layers {
            let std = (gain / layer.fan_in as f64).sqrt();
            rng.fill_gaussian(&mut theta[layer.offset..layer.bias_offset()], std);
        }
        ParamVector::new(theta).expect("non-empty network")
    }

    fn forward(&self, theta: &[f64], input: &[f64], tape: &mut Tape) {
        tape.pre.clear();
        tape.post.clear();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let prev: &[f64] = if l == 0 { input } else { &tape.post[l - 1] };
            let w = &theta[layer.offset..layer.bias_offset()];
            let b = &theta[layer.bias_offset()..layer.bias_offset() + layer.fan_out];
            let z: Vec<f64> = (0..layer.fan_out)
                .map(|o| {
                    let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                    row.iter().zip(prev).map(|(a, c)| a * c).sum::<f64>() + b[o]
                })
                .collect();
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            tape.pre.push(z);
            tape.post.push(a);
        }
    }

    /// Softmax cross-entropy of the logits; also returns `softmax − onehot`.
    fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let loss = sum.ln() + max - logits[label];
        let mut delta: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        delta[label] -= 1.0;
        (loss, delta)
    }

    fn batch_loss_on(&self, data: &Dataset, x: &ParamVector, indices: &[usize]) -> Result<f64> {
        check_dims(x.dim(), self.dim)?;
        if indices.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut tape = Tape {
            pre: Vec::new(),
            post: Vec::new(),
        };
        let mut total = 0.0;
        for &i in indices {
            self.forward(x.as_slice(), data.row(i), &mut tape);
            total += Self::cross_entropy(tape.post.last().unwrap(), data.label(i)).0;
        }
        Ok(total / indices.len() as f64)
    }

    pub fn batch_loss(&self, x: &ParamVector, indices: &[usize]) -> Result<f64> {
        self.batch_loss_on(&self.train, x, indices)
    }

    pub fn batch_gradient(&self, x: &ParamVector, indices: &[usize]) -> Result<ParamVector> {
        check_dims(x.dim(), self.dim)?;
        if indices.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("x"));
        }
        let theta = x.as_slice();
        let mut grad = vec![0.0; self.dim];
        let mut tape = Tape {
            pre: Vec::new(),
            post: Vec::new(),
        };
        for &i in indices {
            let input = self.train.row(i);
            self.forward(theta, input, &mut tape);
            let (_, mut delta) =
                Self::cross_entropy(tape.post.last().unwrap(), self.train.label(i));
            for l in (0..self.layers.len()).rev() {
                let layer = self.layers[l];
                let prev: &[f64] = if l == 0 { input } else { &tape.post[l - 1] };
                let (gw, rest) = grad[layer.offset..].split_at_mut(layer.fan_in * layer.fan_out);
                for (o, d) in delta.iter().enumerate() {
                    for (g, a) in gw[o * layer.fan_in..(o + 1) * layer.fan_in]
                        .iter_mut()
                        .zip(prev)
                    {
                        *g += d * a;
                    }
                    rest[o] += d;
                }
                if l > 0 {
                    let w = &theta[layer.offset..layer.bias_offset()];
                    let mut back = vec![0.0; layer.fan_in];
                    for (o, d) in delta.iter().enumerate() {
                        for (bj, wj) in back
                            .iter_mut()
                            .zip(&w[o * layer.fan_in..(o + 1) * layer.fan_in])
                        {
                            *bj += d * wj;
                        }
                    }
                    for (j, bj) in back.iter_mut().enumerate() {
                        *bj *= self
                            .activation
                            .derivative(tape.pre[l - 1][j], tape.post[l - 1][j]);
                    }
                    delta = back;
                }
            }
        }
        let n = indices.len() as f64;
        for g in &mut grad {
            *g /= n;
        }
        ParamVector::new(grad)
    }

    pub fn full_objective(&self, x: &ParamVector) -> Result<f64> {
        let all: Vec<usize> = (0..self.train.len()).collect();
        self.batch_loss(x, &all)
    }

    pub fn full_gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        let all: Vec<usize> = (0..self.train.len()).collect();
        self.batch_gradient(x, &all)
    }

    fn predict(&self, theta: &[f64], input: &[f64], tape: &mut Tape) -> usize {
        self.forward(theta, input, tape);
        let logits = tape.post.last().unwrap();
        let mut best = 0;
        for (c, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = c;
            }
        }
        best
    }

    /// Mean loss and accuracy on `data`.
    fn score(&self, data: &Dataset, x: &ParamVector) -> Result<(f64, f64)> {
        let all: Vec<usize> = (0..data.len()).collect();
        let loss = self.batch_loss_on(data, x, &all)?;
        let mut tape = Tape {
            pre: Vec::new(),
            post: Vec::new(),
        };
        let correct = all
            .iter()
            .filter(|&&i| self.predict(x.as_slice(), data.row(i), &mut tape) == data.label(i))
            .count();
        Ok((loss, correct as f64 / data.len() as f64))
    }

    pub fn evaluate(&self, x: &ParamVector) -> Result<(f64, f64)> {
        self.score(&self.eval, x)
    }

    pub fn train_accuracy(&self, x: &ParamVector) -> Result<f64> {
        Ok(self.score(&self.train, x)?.1)
    }
}
