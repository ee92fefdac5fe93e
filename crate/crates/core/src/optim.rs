//! Inner (worker-local) and outer (global) optimizers.
//!
//! The inner optimizer consumes stochastic gradients on each worker. The outer
//! optimizer consumes the averaged model delta `Δ = x_anchor − mean(x_k)` at a
//! synchronization round and treats it as a gradient.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::vecmath::{l2_norm_sq, ParamVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerKind {
    Sgd,
    SgdMomentum,
    Adamw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerConfig {
    pub kind: InnerKind,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Coupled (added to the gradient) for SGD variants, decoupled for AdamW.
    #[serde(default)]
    pub weight_decay: f64,
    /// Clip the gradient to `clip_norm` in global L2 norm before the update.
    #[serde(default)]
    pub grad_clip: bool,
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    /// Zero the optimizer buffers at every synchronization round.
    #[serde(default)]
    pub reset_on_sync: bool,
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_clip_norm() -> f64 {
    1.0
}

impl InnerConfig {
    pub fn new(kind: InnerKind) -> Self {
        Self {
            kind,
            momentum: default_momentum(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
            grad_clip: false,
            clip_norm: default_clip_norm(),
            reset_on_sync: false,
        }
    }

    pub fn sgd() -> Self {
        Self::new(InnerKind::Sgd)
    }

    pub fn adamw() -> Self {
        Self::new(InnerKind::Adamw)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(field("momentum"), "must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config(field("beta1"), "must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config(field("beta2"), "must be in [0, 1)"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config(field("eps"), "must be > 0"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(field("weight_decay"), "must be >= 0"));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::config(field("clip_norm"), "must be > 0"));
        }
        Ok(())
    }
}

/// Rescale `g` so that `‖g‖ ≤ max_norm`.
pub fn clip_global_norm(g: &mut ParamVector, max_norm: f64) {
    let norm = l2_norm_sq(g).sqrt();
    if norm > max_norm {
        g.scale_in_place(max_norm / norm);
    }
}

/// Worker-resident inner optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerOptimizer {
    config: InnerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl InnerOptimizer {
    pub fn new(config: InnerConfig, dim: usize) -> Self {
        let v = if config.kind == InnerKind::Adamw {
            vec![0.0; dim]
        } else {
            Vec::new()
        };
        let m = if config.kind == InnerKind::Sgd {
            Vec::new()
        } else {
            vec![0.0; dim]
        };
        Self {
            config,
            m,
            v,
            steps: 0,
        }
    }

    pub fn config(&self) -> &InnerConfig {
        &self.config
    }

    /// Gradient steps taken so far. Drives AdamW bias correction.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|v| *v = 0.0);
        self.v.iter_mut().for_each(|v| *v = 0.0);
        self.steps = 0;
    }

    /// Applies one gradient step to `x` in place.
    pub fn step(&mut self, x: &mut ParamVector, g: &ParamVector, lr: f64) -> Result<()> {
        check_dims(x.dim(), g.dim())?;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid("lr", format!("must be > 0, got {lr}")));
        }
        let clipped;
        let g = if self.config.grad_clip {
            let mut c = g.clone();
            clip_global_norm(&mut c, self.config.clip_norm);
            clipped = c;
            &clipped
        } else {
            g
        };
        let wd = self.config.weight_decay;
        self.steps += 1;
        let xs = x.as_mut_slice();
        let gs = g.as_slice();
        match self.config.kind {
            InnerKind::Sgd => {
                for (xi, gi) in xs.iter_mut().zip(gs) {
                    *xi -= lr * (gi + wd * *xi);
                }
            }
            InnerKind::SgdMomentum => {
                check_dims(self.m.len(), xs.len())?;
                let mu = self.config.momentum;
                for ((xi, gi), mi) in xs.iter_mut().zip(gs).zip(&mut self.m) {
                    *mi = mu * *mi + gi + wd * *xi;
                    *xi -= lr * *mi;
                }
            }
            InnerKind::Adamw => {
                check_dims(self.m.len(), xs.len())?;
                let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.eps);
                let bc1 = 1.0 - b1.powf(self.steps as f64);
                let bc2 = 1.0 - b2.powf(self.steps as f64);
                for (((xi, gi), mi), vi) in xs.iter_mut().zip(gs).zip(&mut self.m).zip(&mut self.v)
                {
                    *mi = b1 * *mi + (1.0 - b1) * gi;
                    *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                    let m_hat = *mi / bc1;
                    let v_hat = *vi / bc2;
                    *xi -= lr * wd * *xi;
                    *xi -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Functional form of [`InnerOptimizer::step`].
pub fn inner_step(
    state: &InnerOptimizer,
    x: &ParamVector,
    g: &ParamVector,
    lr: f64,
) -> Result<(ParamVector, InnerOptimizer)> {
    let mut state = state.clone();
    let mut x = x.clone();
    state.step(&mut x, g, lr)?;
    Ok((x, state))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterKind {
    Sgd,
    Nesterov,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterConfig {
    pub kind: OuterKind,
    #[serde(default = "default_outer_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
}

fn default_outer_lr() -> f64 {
    0.7
}

impl OuterConfig {
    /// Plain averaging: `x ← x − 1·Δ = mean(x_k)`.
    pub fn averaging() -> Self {
        Self {
            kind: OuterKind::Sgd,
            lr: 1.0,
            momentum: 0.0,
        }
    }

    pub fn nesterov(lr: f64, momentum: f64) -> Self {
        Self {
            kind: OuterKind::Nesterov,
            lr,
            momentum,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("{prefix}.lr"), "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(
                format!("{prefix}.momentum"),
                "must be in [0, 1)",
            ));
        }
        Ok(())
    }
}

/// Global-model optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterOptimizer {
    config: OuterConfig,
    velocity: Vec<f64>,
}

impl OuterOptimizer {
    pub fn new(config: OuterConfig, dim: usize) -> Self {
        Self {
            config,
            velocity: vec![0.0; dim],
        }
    }

    pub fn config(&self) -> &OuterConfig {
        &self.config
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    /// `sgd`: `x ← x − lr·Δ`.
    /// `nesterov`: `v ← μv + Δ; x ← x − lr·(Δ + μv)`.
    pub fn step(&mut self, x: &mut ParamVector, delta: &ParamVector) -> Result<()> {
        check_dims(x.dim(), delta.dim())?;
        check_dims(self.velocity.len(), x.dim())?;
        let lr = self.config.lr;
        let xs = x.as_mut_slice();
        match self.config.kind {
            OuterKind::Sgd => {
                for (xi, di) in xs.iter_mut().zip(delta.as_slice()) {
                    *xi -= lr * di;
                }
            }
            OuterKind::Nesterov => {
                let mu = self.config.momentum;
                for ((xi, di), vi) in xs.iter_mut().zip(delta.as_slice()).zip(&mut self.velocity) {
                    *vi = mu * *vi + di;
                    *xi -= lr * (di + mu * *vi);
                }
            }
        }
        Ok(())
    }
}

/// Functional form of [`OuterOptimizer::step`].
pub fn outer_step(
    state: &OuterOptimizer,
    x_global: &ParamVector,
    delta: &ParamVector,
) -> Result<(ParamVector, OuterOptimizer)> {
    let mut state = state.clone();
    let mut x = x_global.clone();
    state.step(&mut x, delta)?;
    Ok((x, state))
}
