use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inner step-size shape over the run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear warmup to the base rate, then cosine decay to `min_factor·α`.
    WarmupCosine {
        #[serde(default)]
        warmup_steps: u64,
        #[serde(default)]
        min_factor: f64,
    },
}

/// Step sizes, mixing rate and synchronization layout of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub alpha: f64,
    pub lr_schedule: LrSchedule,
    pub eta: f64,
    /// Pseudo-sync probability, in `[0, 1)`.
    pub p: f64,
    /// Steps between all-reduce rounds.
    pub h: u64,
    /// Requested DDP warmup length, before rounding to a multiple of `h`.
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl Schedule {
    pub fn constant(alpha: f64, eta: f64, p: f64, h: u64, total_steps: u64) -> Self {
        Self {
            alpha,
            lr_schedule: LrSchedule::Constant,
            eta,
            p,
            h,
            warmup_steps: 0,
            total_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("schedule.alpha", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.p) {
            return Err(Error::config(
                "schedule.p",
                format!("p must be in [0, 1), got {}", self.p),
            ));
        }
        if self.p > 0.0 && !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config("schedule.eta", "must be > 0 when p > 0"));
        }
        if self.h == 0 {
            return Err(Error::config("schedule.h", "H must be >= 1"));
        }
        if self.total_steps == 0 {
            return Err(Error::config("steps", "T must be >= 1"));
        }
        if let LrSchedule::WarmupCosine { min_factor, .. } = self.lr_schedule {
            if !(0.0..=1.0).contains(&min_factor) {
                return Err(Error::config(
                    "schedule.lr_schedule.min_factor",
                    "must be in [0, 1]",
                ));
            }
        }
        Ok(())
    }

    /// `α_t`.
    pub fn alpha_at(&self, t: u64) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.alpha,
            LrSchedule::WarmupCosine {
                warmup_steps,
                min_factor,
            } => {
                if t < warmup_steps {
                    return self.alpha * (t + 1) as f64 / warmup_steps as f64;
                }
                let span = self.total_steps.saturating_sub(warmup_steps).max(1) as f64;
                let progress = ((t - warmup_steps) as f64 / span).min(1.0);
                let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
                self.alpha * (min_factor + (1.0 - min_factor) * cosine)
            }
        }
    }

    /// `η_t` (constant).
    pub fn eta_at(&self, _t: u64) -> f64 {
        self.eta
    }

    /// Pseudo-sync contraction coefficient `α_t·η_t / p`.
    pub fn mixing_coefficient(&self, t: u64) -> f64 {
        self.alpha_at(t) * self.eta_at(t) / self.p
    }

    /// Step size used by gradient steps of a variant that pseudo-syncs with
    /// probability `p`: `α_t / (1 − p)`.
    pub fn gradient_lr(&self, t: u64) -> f64 {
        self.alpha_at(t) / (1.0 - self.p)
    }

    /// First local-update step: the warmup length rounded up to a multiple of
    /// `h`, capped at `total_steps`.
    pub fn warmup_end(&self) -> u64 {
        self.warmup_steps
            .div_ceil(self.h)
            .saturating_mul(self.h)
            .min(self.total_steps)
    }
}

/// Constant step size and mixing rate that instantiate the strongly convex
/// convergence bound, plus the averaging weights `w_t = (1 − μα)^{−(t+1)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TheorySchedule {
    pub alpha: f64,
    pub eta: f64,
    pub p: f64,
    pub h: u64,
    pub mu: f64,
    /// Whether `α` came from the `p / (48 L H)` cap rather than the log term.
    pub capped: bool,
}

impl TheorySchedule {
    /// `w_t = (1 − μα)^{−(t+1)}`. Overflows to infinity for long horizons;
    /// [`WeightedAverage`](super::WeightedAverage) works with ratios instead.
    pub fn weight(&self, t: u64) -> f64 {
        (1.0 - self.mu * self.alpha).powf(-((t + 1) as f64))
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        (0..).map(move |t| self.weight(t))
    }
}

/// Builds the theory step size:
///
/// `α = min(p / (48 L H), ln(μ² d₀ T² K / σ²) / (μ T))`, `η = p / (2 H α)`.
///
/// With `σ = 0` (or a non-positive log term) only the cap applies. `α` is then
/// lowered by a few ulps if needed so that `α·η == p / (2H)` holds exactly in
/// floating point.
#[allow(clippy::too_many_arguments)]
pub fn theory_schedule(
    mu: f64,
    l: f64,
    p: f64,
    h: u64,
    total_steps: u64,
    workers: usize,
    sigma: f64,
    d0: f64,
) -> Result<TheorySchedule> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid("mu", "must be > 0"));
    }
    if !(l >= mu && l.is_finite()) {
        return Err(Error::invalid("L", "must satisfy L >= mu"));
    }
    if !(p > 0.0 && p <= 0.5) {
        return Err(Error::invalid(
            "p",
            format!("theory schedule needs 0 < p <= 1/2, got {p}"),
        ));
    }
    if h == 0 || total_steps == 0 || workers == 0 {
        return Err(Error::invalid("H/T/K", "must all be >= 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", "must be >= 0"));
    }
    if !(d0 > 0.0 && d0.is_finite()) {
        return Err(Error::invalid("d0", "must be > 0"));
    }
    let cap = p / (48.0 * l * h as f64);
    let t = total_steps as f64;
    let log_alpha = if sigma > 0.0 {
        let log_term = (mu * mu * d0 * t * t * workers as f64 / (sigma * sigma)).ln();
        let a = log_term / (mu * t);
        (a.is_finite() && a > 0.0).then_some(a)
    } else {
        None
    };
    let (mut alpha, capped) = match log_alpha {
        Some(a) if a < cap => (a, false),
        _ => (cap, true),
    };
    let target = p / (2.0 * h as f64);
    let mut eta = target / alpha;
    for _ in 0..64 {
        if alpha * eta == target {
            break;
        }
        alpha = alpha.next_down();
        eta = target / alpha;
    }
    Ok(TheorySchedule {
        alpha,
        eta,
        p,
        h,
        mu,
        capped,
    })
}
