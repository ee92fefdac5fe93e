//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, worker, purpose, counter)`. Streams
//! with different purposes never share state, so consuming draws from one
//! (say, the pseudo-sync coin) cannot shift another (the data sampler).

use serde::{Deserialize, Serialize};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a stream is used for. The tag is part of the stream key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Data,
    Bernoulli,
    Init,
    Shard,
    Dataset,
    Jitter,
    Probe,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Data => 0x01,
            Purpose::Bernoulli => 0x02,
            Purpose::Init => 0x03,
            Purpose::Shard => 0x04,
            Purpose::Dataset => 0x05,
            Purpose::Jitter => 0x06,
            Purpose::Probe => 0x07,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    worker: u64,
    purpose: Purpose,
    counter: u64,
    key: u64,
    salt: u64,
}

impl RngStream {
    pub fn new(seed: u64, worker: u64, purpose: Purpose) -> Self {
        let k0 = mix64(seed.wrapping_add(GOLDEN_GAMMA));
        let k1 = mix64(k0 ^ worker.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        let key = mix64(k1 ^ purpose.tag().wrapping_mul(0xA076_1D64_78BD_642F));
        let salt = mix64(key ^ 0xE703_7ED1_A0B4_28DB);
        Self {
            seed,
            worker,
            purpose,
            counter: 0,
            key,
            salt,
        }
    }

    /// Stream positioned at an explicit counter value.
    pub fn at(seed: u64, worker: u64, purpose: Purpose, counter: u64) -> Self {
        let mut s = Self::new(seed, worker, purpose);
        s.counter = counter;
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn worker(&self) -> u64 {
        self.worker
    }

    pub fn purpose(&self) -> Purpose {
        self.purpose
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn seek(&mut self, counter: u64) {
        self.counter = counter;
    }

    /// Raw 64-bit output at `counter`, without advancing.
    #[inline]
    pub fn peek_u64(&self, counter: u64) -> u64 {
        let z = mix64(self.key.wrapping_add(counter.wrapping_mul(GOLDEN_GAMMA)));
        mix64(z ^ self.salt)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = self.peek_u64(self.counter);
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution. Consumes one counter.
    #[inline]
    pub fn draw_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `N(0, sigma²)` via Box-Muller. Always consumes two counters.
    pub fn draw_gaussian(&mut self, sigma: f64) -> f64 {
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.draw_uniform();
        let u2 = self.draw_uniform();
        if sigma == 0.0 {
            return 0.0;
        }
        sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform index in `0..n`. Consumes one counter.
    ///
    /// # Panics
    /// If `n == 0`.
    pub fn draw_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "draw_index needs a non-empty range");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64], sigma: f64) {
        for v in out {
            *v = self.draw_gaussian(sigma);
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.draw_index(i + 1);
            items.swap(i, j);
        }
    }
}
