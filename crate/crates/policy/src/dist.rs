//! Independent two-way softmax per action bit.

use intercept_core::airframe::{ActionCommand, NUM_GROUPS};
use intercept_core::RngStream;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Sample,
    Argmax,
}

/// `(p_off, p_on)` for one logit pair.
pub fn pair_probs(l_off: f64, l_on: f64) -> (f64, f64) {
    let m = l_off.max(l_on);
    let e0 = (l_off - m).exp();
    let e1 = (l_on - m).exp();
    let s = e0 + e1;
    (e0 / s, e1 / s)
}

/// `log(e^a + e^b)` without overflow.
pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-bit probabilities of a flat logit vector `[off₀, on₀, off₁, on₁, …]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub logits: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(logits: Vec<f64>) -> Self {
        debug_assert!(logits.len() % 2 == 0);
        Self { logits }
    }

    pub fn act_dim(&self) -> usize {
        self.logits.len() / 2
    }

    pub fn probs(&self) -> Vec<(f64, f64)> {
        self.logits.chunks_exact(2).map(|p| pair_probs(p[0], p[1])).collect()
    }

    pub fn log_prob(&self, bits: &[bool]) -> f64 {
        log_prob(&self.logits, bits)
    }

    /// Draws one action; returns the bits and their joint log-probability.
    pub fn sample(&self, rng: &mut RngStream, mode: SampleMode) -> (Vec<bool>, f64) {
        let bits: Vec<bool> = self
            .logits
            .chunks_exact(2)
            .map(|p| match mode {
                SampleMode::Argmax => p[1] > p[0],
                SampleMode::Sample => rng.unit() < pair_probs(p[0], p[1]).1,
            })
            .collect();
        let lp = self.log_prob(&bits);
        (bits, lp)
    }

    /// KL(self ‖ other), summed over bits.
    pub fn kl(&self, other: &ActionDistribution) -> f64 {
        self.logits
            .chunks_exact(2)
            .zip(other.logits.chunks_exact(2))
            .map(|(a, b)| {
                let la = [a[0] - log_sum_exp(a[0], a[1]), a[1] - log_sum_exp(a[0], a[1])];
                let lb = [b[0] - log_sum_exp(b[0], b[1]), b[1] - log_sum_exp(b[0], b[1])];
                la[0].exp() * (la[0] - lb[0]) + la[1].exp() * (la[1] - lb[1])
            })
            .sum()
    }
}

pub fn log_prob(logits: &[f64], bits: &[bool]) -> f64 {
    logits
        .chunks_exact(2)
        .zip(bits)
        .map(|(p, b)| p[*b as usize] - log_sum_exp(p[0], p[1]))
        .sum()
}

/// `∂ log π(bits) / ∂ logits`.
pub fn log_prob_grad(logits: &[f64], bits: &[bool], out: &mut [f64]) {
    for ((p, b), g) in logits.chunks_exact(2).zip(bits).zip(out.chunks_exact_mut(2)) {
        let (p0, p1) = pair_probs(p[0], p[1]);
        g[0] = (!*b as u8 as f64) - p0;
        g[1] = (*b as u8 as f64) - p1;
    }
}

pub fn to_command(bits: &[bool]) -> ActionCommand {
    let mut c = ActionCommand::NONE;
    for (slot, b) in c.0.iter_mut().zip(bits).take(NUM_GROUPS) {
        *slot = *b;
    }
    c
}
