//! Temperature sampling and the divergence measures used for evaluation.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Softmax of `logits / tau`, computed with the maximum subtracted.
///
/// # Panics
///
/// If `tau <= 0`. The greedy limit is [`argmax`].
pub fn temperature_softmax(logits: &[f64], tau: f64) -> Vec<f64> {
    assert!(tau > 0.0, "temperature must be positive, got {tau}");
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    temperature_softmax(logits, 1.0)
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Index of the largest logit; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` a hair below 1: fall back to the last non-zero entry.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// `Σ p log2(p / q)` with `0 log 0 = 0`.
fn kl2(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).log2())
        .sum()
}

/// Jensen-Shannon divergence with base-2 logarithms, in `[0, 1]`.
///
/// # Panics
///
/// If the supports differ in size.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must share a support");
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let d = 0.5 * kl2(p, &m) + 0.5 * kl2(q, &m);
    d.clamp(0.0, 1.0)
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub fn normalize_counts(counts: &[usize]) -> Option<Vec<f64>> {
    let total: usize = counts.iter().sum();
    (total > 0).then(|| counts.iter().map(|c| *c as f64 / total as f64).collect())
}

/// `KL(P ‖ U)` in bits for the empirical distribution of `counts`.
///
/// # Panics
///
/// If all counts are zero.
pub fn kl_vs_uniform(counts: &[usize]) -> f64 {
    let p = normalize_counts(counts).expect("category counts must not all be zero");
    kl2(&p, &uniform(counts.len()))
}

/// `1 - JSD(P, U)` for the empirical distribution of `counts`; 0 when
/// nothing was counted.
pub fn variety(counts: &[usize]) -> f64 {
    match normalize_counts(counts) {
        Some(p) => 1.0 - jsd(&p, &uniform(counts.len())),
        None => 0.0,
    }
}

/// Action selection at inference time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperaturePolicy {
    /// `0` selects the greedy (argmax) path.
    pub tau: f64,
    /// Number of leading steps sampled uniformly over all actions.
    pub uniform_prefix_k: u32,
}

impl TemperaturePolicy {
    pub fn new(tau: f64, uniform_prefix_k: u32) -> Self {
        assert!((0.0..=1.0).contains(&tau), "tau must lie in [0, 1], got {tau}");
        TemperaturePolicy { tau, uniform_prefix_k }
    }

    pub fn greedy() -> Self {
        TemperaturePolicy::new(0.0, 0)
    }

    pub fn choose<R: Rng + ?Sized>(&self, logits: &[f64], step: u32, rng: &mut R) -> usize {
        if step < self.uniform_prefix_k {
            rng.gen_range(0..logits.len())
        } else if self.tau <= 0.0 {
            argmax(logits)
        } else {
            sample_index(&temperature_softmax(logits, self.tau), rng)
        }
    }
}

/// One row of a temperature sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub variety: f64,
    pub success_rate: f64,
}

impl SweepRow {
    pub fn score(&self) -> f64 {
        self.variety.min(self.success_rate)
    }
}

/// Index of the row maximising `min(V, W)`; ties go to the smaller tau.
pub fn pick_tau(rows: &[SweepRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let (s, sb) = (row.score(), rows[b].score());
                if s > sb || (s == sb && row.tau < rows[b].tau) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}
