//! Conservative Value Iteration numerics: mellowmax, the gap-increasing
//! update target, the softmax behavior policy, and the regression loss.
//!
//! All exponentials are computed max-shifted; β·P can reach the hundreds.
//! Everything here is pure.

use alloc::vec::Vec;

use rand::Rng;

/// CVI hyperparameters. α weighs the gap-increasing term, β controls how
/// sharp the soft maximum and the behavior policy are, γ discounts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CviConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_discount: f64,
}

impl CviConfig {
    pub fn new(alpha: f64, beta: f64, gamma_discount: f64) -> Self {
        assert!((0.0..=1.0).contains(&alpha), "alpha must be in [0,1], got {alpha}");
        assert!(beta > 0.0, "beta must be positive, got {beta}");
        assert!(
            (0.0..1.0).contains(&gamma_discount),
            "gamma must be in [0,1), got {gamma_discount}"
        );
        Self { alpha, beta, gamma_discount }
    }
}

impl Default for CviConfig {
    /// The reaching-task defaults: α=0.95, β=1, γ=0.99.
    fn default() -> Self {
        Self { alpha: 0.95, beta: 1.0, gamma_discount: 0.99 }
    }
}

/// Soft maximum `(1/β)·log((1/|A|)·Σ exp(β·P_a))`, max-shifted.
///
/// Bounds: `max(P) − log|A|/β ≤ mellowmax ≤ max(P)`.
pub fn mellowmax(prefs: &[f64], beta: f64) -> f64 {
    assert!(!prefs.is_empty(), "mellowmax over an empty preference vector");
    assert!(beta > 0.0);
    let max = prefs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = prefs.iter().map(|&p| libm::exp(beta * (p - max))).sum();
    max + (libm::log(sum) - libm::log(prefs.len() as f64)) / beta
}

/// One-sample CVI regression target:
/// `r + γ·mellowmax(P(s′,·)) + α·(P(s,a) − mellowmax(P(s,·)))`,
/// with the bootstrap term dropped when s′ terminated the episode.
///
/// All preference arguments come from the target network.
pub fn cvi_target(
    reward: f64,
    terminated: bool,
    prefs_s: &[f64],
    action: usize,
    prefs_s_next: &[f64],
    cfg: &CviConfig,
) -> f64 {
    assert!(action < prefs_s.len(), "action {action} out of range {}", prefs_s.len());
    let bootstrap = if terminated {
        0.0
    } else {
        cfg.gamma_discount * mellowmax(prefs_s_next, cfg.beta)
    };
    let gap = if cfg.alpha == 0.0 {
        0.0
    } else {
        cfg.alpha * (prefs_s[action] - mellowmax(prefs_s, cfg.beta))
    };
    reward + bootstrap + gap
}

/// Hard Q-learning target `r + γ·max_a′ P(s′,a′)` — the α=0, β→∞ limit,
/// used by the BQN baseline.
pub fn hard_q_target(reward: f64, terminated: bool, prefs_s_next: &[f64], gamma: f64) -> f64 {
    let bootstrap = if terminated {
        0.0
    } else {
        gamma * prefs_s_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    reward + bootstrap
}

/// Softmax policy probabilities `exp(βP_a)/Σ_b exp(βP_b)`, max-shifted.
pub fn softmax_probs(prefs: &[f64], beta: f64) -> Vec<f64> {
    assert!(!prefs.is_empty());
    let max = prefs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = prefs.iter().map(|&p| libm::exp(beta * (p - max))).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Sample an action from the softmax policy.
pub fn softmax_policy<R: Rng>(prefs: &[f64], beta: f64, rng: &mut R) -> usize {
    let probs = softmax_probs(prefs, beta);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    probs.len() - 1 // guard against rounding at the top of the cumsum
}

/// Greedy action, lowest index winning ties.
pub fn argmax(prefs: &[f32]) -> usize {
    assert!(!prefs.is_empty());
    let mut best = 0;
    for (i, &p) in prefs.iter().enumerate().skip(1) {
        if p > prefs[best] {
            best = i;
        }
    }
    best
}

/// Mean squared regression loss `mean ½(tᵢ − pᵢ)²` and its gradient seed
/// `∂J/∂pᵢ = (pᵢ − tᵢ)/B`. Targets are target-network constants; no
/// gradient flows through them.
pub fn bpn_loss(targets: &[f64], predictions: &[f32]) -> (f64, Vec<f32>) {
    assert!(!targets.is_empty(), "loss over an empty minibatch");
    assert_eq!(targets.len(), predictions.len());
    let b = targets.len() as f64;
    let mut loss = 0.0;
    let mut seeds = Vec::with_capacity(targets.len());
    for (&t, &p) in targets.iter().zip(predictions) {
        let d = p as f64 - t;
        loss += 0.5 * d * d;
        seeds.push((d / b) as f32);
    }
    (loss / b, seeds)
}
