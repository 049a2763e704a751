//! α-entmax: sparse probability mappings between softmax (α = 1) and
//! sparsemax (α = 2).
//!
//! For α > 1 the mapping has the threshold form
//!
//! ```text
//! p_i = [(α - 1) z_i - τ]_+ ^ (1 / (α - 1)),   with τ chosen so that Σ p_i = 1
//! ```
//!
//! and τ is found by bisection. Entries below the threshold are exactly zero.

use thiserror::Error;

/// Default bisection tolerance on `|Σ p - 1|`.
pub const DEFAULT_EPS: f64 = 1e-8;

/// Hard cap on bisection steps. The initial bracket has width ≤ 1, so 100
/// halvings exhaust `f64` resolution.
pub const MAX_BISECTION_ITERS: usize = 100;

/// Initial value of every learnable α.
pub const ALPHA_INIT: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntmaxError {
    #[error("entmax of an empty score vector")]
    Empty,
    #[error("entmax scores must be finite")]
    NonFinite,
    #[error("alpha {0} outside [1, 2]")]
    AlphaRange(f64),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntmaxResult {
    pub probs: Vec<f64>,
    /// Indices with strictly positive probability, ascending.
    pub support: Vec<usize>,
    /// Threshold in the scaled domain `(α - 1) z`; for α = 1 the log-partition.
    pub tau: f64,
    pub iterations: usize,
}

/// Bound on the raw α parameter; keeps `1 + sigmoid(raw)` strictly above 1 in `f64`.
pub const RAW_LIMIT: f64 = 30.0;

/// Unconstrained trainable scalar mapped into α ∈ (1, 2) by `1 + sigmoid(raw)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaParam {
    pub raw: f64,
}

impl Default for AlphaParam {
    fn default() -> Self {
        Self::from_value(ALPHA_INIT)
    }
}

impl AlphaParam {
    /// Inverse of [`AlphaParam::value`]; `value` must lie in (1, 2).
    pub fn from_value(value: f64) -> Self {
        let s = value - 1.0;
        assert!(s > 0.0 && s < 1.0, "alpha {value} not representable");
        Self {
            raw: (s / (1.0 - s)).ln(),
        }
    }

    pub fn value(&self) -> f64 {
        1.0 + sigmoid(self.raw.clamp(-RAW_LIMIT, RAW_LIMIT))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn validate(scores: &[f64], alpha: f64) -> Result<(), EntmaxError> {
    if scores.is_empty() {
        return Err(EntmaxError::Empty);
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(EntmaxError::NonFinite);
    }
    if !(1.0..=2.0).contains(&alpha) {
        return Err(EntmaxError::AlphaRange(alpha));
    }
    Ok(())
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn support_of(probs: &[f64]) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Solves α-entmax for one score vector.
pub fn entmax_forward(scores: &[f64], alpha: f64, eps: f64) -> Result<EntmaxResult, EntmaxError> {
    validate(scores, alpha)?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(EntmaxError::Tolerance(eps));
    }
    if alpha == 1.0 {
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + scores.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let probs = softmax(scores);
        let support = support_of(&probs);
        return Ok(EntmaxResult {
            probs,
            support,
            tau: lse,
            iterations: 0,
        });
    }

    let am1 = alpha - 1.0;
    let inv = 1.0 / am1;
    let d = scores.len() as f64;
    let x: Vec<f64> = scores.iter().map(|v| v * am1).collect();
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mass = |tau: f64| -> f64 {
        x.iter()
            .map(|&v| {
                let u = v - tau;
                if u > 0.0 {
                    u.powf(inv)
                } else {
                    0.0
                }
            })
            .sum()
    };

    // mass(lo) >= 1 (the max entry alone contributes 1), mass(hi) <= 1.
    let mut lo = max - 1.0;
    let mut hi = max - (1.0 / d).powf(am1);
    let mut tau = 0.5 * (lo + hi);
    let mut iterations = 0;
    while iterations < MAX_BISECTION_ITERS {
        iterations += 1;
        tau = 0.5 * (lo + hi);
        let f = mass(tau) - 1.0;
        if f.abs() <= eps {
            break;
        }
        if f > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        if tau == lo && tau == hi {
            break;
        }
    }

    let mut probs: Vec<f64> = x
        .iter()
        .map(|&v| {
            let u = v - tau;
            if u > 0.0 {
                u.powf(inv)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        probs.iter_mut().for_each(|p| *p /= total);
    } else {
        // Unreachable with a valid bracket; keep the argmax as a fallback.
        let arg = x.iter().enumerate().fold(0, |b, (i, &v)| if v > x[b] { i } else { b });
        probs[arg] = 1.0;
    }
    let support = support_of(&probs);
    Ok(EntmaxResult {
        probs,
        support,
        tau,
        iterations,
    })
}

/// Vector-Jacobian product of α-entmax.
///
/// Returns `(d_scores, d_alpha)` for upstream gradient `upstream`. With
/// `s_i = p_i^(2-α)` on the support, `d_scores = s ⊙ g - (sᵀg / Σs) s`.
/// `d_alpha` is zero at α = 1, where the α-derivative is not defined.
pub fn entmax_backward(probs: &[f64], alpha: f64, upstream: &[f64]) -> (Vec<f64>, f64) {
    assert_eq!(probs.len(), upstream.len(), "entmax_backward length mismatch");
    let s: Vec<f64> = probs
        .iter()
        .map(|&p| if p > 0.0 { p.powf(2.0 - alpha) } else { 0.0 })
        .collect();
    let s_sum: f64 = s.iter().sum();
    assert!(s_sum > 0.0, "entmax support is empty");
    let sg: f64 = s.iter().zip(upstream).map(|(a, b)| a * b).sum();
    let q = sg / s_sum;
    let d_scores: Vec<f64> = s.iter().zip(upstream).map(|(&si, &g)| si * g - q * si).collect();

    if alpha == 1.0 {
        return (d_scores, 0.0);
    }
    let am1 = alpha - 1.0;
    let plogp: Vec<f64> = probs.iter().map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 }).collect();
    let ent: f64 = plogp.iter().sum();
    let mut d_alpha = 0.0;
    for i in 0..probs.len() {
        let skew = s[i] / s_sum;
        let dp = (probs[i] - skew) / (am1 * am1) - (plogp[i] - skew * ent) / am1;
        d_alpha += upstream[i] * dp;
    }
    (d_scores, d_alpha)
}
