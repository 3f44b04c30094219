//! Closed-form and brute-force success probabilities.
//!
//! The receiver of interest has `d` message-holding neighbors, each
//! transmitting independently with probability `p`. It hears a message iff
//! exactly one of them transmits and, when it holds the message itself, it
//! stays silent.

use std::f64::consts::E;

use thiserror::Error;

use crate::model::{deliver, NodeId, RoundTopology};
use crate::units::{Degree, Probability};

/// Largest number of coin-flipping nodes [`brute_force_delivery_prob`]
/// will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("the single-round bound needs p <= 1/2, got {0}")]
    ProbabilityAboveHalf(f64),
    #[error("degree must be at least 1")]
    ZeroDegree,
    #[error("interval [{0}, {1}] is empty")]
    EmptyInterval(u64, u64),
    #[error("entry {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("{0} potential transmitters exceed the enumeration limit of {BRUTE_FORCE_LIMIT}")]
    TooManyTransmitters(usize),
    #[error("expected {expected} per-node probabilities, got {got}")]
    Length { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundSuccessQuery {
    pub degree: u64,
    pub p: f64,
    pub receiver_has_message: bool,
}

/// `d p (1-p)^(d-1)`, or `d p (1-p)^d` when the receiver must also stay
/// silent. Evaluated in the log domain.
pub fn exact_success_prob(q: &RoundSuccessQuery) -> f64 {
    if q.degree == 0 || q.p <= 0.0 {
        return 0.0;
    }
    let p = Probability::new(q.p.min(1.0)).expect("p checked positive");
    success(Degree::Count(q.degree), p, q.receiver_has_message)
}

/// Per-round success probability. Moderate inputs are evaluated directly,
/// which keeps dyadic cases exact; the rest go through the log domain.
pub fn success(degree: Degree, p: Probability, receiver_has_message: bool) -> f64 {
    if let Degree::Count(c) = degree {
        if c <= 1 << 20 && p.value() >= 1.0 / 1024.0 {
            let q = RoundSuccessQuery { degree: c, p: p.value(), receiver_has_message };
            let direct = direct_success_prob(&q);
            if direct >= f64::MIN_POSITIVE || c == 0 {
                return direct;
            }
        }
    }
    ln_success(degree, p, receiver_has_message).exp()
}

/// Same quantity evaluated directly in floating point; underflows for large
/// degrees.
pub fn direct_success_prob(q: &RoundSuccessQuery) -> f64 {
    let exponent = q.degree.saturating_sub(1) + q.receiver_has_message as u64;
    q.degree as f64 * q.p * (1.0 - q.p).powf(exponent as f64)
}

/// Natural log of the per-round success probability, for any degree size.
pub fn ln_success(degree: Degree, p: Probability, receiver_has_message: bool) -> f64 {
    if degree.is_zero() {
        return f64::NEG_INFINITY;
    }
    let silence = match degree {
        Degree::Count(c) => {
            let exponent = c - 1 + receiver_has_message as u64;
            if exponent == 0 {
                0.0
            } else {
                exponent as f64 * p.ln_complement()
            }
        }
        // (d - 1) and d are indistinguishable at this size
        Degree::Huge { ln } => -(ln + p.ln_neg_ln_complement()).exp(),
    };
    degree.ln() + p.ln() + silence
}

/// `Σ_i` success over a phase's probabilities at a fixed degree.
pub fn phase_success_sum(probs: &[Probability], degree: Degree, receiver_has_message: bool) -> f64 {
    probs.iter().map(|&p| success(degree, p, receiver_has_message)).sum()
}

/// `ln Σ_i` success, stable when every term underflows.
pub fn ln_phase_success_sum(
    probs: &[Probability],
    degree: Degree,
    receiver_has_message: bool,
) -> f64 {
    log_sum_exp(probs.iter().map(|&p| ln_success(degree, p, receiver_has_message)))
}

pub fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `(p d) / (2e)^(p d)`: lower bound on success while the receiver also
/// transmits with `p`.
pub fn prosing_bound(d: u64, p: f64) -> Result<f64, OracleError> {
    if d < 1 {
        return Err(OracleError::ZeroDegree);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(OracleError::Probability(p));
    }
    if p > 0.5 {
        return Err(OracleError::ProbabilityAboveHalf(p));
    }
    let x = p * d as f64;
    Ok(x / (2.0 * E).powf(x))
}

/// Minimum of the exact success at the two endpoints. Success is unimodal
/// in the degree, so this bounds every degree in `[d1, d2]` from below.
pub fn interval_min_bound(
    d1: u64,
    d2: u64,
    p: f64,
    receiver_has_message: bool,
) -> Result<f64, OracleError> {
    if d1 < 1 {
        return Err(OracleError::ZeroDegree);
    }
    if d1 > d2 {
        return Err(OracleError::EmptyInterval(d1, d2));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(OracleError::Probability(p));
    }
    let at = |degree| exact_success_prob(&RoundSuccessQuery { degree, p, receiver_has_message });
    Ok(at(d1).min(at(d2)))
}

/// `(1 - Σx, 1 - Σx + Σ_{i<j} x_i x_j)`, which sandwich `Π (1 - x_i)`.
pub fn weierstrass_bounds(xs: &[f64]) -> Result<(f64, f64), OracleError> {
    if let Some(&bad) = xs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(OracleError::OutOfRange(bad));
    }
    let sum: f64 = xs.iter().sum();
    let mut pairs = 0.0;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            pairs += xs[i] * xs[j];
        }
    }
    Ok((1.0 - sum, 1.0 - sum + pairs))
}

/// Probability that `target` receives in `topology` when node `u` transmits
/// with `probs[u]`, by enumerating every transmit pattern of the nodes that
/// can affect `target` (itself and its `E_r` neighbors).
pub fn brute_force_delivery_prob(
    topology: &RoundTopology<'_>,
    probs: &[f64],
    target: NodeId,
) -> Result<f64, OracleError> {
    let g = topology.graph();
    if probs.len() != g.node_count() {
        return Err(OracleError::Length { expected: g.node_count(), got: probs.len() });
    }
    if let Some(&bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(OracleError::Probability(bad));
    }
    let mut relevant: Vec<NodeId> = topology
        .active_edges()
        .filter(|e| e.touches(target))
        .map(|e| {
            let (a, b) = e.endpoints();
            if a == target {
                b
            } else {
                a
            }
        })
        .collect();
    relevant.push(target);
    relevant.retain(|&u| probs[u] > 0.0);
    relevant.sort_unstable();
    let m = relevant.len();
    if m > BRUTE_FORCE_LIMIT {
        return Err(OracleError::TooManyTransmitters(m));
    }
    let mut total = 0.0;
    let mut transmitters = Vec::with_capacity(m);
    for mask in 0u32..(1 << m) {
        transmitters.clear();
        let mut weight = 1.0;
        for (bit, &u) in relevant.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                weight *= probs[u];
                transmitters.push(u);
            } else {
                weight *= 1.0 - probs[u];
            }
        }
        if weight > 0.0 && deliver(topology, &transmitters).get(target).heard().is_some() {
            total += weight;
        }
    }
    Ok(total)
}
