//! Probability cycles of the uniform back-off algorithms.
//!
//! A uniform algorithm is a repeating cycle `(p_1, ..., p_k)`: in the t-th
//! round after activation (counted from 0) every active node transmits with
//! probability `p_{1 + (t mod k)}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::fmt_g17;
use crate::units::{log_2e, Delta, Probability};

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("stability factor must be at least 1")]
    ZeroTau,
    #[error("frlb with delta = {delta}, tau = {tau} produces p_{index} = {value} > 1")]
    ProbabilityAboveOne { delta: String, tau: u64, index: usize, value: f64 },
    #[error(
        "rlbc with delta = {delta}, tau = {tau}: tau_bar = {tau_bar} leaves {remaining} rounds for the \
         decreasing part (tau_bar - 2a must be at least 1)"
    )]
    RlbcTooShort { delta: String, tau: u64, tau_bar: u64, remaining: i64 },
    #[error("unknown algorithm {0:?} (expected decay, rlb, frlb, rlbc or rgb)")]
    UnknownAlgorithm(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Decay,
    Rlb,
    Frlb,
    Rlbc,
    /// Global broadcast: FRLB(2) started at aligned times after receipt.
    Rgb,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Decay => "decay",
            Algorithm::Rlb => "rlb",
            Algorithm::Frlb => "frlb",
            Algorithm::Rlbc => "rlbc",
            Algorithm::Rgb => "rgb",
        }
    }

    /// Builds the probability cycle. RGB runs the FRLB cycle.
    pub fn schedule(self, delta: Delta, tau: u64) -> Result<Schedule, ScheduleError> {
        match self {
            Algorithm::Decay => Ok(decay_schedule(delta)),
            Algorithm::Rlb => rlb_schedule(delta, tau),
            Algorithm::Frlb | Algorithm::Rgb => frlb_schedule(delta, tau),
            Algorithm::Rlbc => rlbc_schedule(delta, tau),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "decay" => Ok(Algorithm::Decay),
            "rlb" => Ok(Algorithm::Rlb),
            "frlb" => Ok(Algorithm::Frlb),
            "rlbc" => Ok(Algorithm::Rlbc),
            "rgb" => Ok(Algorithm::Rgb),
            _ => Err(ScheduleError::UnknownAlgorithm(s.into())),
        }
    }
}

/// Extra parameters of the correlation-resistant cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RlbcParams {
    pub a: u64,
    pub k_base: u64,
    pub e1: f64,
    pub e2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleParams {
    pub delta: Delta,
    /// `None` for Decay, which ignores stability.
    pub tau: Option<u64>,
    pub tau_bar: u64,
    pub rlbc: Option<RlbcParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    algorithm: Algorithm,
    cycle: Vec<Probability>,
    params: ScheduleParams,
}

impl Schedule {
    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn cycle(&self) -> &[Probability] {
        &self.cycle
    }

    pub fn len(&self) -> usize {
        self.cycle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycle.is_empty()
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    /// Probability used `local_round` rounds after activation.
    pub fn probability_at(&self, local_round: u64) -> Probability {
        self.cycle[(local_round % self.cycle.len() as u64) as usize]
    }

    /// `index,probability` rows with a header, one per cycle entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,probability\n");
        for (i, p) in self.cycle.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, fmt_g17(p.value())));
        }
        out
    }
}

/// Decay: `p_i = 2^-i` for `i = 1..⌈log Δ⌉`.
pub fn decay_schedule(delta: Delta) -> Schedule {
    let k = delta.ceil_log2().max(1);
    Schedule {
        algorithm: Algorithm::Decay,
        cycle: (1..=k).map(|i| Probability::pow2(i as u32)).collect(),
        params: ScheduleParams { delta, tau: None, tau_bar: k, rlbc: None },
    }
}

/// RLB: `τ̄ = min(τ, ⌈log Δ⌉)`, `p_i = Δ^(-i/τ̄)`.
pub fn rlb_schedule(delta: Delta, tau: u64) -> Result<Schedule, ScheduleError> {
    if tau == 0 {
        return Err(ScheduleError::ZeroTau);
    }
    let tau_bar = tau.min(delta.ceil_log2());
    let cycle = (1..=tau_bar)
        .map(|i| prob_from_log2(-(i as f64) * delta.log2() / tau_bar as f64))
        .collect();
    Ok(Schedule {
        algorithm: Algorithm::Rlb,
        cycle,
        params: ScheduleParams { delta, tau: Some(tau), tau_bar, rlbc: None },
    })
}

/// FRLB: `τ̄ = min(τ, ⌈log_2e Δ⌉)`, `p_i = Δ^(-i/τ̄) · log_2e Δ / τ̄`.
pub fn frlb_schedule(delta: Delta, tau: u64) -> Result<Schedule, ScheduleError> {
    if tau == 0 {
        return Err(ScheduleError::ZeroTau);
    }
    let tau_bar = tau.min(delta.log_2e().ceil() as u64).max(1);
    let scale = (delta.log_2e() / tau_bar as f64).log2();
    let mut cycle = Vec::with_capacity(tau_bar as usize);
    for i in 1..=tau_bar {
        let log2 = -(i as f64) * delta.log2() / tau_bar as f64 + scale;
        if log2 > 0.0 {
            return Err(ScheduleError::ProbabilityAboveOne {
                delta: delta.to_string(),
                tau,
                index: i as usize,
                value: log2.exp2(),
            });
        }
        cycle.push(prob_from_log2(log2));
    }
    Ok(Schedule {
        algorithm: Algorithm::Frlb,
        cycle,
        params: ScheduleParams { delta, tau: Some(tau), tau_bar, rlbc: None },
    })
}

/// RLBC: a decreasing part `k^-1, ..., k^-(τ̄-2a)` followed by `a` pairs
/// `(1/e1, 1/e2)` that keep a node's degree from drifting unnoticed.
pub fn rlbc_schedule(delta: Delta, tau: u64) -> Result<Schedule, ScheduleError> {
    if tau == 0 {
        return Err(ScheduleError::ZeroTau);
    }
    let tau_bar = ((delta.log_2e() / 2.0).ceil() as u64).min(tau);
    let too_short = |a: u64| ScheduleError::RlbcTooShort {
        delta: delta.to_string(),
        tau,
        tau_bar,
        remaining: tau_bar as i64 - 2 * a as i64,
    };
    // log_2e(1) = 0 would make `a` infinite
    if tau_bar < 2 {
        return Err(too_short(1));
    }
    let a = (tau_bar as f64 / log_2e(tau_bar as f64)).ceil() as u64;
    if tau_bar < 2 * a + 1 {
        return Err(too_short(a));
    }
    let decreasing = tau_bar - 2 * a;
    let k_base = (delta.log2() / decreasing as f64).exp2().ceil() as u64;
    let e1 = (k_base * a) as f64;
    let e2 = (k_base as f64).powi(2) * tau as f64 * a as f64;
    let log2_k = (k_base as f64).log2();

    let mut cycle: Vec<Probability> =
        (1..=decreasing).map(|i| prob_from_log2(-(i as f64) * log2_k)).collect();
    for _ in 0..a {
        cycle.push(prob_from_log2(-e1.log2()));
        cycle.push(prob_from_log2(-e2.log2()));
    }
    Ok(Schedule {
        algorithm: Algorithm::Rlbc,
        cycle,
        params: ScheduleParams {
            delta,
            tau: Some(tau),
            tau_bar,
            rlbc: Some(RlbcParams { a, k_base, e1, e2 }),
        },
    })
}

fn prob_from_log2(log2: f64) -> Probability {
    Probability::from_log2(log2.min(0.0)).expect("cycle probabilities are positive")
}
