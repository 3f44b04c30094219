//! Worst-case degree choices against a known probability cycle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AdversaryError;
use crate::oracle::{ln_phase_success_sum, ln_success};
use crate::units::{Degree, Delta, Probability};

/// `⌊log2 Δ̇⌋` and `ln Δ̇` for Δ̇ = Δ - 1.
fn dot_logs(delta: Delta) -> (u64, f64) {
    match delta.exact() {
        Some(d) => {
            let dot = d - 1;
            ((63 - dot.leading_zeros()) as u64, (dot as f64).ln())
        }
        None => (delta.log2().floor() as u64, delta.ln()),
    }
}

/// The degree chosen for one phase by the bins-and-balls construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GapPhasePlan {
    pub probs: Vec<Probability>,
    /// Number of circular bins, `⌊log2 Δ̇⌋`.
    pub bins: u64,
    pub x: i64,
    pub y: i64,
    /// First bin and length of the longest circular run of empty bins.
    pub run_start: u64,
    pub run_len: u64,
    /// The receiver's degree is `2^a_k`.
    pub a_k: u64,
}

impl GapPhasePlan {
    pub fn degree(&self) -> Degree {
        Degree::from_log2(self.a_k as f64)
    }
}

/// Checks `Δ ≥ 10` and `1 ≤ τ ≤ log2(Δ-1)/16`, the range where the
/// bins-and-balls construction is guaranteed to find a long enough gap.
pub fn gap_hypothesis(tau: u64, delta: Delta) -> Result<(), AdversaryError> {
    if delta.log2() < 10f64.log2() {
        return Err(AdversaryError::GapHypothesis(format!("delta = {delta} is below 10")));
    }
    let log_dot = delta.minus_one().log2();
    if tau == 0 || tau as f64 > log_dot / 16.0 {
        return Err(AdversaryError::GapHypothesis(format!(
            "tau = {tau} exceeds log2(delta - 1) / 16 = {:.4} for delta = {delta}",
            log_dot / 16.0
        )));
    }
    Ok(())
}

/// Places balls `⌊log2(1/p)⌋` and `⌈log2(1/p)⌉` for every phase probability
/// into `⌊log2 Δ̇⌋` circular bins, finds the longest run of empty bins and
/// puts the degree exponent `y` bins into it. The phase's transmit
/// probabilities then sit either far above or far below `1/degree`.
pub fn gap_plan(probs: &[Probability], delta: Delta) -> Result<GapPhasePlan, AdversaryError> {
    let tau = probs.len() as u64;
    gap_hypothesis(tau, delta)?;
    let (bins, ln_dot) = dot_logs(delta);
    let ln_floor = (ln_dot / tau as f64).floor();
    let lg = ln_floor.log2().floor() as i64;
    let y = lg + 1;
    let x = (bins / tau) as i64 - 3 - lg;

    let mut occupied = vec![false; bins as usize + 1];
    let wrap = |ball: i64| ((ball - 1).rem_euclid(bins as i64) + 1) as usize;
    for p in probs {
        let e = p.log_estimate();
        occupied[wrap(e.floor() as i64)] = true;
        occupied[wrap(e.ceil() as i64)] = true;
    }

    let next = |b: u64| b % bins + 1;
    let prev = |b: u64| if b == 1 { bins } else { b - 1 };
    let (mut run_start, mut run_len) = (0, 0);
    for start in 1..=bins {
        if occupied[start as usize] || !occupied[prev(start) as usize] {
            continue;
        }
        let mut len = 0;
        let mut b = start;
        while !occupied[b as usize] {
            len += 1;
            b = next(b);
        }
        if len > run_len {
            (run_start, run_len) = (start, len);
        }
    }
    if run_len < (x + y).max(1) as u64 {
        return Err(AdversaryError::GapHypothesis(format!(
            "longest empty run has {run_len} bins, fewer than x + y = {}",
            x + y
        )));
    }
    let a_k = (run_start - 1 + y as u64) % bins + 1;
    Ok(GapPhasePlan { probs: probs.to_vec(), bins, x, y, run_start, run_len, a_k })
}

/// Exponent `l*` in `0..=⌊log2 Δ̇⌋` minimizing the phase's total success
/// probability at degree `2^l*`; ties go to the smaller exponent.
pub fn argmin_degree(probs: &[Probability], delta: Delta) -> u64 {
    let (bins, _) = dot_logs(delta);
    let mut best = (0, f64::INFINITY);
    for l in 0..=bins {
        let s = ln_phase_success_sum(probs, Degree::from_log2(l as f64), false);
        if s < best.1 {
            best = (l, s);
        }
    }
    best.0
}

/// The correlated adversary against a whole cycle: degree `Δ` wherever the
/// cycle's estimate falls short of `√Δ`, degree 1 elsewhere, rotated by a
/// random shift `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftPlan {
    /// `log2 min(1/p_i, Δ)`.
    pub estimates_log2: Vec<f64>,
    pub responses: Vec<Degree>,
    /// In `1..=l`; `s = l` pairs each probability with its own response.
    pub shift: u64,
}

impl ShiftPlan {
    pub fn cycle_len(&self) -> u64 {
        self.responses.len() as u64
    }

    /// Receiver degree in round `t` (1-based).
    pub fn degree_at(&self, t: u64) -> Degree {
        let l = self.cycle_len();
        self.responses[((t - 1 + self.shift) % l) as usize]
    }
}

pub fn shift_plan(
    cycle: &[Probability],
    delta: Delta,
    rng: &mut impl Rng,
    pinned_shift: Option<u64>,
) -> ShiftPlan {
    let half = delta.log2() / 2.0;
    let estimates_log2: Vec<f64> =
        cycle.iter().map(|p| p.log_estimate().min(delta.log2())).collect();
    let responses = estimates_log2
        .iter()
        .map(|&e| if e >= half { Degree::Count(1) } else { delta.as_degree() })
        .collect();
    let l = cycle.len() as u64;
    let shift = pinned_shift.unwrap_or_else(|| rng.gen_range(1..=l));
    ShiftPlan { estimates_log2, responses, shift }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkMode {
    /// Moves at most `l` per round, toward the lower success probability.
    Deterministic,
    /// Random step size with mean `⌊l⌋`, direction toward lower success.
    Restricted,
    /// Random step size with mean `⌊l⌋`, random direction.
    Random,
}

impl WalkMode {
    pub fn name(self) -> &'static str {
        match self {
            WalkMode::Deterministic => "deterministic",
            WalkMode::Restricted => "restricted",
            WalkMode::Random => "random",
        }
    }
}

/// Current effective degree of a receiver under a bounded-drift adversary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegreeWalkState {
    pub degree: Degree,
    pub max_degree: Degree,
    pub l: f64,
    pub mode: WalkMode,
}

/// One round of drift ahead of a round using `next_prob`.
pub fn degree_walk_step(
    state: DegreeWalkState,
    next_prob: Probability,
    rng: &mut impl Rng,
) -> DegreeWalkState {
    let span = state.l.floor().max(0.0) as i64;
    if span == 0 {
        return state;
    }
    let d = state.degree;
    let success = |deg: Degree| ln_success(deg, next_prob, false);
    let moved = |step: i64| d.offset_clamped(step, state.max_degree);
    let degree = match state.mode {
        WalkMode::Deterministic => {
            let mut best = (d, success(d));
            for cand in [moved(-span), moved(span)] {
                let s = success(cand);
                if s < best.1 {
                    best = (cand, s);
                }
            }
            best.0
        }
        WalkMode::Restricted => {
            let m = rng.gen_range(0..=2 * span);
            let (down, up) = (moved(-m), moved(m));
            if success(down) <= success(up) {
                down
            } else {
                up
            }
        }
        WalkMode::Random => {
            let m = rng.gen_range(0..=2 * span);
            moved(if rng.gen::<bool>() { m } else { -m })
        }
    };
    DegreeWalkState { degree, ..state }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::phase_success_sum;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p2(k: u32) -> Probability {
        Probability::pow2(k)
    }

    #[test]
    fn gap_example_middle_probability() {
        let delta = Delta::new(65537).unwrap();
        let plan = gap_plan(&[p2(8)], delta).unwrap();
        assert_eq!((plan.x, plan.y), (10, 4));
        assert_eq!((plan.run_start, plan.run_len), (9, 15));
        assert_eq!(plan.a_k, 13);
        assert_eq!(plan.degree(), Degree::Count(8192));
        assert!(plan.a_k as i64 >= 8 + plan.y);
    }

    #[test]
    fn gap_example_half() {
        let plan = gap_plan(&[p2(1)], Delta::new(65537).unwrap()).unwrap();
        assert_eq!(plan.run_start, 2);
        assert!(plan.a_k as i64 - plan.y >= 1);
    }

    #[test]
    fn gap_phase_bound_against_rlb() {
        let delta = Delta::new(65537).unwrap();
        let p = Probability::new(1.0 / 65537.0).unwrap();
        let plan = gap_plan(&[p], delta).unwrap();
        let sum = phase_success_sum(&[p], plan.degree(), false);
        let dot = 65536f64;
        assert!(sum <= 32.0 * dot.ln() / dot, "{sum}");
    }

    #[test]
    fn gap_rejects_outside_hypothesis() {
        assert!(gap_plan(&[p2(3), p2(6)], Delta::new(65537).unwrap()).is_err());
        assert!(gap_plan(&[p2(3)], Delta::new(9).unwrap()).is_err());
    }

    #[test]
    fn argmin_examples() {
        let delta = Delta::new(1025).unwrap();
        assert_eq!(argmin_degree(&[p2(1)], delta), 10);
        assert_eq!(argmin_degree(&[p2(10)], delta), 0);
    }

    #[test]
    fn shift_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plan = shift_plan(&[p2(1), p2(4)], Delta::new(16).unwrap(), &mut rng, Some(2));
        assert_eq!(plan.estimates_log2, vec![1.0, 4.0]);
        assert_eq!(plan.responses, vec![Degree::Count(16), Degree::Count(1)]);
        assert_eq!(plan.degree_at(1), Degree::Count(16));
        assert_eq!(plan.degree_at(2), Degree::Count(1));
        assert_eq!(plan.degree_at(3), Degree::Count(16));
        let drawn = shift_plan(&[p2(1), p2(4)], Delta::new(16).unwrap(), &mut rng, None);
        assert!((1..=2).contains(&drawn.shift));
    }

    #[test]
    fn walk_dodges_peak() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let state = DegreeWalkState {
            degree: Degree::Count(100),
            max_degree: Degree::Count(1000),
            l: 10.0,
            mode: WalkMode::Deterministic,
        };
        let next = degree_walk_step(state, Probability::new(0.01).unwrap(), &mut rng);
        // success at 110 is 0.36781, at 90 it is 0.36794
        assert_eq!(next.degree, Degree::Count(110));
        let frozen = DegreeWalkState { l: 0.0, ..state };
        assert_eq!(degree_walk_step(frozen, Probability::new(0.01).unwrap(), &mut rng), frozen);
    }
}
