//! Concrete adversary policies.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::plans::{argmin_degree, degree_walk_step, gap_plan, shift_plan, DegreeWalkState, ShiftPlan, WalkMode};
use super::{
    DegreeAdversary, DegreeDraw, DegreeView, EdgeAdversary, EdgeProb, Planner, RoundDraw, RoundView,
};
use crate::gadgets::GadgetUnit;
use crate::rng::AdversaryRng;
use crate::schedules::Schedule;
use crate::units::{Degree, Delta, Probability, TAU_INFINITE};

/// Planned degrees keyed by (planner, first cycle position, phase length).
/// Plans depend only on the public schedule, so trials share them.
#[derive(Debug, Default)]
pub struct PlanCache {
    plans: Mutex<HashMap<(Planner, u64, u64), Degree>>,
}

impl PlanCache {
    fn get(&self, planner: Planner, schedule: &Schedule, start: u64, len: u64, delta: Delta) -> Degree {
        let key = (planner, start % schedule.len() as u64, len);
        if let Some(&d) = self.plans.lock().unwrap().get(&key) {
            return d;
        }
        let probs = phase_probs(schedule, start, len);
        let degree = match planner {
            Planner::Gap => gap_plan(&probs, delta)
                .expect("gap hypothesis is checked when the policy is prepared")
                .degree(),
            Planner::Argmin => Degree::from_log2(argmin_degree(&probs, delta) as f64),
        };
        self.plans.lock().unwrap().insert(key, degree);
        degree
    }
}

fn phase_probs(schedule: &Schedule, start: u64, len: u64) -> Vec<Probability> {
    (start..start + len).map(|t| schedule.probability_at(t)).collect()
}

/// Rounds covered by one phase: `τ`, or a whole cycle when the adversary
/// never changes its mind.
fn phase_len(tau: u64, schedule: &Schedule) -> u64 {
    if tau == TAU_INFINITE {
        schedule.len() as u64
    } else {
        tau
    }
}

/// First round `t > informed` with `(t - 1) mod align = 0`: when a node
/// that got the message in round `informed` starts its cycle.
pub fn activation_round(informed: u64, align: u64) -> u64 {
    informed.div_ceil(align) * align + 1
}

fn block_of(round: u64, tau: u64) -> u64 {
    (round - 1) / tau
}

/// Degree 1 (only the reliable arm) or the full potential degree, forever.
#[derive(Debug)]
pub struct StaticDegree {
    full: bool,
}

impl StaticDegree {
    pub fn new(full: bool) -> Self {
        Self { full }
    }
}

impl DegreeAdversary for StaticDegree {
    fn stability(&self) -> u64 {
        TAU_INFINITE
    }

    fn sample_degree(&mut self, view: &DegreeView<'_>, _rng: &mut AdversaryRng) -> DegreeDraw {
        let degree = if self.full { view.max_degree } else { Degree::Count(1) };
        DegreeDraw { degree, changed: view.round == 1 }
    }
}

/// Each unreliable arm is up independently with probability `q`; `q` is
/// fixed or redrawn uniformly at every block start.
#[derive(Debug)]
pub struct IidDegree {
    tau: u64,
    edge_prob: EdgeProb,
    q: f64,
    block: Option<u64>,
}

impl IidDegree {
    pub fn new(tau: u64, edge_prob: EdgeProb) -> Self {
        Self { tau, edge_prob, q: 0.0, block: None }
    }
}

/// Returns whether the distribution changed and updates `q`.
fn iid_block(
    tau: u64,
    edge_prob: EdgeProb,
    q: &mut f64,
    block: &mut Option<u64>,
    round: u64,
    rng: &mut AdversaryRng,
) -> bool {
    let b = block_of(round, tau);
    if *block == Some(b) {
        return false;
    }
    let first = block.is_none();
    *block = Some(b);
    match edge_prob {
        EdgeProb::Fixed(fixed) => {
            *q = fixed;
            first
        }
        EdgeProb::PerBlockUniform => {
            *q = rng.gen::<f64>();
            true
        }
    }
}

impl DegreeAdversary for IidDegree {
    fn stability(&self) -> u64 {
        self.tau
    }

    fn sample_degree(&mut self, view: &DegreeView<'_>, rng: &mut AdversaryRng) -> DegreeDraw {
        let changed =
            iid_block(self.tau, self.edge_prob, &mut self.q, &mut self.block, view.round, rng);
        let degree = match view.max_degree {
            Degree::Count(m) => {
                let arms = m.saturating_sub(1);
                let up = Binomial::new(arms, self.q).expect("q in [0, 1]").sample(rng);
                Degree::Count(1 + up)
            }
            // Binomial concentration: at this size the count is q times the
            // arm count to within a negligible relative error.
            Degree::Huge { ln } if self.q > 0.0 => Degree::Huge { ln: ln + self.q.ln() },
            Degree::Huge { .. } => Degree::Count(1),
        };
        DegreeDraw { degree, changed }
    }
}

/// Holds one planned degree per phase of `τ` rounds: the gap construction
/// or the exact success minimizer.
#[derive(Debug)]
pub struct PlannedDegree {
    tau: u64,
    planner: Planner,
    delta: Delta,
    cache: Arc<PlanCache>,
    current: Option<(u64, Degree)>,
}

impl PlannedDegree {
    pub fn new(tau: u64, planner: Planner, delta: Delta, cache: Arc<PlanCache>) -> Self {
        Self { tau, planner, delta, cache, current: None }
    }
}

impl DegreeAdversary for PlannedDegree {
    fn stability(&self) -> u64 {
        self.tau
    }

    fn sample_degree(&mut self, view: &DegreeView<'_>, _rng: &mut AdversaryRng) -> DegreeDraw {
        let phase = block_of(view.round, self.tau);
        if let Some((p, degree)) = self.current {
            if p == phase {
                return DegreeDraw { degree, changed: false };
            }
        }
        let len = phase_len(self.tau, view.schedule);
        let degree = self
            .cache
            .get(self.planner, view.schedule, phase * len, len, self.delta)
            .min(view.max_degree);
        self.current = Some((phase, degree));
        DegreeDraw { degree, changed: true }
    }
}

/// The rotated cycle response of [`shift_plan`]; the shift is drawn once,
/// in round 1.
#[derive(Debug)]
pub struct ShiftDegree {
    delta: Delta,
    pinned: Option<u64>,
    plan: Option<ShiftPlan>,
}

impl ShiftDegree {
    pub fn new(delta: Delta, pinned: Option<u64>) -> Self {
        Self { delta, pinned, plan: None }
    }

    pub fn plan(&self) -> Option<&ShiftPlan> {
        self.plan.as_ref()
    }
}

impl DegreeAdversary for ShiftDegree {
    fn stability(&self) -> u64 {
        TAU_INFINITE
    }

    fn sample_degree(&mut self, view: &DegreeView<'_>, rng: &mut AdversaryRng) -> DegreeDraw {
        let changed = self.plan.is_none();
        let plan = self
            .plan
            .get_or_insert_with(|| shift_plan(view.schedule.cycle(), self.delta, rng, self.pinned));
        DegreeDraw { degree: plan.degree_at(view.round).min(view.max_degree), changed }
    }

    fn shift(&self) -> Option<u64> {
        self.plan.as_ref().map(|p| p.shift)
    }
}

/// Starts every block at the block's success-minimizing degree, then drifts
/// by at most `l` per round (or `l` in expectation) toward lower success.
#[derive(Debug)]
pub struct WalkDegree {
    tau: u64,
    l: f64,
    mode: WalkMode,
    delta: Delta,
    cache: Arc<PlanCache>,
    block: Option<u64>,
    state: Option<DegreeWalkState>,
}

impl WalkDegree {
    pub fn new(tau: u64, l: f64, mode: WalkMode, delta: Delta, cache: Arc<PlanCache>) -> Self {
        Self { tau, l, mode, delta, cache, block: None, state: None }
    }
}

impl DegreeAdversary for WalkDegree {
    fn stability(&self) -> u64 {
        self.tau
    }

    fn sample_degree(&mut self, view: &DegreeView<'_>, rng: &mut AdversaryRng) -> DegreeDraw {
        let block = block_of(view.round, self.tau);
        if self.block != Some(block) {
            self.block = Some(block);
            let len = phase_len(self.tau, view.schedule).min(view.schedule.len() as u64);
            let start = block.wrapping_mul(self.tau);
            let degree = self
                .cache
                .get(Planner::Argmin, view.schedule, start, len, self.delta)
                .min(view.max_degree);
            let state =
                DegreeWalkState { degree, max_degree: view.max_degree, l: self.l, mode: self.mode };
            self.state = Some(state);
            return DegreeDraw { degree, changed: true };
        }
        let prev = self.state.expect("state is set at block start");
        let next = degree_walk_step(prev, view.schedule.probability_at(view.round - 1), rng);
        self.state = Some(next);
        DegreeDraw { degree: next.degree, changed: false }
    }
}

/// Every unreliable edge off, or every one on.
#[derive(Debug)]
pub struct StaticEdges {
    full: bool,
}

impl StaticEdges {
    pub fn new(full: bool) -> Self {
        Self { full }
    }
}

impl EdgeAdversary for StaticEdges {
    fn stability(&self) -> u64 {
        TAU_INFINITE
    }

    fn sample_round(&mut self, view: &RoundView<'_>, _rng: &mut AdversaryRng) -> RoundDraw {
        let extra = if self.full { (0..view.graph.unreliable_count()).collect() } else { Vec::new() };
        RoundDraw { extra, changed: view.round == 1 }
    }
}

/// Every unreliable edge of the graph is up independently with
/// probability `q` each round.
#[derive(Debug)]
pub struct IidEdges {
    tau: u64,
    edge_prob: EdgeProb,
    q: f64,
    block: Option<u64>,
}

impl IidEdges {
    pub fn new(tau: u64, edge_prob: EdgeProb) -> Self {
        Self { tau, edge_prob, q: 0.0, block: None }
    }
}

impl EdgeAdversary for IidEdges {
    fn stability(&self) -> u64 {
        self.tau
    }

    fn sample_round(&mut self, view: &RoundView<'_>, rng: &mut AdversaryRng) -> RoundDraw {
        let changed =
            iid_block(self.tau, self.edge_prob, &mut self.q, &mut self.block, view.round, rng);
        let q = self.q;
        let extra = (0..view.graph.unreliable_count()).filter(|_| rng.gen::<f64>() < q).collect();
        RoundDraw { extra, changed }
    }
}

/// Picks `degree - 1` of the receiver's unreliable arms uniformly at
/// random each round (the reliable arm makes up the rest).
fn realize(unit: &GadgetUnit, degree: Degree, rng: &mut AdversaryRng, out: &mut Vec<usize>) {
    let arms = unit.receiver_arms.len();
    let k = match degree.count() {
        Some(d) => (d.saturating_sub(1) as usize).min(arms),
        None => arms,
    };
    if k == arms {
        out.extend_from_slice(&unit.receiver_arms);
    } else {
        out.extend(sample(rng, arms, k).into_iter().map(|i| unit.receiver_arms[i]));
    }
}

/// A degree policy acting on the receiver of a star or double star.
pub struct RealizedDegree {
    inner: Box<dyn DegreeAdversary>,
    unit: GadgetUnit,
}

impl RealizedDegree {
    pub fn new(inner: Box<dyn DegreeAdversary>, unit: GadgetUnit) -> Self {
        Self { inner, unit }
    }
}

impl EdgeAdversary for RealizedDegree {
    fn stability(&self) -> u64 {
        self.inner.stability()
    }

    fn sample_round(&mut self, view: &RoundView<'_>, rng: &mut AdversaryRng) -> RoundDraw {
        let max_degree = Degree::Count(1 + self.unit.receiver_arms.len() as u64);
        let dv = DegreeView {
            schedule: view.schedule,
            round: view.round,
            max_degree,
            history: view.history,
        };
        let draw = self.inner.sample_degree(&dv, rng);
        let mut extra = Vec::new();
        realize(&self.unit, draw.degree, rng, &mut extra);
        RoundDraw { extra, changed: draw.changed }
    }

    fn shift(&self) -> Option<u64> {
        self.inner.shift()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum UnitState {
    /// Holding the phase-`k` plan (1-based).
    Phase(u64),
    /// Receiver informed; the last plan stays forever.
    Frozen,
}

/// Runs the per-phase plan on each gadget of a chain, but only for the
/// gadget the message is currently crossing. Gadgets not yet reached hold
/// their phase-1 plan; once a gadget's receiver has the message, its
/// distribution never changes again.
///
/// Assumes broadcasters start their cycle at the first round `t` after
/// receipt with `(t - 1) mod 2k = 0`, as the global algorithm does.
pub struct ChainedGapController {
    tau: u64,
    planner: Planner,
    delta: Delta,
    units: Vec<GadgetUnit>,
    cache: Arc<PlanCache>,
    states: Vec<UnitState>,
    degrees: Vec<Degree>,
}

impl ChainedGapController {
    pub fn new(
        tau: u64,
        planner: Planner,
        delta: Delta,
        units: Vec<GadgetUnit>,
        cache: Arc<PlanCache>,
    ) -> Self {
        let n = units.len();
        Self {
            tau,
            planner,
            delta,
            units,
            cache,
            states: vec![UnitState::Phase(0); n],
            degrees: vec![Degree::Count(1); n],
        }
    }

    fn plan(&self, schedule: &Schedule, phase: u64, max: Degree) -> Degree {
        let len = phase_len(self.tau, schedule);
        self.cache.get(self.planner, schedule, (phase - 1) * len, len, self.delta).min(max)
    }

    /// Phase the unit should hold in `round`.
    fn target_phase(&self, unit: &GadgetUnit, view: &RoundView<'_>) -> u64 {
        let Some(informed) = view.history.informed_at(unit.arms[0]) else {
            return 1;
        };
        let align = 2 * view.schedule.len() as u64;
        let start = activation_round(informed, align);
        if view.round < start {
            1
        } else {
            1 + (view.round - start) / self.tau
        }
    }
}

impl EdgeAdversary for ChainedGapController {
    fn stability(&self) -> u64 {
        self.tau
    }

    fn sample_round(&mut self, view: &RoundView<'_>, rng: &mut AdversaryRng) -> RoundDraw {
        let mut changed = false;
        for g in 0..self.units.len() {
            let unit = &self.units[g];
            let max = Degree::Count(1 + unit.receiver_arms.len() as u64);
            match self.states[g] {
                UnitState::Frozen => {}
                _ if view.history.informed_at(unit.receiver).is_some() => {
                    self.states[g] = UnitState::Frozen;
                }
                UnitState::Phase(current) => {
                    let target = self.target_phase(unit, view);
                    if target != current {
                        self.degrees[g] = self.plan(view.schedule, target, max);
                        self.states[g] = UnitState::Phase(target);
                        changed = true;
                    }
                }
            }
        }
        let mut extra = Vec::new();
        for (unit, &degree) in self.units.iter().zip(&self.degrees) {
            realize(unit, degree, rng, &mut extra);
        }
        RoundDraw { extra, changed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::ObservableHistory;
    use crate::schedules::rlb_schedule;

    fn view<'a>(s: &'a Schedule, round: u64, max: Degree, h: &'a ObservableHistory) -> DegreeView<'a> {
        DegreeView { schedule: s, round, max_degree: max, history: h }
    }

    #[test]
    fn iid_degree_mean() {
        let s = rlb_schedule(Delta::new(5).unwrap(), 1).unwrap();
        let h = ObservableHistory::new(1, &[], false);
        let mut adv = IidDegree::new(1, EdgeProb::Fixed(0.5));
        let mut rng = AdversaryRng::new(3);
        let n = 100_000;
        let total: u64 = (1..=n)
            .map(|r| adv.sample_degree(&view(&s, r, Degree::Count(5), &h), &mut rng).degree.count().unwrap() - 1)
            .sum();
        let mean = total as f64 / n as f64;
        // Bin(4, 1/2): mean 2, sd of the mean 1/sqrt(n)
        assert!((mean - 2.0).abs() < 3.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn planned_degree_changes_once_per_phase() {
        let delta = Delta::new(65537).unwrap();
        let s = rlb_schedule(delta, 1).unwrap();
        let h = ObservableHistory::new(1, &[], false);
        let mut adv = PlannedDegree::new(3, Planner::Argmin, delta, Arc::default());
        let mut rng = AdversaryRng::new(1);
        let changes: Vec<u64> = (1..=10)
            .filter(|&r| adv.sample_degree(&view(&s, r, Degree::Count(65536), &h), &mut rng).changed)
            .collect();
        assert_eq!(changes, vec![1, 4, 7, 10]);
    }

    #[test]
    fn walk_keeps_steps_within_budget() {
        let delta = Delta::new(4096).unwrap();
        let s = rlb_schedule(delta, 12).unwrap();
        let h = ObservableHistory::new(1, &[], false);
        let mut adv = WalkDegree::new(TAU_INFINITE, 5.0, WalkMode::Deterministic, delta, Arc::default());
        let mut rng = AdversaryRng::new(9);
        let mut prev: Option<i64> = None;
        for r in 1..=500 {
            let d = adv.sample_degree(&view(&s, r, Degree::Count(4096), &h), &mut rng).degree;
            let d = d.count().unwrap() as i64;
            if let Some(p) = prev {
                assert!((d - p).abs() <= 5);
            }
            prev = Some(d);
        }
    }
}
