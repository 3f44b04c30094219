//! Trial execution.
//!
//! A [`TrialConfig`] is turned into a [`Scenario`] once (graph, schedule,
//! prepared adversary) and then run for any number of seeds. Two engines
//! exist: the materialized one simulates every node of the graph, the
//! analytic one only tracks the receiver's effective degree on a star-like
//! gadget and samples its per-round success from the closed form.

mod stats;

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use stats::{csv_row, run_scenario_trials, run_trials, wilson_interval, Stats, TrialSet, CSV_HEADER};

use crate::adversary::{
    activation_round, AdversaryError, AdversarySpec, DegreeView, EdgeAdversary, ObservableHistory,
    PreparedAdversary, RoundView,
};
use crate::gadgets::{chained_gadgets, double_star, star_gadget, Gadget, GadgetError};
use crate::model::{DualGraph, NodeId, RoundResolver, RoundTopology};
use crate::oracle::ln_success;
use crate::rng::{AdversaryRng, NodeRng};
use crate::schedules::{Algorithm, Schedule, ScheduleError};
use crate::units::{Degree, Delta, UnitError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Gadget(#[from] GadgetError),
    #[error(transparent)]
    Unit(#[from] UnitError),
    #[error("{0}")]
    Invalid(String),
    #[error("distribution changed in rounds {first} and {second}, less than tau = {tau} apart")]
    StabilityViolation { first: u64, second: u64, tau: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Local,
    Global,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Local => "local",
            Problem::Global => "global",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineMode {
    #[default]
    Materialized,
    AnalyticStar,
}

impl EngineMode {
    pub fn name(self) -> &'static str {
        match self {
            EngineMode::Materialized => "materialized",
            EngineMode::AnalyticStar => "analytic_star",
        }
    }
}

/// How many cycles an active node runs before it stops.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Repetitions {
    /// The algorithm's own count for the configured error bound.
    #[default]
    Auto,
    /// Never stop (until `max_rounds`).
    Unbounded,
    Cycles(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum NetworkSpec {
    Star { delta: Delta, n: Option<u64> },
    DoubleStar { delta: Delta },
    Chained { delta: Delta, d: u64 },
    Graph { graph: Arc<DualGraph>, broadcasters: Vec<NodeId>, source: NodeId },
}

impl NetworkSpec {
    /// Δ used by schedules and adversaries.
    pub fn delta(&self) -> Result<Delta, UnitError> {
        match self {
            NetworkSpec::Star { delta, .. }
            | NetworkSpec::DoubleStar { delta }
            | NetworkSpec::Chained { delta, .. } => Ok(*delta),
            NetworkSpec::Graph { graph, .. } => Delta::new((graph.max_degree() as u64).max(2)),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            NetworkSpec::Star { .. } => "star",
            NetworkSpec::DoubleStar { .. } => "double_star",
            NetworkSpec::Chained { .. } => "chained",
            NetworkSpec::Graph { .. } => "graph",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialConfig {
    pub network: NetworkSpec,
    pub problem: Problem,
    pub algorithm: Algorithm,
    /// Stability the algorithm is tuned for.
    pub tau: u64,
    pub adversary: AdversarySpec,
    pub engine: EngineMode,
    pub epsilon: f64,
    pub repetitions: Repetitions,
    pub max_rounds: Option<u64>,
    pub seed: u64,
    /// Keep the per-round public history in the result.
    pub keep_history: bool,
}

impl TrialConfig {
    pub fn new(network: NetworkSpec, algorithm: Algorithm, tau: u64, adversary: AdversarySpec) -> Self {
        let problem = if algorithm == Algorithm::Rgb { Problem::Global } else { Problem::Local };
        Self {
            network,
            problem,
            algorithm,
            tau,
            adversary,
            engine: EngineMode::Materialized,
            epsilon: 0.1,
            repetitions: Repetitions::Auto,
            max_rounds: None,
            seed: 1,
            keep_history: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub completed: bool,
    pub completion_round: Option<u64>,
    pub rounds_executed: u64,
    /// First round in which each receiver got the message.
    pub first_delivery: Vec<(NodeId, Option<u64>)>,
    /// Rounds in which a new adversary distribution took effect.
    pub distribution_changes: Vec<u64>,
    /// Shift drawn by a correlated adversary.
    pub shift: Option<u64>,
    /// Global broadcast: `(node, Time)` when a node started its cycles,
    /// with `Time` the number of elapsed rounds.
    pub activations: Vec<(NodeId, u64)>,
    pub history: Option<ObservableHistory>,
}

/// Cycles run after activation, from the algorithm's analysis.
///
/// `receivers` and `n` select the single-receiver or union-bound form.
pub fn repetition_cycles(
    algorithm: Algorithm,
    schedule: &Schedule,
    epsilon: f64,
    n: u64,
    receivers: u64,
) -> Option<u64> {
    let delta = schedule.params().delta;
    let tb = schedule.params().tau_bar as f64;
    let root = delta.root(tb);
    let eps = if receivers <= 1 { epsilon } else { epsilon / n as f64 };
    let ln_inv = (1.0 / eps).ln().ceil();
    let fast = (4.0 * root * tb / delta.log_2e()).ceil();
    match algorithm {
        Algorithm::Decay => None,
        Algorithm::Rlb => Some((2.0 * ln_inv * (4.0 * std::f64::consts::E * root).ceil()) as u64),
        Algorithm::Frlb => Some((2.0 * ln_inv * fast) as u64),
        // each repetition is FRLB(2): two cycles
        Algorithm::Rgb => Some((2.0 * (2.0 * n as f64 / epsilon).ln().ceil() * fast) as u64),
        Algorithm::Rlbc => Some(2 * rlbc_cycle_bound(schedule, epsilon)),
    }
}

/// `⌈16e ⌈ln(1/ε) Δ^(1/τ̄)⌉⌉`: the cycle count within which the
/// correlation-resistant algorithm succeeds with probability `1 - ε`.
pub fn rlbc_cycle_bound(schedule: &Schedule, epsilon: f64) -> u64 {
    let p = schedule.params();
    let root = p.delta.root(p.tau_bar as f64);
    (16.0 * std::f64::consts::E * ((1.0 / epsilon).ln() * root).ceil()).ceil() as u64
}

struct Network {
    graph: DualGraph,
    gadget: Option<Gadget>,
    broadcasters: Vec<NodeId>,
    receivers: Vec<NodeId>,
    source: NodeId,
}

/// Everything about a configuration that does not depend on the seed.
pub struct Scenario {
    config: TrialConfig,
    delta: Delta,
    schedule: Arc<Schedule>,
    adversary: PreparedAdversary,
    network: Option<Network>,
    receiver_max_degree: Degree,
    budget_cycles: Option<u64>,
    max_rounds: u64,
}

impl Scenario {
    pub fn new(config: &TrialConfig) -> Result<Self, EngineError> {
        if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
            return Err(EngineError::Invalid(format!("epsilon {} outside (0, 1)", config.epsilon)));
        }
        if config.algorithm == Algorithm::Rgb && config.problem != Problem::Global {
            return Err(EngineError::Invalid("rgb solves global broadcast only".into()));
        }
        let delta = config.network.delta()?;
        let schedule = Arc::new(config.algorithm.schedule(delta, config.tau)?);
        let adversary = config.adversary.prepare(delta)?;

        let (network, receiver_max_degree, n, receivers) = match config.engine {
            EngineMode::AnalyticStar => {
                if config.problem != Problem::Local {
                    return Err(EngineError::Invalid(
                        "the analytic engine handles local broadcast only".into(),
                    ));
                }
                let max = match &config.network {
                    NetworkSpec::Star { delta, .. } => delta.minus_one(),
                    NetworkSpec::DoubleStar { delta } => delta.as_degree(),
                    other => {
                        return Err(EngineError::Invalid(format!(
                            "the analytic engine needs a star or double star, got {}",
                            other.kind()
                        )))
                    }
                };
                let n = delta.exact().map_or(u64::MAX, |d| d + 2);
                (None, max, n, 1)
            }
            EngineMode::Materialized => {
                let net = build_network(&config.network, config.problem)?;
                let n = net.graph.node_count() as u64;
                let r = net.receivers.len() as u64;
                let max = Degree::Count(net.receivers.first().map_or(0, |&v| net.graph.potential_degree(v)) as u64);
                (Some(net), max, n, r)
            }
        };

        let budget_cycles = match config.repetitions {
            Repetitions::Auto => {
                repetition_cycles(config.algorithm, &schedule, config.epsilon, n, receivers)
            }
            Repetitions::Unbounded => None,
            Repetitions::Cycles(c) => Some(c),
        };
        let len = schedule.len() as u64;
        let max_rounds = config.max_rounds.unwrap_or_else(|| {
            let budget = budget_cycles.unwrap_or_else(|| {
                // no stopping rule: 100x the single-receiver robust bound
                let root = delta.root(schedule.params().tau_bar as f64);
                (4.0 * std::f64::consts::E * root).ceil() as u64 * (1.0 / config.epsilon).ln().ceil() as u64
            });
            let hops = match (&network, config.problem) {
                (Some(net), Problem::Global) => net.graph.reliable_diameter().unwrap_or(1) as u64 + 1,
                _ => 1,
            };
            budget.saturating_mul(len).saturating_mul(hops).saturating_mul(100)
        });
        Ok(Self {
            config: config.clone(),
            delta,
            schedule,
            adversary,
            network,
            receiver_max_degree,
            budget_cycles,
            max_rounds,
        })
    }

    pub fn config(&self) -> &TrialConfig {
        &self.config
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn delta(&self) -> Delta {
        self.delta
    }

    pub fn budget_cycles(&self) -> Option<u64> {
        self.budget_cycles
    }

    pub fn max_rounds(&self) -> u64 {
        self.max_rounds
    }

    pub fn node_count(&self) -> Option<usize> {
        self.network.as_ref().map(|n| n.graph.node_count())
    }

    pub fn run(&self, seed: u64) -> Result<TrialResult, EngineError> {
        match (self.config.engine, self.config.problem) {
            (EngineMode::AnalyticStar, _) => self.run_analytic(seed),
            (EngineMode::Materialized, Problem::Local) => self.run_local(seed),
            (EngineMode::Materialized, Problem::Global) => self.run_global(seed),
        }
    }

    /// Rounds each active node transmits for before going quiet.
    fn active_rounds(&self) -> u64 {
        self.budget_cycles.map_or(u64::MAX, |c| c.saturating_mul(self.schedule.len() as u64))
    }

    fn edge_policy(&self) -> Result<Box<dyn EdgeAdversary>, EngineError> {
        let net = self.network.as_ref().expect("materialized scenario has a network");
        Ok(self.adversary.edge_policy(net.gadget.as_ref())?)
    }

    fn run_local(&self, seed: u64) -> Result<TrialResult, EngineError> {
        let net = self.network.as_ref().expect("materialized scenario has a network");
        let graph = &net.graph;
        let mut adversary = self.edge_policy()?;
        let mut node_rng = NodeRng::new(seed);
        let mut adv_rng = AdversaryRng::new(seed);
        let mut history =
            ObservableHistory::new(graph.node_count(), &net.broadcasters, self.config.keep_history);
        let mut audit = StabilityAudit::new(adversary.stability());
        let mut resolver = RoundResolver::new(graph);
        let mut slot = vec![None; graph.node_count()];
        for (i, &rx) in net.receivers.iter().enumerate() {
            slot[rx] = Some(i);
        }
        let mut delivered: Vec<Option<u64>> = vec![None; net.receivers.len()];
        let mut pending = net.receivers.len();
        let last_round = self.max_rounds.min(self.active_rounds());
        let mut transmitters = Vec::with_capacity(net.broadcasters.len());
        let mut receptions = Vec::new();
        let mut completion = None;
        let mut round = 0;

        while round < last_round && pending > 0 {
            round += 1;
            let view = RoundView { graph, schedule: &self.schedule, round, history: &history };
            let draw = adversary.sample_round(&view, &mut adv_rng);
            audit.record(round, draw.changed)?;
            let topology = RoundTopology::from_indices(graph, draw.extra, round)
                .expect("policies only emit valid edge indices");
            let p = self.schedule.probability_at(round - 1).value();
            sample_transmitters(&net.broadcasters, p, &mut node_rng, &mut transmitters);
            resolver.receptions(&topology, &transmitters, &mut receptions);
            for &(rx, _) in &receptions {
                if let Some(i) = slot[rx] {
                    if delivered[i].is_none() {
                        delivered[i] = Some(round);
                        pending -= 1;
                    }
                }
            }
            history.record(&transmitters, &receptions);
            if pending == 0 {
                completion = Some(round);
            }
        }
        Ok(TrialResult {
            seed,
            completed: completion.is_some(),
            completion_round: completion,
            rounds_executed: round,
            first_delivery: net.receivers.iter().copied().zip(delivered).collect(),
            distribution_changes: audit.changes,
            shift: adversary.shift(),
            activations: Vec::new(),
            history: self.config.keep_history.then_some(history),
        })
    }

    fn run_global(&self, seed: u64) -> Result<TrialResult, EngineError> {
        let net = self.network.as_ref().expect("materialized scenario has a network");
        let graph = &net.graph;
        let n = graph.node_count();
        let mut adversary = self.edge_policy()?;
        let mut node_rng = NodeRng::new(seed);
        let mut adv_rng = AdversaryRng::new(seed);
        let mut history = ObservableHistory::new(n, &[net.source], self.config.keep_history);
        let mut audit = StabilityAudit::new(adversary.stability());
        let mut resolver = RoundResolver::new(graph);
        let len = self.schedule.len() as u64;
        let align = 2 * len;
        let active_for = self.active_rounds();

        // Holders in activation order with their start rounds. Starts are
        // non-decreasing, so the nodes active in a round form a contiguous
        // window, and since every start is 1 mod the cycle length they all
        // use the same probability.
        let mut holders = vec![net.source];
        let mut starts = vec![activation_round(0, align)];
        let mut activations = vec![(net.source, starts[0] - 1)];
        let mut delivered: Vec<Option<u64>> = vec![None; n];
        delivered[net.source] = Some(0);
        let mut informed = 1;
        let mut expired = 0;
        let mut transmitters = Vec::new();
        let mut receptions = Vec::new();
        let mut completion = None;
        let mut round = 0;

        while round < self.max_rounds && informed < n {
            // nothing left to happen once the last holder has finished
            if starts.last().unwrap().saturating_add(active_for) <= round + 1 {
                break;
            }
            round += 1;
            let view = RoundView { graph, schedule: &self.schedule, round, history: &history };
            let draw = adversary.sample_round(&view, &mut adv_rng);
            audit.record(round, draw.changed)?;
            let topology = RoundTopology::from_indices(graph, draw.extra, round)
                .expect("policies only emit valid edge indices");
            while expired < holders.len() && starts[expired].saturating_add(active_for) <= round {
                expired += 1;
            }
            let started = starts.partition_point(|&s| s <= round);
            let active = &holders[expired.min(started)..started];
            let p = self.schedule.probability_at(round - 1).value();
            sample_transmitters(active, p, &mut node_rng, &mut transmitters);
            resolver.receptions(&topology, &transmitters, &mut receptions);
            for &(rx, _) in &receptions {
                if delivered[rx].is_none() {
                    delivered[rx] = Some(round);
                    let s = activation_round(round, align);
                    holders.push(rx);
                    starts.push(s);
                    activations.push((rx, s - 1));
                    informed += 1;
                }
            }
            history.record(&transmitters, &receptions);
            if informed == n {
                completion = Some(round);
            }
        }
        Ok(TrialResult {
            seed,
            completed: completion.is_some(),
            completion_round: completion,
            rounds_executed: round,
            first_delivery: (0..n).filter(|&u| u != net.source).map(|u| (u, delivered[u])).collect(),
            distribution_changes: audit.changes,
            shift: adversary.shift(),
            activations,
            history: self.config.keep_history.then_some(history),
        })
    }

    fn run_analytic(&self, seed: u64) -> Result<TrialResult, EngineError> {
        let mut adversary = self.adversary.degree_policy()?;
        let mut node_rng = NodeRng::new(seed);
        let mut adv_rng = AdversaryRng::new(seed);
        let mut history = ObservableHistory::new(1, &[], self.config.keep_history);
        let mut audit = StabilityAudit::new(adversary.stability());
        let last_round = self.max_rounds.min(self.active_rounds());
        let mut completion = None;
        let mut round = 0;

        while round < last_round && completion.is_none() {
            round += 1;
            let view = DegreeView {
                schedule: &self.schedule,
                round,
                max_degree: self.receiver_max_degree,
                history: &history,
            };
            let draw = adversary.sample_degree(&view, &mut adv_rng);
            audit.record(round, draw.changed)?;
            let p = self.schedule.probability_at(round - 1);
            let ln_p = ln_success(draw.degree, p, false);
            // u in (0, 1]: ln u < ln P has probability exactly P
            let u = 1.0 - node_rng.gen::<f64>();
            if u.ln() < ln_p {
                completion = Some(round);
                history.record(&[], &[(0, 0)]);
            } else {
                history.record(&[], &[]);
            }
        }
        Ok(TrialResult {
            seed,
            completed: completion.is_some(),
            completion_round: completion,
            rounds_executed: round,
            first_delivery: vec![(0, completion)],
            distribution_changes: audit.changes,
            shift: adversary.shift(),
            activations: Vec::new(),
            history: self.config.keep_history.then_some(history),
        })
    }
}

/// Each candidate transmits independently with probability `p`; gaps
/// between transmitters are drawn as geometric variables.
fn sample_transmitters(candidates: &[NodeId], p: f64, rng: &mut NodeRng, out: &mut Vec<NodeId>) {
    out.clear();
    if p >= 1.0 {
        out.extend_from_slice(candidates);
        return;
    }
    let gap = Geometric::new(p).expect("schedule probabilities lie in (0, 1]");
    let mut i = gap.sample(rng);
    while i < candidates.len() as u64 {
        out.push(candidates[i as usize]);
        i = i.saturating_add(1).saturating_add(gap.sample(rng));
    }
}

fn build_network(spec: &NetworkSpec, problem: Problem) -> Result<Network, EngineError> {
    let exact = |delta: &Delta| {
        delta.exact().ok_or_else(|| {
            EngineError::Invalid(format!("delta = {delta} is too large to materialize"))
        })
    };
    let gadget = match spec {
        NetworkSpec::Star { delta, n } => {
            let d = exact(delta)?;
            Some(star_gadget(d, n.unwrap_or(d + 2))?)
        }
        NetworkSpec::DoubleStar { delta } => Some(double_star(exact(delta)?)?),
        NetworkSpec::Chained { delta, d } => Some(chained_gadgets(exact(delta)?, *d)?),
        NetworkSpec::Graph { .. } => None,
    };
    let net = match (gadget, spec) {
        (Some(g), _) => Network {
            graph: g.graph.clone(),
            broadcasters: g.broadcasters.clone(),
            receivers: g.receivers.clone(),
            source: g.source,
            gadget: Some(g),
        },
        (None, NetworkSpec::Graph { graph, broadcasters, source }) => {
            let n = graph.node_count();
            if let Some(&bad) = broadcasters.iter().chain([source]).find(|&&u| u >= n) {
                return Err(EngineError::Invalid(format!("node {bad} out of range for {n} nodes")));
            }
            let receivers = match problem {
                Problem::Local => graph.reliable_neighborhood(broadcasters),
                Problem::Global => (0..n).filter(|&u| u != *source).collect(),
            };
            Network {
                graph: (**graph).clone(),
                gadget: None,
                broadcasters: broadcasters.clone(),
                receivers,
                source: *source,
            }
        }
        (None, _) => unreachable!("gadget specs always build a gadget"),
    };
    if problem == Problem::Local && net.broadcasters.is_empty() {
        return Err(EngineError::Invalid("local broadcast needs at least one broadcaster".into()));
    }
    Ok(net)
}

/// Logs distribution changes and checks they are at least `τ` apart.
struct StabilityAudit {
    tau: u64,
    changes: Vec<u64>,
}

impl StabilityAudit {
    fn new(tau: u64) -> Self {
        Self { tau, changes: Vec::new() }
    }

    fn record(&mut self, round: u64, changed: bool) -> Result<(), EngineError> {
        if !changed {
            return Ok(());
        }
        if let Some(&last) = self.changes.last() {
            if round - last < self.tau {
                return Err(EngineError::StabilityViolation { first: last, second: round, tau: self.tau });
            }
        }
        self.changes.push(round);
        Ok(())
    }
}

pub fn run_local_trial(config: &TrialConfig) -> Result<TrialResult, EngineError> {
    if config.problem != Problem::Local {
        return Err(EngineError::Invalid("expected a local broadcast config".into()));
    }
    Scenario::new(config)?.run(config.seed)
}

pub fn run_global_trial(config: &TrialConfig) -> Result<TrialResult, EngineError> {
    if config.problem != Problem::Global {
        return Err(EngineError::Invalid("expected a global broadcast config".into()));
    }
    Scenario::new(config)?.run(config.seed)
}

pub fn run_analytic_star_trial(config: &TrialConfig) -> Result<TrialResult, EngineError> {
    if config.engine != EngineMode::AnalyticStar {
        return Err(EngineError::Invalid("expected engine = analytic_star".into()));
    }
    Scenario::new(config)?.run(config.seed)
}
