//! Fading adversaries.
//!
//! An adversary picks, every round, which unreliable edges are up. It may
//! only replace the distribution it samples from once every `τ` rounds and
//! only sees the public history (who transmitted, who received), never the
//! nodes' coins.
//!
//! Policies come in two flavors: [`EdgeAdversary`] chooses edge subsets on
//! a materialized graph, [`DegreeAdversary`] chooses the effective degree
//! of a single receiver. [`RealizedDegree`] turns the second into the first
//! on star-shaped gadgets.

mod plans;
mod policies;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use plans::{
    argmin_degree, degree_walk_step, gap_hypothesis, gap_plan, shift_plan, DegreeWalkState, GapPhasePlan,
    ShiftPlan, WalkMode,
};
pub use policies::{
    activation_round, ChainedGapController, IidDegree, IidEdges, PlannedDegree, RealizedDegree, ShiftDegree,
    StaticDegree, StaticEdges, WalkDegree,
};

use crate::gadgets::{Gadget, GadgetKind};
use crate::model::{DualGraph, NodeId};
use crate::rng::AdversaryRng;
use crate::schedules::Schedule;
use crate::units::{tau_label, Degree, Delta, TAU_INFINITE};

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("gap construction not applicable: {0}")]
    GapHypothesis(String),
    #[error("{kind} needs {need}")]
    Unsupported { kind: String, need: String },
    #[error("edge probability {0} outside [0, 1]")]
    EdgeProb(f64),
    #[error("stability factor must be at least 1")]
    ZeroTau,
    #[error("step budget l must be finite and non-negative, got {0}")]
    StepBudget(f64),
}

/// One round of public history.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub transmitters: Vec<NodeId>,
    /// `(receiver, sender)` pairs.
    pub receptions: Vec<(NodeId, NodeId)>,
}

/// What an adversary may look at: past rounds' transmitters and
/// receptions, and when each node first held the message.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableHistory {
    rounds_elapsed: u64,
    informed_at: Vec<Option<u64>>,
    log: Option<Vec<RoundRecord>>,
}

impl ObservableHistory {
    /// `initially_informed` nodes hold the message before round 1 (recorded
    /// as round 0). Per-round records are kept only if `keep_log`.
    pub fn new(node_count: usize, initially_informed: &[NodeId], keep_log: bool) -> Self {
        let mut informed_at = vec![None; node_count];
        for &u in initially_informed {
            informed_at[u] = Some(0);
        }
        Self { rounds_elapsed: 0, informed_at, log: keep_log.then(Vec::new) }
    }

    pub fn rounds_elapsed(&self) -> u64 {
        self.rounds_elapsed
    }

    pub fn informed_at(&self, u: NodeId) -> Option<u64> {
        self.informed_at[u]
    }

    pub fn log(&self) -> Option<&[RoundRecord]> {
        self.log.as_deref()
    }

    /// Appends the outcome of round `rounds_elapsed + 1`. Receivers that
    /// did not hold the message yet become informed.
    pub fn record(&mut self, transmitters: &[NodeId], receptions: &[(NodeId, NodeId)]) {
        self.rounds_elapsed += 1;
        let round = self.rounds_elapsed;
        for &(rx, _) in receptions {
            self.informed_at[rx].get_or_insert(round);
        }
        if let Some(log) = &mut self.log {
            log.push(RoundRecord {
                round,
                transmitters: transmitters.to_vec(),
                receptions: receptions.to_vec(),
            });
        }
    }
}

/// Inputs to a materialized adversary's choice for one round.
pub struct RoundView<'a> {
    pub graph: &'a DualGraph,
    pub schedule: &'a Schedule,
    pub round: u64,
    pub history: &'a ObservableHistory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundDraw {
    /// Dense indices of the unreliable edges that are up.
    pub extra: Vec<usize>,
    /// Whether a new distribution took effect this round.
    pub changed: bool,
}

pub trait EdgeAdversary: Send {
    fn stability(&self) -> u64;
    fn sample_round(&mut self, view: &RoundView<'_>, rng: &mut AdversaryRng) -> RoundDraw;
    /// Shift drawn by a correlated policy, if any.
    fn shift(&self) -> Option<u64> {
        None
    }
}

/// Inputs to a degree-only adversary's choice for one round.
pub struct DegreeView<'a> {
    pub schedule: &'a Schedule,
    pub round: u64,
    /// Largest effective degree the receiver can have.
    pub max_degree: Degree,
    pub history: &'a ObservableHistory,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegreeDraw {
    pub degree: Degree,
    pub changed: bool,
}

pub trait DegreeAdversary: Send {
    fn stability(&self) -> u64;
    fn sample_degree(&mut self, view: &DegreeView<'_>, rng: &mut AdversaryRng) -> DegreeDraw;
    fn shift(&self) -> Option<u64> {
        None
    }
}

/// Per-edge inclusion probability of the i.i.d. policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EdgeProb {
    Fixed(f64),
    /// A fresh uniform probability for each stability block.
    PerBlockUniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Planner {
    Gap,
    Argmin,
}

/// Configuration-level description of a policy.
#[derive(Clone, Debug, PartialEq)]
pub enum AdversarySpec {
    Static { full: bool },
    IidSubset { tau: u64, edge_prob: EdgeProb },
    Gap { tau: u64 },
    Argmin { tau: u64 },
    ChainedGap { tau: u64, planner: Planner },
    CorrelatedShift { shift: Option<u64> },
    DegreeWalk { tau: u64, l: f64, mode: WalkMode },
}

impl AdversarySpec {
    pub fn label(&self) -> String {
        match self {
            AdversarySpec::Static { full: false } => "static_empty".into(),
            AdversarySpec::Static { full: true } => "static_full".into(),
            AdversarySpec::IidSubset { .. } => "iid_subset".into(),
            AdversarySpec::Gap { .. } => "gap".into(),
            AdversarySpec::Argmin { .. } => "argmin".into(),
            AdversarySpec::ChainedGap { .. } => "chained_gap".into(),
            AdversarySpec::CorrelatedShift { .. } => "correlated_shift".into(),
            AdversarySpec::DegreeWalk { mode, .. } => format!("degree_walk_{}", mode.name()),
        }
    }

    pub fn stability(&self) -> u64 {
        match *self {
            AdversarySpec::Static { .. } | AdversarySpec::CorrelatedShift { .. } => TAU_INFINITE,
            AdversarySpec::IidSubset { tau, .. }
            | AdversarySpec::Gap { tau }
            | AdversarySpec::Argmin { tau }
            | AdversarySpec::ChainedGap { tau, .. }
            | AdversarySpec::DegreeWalk { tau, .. } => tau,
        }
    }

    fn validate(&self) -> Result<(), AdversaryError> {
        if self.stability() == 0 {
            return Err(AdversaryError::ZeroTau);
        }
        match *self {
            AdversarySpec::IidSubset { edge_prob: EdgeProb::Fixed(q), .. }
                if !(0.0..=1.0).contains(&q) =>
            {
                Err(AdversaryError::EdgeProb(q))
            }
            AdversarySpec::DegreeWalk { l, .. } if !(l >= 0.0 && l.is_finite()) => {
                Err(AdversaryError::StepBudget(l))
            }
            _ => Ok(()),
        }
    }

    /// Builds the shared, immutable part of the policy. Per-trial instances
    /// come from [`PreparedAdversary::edge_policy`] or
    /// [`PreparedAdversary::degree_policy`].
    pub fn prepare(&self, delta: Delta) -> Result<PreparedAdversary, AdversaryError> {
        self.validate()?;
        if let AdversarySpec::Gap { tau } | AdversarySpec::ChainedGap { tau, planner: Planner::Gap } =
            *self
        {
            gap_hypothesis(tau, delta)?;
        }
        Ok(PreparedAdversary { spec: self.clone(), delta, cache: Arc::default() })
    }
}

impl fmt::Display for AdversarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (tau = {})", self.label(), tau_label(self.stability()))
    }
}

/// A validated spec plus plan caches shared by all trials of one
/// configuration.
#[derive(Clone, Debug)]
pub struct PreparedAdversary {
    spec: AdversarySpec,
    delta: Delta,
    cache: Arc<policies::PlanCache>,
}

impl PreparedAdversary {
    pub fn spec(&self) -> &AdversarySpec {
        &self.spec
    }

    /// Policy choosing the receiver's degree directly.
    pub fn degree_policy(&self) -> Result<Box<dyn DegreeAdversary>, AdversaryError> {
        let tau = self.spec.stability();
        Ok(match self.spec {
            AdversarySpec::Static { full } => Box::new(StaticDegree::new(full)),
            AdversarySpec::IidSubset { edge_prob, .. } => Box::new(IidDegree::new(tau, edge_prob)),
            AdversarySpec::Gap { .. } => {
                Box::new(PlannedDegree::new(tau, Planner::Gap, self.delta, self.cache.clone()))
            }
            AdversarySpec::Argmin { .. } => {
                Box::new(PlannedDegree::new(tau, Planner::Argmin, self.delta, self.cache.clone()))
            }
            AdversarySpec::CorrelatedShift { shift } => Box::new(ShiftDegree::new(self.delta, shift)),
            AdversarySpec::DegreeWalk { l, mode, .. } => {
                Box::new(WalkDegree::new(tau, l, mode, self.delta, self.cache.clone()))
            }
            AdversarySpec::ChainedGap { .. } => {
                return Err(AdversaryError::Unsupported {
                    kind: self.spec.label(),
                    need: "a materialized chained gadget".into(),
                })
            }
        })
    }

    /// Policy over a materialized graph. Degree policies are realized on
    /// the gadget's receiver; i.i.d. and static policies act on every
    /// unreliable edge.
    pub fn edge_policy(&self, gadget: Option<&Gadget>) -> Result<Box<dyn EdgeAdversary>, AdversaryError> {
        let tau = self.spec.stability();
        match self.spec {
            AdversarySpec::Static { full } => return Ok(Box::new(StaticEdges::new(full))),
            AdversarySpec::IidSubset { edge_prob, .. } => {
                return Ok(Box::new(IidEdges::new(tau, edge_prob)))
            }
            AdversarySpec::ChainedGap { planner, .. } => {
                let g = gadget.filter(|g| g.kind == GadgetKind::Chained).ok_or_else(|| {
                    AdversaryError::Unsupported {
                        kind: self.spec.label(),
                        need: "a chained gadget graph".into(),
                    }
                })?;
                return Ok(Box::new(ChainedGapController::new(
                    tau,
                    planner,
                    self.delta,
                    g.units.clone(),
                    self.cache.clone(),
                )));
            }
            _ => {}
        }
        let unit = gadget
            .filter(|g| matches!(g.kind, GadgetKind::Star | GadgetKind::DoubleStar))
            .map(|g| g.units[0].clone())
            .ok_or_else(|| AdversaryError::Unsupported {
                kind: self.spec.label(),
                need: "a star or double star gadget".into(),
            })?;
        Ok(Box::new(RealizedDegree::new(self.degree_policy()?, unit)))
    }
}
