//! Dual graph topologies and the per-round radio delivery rule.
//!
//! A [`DualGraph`] holds the reliable edges `E` and the unreliable edges
//! `E' \ E`. Every round the adversary adds a subset of the unreliable edges
//! to `E`, giving a [`RoundTopology`]; [`deliver`] then resolves which
//! listening nodes hear exactly one transmitting neighbor.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub type NodeId = usize;

/// Unordered node pair, stored with the smaller endpoint first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(NodeId, NodeId);

impl Edge {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn endpoints(self) -> (NodeId, NodeId) {
        (self.0, self.1)
    }

    pub fn touches(self, u: NodeId) -> bool {
        self.0 == u || self.1 == u
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("graph needs at least one node")]
    Empty,
    #[error("self-loop at node {0}")]
    SelfLoop(NodeId),
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: NodeId, n: usize },
    #[error("duplicate edge {0}")]
    DuplicateEdge(Edge),
    #[error("edge {0} is listed as both reliable and unreliable")]
    Conflict(Edge),
    #[error("edge {0} is not an unreliable edge of this graph")]
    NotUnreliable(Edge),
    #[error("unreliable edge index {0} out of range")]
    EdgeIndex(usize),
    #[error("round index must be at least 1")]
    ZeroRound,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Reliable graph `G = (V, E)` inside the potential graph `G' = (V, E')`.
///
/// Unreliable edges have dense indices `0..unreliable_count()` so that
/// adversaries can address them cheaply.
#[derive(Clone, Debug, PartialEq)]
pub struct DualGraph {
    n: usize,
    reliable: Vec<Edge>,
    unreliable: Vec<Edge>,
    reliable_adj: Vec<Vec<NodeId>>,
    // (neighbor, unreliable edge index)
    unreliable_adj: Vec<Vec<(NodeId, usize)>>,
    max_degree: usize,
}

impl DualGraph {
    pub fn new(
        n: usize,
        reliable: impl IntoIterator<Item = (NodeId, NodeId)>,
        unreliable: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::Empty);
        }
        let check = |a: NodeId, b: NodeId| -> Result<Edge, ModelError> {
            for node in [a, b] {
                if node >= n {
                    return Err(ModelError::NodeOutOfRange { node, n });
                }
            }
            if a == b {
                return Err(ModelError::SelfLoop(a));
            }
            Ok(Edge::new(a, b))
        };
        let mut rel = BTreeSet::new();
        for (a, b) in reliable {
            let e = check(a, b)?;
            if !rel.insert(e) {
                return Err(ModelError::DuplicateEdge(e));
            }
        }
        let mut unrel = BTreeSet::new();
        for (a, b) in unreliable {
            let e = check(a, b)?;
            if rel.contains(&e) {
                return Err(ModelError::Conflict(e));
            }
            if !unrel.insert(e) {
                return Err(ModelError::DuplicateEdge(e));
            }
        }

        let reliable: Vec<Edge> = rel.into_iter().collect();
        let unreliable: Vec<Edge> = unrel.into_iter().collect();
        let mut reliable_adj = vec![Vec::new(); n];
        for e in &reliable {
            reliable_adj[e.0].push(e.1);
            reliable_adj[e.1].push(e.0);
        }
        let mut unreliable_adj = vec![Vec::new(); n];
        for (i, e) in unreliable.iter().enumerate() {
            unreliable_adj[e.0].push((e.1, i));
            unreliable_adj[e.1].push((e.0, i));
        }
        for adj in &mut reliable_adj {
            adj.sort_unstable();
        }
        for adj in &mut unreliable_adj {
            adj.sort_unstable();
        }
        let max_degree = (0..n)
            .map(|u| reliable_adj[u].len() + unreliable_adj[u].len())
            .max()
            .unwrap_or(0);
        Ok(Self { n, reliable, unreliable, reliable_adj, unreliable_adj, max_degree })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn reliable_edges(&self) -> &[Edge] {
        &self.reliable
    }

    pub fn unreliable_edges(&self) -> &[Edge] {
        &self.unreliable
    }

    pub fn unreliable_count(&self) -> usize {
        self.unreliable.len()
    }

    pub fn unreliable_index(&self, e: Edge) -> Option<usize> {
        self.unreliable.binary_search(&e).ok()
    }

    pub fn is_reliable(&self, e: Edge) -> bool {
        self.reliable.binary_search(&e).is_ok()
    }

    pub fn reliable_neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.reliable_adj[u]
    }

    /// Unreliable neighbors of `u` with the dense index of the connecting edge.
    pub fn unreliable_arms(&self, u: NodeId) -> &[(NodeId, usize)] {
        &self.unreliable_adj[u]
    }

    pub fn reliable_degree(&self, u: NodeId) -> usize {
        self.reliable_adj[u].len()
    }

    /// Degree of `u` in `G'`.
    pub fn potential_degree(&self, u: NodeId) -> usize {
        self.reliable_adj[u].len() + self.unreliable_adj[u].len()
    }

    /// Δ: maximum degree in `G'`.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Hop distances from `src` in `G`; unreachable nodes get `None`.
    pub fn reliable_distances(&self, src: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::from([src]);
        dist[src] = Some(0);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &w in &self.reliable_adj[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_reliable_connected(&self) -> bool {
        self.reliable_distances(0).iter().all(Option::is_some)
    }

    /// Diameter of `G`, or `None` when `G` is disconnected.
    pub fn reliable_diameter(&self) -> Option<usize> {
        let mut best = 0;
        for u in 0..self.n {
            for d in self.reliable_distances(u) {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    /// Nodes with a reliable neighbor in `set` (the receivers of a local
    /// broadcast from `set`), in ascending order.
    pub fn reliable_neighborhood(&self, set: &[NodeId]) -> Vec<NodeId> {
        let mut out = BTreeSet::new();
        for &b in set {
            out.extend(self.reliable_adj[b].iter().copied());
        }
        out.into_iter().collect()
    }

    /// Line-oriented text form: `n <count>`, then `E u v` and `U u v`.
    pub fn to_text(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for e in &self.reliable {
            out.push_str(&format!("E {} {}\n", e.0, e.1));
        }
        for e in &self.unreliable {
            out.push_str(&format!("U {} {}\n", e.0, e.1));
        }
        out
    }
}

impl FromStr for DualGraph {
    type Err = ModelError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut n = None;
        let mut reliable = Vec::new();
        let mut unreliable = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |msg: String| ModelError::Parse { line, msg };
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("not a node id: {s:?}")));
            match fields.as_slice() {
                ["n", count] if n.is_none() => n = Some(num(count)?),
                ["n", _] => return Err(bad("repeated `n` header".into())),
                [kind @ ("E" | "U"), a, b] => {
                    if n.is_none() {
                        return Err(bad("edge before the `n` header".into()));
                    }
                    let pair = (num(a)?, num(b)?);
                    if *kind == "E" {
                        reliable.push(pair);
                    } else {
                        unreliable.push(pair);
                    }
                }
                _ => return Err(bad(format!("unrecognized line {content:?}"))),
            }
        }
        let n = n.ok_or(ModelError::Parse { line: 0, msg: "missing `n` header".into() })?;
        DualGraph::new(n, reliable, unreliable)
    }
}

/// `G_r`: the reliable edges plus the adversary's choice of unreliable ones.
#[derive(Clone, Debug)]
pub struct RoundTopology<'g> {
    graph: &'g DualGraph,
    round: u64,
    // sorted, deduplicated unreliable edge indices
    extra: Vec<usize>,
}

/// Validates `extra_edges ⊆ E' \ E` and builds the round's topology.
pub fn build_round_topology<'g>(
    graph: &'g DualGraph,
    extra_edges: &[Edge],
    round: u64,
) -> Result<RoundTopology<'g>, ModelError> {
    let mut idx = Vec::with_capacity(extra_edges.len());
    for &e in extra_edges {
        idx.push(graph.unreliable_index(e).ok_or(ModelError::NotUnreliable(e))?);
    }
    RoundTopology::from_indices(graph, idx, round)
}

impl<'g> RoundTopology<'g> {
    /// Fast path for adversaries that already address edges by index.
    pub fn from_indices(
        graph: &'g DualGraph,
        mut extra: Vec<usize>,
        round: u64,
    ) -> Result<Self, ModelError> {
        if round < 1 {
            return Err(ModelError::ZeroRound);
        }
        extra.sort_unstable();
        extra.dedup();
        if let Some(&last) = extra.last() {
            if last >= graph.unreliable_count() {
                return Err(ModelError::EdgeIndex(last));
            }
        }
        Ok(Self { graph, round, extra })
    }

    pub fn graph(&self) -> &'g DualGraph {
        self.graph
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn extra_indices(&self) -> &[usize] {
        &self.extra
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.graph.is_reliable(e)
            || self.graph.unreliable_index(e).is_some_and(|i| self.extra.binary_search(&i).is_ok())
    }

    /// All edges of `E_r`, reliable ones first.
    pub fn active_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.graph
            .reliable
            .iter()
            .copied()
            .chain(self.extra.iter().map(|&i| self.graph.unreliable[i]))
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.graph.reliable_degree(u)
            + self.graph.unreliable_adj[u]
                .iter()
                .filter(|(_, i)| self.extra.binary_search(i).is_ok())
                .count()
    }
}

/// What a node observes at the end of a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeOutcome {
    Received(NodeId),
    Silence,
    Collision,
    Transmitted,
}

impl NodeOutcome {
    /// What the node itself can tell: a message or nothing. Silence and
    /// collision look the same.
    pub fn heard(self) -> Option<NodeId> {
        match self {
            NodeOutcome::Received(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeliveryOutcome {
    outcomes: Vec<NodeOutcome>,
}

impl DeliveryOutcome {
    pub fn get(&self, u: NodeId) -> NodeOutcome {
        self.outcomes[u]
    }

    pub fn outcomes(&self) -> &[NodeOutcome] {
        &self.outcomes
    }

    /// `(receiver, sender)` for every successful reception.
    pub fn receptions(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.outcomes.iter().enumerate().filter_map(|(u, o)| o.heard().map(|s| (u, s)))
    }
}

/// Resolves one round. A listening node receives iff exactly one of its
/// `E_r` neighbors transmits; transmitters learn nothing.
///
/// Panics if a transmitter id is out of range.
pub fn deliver(topology: &RoundTopology<'_>, transmitters: &[NodeId]) -> DeliveryOutcome {
    let g = topology.graph;
    let mut sending = vec![false; g.n];
    // 0, 1 or 2 (= "two or more") transmitting neighbors, plus the last seen
    let mut hits = vec![0u8; g.n];
    let mut sender = vec![0; g.n];
    let mut bump = |w: NodeId, from: NodeId, hits: &mut Vec<u8>| {
        if hits[w] < 2 {
            hits[w] += 1;
        }
        sender[w] = from;
    };
    for &t in transmitters {
        assert!(t < g.n, "transmitter {t} out of range");
        if sending[t] {
            continue;
        }
        sending[t] = true;
        for &w in &g.reliable_adj[t] {
            bump(w, t, &mut hits);
        }
    }
    for &i in &topology.extra {
        let Edge(a, b) = g.unreliable[i];
        if sending[a] {
            bump(b, a, &mut hits);
        }
        if sending[b] {
            bump(a, b, &mut hits);
        }
    }
    let outcomes = (0..g.n)
        .map(|u| match (sending[u], hits[u]) {
            (true, _) => NodeOutcome::Transmitted,
            (false, 0) => NodeOutcome::Silence,
            (false, 1) => NodeOutcome::Received(sender[u]),
            _ => NodeOutcome::Collision,
        })
        .collect();
    DeliveryOutcome { outcomes }
}

/// Resolves rounds like [`deliver`] but only reports receptions, touching
/// just the transmitters' neighborhoods. Buffers are reused across rounds.
#[derive(Clone, Debug)]
pub struct RoundResolver {
    sending: Vec<bool>,
    hits: Vec<u8>,
    sender: Vec<NodeId>,
    touched: Vec<NodeId>,
    edge_up: Vec<bool>,
}

impl RoundResolver {
    pub fn new(graph: &DualGraph) -> Self {
        Self {
            sending: vec![false; graph.n],
            hits: vec![0; graph.n],
            sender: vec![0; graph.n],
            touched: Vec::new(),
            edge_up: vec![false; graph.unreliable.len()],
        }
    }

    /// Fills `out` with `(receiver, sender)` pairs sorted by receiver.
    ///
    /// Panics if a transmitter id is out of range or the resolver was built
    /// for a different graph.
    pub fn receptions(
        &mut self,
        topology: &RoundTopology<'_>,
        transmitters: &[NodeId],
        out: &mut Vec<(NodeId, NodeId)>,
    ) {
        let g = topology.graph;
        assert_eq!(self.hits.len(), g.n, "resolver built for another graph");
        out.clear();
        for &i in &topology.extra {
            self.edge_up[i] = true;
        }
        for &t in transmitters {
            assert!(t < g.n, "transmitter {t} out of range");
            if self.sending[t] {
                continue;
            }
            self.sending[t] = true;
            let reliable = g.reliable_adj[t].iter().copied();
            let extra = g.unreliable_adj[t].iter().filter(|(_, i)| self.edge_up[*i]).map(|&(w, _)| w);
            for w in reliable.chain(extra) {
                if self.hits[w] == 0 {
                    self.touched.push(w);
                }
                if self.hits[w] < 2 {
                    self.hits[w] += 1;
                }
                self.sender[w] = t;
            }
        }
        for &w in &self.touched {
            if !self.sending[w] && self.hits[w] == 1 {
                out.push((w, self.sender[w]));
            }
            self.hits[w] = 0;
        }
        self.touched.clear();
        for &t in transmitters {
            self.sending[t] = false;
        }
        for &i in &topology.extra {
            self.edge_up[i] = false;
        }
        out.sort_unstable();
    }
}
