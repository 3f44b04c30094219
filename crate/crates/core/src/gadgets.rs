//! Benchmark topologies: the star gadget, the double star and a chain of
//! star gadgets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DualGraph, ModelError, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum GadgetError {
    #[error("star gadget needs delta >= 2, got {0}")]
    StarDelta(u64),
    #[error("star gadget with delta = {delta} needs n >= {need}, got {n}")]
    StarSize { delta: u64, n: u64, need: u64 },
    #[error("double star needs delta >= 4, got {0}")]
    DoubleStarDelta(u64),
    #[error("chained gadgets need delta >= 10 and D >= 24, got delta = {delta}, D = {d}")]
    ChainBounds { delta: u64, d: u64 },
    #[error("unknown gadget kind {0:?} (expected star, double_star or chained)")]
    UnknownKind(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GadgetKind {
    Star,
    DoubleStar,
    Chained,
}

impl fmt::Display for GadgetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GadgetKind::Star => "star",
            GadgetKind::DoubleStar => "double_star",
            GadgetKind::Chained => "chained",
        })
    }
}

impl FromStr for GadgetKind {
    type Err = GadgetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().replace('-', "_").as_str() {
            "star" => Ok(GadgetKind::Star),
            "double_star" => Ok(GadgetKind::DoubleStar),
            "chained" => Ok(GadgetKind::Chained),
            _ => Err(GadgetError::UnknownKind(s.into())),
        }
    }
}

/// One hub-and-receiver unit: `hub` reaches every arm reliably, `receiver`
/// hears arm 0 reliably and the others only over unreliable edges.
#[derive(Clone, Debug, PartialEq)]
pub struct GadgetUnit {
    pub hub: NodeId,
    pub arms: Vec<NodeId>,
    pub receiver: NodeId,
    /// Dense indices of the receiver's unreliable edges, one per arm after
    /// the first.
    pub receiver_arms: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gadget {
    pub kind: GadgetKind,
    pub graph: DualGraph,
    /// Initial message holders for local broadcast.
    pub broadcasters: Vec<NodeId>,
    pub receivers: Vec<NodeId>,
    /// Global broadcast source.
    pub source: NodeId,
    pub units: Vec<GadgetUnit>,
}

fn unit(graph: &DualGraph, hub: NodeId, arms: Vec<NodeId>, receiver: NodeId) -> GadgetUnit {
    let receiver_arms = graph.unreliable_arms(receiver).iter().map(|&(_, i)| i).collect();
    GadgetUnit { hub, arms, receiver, receiver_arms }
}

/// Star gadget on `n` nodes with maximum degree Δ.
///
/// Node 0 is the receiver `v`, node 1 the hub `u`, nodes `2..=Δ` the arms
/// `v_1..v_{Δ-1}`. `v` hears `v_1` reliably and `v_2..v_{Δ-1}` unreliably.
/// The remaining nodes form a path hanging off `u`, which keeps `G`
/// connected and gives `u` degree exactly Δ.
pub fn star_gadget(delta: u64, n: u64) -> Result<Gadget, GadgetError> {
    if delta < 2 {
        return Err(GadgetError::StarDelta(delta));
    }
    if n < delta + 2 {
        return Err(GadgetError::StarSize { delta, n, need: delta + 2 });
    }
    let (v, u) = (0usize, 1usize);
    let arms: Vec<NodeId> = (2..=delta as usize).collect();
    let mut reliable: Vec<(NodeId, NodeId)> = arms.iter().map(|&a| (u, a)).collect();
    reliable.push((arms[0], v));
    let mut prev = u;
    for t in delta as usize + 1..n as usize {
        reliable.push((prev, t));
        prev = t;
    }
    let unreliable = arms[1..].iter().map(|&a| (a, v));
    let graph = DualGraph::new(n as usize, reliable, unreliable)?;
    let mut broadcasters = vec![u];
    broadcasters.extend(&arms);
    let units = vec![unit(&graph, u, arms, v)];
    Ok(Gadget { kind: GadgetKind::Star, graph, broadcasters, receivers: vec![v], source: u, units })
}

/// Two stars sharing their arms: `u` reaches `v_1..v_Δ` reliably, `v` hears
/// `v_1` reliably and `v_2..v_Δ` unreliably. Everyone but `v` starts with
/// the message.
///
/// Node 0 is `v`, node 1 is `u`, nodes `2..=Δ+1` the arms.
pub fn double_star(delta: u64) -> Result<Gadget, GadgetError> {
    if delta < 4 {
        return Err(GadgetError::DoubleStarDelta(delta));
    }
    let (v, u) = (0usize, 1usize);
    let arms: Vec<NodeId> = (2..=delta as usize + 1).collect();
    let mut reliable: Vec<(NodeId, NodeId)> = arms.iter().map(|&a| (u, a)).collect();
    reliable.push((arms[0], v));
    let unreliable = arms[1..].iter().map(|&a| (a, v));
    let graph = DualGraph::new(delta as usize + 2, reliable, unreliable)?;
    let mut broadcasters = vec![u];
    broadcasters.extend(&arms);
    let units = vec![unit(&graph, u, arms, v)];
    Ok(Gadget {
        kind: GadgetKind::DoubleStar,
        graph,
        broadcasters,
        receivers: vec![v],
        source: u,
        units,
    })
}

/// `⌊D/3⌋` star gadgets in a row, receiver of each joined reliably to the
/// next hub; `D mod 3` extra path nodes hang off the last receiver so that
/// the reliable diameter is D.
///
/// Gadget `g` occupies nodes `g(Δ+1) ..= g(Δ+1)+Δ`: hub first, then the
/// Δ-1 arms, then the receiver. The source is the first hub.
pub fn chained_gadgets(delta: u64, d: u64) -> Result<Gadget, GadgetError> {
    if delta < 10 || d < 24 {
        return Err(GadgetError::ChainBounds { delta, d });
    }
    let count = (d / 3) as usize;
    let width = delta as usize + 1;
    let mut reliable = Vec::new();
    let mut unreliable = Vec::new();
    let mut layout = Vec::with_capacity(count);
    for g in 0..count {
        let hub = g * width;
        let arms: Vec<NodeId> = (hub + 1..hub + width - 1).collect();
        let receiver = hub + width - 1;
        reliable.extend(arms.iter().map(|&a| (hub, a)));
        reliable.push((arms[0], receiver));
        unreliable.extend(arms[1..].iter().map(|&a| (a, receiver)));
        if g + 1 < count {
            reliable.push((receiver, hub + width));
        }
        layout.push((hub, arms, receiver));
    }
    let mut prev = layout.last().unwrap().2;
    let mut n = count * width;
    for _ in 0..d % 3 {
        reliable.push((prev, n));
        prev = n;
        n += 1;
    }
    let graph = DualGraph::new(n, reliable, unreliable)?;
    let units = layout.into_iter().map(|(hub, arms, rx)| unit(&graph, hub, arms, rx)).collect();
    Ok(Gadget {
        kind: GadgetKind::Chained,
        graph,
        broadcasters: vec![0],
        receivers: (1..n).collect(),
        source: 0,
        units,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_counts() {
        let s = star_gadget(4, 6).unwrap();
        let v = s.receivers[0];
        assert_eq!(s.graph.reliable_degree(v), 1);
        assert_eq!(s.graph.unreliable_arms(v).len(), 2);
        assert_eq!(s.graph.max_degree(), 4);
        assert!(s.graph.unreliable_edges().iter().all(|e| e.touches(v)));
        assert!(s.graph.is_reliable_connected());
        assert_eq!(s.broadcasters.len(), 4);
    }

    #[test]
    fn star_size_checked() {
        assert!(matches!(star_gadget(4, 5), Err(GadgetError::StarSize { .. })));
    }

    #[test]
    fn star_is_deterministic() {
        assert_eq!(star_gadget(8, 20).unwrap().graph.to_text(), star_gadget(8, 20).unwrap().graph.to_text());
        assert_eq!(star_gadget(64, 100).unwrap().graph.max_degree(), 64);
    }

    #[test]
    fn double_star_counts() {
        let s = double_star(4).unwrap();
        assert_eq!(s.graph.node_count(), 6);
        assert_eq!(s.graph.potential_degree(s.receivers[0]), 4);
        assert!(s.graph.is_reliable_connected());
        assert_eq!(s.graph.max_degree(), s.graph.node_count() - 2);
        assert_eq!(s.broadcasters.len(), 5);
    }

    #[test]
    fn chain_shape() {
        let c = chained_gadgets(10, 24).unwrap();
        assert_eq!(c.units.len(), 8);
        let diam = c.graph.reliable_diameter().unwrap();
        assert!((22..=24).contains(&diam), "{diam}");
        assert_eq!(c.graph.reliable_degree(c.source), 9);
        assert_eq!(c.graph.max_degree(), 10);
        for e in c.graph.unreliable_edges() {
            let (a, b) = e.endpoints();
            assert_eq!(a / 11, b / 11);
        }
    }

    #[test]
    fn chain_leftover_path() {
        for d in [25u64, 26, 30] {
            let c = chained_gadgets(10, d).unwrap();
            let diam = c.graph.reliable_diameter().unwrap() as u64;
            assert!(diam <= d && diam + 2 >= d, "D {d} diameter {diam}");
        }
        assert!(chained_gadgets(9, 24).is_err());
        assert!(chained_gadgets(10, 23).is_err());
    }
}
