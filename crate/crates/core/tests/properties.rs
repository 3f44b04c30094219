use proptest::prelude::*;

use dualgraph_core::adversary::{argmin_degree, gap_plan};
use dualgraph_core::engine::{Stats, TrialResult};
use dualgraph_core::model::{build_round_topology, deliver, DualGraph, Edge, NodeOutcome, RoundResolver};
use dualgraph_core::oracle::{
    exact_success_prob, phase_success_sum, prosing_bound, weierstrass_bounds, RoundSuccessQuery,
};
use dualgraph_core::units::{parse_tau, tau_label, Degree, Delta, Probability};

/// A random dual graph on `n` nodes plus a random subset of its unreliable
/// edges and a random transmitter list (possibly with repeats).
fn scenario() -> impl Strategy<Value = (usize, Vec<(usize, usize, u8)>, Vec<usize>)> {
    (2usize..14).prop_flat_map(|n| {
        let edge = (0..n, 0..n, 0u8..4);
        (Just(n), prop::collection::vec(edge, 0..40), prop::collection::vec(0..n, 0..8))
    })
}

/// Kind 0 reliable, 1 unreliable and down, 2 and 3 unreliable and up.
fn build(n: usize, raw: &[(usize, usize, u8)]) -> (DualGraph, Vec<(usize, usize)>) {
    let mut seen = std::collections::BTreeSet::new();
    let (mut rel, mut unrel, mut up) = (Vec::new(), Vec::new(), Vec::new());
    for &(a, b, kind) in raw {
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        match kind {
            0 => rel.push((a, b)),
            k => {
                unrel.push((a, b));
                if k >= 2 {
                    up.push((a, b));
                }
            }
        }
    }
    (DualGraph::new(n, rel, unrel).unwrap(), up)
}

fn exact(degree: u64, p: f64, flag: bool) -> f64 {
    exact_success_prob(&RoundSuccessQuery { degree, p, receiver_has_message: flag })
}

fn result(completion: Option<u64>) -> TrialResult {
    TrialResult {
        seed: 0,
        completed: completion.is_some(),
        completion_round: completion,
        rounds_executed: completion.unwrap_or(1000),
        first_delivery: Vec::new(),
        distribution_changes: Vec::new(),
        shift: None,
        activations: Vec::new(),
        history: None,
    }
}

proptest! {
    #[test]
    fn resolver_matches_full_delivery((n, raw, tx) in scenario()) {
        let (graph, up) = build(n, &raw);
        let extra: Vec<_> = up.iter().map(|&(a, b)| Edge::new(a, b)).collect();
        let topology = build_round_topology(&graph, &extra, 1).unwrap();
        let full: Vec<_> = deliver(&topology, &tx).receptions().collect();
        let mut resolver = RoundResolver::new(&graph);
        let mut out = Vec::new();
        resolver.receptions(&topology, &tx, &mut out);
        prop_assert_eq!(&out, &full);
        // buffers are clean for the next round
        resolver.receptions(&topology, &tx, &mut out);
        prop_assert_eq!(out, full);
    }

    #[test]
    fn a_reception_has_exactly_one_transmitting_neighbor((n, raw, tx) in scenario()) {
        let (graph, up) = build(n, &raw);
        let extra: Vec<_> = up.iter().map(|&(a, b)| Edge::new(a, b)).collect();
        let topology = build_round_topology(&graph, &extra, 1).unwrap();
        let outcome = deliver(&topology, &tx);
        for u in 0..n {
            let senders = (0..n)
                .filter(|&w| tx.contains(&w) && topology.contains(Edge::new(u, w)) && u != w)
                .count();
            match outcome.get(u) {
                NodeOutcome::Transmitted => prop_assert!(tx.contains(&u)),
                NodeOutcome::Received(s) => {
                    prop_assert_eq!(senders, 1);
                    prop_assert!(tx.contains(&s));
                }
                NodeOutcome::Silence => prop_assert_eq!(senders, 0),
                NodeOutcome::Collision => prop_assert!(senders >= 2),
            }
        }
    }

    #[test]
    fn prosing_bound_is_below_exact(d in 1u64..5000, k in 1i32..=30) {
        let p = 0.5f64.powi(k);
        prop_assert!(prosing_bound(d, p).unwrap() <= exact(d, p, true) * (1.0 + 1e-12));
    }

    #[test]
    fn product_is_sandwiched(xs in prop::collection::vec(0.0f64..=1.0, 1..12)) {
        let (lo, hi) = weierstrass_bounds(&xs).unwrap();
        let prod: f64 = xs.iter().map(|x| 1.0 - x).product();
        prop_assert!(lo <= prod + 1e-12 && prod <= hi + 1e-12);
    }

    #[test]
    fn argmin_degree_minimizes_the_phase_sum(
        exps in prop::collection::vec(0.0f64..12.0, 1..5),
        log2_delta in 4u32..14,
    ) {
        let probs: Vec<_> = exps.iter().map(|&e| Probability::from_log2(-e).unwrap()).collect();
        let delta = Delta::new((1u64 << log2_delta) + 1).unwrap();
        let best = argmin_degree(&probs, delta);
        let at = |l: u64| phase_success_sum(&probs, Degree::from_log2(l as f64), false);
        for l in 0..=log2_delta as u64 {
            prop_assert!(at(best) <= at(l) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn gap_plan_never_beats_argmin(e in 1.0f64..16.0) {
        let delta = Delta::new((1 << 16) + 1).unwrap();
        let probs = [Probability::from_log2(-e).unwrap()];
        let plan = gap_plan(&probs, delta).unwrap();
        let argmin = Degree::from_log2(argmin_degree(&probs, delta) as f64);
        prop_assert!(
            phase_success_sum(&probs, argmin, false) <= phase_success_sum(&probs, plan.degree(), false) * (1.0 + 1e-12)
        );
        // the chosen exponent lies inside the empty run
        let offset = (plan.a_k + plan.bins - plan.run_start) % plan.bins;
        prop_assert!(offset < plan.run_len);
    }

    #[test]
    fn delta_text_round_trips(d in 2u64..u64::MAX, e in 1.0f64..10_000.0) {
        let exact: Delta = d.to_string().parse().unwrap();
        prop_assert_eq!(exact.exact(), Some(d));
        let huge: Delta = format!("log2:{e}").parse().unwrap();
        let again: Delta = huge.to_string().parse().unwrap();
        prop_assert_eq!(again.log2(), huge.log2());
    }

    #[test]
    fn tau_text_round_trips(t in 1u64..u64::MAX) {
        prop_assert_eq!(parse_tau(&tau_label(t)).unwrap(), t);
    }

    #[test]
    fn stats_ignore_trial_order(
        mut values in prop::collection::vec(prop::option::weighted(0.8, 1u64..10_000), 1..60),
        rotate in 0usize..60,
    ) {
        let a = Stats::from_results(&values.iter().copied().map(result).collect::<Vec<_>>());
        let k = rotate % values.len();
        values.rotate_left(k);
        values.reverse();
        let b = Stats::from_results(&values.iter().copied().map(result).collect::<Vec<_>>());
        prop_assert_eq!(a.completed, b.completed);
        prop_assert_eq!((a.p10, a.p50, a.p90), (b.p10, b.p50, b.p90));
        prop_assert_eq!(a.wilson, b.wilson);
        // incomplete trials count as infinitely slow
        let finished = values.iter().filter(|v| v.is_some()).count();
        prop_assert_eq!(a.p50.is_some(), 2 * finished >= values.len());
    }
}

#[test]
fn gap_plan_worked_example() {
    let delta = Delta::new((1 << 16) + 1).unwrap();
    let plan = gap_plan(&[Probability::pow2(8)], delta).unwrap();
    assert_eq!((plan.x, plan.y, plan.a_k), (10, 4, 13));
    assert_eq!(plan.degree(), Degree::Count(8192));
}
