//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualgraph_core::adversary::{
    argmin_degree, gap_hypothesis, gap_plan, shift_plan, AdversarySpec, EdgeProb, Planner, WalkMode,
};
use dualgraph_core::config::restricted_step_budget;
use dualgraph_core::engine::{
    rlbc_cycle_bound, run_trials, EngineMode, NetworkSpec, Repetitions, Stats, TrialConfig, TrialSet,
    CSV_HEADER,
};
use dualgraph_core::model::{build_round_topology, DualGraph};
use dualgraph_core::oracle::{
    brute_force_delivery_prob, exact_success_prob, interval_min_bound, phase_success_sum, prosing_bound,
    weierstrass_bounds, RoundSuccessQuery,
};
use dualgraph_core::schedules::{Algorithm, Schedule};
use dualgraph_core::units::{Degree, Delta};

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn delta(d: u64) -> Delta {
    Delta::new(d).unwrap()
}

fn star(d: u64) -> NetworkSpec {
    NetworkSpec::Star { delta: delta(d), n: None }
}

fn trials(config: &TrialConfig, n: u64) -> TrialSet {
    run_trials(config, n).unwrap_or_else(|e| panic!("trial setup failed: {e}"))
}

fn sigma(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

fn exact(degree: u64, p: f64, flag: bool) -> f64 {
    exact_success_prob(&RoundSuccessQuery { degree, p, receiver_has_message: flag })
}

fn oracle_equivalence() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for d in 1..=12usize {
        // receiver 0 with d reliable neighbors
        let graph = DualGraph::new(d + 1, (1..=d).map(|a| (0, a)), []).unwrap();
        let topology = build_round_topology(&graph, &[], 1).unwrap();
        for k in 1..=15 {
            let p = k as f64 / 16.0;
            for flag in [false, true] {
                let mut probs = vec![p; d + 1];
                probs[0] = if flag { p } else { 0.0 };
                let brute = brute_force_delivery_prob(&topology, &probs, 0).unwrap();
                worst = worst.max((brute - exact(d as u64, p, flag)).abs());
                cases += 1;
            }
        }
    }
    verdict(worst <= 1e-12, format!("{cases} cases, max |exact - brute force| = {worst:.3e}"))
}

fn prosing_grid() -> Verdict {
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for d in 1..=2000u64 {
        for k in 1..=20 {
            let p = 0.5f64.powi(k);
            let bound = prosing_bound(d, p).unwrap();
            let value = exact(d, p, true);
            if bound > value {
                violations += 1;
            }
            tightest = tightest.min(value / bound);
        }
    }
    verdict(violations == 0, format!("40000 points, {violations} violations, min exact/bound = {tightest:.4}"))
}

fn interval_property() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut probs: Vec<f64> = (1..=12).map(|k| 0.5f64.powi(k)).collect();
    probs.extend((0..20).map(|_| rng.gen_range(0.001..0.5)));
    let mut multimodal = 0;
    for &p in &probs {
        for flag in [false, true] {
            let values: Vec<f64> = (1..=5000).map(|d| exact(d, p, flag)).collect();
            // strictly rising then never rising again
            let mut falling = false;
            for w in values.windows(2) {
                if w[1] < w[0] {
                    falling = true;
                } else if falling && w[1] > w[0] * (1.0 + 1e-12) {
                    multimodal += 1;
                    break;
                }
            }
        }
    }
    let mut violations = 0;
    for _ in 0..500 {
        let d1 = rng.gen_range(1..=2000u64);
        let d2 = rng.gen_range(d1..=d1 + 2000);
        let p = rng.gen_range(0.0005..0.5);
        let flag = rng.gen::<bool>();
        let bound = interval_min_bound(d1, d2, p, flag).unwrap();
        violations += (d1..=d2).filter(|&d| exact(d, p, flag) < bound * (1.0 - 1e-12)).count();
    }
    verdict(
        multimodal == 0 && violations == 0,
        format!(
            "{} probabilities: {multimodal} with several maxima; 500 intervals: {violations} interior values below the endpoint minimum",
            probs.len()
        ),
    )
}

fn weierstrass_sandwich() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..10_000 {
        let len = rng.gen_range(1..=10);
        let xs: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
        let (lo, hi) = weierstrass_bounds(&xs).unwrap();
        let prod: f64 = xs.iter().map(|x| 1.0 - x).product();
        if !(lo <= prod + 1e-12 && prod <= hi + 1e-12) {
            violations += 1;
        }
    }
    verdict(violations == 0, format!("10000 vectors, {violations} violations"))
}

fn iid_uniform(tau: u64) -> AdversarySpec {
    AdversarySpec::IidSubset { tau, edge_prob: EdgeProb::PerBlockUniform }
}

fn rlb_upper_bound() -> Verdict {
    let n = 20_000u64;
    let mut pass = true;
    let mut parts = Vec::new();
    for tau in [1u64, 2, 3, 6] {
        let cfg = TrialConfig { epsilon: 0.1, seed: 500, ..TrialConfig::new(star(64), Algorithm::Rlb, tau, iid_uniform(tau)) };
        let set = trials(&cfg, n);
        let failure = 1.0 - set.stats.success_rate;
        let limit = 0.1 + 3.0 * sigma(0.1, n as f64);
        pass &= failure <= limit;
        parts.push(format!("tau={tau} failure {failure:.4}"));
    }
    verdict(pass, format!("{} (limit 0.1 + 3 sigma = {:.4})", parts.join(", "), 0.1 + 3.0 * sigma(0.1, n as f64)))
}

fn frlb_double_cycle() -> Verdict {
    let n = 100_000u64;
    let mut pass = true;
    let mut parts = Vec::new();
    let d = delta(64);
    for tau in [1u64, 2, 4] {
        let cfg = TrialConfig {
            repetitions: Repetitions::Cycles(2),
            seed: 600,
            ..TrialConfig::new(star(64), Algorithm::Frlb, tau, iid_uniform(tau))
        };
        let tau_bar = Algorithm::Frlb.schedule(d, tau).unwrap().params().tau_bar as f64;
        let bound = d.log_2e() / (4.0 * d.root(tau_bar) * tau_bar);
        let rate = trials(&cfg, n).stats.success_rate;
        let ok = rate >= bound - 3.0 * sigma(rate, n as f64);
        pass &= ok;
        parts.push(format!("tau={tau} success {rate:.4} vs bound {bound:.4}"));
    }
    verdict(pass, parts.join(", "))
}

fn local_lower_bound() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for exp in [8u32, 12, 16] {
        let dot = 2f64.powi(exp as i32);
        let d = delta((1u64 << exp) + 1);
        for tau in [1u64, 2] {
            let schedule = Algorithm::Rlb.schedule(d, tau).unwrap();
            let gap = gap_hypothesis(tau, d).is_ok();
            // every phase of RLB is the full cycle when tau_bar = tau
            let phase = schedule.cycle();
            let degree = if gap {
                gap_plan(phase, d).unwrap().degree()
            } else {
                Degree::from_log2(argmin_degree(phase, d) as f64)
            };
            let sum = phase_success_sum(phase, degree, false);
            let t = tau as f64;
            let phase_bound = 32.0 * dot.ln() / (dot.powf(1.0 / t) * t);

            let adversary = if gap { AdversarySpec::Gap { tau } } else { AdversarySpec::Argmin { tau } };
            let cfg = TrialConfig {
                engine: EngineMode::AnalyticStar,
                repetitions: Repetitions::Unbounded,
                seed: 700,
                ..TrialConfig::new(NetworkSpec::Star { delta: d, n: None }, Algorithm::Rlb, tau, adversary)
            };
            let stats = trials(&cfg, 1000).stats;
            let median_phases = stats.p50.map_or(f64::INFINITY, |r| r as f64 / t);
            let median_bound = dot.powf(1.0 / t) * t / (64.0 * dot.ln());
            let ok = sum <= phase_bound && median_phases >= median_bound;
            pass &= ok;
            parts.push(format!(
                "2^{exp} tau={tau} {}: phase sum {sum:.3e} <= {phase_bound:.3e}, median {median_phases:.1} >= {median_bound:.2} phases",
                if gap { "gap" } else { "argmin" }
            ));
        }
    }
    verdict(pass, parts.join("; "))
}

fn shift_cycles(d: Delta) -> Vec<Schedule> {
    let mut out = vec![Algorithm::Decay.schedule(d, 1).unwrap()];
    for tau in 1..=d.ceil_log2() {
        out.push(Algorithm::Rlb.schedule(d, tau).unwrap());
        if let Ok(s) = Algorithm::Frlb.schedule(d, tau) {
            out.push(s);
        }
    }
    out
}

fn correlated_shift() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut steps = 0;
    let mut bad = 0;
    for dv in [256u64, 4096] {
        let d = delta(dv);
        let half = d.log2() / 2.0;
        for s in shift_cycles(d) {
            let l = s.len() as u64;
            let plan = shift_plan(s.cycle(), d, &mut rng, Some(l));
            for t in 1..=l {
                let lhs = s.probability_at(t - 1).log2() + plan.degree_at(t).log2();
                steps += 1;
                if !(lhs >= half - 1e-9 || lhs <= -half + 1e-9) {
                    bad += 1;
                }
            }
        }
    }

    let dv = 4096u64;
    let l = Algorithm::Decay.schedule(delta(dv), 1).unwrap().len() as f64;
    let needed = (dv as f64).sqrt() / (2.0 * l);
    let median_cycles = |shift: Option<u64>| {
        let cfg = TrialConfig {
            repetitions: Repetitions::Unbounded,
            seed: 800,
            ..TrialConfig::new(
                NetworkSpec::DoubleStar { delta: delta(dv) },
                Algorithm::Decay,
                1,
                AdversarySpec::CorrelatedShift { shift },
            )
        };
        let stats = trials(&cfg, 1000).stats;
        stats.p50.map_or(f64::INFINITY, |r| r as f64 / l)
    };
    let uniform = median_cycles(None);
    let pinned = median_cycles(Some(l as u64));
    verdict(
        bad == 0 && uniform >= needed,
        format!(
            "{steps} aligned steps, {bad} inside (1/sqrt(D), sqrt(D)); Decay median {uniform:.2} cycles with uniform shift, {pinned:.2} with shift = l (need >= {needed:.2})"
        ),
    )
}

fn global_rgb() -> Verdict {
    let net = || NetworkSpec::Chained { delta: delta(257), d: 24 };
    let tau = 2;
    let base = |adversary| TrialConfig { epsilon: 0.1, seed: 900, ..TrialConfig::new(net(), Algorithm::Rgb, tau, adversary) };
    let benign = trials(&base(AdversarySpec::Static { full: false }), 1000).stats;
    let hostile = trials(&base(AdversarySpec::ChainedGap { tau, planner: Planner::Argmin }), 1000).stats;
    let median = |s: &Stats| s.p50.map_or(f64::INFINITY, |r| r as f64);
    let (mb, mh) = (median(&benign), median(&hostile));
    let schedule = Algorithm::Rgb.schedule(delta(257), tau).unwrap();
    let planned = 1u64 << argmin_degree(schedule.cycle(), delta(257));
    let completion_ok = benign.success_rate >= 0.9;
    verdict(
        completion_ok && mh >= 2.0 * mb,
        format!(
            "benign completion {:.3} (need >= 0.9), median {mb}; chained controller (planned degree {planned}) completion {:.3}, median {mh} (need >= {})",
            benign.success_rate,
            hostile.success_rate,
            2.0 * mb
        ),
    )
}

fn rlbc_restricted() -> Verdict {
    let d: Delta = "log2:4885".parse().unwrap();
    let tau = 1000;
    let l = restricted_step_budget(d, tau);
    let schedule = Algorithm::Rlbc.schedule(d, tau).unwrap();
    let eps = 0.2;
    let cycles = rlbc_cycle_bound(&schedule, eps);
    let cfg = TrialConfig {
        engine: EngineMode::AnalyticStar,
        epsilon: eps,
        repetitions: Repetitions::Cycles(cycles),
        seed: 1000,
        ..TrialConfig::new(
            NetworkSpec::Star { delta: d, n: None },
            Algorithm::Rlbc,
            tau,
            AdversarySpec::DegreeWalk { tau, l, mode: WalkMode::Restricted },
        )
    };
    let n = 200.0;
    let stats = trials(&cfg, n as u64).stats;
    let need = 1.0 - eps - 3.0 * sigma(eps, n);
    verdict(
        stats.success_rate >= need,
        format!(
            "l = {l}, budget {cycles} cycles: completion {:.3} (need >= {need:.3}), median {} rounds",
            stats.success_rate,
            stats.p50.map_or("inf".into(), |r| r.to_string())
        ),
    )
}

/// Successes and rounds at risk, overall and per cycle position.
fn hazards(set: &TrialSet, len: u64) -> (Vec<(f64, f64)>, (f64, f64)) {
    let mut per = vec![(0.0, 0.0); len as usize];
    for r in &set.results {
        for t in 1..=r.rounds_executed {
            let slot = &mut per[((t - 1) % len) as usize];
            slot.1 += 1.0;
            if r.completion_round == Some(t) {
                slot.0 += 1.0;
            }
        }
    }
    let total = per.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    (per, total)
}

fn cross_engine() -> Verdict {
    let tau = 3;
    let make = |engine| TrialConfig {
        engine,
        repetitions: Repetitions::Cycles(4),
        seed: 1100,
        ..TrialConfig::new(star(8), Algorithm::Rlb, tau, iid_uniform(tau))
    };
    let len = 3;
    // enough trials for about 10^5 rounds each
    let n = 30_000;
    let analytic = hazards(&trials(&make(EngineMode::AnalyticStar), n), len);
    let material = hazards(&trials(&make(EngineMode::Materialized), n), len);
    let within = |a: (f64, f64), m: (f64, f64)| {
        let (pa, pm) = (a.0 / a.1, m.0 / m.1);
        let pooled = (a.0 + m.0) / (a.1 + m.1);
        let s = (pooled * (1.0 - pooled) * (1.0 / a.1 + 1.0 / m.1)).sqrt();
        ((pa - pm).abs() <= 3.0 * s, format!("{pa:.4}/{pm:.4}"))
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (a, m)) in analytic.0.iter().zip(&material.0).enumerate() {
        let (ok, text) = within(*a, *m);
        pass &= ok;
        parts.push(format!("position {}: {text}", i + 1));
    }
    let (ok, text) = within(analytic.1, material.1);
    pass &= ok;
    verdict(
        pass,
        format!(
            "{:.0}/{:.0} rounds; per-round success analytic/materialized overall {text}, {}",
            analytic.1 .1,
            material.1 .1,
            parts.join(", ")
        ),
    )
}

fn acceptance_csv(jobs: usize) -> String {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().unwrap();
    pool.install(|| {
        let mut out = format!("{CSV_HEADER}\n");
        let mut id = 0;
        for tau in [1u64, 3] {
            let cfg = TrialConfig { seed: 1200, ..TrialConfig::new(star(64), Algorithm::Rlb, tau, iid_uniform(tau)) };
            let set = trials(&cfg, 500);
            out.push_str(&set.csv_rows(&cfg, id));
            id += 500;
        }
        out
    })
}

fn reproducibility() -> Verdict {
    let lib_same = acceptance_csv(1) == acceptance_csv(4);

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        "seed = 5\ntrial_count = 300\n\n[graph]\nkind = \"star\"\ndelta = 16\n\n[algorithm]\nname = \"frlb\"\n\n[adversary]\nkind = \"iid_subset\"\n\n[sweep]\ntau = [1, 2]\n",
    )
    .unwrap();
    let run = |jobs: &str, name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_dualgraph"))
            .args(["run", config.to_str().unwrap(), "--jobs", jobs, "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out).unwrap()
    };
    let (a, b) = (run("1", "a.csv"), run("4", "b.csv"));
    let cli_same = a == b && !a.is_empty();
    verdict(
        lib_same && cli_same,
        format!("library CSV identical across thread counts: {lib_same}; CLI CSV identical across reruns: {cli_same}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("oracle equivalence", oracle_equivalence),
        ("single-round lower bound grid", prosing_grid),
        ("unimodality and endpoint minimum", interval_property),
        ("product sandwich", weierstrass_sandwich),
        ("RLB failure rate", rlb_upper_bound),
        ("FRLB double-cycle success", frlb_double_cycle),
        ("local lower bound trend", local_lower_bound),
        ("correlated shift", correlated_shift),
        ("global broadcast on chained gadgets", global_rgb),
        ("RLBC under restricted drift", rlbc_restricted),
        ("cross-engine agreement", cross_engine),
        ("reproducibility", reproducibility),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {} {name} ({secs:.1}s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += !v.pass as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
