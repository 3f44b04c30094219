//! Running many seeds of one scenario and summarizing them.

use rayon::prelude::*;

use super::{EngineError, Scenario, TrialConfig, TrialResult};
use crate::format::fmt_g17;
use crate::units::tau_label;

pub const CSV_HEADER: &str =
    "trial_id,seed,problem,algo,engine,delta_log2,tau,adversary,completed,completion_round,rounds_executed";

/// Wilson score interval for `successes` out of `n` at `z` standard errors.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stats {
    pub trials: u64,
    pub completed: u64,
    pub success_rate: f64,
    /// 95% Wilson interval of the success rate.
    pub wilson: (f64, f64),
    /// Completion-round quantiles with unfinished trials counted as
    /// infinite; `None` means the quantile falls on an unfinished trial.
    pub p10: Option<u64>,
    pub p50: Option<u64>,
    pub p90: Option<u64>,
    /// Mean completion round over finished trials.
    pub mean_completed: Option<f64>,
}

impl Stats {
    /// Order-independent: results are sorted by completion round first.
    pub fn from_results(results: &[TrialResult]) -> Self {
        let trials = results.len() as u64;
        let mut rounds: Vec<u64> = results.iter().filter_map(|r| r.completion_round).collect();
        rounds.sort_unstable();
        let completed = rounds.len() as u64;
        let quantile = |q: f64| {
            if trials == 0 {
                return None;
            }
            let rank = ((q * trials as f64).ceil() as usize).clamp(1, trials as usize);
            rounds.get(rank - 1).copied()
        };
        let mean_completed =
            (completed > 0).then(|| rounds.iter().map(|&r| r as f64).sum::<f64>() / completed as f64);
        Self {
            trials,
            completed,
            success_rate: if trials == 0 { 0.0 } else { completed as f64 / trials as f64 },
            wilson: wilson_interval(completed, trials, 1.96),
            p10: quantile(0.1),
            p50: quantile(0.5),
            p90: quantile(0.9),
            mean_completed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrialSet {
    /// In seed order.
    pub results: Vec<TrialResult>,
    pub stats: Stats,
}

impl TrialSet {
    /// Per-trial CSV rows (no header), numbering trials from `first_id`.
    pub fn csv_rows(&self, config: &TrialConfig, first_id: u64) -> String {
        let mut out = String::new();
        for (i, r) in self.results.iter().enumerate() {
            out.push_str(&csv_row(first_id + i as u64, config, r));
            out.push('\n');
        }
        out
    }
}

pub fn csv_row(trial_id: u64, config: &TrialConfig, r: &TrialResult) -> String {
    let delta_log2 = config.network.delta().map(|d| fmt_g17(d.log2())).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        trial_id,
        r.seed,
        config.problem.name(),
        config.algorithm.name(),
        config.engine.name(),
        delta_log2,
        tau_label(config.tau),
        config.adversary.label(),
        r.completed,
        r.completion_round.map(|c| c.to_string()).unwrap_or_default(),
        r.rounds_executed,
    )
}

/// Runs seeds `config.seed, config.seed + 1, ...` in parallel on the
/// current rayon pool. Results come back in seed order regardless of
/// scheduling.
pub fn run_trials(config: &TrialConfig, trial_count: u64) -> Result<TrialSet, EngineError> {
    let scenario = Scenario::new(config)?;
    run_scenario_trials(&scenario, trial_count)
}

pub fn run_scenario_trials(scenario: &Scenario, trial_count: u64) -> Result<TrialSet, EngineError> {
    let base = scenario.config().seed;
    let results = (0..trial_count)
        .into_par_iter()
        .map(|i| scenario.run(base.wrapping_add(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let stats = Stats::from_results(&results);
    Ok(TrialSet { results, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(seed: u64, round: Option<u64>) -> TrialResult {
        TrialResult {
            seed,
            completed: round.is_some(),
            completion_round: round,
            rounds_executed: round.unwrap_or(100),
            first_delivery: vec![],
            distribution_changes: vec![],
            shift: None,
            activations: vec![],
            history: None,
        }
    }

    #[test]
    fn single_trial_stats() {
        let s = Stats::from_results(&[result(1, Some(7))]);
        assert_eq!((s.trials, s.completed), (1, 1));
        assert_eq!((s.p10, s.p50, s.p90), (Some(7), Some(7), Some(7)));
        assert_eq!(s.mean_completed, Some(7.0));
    }

    #[test]
    fn incomplete_trials_are_infinite() {
        let rs: Vec<_> = (0..10).map(|i| result(i, (i < 4).then_some(i + 1))).collect();
        let s = Stats::from_results(&rs);
        assert_eq!(s.p10, Some(1));
        assert_eq!(s.p50, None);
        assert_eq!(s.mean_completed, Some(2.5));
        let mut rev = rs.clone();
        rev.reverse();
        assert_eq!(Stats::from_results(&rev), s);
    }

    #[test]
    fn wilson_width_scales_with_sqrt_n() {
        let width = |n: u64| {
            let (lo, hi) = wilson_interval(n / 2, n, 1.96);
            hi - lo
        };
        let ratio = width(1000) / width(2000);
        assert!((ratio - 2f64.sqrt()).abs() < 0.2 * 2f64.sqrt(), "{ratio}");
        let ratio4 = width(1000) / width(4000);
        assert!((ratio4 - 2.0).abs() < 0.4, "{ratio4}");
    }
}
