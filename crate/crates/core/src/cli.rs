//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::engine::{csv_row, run_scenario_trials, Scenario, Stats, CSV_HEADER};
use crate::fit::{fit_csv, Predictor};
use crate::format::fmt_g17;
use crate::gadgets::{chained_gadgets, double_star, star_gadget};
use crate::oracle::{
    exact_success_prob, interval_min_bound, phase_success_sum, prosing_bound, weierstrass_bounds,
    RoundSuccessQuery,
};
use crate::schedules::Algorithm;
use crate::units::{parse_tau, tau_label, Degree, Delta, Probability};

#[derive(Debug, Parser)]
#[command(name = "dualgraph", version, about = "Broadcast simulator for dual graph radio networks")]
pub struct Cli {
    /// Worker threads for trials.
    #[arg(long, global = true, env = "DUALGRAPH_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-trial CSV path; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the normalized config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Fit log(median completion) against log(predictor) over sweep points.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        predictor: Predictor,
        /// Graph diameter for the `global` predictor.
        #[arg(long)]
        diameter: Option<f64>,
    },
    /// Evaluate closed-form probabilities.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Print a benchmark graph in the text format.
    #[command(subcommand)]
    Gadget(GadgetCommand),
    /// Print an algorithm's probability cycle as CSV.
    Schedule {
        algorithm: Algorithm,
        /// Integer or `log2:<exponent>`.
        delta: Delta,
        /// Positive integer or `inf`.
        #[arg(value_parser = parse_tau)]
        tau: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Single-round success with `d` transmitting neighbors.
    Exact {
        d: u64,
        p: f64,
        #[arg(action = clap::ArgAction::Set)]
        receiver_has_message: bool,
    },
    /// `(p d) / (2e)^(p d)`.
    Prosing { d: u64, p: f64 },
    /// Minimum of the exact success at the interval's endpoints.
    Interval {
        d1: u64,
        d2: u64,
        p: f64,
        #[arg(action = clap::ArgAction::Set, default_value_t = false)]
        receiver_has_message: bool,
    },
    /// Lower and upper bound on `Π (1 - x_i)`.
    Wpi {
        #[arg(required = true)]
        xs: Vec<f64>,
    },
    /// Sum of per-round success over a phase at a fixed degree.
    Phase {
        d: u64,
        #[arg(required = true)]
        ps: Vec<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum GadgetCommand {
    Star { delta: u64, n: u64 },
    DoubleStar { delta: u64 },
    Chained { delta: u64, d: u64 },
}

pub fn main_with(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().context("building the worker pool")?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, seed, out, print_config } => cmd_run(&config, seed, out, print_config),
        Command::Fit { csv, predictor, diameter } => cmd_fit(&csv, predictor, diameter),
        Command::Oracle(sub) => cmd_oracle(sub),
        Command::Gadget(sub) => cmd_gadget(sub),
        Command::Schedule { algorithm, delta, tau } => {
            print!("{}", algorithm.schedule(delta, tau)?.to_csv());
            Ok(())
        }
    }
}

pub const SUMMARY_HEADER: &str = "point,problem,algo,engine,delta_log2,tau,adversary,trials,completed,success_rate,wilson_lo,wilson_hi,p10,p50,p90,mean_completed";

fn quantile_cell(q: Option<u64>) -> String {
    q.map_or_else(|| "inf".into(), |v| v.to_string())
}

fn summary_row(point: usize, row_prefix: &str, s: &Stats) -> String {
    format!(
        "{point},{row_prefix},{},{},{},{},{},{},{},{},{}",
        s.trials,
        s.completed,
        fmt_g17(s.success_rate),
        fmt_g17(s.wilson.0),
        fmt_g17(s.wilson.1),
        quantile_cell(s.p10),
        quantile_cell(s.p50),
        quantile_cell(s.p90),
        s.mean_completed.map(fmt_g17).unwrap_or_default(),
    )
}

/// `<out>` with its extension replaced by `summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.csv")
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_run(path: &Path, seed: Option<u64>, out: Option<PathBuf>, print_config: bool) -> Result<()> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(out) = out {
        config.output = Some(out);
    }
    if print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let points = config.expand(base_dir)?;
    let out = config.output.clone().unwrap_or_else(|| path.with_extension("csv"));
    let summary = summary_path(&out);
    let (partial, summary_partial) = (with_suffix(&out, ".partial"), with_suffix(&summary, ".partial"));

    let mut trials_csv = fs::File::create(&partial)
        .with_context(|| format!("creating {}", partial.display()))?;
    writeln!(trials_csv, "{CSV_HEADER}")?;
    let mut summary_csv = format!("{SUMMARY_HEADER}\n");
    println!("{:>5}  {:<8} {:<6} {:>10} {:>5} {:<24} {:>9} {:>10} {:>10} {:>10}",
        "point", "algo", "engine", "delta_log2", "tau", "adversary", "success", "p10", "p50", "p90");

    let mut trial_id = 0;
    for point in &points {
        let c = &point.config;
        let scenario = Scenario::new(c).with_context(|| format!("sweep point {}", point.index))?;
        let set = run_scenario_trials(&scenario, config.trial_count)
            .with_context(|| format!("sweep point {}", point.index))?;
        for r in &set.results {
            writeln!(trials_csv, "{}", csv_row(trial_id, c, r))?;
            trial_id += 1;
        }
        let delta_log2 = fmt_g17(scenario.delta().log2());
        let prefix = format!(
            "{},{},{},{},{},{}",
            c.problem.name(),
            c.algorithm.name(),
            c.engine.name(),
            delta_log2,
            tau_label(c.tau),
            c.adversary.label()
        );
        summary_csv.push_str(&summary_row(point.index, &prefix, &set.stats));
        summary_csv.push('\n');
        let s = &set.stats;
        println!(
            "{:>5}  {:<8} {:<6} {:>10.4} {:>5} {:<24} {:>9.4} {:>10} {:>10} {:>10}",
            point.index,
            c.algorithm.name(),
            if c.engine.name() == "materialized" { "mat" } else { "star" },
            scenario.delta().log2(),
            tau_label(c.tau),
            c.adversary.label(),
            s.success_rate,
            quantile_cell(s.p10),
            quantile_cell(s.p50),
            quantile_cell(s.p90),
        );
    }
    trials_csv.sync_all()?;
    drop(trials_csv);
    fs::write(&summary_partial, summary_csv)?;
    fs::rename(&partial, &out)?;
    fs::rename(&summary_partial, &summary)?;
    eprintln!("wrote {} and {}", out.display(), summary.display());
    Ok(())
}

fn cmd_fit(csv: &Path, predictor: Predictor, diameter: Option<f64>) -> Result<()> {
    let text = fs::read_to_string(csv).with_context(|| format!("reading {}", csv.display()))?;
    for fit in fit_csv(&text, predictor, diameter)? {
        println!("group {}", fit.group);
        println!("exponent {}", fmt_g17(fit.exponent));
        println!("intercept {}", fmt_g17(fit.intercept));
        println!("residual {}", fmt_g17(fit.residual));
        println!("points {}", fit.points.len());
    }
    Ok(())
}

fn probability(p: f64) -> Result<Probability> {
    Ok(Probability::new(p)?)
}

fn cmd_oracle(sub: OracleCommand) -> Result<()> {
    match sub {
        OracleCommand::Exact { d, p, receiver_has_message } => {
            if !(0.0..=1.0).contains(&p) {
                bail!("probability {p} outside [0, 1]");
            }
            let v = exact_success_prob(&RoundSuccessQuery { degree: d, p, receiver_has_message });
            println!("{}", fmt_g17(v));
            eprintln!("d p (1 - p)^(d - 1 + [receiver holds the message])");
        }
        OracleCommand::Prosing { d, p } => {
            println!("{}", fmt_g17(prosing_bound(d, p)?));
            eprintln!("(p d) / (2e)^(p d), valid for p <= 1/2");
        }
        OracleCommand::Interval { d1, d2, p, receiver_has_message } => {
            println!("{}", fmt_g17(interval_min_bound(d1, d2, p, receiver_has_message)?));
            eprintln!("min of the exact success at d1 and d2");
        }
        OracleCommand::Wpi { xs } => {
            let (lo, hi) = weierstrass_bounds(&xs)?;
            println!("{} {}", fmt_g17(lo), fmt_g17(hi));
            eprintln!("1 - sum x_i <= prod (1 - x_i) <= 1 - sum x_i + sum_{{i<j}} x_i x_j");
        }
        OracleCommand::Phase { d, ps } => {
            let ps = ps.into_iter().map(probability).collect::<Result<Vec<_>>>()?;
            println!("{}", fmt_g17(phase_success_sum(&ps, Degree::Count(d), false)));
            eprintln!("sum over the phase of d p_i (1 - p_i)^(d - 1)");
        }
    }
    Ok(())
}

fn cmd_gadget(sub: GadgetCommand) -> Result<()> {
    let gadget = match sub {
        GadgetCommand::Star { delta, n } => star_gadget(delta, n)?,
        GadgetCommand::DoubleStar { delta } => double_star(delta)?,
        GadgetCommand::Chained { delta, d } => chained_gadgets(delta, d)?,
    };
    print!("{}", gadget.graph.to_text());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn summary_path_keeps_stem() {
        assert_eq!(summary_path(Path::new("out/results.csv")), PathBuf::from("out/results.summary.csv"));
    }
}
