//! Log-log scaling fits of median completion time against bound
//! expressions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::schedules::Algorithm;
use crate::units::{parse_tau, Delta, TAU_INFINITE};

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("group {group}: need at least 4 sweep points with a finite median, got {got}")]
    TooFewPoints { group: String, got: usize },
    #[error("predictor {predictor} needs {need}")]
    Predictor { predictor: Predictor, need: String },
    #[error("unknown predictor {0:?} (expected tau2, tau1, sqrt or global)")]
    UnknownPredictor(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Predictor {
    /// `Δ^(1/τ) τ² / log Δ`
    Tau2,
    /// `Δ^(1/τ) τ / log Δ`
    Tau1,
    /// `√Δ / l` with `l` the algorithm's cycle length.
    Sqrt,
    /// `D Δ^(1/τ) τ² / log Δ`
    Global,
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Predictor::Tau2 => "tau2",
            Predictor::Tau1 => "tau1",
            Predictor::Sqrt => "sqrt",
            Predictor::Global => "global",
        })
    }
}

impl FromStr for Predictor {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tau2" => Ok(Predictor::Tau2),
            "tau1" => Ok(Predictor::Tau1),
            "sqrt" => Ok(Predictor::Sqrt),
            "global" => Ok(Predictor::Global),
            _ => Err(FitError::UnknownPredictor(s.into())),
        }
    }
}

impl Predictor {
    /// Natural log of the predictor at one sweep point.
    pub fn ln_value(
        self,
        algorithm: Algorithm,
        delta: Delta,
        tau: u64,
        diameter: Option<f64>,
    ) -> Result<f64, FitError> {
        let need_tau = || FitError::Predictor { predictor: self, need: "a finite tau".into() };
        let power = |k: f64| -> Result<f64, FitError> {
            if tau == TAU_INFINITE {
                return Err(need_tau());
            }
            let t = tau as f64;
            Ok(delta.ln() / t + k * t.ln() - delta.log_2e().ln())
        };
        match self {
            Predictor::Tau2 => power(2.0),
            Predictor::Tau1 => power(1.0),
            Predictor::Global => {
                let d = diameter.ok_or(FitError::Predictor {
                    predictor: self,
                    need: "--diameter".into(),
                })?;
                Ok(d.ln() + power(2.0)?)
            }
            Predictor::Sqrt => {
                let l = algorithm
                    .schedule(delta, tau)
                    .map_err(|e| FitError::Predictor { predictor: self, need: e.to_string() })?
                    .len() as f64;
                Ok(delta.ln() / 2.0 - l.ln())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitPoint {
    pub delta: Delta,
    pub tau: u64,
    pub median: f64,
    pub ln_predictor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    /// `problem,algo,engine,adversary` of the fitted rows.
    pub group: String,
    pub exponent: f64,
    pub intercept: f64,
    /// Root mean square residual in log space.
    pub residual: f64,
    pub points: Vec<FitPoint>,
}

/// Least squares `y = a + b x`; returns `(b, a, rms residual)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    (b, a, (sse / n).sqrt())
}

struct Row {
    group: String,
    algorithm: Algorithm,
    delta_log2: String,
    tau: String,
    completion: Option<u64>,
}

fn parse_rows(csv: &str) -> Result<Vec<Row>, FitError> {
    let mut lines = csv.lines().enumerate();
    let (_, header) = lines.next().ok_or(FitError::Csv { line: 1, msg: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').collect();
    let col = |name: &str| {
        cols.iter().position(|c| *c == name).ok_or(FitError::Csv {
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    };
    let idx = [
        col("problem")?,
        col("algo")?,
        col("engine")?,
        col("adversary")?,
        col("delta_log2")?,
        col("tau")?,
        col("completion_round")?,
    ];
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| FitError::Csv { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(err(format!("expected {} fields, got {}", cols.len(), f.len())));
        }
        let algorithm: Algorithm = f[idx[1]].parse().map_err(|e| err(format!("{e}")))?;
        let completion = match f[idx[6]] {
            "" => None,
            s => Some(s.parse().map_err(|_| err(format!("bad completion_round {s:?}")))?),
        };
        rows.push(Row {
            group: format!("{},{},{},{}", f[idx[0]], f[idx[1]], f[idx[2]], f[idx[3]]),
            algorithm,
            delta_log2: f[idx[4]].into(),
            tau: f[idx[5]].into(),
            completion,
        });
    }
    Ok(rows)
}

/// Median with unfinished trials counted as infinite (lower median for
/// even counts).
fn median(mut values: Vec<Option<u64>>) -> Option<f64> {
    values.sort_by_key(|v| v.unwrap_or(u64::MAX));
    values[(values.len() - 1) / 2].map(|v| v as f64)
}

/// Fits every `(problem, algo, engine, adversary)` group of a per-trial CSV.
pub fn fit_csv(csv: &str, predictor: Predictor, diameter: Option<f64>) -> Result<Vec<ScalingFit>, FitError> {
    let rows = parse_rows(csv)?;
    let mut groups: BTreeMap<String, BTreeMap<(String, String), (Algorithm, Vec<Option<u64>>)>> =
        BTreeMap::new();
    for r in rows {
        groups
            .entry(r.group)
            .or_default()
            .entry((r.delta_log2, r.tau))
            .or_insert_with(|| (r.algorithm, Vec::new()))
            .1
            .push(r.completion);
    }
    let mut fits = Vec::new();
    for (group, points) in groups {
        let mut fit_points = Vec::new();
        for ((delta_log2, tau), (algorithm, values)) in points {
            let Some(median) = median(values) else { continue };
            let bad = |msg: String| FitError::Csv { line: 0, msg };
            let log2: f64 = delta_log2.parse().map_err(|_| bad(format!("bad delta_log2 {delta_log2:?}")))?;
            let delta = Delta::from_log2(log2).map_err(|e| bad(e.to_string()))?;
            let tau = parse_tau(&tau).map_err(|e| bad(e.to_string()))?;
            let ln_predictor = predictor.ln_value(algorithm, delta, tau, diameter)?;
            fit_points.push(FitPoint { delta, tau, median, ln_predictor });
        }
        if fit_points.len() < 4 {
            return Err(FitError::TooFewPoints { group, got: fit_points.len() });
        }
        let xs: Vec<f64> = fit_points.iter().map(|p| p.ln_predictor).collect();
        let ys: Vec<f64> = fit_points.iter().map(|p| p.median.ln()).collect();
        let (exponent, intercept, residual) = least_squares(&xs, &ys);
        fits.push(ScalingFit { group, exponent, intercept, residual, points: fit_points });
    }
    Ok(fits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::CSV_HEADER;

    /// Medians `4096^(1/τ) τ²`: exactly proportional to the `tau2`
    /// predictor at Δ = 4096.
    fn synthetic() -> String {
        let mut csv = format!("{CSV_HEADER}\n");
        let mut id = 0;
        for tau in [1u64, 2, 3, 4] {
            let m = (1u64 << (12 / tau)) * tau * tau;
            for _ in 0..3 {
                csv.push_str(&format!("{id},{id},local,frlb,materialized,12,{tau},argmin,true,{m},{m}\n"));
                id += 1;
            }
        }
        csv
    }

    #[test]
    fn proportional_medians_fit_exponent_one() {
        let fits = fit_csv(&synthetic(), Predictor::Tau2, None).unwrap();
        assert_eq!(fits.len(), 1);
        assert!((fits[0].exponent - 1.0).abs() < 1e-9, "{}", fits[0].exponent);
        assert!(fits[0].residual < 1e-9);
    }

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 1.0 * x).collect();
        let (b, a, r) = least_squares(&xs, &ys);
        assert!((b - 1.0).abs() < 1e-12 && (a - 2.0).abs() < 1e-12 && r < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let csv = synthetic();
        let short: String = csv.lines().take(7).map(|l| format!("{l}\n")).collect();
        assert!(matches!(fit_csv(&short, Predictor::Tau2, None), Err(FitError::TooFewPoints { .. })));
    }
}
