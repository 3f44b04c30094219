//! Experiment configuration files (TOML) and their expansion into trial
//! configurations.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::adversary::{AdversarySpec, EdgeProb, Planner, WalkMode};
use crate::engine::{EngineMode, NetworkSpec, Problem, Repetitions, TrialConfig};
use crate::model::DualGraph;
use crate::schedules::Algorithm;
use crate::units::{log_2e, parse_tau, tau_label, Delta, TAU_INFINITE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("`{key}`: {msg}")]
    Key { key: String, msg: String },
}

fn key_err(key: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError::Key { key: key.into(), msg: msg.to_string() }
}

/// Stability factor in a config: positive integer or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tau(pub u64);

impl Serialize for Tau {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        if self.0 == TAU_INFINITE {
            ser.serialize_str("inf")
        } else {
            ser.serialize_u64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Tau {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        let text = match Raw::deserialize(de)? {
            Raw::Int(t) => t.to_string(),
            Raw::Text(s) => s,
        };
        parse_tau(&text).map(Tau).map_err(serde::de::Error::custom)
    }
}

/// `"auto"`, `"unbounded"` or a cycle count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RepetitionsField(pub Repetitions);

impl Serialize for RepetitionsField {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Repetitions::Auto => ser.serialize_str("auto"),
            Repetitions::Unbounded => ser.serialize_str("unbounded"),
            Repetitions::Cycles(c) => ser.serialize_u64(c),
        }
    }
}

impl<'de> Deserialize<'de> for RepetitionsField {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Int(c) if c >= 1 => Ok(Self(Repetitions::Cycles(c))),
            Raw::Text(s) if s == "auto" => Ok(Self(Repetitions::Auto)),
            Raw::Text(s) if s == "unbounded" => Ok(Self(Repetitions::Unbounded)),
            _ => Err(serde::de::Error::custom(
                "expected \"auto\", \"unbounded\" or a positive cycle count",
            )),
        }
    }
}

/// Per-edge probability: `"uniform"` (fresh uniform value per block) or a
/// number in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeProbField(pub EdgeProb);

impl Serialize for EdgeProbField {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            EdgeProb::Fixed(q) => ser.serialize_f64(q),
            EdgeProb::PerBlockUniform => ser.serialize_str("uniform"),
        }
    }
}

impl<'de> Deserialize<'de> for EdgeProbField {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(q) => Ok(Self(EdgeProb::Fixed(q))),
            Raw::Text(s) if s == "uniform" => Ok(Self(EdgeProb::PerBlockUniform)),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected \"uniform\" or a number, got {s:?}"
            ))),
        }
    }
}

/// Drift budget of the degree walk: a number, or `"auto"` for
/// `⌊Δ^(1/(τ(1 - 1/log_2e τ)))⌋ / 4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepBudget {
    Value(f64),
    Auto,
}

impl Serialize for StepBudget {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match *self {
            StepBudget::Value(l) => ser.serialize_f64(l),
            StepBudget::Auto => ser.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for StepBudget {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(l) => Ok(StepBudget::Value(l)),
            Raw::Text(s) if s == "auto" => Ok(StepBudget::Auto),
            Raw::Text(s) => {
                Err(serde::de::Error::custom(format!("expected \"auto\" or a number, got {s:?}")))
            }
        }
    }
}

/// Largest drift a restricted adversary may have against the
/// correlation-resistant schedule: `⌊Δ^(1/(τ(1 - 1/log_2e τ)))⌋ / 4`.
pub fn restricted_step_budget(delta: Delta, tau: u64) -> f64 {
    let t = tau as f64;
    let exponent = delta.log2() / (t * (1.0 - 1.0 / log_2e(t)));
    exponent.exp2().floor() / 4.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Star,
    DoubleStar,
    Chained,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub kind: GraphKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Delta>,
    /// Star gadget size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Chained gadget target diameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub broadcasters: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub name: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Tau>,
    #[serde(default)]
    pub repetitions: RepetitionsField,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    #[default]
    StaticEmpty,
    StaticFull,
    IidSubset,
    Gap,
    Argmin,
    ChainedGap,
    CorrelatedShift,
    DegreeWalk,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    #[serde(default)]
    pub kind: AdversaryKind,
    /// Defaults to the algorithm's τ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Tau>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_prob: Option<EdgeProbField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<StepBudget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk_mode: Option<WalkMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<Planner>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<u64>,
}

/// Lists that replace the corresponding single value. A swept τ sets both
/// the algorithm's and the adversary's stability.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delta: Vec<Delta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tau: Vec<Tau>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adversary: Vec<AdversaryKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub algorithm: Vec<Algorithm>,
}

impl SweepSection {
    pub fn is_empty(&self) -> bool {
        self.delta.is_empty() && self.tau.is_empty() && self.adversary.is_empty() && self.algorithm.is_empty()
    }
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> u64 {
    100
}

fn default_epsilon() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trial_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Defaults to global for RGB and local otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<Problem>,
    #[serde(default)]
    pub engine: EngineMode,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rounds: Option<u64>,
    pub graph: GraphSection,
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub adversary: AdversarySection,
    #[serde(default, skip_serializing_if = "SweepSection::is_empty")]
    pub sweep: SweepSection,
}

/// One point of an expanded sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub config: TrialConfig,
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            if key == "." {
                ConfigError::Syntax(inner.to_string())
            } else {
                key_err(&key, inner.message())
            }
        })
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.into(), source })?;
        text.parse()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values are always representable")
    }

    /// Expands the sweep in the fixed order Δ, τ, adversary, algorithm
    /// (Δ outermost). Graph files are read relative to `base_dir`.
    pub fn expand(&self, base_dir: &std::path::Path) -> Result<Vec<SweepPoint>, ConfigError> {
        if self.trial_count == 0 {
            return Err(key_err("trial_count", "must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(key_err("epsilon", format!("{} is outside (0, 1)", self.epsilon)));
        }
        if self.max_rounds == Some(0) {
            return Err(key_err("max_rounds", "must be at least 1"));
        }
        let file_graph = self.load_graph(base_dir)?;

        let deltas: Vec<Option<Delta>> = match (&self.sweep.delta[..], self.graph.kind) {
            ([], GraphKind::File) => vec![None],
            ([], _) => vec![Some(self.graph.delta.ok_or_else(|| key_err("graph.delta", "missing"))?)],
            (_, GraphKind::File) => {
                return Err(key_err("sweep.delta", "cannot sweep delta over a graph file"))
            }
            (list, _) => list.iter().copied().map(Some).collect(),
        };
        let taus: Vec<Option<u64>> = if self.sweep.tau.is_empty() {
            vec![None]
        } else {
            self.sweep.tau.iter().map(|t| Some(t.0)).collect()
        };
        let adversaries =
            if self.sweep.adversary.is_empty() { vec![self.adversary.kind] } else { self.sweep.adversary.clone() };
        let algorithms =
            if self.sweep.algorithm.is_empty() { vec![self.algorithm.name] } else { self.sweep.algorithm.clone() };

        let mut points = Vec::new();
        for delta in &deltas {
            for &tau in &taus {
                for &kind in &adversaries {
                    for &algorithm in &algorithms {
                        let config = self.point(file_graph.as_ref(), *delta, tau, kind, algorithm)?;
                        points.push(SweepPoint { index: points.len(), config });
                    }
                }
            }
        }
        Ok(points)
    }

    fn load_graph(&self, base_dir: &std::path::Path) -> Result<Option<Arc<DualGraph>>, ConfigError> {
        if self.graph.kind != GraphKind::File {
            return Ok(None);
        }
        let rel = self.graph.path.as_ref().ok_or_else(|| key_err("graph.path", "missing"))?;
        let path = base_dir.join(rel);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| key_err("graph.path", format!("cannot read {}: {e}", path.display())))?;
        let graph: DualGraph = text.parse().map_err(|e| key_err("graph.path", e))?;
        Ok(Some(Arc::new(graph)))
    }

    fn point(
        &self,
        file_graph: Option<&Arc<DualGraph>>,
        delta: Option<Delta>,
        swept_tau: Option<u64>,
        kind: AdversaryKind,
        algorithm: Algorithm,
    ) -> Result<TrialConfig, ConfigError> {
        let network = match self.graph.kind {
            GraphKind::Star => NetworkSpec::Star { delta: delta.unwrap(), n: self.graph.n },
            GraphKind::DoubleStar => NetworkSpec::DoubleStar { delta: delta.unwrap() },
            GraphKind::Chained => NetworkSpec::Chained {
                delta: delta.unwrap(),
                d: self.graph.d.ok_or_else(|| key_err("graph.d", "missing for a chained graph"))?,
            },
            GraphKind::File => NetworkSpec::Graph {
                graph: file_graph.expect("file graphs are loaded up front").clone(),
                broadcasters: self.graph.broadcasters.clone().unwrap_or_else(|| vec![0]),
                source: self.graph.source.unwrap_or(0),
            },
        };
        let delta = network.delta().map_err(|e| key_err("graph", e))?;

        let tau = match (swept_tau, self.algorithm.tau, algorithm) {
            (Some(t), _, _) | (None, Some(Tau(t)), _) => t,
            (None, None, Algorithm::Decay) => TAU_INFINITE,
            (None, None, _) => return Err(key_err("algorithm.tau", "missing")),
        };
        let adv_tau = swept_tau.or(self.adversary.tau.map(|t| t.0)).unwrap_or(tau);
        let adversary = self.adversary_spec(kind, adv_tau, delta)?;

        let problem = self.problem.unwrap_or(if algorithm == Algorithm::Rgb {
            Problem::Global
        } else {
            Problem::Local
        });
        Ok(TrialConfig {
            network,
            problem,
            algorithm,
            tau,
            adversary,
            engine: self.engine,
            epsilon: self.epsilon,
            repetitions: self.algorithm.repetitions.0,
            max_rounds: self.max_rounds,
            seed: self.seed,
            keep_history: false,
        })
    }

    fn adversary_spec(&self, kind: AdversaryKind, tau: u64, delta: Delta) -> Result<AdversarySpec, ConfigError> {
        let a = &self.adversary;
        Ok(match kind {
            AdversaryKind::StaticEmpty => AdversarySpec::Static { full: false },
            AdversaryKind::StaticFull => AdversarySpec::Static { full: true },
            AdversaryKind::IidSubset => AdversarySpec::IidSubset {
                tau,
                edge_prob: a.edge_prob.map_or(EdgeProb::PerBlockUniform, |e| e.0),
            },
            AdversaryKind::Gap => AdversarySpec::Gap { tau },
            AdversaryKind::Argmin => AdversarySpec::Argmin { tau },
            AdversaryKind::ChainedGap => {
                AdversarySpec::ChainedGap { tau, planner: a.planner.unwrap_or(Planner::Gap) }
            }
            AdversaryKind::CorrelatedShift => AdversarySpec::CorrelatedShift { shift: a.shift },
            AdversaryKind::DegreeWalk => {
                let l = match a.l.ok_or_else(|| key_err("adversary.l", "missing for degree_walk"))? {
                    StepBudget::Value(l) => l,
                    StepBudget::Auto if tau >= 3 && tau != TAU_INFINITE => restricted_step_budget(delta, tau),
                    StepBudget::Auto => {
                        return Err(key_err(
                            "adversary.l",
                            format!("\"auto\" needs a finite tau >= 3, got {}", tau_label(tau)),
                        ))
                    }
                };
                AdversarySpec::DegreeWalk { tau, l, mode: a.walk_mode.unwrap_or(WalkMode::Restricted) }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    const BASIC: &str = r#"
seed = 7
trial_count = 10

[graph]
kind = "star"
delta = 16

[algorithm]
name = "rlb"
tau = 2

[adversary]
kind = "iid_subset"
edge_prob = "uniform"
"#;

    #[test]
    fn single_point() {
        let cfg: ExperimentConfig = BASIC.parse().unwrap();
        let points = cfg.expand(Path::new(".")).unwrap();
        assert_eq!(points.len(), 1);
        let c = &points[0].config;
        assert_eq!(c.tau, 2);
        assert_eq!(c.seed, 7);
        assert_eq!(c.adversary, AdversarySpec::IidSubset { tau: 2, edge_prob: EdgeProb::PerBlockUniform });
    }

    #[test]
    fn sweep_order_and_shared_tau() {
        let text = format!("{BASIC}\n[sweep]\ntau = [1, 2, 4, 8]\ndelta = [16, \"log2:6\"]\n");
        let cfg: ExperimentConfig = text.parse().unwrap();
        let points = cfg.expand(Path::new(".")).unwrap();
        let got: Vec<(String, u64, u64)> = points
            .iter()
            .map(|p| (p.config.network.delta().unwrap().to_string(), p.config.tau, p.config.adversary.stability()))
            .collect();
        assert_eq!(got[0], ("16".into(), 1, 1));
        assert_eq!(got[3], ("16".into(), 8, 8));
        assert_eq!(got[4], ("64".into(), 1, 1));
        assert_eq!(got.len(), 8);
    }

    #[test]
    fn errors_name_the_key() {
        let missing = BASIC.replace("delta = 16", "");
        let err = missing.parse::<ExperimentConfig>().unwrap().expand(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("graph.delta"), "{err}");

        let unknown = BASIC.replace("tau = 2", "tau = 2\ntua = 3");
        let err = unknown.parse::<ExperimentConfig>().unwrap_err();
        assert!(err.to_string().contains("tua"), "{err}");

        let bad_eps = format!("epsilon = 2.0\n{BASIC}");
        let err = bad_eps.parse::<ExperimentConfig>().unwrap().expand(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
    }

    #[test]
    fn print_round_trip() {
        let text = format!("{BASIC}\n[sweep]\ntau = [1, \"inf\"]\nalgorithm = [\"rlb\", \"frlb\"]\n");
        let cfg: ExperimentConfig = text.parse().unwrap();
        let again: ExperimentConfig = cfg.to_toml().parse().unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.expand(Path::new(".")).unwrap(), cfg.expand(Path::new(".")).unwrap());
    }

    #[test]
    fn auto_step_budget() {
        let l = restricted_step_budget("log2:4885".parse().unwrap(), 1000);
        assert_eq!(l, 22.0);
    }
}
