//! Scalar types shared by every module: maximum degree, transmit
//! probabilities and effective degrees.
//!
//! All three can hold values far outside `f64`/`u64` range, so they are
//! stored in the log domain. Powers of two round-trip exactly.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::format::fmt_g17;

/// `ln(2e)`, the base used by the fast back-off variants.
pub const LN_2E: f64 = LN_2 + 1.0;

/// Stability value meaning "the distribution never changes".
pub const TAU_INFINITE: u64 = u64::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum UnitError {
    #[error("maximum degree must be at least 2, got {0}")]
    DeltaTooSmall(String),
    #[error("cannot parse maximum degree {0:?}: expected an integer or `log2:<exponent>`")]
    DeltaSyntax(String),
    #[error("probability {0} outside (0, 1]")]
    Probability(f64),
    #[error("cannot parse stability {0:?}: expected a positive integer or `inf`")]
    TauSyntax(String),
}

/// Log base `2e`.
pub fn log_2e(x: f64) -> f64 {
    x.ln() / LN_2E
}

/// Maximum degree Δ of the potential graph.
///
/// Small values keep their exact integer; huge ones (`log2:4885`) only
/// keep `log2(Δ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delta {
    log2: f64,
    exact: Option<u64>,
}

impl Delta {
    pub fn new(delta: u64) -> Result<Self, UnitError> {
        if delta < 2 {
            return Err(UnitError::DeltaTooSmall(delta.to_string()));
        }
        Ok(Self { log2: (delta as f64).log2(), exact: Some(delta) })
    }

    /// Builds Δ = 2^`log2`. Exponents below 53 that land on an integer are
    /// stored exactly.
    pub fn from_log2(log2: f64) -> Result<Self, UnitError> {
        if !(log2 >= 1.0) || !log2.is_finite() {
            return Err(UnitError::DeltaTooSmall(format!("2^{log2}")));
        }
        if log2 < 53.0 && log2.fract() == 0.0 {
            return Self::new(1u64 << log2 as u32);
        }
        Ok(Self { log2, exact: None })
    }

    pub fn log2(&self) -> f64 {
        self.log2
    }

    pub fn ln(&self) -> f64 {
        self.log2 * LN_2
    }

    pub fn log_2e(&self) -> f64 {
        self.ln() / LN_2E
    }

    pub fn exact(&self) -> Option<u64> {
        self.exact
    }

    /// `⌈log2 Δ⌉`, exact for integer Δ.
    pub fn ceil_log2(&self) -> u64 {
        match self.exact {
            Some(d) => d.next_power_of_two().trailing_zeros() as u64,
            None => self.log2.ceil() as u64,
        }
    }

    /// `Δ^(1/t)` as a plain float.
    pub fn root(&self, t: f64) -> f64 {
        (self.log2 / t).exp2()
    }

    /// Δ̇ = Δ − 1 as an effective degree.
    pub fn minus_one(&self) -> Degree {
        match self.exact {
            Some(d) => Degree::Count(d - 1),
            // Δ ≥ 2^53 here, so subtracting one does not move the logarithm.
            None => Degree::Huge { ln: self.ln() },
        }
    }

    pub fn as_degree(&self) -> Degree {
        match self.exact {
            Some(d) => Degree::Count(d),
            None => Degree::Huge { ln: self.ln() },
        }
    }
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some(d) => write!(f, "{d}"),
            None => write!(f, "log2:{}", fmt_g17(self.log2)),
        }
    }
}

impl FromStr for Delta {
    type Err = UnitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(exp) = s.strip_prefix("log2:") {
            let exp: f64 = exp.trim().parse().map_err(|_| UnitError::DeltaSyntax(s.into()))?;
            return Self::from_log2(exp);
        }
        let d: u64 = s.parse().map_err(|_| UnitError::DeltaSyntax(s.into()))?;
        Self::new(d)
    }
}

impl Serialize for Delta {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self.exact {
            Some(d) => ser.serialize_u64(d),
            None => ser.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Delta {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        let parsed = match Raw::deserialize(de)? {
            Raw::Int(d) => Delta::new(d),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Parses a stability factor: a positive integer or `inf`.
pub fn parse_tau(s: &str) -> Result<u64, UnitError> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("inf") {
        return Ok(TAU_INFINITE);
    }
    match s.parse::<u64>() {
        Ok(t) if t >= 1 => Ok(t),
        _ => Err(UnitError::TauSyntax(s.into())),
    }
}

pub fn tau_label(tau: u64) -> String {
    if tau == TAU_INFINITE {
        "inf".into()
    } else {
        tau.to_string()
    }
}

/// A transmit probability in (0, 1], stored as `log2 p`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Probability {
    log2: f64,
}

impl Probability {
    pub fn new(p: f64) -> Result<Self, UnitError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(UnitError::Probability(p));
        }
        Ok(Self { log2: p.log2() })
    }

    pub fn from_log2(log2: f64) -> Result<Self, UnitError> {
        if !(log2 <= 0.0) || log2 == f64::NEG_INFINITY {
            return Err(UnitError::Probability(log2.exp2()));
        }
        Ok(Self { log2 })
    }

    /// `p = 2^-k`, exact.
    pub fn pow2(k: u32) -> Self {
        Self { log2: -(k as f64) }
    }

    pub fn value(&self) -> f64 {
        self.log2.exp2()
    }

    pub fn log2(&self) -> f64 {
        self.log2
    }

    pub fn ln(&self) -> f64 {
        self.log2 * LN_2
    }

    /// `log2(1/p)`: the contention level this probability is tuned for.
    pub fn log_estimate(&self) -> f64 {
        -self.log2
    }

    /// `ln(1 - p)`, accurate for tiny p and for p below `f64` range.
    pub fn ln_complement(&self) -> f64 {
        let p = self.value();
        if p == 0.0 {
            // 1 - p rounds to 1; the first-order term is all that is left.
            -(self.ln().exp())
        } else {
            (-p).ln_1p()
        }
    }

    /// `ln(-ln(1 - p))`, usable when the degree itself is huge.
    pub fn ln_neg_ln_complement(&self) -> f64 {
        let p = self.value();
        if p < 1e-300 {
            self.ln()
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            (-(-p).ln_1p()).ln()
        }
    }
}

/// Effective degree of a receiver: an exact count or, beyond `u64`, its
/// natural log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Degree {
    Count(u64),
    Huge { ln: f64 },
}

impl Degree {
    pub fn from_log2(log2: f64) -> Self {
        if log2 < 63.0 && log2.fract() == 0.0 {
            Degree::Count(1u64 << log2 as u32)
        } else {
            Degree::Huge { ln: log2 * LN_2 }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Degree::Count(0))
    }

    pub fn ln(&self) -> f64 {
        match *self {
            Degree::Count(c) => (c as f64).ln(),
            Degree::Huge { ln } => ln,
        }
    }

    pub fn log2(&self) -> f64 {
        self.ln() / LN_2
    }

    pub fn count(&self) -> Option<u64> {
        match *self {
            Degree::Count(c) => Some(c),
            Degree::Huge { .. } => None,
        }
    }

    /// Shifts by a signed amount, clamped to `[1, max]`. Huge degrees do not
    /// move under any `i64` step.
    pub fn offset_clamped(&self, step: i64, max: Degree) -> Degree {
        match (*self, max) {
            (Degree::Count(c), Degree::Count(m)) => {
                Degree::Count((c as i128 + step as i128).clamp(1, m as i128) as u64)
            }
            (Degree::Count(c), Degree::Huge { .. }) => {
                Degree::Count((c as i128 + step as i128).clamp(1, u64::MAX as i128) as u64)
            }
            (huge, _) => huge,
        }
    }

    pub fn min(self, other: Degree) -> Degree {
        if other.ln() < self.ln() {
            other
        } else {
            self
        }
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degree::Count(c) => write!(f, "{c}"),
            Degree::Huge { ln } => write!(f, "2^{}", fmt_g17(ln / LN_2)),
        }
    }
}
