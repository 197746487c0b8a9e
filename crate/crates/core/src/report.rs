//! Structured pass/fail records shared by every check.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
    Inconclusive,
}

impl Verdict {
    /// Pass and not-applicable do not count against a suite.
    pub fn is_ok(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::NotApplicable)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NotApplicable => "not-applicable",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// How `statistic` is compared against `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub parameters: BTreeMap<String, Value>,
    pub statistic: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub witnesses: Vec<Witness>,
}

impl VerificationReport {
    /// Verdict decided by `statistic` against `threshold`; NaN fails.
    pub fn compare(check: &str, statistic: f64, comparison: Comparison, threshold: f64) -> Self {
        let ok = match comparison {
            Comparison::AtMost => statistic <= threshold,
            Comparison::AtLeast => statistic >= threshold,
        };
        Self {
            check: check.to_string(),
            parameters: BTreeMap::new(),
            statistic,
            threshold,
            comparison,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            reason: None,
            witnesses: Vec::new(),
        }
    }

    pub fn not_applicable(check: &str, reason: impl Into<String>) -> Self {
        Self::with_reason(check, Verdict::NotApplicable, reason.into())
    }

    pub fn inconclusive(check: &str, reason: impl Into<String>) -> Self {
        Self::with_reason(check, Verdict::Inconclusive, reason.into())
    }

    fn with_reason(check: &str, verdict: Verdict, reason: String) -> Self {
        Self {
            check: check.to_string(),
            parameters: BTreeMap::new(),
            statistic: f64::NAN,
            threshold: f64::NAN,
            comparison: Comparison::AtMost,
            verdict,
            reason: Some(reason),
            witnesses: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    pub fn witness(mut self, point: &[f64], value: f64, note: Option<String>) -> Self {
        self.witnesses.push(Witness { point: point.to_vec(), value, note });
        self
    }

    pub fn reason(mut self, reason: impl Into<String>) -> Self {
        self.reason = Some(reason.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.comparison {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
        };
        write!(f, "{:<28} {:<14}", self.check, self.verdict.to_string())?;
        if self.statistic.is_finite() || self.threshold.is_finite() {
            write!(f, " {:.6e} {op} {:.6e}", self.statistic, self.threshold)?;
        }
        if let Some(r) = &self.reason {
            write!(f, "  ({r})")?;
        }
        Ok(())
    }
}
