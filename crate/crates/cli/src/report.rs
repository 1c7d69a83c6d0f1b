//! Run summaries: apex table, named checks and recorded failures.

use std::fmt::Write as _;

use hopsim_core::control::ApexRecord;
use serde::{Deserialize, Serialize};

use crate::error::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "in")]
    Within,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Non-finite values serialize as null.
    pub measured: f64,
    pub threshold: f64,
    /// Upper end of the band for [`Comparison::Within`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub comparison: Comparison,
    pub passed: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

fn fmt_value(v: f64) -> String {
    if v != 0.0 && v.is_finite() && (v.abs() < 1e-3 || v.abs() >= 1e6) {
        format!("{v:.3e}")
    } else {
        format!("{v:.6}")
    }
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, threshold, None, Comparison::AtMost, measured <= threshold)
    }

    pub fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, threshold, None, Comparison::AtLeast, measured >= threshold)
    }

    pub fn within(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, measured, lo, Some(hi), Comparison::Within, measured >= lo && measured <= hi)
    }

    /// A boolean property; measured is 1 when it holds.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, 1.0, None, Comparison::AtLeast, ok)
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    fn new(name: impl Into<String>, measured: f64, threshold: f64, upper: Option<f64>, comparison: Comparison, passed: bool) -> Self {
        Self { name: name.into(), measured, threshold, upper, comparison, passed, detail: String::new() }
    }

    pub fn line(&self) -> String {
        let bound = match (self.comparison, self.upper) {
            (Comparison::Within, Some(hi)) => format!("in [{}, {}]", self.threshold, hi),
            (Comparison::AtMost, _) => format!("<= {}", self.threshold),
            _ => format!(">= {}", self.threshold),
        };
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut line = format!("{status} {}: measured {} (required {bound})", self.name, fmt_value(self.measured));
        if !self.detail.is_empty() {
            let _ = write!(line, "; {}", self.detail);
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApexRow {
    pub index: usize,
    pub t: f64,
    pub x: f64,
    pub height: f64,
    pub xdot: f64,
    pub ydot: f64,
    pub energy: f64,
    pub commanded_angle: f64,
    pub clamped: bool,
}

impl ApexRow {
    pub fn table(apexes: &[ApexRecord]) -> Vec<Self> {
        apexes
            .iter()
            .enumerate()
            .map(|(index, a)| Self {
                index,
                t: a.t,
                x: a.x,
                height: a.z,
                xdot: a.xdot,
                ydot: a.ydot,
                energy: a.energy,
                commanded_angle: a.command,
                clamped: a.clamped,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub model: String,
    pub seed: u64,
    pub apexes: Vec<ApexRow>,
    pub checks: Vec<Check>,
    /// Numerical failures raised while running.
    pub failures: Vec<String>,
}

impl Report {
    pub fn new(scenario: &str, model: &str, seed: u64) -> Self {
        Self { scenario: scenario.into(), model: model.into(), seed, ..Self::default() }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// 0 when everything passed, 3 on a numerical failure, 1 on a failed check.
    pub fn exit_code(&self) -> u8 {
        if !self.failures.is_empty() {
            3
        } else if self.checks.iter().any(|c| !c.passed) {
            1
        } else {
            0
        }
    }

    pub fn ensure_nonempty(&self) -> Result<(), RunError> {
        if self.checks.is_empty() && self.apexes.is_empty() && self.failures.is_empty() {
            Err(RunError::EmptyRun)
        } else {
            Ok(())
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("report serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn summary(&self) -> String {
        let mut out = format!("scenario {} (model {}, seed {})\n", self.scenario, self.model, self.seed);
        if !self.apexes.is_empty() {
            let _ = writeln!(out, "{:>5} {:>9} {:>9} {:>8} {:>8} {:>9} {:>8}", "apex", "t", "height", "xdot", "ydot", "energy", "angle");
            for a in &self.apexes {
                let _ = writeln!(
                    out,
                    "{:>5} {:>9.4} {:>9.4} {:>8.4} {:>8.4} {:>9.4} {:>8.4}{}",
                    a.index,
                    a.t,
                    a.height,
                    a.xdot,
                    a.ydot,
                    a.energy,
                    a.commanded_angle,
                    if a.clamped { " clamped" } else { "" }
                );
            }
        }
        for c in &self.checks {
            let _ = writeln!(out, "{}", c.line());
        }
        for f in &self.failures {
            let _ = writeln!(out, "ERROR {f}");
        }
        let verdict = match self.exit_code() {
            0 => "all checks passed",
            1 => "some checks failed",
            _ => "numerical failure",
        };
        let _ = writeln!(out, "{verdict}");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_worst_outcome() {
        let mut r = Report::new("hop", "slip", 0);
        r.checks.push(Check::at_most("a", 1.0, 2.0));
        assert_eq!(r.exit_code(), 0);
        r.checks.push(Check::at_least("b", 1.0, 2.0));
        assert_eq!(r.exit_code(), 1);
        assert!(r.summary().contains("FAIL b"));
        r.failures.push("boom".into());
        assert_eq!(r.exit_code(), 3);
    }

    #[test]
    fn empty_report_is_an_error() {
        let r = Report::new("design_sweep", "slip", 0);
        assert!(matches!(r.ensure_nonempty(), Err(RunError::EmptyRun)));
    }

    #[test]
    fn band_check() {
        assert!(Check::within("w", 0.8, 0.7, 0.9).passed);
        assert!(!Check::within("w", 0.36, 0.7, 0.9).passed);
        assert!(!Check::at_most("nan", f64::NAN, 1.0).passed);
    }

    #[test]
    fn infinite_measurements_serialize() {
        let mut r = Report::new("cot_compare", "slip", 0);
        r.checks.push(Check::at_least("inf", f64::INFINITY, 1.0));
        let text = String::from_utf8(r.to_json()).unwrap();
        assert!(text.contains("null"));
    }
}
