//! Self-checks runnable from the command line: finite-difference gradient
//! checks, the physics / round-trip / oracle-path self-test and the
//! optional OCR demonstration.

pub mod gradcheck;
pub mod ocr_demo;
pub mod reference;
pub mod selftest;

use std::fmt;

use serde::{Deserialize, Serialize};

/// One measured check: `value` must not exceed `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(suite: &str, name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            suite: suite.to_string(),
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    /// A check with no numeric measure.
    pub fn flag(suite: &str, name: impl Into<String>, ok: bool) -> Self {
        Self {
            suite: suite.to_string(),
            name: name.into(),
            value: if ok { 0.0 } else { 1.0 },
            tolerance: 0.0,
            passed: ok,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{}: {:.3e} (limit {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.value,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn suite(&self, suite: &str) -> impl Iterator<Item = &Check> {
        let suite = suite.to_string();
        self.checks.iter().filter(move |c| c.suite == suite)
    }

    /// Worst `value / tolerance` ratio in a suite (0 tolerance counts as pass/fail only).
    pub fn worst(&self, suite: &str) -> Option<&Check> {
        self.suite(suite).max_by(|a, b| {
            let r = |c: &Check| if c.tolerance > 0.0 { c.value / c.tolerance } else { c.value };
            r(a).total_cmp(&r(b))
        })
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}
