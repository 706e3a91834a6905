//! Statistical verifiers for the limit theorems. Each returns a
//! [`VerifierReport`] with a machine-checkable verdict and row tables.
//!
//! Points and boxes passed to the verifiers are in model coordinates (after
//! whitening and normalization of the interior direction).

mod bounds;
mod duality;
mod llt;
mod tail;
mod weak;

pub use bounds::{check_gaussian_bounds, BoundsOptions};
pub use duality::{duality_exact, verify_duality, DualityOptions, DualityTuple, ExactDuality};
pub use llt::{verify_return_prob, verify_stone_llt, LltBox, LltOptions, ReturnOptions};
pub use tail::{verify_tail, TailOptions};
pub use weak::{verify_weak_limit, BinSpec, WeakLimitOptions};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::context::Model;
use crate::error::{Error, Result};
use crate::stats::Estimate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    /// Fail dominates inconclusive, which dominates pass.
    pub fn and(self, other: Verdict) -> Verdict {
        self.max(other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Fail => "fail",
        }
    }
}

/// Pass iff `|r − 1| ≤ tol + 3·se`; inconclusive when `se > tol`.
pub fn ratio_verdict(ratio: Estimate, tol: f64) -> Verdict {
    if !ratio.value.is_finite() || ratio.stderr > tol {
        Verdict::Inconclusive
    } else if (ratio.value - 1.0).abs() <= tol + 3.0 * ratio.stderr {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub tail_slope: f64,
    pub tail_ratio: f64,
    pub llt: f64,
    pub return_prob: f64,
    pub weak_max_box: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tail_slope: 0.1, tail_ratio: 0.15, llt: 0.2, return_prob: 0.25, weak_max_box: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub target: String,
    pub verdict: Verdict,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, stderr: f64, target: impl Into<String>, verdict: Verdict) -> Self {
        Check { name: name.into(), value, stderr, target: target.into(), verdict, detail: String::new() }
    }

    /// Appends to the detail text.
    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        let d = detail.into();
        if self.detail.is_empty() {
            self.detail = d;
        } else {
            self.detail = format!("{}; {d}", self.detail);
        }
        self
    }
}

/// Column-named numeric table written as CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Shortest round-trip formatting, so equal values give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifierReport {
    pub name: String,
    pub predicted: f64,
    pub estimated: Estimate,
    pub ratio: Option<Estimate>,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub checks: Vec<Check>,
    pub sample_sizes: BTreeMap<String, u64>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub rows: Table,
    #[serde(skip)]
    pub plot: Table,
}

impl VerifierReport {
    pub fn new(name: &str, tolerance: f64) -> Self {
        VerifierReport {
            name: name.to_string(),
            predicted: f64::NAN,
            estimated: Estimate::new(f64::NAN, f64::NAN),
            ratio: None,
            tolerance,
            verdict: Verdict::Pass,
            checks: Vec::new(),
            sample_sizes: BTreeMap::new(),
            notes: Vec::new(),
            rows: Table::default(),
            plot: Table::default(),
        }
    }

    pub fn push_check(&mut self, c: Check) {
        self.verdict = self.verdict.and(c.verdict);
        self.checks.push(c);
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Refuses laws whose characteristic function is periodic on the declared lattice.
pub fn require_aperiodic(model: &Model, what: &str) -> Result<Option<String>> {
    match model.steps().atom_list() {
        None => Ok(None),
        Some(_) if model.steps().lattice().is_none() => {
            Ok(Some("finite-atom law without a declared lattice; aperiodicity was not checked".into()))
        }
        Some(_) => match model.periodic_lattice(APERIODICITY_GRID)? {
            Some(theta) => Err(Error::Refused(format!(
                "{what} needs an aperiodic law (|φ(θ)| < 1 off the dual lattice); |φ| = 1 at θ = {theta:?}"
            ))),
            None => Ok(None),
        },
    }
}

const APERIODICITY_GRID: usize = 64;

/// `|x|^p`.
pub(crate) fn norm_pow(x: &[f64], p: f64) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_rule() {
        assert_eq!(ratio_verdict(Estimate::new(1.1, 0.01), 0.15), Verdict::Pass);
        assert_eq!(ratio_verdict(Estimate::new(1.3, 0.02), 0.15), Verdict::Fail);
        assert_eq!(ratio_verdict(Estimate::new(1.3, 0.05), 0.15), Verdict::Pass);
        assert_eq!(ratio_verdict(Estimate::new(1.0, 0.2), 0.15), Verdict::Inconclusive);
        assert_eq!(Verdict::Pass.and(Verdict::Inconclusive), Verdict::Inconclusive);
        assert_eq!(Verdict::Fail.and(Verdict::Inconclusive), Verdict::Fail);
    }

    #[test]
    fn csv_is_header_only_when_empty() {
        let t = Table::new(&["n", "phat"]);
        assert_eq!(t.to_csv(), "n,phat\n");
    }
}
