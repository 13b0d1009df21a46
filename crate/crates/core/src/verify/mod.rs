//! Runnable checks of the qualitative properties of the problem:
//! manufactured-solution convergence, a-posteriori L∞ bounds, uniqueness
//! probing, uniformity in the period, interior gradient bounds, a discrete
//! Hölder seminorm, and a 1D finite-difference oracle that shares no code with
//! the finite element path.

pub mod baseline;
pub mod bounds;
pub mod holder;
pub mod mms;
pub mod oracle1d;
pub mod reference;
pub mod suite;
pub mod sweep;
pub mod uniqueness;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::assemble::AssemblyError;
use crate::fixedpoint::FixedPointError;
use crate::geometry::MeshError;
use crate::problem::ProblemError;

pub use bounds::{check_discrete_maximum_principle, linf_bound_check};
pub use holder::holder_diagnostic;
pub use mms::{convergence_study, fitted_order, l2_error, mms_problem, ExactSolution};
pub use oracle1d::{brute_force_1d, compare_with_oracle, OracleSolution};
pub use sweep::{epsilon_sweep, interior_gradient_experiment, max_gradient_over};
pub use uniqueness::{uniqueness_probe, DEFAULT_LAMBDA_LADDER};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("finite-difference oracle did not converge in {steps} steps (last update {update:.3e})")]
    OracleNotConverged { steps: usize, update: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "Pass",
            Verdict::Fail => "Fail",
            Verdict::Inconclusive => "Inconclusive",
        }
    }
}

/// Named numeric table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Table {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub parameters: BTreeMap<String, String>,
    pub tables: Vec<Table>,
    /// Scalar outcomes, e.g. a fitted order or a spread.
    pub metrics: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(name: &str) -> ExperimentReport {
        ExperimentReport {
            name: name.into(),
            parameters: BTreeMap::new(),
            tables: Vec::new(),
            metrics: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            verdict: Verdict::Inconclusive,
            notes: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.into(), value.to_string());
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    pub fn tolerance(&mut self, key: &str, value: f64) {
        self.tolerances.insert(key.into(), value);
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Tables as CSV; the first column names the table and each table starts
    /// with its own header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            let _ = writeln!(out, "table,{}", t.columns.join(","));
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
                let _ = writeln!(out, "{},{}", t.name, cells.join(","));
            }
        }
        out
    }

    /// `verdict=...` followed by tolerances, metrics, parameters and notes.
    pub fn verdict_text(&self) -> String {
        let mut out = format!("experiment={}\nverdict={}\n", self.name, self.verdict.name());
        for (k, v) in &self.tolerances {
            let _ = writeln!(out, "tolerance.{k}={}", format_value(*v));
        }
        for (k, v) in &self.metrics {
            let _ = writeln!(out, "metric.{k}={}", format_value(*v));
        }
        for (k, v) in &self.parameters {
            let _ = writeln!(out, "param.{k}={v}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "note={n}");
        }
        out
    }
}

/// Maps `f` over `items` on scoped threads, one per item; results keep the
/// input order, so aggregation is deterministic.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = items.iter().map(|item| scope.spawn(move || f(item))).collect();
        handles.into_iter().map(|h| h.join().expect("experiment worker panicked")).collect()
    })
}

/// Fixed-format float rendering used in every report.
pub fn format_value(v: f64) -> String {
    if v.is_finite() && v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.12e}")
    }
}
