//! Line-oriented store of pinned quantitative outcomes,
//! `experiment,key,value,tolerance`, with `#` comment lines.

use std::fmt::Write as _;

use super::format_value;

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineEntry {
    pub experiment: String,
    pub key: String,
    pub value: f64,
    /// Absolute tolerance for regression comparisons.
    pub tolerance: f64,
}

impl BaselineEntry {
    pub fn new(experiment: &str, key: &str, value: f64, tolerance: f64) -> BaselineEntry {
        BaselineEntry { experiment: experiment.into(), key: key.into(), value, tolerance }
    }

    /// Whether `observed` reproduces the pinned value.
    pub fn matches(&self, observed: f64) -> bool {
        (observed - self.value).abs() <= self.tolerance
    }
}

pub fn format_baselines(entries: &[BaselineEntry]) -> String {
    let mut out = String::from("experiment,key,value,tolerance\n");
    for e in entries {
        let _ = writeln!(out, "{},{},{},{}", e.experiment, e.key, format_value(e.value), format_value(e.tolerance));
    }
    out
}

pub fn parse_baselines(text: &str) -> Result<Vec<BaselineEntry>, String> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "experiment,key,value,tolerance" {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(format!("line {}: expected 4 fields, got {}", n + 1, fields.len()));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("line {}: `{s}`: {e}", n + 1));
        entries.push(BaselineEntry::new(fields[0].trim(), fields[1].trim(), num(fields[2])?, num(fields[3])?));
    }
    Ok(entries)
}

/// Looks up `experiment.key`.
pub fn lookup<'a>(entries: &'a [BaselineEntry], experiment: &str, key: &str) -> Option<&'a BaselineEntry> {
    entries.iter().find(|e| e.experiment == experiment && e.key == key)
}
