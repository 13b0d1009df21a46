//! Problem configuration files.
//!
//! Line-oriented `key = value` text grouped in sections; `#` starts a comment.
//!
//! ```text
//! [domain]
//! dim = 2
//! divisions = 32
//!
//! [coefficients]
//! k = checkerboard(0.5, 2.0)
//! b = checkerboard(0.1, 0.4)
//! m = 3
//! epsilon = 1/8
//!
//! [boundary]
//! robin = left, right, top
//! alpha = 1
//! u_gas = 1
//! u_b = 1
//!
//! [source]
//! s = 0.5
//!
//! [interval]
//! T_min = 0.5
//! T_max = 1
//! T_star = 4
//! ```
//!
//! Coefficients are given by registered name plus parameters; a bare number
//! means `constant(number)`. Overrides `section.key=value` are applied after
//! the file, and the assembled problem is validated before it is returned.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::fixedpoint::PicardSettings;
use crate::geometry::Side;
use crate::problem::{Domain, ProblemError, ProblemSpec, ScalarFn, Source, TensorField};
use crate::verify::{reference, DEFAULT_LAMBDA_LADDER};

pub const TENSOR_REGISTRY: [&str; 3] = ["constant(c)", "smooth(c0, c1)", "checkerboard(a, b)"];
pub const SCALAR_REGISTRY: [&str; 2] = ["constant(c)", "sine_bump(c, a)"];

const SECTIONS: [(&str, &[&str]); 7] = [
    ("domain", &["dim", "x_min", "x_max", "y_min", "y_max", "divisions"]),
    ("coefficients", &["k", "b", "m", "epsilon"]),
    ("boundary", &["robin", "alpha", "u_gas", "u_b"]),
    ("source", &["s", "sigma", "lambda", "lambda_ref"]),
    ("interval", &["T_min", "T_max", "T_star"]),
    ("solver", &["damping", "update_tol", "residual_tol", "max_steps", "cg_tol", "cg_max_iterations", "adaptive_damping", "dump_system"]),
    (
        "experiment",
        &["divisions_ladder", "eps_ladder", "resolve_factor", "margin", "n_starts", "lambda_ladder", "exact", "oracle_resolution", "oracle_points", "beta"],
    ),
];

/// Where a setting came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override(String),
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override(s) => write!(f, "override `{s}`"),
            Origin::Default => write!(f, "default"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{origin}: {message}")]
    Syntax { origin: Origin, message: String },
    #[error("{origin}: unknown section [{name}]; expected one of {}", SECTIONS.map(|s| s.0).join(", "))]
    UnknownSection { origin: Origin, name: String },
    #[error("{origin}: unknown key `{key}` in [{section}]; expected one of {}", expected.join(", "))]
    UnknownKey { origin: Origin, section: String, key: String, expected: Vec<&'static str> },
    #[error("{origin}: key `{key}` set twice in the file")]
    Duplicate { origin: Origin, key: String },
    #[error("{origin}: bad value for `{key}`: {reason}")]
    BadValue { origin: Origin, key: String, reason: String },
    #[error("{origin}: unknown coefficient `{name}` for `{key}`; registered: {}", registry.join(", "))]
    UnknownCoefficient { origin: Origin, key: String, name: String, registry: Vec<&'static str> },
    #[error("invalid problem, key `{key}`: {source}")]
    Invalid { key: String, source: ProblemError },
}

/// Parameters of the verification experiments.
#[derive(Clone, Debug)]
pub struct ExperimentParams {
    pub division_ladder: Vec<usize>,
    pub eps_ladder: Vec<f64>,
    pub resolve_factor: usize,
    pub margin: f64,
    pub n_starts: usize,
    pub lambda_ladder: Vec<f64>,
    pub exact: ScalarFn,
    pub oracle_resolution: usize,
    pub oracle_points: usize,
    pub beta: f64,
}

impl ExperimentParams {
    fn defaults(dim: usize) -> ExperimentParams {
        ExperimentParams {
            division_ladder: vec![16, 32, 64],
            eps_ladder: vec![0.25, 0.125, 0.0625, 0.03125],
            resolve_factor: 4,
            margin: 0.25,
            n_starts: 8,
            lambda_ladder: DEFAULT_LAMBDA_LADDER.to_vec(),
            exact: if dim == 2 { reference::mms_exact() } else { ScalarFn::sine_bump(1.5, 0.25, 1) },
            oracle_resolution: 1024,
            oracle_points: 8192,
            beta: 0.3,
        }
    }
}

/// A parsed and validated configuration.
#[derive(Clone, Debug)]
pub struct Config {
    pub spec: ProblemSpec,
    pub divisions: Vec<usize>,
    pub settings: PicardSettings,
    pub experiment: ExperimentParams,
    /// Write the assembled linear system of the final iterate.
    pub dump_system: bool,
}

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    origin: Origin,
}

type Entries = BTreeMap<(String, String), Entry>;

fn known_keys(section: &str) -> Option<&'static [&'static str]> {
    SECTIONS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k)
}

fn check_key(section: &str, key: &str, origin: &Origin) -> Result<(), ConfigError> {
    let keys = known_keys(section).ok_or_else(|| ConfigError::UnknownSection { origin: origin.clone(), name: section.into() })?;
    if !keys.contains(&key) {
        return Err(ConfigError::UnknownKey { origin: origin.clone(), section: section.into(), key: key.into(), expected: keys.to_vec() });
    }
    Ok(())
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn read_entries(text: &str) -> Result<Entries, ConfigError> {
    let mut entries = Entries::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let origin = Origin::Line(i + 1);
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax { origin: origin.clone(), message: format!("unterminated section header `{line}`") })?;
            let name = name.trim();
            if known_keys(name).is_none() {
                return Err(ConfigError::UnknownSection { origin, name: name.into() });
            }
            section = Some(name.into());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { origin: origin.clone(), message: format!("expected `key = value`, got `{line}`") })?;
        let (key, value) = (key.trim(), value.trim());
        let Some(section) = &section else {
            return Err(ConfigError::Syntax { origin, message: format!("key `{key}` appears before any section header") });
        };
        check_key(section, key, &origin)?;
        if value.is_empty() {
            return Err(ConfigError::BadValue { origin, key: key.into(), reason: "empty value".into() });
        }
        let slot = (section.clone(), key.to_string());
        if entries.contains_key(&slot) {
            return Err(ConfigError::Duplicate { origin, key: format!("{section}.{key}") });
        }
        entries.insert(slot, Entry { value: value.into(), origin });
    }
    Ok(entries)
}

fn apply_overrides(entries: &mut Entries, overrides: &[String]) -> Result<(), ConfigError> {
    for o in overrides {
        let origin = Origin::Override(o.clone());
        let (path, value) = o.split_once('=').ok_or_else(|| ConfigError::Syntax { origin: origin.clone(), message: "expected `section.key=value`".into() })?;
        let (section, key) = path.trim().split_once('.').ok_or_else(|| ConfigError::Syntax { origin: origin.clone(), message: "expected `section.key=value`".into() })?;
        let (section, key, value) = (section.trim(), key.trim(), value.trim());
        check_key(section, key, &origin)?;
        entries.insert((section.into(), key.into()), Entry { value: value.into(), origin });
    }
    Ok(())
}

/// Numeric literal, also accepting a quotient `a/b`.
fn number(text: &str) -> Option<f64> {
    let text = text.trim();
    match text.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => text.parse().ok(),
    }
    .filter(|v: &f64| v.is_finite())
}

fn list(text: &str) -> Vec<&str> {
    text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect()
}

/// `name(a, b, ...)` or a bare number, which reads as `constant(number)`.
fn call(text: &str) -> Option<(String, Vec<f64>)> {
    if let Some(v) = number(text) {
        return Some(("constant".into(), vec![v]));
    }
    let open = text.find('(')?;
    let args = text[open + 1..].strip_suffix(')')?;
    let values: Option<Vec<f64>> = if args.trim().is_empty() { Some(Vec::new()) } else { args.split(',').map(number).collect() };
    Some((text[..open].trim().to_string(), values?))
}

struct Reader {
    entries: Entries,
}

impl Reader {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn bad(&self, section: &str, key: &str, reason: impl Into<String>) -> ConfigError {
        let origin = self.get(section, key).map_or(Origin::Default, |e| e.origin.clone());
        ConfigError::BadValue { origin, key: format!("{section}.{key}"), reason: reason.into() }
    }

    fn real(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => number(&e.value).ok_or_else(|| self.bad(section, key, format!("`{}` is not a number", e.value))),
        }
    }

    fn integer(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => e.value.parse().map_err(|_| self.bad(section, key, format!("`{}` is not a nonnegative integer", e.value))),
        }
    }

    fn boolean(&self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(section, key).map(|e| e.value.as_str()) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(other) => Err(self.bad(section, key, format!("`{other}` is not `true` or `false`"))),
        }
    }

    fn reals(&self, section: &str, key: &str, default: Vec<f64>) -> Result<Vec<f64>, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => list(&e.value).into_iter().map(|s| number(s).ok_or_else(|| self.bad(section, key, format!("`{s}` is not a number")))).collect(),
        }
    }

    fn integers(&self, section: &str, key: &str, default: Vec<usize>) -> Result<Vec<usize>, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => list(&e.value).into_iter().map(|s| s.parse().map_err(|_| self.bad(section, key, format!("`{s}` is not an integer")))).collect(),
        }
    }

    fn coefficient<T>(&self, section: &str, key: &str, registry: &[&'static str], build: impl Fn(&str, &[f64]) -> Option<Result<T, String>>) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.get(section, key) else { return Ok(None) };
        let (name, args) = call(&e.value).ok_or_else(|| self.bad(section, key, format!("expected `name(args)` or a number, got `{}`", e.value)))?;
        match build(&name, &args) {
            None => Err(ConfigError::UnknownCoefficient { origin: e.origin.clone(), key: format!("{section}.{key}"), name, registry: registry.to_vec() }),
            Some(Err(reason)) => Err(self.bad(section, key, reason)),
            Some(Ok(v)) => Ok(Some(v)),
        }
    }

    fn tensor(&self, section: &str, key: &str, dim: usize) -> Result<Option<TensorField>, ConfigError> {
        self.coefficient(section, key, &TENSOR_REGISTRY, |name, args| {
            let arity = |n: usize| if args.len() == n { Ok(()) } else { Err(format!("`{name}` takes {n} argument(s), got {}", args.len())) };
            Some(match name {
                "constant" => arity(1).map(|_| TensorField::constant(args[0])),
                "smooth" => arity(2).map(|_| TensorField::smooth(args[0], args[1], dim)),
                "checkerboard" => arity(2).map(|_| TensorField::checkerboard(args[0], args[1], dim)),
                _ => return None,
            })
        })
    }

    fn scalar(&self, section: &str, key: &str, dim: usize) -> Result<Option<ScalarFn>, ConfigError> {
        self.coefficient(section, key, &SCALAR_REGISTRY, |name, args| {
            let arity = |n: usize| if args.len() == n { Ok(()) } else { Err(format!("`{name}` takes {n} argument(s), got {}", args.len())) };
            Some(match name {
                "constant" => arity(1).map(|_| ScalarFn::constant(args[0])),
                "sine_bump" => arity(2).map(|_| ScalarFn::sine_bump(args[0], args[1], dim)),
                _ => return None,
            })
        })
    }
}

/// Reads and parses the configuration file at `path`.
pub fn read_config(path: &std::path::Path, overrides: &[String]) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text, overrides)
}

/// Parses configuration text, applies `overrides` (`section.key=value`) and
/// validates the result.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<Config, ConfigError> {
    let mut entries = read_entries(text)?;
    apply_overrides(&mut entries, overrides)?;
    let r = Reader { entries };

    let dim = r.integer("domain", "dim", 2)?;
    if !(1..=2).contains(&dim) {
        return Err(r.bad("domain", "dim", format!("dimension must be 1 or 2, got {dim}")));
    }
    let mut extent = vec![(r.real("domain", "x_min", 0.0)?, r.real("domain", "x_max", 1.0)?)];
    if dim == 2 {
        extent.push((r.real("domain", "y_min", 0.0)?, r.real("domain", "y_max", 1.0)?));
    }
    let divisions = match r.integers("domain", "divisions", vec![32])? {
        d if d.len() == 1 => vec![d[0]; dim],
        d if d.len() == dim => d,
        d => return Err(r.bad("domain", "divisions", format!("expected 1 or {dim} values, got {}", d.len()))),
    };
    if divisions.contains(&0) {
        return Err(r.bad("domain", "divisions", "divisions must be positive"));
    }
    let robin: Vec<Side> = match r.get("boundary", "robin") {
        None => Vec::new(),
        Some(e) if e.value == "none" => Vec::new(),
        Some(e) => list(&e.value)
            .into_iter()
            .map(|s| Side::parse(s).ok_or_else(|| r.bad("boundary", "robin", format!("unknown side `{s}`; expected left, right, bottom or top"))))
            .collect::<Result<_, _>>()?,
    };
    let domain = Domain { extent, robin_sides: Default::default() }.with_robin(&robin);

    let k = r.tensor("coefficients", "k", dim)?.ok_or_else(|| ConfigError::BadValue { origin: Origin::Default, key: "coefficients.k".into(), reason: "missing; the conduction tensor is required".into() })?;
    let b = r.tensor("coefficients", "b", dim)?.unwrap_or_else(|| TensorField::constant(0.0));
    let mut spec = ProblemSpec::new(domain, k, b);
    spec.m = r.real("coefficients", "m", spec.m)?;
    spec.epsilon = r.real("coefficients", "epsilon", spec.epsilon)?;
    spec.alpha = r.real("boundary", "alpha", spec.alpha)?;
    if let Some(g) = r.scalar("boundary", "u_gas", dim)? {
        spec.u_gas = g;
    }
    if let Some(g) = r.scalar("boundary", "u_b", dim)? {
        spec.u_b = g;
    }
    let s = r.scalar("source", "s", dim)?.unwrap_or_else(|| ScalarFn::constant(0.0));
    let sigma = r.real("source", "sigma", 0.0)?;
    if !(sigma >= 0.0) {
        return Err(r.bad("source", "sigma", format!("must be nonnegative, got {sigma}")));
    }
    spec.f = Source::affine(s, sigma);
    spec.lambda = r.real("source", "lambda", spec.lambda)?;
    spec.lambda_ref = r.real("source", "lambda_ref", spec.lambda_ref)?;
    spec.t_min = r.real("interval", "T_min", spec.t_min)?;
    spec.t_max = r.real("interval", "T_max", spec.t_max)?;
    spec.t_star = r.real("interval", "T_star", spec.t_star)?;
    spec.validate().map_err(|source| {
        let key = match &source {
            ProblemError::Invalid { key, .. } => key.to_string(),
            _ => "interval".into(),
        };
        ConfigError::Invalid { key, source }
    })?;

    let defaults = PicardSettings::default();
    let cg_max_iterations = match r.get("solver", "cg_max_iterations") {
        None => None,
        Some(_) => Some(r.integer("solver", "cg_max_iterations", 0)?),
    };
    let settings = PicardSettings {
        damping: r.real("solver", "damping", defaults.damping)?,
        update_tol: r.real("solver", "update_tol", defaults.update_tol)?,
        residual_tol: r.real("solver", "residual_tol", defaults.residual_tol)?,
        max_steps: r.integer("solver", "max_steps", defaults.max_steps)?,
        cg_tol: r.real("solver", "cg_tol", defaults.cg_tol)?,
        cg_max_iterations,
        adaptive_damping: r.boolean("solver", "adaptive_damping", defaults.adaptive_damping)?,
    };
    settings.validate().map_err(|e| ConfigError::BadValue { origin: Origin::Default, key: "solver".into(), reason: e.to_string() })?;

    let d = ExperimentParams::defaults(dim);
    let experiment = ExperimentParams {
        division_ladder: r.integers("experiment", "divisions_ladder", d.division_ladder)?,
        eps_ladder: r.reals("experiment", "eps_ladder", d.eps_ladder)?,
        resolve_factor: r.integer("experiment", "resolve_factor", d.resolve_factor)?,
        margin: r.real("experiment", "margin", d.margin)?,
        n_starts: r.integer("experiment", "n_starts", d.n_starts)?,
        lambda_ladder: r.reals("experiment", "lambda_ladder", d.lambda_ladder)?,
        exact: r.scalar("experiment", "exact", dim)?.unwrap_or(d.exact),
        oracle_resolution: r.integer("experiment", "oracle_resolution", d.oracle_resolution)?,
        oracle_points: r.integer("experiment", "oracle_points", d.oracle_points)?,
        beta: r.real("experiment", "beta", d.beta)?,
    };
    if !(experiment.beta > 0.0 && experiment.beta < 1.0) {
        return Err(r.bad("experiment", "beta", format!("must lie in (0, 1), got {}", experiment.beta)));
    }
    let dump_system = r.boolean("solver", "dump_system", false)?;
    Ok(Config { spec, divisions, settings, experiment, dump_system })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[coefficients]\nk = constant(1.0)\nb = constant(1.0)\nm = 3\n";

    #[test]
    fn minimal_file() {
        let c = parse_config(MINIMAL, &[]).unwrap();
        let a = c.spec.eval_a(1.0, [0.3, 0.4]).unwrap();
        assert_eq!((a.xx, a.xy, a.yy), (5.0, 0.0, 5.0));
        assert_eq!(c.divisions, vec![32, 32]);
        assert_eq!(c.settings, PicardSettings::default());
    }

    #[test]
    fn interval_violation_names_the_key() {
        let err = parse_config(&format!("{MINIMAL}[interval]\nT_min = 2\nT_max = 1\nT_star = 3\n"), &[]).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "T_max"), "{err}");
        assert!(err.to_string().contains("T_max"));
    }

    #[test]
    fn override_beats_file() {
        let text = format!("{MINIMAL}[solver]\ndamping = 0.8\n");
        let c = parse_config(&text, &["solver.damping=0.5".into()]).unwrap();
        assert_eq!(c.settings.damping, 0.5);
    }

    #[test]
    fn unknown_key_and_line_numbers() {
        let err = parse_config("[coefficients]\nk = 1\nkappa = 2\n", &[]).unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownKey { origin: Origin::Line(3), .. }), "{err}");
        let err = parse_config("[coefficients]\nk = 1\n[mesh]\n", &[]).unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownSection { origin: Origin::Line(3), .. }), "{err}");
        let err = parse_config("[coefficients]\nk 1\n", &[]).unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
        let err = parse_config(MINIMAL, &["solver.dampng=0.5".into()]).unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { origin: Origin::Override(_), .. }));
    }

    #[test]
    fn unknown_coefficient_lists_registry() {
        let err = parse_config("[coefficients]\nk = laminate(1, 2)\n", &[]).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("checkerboard(a, b)") && text.contains("smooth(c0, c1)"), "{text}");
        let err = parse_config("[coefficients]\nk = 1\n[boundary]\nu_b = wave(1)\n", &[]).unwrap_err();
        assert!(err.to_string().contains("sine_bump(c, a)"));
    }

    #[test]
    fn arity_and_values() {
        assert!(matches!(parse_config("[coefficients]\nk = checkerboard(1)\n", &[]), Err(ConfigError::BadValue { .. })));
        assert!(matches!(parse_config("[coefficients]\nk = 1\nm = three\n", &[]), Err(ConfigError::BadValue { .. })));
        assert!(matches!(parse_config("[coefficients]\nk = 1\nk = 2\n", &[]), Err(ConfigError::Duplicate { .. })));
        assert!(matches!(parse_config("[boundary]\nrobin = left\n", &[]), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn reference_file_matches_named_configuration() {
        let text = "\
[domain]
dim = 2
divisions = 32
[coefficients]
k = checkerboard(0.5, 2.0)   # conduction phases
b = checkerboard(0.1, 0.4)
m = 3
epsilon = 1/8
[boundary]
robin = left, right, top
alpha = 1
u_gas = 1
u_b = 1
[source]
s = 0.5
lambda_ref = 1
[interval]
T_min = 0.5
T_max = 1
T_star = 4
[experiment]
eps_ladder = 1/4, 1/8
";
        let c = parse_config(text, &[]).unwrap();
        let r = reference::rosseland_checkerboard();
        for x in [[0.1, 0.1], [0.3, 0.7], [0.9, 0.2]] {
            for u in [0.5, 1.0, 3.0] {
                assert_eq!(c.spec.eval_a(u, x).unwrap(), r.eval_a(u, x).unwrap());
            }
        }
        assert_eq!(c.spec.domain, r.domain);
        assert_eq!(c.experiment.eps_ladder, vec![0.25, 0.125]);
    }
}
