//! `rosseland`: solve a configured problem or run one of the verification
//! experiments, writing CSV tables and a verdict file.
//!
//! Exit codes: 0 pass/converged, 2 fail (including non-converged runs),
//! 3 configuration errors, 4 internal errors.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use rosseland::assemble::assemble_system;
use rosseland::config::{read_config, Config, ConfigError};
use rosseland::verify::{
    convergence_study, epsilon_sweep, holder_diagnostic, interior_gradient_experiment, mms_problem, suite, uniqueness_probe, ExperimentReport, Verdict,
    VerifyError,
};
use rosseland::{solve_nonlinear, DiscreteField};

#[derive(Parser, Debug)]
#[command(name = "rosseland", version, about = "Rosseland conduction-radiation solver and verification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Problem configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, `section.key=value` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Seed for randomized experiments.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Solve the nonlinear problem and check the a-posteriori bound.
    Solve,
    /// Manufactured-solution convergence study.
    Mms,
    /// Uniformity of the solution across a ladder of periods.
    Sweep,
    /// Uniqueness probe from random and extreme starting fields.
    Probe,
    /// Interior gradient bound across a ladder of periods.
    Gradient,
    /// Comparison with the 1D finite-difference oracle.
    Oracle1d,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Mms => "mms",
            Command::Sweep => "sweep",
            Command::Probe => "probe",
            Command::Gradient => "gradient",
            Command::Oracle1d => "oracle1d",
        }
    }
}

const EXIT_PASS: u8 = 0;
const EXIT_FAIL: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

/// Exit code of a finished experiment; a function of the verdict only.
fn exit_code(verdict: Verdict) -> u8 {
    match verdict {
        Verdict::Pass => EXIT_PASS,
        Verdict::Fail | Verdict::Inconclusive => EXIT_FAIL,
    }
}

#[derive(Debug)]
enum RunError {
    Config(String),
    Internal(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<VerifyError> for RunError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Precondition(_) | VerifyError::Problem(_) | VerifyError::Mesh(_) => RunError::Config(e.to_string()),
            other => RunError::Internal(other.to_string()),
        }
    }
}

fn internal(e: impl std::fmt::Display) -> RunError {
    RunError::Internal(e.to_string())
}

/// Metadata lines prefixed with `#` so that tools comparing runs can skip them.
struct Metadata {
    config_hash: String,
    seed: u64,
}

impl Metadata {
    fn header(&self) -> String {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        format!(
            "# config_sha256={}\n# seed={}\n# version={}\n# timestamp={timestamp}\n",
            self.config_hash,
            self.seed,
            env!("CARGO_PKG_VERSION")
        )
    }
}

fn config_hash(text: &str, overrides: &[String]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    for o in overrides {
        hasher.update(b"\n--set ");
        hasher.update(o.as_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|e| internal(format!("cannot write {}: {e}", path.display())))
}

fn write_report(out: &Path, report: &ExperimentReport, meta: &Metadata) -> Result<(), RunError> {
    let header = meta.header();
    write_file(&out.join(format!("{}.report.csv", report.name)), &format!("{header}{}", report.to_csv()))?;
    write_file(&out.join(format!("{}.verdict.txt", report.name)), &format!("{header}{}", report.verdict_text()))
}

fn field_csv(mesh: &rosseland::Mesh, u: &DiscreteField) -> String {
    let mut out = String::from("vertex,x,y,value\n");
    for (i, (p, v)) in mesh.vertices().iter().zip(u.values()).enumerate() {
        out.push_str(&format!("{i},{:.12e},{:.12e},{:.12e}\n", p[0], p[1], v));
    }
    out
}

fn solve(config: &Config, seed: u64, out: &Path, meta: &Metadata) -> Result<ExperimentReport, RunError> {
    let spec = &config.spec;
    let mesh = spec.domain.mesh(&config.divisions).map_err(|e| RunError::Config(e.to_string()))?;
    let run = solve_nonlinear(&mesh, spec, &DiscreteField::constant(&mesh, spec.t_min), &config.settings).map_err(internal)?;
    let mut report = rosseland::verify::linf_bound_check(&run, spec);
    report.name = "solve".into();
    report.param("divisions", config.divisions.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
    report.metric("picard_steps", run.steps.len() as f64);
    report.metric("holder_seminorm", holder_diagnostic(&mesh, &run.final_field, config.experiment.beta, seed));
    report.param("holder_beta", config.experiment.beta);
    let mut steps = rosseland::verify::Table::new("steps", &["step", "update_norm", "residual", "clamp_fraction", "cg_iters"]);
    for s in &run.steps {
        steps.push(vec![s.index as f64, s.update_norm, s.nonlinear_residual, s.clamp_fraction, s.solve.iterations as f64]);
    }
    report.tables.push(steps);

    write_file(&out.join("field.csv"), &format!("{}{}", meta.header(), field_csv(&mesh, &run.final_field)))?;
    write_file(&out.join("mesh.txt"), &mesh.to_text())?;
    if config.dump_system {
        let frozen = rosseland::clamp(&run.final_field, spec.t_min, spec.t_star);
        let system = assemble_system(&mesh, spec, &frozen).map_err(internal)?;
        let open = |name: &str| File::create(out.join(name)).map(BufWriter::new).map_err(internal);
        let (mut matrix, mut rhs) = (open("system.mtx")?, open("rhs.txt")?);
        system.write_dump(&mut matrix, &mut rhs).map_err(internal)?;
        matrix.flush().map_err(internal)?;
        rhs.flush().map_err(internal)?;
    }
    Ok(report)
}

fn run(cli: &Cli) -> Result<u8, RunError> {
    let path = cli.config.as_ref().ok_or_else(|| RunError::Config("--config PATH is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = read_config(path, &cli.overrides)?;
    fs::create_dir_all(&cli.out).map_err(|e| RunError::Config(format!("cannot create output directory {}: {e}", cli.out.display())))?;
    let meta = Metadata { config_hash: config_hash(&text, &cli.overrides), seed: cli.seed };
    let (spec, settings, exp) = (&config.spec, &config.settings, &config.experiment);

    let report = match cli.command {
        Command::Solve => solve(&config, cli.seed, &cli.out, &meta)?,
        Command::Mms => {
            let problem = mms_problem(&exp.exact, spec, exp.oracle_resolution)?;
            convergence_study(&problem, &exp.exact, &exp.division_ladder, settings)?
        }
        Command::Sweep => epsilon_sweep(spec, &exp.eps_ladder, exp.resolve_factor, settings)?,
        Command::Probe => {
            let mesh = spec.domain.mesh(&config.divisions).map_err(|e| RunError::Config(e.to_string()))?;
            uniqueness_probe(&mesh, spec, exp.n_starts, cli.seed, &exp.lambda_ladder, settings)?
        }
        Command::Gradient => interior_gradient_experiment(spec, &exp.eps_ladder, exp.margin, exp.resolve_factor, settings)?,
        Command::Oracle1d => suite::oracle_agreement(spec, config.divisions[0], exp.oracle_points, settings)?,
    };
    write_report(&cli.out, &report, &meta)?;
    eprintln!("{}: {}", cli.command.name(), report.verdict.name());
    Ok(exit_code(report.verdict))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(RunError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(RunError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
