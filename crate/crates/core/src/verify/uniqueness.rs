use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assemble::DiscreteField;
use crate::fixedpoint::{solve_nonlinear, IterationReport, PicardSettings, Status};
use crate::geometry::Mesh;
use crate::problem::ProblemSpec;

use super::{par_map, ExperimentReport, Table, Verdict, VerifyError};

pub const DEFAULT_LAMBDA_LADDER: [f64; 4] = [0.0, 1.0, 10.0, 100.0];
/// Spread tolerance in units of the Picard update tolerance.
pub const SPREAD_FACTOR: f64 = 10.0;

/// `n_starts` seeded random fields with vertex values uniform in
/// `[t_min, t_star]`, followed by the constant extremes.
fn starting_fields(mesh: &Mesh, spec: &ProblemSpec, n_starts: usize, seed: u64) -> Vec<DiscreteField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<DiscreteField> = (0..n_starts)
        .map(|_| {
            let values = (0..mesh.num_vertices()).map(|_| rng.random_range(spec.t_min..=spec.t_star)).collect();
            DiscreteField::new(mesh, values).expect("length matches the mesh")
        })
        .collect();
    starts.push(DiscreteField::constant(mesh, spec.t_min));
    starts.push(DiscreteField::constant(mesh, spec.t_star));
    starts
}

fn pairwise_spread(fields: &[&DiscreteField]) -> f64 {
    let mut spread = 0.0f64;
    for (i, a) in fields.iter().enumerate() {
        for b in &fields[i + 1..] {
            spread = spread.max(a.max_diff(b));
        }
    }
    spread
}

fn run_starts(mesh: &Mesh, spec: &ProblemSpec, starts: &[DiscreteField], settings: &PicardSettings) -> Result<Vec<IterationReport>, VerifyError> {
    par_map(starts, |v0| solve_nonlinear(mesh, spec, v0, settings)).into_iter().map(|r| r.map_err(VerifyError::from)).collect()
}

/// Runs the Picard iteration from `n_starts` seeded random fields plus the two
/// constant extremes and measures the pairwise max-norm spread of the fixed
/// points at `spec.lambda`. Passes when the spread is at most
/// `10 * update_tol`; Inconclusive when any start fails to converge. The same
/// starts are then rerun for every `lambda` in `lambda_ladder` and the spread
/// is tabulated (reported, not asserted).
pub fn uniqueness_probe(
    mesh: &Mesh,
    spec: &ProblemSpec,
    n_starts: usize,
    seed: u64,
    lambda_ladder: &[f64],
    settings: &PicardSettings,
) -> Result<ExperimentReport, VerifyError> {
    if n_starts < 2 {
        return Err(VerifyError::Precondition(format!("need at least 2 random starts, got {n_starts}")));
    }
    if !(spec.lambda >= 0.0) || lambda_ladder.iter().any(|l| !(*l >= 0.0)) {
        return Err(VerifyError::Precondition("zero-order coefficients must be nonnegative".into()));
    }
    let tolerance = SPREAD_FACTOR * settings.update_tol;
    let mut report = ExperimentReport::new("probe");
    report.param("lambda", spec.lambda);
    report.param("n_starts", n_starts);
    report.param("seed", seed);
    report.tolerance("spread", tolerance);

    let starts = starting_fields(mesh, spec, n_starts, seed);
    let runs = run_starts(mesh, spec, &starts, settings)?;
    let mut per_start = Table::new("starts", &["start", "picard_steps", "converged", "final_residual", "distance_to_first"]);
    for (i, run) in runs.iter().enumerate() {
        per_start.push(vec![
            i as f64,
            run.steps.len() as f64,
            (run.status == Status::Converged) as u8 as f64,
            run.final_residual(),
            run.final_field.max_diff(&runs[0].final_field),
        ]);
        if run.status != Status::Converged {
            report.notes.push(format!("start {i}: {}", run.status.name()));
        }
    }
    let all_converged = runs.iter().all(|r| r.status == Status::Converged);
    let spread = pairwise_spread(&runs.iter().map(|r| &r.final_field).collect::<Vec<_>>());
    report.metric("spread", spread);
    report.tables.push(per_start);

    let mut ladder = Table::new("lambda_ladder", &["lambda", "spread", "converged", "max_picard_steps"]);
    for &lambda in lambda_ladder {
        let mut trial = spec.clone();
        trial.lambda = lambda;
        let runs = run_starts(mesh, &trial, &starts, settings)?;
        let converged: Vec<&DiscreteField> = runs.iter().filter(|r| r.status == Status::Converged).map(|r| &r.final_field).collect();
        let steps = runs.iter().map(|r| r.steps.len()).max().unwrap_or(0);
        ladder.push(vec![lambda, pairwise_spread(&converged), converged.len() as f64, steps as f64]);
    }
    report.tables.push(ladder);

    report.verdict = if !all_converged {
        Verdict::Inconclusive
    } else if spread <= tolerance {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(report)
}
