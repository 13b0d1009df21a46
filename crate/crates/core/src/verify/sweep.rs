use crate::assemble::quadrature::accurate_rule;
use crate::assemble::DiscreteField;
use crate::fixedpoint::{solve_nonlinear, IterationReport, PicardSettings, Status};
use crate::geometry::{interior_subdomain, Mesh};
use crate::problem::ProblemSpec;

use super::{par_map, ExperimentReport, Table, Verdict, VerifyError};

pub const SWEEP_MAX_RATIO: f64 = 1.05;
pub const GRADIENT_MAX_RATIO: f64 = 1.10;
pub const MIN_RESOLVE_FACTOR: usize = 4;

struct Rung {
    epsilon: f64,
    spec: ProblemSpec,
    mesh: Mesh,
    run: IterationReport,
}

fn check_ladder(eps_ladder: &[f64], resolve_factor: usize) -> Result<(), VerifyError> {
    if eps_ladder.is_empty() || eps_ladder.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(VerifyError::Precondition("epsilon ladder must be non-empty and positive".into()));
    }
    if resolve_factor < MIN_RESOLVE_FACTOR {
        return Err(VerifyError::Precondition(format!("resolve factor must be at least {MIN_RESOLVE_FACTOR}, got {resolve_factor}")));
    }
    Ok(())
}

/// Solves `template` at every period in the ladder on a mesh with cell width
/// at most `eps / resolve_factor`, starting from `u = t_min`. Rungs run
/// concurrently.
fn solve_ladder(template: &ProblemSpec, eps_ladder: &[f64], resolve_factor: usize, settings: &PicardSettings) -> Result<Vec<Rung>, VerifyError> {
    par_map(eps_ladder, |&epsilon| {
        let mut spec = template.clone();
        spec.epsilon = epsilon;
        let mesh = spec.domain.mesh(&spec.domain.divisions_for(epsilon / resolve_factor as f64))?;
        let run = solve_nonlinear(&mesh, &spec, &DiscreteField::constant(&mesh, spec.t_min), settings)?;
        Ok(Rung { epsilon, spec, mesh, run })
    })
    .into_iter()
    .collect()
}

/// `(max, L2)` norms of `fine - coarse` on the fine mesh, the coarse field
/// being evaluated through its own mesh.
fn difference_norms(fine_mesh: &Mesh, fine: &DiscreteField, coarse_mesh: &Mesh, coarse: &DiscreteField) -> (f64, f64) {
    let coarse_at = |x| coarse.evaluate(coarse_mesh, x).expect("meshes cover the same domain");
    let max = fine_mesh.vertices().iter().zip(fine.values()).map(|(&x, v)| (v - coarse_at(x)).abs()).fold(0.0, f64::max);
    let mut sq = 0.0;
    for c in 0..fine_mesh.num_cells() {
        let cell = fine_mesh.cell(c);
        for q in accurate_rule(fine_mesh, c) {
            let uf: f64 = cell.iter().zip(q.shape).map(|(&v, s)| fine.values()[v] * s).sum();
            sq += q.weight * (uf - coarse_at(q.x)).powi(2);
        }
    }
    (max, sq.sqrt())
}

fn ladder_text(eps_ladder: &[f64]) -> String {
    eps_ladder.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" ")
}

fn spread(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Uniformity of the solution in the period: reports the max norm, Picard
/// step count and ellipticity constants per rung, the successive differences
/// in max and L² norm (reported only), and passes when the largest max norm
/// is within 5% of the one at the coarsest period.
pub fn epsilon_sweep(template: &ProblemSpec, eps_ladder: &[f64], resolve_factor: usize, settings: &PicardSettings) -> Result<ExperimentReport, VerifyError> {
    check_ladder(eps_ladder, resolve_factor)?;
    let mut report = ExperimentReport::new("sweep");
    report.param("ladder", ladder_text(eps_ladder));
    report.param("resolve_factor", resolve_factor);
    report.param("k", template.k.label());
    report.param("b", template.b.label());
    report.tolerance("max_ratio", SWEEP_MAX_RATIO);

    let rungs = solve_ladder(template, eps_ladder, resolve_factor, settings)?;
    let mut table = Table::new("rungs", &["epsilon", "divisions", "max_norm", "picard_steps", "c3", "c4"]);
    let mut diffs = Table::new("differences", &["epsilon_from", "epsilon_to", "max_diff", "l2_diff"]);
    let mut failed = false;
    for (i, r) in rungs.iter().enumerate() {
        if r.run.status != Status::Converged {
            report.notes.push(format!("epsilon {}: {}", r.epsilon, r.run.status.name()));
            failed = true;
        }
        let (c3, c4) = r.spec.ellipticity_interval(r.spec.t_min, r.spec.t_star)?;
        let max_norm = r.run.final_field.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
        table.push(vec![r.epsilon, r.mesh.divisions()[0] as f64, max_norm, r.run.steps.len() as f64, c3, c4]);
        if i > 0 {
            let prev = &rungs[i - 1];
            let (max, l2) = difference_norms(&r.mesh, &r.run.final_field, &prev.mesh, &prev.run.final_field);
            diffs.push(vec![prev.epsilon, r.epsilon, max, l2]);
        }
    }
    let norms = table.column("max_norm").unwrap();
    let steps = table.column("picard_steps").unwrap();
    let (lo, hi) = spread(&norms);
    let (s_lo, s_hi) = spread(&steps);
    report.metric("max_ratio", hi / norms[0]);
    report.metric("max_over_min", hi / lo);
    report.metric("step_spread", s_hi - s_lo);
    report.tables.push(table);
    report.tables.push(diffs);
    report.verdict = if !failed && hi <= SWEEP_MAX_RATIO * norms[0] { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

/// Largest `|∇u|` over the listed cells.
pub fn max_gradient_over(mesh: &Mesh, u: &DiscreteField, cells: &[usize]) -> f64 {
    cells.iter().map(|&c| {
        let g = u.cell_gradient(mesh, c);
        (g[0] * g[0] + g[1] * g[1]).sqrt()
    })
    .fold(0.0, f64::max)
}

/// Interior gradient bound for a u-independent coefficient: per period,
/// the largest cell gradient over cells at distance `margin` from the
/// boundary (asserted within 10% of the coarsest period) and over the
/// whole domain (reported only).
pub fn interior_gradient_experiment(
    template: &ProblemSpec,
    eps_ladder: &[f64],
    margin: f64,
    resolve_factor: usize,
    settings: &PicardSettings,
) -> Result<ExperimentReport, VerifyError> {
    check_ladder(eps_ladder, resolve_factor)?;
    if template.b.upper() != 0.0 {
        return Err(VerifyError::Precondition("the coefficient must not depend on u (b = 0)".into()));
    }
    let mut report = ExperimentReport::new("gradient");
    report.param("ladder", ladder_text(eps_ladder));
    report.param("margin", margin);
    report.param("resolve_factor", resolve_factor);
    report.param("k", template.k.label());
    report.param("f", template.f.label());
    report.tolerance("interior_ratio", GRADIENT_MAX_RATIO);

    let rungs = solve_ladder(template, eps_ladder, resolve_factor, settings)?;
    let mut table = Table::new("rungs", &["epsilon", "divisions", "interior_max_gradient", "global_max_gradient", "picard_steps"]);
    let mut failed = false;
    for r in &rungs {
        if r.run.status != Status::Converged {
            report.notes.push(format!("epsilon {}: {}", r.epsilon, r.run.status.name()));
            failed = true;
        }
        let interior = interior_subdomain(&r.mesh, margin)?;
        let all: Vec<usize> = (0..r.mesh.num_cells()).collect();
        table.push(vec![
            r.epsilon,
            r.mesh.divisions()[0] as f64,
            max_gradient_over(&r.mesh, &r.run.final_field, &interior),
            max_gradient_over(&r.mesh, &r.run.final_field, &all),
            r.run.steps.len() as f64,
        ]);
    }
    let interior = table.column("interior_max_gradient").unwrap();
    let (lo, hi) = spread(&interior);
    report.metric("interior_ratio", hi / interior[0]);
    report.metric("interior_max_over_min", hi / lo);
    let global = table.column("global_max_gradient").unwrap();
    let (g_lo, g_hi) = spread(&global);
    report.metric("global_max_over_min", g_hi / g_lo);
    report.tables.push(table);
    report.verdict = if !failed && hi <= GRADIENT_MAX_RATIO * interior[0] { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}
