//! Truncated Picard iteration for the quasilinear problem.
//!
//! The linearized map freezes the temperature in the coefficients and the
//! source, `v -> u`, where `u` solves the linear problem assembled from
//! `clamp(v, T_min, T_star)`. The driver relaxes and clamps each new iterate,
//! so every stored field lies in `[T_min, T_star]`.

use thiserror::Error;

use crate::assemble::{apply_dirichlet, assemble_unconstrained, dirichlet_values, residual_of, AssemblyError, DiscreteField, LinearSystem};
use crate::geometry::Mesh;
use crate::linsolve::{cg_solve_from, SolveError, SolveStats, DEFAULT_TOLERANCE};
use crate::problem::ProblemSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixedPointError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("no admissible ceiling on the ladder; observed maxima {maxima:?}")]
    UnboundedGrowth { maxima: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardSettings {
    pub damping: f64,
    pub update_tol: f64,
    pub residual_tol: f64,
    pub max_steps: usize,
    pub cg_tol: f64,
    /// `None` means ten times the number of unknowns.
    pub cg_max_iterations: Option<usize>,
    /// Halve the damping (down to 1/16) after two consecutive increases of
    /// the update norm.
    pub adaptive_damping: bool,
}

impl Default for PicardSettings {
    fn default() -> Self {
        PicardSettings {
            damping: 1.0,
            update_tol: 1e-8,
            residual_tol: 1e-8,
            max_steps: 200,
            cg_tol: DEFAULT_TOLERANCE,
            cg_max_iterations: None,
            adaptive_damping: true,
        }
    }
}

impl PicardSettings {
    pub fn validate(&self) -> Result<(), FixedPointError> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(FixedPointError::Settings(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.update_tol > 0.0 && self.residual_tol > 0.0 && self.cg_tol > 0.0) {
            return Err(FixedPointError::Settings("tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(FixedPointError::Settings("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxStepsExceeded,
    Diverged,
    ClampSaturated,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Converged => "Converged",
            Status::MaxStepsExceeded => "MaxStepsExceeded",
            Status::Diverged => "Diverged",
            Status::ClampSaturated => "ClampSaturated",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub index: usize,
    /// `max |v_{k+1} - v_k|`.
    pub update_norm: f64,
    /// Nonlinear defect of `v_{k+1}`.
    pub nonlinear_residual: f64,
    /// Fraction of vertices altered by the clamp at this step.
    pub clamp_fraction: f64,
    pub damping: f64,
    pub solve: SolveStats,
}

#[derive(Clone, Debug)]
pub struct IterationReport {
    pub steps: Vec<StepRecord>,
    pub status: Status,
    pub final_field: DiscreteField,
}

impl IterationReport {
    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }

    pub fn final_residual(&self) -> f64 {
        self.last().map_or(f64::NAN, |s| s.nonlinear_residual)
    }

    pub fn final_clamp_fraction(&self) -> f64 {
        self.last().map_or(0.0, |s| s.clamp_fraction)
    }

    /// Per-step table `step,update_norm,residual,clamp_fraction,cg_iters`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,update_norm,residual,clamp_fraction,cg_iters\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{}\n",
                s.index, s.update_norm, s.nonlinear_residual, s.clamp_fraction, s.solve.iterations
            ));
        }
        out
    }
}

/// Componentwise `min(max(v_i, low), high)`.
pub fn clamp(v: &DiscreteField, low: f64, high: f64) -> DiscreteField {
    clamp_counting(v, low, high).0
}

/// Clamps and counts the entries that changed.
pub fn clamp_counting(v: &DiscreteField, low: f64, high: f64) -> (DiscreteField, usize) {
    let mut altered = 0;
    let values = v
        .values()
        .iter()
        .map(|&x| {
            let c = x.clamp(low, high);
            if c != x {
                altered += 1;
            }
            c
        })
        .collect();
    (DiscreteField::from_parts(values, v.mesh_id()), altered)
}

fn cg_cap(settings: &PicardSettings, n: usize) -> usize {
    settings.cg_max_iterations.unwrap_or(10 * n.max(1))
}

/// CG tolerance for one Picard step: `cg_tol`, tightened so that the linear
/// residual is at most a tenth of `residual_tol` in absolute terms. Otherwise
/// a large load norm (strong Dirichlet coupling on fine meshes) would leave a
/// floor on the nonlinear defect above `residual_tol`.
fn step_tolerance(settings: &PicardSettings, linear: &LinearSystem) -> f64 {
    let b_norm = linear.rhs.iter().zip(&linear.constraints).filter(|(_, c)| c.is_none()).map(|(b, _)| b * b).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return settings.cg_tol;
    }
    settings.cg_tol.min(0.1 * settings.residual_tol / b_norm).max(MIN_RELATIVE_CG_TOL)
}

/// Floor on the relative CG tolerance, near the roundoff level.
const MIN_RELATIVE_CG_TOL: f64 = 1e-15;

/// One application of the linearized map to `clamp(v)`, warm-started at the
/// clamped field.
pub fn picard_step(mesh: &Mesh, spec: &ProblemSpec, v: &DiscreteField, settings: &PicardSettings) -> Result<(DiscreteField, SolveStats), FixedPointError> {
    let frozen = clamp(v, spec.t_min, spec.t_star);
    let system = apply_dirichlet(assemble_unconstrained(mesh, spec, &frozen)?, dirichlet_values(mesh, spec), mesh.id());
    Ok(cg_solve_from(&system, Some(frozen.values()), settings.cg_tol, cg_cap(settings, mesh.num_vertices()), |_, _| {})?)
}

/// Relaxed, clamped Picard iteration
/// `v_{k+1} = clamp((1 - d) v_k + d T(v_k))` from `v0`.
///
/// Converged when the max-norm update is at most `update_tol` and the
/// nonlinear defect of the new iterate at most `residual_tol`. A clamp that
/// alters at least half the vertices for five consecutive steps ends the run
/// with `ClampSaturated`, which means the ceiling is too low.
pub fn solve_nonlinear(mesh: &Mesh, spec: &ProblemSpec, v0: &DiscreteField, settings: &PicardSettings) -> Result<IterationReport, FixedPointError> {
    settings.validate()?;
    v0.check(mesh)?;
    let (low, high) = (spec.t_min, spec.t_star);
    let n = mesh.num_vertices();
    let constraints = dirichlet_values(mesh, spec);
    let free: Vec<bool> = constraints.iter().map(Option::is_none).collect();
    let divergence_limit = 1e6 * (high - low);

    let mut v = clamp(v0, low, high);
    let mut system = assemble_unconstrained(mesh, spec, &v)?;
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut damping = settings.damping;
    let mut increases = 0;
    let mut saturated_run = 0;

    for index in 1..=settings.max_steps {
        let linear = apply_dirichlet(system, constraints.clone(), mesh.id());
        let (u, solve) = cg_solve_from(&linear, Some(v.values()), step_tolerance(settings, &linear), cg_cap(settings, n), |_, _| {})?;
        let relaxed: Vec<f64> = v.values().iter().zip(u.values()).map(|(a, b)| (1.0 - damping) * a + damping * b).collect();
        let (next, altered) = clamp_counting(&DiscreteField::from_parts(relaxed, mesh.id()), low, high);
        let update_norm = next.max_diff(&v);

        let step_damping = damping;
        let diverged = !update_norm.is_finite() || update_norm > divergence_limit;
        if diverged {
            steps.push(StepRecord { index, update_norm, nonlinear_residual: f64::NAN, clamp_fraction: altered as f64 / n as f64, damping, solve });
            return Ok(IterationReport { steps, status: Status::Diverged, final_field: v });
        }

        system = assemble_unconstrained(mesh, spec, &next)?;
        let nonlinear_residual = residual_of(&system, &free, next.values());
        let clamp_fraction = altered as f64 / n as f64;
        if let Some(prev) = steps.last() {
            increases = if update_norm > prev.update_norm { increases + 1 } else { 0 };
        }
        steps.push(StepRecord { index, update_norm, nonlinear_residual, clamp_fraction, damping: step_damping, solve });
        v = next;

        if update_norm <= settings.update_tol && nonlinear_residual <= settings.residual_tol {
            return Ok(IterationReport { steps, status: Status::Converged, final_field: v });
        }
        saturated_run = if clamp_fraction >= 0.5 { saturated_run + 1 } else { 0 };
        if saturated_run >= 5 {
            return Ok(IterationReport { steps, status: Status::ClampSaturated, final_field: v });
        }
        if settings.adaptive_damping && increases >= 2 && damping > 1.0 / 16.0 {
            damping = (damping / 2.0).max(1.0 / 16.0);
            increases = 0;
        }
    }
    Ok(IterationReport { steps, status: Status::MaxStepsExceeded, final_field: v })
}

/// Outcome of the ceiling search.
#[derive(Clone, Debug)]
pub struct CeilingSearch {
    /// Accepted rung `T = T_max 2^j`.
    pub ceiling: f64,
    pub rung: usize,
    /// Solution maximum observed at each tried rung.
    pub maxima: Vec<f64>,
    pub report: IterationReport,
}

pub const CEILING_LADDER_RUNGS: usize = 8;

/// Smallest `T = T_max 2^j` (j < 8) such that the iteration run with ceiling
/// `T_star = safety T` converges to a field whose maximum is at most `T`,
/// i.e. the truncation is inactive at the solution.
pub fn discover_t_star(mesh: &Mesh, spec: &ProblemSpec, safety: f64, settings: &PicardSettings) -> Result<CeilingSearch, FixedPointError> {
    if !(safety >= 1.0) {
        return Err(FixedPointError::Settings(format!("safety factor must be >= 1, got {safety}")));
    }
    let mut maxima = Vec::new();
    for rung in 0..CEILING_LADDER_RUNGS {
        let ceiling = spec.t_max * 2f64.powi(rung as i32);
        let mut trial = spec.clone();
        trial.t_star = safety * ceiling;
        let start = DiscreteField::constant(mesh, trial.t_min);
        let report = solve_nonlinear(mesh, &trial, &start, settings)?;
        let max = report.final_field.max();
        maxima.push(max);
        if report.status == Status::Converged && max <= ceiling {
            return Ok(CeilingSearch { ceiling, rung, maxima, report });
        }
    }
    Err(FixedPointError::UnboundedGrowth { maxima })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Side;
    use crate::problem::{Domain, ScalarFn, Source, TensorField};
    use proptest::prelude::*;

    fn conduction() -> ProblemSpec {
        let mut p = ProblemSpec::new(Domain::unit(2).with_robin(&[Side::Top]), TensorField::checkerboard(0.5, 2.0, 2), TensorField::constant(0.0));
        p.epsilon = 0.25;
        p.alpha = 1.0;
        p.f = Source::constant(0.5);
        p.t_min = 0.5;
        p.t_max = 1.0;
        p.t_star = 4.0;
        p
    }

    fn rosseland() -> ProblemSpec {
        let mut p = conduction();
        p.b = TensorField::checkerboard(0.1, 0.4, 2);
        p.domain = p.domain.with_robin(&[Side::Top, Side::Left, Side::Right]);
        p
    }

    #[test]
    fn clamp_examples() {
        let mesh = crate::geometry::build_rect_mesh(&[(0.0, 1.0)], &[1]).unwrap();
        let v = DiscreteField::new(&mesh, vec![0.1, 5.0]).unwrap();
        assert_eq!(clamp(&v, 1.0, 2.0).values(), &[1.0, 2.0]);
        let inside = DiscreteField::new(&mesh, vec![1.2, 1.9]).unwrap();
        assert_eq!(clamp(&inside, 1.0, 2.0), inside);
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent(values in proptest::collection::vec(-10.0f64..10.0, 5), lo in -3.0f64..0.0, width in 0.0f64..5.0) {
            let mesh = crate::geometry::build_rect_mesh(&[(0.0, 1.0)], &[4]).unwrap();
            let v = DiscreteField::new(&mesh, values).unwrap();
            let once = clamp(&v, lo, lo + width);
            prop_assert_eq!(clamp(&once, lo, lo + width), once.clone());
            prop_assert!(once.values().iter().all(|&x| x >= lo && x <= lo + width));
        }
    }

    #[test]
    fn linear_map_is_constant_in_v() {
        let p = conduction();
        let mesh = p.domain.mesh(&[8, 8]).unwrap();
        let s = PicardSettings::default();
        let (a, _) = picard_step(&mesh, &p, &DiscreteField::constant(&mesh, 0.7), &s).unwrap();
        let (b, _) = picard_step(&mesh, &p, &DiscreteField::from_fn(&mesh, |x| 1.0 + x[0]), &s).unwrap();
        assert!(a.max_diff(&b) < 1e-10);
    }

    #[test]
    fn linear_problem_single_solve() {
        let p = conduction();
        let mesh = p.domain.mesh(&[8, 8]).unwrap();
        let s = PicardSettings::default();
        let start = DiscreteField::constant(&mesh, p.t_min);
        let (single, _) = picard_step(&mesh, &p, &start, &s).unwrap();
        let report = solve_nonlinear(&mesh, &p, &start, &s).unwrap();
        assert_eq!(report.status, Status::Converged);
        // one productive solve, then a zero-iteration confirmation
        assert_eq!(report.steps.iter().filter(|s| s.solve.iterations > 0).count(), 1);
        assert_eq!(report.steps.len(), 2);
        assert!(report.final_field.max_diff(&single) <= 1e-12);
    }

    #[test]
    fn constant_data_gives_constant_solution() {
        let mut p = rosseland();
        p.f = Source::constant(0.0);
        p.u_b = ScalarFn::constant(0.8);
        p.u_gas = ScalarFn::constant(0.8);
        let mesh = p.domain.mesh(&[8, 8]).unwrap();
        for start in [DiscreteField::constant(&mesh, 0.5), DiscreteField::from_fn(&mesh, |x| 0.5 + 3.0 * x[0] * x[1])] {
            let report = solve_nonlinear(&mesh, &p, &start, &PicardSettings::default()).unwrap();
            assert_eq!(report.status, Status::Converged);
            assert!(report.final_field.values().iter().all(|&u| (u - 0.8).abs() < 1e-8));
        }
    }

    #[test]
    fn nonlinear_fixed_point_properties() {
        let p = rosseland();
        let mesh = p.domain.mesh(&[16, 16]).unwrap();
        let s = PicardSettings::default();
        let start = DiscreteField::constant(&mesh, p.t_min);
        let report = solve_nonlinear(&mesh, &p, &start, &s).unwrap();
        assert_eq!(report.status, Status::Converged);
        assert!(report.final_residual() <= s.residual_tol);
        assert!(report.last().unwrap().update_norm <= s.update_tol);

        let (again, _) = picard_step(&mesh, &p, &report.final_field, &s).unwrap();
        assert!(again.max_diff(&report.final_field) <= 2.0 * s.update_tol);

        let half = PicardSettings { damping: 0.5, ..s };
        let relaxed = solve_nonlinear(&mesh, &p, &start, &half).unwrap();
        assert_eq!(relaxed.status, Status::Converged);
        assert!(relaxed.final_field.max_diff(&report.final_field) <= 10.0 * s.update_tol);
    }

    #[test]
    fn iterates_stay_in_interval() {
        let mut p = rosseland();
        p.f = Source::constant(6.0);
        p.t_star = 1.2;
        let mesh = p.domain.mesh(&[8, 8]).unwrap();
        let s = PicardSettings { max_steps: 12, ..PicardSettings::default() };
        let mut v = DiscreteField::constant(&mesh, p.t_min);
        for _ in 0..4 {
            let (u, _) = picard_step(&mesh, &p, &v, &s).unwrap();
            v = clamp(&u, p.t_min, p.t_star);
            assert!(v.values().iter().all(|&x| x >= p.t_min && x <= p.t_star));
        }
        let report = solve_nonlinear(&mesh, &p, &DiscreteField::constant(&mesh, 3.0), &s).unwrap();
        assert!(report.final_field.values().iter().all(|&x| x >= p.t_min && x <= p.t_star));
        assert_eq!(report.status, Status::ClampSaturated);
    }

    #[test]
    fn settings_are_checked() {
        let p = conduction();
        let mesh = p.domain.mesh(&[2, 2]).unwrap();
        let v = DiscreteField::constant(&mesh, 1.0);
        for bad in [
            PicardSettings { damping: 0.0, ..PicardSettings::default() },
            PicardSettings { damping: 1.5, ..PicardSettings::default() },
            PicardSettings { update_tol: 0.0, ..PicardSettings::default() },
            PicardSettings { max_steps: 0, ..PicardSettings::default() },
        ] {
            assert!(matches!(solve_nonlinear(&mesh, &p, &v, &bad), Err(FixedPointError::Settings(_))));
        }
        assert!(matches!(discover_t_star(&mesh, &p, 0.5, &PicardSettings::default()), Err(FixedPointError::Settings(_))));
    }

    #[test]
    fn max_steps_exhaustion() {
        let p = rosseland();
        let mesh = p.domain.mesh(&[8, 8]).unwrap();
        let s = PicardSettings { max_steps: 2, ..PicardSettings::default() };
        let report = solve_nonlinear(&mesh, &p, &DiscreteField::constant(&mesh, p.t_min), &s).unwrap();
        assert_eq!(report.status, Status::MaxStepsExceeded);
        assert_eq!(report.steps.len(), 2);
    }

    #[test]
    fn ceiling_examples() {
        let s = PicardSettings::default();
        // maximum principle: data below T_max keeps the solution below T_max
        let mut p = rosseland();
        p.f = Source::constant(0.0);
        p.u_b = ScalarFn::constant(0.9);
        let mesh = p.domain.mesh(&[8, 8]).unwrap();
        let found = discover_t_star(&mesh, &p, 2.0, &s).unwrap();
        assert_eq!(found.rung, 0);
        assert!(found.report.final_field.max() <= p.t_max + 1e-12);

        let mut roomy = p.clone();
        roomy.t_max = 100.0;
        let found = discover_t_star(&mesh, &roomy, 1.0, &s).unwrap();
        assert_eq!(found.rung, 0);
        assert!(found.report.steps.iter().all(|st| st.clamp_fraction == 0.0));

        let mut hot = rosseland();
        hot.domain = hot.domain.with_robin(&[Side::Left, Side::Right, Side::Bottom, Side::Top]);
        hot.alpha = 0.1;
        hot.f = Source::constant(2.0);
        let found = discover_t_star(&mesh, &hot, 2.0, &s).unwrap();
        assert!(found.rung >= 1);
        assert_eq!(found.maxima.len(), found.rung + 1);
    }
}
