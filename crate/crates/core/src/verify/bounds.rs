use crate::assemble::DiscreteField;
use crate::fixedpoint::{IterationReport, Status};
use crate::geometry::Mesh;
use crate::problem::ProblemSpec;

use super::{ExperimentReport, Verdict};

/// A-posteriori L∞ check: passes when the run converged, the final field lies
/// in `[t_min, t_star]` and the truncation was inactive at the final step, so
/// the bound holds for the untruncated problem.
pub fn linf_bound_check(report: &IterationReport, spec: &ProblemSpec) -> ExperimentReport {
    let mut out = ExperimentReport::new("linf_bound");
    out.param("status", report.status.name());
    out.param("t_min", spec.t_min);
    out.param("t_star", spec.t_star);
    out.param("steps", report.steps.len());
    out.tolerance("clamp_fraction", 0.0);
    let field = &report.final_field;
    let (min, max) = (field.min(), field.max());
    let clamp_fraction = report.final_clamp_fraction();
    out.metric("field_min", min);
    out.metric("field_max", max);
    out.metric("final_clamp_fraction", clamp_fraction);
    out.metric("final_residual", report.final_residual());

    let mut ok = true;
    if report.status != Status::Converged {
        out.notes.push(format!("run ended with status {}", report.status.name()));
        ok = false;
    }
    if !(min >= spec.t_min && max <= spec.t_star) {
        out.notes.push(format!("field range [{min}, {max}] leaves [{}, {}]", spec.t_min, spec.t_star));
        ok = false;
    }
    if clamp_fraction != 0.0 {
        out.notes.push(format!("truncation active on a fraction {clamp_fraction} of the vertices at the final step"));
        ok = false;
    }
    out.verdict = if ok { Verdict::Pass } else { Verdict::Fail };
    out
}

/// Amount by which the interior extrema of `u` exceed the boundary extrema:
/// `max(max_int - max_bdry, min_bdry - min_int)`. Non-positive means the
/// discrete maximum principle holds.
pub fn check_discrete_maximum_principle(mesh: &Mesh, u: &DiscreteField) -> f64 {
    let boundary = mesh.boundary_vertices();
    let mut b = (f64::INFINITY, f64::NEG_INFINITY);
    let mut i = (f64::INFINITY, f64::NEG_INFINITY);
    for (&on_boundary, &v) in boundary.iter().zip(u.values()) {
        let e = if on_boundary { &mut b } else { &mut i };
        e.0 = e.0.min(v);
        e.1 = e.1.max(v);
    }
    if i.0.is_infinite() {
        return f64::NEG_INFINITY;
    }
    (i.1 - b.1).max(b.0 - i.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::{solve_nonlinear, PicardSettings};
    use crate::problem::{Domain, ScalarFn, Source, TensorField};
    use crate::verify::reference;

    #[test]
    fn constant_data_passes() {
        let mut p = ProblemSpec::new(Domain::unit(2), TensorField::constant(1.0), TensorField::constant(0.5));
        p.u_b = ScalarFn::constant(0.8);
        p.t_star = 2.0;
        let mesh = p.domain.mesh(&[6, 6]).unwrap();
        let run = solve_nonlinear(&mesh, &p, &DiscreteField::constant(&mesh, p.t_min), &PicardSettings::default()).unwrap();
        let check = linf_bound_check(&run, &p);
        assert_eq!(check.verdict, Verdict::Pass, "{:?}", check.notes);
        assert!(run.final_field.values().iter().all(|v| (v - 0.8).abs() < 1e-10));
    }

    #[test]
    fn undersized_ceiling_fails() {
        let p = reference::undersized_ceiling();
        let mesh = p.domain.mesh(&[16, 16]).unwrap();
        let run = solve_nonlinear(&mesh, &p, &DiscreteField::constant(&mesh, p.t_min), &PicardSettings::default()).unwrap();
        assert_eq!(run.status, Status::ClampSaturated);
        let check = linf_bound_check(&run, &p);
        assert_eq!(check.verdict, Verdict::Fail);
        assert!(check.notes.iter().any(|n| n.contains("ClampSaturated")));
    }

    #[test]
    fn maximum_principle_for_harmonic_problem() {
        let mut p = ProblemSpec::new(Domain::unit(2), TensorField::checkerboard(0.5, 2.0, 2), TensorField::constant(0.0));
        p.epsilon = 0.25;
        p.f = Source::constant(0.0);
        p.u_b = ScalarFn::custom("ramp", 1.0, 2.0, |x| 1.0 + x[0] * x[1]);
        p.t_min = 1.0;
        p.t_max = 2.0;
        p.t_star = 2.0;
        let mesh = p.domain.mesh(&[16, 16]).unwrap();
        let run = solve_nonlinear(&mesh, &p, &DiscreteField::constant(&mesh, 1.5), &PicardSettings::default()).unwrap();
        assert!(check_discrete_maximum_principle(&mesh, &run.final_field) <= 1e-10);
    }

    #[test]
    fn interior_bump_violates() {
        let mesh = crate::geometry::build_rect_mesh(&[(0.0, 1.0)], &[2]).unwrap();
        let u = DiscreteField::new(&mesh, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(check_discrete_maximum_principle(&mesh, &u), 1.0);
    }
}
