use crate::assemble::DiscreteField;
use crate::geometry::{Mesh, Side};
use crate::problem::ProblemSpec;

use super::VerifyError;

pub const ORACLE_DAMPING: f64 = 0.1;
pub const ORACLE_TOLERANCE: f64 = 1e-12;
pub const ORACLE_MAX_STEPS: usize = 10_000;
pub const ORACLE_MIN_POINTS: usize = 1000;

/// Nodal values of the finite-difference oracle on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub steps: usize,
}

impl OracleSolution {
    /// Piecewise-linear interpolant at `x` (clamped to the grid ends).
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.x.len();
        let (a, b) = (self.x[0], self.x[n - 1]);
        let t = ((x - a) / (b - a) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        let s = t - i as f64;
        (1.0 - s) * self.u[i] + s * self.u[i + 1]
    }
}

/// Scalar diffusion coefficient `k + 4 u^m b` of a 1D problem, evaluated
/// directly from the coefficient fields.
fn diffusion(spec: &ProblemSpec, u: f64, x: f64) -> f64 {
    let s = x / spec.epsilon;
    let y = [s - s.floor(), 0.0];
    let k = spec.k.at([x, 0.0], y).xx;
    let b = spec.b.at([x, 0.0], y).xx;
    k + 4.0 * u.powf(spec.m) * b
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut u = vec![0.0; n];
    u[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = d[i] - c[i] * u[i + 1];
    }
    u
}

/// Three-point finite-difference solution of
/// `-(A(u, x, x/eps) u')' + lambda (u - lambda_ref) = f(u, x, x/eps)` on a
/// uniform grid of `n_points` nodes. Interface coefficients are harmonic means
/// of nodal values, Robin ends use a half-cell balance, and the nonlinearity
/// is resolved by fixed-point iteration with damping 0.1 and clamping to
/// `[t_min, t_star]` until the update drops below 1e-12.
pub fn brute_force_1d(spec: &ProblemSpec, n_points: usize) -> Result<OracleSolution, VerifyError> {
    if spec.dim() != 1 {
        return Err(VerifyError::Precondition(format!("oracle needs a 1D problem, got {}D", spec.dim())));
    }
    if n_points < ORACLE_MIN_POINTS {
        return Err(VerifyError::Precondition(format!("oracle needs at least {ORACLE_MIN_POINTS} points, got {n_points}")));
    }
    let (a, b) = spec.domain.extent[0];
    let h = (b - a) / (n_points - 1) as f64;
    let x: Vec<f64> = (0..n_points).map(|i| a + h * i as f64).collect();
    let robin_left = spec.domain.robin_sides.contains(&Side::Left);
    let robin_right = spec.domain.robin_sides.contains(&Side::Right);
    let ends = [(0, robin_left), (n_points - 1, robin_right)];

    let mut v = vec![0.5 * (spec.t_min + spec.t_max); n_points];
    for &(i, robin) in &ends {
        if !robin {
            v[i] = spec.u_b.at([x[i], 0.0]);
        }
    }

    let mut lower = vec![0.0; n_points];
    let mut diag = vec![0.0; n_points];
    let mut upper = vec![0.0; n_points];
    let mut rhs = vec![0.0; n_points];
    let mut last_update = f64::INFINITY;
    for step in 1..=ORACLE_MAX_STEPS {
        let nodal: Vec<f64> = x.iter().zip(&v).map(|(&xi, &vi)| diffusion(spec, vi, xi)).collect();
        let face: Vec<f64> = nodal.windows(2).map(|w| 2.0 * w[0] * w[1] / (w[0] + w[1])).collect();
        let load = |i: usize| {
            let s = x[i] / spec.epsilon;
            spec.f.at(v[i], [x[i], 0.0], [s - s.floor(), 0.0]) + spec.lambda * spec.lambda_ref
        };
        for i in 0..n_points {
            let west = if i > 0 { face[i - 1] / h } else { 0.0 };
            let east = if i + 1 < n_points { face[i] / h } else { 0.0 };
            let volume = if i == 0 || i + 1 == n_points { 0.5 * h } else { h };
            lower[i] = -west;
            upper[i] = -east;
            diag[i] = west + east + volume * spec.lambda;
            rhs[i] = volume * load(i);
        }
        for &(i, robin) in &ends {
            if robin {
                diag[i] += spec.alpha;
                rhs[i] += spec.alpha * spec.u_gas.at([x[i], 0.0]);
            } else {
                lower[i] = 0.0;
                upper[i] = 0.0;
                diag[i] = 1.0;
                rhs[i] = spec.u_b.at([x[i], 0.0]);
            }
        }
        let solved = thomas(&lower, &diag, &upper, &rhs);
        let mut update = 0.0f64;
        for (vi, si) in v.iter_mut().zip(&solved) {
            let next = (*vi + ORACLE_DAMPING * (si - *vi)).clamp(spec.t_min, spec.t_star);
            update = update.max((next - *vi).abs());
            *vi = next;
        }
        if !update.is_finite() {
            break;
        }
        last_update = update;
        if update <= ORACLE_TOLERANCE {
            return Ok(OracleSolution { x, u: v, steps: step });
        }
    }
    Err(VerifyError::OracleNotConverged { steps: ORACLE_MAX_STEPS, update: last_update })
}

/// Max-norm difference between a 1D finite element field and the oracle,
/// taken at the finite element nodes.
pub fn compare_with_oracle(mesh: &Mesh, u: &DiscreteField, oracle: &OracleSolution) -> f64 {
    mesh.vertices().iter().zip(u.values()).map(|(p, &v)| (v - oracle.interpolate(p[0])).abs()).fold(0.0, f64::max)
}
