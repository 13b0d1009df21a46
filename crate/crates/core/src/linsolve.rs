//! Jacobi-preconditioned conjugate gradients for the assembled SPD systems.

use thiserror::Error;

use crate::assemble::{DiscreteField, LinearSystem};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub breakdown_flag: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("CG did not reach the tolerance in {} iterations (relative residual {:.3e})", .0.iterations, .0.final_relative_residual)]
    NotConverged(SolveStats),
    #[error("CG breakdown after {} iterations: operator is not positive definite", .0.iterations)]
    Breakdown(SolveStats),
    #[error("non-positive diagonal entry {value} in row {row}")]
    NonPositiveDiagonal { row: usize, value: f64 },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("initial guess has length {got}, expected {expected}")]
    GuessLength { expected: usize, got: usize },
}

/// Default iteration cap: ten times the number of unknowns.
pub fn default_max_iterations(system: &LinearSystem) -> usize {
    10 * system.rhs.len().max(1)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `system` with zero initial guess on the free rows.
pub fn cg_solve(system: &LinearSystem, tol: f64, max_iterations: usize) -> Result<(DiscreteField, SolveStats), SolveError> {
    cg_solve_from(system, None, tol, max_iterations, |_, _| {})
}

/// Preconditioned CG starting from `guess` (free entries only; constrained
/// entries always start at their imposed values). Stops when
/// `|r|_2 <= tol |b_free|_2`, the norms taken over free rows. `monitor` sees
/// every iterate, starting with the initial one.
pub fn cg_solve_from(
    system: &LinearSystem,
    guess: Option<&[f64]>,
    tol: f64,
    max_iterations: usize,
    mut monitor: impl FnMut(usize, &[f64]),
) -> Result<(DiscreteField, SolveStats), SolveError> {
    if !(tol > 0.0) {
        return Err(SolveError::BadTolerance(tol));
    }
    let a = &system.matrix;
    let n = system.rhs.len();
    let diag = a.diagonal();
    if let Some((row, &value)) = diag.iter().enumerate().find(|(_, &d)| !(d > 0.0)) {
        return Err(SolveError::NonPositiveDiagonal { row, value });
    }

    let free: Vec<bool> = system.constraints.iter().map(Option::is_none).collect();
    let mut x = match guess {
        Some(g) if g.len() != n => return Err(SolveError::GuessLength { expected: n, got: g.len() }),
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    for (xi, c) in x.iter_mut().zip(&system.constraints) {
        if let Some(g) = c {
            *xi = *g;
        }
    }
    let done = |x: Vec<f64>, stats| (DiscreteField::from_parts(x, system.mesh_id()), stats);

    let b_norm = system.rhs.iter().zip(&free).filter(|(_, &f)| f).map(|(b, _)| b * b).sum::<f64>().sqrt();
    monitor(0, &x);
    if b_norm == 0.0 {
        for (xi, &f) in x.iter_mut().zip(&free) {
            if f {
                *xi = 0.0;
            }
        }
        return Ok(done(x, SolveStats::default()));
    }

    // Constrained rows are identity rows with exact values, so their residual
    // stays zero throughout.
    let mut r: Vec<f64> = a.mul_vec(&x).iter().zip(&system.rhs).zip(&free).map(|((ax, b), &f)| if f { b - ax } else { 0.0 }).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut stats = SolveStats { final_relative_residual: dot(&r, &r).sqrt() / b_norm, ..SolveStats::default() };

    while stats.final_relative_residual > tol {
        if stats.iterations >= max_iterations {
            return Err(SolveError::NotConverged(stats));
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            stats.breakdown_flag = true;
            return Err(SolveError::Breakdown(stats));
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        stats.iterations += 1;
        stats.final_relative_residual = dot(&r, &r).sqrt() / b_norm;
        monitor(stats.iterations, &x);
    }
    Ok(done(x, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    fn poisson_1d(n: usize) -> LinearSystem {
        // interior unknowns 1..n-1, boundary rows constrained to zero
        let h = 1.0 / n as f64;
        let mut t = Vec::new();
        let mut constraints = vec![None; n + 1];
        constraints[0] = Some(0.0);
        constraints[n] = Some(0.0);
        for i in 0..=n {
            if i == 0 || i == n {
                t.push((i, i, 1.0));
                continue;
            }
            t.push((i, i, 2.0 / h));
            if i > 1 {
                t.push((i, i - 1, -1.0 / h));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0 / h));
            }
        }
        let rhs = (0..=n).map(|i| if i == 0 || i == n { 0.0 } else { h }).collect();
        LinearSystem::from_parts(CsrMatrix::from_triplets(n + 1, t), rhs, constraints)
    }

    #[test]
    fn identity_in_one_iteration() {
        let sys = LinearSystem::from_parts(CsrMatrix::identity(4), vec![1.0, -2.0, 3.0, 0.5], vec![None; 4]);
        let (u, stats) = cg_solve(&sys, 1e-12, 10).unwrap();
        assert_eq!(u.values(), &[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(stats.iterations, 1);
    }

    #[test]
    fn poisson_finite_termination() {
        let sys = poisson_1d(64);
        let (u, stats) = cg_solve(&sys, 1e-10, 1000).unwrap();
        assert!(stats.iterations <= 64, "{} iterations", stats.iterations);
        assert!(stats.final_relative_residual <= 1e-10);
        for (i, v) in u.values().iter().enumerate() {
            let x = i as f64 / 64.0;
            assert!((v - x * (1.0 - x) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn warm_start_at_solution_takes_no_iterations() {
        let sys = poisson_1d(16);
        let (u, _) = cg_solve(&sys, 1e-12, 1000).unwrap();
        let (again, stats) = cg_solve_from(&sys, Some(u.values()), 1e-10, 1000, |_, _| {}).unwrap();
        assert_eq!(stats.iterations, 0);
        assert_eq!(again.values(), u.values());
    }

    #[test]
    fn error_paths() {
        let sys = poisson_1d(32);
        assert!(matches!(cg_solve(&sys, 1e-12, 3), Err(SolveError::NotConverged(s)) if s.iterations == 3));
        assert!(matches!(cg_solve(&sys, 0.0, 3), Err(SolveError::BadTolerance(_))));
        let bad = LinearSystem::from_parts(CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, -1.0)]), vec![1.0, 1.0], vec![None; 2]);
        assert!(matches!(cg_solve(&bad, 1e-8, 10), Err(SolveError::NonPositiveDiagonal { row: 1, .. })));
        let indefinite =
            LinearSystem::from_parts(CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]), vec![1.0, -1.0], vec![None; 2]);
        assert!(matches!(cg_solve(&indefinite, 1e-8, 10), Err(SolveError::Breakdown(s)) if s.breakdown_flag));
        assert!(matches!(cg_solve_from(&sys, Some(&[0.0; 3]), 1e-8, 10, |_, _| {}), Err(SolveError::GuessLength { .. })));
    }

    #[test]
    fn zero_load_gives_zero() {
        let mut sys = poisson_1d(8);
        sys.rhs.iter_mut().for_each(|r| *r = 0.0);
        let (u, stats) = cg_solve_from(&sys, Some(&[1.0; 9]), 1e-10, 100, |_, _| {}).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
        assert_eq!(stats.iterations, 0);
    }
}
