//! Frozen-coefficient P1 discretization.
//!
//! For a fixed field `v` the bilinear form
//!
//! ```text
//! ∫ A(v, x, x/eps) ∇u·∇φ + λ ∫ u φ + α ∫_Γ u φ
//!     = ∫ f(v, x, x/eps) φ + λ u_ref ∫ φ + α ∫_Γ u_gas φ
//! ```
//!
//! is assembled on the mesh, with `u = u_b` imposed on Dirichlet vertices.
//! The zero-order and Robin boundary masses are lumped onto the diagonal,
//! which keeps the structured right-triangle stiffness an M-matrix.

pub mod quadrature;

use std::io::{self, Write};

use thiserror::Error;

use crate::geometry::{BoundaryTag, Mesh, Point};
use crate::problem::{ProblemError, ProblemSpec, SymMat};
use crate::sparse::CsrMatrix;

pub use quadrature::{apply_quadrature, cell_rule, QuadPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("field has {got} values but the mesh has {expected} vertices")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field belongs to mesh {field} but mesh {mesh} was given")]
    MeshMismatch { field: u64, mesh: u64 },
    #[error("field is non-finite at vertex {0}")]
    NonFinite(usize),
    #[error("frozen field violates the clamp interval: {0}")]
    OutOfInterval(#[from] ProblemError),
    #[error("singular system: no Dirichlet vertex, and neither alpha > 0 on a Robin facet nor lambda > 0")]
    Singular,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AssemblyWarning {
    /// The mesh does not resolve the period; subdivided quadrature is in use.
    UnderResolvedPeriod { h: f64, epsilon: f64 },
}

/// Nodal values of a P1 function on a particular mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField {
    values: Vec<f64>,
    mesh_id: u64,
}

impl DiscreteField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<DiscreteField, AssemblyError> {
        if values.len() != mesh.num_vertices() {
            return Err(AssemblyError::LengthMismatch { expected: mesh.num_vertices(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(AssemblyError::NonFinite(i));
        }
        Ok(DiscreteField { values, mesh_id: mesh.id() })
    }

    pub fn constant(mesh: &Mesh, c: f64) -> DiscreteField {
        DiscreteField { values: vec![c; mesh.num_vertices()], mesh_id: mesh.id() }
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(Point) -> f64) -> DiscreteField {
        DiscreteField { values: mesh.vertices().iter().map(|&x| f(x)).collect(), mesh_id: mesh.id() }
    }

    pub(crate) fn from_parts(values: Vec<f64>, mesh_id: u64) -> DiscreteField {
        DiscreteField { values, mesh_id }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max_i |self_i - other_i|`.
    pub fn max_diff(&self, other: &DiscreteField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// P1 interpolant at `x`; `None` outside the mesh.
    pub fn evaluate(&self, mesh: &Mesh, x: Point) -> Option<f64> {
        let (c, lam) = mesh.locate(x)?;
        Some(interpolate(&self.values, mesh.cell(c), &lam))
    }

    /// Constant gradient of the interpolant on cell `c`.
    pub fn cell_gradient(&self, mesh: &Mesh, c: usize) -> Point {
        let g = mesh.cell_gradients(c);
        let mut grad = [0.0; 2];
        for (k, &v) in mesh.cell(c).iter().enumerate() {
            grad[0] += g[k][0] * self.values[v];
            grad[1] += g[k][1] * self.values[v];
        }
        grad
    }

    pub(crate) fn check(&self, mesh: &Mesh) -> Result<(), AssemblyError> {
        if self.values.len() != mesh.num_vertices() {
            return Err(AssemblyError::LengthMismatch { expected: mesh.num_vertices(), got: self.values.len() });
        }
        if self.mesh_id != mesh.id() {
            return Err(AssemblyError::MeshMismatch { field: self.mesh_id, mesh: mesh.id() });
        }
        Ok(())
    }
}

/// Operator and load before Dirichlet constraints are imposed.
#[derive(Clone, Debug)]
pub struct UnconstrainedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub warnings: Vec<AssemblyWarning>,
}

/// Symmetric operator with Dirichlet rows replaced by identity rows.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Imposed value for each constrained vertex.
    pub constraints: Vec<Option<f64>>,
    pub warnings: Vec<AssemblyWarning>,
    mesh_id: u64,
}

impl LinearSystem {
    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn dirichlet_mask(&self) -> Vec<bool> {
        self.constraints.iter().map(Option::is_some).collect()
    }

    /// System without an owning mesh, mainly for solver tests.
    pub fn from_parts(matrix: CsrMatrix, rhs: Vec<f64>, constraints: Vec<Option<f64>>) -> LinearSystem {
        LinearSystem { matrix, rhs, constraints, warnings: Vec::new(), mesh_id: 0 }
    }

    /// Writes the matrix as 1-based `i j value` coordinate text and the load
    /// as one value per line.
    pub fn write_dump(&self, matrix: impl Write, mut rhs: impl Write) -> io::Result<()> {
        self.matrix.write_matrix_market(matrix)?;
        for v in &self.rhs {
            writeln!(rhs, "{v:.17e}")?;
        }
        Ok(())
    }
}

/// Imposed boundary values, `None` for free vertices.
pub fn dirichlet_values(mesh: &Mesh, spec: &ProblemSpec) -> Vec<Option<f64>> {
    mesh.dirichlet_vertices().into_iter().zip(mesh.vertices()).map(|(d, &x)| d.then(|| spec.u_b.at(x))).collect()
}

/// Diagonal of the lumped P1 mass matrix.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut mass = vec![0.0; mesh.num_vertices()];
    let share = 1.0 / (mesh.dim() + 1) as f64;
    for c in 0..mesh.num_cells() {
        let m = mesh.cell_measure(c);
        for &v in mesh.cell(c) {
            mass[v] += share * m;
        }
    }
    mass
}

fn check_solvable(mesh: &Mesh, spec: &ProblemSpec) -> Result<(), AssemblyError> {
    let has_dirichlet = mesh.count_tag(BoundaryTag::Dirichlet) > 0;
    let has_robin = spec.alpha > 0.0 && mesh.count_tag(BoundaryTag::Robin) > 0;
    if has_dirichlet || has_robin || spec.lambda > 0.0 {
        Ok(())
    } else {
        Err(AssemblyError::Singular)
    }
}

fn interpolate(values: &[f64], cell: &[usize], shape: &[f64; 3]) -> f64 {
    cell.iter().zip(shape).map(|(&v, s)| values[v] * s).sum()
}

/// Stiffness, lumped masses and load with coefficients frozen at `v`.
pub fn assemble_unconstrained(mesh: &Mesh, spec: &ProblemSpec, v: &DiscreteField) -> Result<UnconstrainedSystem, AssemblyError> {
    v.check(mesh)?;
    check_solvable(mesh, spec)?;
    let values = v.values();
    if let Some(&bad) = values.iter().find(|&&u| !(u >= spec.t_min && u <= spec.t_star)) {
        return Err(ProblemError::OutOfInterval { u: bad, low: spec.t_min, high: spec.t_star }.into());
    }

    let n = mesh.num_vertices();
    let dim = mesh.dim();
    let nodes = dim + 1;
    let mut triplets = Vec::with_capacity(mesh.num_cells() * nodes * nodes + n);
    let mut rhs = vec![0.0; n];
    let mut warnings = Vec::new();
    let h = mesh.h();
    if h > spec.epsilon {
        warnings.push(AssemblyWarning::UnderResolvedPeriod { h, epsilon: spec.epsilon });
    }

    for c in 0..mesh.num_cells() {
        let cell = mesh.cell(c);
        let grads = mesh.cell_gradients(c);
        // ∫_T A dx; P1 gradients are constant on the cell.
        let mut a_int = SymMat::ZERO;
        for q in cell_rule(mesh, c, spec.epsilon) {
            let u = interpolate(values, cell, &q.shape);
            let y = spec.fast_variable(q.x);
            a_int = a_int + spec.coefficient(u, q.x, y).scale(q.weight);
            let f = spec.f.at(u, q.x, y);
            for (k, &vk) in cell.iter().enumerate() {
                rhs[vk] += q.weight * f * q.shape[k];
            }
        }
        for (i, &vi) in cell.iter().enumerate() {
            let ag = a_int.apply(grads[i]);
            for (j, &vj) in cell.iter().enumerate() {
                let gj = grads[j];
                let value = if dim == 1 { ag[0] * gj[0] } else { ag[0] * gj[0] + ag[1] * gj[1] };
                triplets.push((vi, vj, value));
            }
        }
    }

    if spec.lambda > 0.0 {
        for (i, m) in lumped_mass(mesh).into_iter().enumerate() {
            triplets.push((i, i, spec.lambda * m));
            rhs[i] += spec.lambda * spec.lambda_ref * m;
        }
    }

    if spec.alpha > 0.0 {
        let gauss = 0.5 / 3f64.sqrt();
        for facet in mesh.boundary_facets().iter().filter(|f| f.tag == BoundaryTag::Robin) {
            if dim == 1 {
                let v0 = facet.vertices[0];
                triplets.push((v0, v0, spec.alpha));
                rhs[v0] += spec.alpha * spec.u_gas.at(mesh.vertices()[v0]);
            } else {
                let len = mesh.facet_measure(facet);
                let (a, b) = (facet.vertices[0], facet.vertices[1]);
                let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                triplets.push((a, a, 0.5 * spec.alpha * len));
                triplets.push((b, b, 0.5 * spec.alpha * len));
                for t in [0.5 - gauss, 0.5 + gauss] {
                    let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                    let g = spec.alpha * spec.u_gas.at(x) * 0.5 * len;
                    rhs[a] += g * (1.0 - t);
                    rhs[b] += g * t;
                }
            }
        }
    }

    Ok(UnconstrainedSystem { matrix: CsrMatrix::from_triplets(n, triplets), rhs, warnings })
}

/// Replaces constrained rows by identity rows and moves the known columns to
/// the load, which keeps the matrix symmetric.
pub fn apply_dirichlet(system: UnconstrainedSystem, constraints: Vec<Option<f64>>, mesh_id: u64) -> LinearSystem {
    let UnconstrainedSystem { mut matrix, mut rhs, warnings } = system;
    let n = matrix.n();
    let offsets = matrix.row_offsets().to_vec();
    let cols = matrix.col_indices().to_vec();
    let values = matrix.values_mut();
    for i in 0..n {
        for k in offsets[i]..offsets[i + 1] {
            let j = cols[k];
            match (constraints[i], constraints[j]) {
                (Some(_), _) => values[k] = if i == j { 1.0 } else { 0.0 },
                (None, Some(g)) => {
                    rhs[i] -= values[k] * g;
                    values[k] = 0.0;
                }
                (None, None) => {}
            }
        }
    }
    for (r, c) in rhs.iter_mut().zip(&constraints) {
        if let Some(g) = c {
            *r = *g;
        }
    }
    LinearSystem { matrix, rhs, constraints, warnings, mesh_id }
}

/// Discrete linearized problem for the frozen field `v`.
pub fn assemble_system(mesh: &Mesh, spec: &ProblemSpec, v: &DiscreteField) -> Result<LinearSystem, AssemblyError> {
    let system = assemble_unconstrained(mesh, spec, v)?;
    Ok(apply_dirichlet(system, dirichlet_values(mesh, spec), mesh.id()))
}

/// `max |K(u) u - F(u)|` over free rows of an already assembled system.
pub fn residual_of(system: &UnconstrainedSystem, free: &[bool], u: &[f64]) -> f64 {
    let ku = system.matrix.mul_vec(u);
    ku.iter().zip(&system.rhs).zip(free).filter(|(_, &f)| f).map(|((a, b), _)| (a - b).abs()).fold(0.0, f64::max)
}

/// Nonlinear defect `max |K(u) u - F(u)|` over unconstrained vertices.
pub fn residual(mesh: &Mesh, spec: &ProblemSpec, u: &DiscreteField) -> Result<f64, AssemblyError> {
    let system = assemble_unconstrained(mesh, spec, u)?;
    let free: Vec<bool> = mesh.dirichlet_vertices().into_iter().map(|d| !d).collect();
    Ok(residual_of(&system, &free, u.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Side;
    use crate::problem::{Domain, ScalarFn, Source, TensorField};

    fn conduction(dim: usize) -> ProblemSpec {
        let mut p = ProblemSpec::new(Domain::unit(dim), TensorField::constant(1.0), TensorField::constant(0.0));
        p.t_min = 0.5;
        p.t_max = 2.0;
        p.t_star = 4.0;
        p
    }

    fn dense_solve(sys: &LinearSystem) -> Vec<f64> {
        // Gaussian elimination with partial pivoting
        let mut a = sys.matrix.to_dense();
        let mut b = sys.rhs.clone();
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            let (pivot, below) = a.split_at_mut(k + 1);
            let pivot = &pivot[k];
            for (row, i) in below.iter_mut().zip(k + 1..n) {
                let f = row[k] / pivot[k];
                for (r, q) in row[k..].iter_mut().zip(&pivot[k..]) {
                    *r -= f * q;
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
            x[k] = (b[k] - s) / a[k][k];
        }
        x
    }

    #[test]
    fn harmonic_constant() {
        let p = conduction(2);
        let mesh = p.domain.mesh(&[4, 4]).unwrap();
        let sys = assemble_system(&mesh, &p, &DiscreteField::constant(&mesh, 1.0)).unwrap();
        for u in dense_solve(&sys) {
            assert!((u - 1.0).abs() < 1e-12);
        }
        assert_eq!(sys.matrix.symmetry_defect(), 0.0);
    }

    #[test]
    fn one_dimensional_poisson_nodal_exactness() {
        // w = u - 1 solves -w'' = 1, w(0) = w(1) = 0, so u = 1 + x(1-x)/2.
        let mut p = conduction(1);
        p.f = Source::constant(1.0);
        let mesh = p.domain.mesh(&[10]).unwrap();
        let sys = assemble_system(&mesh, &p, &DiscreteField::constant(&mesh, 1.0)).unwrap();
        let u = dense_solve(&sys);

        // independent oracle: dense three-point finite differences at N = 10^4
        let n = 10_000;
        let h = 1.0 / n as f64;
        // Thomas sweep for -w[i-1] + 2 w[i] - w[i+1] = h^2
        let (mut c, mut d) = (vec![0.0; n - 1], vec![0.0; n - 1]);
        let (mut c_prev, mut d_prev) = (0.0, 0.0);
        for i in 0..n - 1 {
            let denom = 2.0 + c_prev;
            c[i] = -1.0 / denom;
            d[i] = (h * h + d_prev) / denom;
            (c_prev, d_prev) = (c[i], d[i]);
        }
        let mut w = vec![0.0; n + 1];
        for i in (1..n).rev() {
            w[i] = d[i - 1] - c[i - 1] * w[i + 1];
        }
        for (k, x) in mesh.vertices().iter().enumerate() {
            let oracle = 1.0 + w[(x[0] * n as f64).round() as usize];
            assert!((u[k] - oracle).abs() < 1e-10, "vertex {k}: {} vs {oracle}", u[k]);
            assert!((u[k] - (1.0 + x[0] * (1.0 - x[0]) / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_for_rosseland_data() {
        let mut p = conduction(2);
        p.k = TensorField::checkerboard(0.5, 2.0, 2);
        p.b = TensorField::checkerboard(0.1, 0.4, 2);
        p.epsilon = 0.125;
        p.alpha = 1.0;
        p.lambda = 3.0;
        p.domain = p.domain.with_robin(&[Side::Top, Side::Right]);
        let mesh = p.domain.mesh(&[8, 8]).unwrap();
        let v = DiscreteField::from_fn(&mesh, |x| 1.0 + x[0] * x[1]);
        let sys = assemble_system(&mesh, &p, &v).unwrap();
        assert_eq!(sys.matrix.symmetry_defect(), 0.0);
        for (i, c) in sys.constraints.iter().enumerate() {
            if let Some(g) = c {
                assert_eq!(sys.rhs[i], *g);
                for (j, val) in sys.matrix.row(i) {
                    assert_eq!(val, if i == j { 1.0 } else { 0.0 });
                }
            }
        }
        // h = sqrt(2)/8 exceeds eps = 1/8
        assert_eq!(sys.warnings.len(), 1);
    }

    #[test]
    fn stiffness_row_sums_vanish() {
        let mut p = conduction(2);
        p.k = TensorField::smooth(0.5, 2.0, 2);
        p.b = TensorField::checkerboard(0.1, 0.4, 2);
        p.epsilon = 0.3;
        let mesh = p.domain.mesh(&[6, 5]).unwrap();
        let v = DiscreteField::from_fn(&mesh, |x| 1.0 + x[0]);
        let sys = assemble_unconstrained(&mesh, &p, &v).unwrap();
        for i in 0..mesh.num_vertices() {
            let s: f64 = sys.matrix.row(i).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-12, "row {i} sums to {s}");
        }
    }

    #[test]
    fn isotropic_stiffness_is_m_matrix() {
        let mut p = conduction(2);
        p.k = TensorField::checkerboard(0.5, 2.0, 2);
        p.b = TensorField::smooth(0.1, 0.4, 2);
        p.epsilon = 0.2;
        p.alpha = 2.0;
        p.lambda = 1.0;
        p.domain = p.domain.with_robin(&[Side::Top]);
        let mesh = p.domain.mesh(&[7, 9]).unwrap();
        let v = DiscreteField::from_fn(&mesh, |x| 1.0 + x[1]);
        let sys = assemble_system(&mesh, &p, &v).unwrap();
        for i in 0..mesh.num_vertices() {
            for (j, val) in sys.matrix.row(i) {
                if i != j {
                    assert!(val <= 0.0, "positive off-diagonal ({i}, {j}) = {val}");
                } else {
                    assert!(val > 0.0);
                }
            }
        }
    }

    #[test]
    fn lambda_adds_scaled_mass() {
        let mut p = conduction(2);
        p.k = TensorField::checkerboard(0.5, 2.0, 2);
        p.epsilon = 0.25;
        p.domain = p.domain.with_robin(&[Side::Left]);
        p.alpha = 0.5;
        let mesh = p.domain.mesh(&[5, 4]).unwrap();
        let v = DiscreteField::constant(&mesh, 1.0);
        let c = 0.75;
        p.lambda = c;
        let one = assemble_unconstrained(&mesh, &p, &v).unwrap();
        p.lambda = 2.0 * c;
        let two = assemble_unconstrained(&mesh, &p, &v).unwrap();
        let mass = lumped_mass(&mesh);
        for (i, m) in mass.iter().enumerate() {
            for (j, a2) in two.matrix.row(i) {
                let expected = if i == j { c * m } else { 0.0 };
                assert!((a2 - one.matrix.get(i, j) - expected).abs() < 1e-12);
            }
        }
        let total: f64 = mass.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn error_paths() {
        let p = conduction(2);
        let mesh = p.domain.mesh(&[2, 2]).unwrap();
        let other = p.domain.mesh(&[2, 2]).unwrap();
        assert!(matches!(
            assemble_system(&mesh, &p, &DiscreteField::constant(&other, 1.0)),
            Err(AssemblyError::MeshMismatch { .. })
        ));
        assert!(matches!(DiscreteField::new(&mesh, vec![1.0; 3]), Err(AssemblyError::LengthMismatch { expected: 9, got: 3 })));
        assert!(matches!(DiscreteField::new(&mesh, vec![f64::NAN; 9]), Err(AssemblyError::NonFinite(0))));
        assert!(matches!(
            assemble_system(&mesh, &p, &DiscreteField::constant(&mesh, 5.0)),
            Err(AssemblyError::OutOfInterval(_))
        ));

        let mut all_robin = conduction(2);
        all_robin.domain = all_robin.domain.with_robin(&[Side::Left, Side::Right, Side::Bottom, Side::Top]);
        let mesh = all_robin.domain.mesh(&[2, 2]).unwrap();
        let v = DiscreteField::constant(&mesh, 1.0);
        assert!(matches!(assemble_system(&mesh, &all_robin, &v), Err(AssemblyError::Singular)));
        all_robin.alpha = 1.0;
        assert!(assemble_system(&mesh, &all_robin, &v).is_ok());
        all_robin.alpha = 0.0;
        all_robin.lambda = 1.0;
        assert!(assemble_system(&mesh, &all_robin, &v).is_ok());
    }

    #[test]
    fn constant_state_has_zero_residual() {
        let mut p = conduction(2);
        p.k = TensorField::checkerboard(0.5, 2.0, 2);
        p.b = TensorField::checkerboard(0.1, 0.4, 2);
        p.epsilon = 0.25;
        p.u_b = ScalarFn::constant(1.5);
        let mesh = p.domain.mesh(&[6, 6]).unwrap();
        let u = DiscreteField::constant(&mesh, 1.5);
        assert!(residual(&mesh, &p, &u).unwrap() <= 1e-12);
    }

    #[test]
    fn dump_format() {
        let p = conduction(1);
        let mesh = p.domain.mesh(&[2]).unwrap();
        let sys = assemble_system(&mesh, &p, &DiscreteField::constant(&mesh, 1.0)).unwrap();
        let (mut m, mut r) = (Vec::new(), Vec::new());
        sys.write_dump(&mut m, &mut r).unwrap();
        let m = String::from_utf8(m).unwrap();
        assert_eq!(m.lines().nth(1), Some("3 3 7"));
        assert_eq!(String::from_utf8(r).unwrap().lines().count(), 3);
    }
}
