//! Structured simplicial meshes of axis-aligned rectangles (1D intervals and
//! 2D right-triangle grids) with a Dirichlet/Robin partition of the boundary.
//!
//! Points are always stored as `[f64; 2]`; in 1D the second coordinate is zero.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub type Point = [f64; 2];

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: number of divisions must be positive")]
    Divisions { axis: usize },
    #[error("axis {axis}: degenerate extent ({low}, {high})")]
    Extent { axis: usize, low: f64, high: f64 },
    #[error("margin {margin} leaves no interior cells")]
    EmptyInterior { margin: f64 },
    #[error("margin {margin} must lie in (0, {max})")]
    Margin { margin: f64, max: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    Robin,
}

impl BoundaryTag {
    pub fn letter(self) -> char {
        match self {
            BoundaryTag::Dirichlet => 'D',
            BoundaryTag::Robin => 'R',
        }
    }
}

/// One side of the rectangle. In 1D only `Left` (x = low) and `Right`
/// (x = high) exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub fn parse(name: &str) -> Option<Side> {
        match name.trim() {
            "left" => Some(Side::Left),
            "right" => Some(Side::Right),
            "bottom" => Some(Side::Bottom),
            "top" => Some(Side::Top),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }

    pub fn all(dim: usize) -> &'static [Side] {
        if dim == 1 {
            &[Side::Left, Side::Right]
        } else {
            &[Side::Left, Side::Right, Side::Bottom, Side::Top]
        }
    }

    pub fn outward_normal(self) -> Point {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFacet {
    /// One vertex in 1D, two in 2D.
    pub vertices: Vec<usize>,
    pub tag: BoundaryTag,
    pub side: Side,
}

/// Conditions worth reporting about a boundary partition. None of them make
/// a mesh unusable.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryFlag {
    /// No Dirichlet facet: well-posedness relies on alpha > 0 or lambda > 0.
    PureRobin,
    /// The tag changes many times walking around the boundary.
    FrequentAlternation { switches: usize },
}

#[derive(Clone, Debug)]
pub struct Mesh {
    id: u64,
    dim: usize,
    extent: Vec<(f64, f64)>,
    divisions: Vec<usize>,
    vertices: Vec<Point>,
    cells: Vec<usize>,
    facets: Vec<BoundaryFacet>,
}

/// Builds the structured mesh of the box `extent` with `divisions` cells per
/// axis. Every boundary facet starts out tagged Dirichlet.
///
/// In 2D each grid square `(i, j)` is split along its `(i, j) - (i+1, j+1)`
/// diagonal, so all triangles are right triangles with the same orientation.
pub fn build_rect_mesh(extent: &[(f64, f64)], divisions: &[usize]) -> Result<Mesh, MeshError> {
    let dim = extent.len();
    if !(1..=2).contains(&dim) || divisions.len() != dim {
        return Err(MeshError::Dimension(dim));
    }
    for (axis, (&(low, high), &n)) in extent.iter().zip(divisions).enumerate() {
        if n == 0 {
            return Err(MeshError::Divisions { axis });
        }
        if !(low < high) || !low.is_finite() || !high.is_finite() {
            return Err(MeshError::Extent { axis, low, high });
        }
    }

    let coord = |axis: usize, i: usize| {
        let (low, high) = extent[axis];
        if i == divisions[axis] {
            high
        } else {
            low + (high - low) * i as f64 / divisions[axis] as f64
        }
    };

    let mut vertices = Vec::new();
    let mut cells = Vec::new();
    let mut facets = Vec::new();

    if dim == 1 {
        let n = divisions[0];
        vertices.extend((0..=n).map(|i| [coord(0, i), 0.0]));
        for i in 0..n {
            cells.extend_from_slice(&[i, i + 1]);
        }
        facets.push(BoundaryFacet { vertices: vec![0], tag: BoundaryTag::Dirichlet, side: Side::Left });
        facets.push(BoundaryFacet { vertices: vec![n], tag: BoundaryTag::Dirichlet, side: Side::Right });
    } else {
        let (nx, ny) = (divisions[0], divisions[1]);
        let index = |i: usize, j: usize| j * (nx + 1) + i;
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([coord(0, i), coord(1, j)]);
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10, v01, v11) = (index(i, j), index(i + 1, j), index(i, j + 1), index(i + 1, j + 1));
                cells.extend_from_slice(&[v00, v10, v11]);
                cells.extend_from_slice(&[v00, v11, v01]);
            }
        }
        let mut push = |a, b, side| facets.push(BoundaryFacet { vertices: vec![a, b], tag: BoundaryTag::Dirichlet, side });
        for i in 0..nx {
            push(index(i, 0), index(i + 1, 0), Side::Bottom);
        }
        for j in 0..ny {
            push(index(nx, j), index(nx, j + 1), Side::Right);
        }
        for i in (0..nx).rev() {
            push(index(i + 1, ny), index(i, ny), Side::Top);
        }
        for j in (0..ny).rev() {
            push(index(0, j + 1), index(0, j), Side::Left);
        }
    }

    Ok(Mesh {
        id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
        dim,
        extent: extent.to_vec(),
        divisions: divisions.to_vec(),
        vertices,
        cells,
        facets,
    })
}

/// Retags every boundary facet: Robin where `robin` holds at the facet
/// midpoint, Dirichlet elsewhere.
pub fn tag_boundary(mesh: &Mesh, robin: impl Fn(Point) -> bool) -> Mesh {
    let mut tagged = mesh.clone();
    for facet in &mut tagged.facets {
        let mid = mesh.facet_midpoint(facet);
        facet.tag = if robin(mid) { BoundaryTag::Robin } else { BoundaryTag::Dirichlet };
    }
    tagged
}

/// Cells whose barycenter lies at distance at least `margin` from the
/// boundary of the rectangle.
pub fn interior_subdomain(mesh: &Mesh, margin: f64) -> Result<Vec<usize>, MeshError> {
    let half_min = mesh.extent.iter().map(|(l, h)| 0.5 * (h - l)).fold(f64::INFINITY, f64::min);
    if !(margin > 0.0 && margin < half_min) {
        return Err(MeshError::Margin { margin, max: half_min });
    }
    let cells: Vec<usize> = (0..mesh.num_cells())
        .filter(|&c| mesh.distance_to_boundary(mesh.cell_barycenter(c)) >= margin - 1e-12)
        .collect();
    if cells.is_empty() {
        return Err(MeshError::EmptyInterior { margin });
    }
    Ok(cells)
}

impl Mesh {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> &[(f64, f64)] {
        &self.extent
    }

    pub fn divisions(&self) -> &[usize] {
        &self.divisions
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks(self.dim + 1)
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.facets
    }

    /// Largest cell diameter.
    pub fn h(&self) -> f64 {
        let steps: Vec<f64> = self.extent.iter().zip(&self.divisions).map(|((l, h), &n)| (h - l) / n as f64).collect();
        steps.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    pub fn domain_measure(&self) -> f64 {
        self.extent.iter().map(|(l, h)| h - l).product()
    }

    /// Length in 1D, signed area in 2D (positive for counter-clockwise cells).
    pub fn cell_measure(&self, c: usize) -> f64 {
        let v = self.cell(c);
        let p = |i: usize| self.vertices[v[i]];
        if self.dim == 1 {
            p(1)[0] - p(0)[0]
        } else {
            let (a, b, q) = (p(0), p(1), p(2));
            0.5 * ((b[0] - a[0]) * (q[1] - a[1]) - (q[0] - a[0]) * (b[1] - a[1]))
        }
    }

    pub fn cell_barycenter(&self, c: usize) -> Point {
        let v = self.cell(c);
        let k = v.len() as f64;
        let mut x = [0.0; 2];
        for &i in v {
            x[0] += self.vertices[i][0] / k;
            x[1] += self.vertices[i][1] / k;
        }
        x
    }

    /// Gradients of the P1 hat functions of cell `c`, in local vertex order.
    pub fn cell_gradients(&self, c: usize) -> [Point; 3] {
        let v = self.cell(c);
        let p = |i: usize| self.vertices[v[i]];
        if self.dim == 1 {
            let len = p(1)[0] - p(0)[0];
            [[-1.0 / len, 0.0], [1.0 / len, 0.0], [0.0, 0.0]]
        } else {
            let (a, b, q) = (p(0), p(1), p(2));
            let two_area = (b[0] - a[0]) * (q[1] - a[1]) - (q[0] - a[0]) * (b[1] - a[1]);
            [
                [(b[1] - q[1]) / two_area, (q[0] - b[0]) / two_area],
                [(q[1] - a[1]) / two_area, (a[0] - q[0]) / two_area],
                [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
            ]
        }
    }

    pub fn facet_measure(&self, facet: &BoundaryFacet) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            let (a, b) = (self.vertices[facet.vertices[0]], self.vertices[facet.vertices[1]]);
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
        }
    }

    pub fn facet_midpoint(&self, facet: &BoundaryFacet) -> Point {
        let k = facet.vertices.len() as f64;
        let mut x = [0.0; 2];
        for &i in &facet.vertices {
            x[0] += self.vertices[i][0] / k;
            x[1] += self.vertices[i][1] / k;
        }
        x
    }

    pub fn distance_to_boundary(&self, x: Point) -> f64 {
        self.extent
            .iter()
            .enumerate()
            .map(|(axis, &(l, h))| (x[axis] - l).min(h - x[axis]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Vertices lying on at least one Dirichlet facet. A vertex shared by a
    /// Dirichlet and a Robin facet is constrained.
    pub fn dirichlet_vertices(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_vertices()];
        for f in self.facets.iter().filter(|f| f.tag == BoundaryTag::Dirichlet) {
            for &v in &f.vertices {
                mask[v] = true;
            }
        }
        mask
    }

    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_vertices()];
        for f in &self.facets {
            for &v in &f.vertices {
                mask[v] = true;
            }
        }
        mask
    }

    pub fn count_tag(&self, tag: BoundaryTag) -> usize {
        self.facets.iter().filter(|f| f.tag == tag).count()
    }

    pub fn boundary_flags(&self) -> Vec<BoundaryFlag> {
        let mut flags = Vec::new();
        if !self.facets.is_empty() && self.count_tag(BoundaryTag::Dirichlet) == 0 {
            flags.push(BoundaryFlag::PureRobin);
        }
        // Facets are stored in boundary-walk order, so count cyclic tag changes.
        let n = self.facets.len();
        let switches = (0..n).filter(|&i| self.facets[i].tag != self.facets[(i + 1) % n].tag).count();
        if switches > 4 * Side::all(self.dim).len() {
            flags.push(BoundaryFlag::FrequentAlternation { switches });
        }
        flags
    }

    /// Checks positive cell measure and conformity: every interior facet is
    /// shared by exactly two cells and every other facet is a tagged
    /// boundary facet.
    pub fn check_conformity(&self) -> Result<(), String> {
        for c in 0..self.num_cells() {
            if self.cell_measure(c) <= 0.0 {
                return Err(format!("cell {c} has non-positive measure"));
            }
        }
        let mut owners: HashMap<Vec<usize>, usize> = HashMap::new();
        for cell in self.cells() {
            for skip in 0..cell.len() {
                let mut facet: Vec<usize> = cell.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &v)| v).collect();
                facet.sort_unstable();
                *owners.entry(facet).or_default() += 1;
            }
        }
        let boundary: BTreeSet<Vec<usize>> = self
            .facets
            .iter()
            .map(|f| {
                let mut v = f.vertices.clone();
                v.sort_unstable();
                v
            })
            .collect();
        if boundary.len() != self.facets.len() {
            return Err("duplicate boundary facet".into());
        }
        for (facet, count) in &owners {
            match (count, boundary.contains(facet)) {
                (1, true) | (2, false) => {}
                _ => return Err(format!("facet {facet:?} shared by {count} cells")),
            }
        }
        if boundary.iter().any(|f| !owners.contains_key(f)) {
            return Err("boundary facet not attached to any cell".into());
        }
        Ok(())
    }

    /// Cell containing `x` and the barycentric coordinates of `x` in it, in
    /// local vertex order. Relies on the structured layout of
    /// [`build_rect_mesh`]; `None` outside the rectangle.
    pub fn locate(&self, x: Point) -> Option<(usize, [f64; 3])> {
        let mut idx = [0usize; 2];
        let mut local = [0.0; 2];
        for axis in 0..self.dim {
            let (l, h) = self.extent[axis];
            let n = self.divisions[axis];
            let tol = 1e-12 * (h - l);
            if x[axis] < l - tol || x[axis] > h + tol {
                return None;
            }
            let w = (h - l) / n as f64;
            let i = (((x[axis] - l) / w).floor().max(0.0) as usize).min(n - 1);
            idx[axis] = i;
            local[axis] = ((x[axis] - l) / w - i as f64).clamp(0.0, 1.0);
        }
        if self.dim == 1 {
            return Some((idx[0], [1.0 - local[0], local[0], 0.0]));
        }
        let (s, t) = (local[0], local[1]);
        let square = idx[1] * self.divisions[0] + idx[0];
        if s >= t {
            Some((2 * square, [1.0 - s, s - t, t]))
        } else {
            Some((2 * square + 1, [1.0 - t, s, t - s]))
        }
    }

    /// Line-oriented text export with `[vertices]`, `[cells]` and
    /// `[boundary]` sections.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("[vertices]\n");
        for v in &self.vertices {
            if self.dim == 1 {
                let _ = writeln!(out, "{}", v[0]);
            } else {
                let _ = writeln!(out, "{} {}", v[0], v[1]);
            }
        }
        out.push_str("[cells]\n");
        for cell in self.cells() {
            let line: Vec<String> = cell.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out.push_str("[boundary]\n");
        for f in &self.facets {
            let line: Vec<String> = f.vertices.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{} {}", line.join(" "), f.tag.letter());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(n: usize) -> Mesh {
        build_rect_mesh(&[(0.0, 1.0), (0.0, 1.0)], &[n, n]).unwrap()
    }

    #[test]
    fn counts_1d() {
        let m = build_rect_mesh(&[(0.0, 1.0)], &[4]).unwrap();
        assert_eq!(m.num_vertices(), 5);
        assert_eq!(m.num_cells(), 4);
        assert_eq!(m.boundary_facets().len(), 2);
    }

    #[test]
    fn counts_2d() {
        let m = unit_square(2);
        assert_eq!(m.num_vertices(), 9);
        assert_eq!(m.num_cells(), 8);
        assert_eq!(m.boundary_facets().len(), 8);
        assert!(m.boundary_facets().iter().all(|f| f.tag == BoundaryTag::Dirichlet));
    }

    #[test]
    fn uniform_areas() {
        let m = build_rect_mesh(&[(0.0, 2.0), (0.0, 1.0)], &[4, 2]).unwrap();
        for c in 0..m.num_cells() {
            assert!((m.cell_measure(c) - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn right_triangles() {
        let m = unit_square(3);
        for c in 0..m.num_cells() {
            let v = m.cell(c);
            let p: Vec<Point> = v.iter().map(|&i| m.vertices()[i]).collect();
            let has_right_angle = (0..3).any(|i| {
                let (a, b, q) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
                let dot = (b[0] - a[0]) * (q[0] - a[0]) + (b[1] - a[1]) * (q[1] - a[1]);
                dot.abs() < 1e-14
            });
            assert!(has_right_angle, "cell {c} is not a right triangle");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(build_rect_mesh(&[(0.0, 1.0)], &[0]), Err(MeshError::Divisions { axis: 0 })));
        assert!(matches!(build_rect_mesh(&[(1.0, 1.0)], &[3]), Err(MeshError::Extent { .. })));
        assert!(matches!(build_rect_mesh(&[(0.0, 1.0), (2.0, 1.0)], &[3, 3]), Err(MeshError::Extent { axis: 1, .. })));
        assert!(matches!(build_rect_mesh(&[], &[]), Err(MeshError::Dimension(0))));
    }

    #[test]
    fn conformity_and_measure() {
        for m in [
            build_rect_mesh(&[(0.0, 1.0)], &[7]).unwrap(),
            unit_square(5),
            build_rect_mesh(&[(-1.0, 2.0), (0.5, 1.25)], &[6, 3]).unwrap(),
        ] {
            m.check_conformity().unwrap();
            let total: f64 = (0..m.num_cells()).map(|c| m.cell_measure(c)).sum();
            assert!((total - m.domain_measure()).abs() <= 1e-12 * m.domain_measure());
        }
    }

    #[test]
    fn tagging() {
        let m = unit_square(2);
        let none = tag_boundary(&m, |_| false);
        assert_eq!(none.count_tag(BoundaryTag::Robin), 0);
        assert!(none.boundary_flags().is_empty());

        let top = tag_boundary(&m, |x| (x[1] - 1.0).abs() < 1e-12);
        assert_eq!(top.count_tag(BoundaryTag::Robin), 2);

        let all = tag_boundary(&m, |_| true);
        assert_eq!(all.count_tag(BoundaryTag::Dirichlet), 0);
        assert_eq!(all.boundary_flags(), vec![BoundaryFlag::PureRobin]);
        assert!(all.dirichlet_vertices().iter().all(|&d| !d));
    }

    #[test]
    fn tagging_is_idempotent() {
        let m = unit_square(4);
        let pred = |x: Point| x[0] > 0.3 && x[1] > 0.2;
        let once = tag_boundary(&m, pred);
        let twice = tag_boundary(&once, pred);
        assert_eq!(once.boundary_facets(), twice.boundary_facets());
    }

    #[test]
    fn shared_corner_is_dirichlet() {
        let m = tag_boundary(&unit_square(2), |x| x[1] > 0.999);
        let mask = m.dirichlet_vertices();
        // corners (0,1) and (1,1) touch left/right Dirichlet facets
        assert!(mask[6] && mask[8]);
        assert!(!mask[7]);
    }

    #[test]
    fn alternation_flag() {
        let m = unit_square(16);
        let zebra = tag_boundary(&m, |x| ((x[0] + x[1]) * 16.0) as i64 % 2 == 0);
        assert!(zebra.boundary_flags().iter().any(|f| matches!(f, BoundaryFlag::FrequentAlternation { .. })));
    }

    #[test]
    fn interior_cells() {
        let m = unit_square(8);
        let cells = interior_subdomain(&m, 0.25).unwrap();
        assert!(!cells.is_empty());
        for c in cells {
            let b = m.cell_barycenter(c);
            assert!((0.25..=0.75).contains(&b[0]) && (0.25..=0.75).contains(&b[1]));
        }
        assert!(matches!(interior_subdomain(&unit_square(2), 0.49), Err(MeshError::EmptyInterior { .. })));
        let line = build_rect_mesh(&[(0.0, 1.0)], &[10]).unwrap();
        assert_eq!(interior_subdomain(&line, 0.2).unwrap().len(), 6);
        assert!(matches!(interior_subdomain(&line, 0.6), Err(MeshError::Margin { .. })));
    }

    #[test]
    fn gradients_reproduce_linear_functions() {
        let m = build_rect_mesh(&[(0.0, 2.0), (0.0, 1.0)], &[3, 5]).unwrap();
        let f = |p: Point| 3.0 * p[0] - 2.0 * p[1] + 1.0;
        for c in 0..m.num_cells() {
            let g = m.cell_gradients(c);
            let mut grad = [0.0; 2];
            for (k, &v) in m.cell(c).iter().enumerate() {
                grad[0] += g[k][0] * f(m.vertices()[v]);
                grad[1] += g[k][1] * f(m.vertices()[v]);
            }
            assert!((grad[0] - 3.0).abs() < 1e-12 && (grad[1] + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn locate_recovers_points() {
        let m = build_rect_mesh(&[(0.0, 2.0), (-1.0, 1.0)], &[5, 3]).unwrap();
        for &x in &[[0.0, -1.0], [2.0, 1.0], [0.33, 0.1], [1.7, -0.95], [0.8, 0.2]] {
            let (c, lam) = m.locate(x).unwrap();
            let mut y = [0.0; 2];
            for (k, &v) in m.cell(c).iter().enumerate() {
                y[0] += lam[k] * m.vertices()[v][0];
                y[1] += lam[k] * m.vertices()[v][1];
            }
            assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
            assert!(lam.iter().all(|&l| l >= -1e-12));
        }
        assert!(m.locate([2.5, 0.0]).is_none());
        let line = build_rect_mesh(&[(0.0, 1.0)], &[4]).unwrap();
        assert_eq!(line.locate([0.6, 0.0]).unwrap().0, 2);
    }

    #[test]
    fn text_export() {
        let m = tag_boundary(&build_rect_mesh(&[(0.0, 1.0)], &[2]).unwrap(), |x| x[0] > 0.5);
        assert_eq!(m.to_text(), "[vertices]\n0\n0.5\n1\n[cells]\n0 1\n1 2\n[boundary]\n0 D\n2 R\n");
    }
}
