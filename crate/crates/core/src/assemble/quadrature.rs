//! Cell quadrature for P1 elements.
//!
//! Standard rules are two-point Gauss on intervals and the three-point
//! mid-edge rule on triangles (exact for quadratics). When the cell diameter
//! `h` exceeds `eps / 2` the cell is split into `s^n` congruent subcells with
//! `s = ceil(2 h / eps)` and the midpoint rule is used on each, so that
//! coefficients oscillating on the scale `eps` are sampled at least twice per
//! period.

use crate::geometry::{Mesh, Point};

/// Quadrature node with its weight (already scaled by the cell measure) and
/// the values of the cell's P1 shape functions at the node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadPoint {
    pub x: Point,
    pub weight: f64,
    pub shape: [f64; 3],
}

/// Longest edge of cell `c`.
pub fn cell_diameter(mesh: &Mesh, c: usize) -> f64 {
    let v = mesh.cell(c);
    let p = |i: usize| mesh.vertices()[v[i]];
    let dist = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    if mesh.dim() == 1 {
        dist(p(0), p(1))
    } else {
        dist(p(0), p(1)).max(dist(p(1), p(2))).max(dist(p(2), p(0)))
    }
}

/// Number of subdivisions per edge used for cell `c`; 1 means the standard rule.
pub fn subdivisions(mesh: &Mesh, c: usize, epsilon: f64) -> usize {
    let h = cell_diameter(mesh, c);
    if h > 0.5 * epsilon {
        (2.0 * h / epsilon).ceil() as usize
    } else {
        1
    }
}

fn point_from_barycentric(corners: &[Point], lam: [f64; 3]) -> Point {
    let mut x = [0.0; 2];
    for (c, l) in corners.iter().zip(lam) {
        x[0] += l * c[0];
        x[1] += l * c[1];
    }
    x
}

/// Quadrature rule for cell `c` given the oscillation scale `epsilon`.
pub fn cell_rule(mesh: &Mesh, c: usize, epsilon: f64) -> Vec<QuadPoint> {
    let corners: Vec<Point> = mesh.cell(c).iter().map(|&i| mesh.vertices()[i]).collect();
    let measure = mesh.cell_measure(c);
    let s = subdivisions(mesh, c, epsilon);

    if mesh.dim() == 1 {
        let at = |t: f64, weight: f64| QuadPoint {
            x: [corners[0][0] + t * (corners[1][0] - corners[0][0]), 0.0],
            weight,
            shape: [1.0 - t, t, 0.0],
        };
        if s == 1 {
            let d = 0.5 / 3f64.sqrt();
            vec![at(0.5 - d, 0.5 * measure), at(0.5 + d, 0.5 * measure)]
        } else {
            (0..s).map(|i| at((i as f64 + 0.5) / s as f64, measure / s as f64)).collect()
        }
    } else if s == 1 {
        [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]
            .into_iter()
            .map(|lam| QuadPoint { x: point_from_barycentric(&corners, lam), weight: measure / 3.0, shape: lam })
            .collect()
    } else {
        // Regular refinement on the barycentric lattice: s(s+1)/2 upward and
        // s(s-1)/2 downward subtriangles, evaluated at their centroids.
        let sf = s as f64;
        let weight = measure / (sf * sf);
        let mut pts = Vec::with_capacity(s * s);
        let mut push = |a: f64, b: f64| {
            let lam = [1.0 - (a + b) / sf, a / sf, b / sf];
            pts.push(QuadPoint { x: point_from_barycentric(&corners, lam), weight, shape: lam });
        };
        for i in 0..s {
            for j in 0..s - i {
                let (i, j) = (i as f64, j as f64);
                push(i + 1.0 / 3.0, j + 1.0 / 3.0);
                if i + j + 2.0 <= sf {
                    push(i + 2.0 / 3.0, j + 2.0 / 3.0);
                }
            }
        }
        pts
    }
}

/// Degree-five rule (three-point Gauss on intervals, seven-point rule on
/// triangles), used for error norms rather than assembly.
pub fn accurate_rule(mesh: &Mesh, c: usize) -> Vec<QuadPoint> {
    let corners: Vec<Point> = mesh.cell(c).iter().map(|&i| mesh.vertices()[i]).collect();
    let measure = mesh.cell_measure(c);
    if mesh.dim() == 1 {
        let d = 0.5 * (0.6f64).sqrt();
        [(0.5 - d, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + d, 5.0 / 18.0)]
            .into_iter()
            .map(|(t, w)| QuadPoint {
                x: [corners[0][0] + t * (corners[1][0] - corners[0][0]), 0.0],
                weight: w * measure,
                shape: [1.0 - t, t, 0.0],
            })
            .collect()
    } else {
        const A1: f64 = 0.059_715_871_789_770;
        const B1: f64 = 0.470_142_064_105_115;
        const W1: f64 = 0.132_394_152_788_506;
        const A2: f64 = 0.797_426_985_353_087;
        const B2: f64 = 0.101_286_507_323_456;
        const W2: f64 = 0.125_939_180_544_827;
        let third = 1.0 / 3.0;
        [
            ([third, third, third], 0.225),
            ([A1, B1, B1], W1),
            ([B1, A1, B1], W1),
            ([B1, B1, A1], W1),
            ([A2, B2, B2], W2),
            ([B2, A2, B2], W2),
            ([B2, B2, A2], W2),
        ]
        .into_iter()
        .map(|(lam, w)| QuadPoint { x: point_from_barycentric(&corners, lam), weight: w * measure, shape: lam })
        .collect()
    }
}

/// Integral of `integrand` over cell `c`.
pub fn apply_quadrature(mesh: &Mesh, c: usize, epsilon: f64, integrand: impl Fn(&QuadPoint) -> f64) -> f64 {
    cell_rule(mesh, c, epsilon).iter().map(|q| q.weight * integrand(q)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_rect_mesh;
    use std::f64::consts::PI;

    #[test]
    fn one_cell_1d() {
        let m = build_rect_mesh(&[(0.0, 1.0)], &[1]).unwrap();
        assert!((apply_quadrature(&m, 0, 10.0, |q| q.x[0]) - 0.5).abs() < 1e-15);
        // two-point Gauss integrates cubics exactly
        assert!((apply_quadrature(&m, 0, 10.0, |q| q.x[0].powi(3)) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unit_triangle_area() {
        let m = build_rect_mesh(&[(0.0, 1.0), (0.0, 1.0)], &[1, 1]).unwrap();
        for c in 0..2 {
            assert!((apply_quadrature(&m, c, 10.0, |_| 1.0) - 0.5).abs() < 1e-15);
        }
        let quad: f64 = (0..2).map(|c| apply_quadrature(&m, c, 10.0, |q| q.x[0] * q.x[1])).sum();
        assert!((quad - 0.25).abs() < 1e-15);
    }

    #[test]
    fn accurate_rule_degree() {
        let m = build_rect_mesh(&[(0.0, 1.0), (0.0, 1.0)], &[1, 1]).unwrap();
        let quad: f64 = (0..2).map(|c| accurate_rule(&m, c).iter().map(|q| q.weight * q.x[0].powi(3) * q.x[1].powi(2)).sum::<f64>()).sum();
        assert!((quad - 1.0 / 12.0).abs() < 1e-14);
        let line = build_rect_mesh(&[(0.0, 1.0)], &[1]).unwrap();
        let quad: f64 = accurate_rule(&line, 0).iter().map(|q| q.weight * q.x[0].powi(5)).sum();
        assert!((quad - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn subdivided_rule_resolves_oscillation() {
        let eps = 0.1;
        let m = build_rect_mesh(&[(0.0, 1.0)], &[1]).unwrap();
        assert_eq!(subdivisions(&m, 0, eps), 20);
        let closed_form = 0.5 - (2.0 * PI / eps).sin() * eps / (4.0 * PI);
        let oracle: f64 = {
            let n = 200_000;
            (0..n).map(|i| ((PI * (i as f64 + 0.5) / n as f64) / eps).sin().powi(2)).sum::<f64>() / n as f64
        };
        assert!((oracle - closed_form).abs() < 1e-9);
        let rule = apply_quadrature(&m, 0, eps, |q| (PI * q.x[0] / eps).sin().powi(2));
        assert!((rule - closed_form).abs() < 1e-3, "{rule}");
    }

    #[test]
    fn subdivided_triangle_rule_is_consistent() {
        let m = build_rect_mesh(&[(0.0, 2.0), (0.0, 1.0)], &[1, 1]).unwrap();
        for c in 0..2 {
            let rule = cell_rule(&m, c, 0.3);
            let s = subdivisions(&m, c, 0.3);
            assert_eq!(rule.len(), s * s);
            let area: f64 = rule.iter().map(|q| q.weight).sum();
            assert!((area - 1.0).abs() < 1e-13);
            // midpoint rule is exact for linear functions
            let lin: f64 = rule.iter().map(|q| q.weight * (q.x[0] + 2.0 * q.x[1])).sum();
            let exact = apply_quadrature(&m, c, 100.0, |q| q.x[0] + 2.0 * q.x[1]);
            assert!((lin - exact).abs() < 1e-12);
            for q in &rule {
                assert!((q.shape.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                assert!(q.shape.iter().all(|&l| l > 0.0));
            }
        }
    }
}
