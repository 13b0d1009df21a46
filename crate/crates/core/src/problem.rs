//! Coefficient model `A(u, x, y) = k(x, y) + 4 u^m b(x, y)` with the fast
//! variable `y = x / eps` wrapped into the unit cell, plus source, boundary
//! data and the admissible temperature interval.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{build_rect_mesh, tag_boundary, Mesh, MeshError, Point, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("temperature {u} outside the admissible interval [{low}, {high}]")]
    OutOfInterval { u: f64, low: f64, high: f64 },
    #[error("ellipticity interval needs 0 < u_low <= u_high, got [{low}, {high}]")]
    BadTemperatureRange { low: f64, high: f64 },
    #[error("invalid problem: {key}: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ProblemError {
    ProblemError::Invalid { key, reason: reason.into() }
}

/// Symmetric 2x2 matrix. In 1D only `xx` is meaningful.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SymMat {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMat {
    pub const ZERO: SymMat = SymMat { xx: 0.0, xy: 0.0, yy: 0.0 };

    pub fn scalar(c: f64) -> SymMat {
        SymMat { xx: c, xy: 0.0, yy: c }
    }

    pub fn diag(a: f64, b: f64) -> SymMat {
        SymMat { xx: a, xy: 0.0, yy: b }
    }

    pub fn scale(self, s: f64) -> SymMat {
        SymMat { xx: s * self.xx, xy: s * self.xy, yy: s * self.yy }
    }

    pub fn apply(self, v: Point) -> Point {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    pub fn quad_form(self, v: Point) -> f64 {
        let w = self.apply(v);
        v[0] * w[0] + v[1] * w[1]
    }

    /// Eigenvalues in ascending order, restricted to the first `dim` axes.
    pub fn eigenvalues(self, dim: usize) -> (f64, f64) {
        if dim == 1 {
            return (self.xx, self.xx);
        }
        let mean = 0.5 * (self.xx + self.yy);
        let r = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mean - r, mean + r)
    }

    /// Operator 2-norm on the first `dim` axes.
    pub fn spectral_norm(self, dim: usize) -> f64 {
        let (lo, hi) = self.eigenvalues(dim);
        lo.abs().max(hi.abs())
    }

    pub fn frobenius(self, dim: usize) -> f64 {
        if dim == 1 {
            self.xx.abs()
        } else {
            (self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy).sqrt()
        }
    }
}

impl std::ops::Add for SymMat {
    type Output = SymMat;

    fn add(self, o: SymMat) -> SymMat {
        SymMat { xx: self.xx + o.xx, xy: self.xy + o.xy, yy: self.yy + o.yy }
    }
}

type TensorFn = dyn Fn(Point, Point) -> SymMat + Send + Sync;

/// Symmetric tensor field of `(x, y)` with known spectral bounds: for every
/// `(x, y)`, `lower |xi|^2 <= xi^T M xi` and `|M|_2 <= upper`.
#[derive(Clone)]
pub struct TensorField {
    label: String,
    lower: f64,
    upper: f64,
    eval: Arc<TensorFn>,
}

impl fmt::Debug for TensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TensorField({}, [{}, {}])", self.label, self.lower, self.upper)
    }
}

impl TensorField {
    /// Field with caller-supplied bounds. `y` is already wrapped into `[0,1)^n`.
    pub fn custom(
        label: impl Into<String>,
        lower: f64,
        upper: f64,
        eval: impl Fn(Point, Point) -> SymMat + Send + Sync + 'static,
    ) -> TensorField {
        TensorField { label: label.into(), lower, upper, eval: Arc::new(eval) }
    }

    /// `c I`.
    pub fn constant(c: f64) -> TensorField {
        TensorField::custom(format!("constant({c})"), c, c, move |_, _| SymMat::scalar(c))
    }

    /// Diagonal field `(c0 + c1 sin^2(pi y1) sin^2(pi y2)) I`; in 1D the
    /// product has the single factor `sin^2(pi y1)`. Requires `c1 >= 0`.
    pub fn smooth(c0: f64, c1: f64, dim: usize) -> TensorField {
        TensorField::custom(format!("smooth({c0}, {c1})"), c0, c0 + c1, move |_, y| {
            let mut s = (PI * y[0]).sin().powi(2);
            if dim == 2 {
                s *= (PI * y[1]).sin().powi(2);
            }
            SymMat::scalar(c0 + c1 * s)
        })
    }

    /// Two-phase checkerboard on the unit cell: `a I` where the sum of the
    /// half-cell indices of `y` is even, `b I` elsewhere.
    pub fn checkerboard(a: f64, b: f64, dim: usize) -> TensorField {
        TensorField::custom(format!("checkerboard({a}, {b})"), a.min(b), a.max(b), move |_, y| {
            let mut parity = (2.0 * y[0]).floor() as i64;
            if dim == 2 {
                parity += (2.0 * y[1]).floor() as i64;
            }
            SymMat::scalar(if parity % 2 == 0 { a } else { b })
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Evaluates at slow variable `x` and unit-cell point `y`.
    pub fn at(&self, x: Point, y: Point) -> SymMat {
        (self.eval)(x, y)
    }
}

type ScalarFnBox = dyn Fn(Point) -> f64 + Send + Sync;

/// Scalar function of position with known range, used for boundary data and
/// the u-independent part of the source.
#[derive(Clone)]
pub struct ScalarFn {
    label: String,
    lower: f64,
    upper: f64,
    eval: Arc<ScalarFnBox>,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.label)
    }
}

impl ScalarFn {
    pub fn custom(label: impl Into<String>, lower: f64, upper: f64, eval: impl Fn(Point) -> f64 + Send + Sync + 'static) -> ScalarFn {
        ScalarFn { label: label.into(), lower, upper, eval: Arc::new(eval) }
    }

    pub fn constant(c: f64) -> ScalarFn {
        ScalarFn::custom(format!("constant({c})"), c, c, move |_| c)
    }

    /// `c + a sin(pi x1) sin(pi x2)` (one factor in 1D).
    pub fn sine_bump(c: f64, a: f64, dim: usize) -> ScalarFn {
        ScalarFn::custom(format!("sine_bump({c}, {a})"), c - a.abs(), c + a.abs(), move |x| {
            let mut s = (PI * x[0]).sin();
            if dim == 2 {
                s *= (PI * x[1]).sin();
            }
            c + a * s
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn at(&self, x: Point) -> f64 {
        (self.eval)(x)
    }
}

type SourceFn = dyn Fn(f64, Point, Point) -> f64 + Send + Sync;

/// Volumetric source `f(u, x, y)`.
#[derive(Clone)]
pub struct Source {
    label: String,
    depends_on_u: bool,
    eval: Arc<SourceFn>,
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Source({})", self.label)
    }
}

impl Source {
    /// `f(u, x, y) = s(x) - sigma u`.
    pub fn affine(s: ScalarFn, sigma: f64) -> Source {
        let label = if sigma == 0.0 { s.label.clone() } else { format!("{} - {sigma} u", s.label) };
        Source { label, depends_on_u: sigma != 0.0, eval: Arc::new(move |u, x, _| s.at(x) - sigma * u) }
    }

    pub fn constant(c: f64) -> Source {
        Source::affine(ScalarFn::constant(c), 0.0)
    }

    pub fn custom(label: impl Into<String>, depends_on_u: bool, eval: impl Fn(f64, Point, Point) -> f64 + Send + Sync + 'static) -> Source {
        Source { label: label.into(), depends_on_u, eval: Arc::new(eval) }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn depends_on_u(&self) -> bool {
        self.depends_on_u
    }

    pub fn at(&self, u: f64, x: Point, y: Point) -> f64 {
        (self.eval)(u, x, y)
    }
}

/// The rectangle together with the sides that carry the Robin condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub extent: Vec<(f64, f64)>,
    pub robin_sides: BTreeSet<Side>,
}

impl Domain {
    pub fn unit(dim: usize) -> Domain {
        Domain { extent: vec![(0.0, 1.0); dim], robin_sides: BTreeSet::new() }
    }

    pub fn with_robin(mut self, sides: &[Side]) -> Domain {
        self.robin_sides = sides.iter().copied().collect();
        self
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    /// Side on which a boundary point lies; ties resolve in `Side::all` order.
    pub fn side_of(&self, x: Point) -> Option<Side> {
        let scale = self.extent.iter().map(|(l, h)| h - l).fold(0.0, f64::max);
        let tol = 1e-9 * scale;
        Side::all(self.dim()).iter().copied().find(|side| match side {
            Side::Left => (x[0] - self.extent[0].0).abs() <= tol,
            Side::Right => (x[0] - self.extent[0].1).abs() <= tol,
            Side::Bottom => (x[1] - self.extent[1].0).abs() <= tol,
            Side::Top => (x[1] - self.extent[1].1).abs() <= tol,
        })
    }

    /// Structured mesh with `divisions` cells per axis, boundary tagged from
    /// `robin_sides`.
    pub fn mesh(&self, divisions: &[usize]) -> Result<Mesh, MeshError> {
        let mesh = build_rect_mesh(&self.extent, divisions)?;
        Ok(tag_boundary(&mesh, |x| self.side_of(x).is_some_and(|s| self.robin_sides.contains(&s))))
    }

    /// Divisions per axis so that the cell width is at most `h`.
    pub fn divisions_for(&self, h: f64) -> Vec<usize> {
        self.extent.iter().map(|(l, hi)| (((hi - l) / h) - 1e-9).ceil().max(1.0) as usize).collect()
    }
}

/// Complete boundary-value problem.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub k: TensorField,
    pub b: TensorField,
    /// Radiation exponent, 3 for the Rosseland model.
    pub m: f64,
    /// Period of the microstructure.
    pub epsilon: f64,
    pub f: Source,
    /// Heat-transfer coefficient on the Robin part.
    pub alpha: f64,
    pub u_gas: ScalarFn,
    pub u_b: ScalarFn,
    /// Weight of the zero-order term `lambda (u - lambda_ref)`.
    pub lambda: f64,
    pub lambda_ref: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Truncation ceiling.
    pub t_star: f64,
}

/// Componentwise `frac(x_i / eps)` in `[0, 1)`.
pub fn periodic_wrap(x: Point, epsilon: f64) -> Point {
    let wrap = |t: f64| {
        let s = t / epsilon;
        let r = s - s.floor();
        // guards the rounding case s = -tiny, where r rounds to 1.0
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    };
    [wrap(x[0]), wrap(x[1])]
}

impl ProblemSpec {
    /// Pure conduction problem on the unit box with constant data; adjust the
    /// public fields from here.
    pub fn new(domain: Domain, k: TensorField, b: TensorField) -> ProblemSpec {
        ProblemSpec {
            domain,
            k,
            b,
            m: 3.0,
            epsilon: 1.0,
            f: Source::constant(0.0),
            alpha: 0.0,
            u_gas: ScalarFn::constant(1.0),
            u_b: ScalarFn::constant(1.0),
            lambda: 0.0,
            lambda_ref: 0.0,
            t_min: 0.5,
            t_max: 1.0,
            t_star: 2.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Unit-cell point of `x`.
    pub fn fast_variable(&self, x: Point) -> Point {
        periodic_wrap(x, self.epsilon)
    }

    /// `k(x, y) + 4 u^m b(x, y)` with `y = frac(x / eps)`. Fails outside
    /// `[t_min, t_star]`, where ellipticity is not guaranteed.
    pub fn eval_a(&self, u: f64, x: Point) -> Result<SymMat, ProblemError> {
        if !(u >= self.t_min && u <= self.t_star) {
            return Err(ProblemError::OutOfInterval { u, low: self.t_min, high: self.t_star });
        }
        let y = self.fast_variable(x);
        Ok(self.coefficient(u, x, y))
    }

    pub(crate) fn coefficient(&self, u: f64, x: Point, y: Point) -> SymMat {
        let k = self.k.at(x, y);
        if self.b.upper() == 0.0 {
            return k;
        }
        k + self.b.at(x, y).scale(4.0 * u.powf(self.m))
    }

    /// Uniform bounds `(C3, C4)` on `A` for `u` in `[u_low, u_high]`.
    pub fn ellipticity_interval(&self, u_low: f64, u_high: f64) -> Result<(f64, f64), ProblemError> {
        if !(u_low > 0.0 && u_low <= u_high) {
            return Err(ProblemError::BadTemperatureRange { low: u_low, high: u_high });
        }
        let c3 = self.k.lower() + 4.0 * u_low.powf(self.m) * self.b.lower();
        let c4 = self.k.upper() + 4.0 * u_high.powf(self.m) * self.b.upper();
        Ok((c3, c4))
    }

    /// Sample points on a regular grid of the domain, boundary included.
    fn sample_points(&self, per_axis: usize) -> Vec<Point> {
        let ext = &self.domain.extent;
        let t = |axis: usize, i: usize| ext[axis].0 + (ext[axis].1 - ext[axis].0) * i as f64 / (per_axis - 1) as f64;
        if self.dim() == 1 {
            (0..per_axis).map(|i| [t(0, i), 0.0]).collect()
        } else {
            (0..per_axis).flat_map(|j| (0..per_axis).map(move |i| (i, j))).map(|(i, j)| [t(0, i), t(1, j)]).collect()
        }
    }

    /// Sampled estimate of the Lipschitz constant of `f` in `u` on
    /// `[t_min, t_star]`.
    pub fn source_lipschitz_estimate(&self) -> f64 {
        let n_u = 33;
        let us: Vec<f64> = (0..n_u).map(|i| self.t_min + (self.t_star - self.t_min) * i as f64 / (n_u - 1) as f64).collect();
        let mut lip: f64 = 0.0;
        for x in self.sample_points(9) {
            let y = self.fast_variable(x);
            for w in us.windows(2) {
                if w[1] > w[0] {
                    let slope = (self.f.at(w[1], x, y) - self.f.at(w[0], x, y)).abs() / (w[1] - w[0]);
                    lip = if slope.is_finite() { lip.max(slope) } else { f64::INFINITY };
                }
            }
        }
        lip
    }

    /// Sampled `(min, max)` of `f` over the domain and `[t_min, t_star]`.
    pub fn source_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in self.sample_points(9) {
            let y = self.fast_variable(x);
            for u in [self.t_min, 0.5 * (self.t_min + self.t_star), self.t_star] {
                let v = self.f.at(u, x, y);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Checks the standing assumptions: interval ordering, positive
    /// conduction, boundary data inside `[t_min, t_max]` (sampled) and a
    /// finite sampled Lipschitz constant of `f`.
    pub fn validate(&self) -> Result<(), ProblemError> {
        let dim = self.dim();
        if !(1..=2).contains(&dim) {
            return Err(invalid("domain", format!("dimension {dim} not supported")));
        }
        for &(l, h) in &self.domain.extent {
            if !(l < h) {
                return Err(invalid("domain", format!("degenerate extent ({l}, {h})")));
            }
        }
        if let Some(side) = self.domain.robin_sides.iter().find(|s| !Side::all(dim).contains(s)) {
            return Err(invalid("robin", format!("side `{}` does not exist in {dim}D", side.name())));
        }
        if !(self.t_min > 0.0) {
            return Err(invalid("T_min", format!("must be positive, got {}", self.t_min)));
        }
        if !(self.t_min <= self.t_max) {
            return Err(invalid("T_max", format!("interval requires T_min <= T_max, got T_min = {} and T_max = {}", self.t_min, self.t_max)));
        }
        if !(self.t_max <= self.t_star) {
            return Err(invalid("T_star", format!("requires T_max <= T_star, got T_max = {} and T_star = {}", self.t_max, self.t_star)));
        }
        if !(self.k.lower() > 0.0 && self.k.lower() <= self.k.upper()) {
            return Err(invalid("k", format!("bounds must satisfy 0 < lower <= upper, got [{}, {}]", self.k.lower(), self.k.upper())));
        }
        if !(self.b.lower() >= 0.0 && self.b.lower() <= self.b.upper()) {
            return Err(invalid("b", format!("bounds must satisfy 0 <= lower <= upper, got [{}, {}]", self.b.lower(), self.b.upper())));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(invalid("m", format!("must be positive, got {}", self.m)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be nonnegative, got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be nonnegative, got {}", self.lambda)));
        }
        let inside = |v: f64| v >= self.t_min && v <= self.t_max;
        for x in self.sample_points(17) {
            let Some(side) = self.domain.side_of(x) else { continue };
            if self.domain.robin_sides.contains(&side) {
                let g = self.u_gas.at(x);
                if !inside(g) {
                    return Err(invalid("u_gas", format!("value {g} at {x:?} outside [T_min, T_max]")));
                }
            } else {
                let g = self.u_b.at(x);
                if !inside(g) {
                    return Err(invalid("u_b", format!("value {g} at {x:?} outside [T_min, T_max]")));
                }
            }
        }
        if !self.source_lipschitz_estimate().is_finite() {
            return Err(invalid("f", "source is not Lipschitz in u on [T_min, T_star]"));
        }
        let (lo, hi) = self.source_bounds();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(invalid("f", "source is not finite on [T_min, T_star]"));
        }
        Ok(())
    }
}
