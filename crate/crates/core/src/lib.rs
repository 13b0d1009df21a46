//! Finite element solver for the Rosseland conduction-radiation equation
//!
//! ```text
//! -div( (k(x, x/eps) + 4 u^m b(x, x/eps)) ∇u ) + λ (u - u_ref) = f(u, x, x/eps)   in G
//! u = u_b                                                           on the Dirichlet part
//! A ∇u·n + α (u - u_gas) = 0                                        on the Robin part Γ
//! ```
//!
//! The nonlinear problem is solved by truncated Picard iteration: the
//! temperature is clamped into `[T_min, T_star]`, frozen in the coefficients
//! and the source, and the resulting linear P1 problem is solved with
//! Jacobi-preconditioned conjugate gradients. The [`verify`] module turns the
//! qualitative properties of the problem (bounds, existence of a fixed point,
//! uniqueness under a strong zero-order term, uniformity in `eps`) into
//! runnable experiments.

// Negated comparisons such as `!(x > 0.0)` are used on purpose: they also
// reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assemble;
pub mod config;
pub mod fixedpoint;
pub mod geometry;
pub mod linsolve;
pub mod problem;
pub mod sparse;
pub mod verify;

pub use assemble::{assemble_system, residual, DiscreteField, LinearSystem};
pub use fixedpoint::{clamp, discover_t_star, picard_step, solve_nonlinear, IterationReport, PicardSettings, Status};
pub use geometry::{build_rect_mesh, interior_subdomain, tag_boundary, BoundaryTag, Mesh, Point, Side};
pub use linsolve::{cg_solve, SolveStats};
pub use problem::{periodic_wrap, Domain, ProblemSpec, ScalarFn, Source, SymMat, TensorField};

/// The chapters of the guide in `book/` and the README, compiled as doctests so that every
/// snippet keeps working.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problem.md")]
    mod problem {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
