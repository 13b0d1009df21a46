//! Named configurations used by the experiments, the acceptance suite and the
//! shipped config files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Side;
use crate::problem::{Domain, ProblemSpec, ScalarFn, Source, TensorField};

/// Unit square with a checkerboard composite of period 1/8: conduction in
/// `{0.5, 2}`, radiation weight in `{0.1, 0.4}`, `m = 3`, source 0.5,
/// `u_b = 1` on the bottom and Robin exchange (`alpha = 1`, `u_gas = 1`)
/// on the other three sides. A zero-order term, when switched on, relaxes
/// towards 1. Meshed with 32 divisions per axis.
pub fn rosseland_checkerboard() -> ProblemSpec {
    let domain = Domain::unit(2).with_robin(&[Side::Left, Side::Right, Side::Top]);
    let mut p = ProblemSpec::new(domain, TensorField::checkerboard(0.5, 2.0, 2), TensorField::checkerboard(0.1, 0.4, 2));
    p.m = 3.0;
    p.epsilon = 0.125;
    p.alpha = 1.0;
    p.u_gas = ScalarFn::constant(1.0);
    p.u_b = ScalarFn::constant(1.0);
    p.f = Source::constant(0.5);
    p.t_min = 0.5;
    p.t_max = 1.0;
    p.t_star = 4.0;
    p.lambda_ref = 1.0;
    p
}

pub const REFERENCE_DIVISIONS: usize = 32;

/// Checkerboard configuration with parameters drawn from a ChaCha8 stream:
/// conduction phases in `[0.5, 1] x [1.5, 3]`, radiation phases in
/// `[0.05, 0.2] x [0.2, 0.5]`, source in `[0.2, 1]`, `alpha` in `[0.5, 2]`,
/// period `1/4` or `1/8`.
pub fn randomized_variant(seed: u64) -> ProblemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = rosseland_checkerboard();
    p.k = TensorField::checkerboard(rng.random_range(0.5..=1.0), rng.random_range(1.5..=3.0), 2);
    p.b = TensorField::checkerboard(rng.random_range(0.05..=0.2), rng.random_range(0.2..=0.5), 2);
    p.f = Source::constant(rng.random_range(0.2..=1.0));
    p.alpha = rng.random_range(0.5..=2.0);
    p.epsilon = if rng.random_bool(0.5) { 0.25 } else { 0.125 };
    p
}

/// The checkerboard configuration with a large source and the ceiling pinned
/// at `T_max`, so the truncation stays active.
pub fn undersized_ceiling() -> ProblemSpec {
    let mut p = rosseland_checkerboard();
    p.f = Source::constant(40.0);
    p.t_star = p.t_max;
    p
}

/// Conduction-only checkerboard (`b = 0`) with the u-dependent source
/// `f(u) = 1 - u`, bottom held at 0.5 and Robin exchange with gas at 1.
pub fn interior_gradient_configuration() -> ProblemSpec {
    let mut p = rosseland_checkerboard();
    p.b = TensorField::constant(0.0);
    p.f = Source::affine(ScalarFn::constant(1.0), 1.0);
    p.u_b = ScalarFn::constant(0.5);
    p.t_min = 0.25;
    p.t_max = 1.0;
    p.t_star = 2.0;
    p
}

/// 1D Rosseland problem on (0, 1): `k = 1`, `b = 1`, `m = 3`, `u(0) = 1`,
/// Robin at `x = 1` with `alpha = 1`, `u_gas = 1.5`, interval `[1, 2]`.
pub fn rosseland_1d() -> ProblemSpec {
    let domain = Domain::unit(1).with_robin(&[Side::Right]);
    let mut p = ProblemSpec::new(domain, TensorField::constant(1.0), TensorField::constant(1.0));
    p.m = 3.0;
    p.alpha = 1.0;
    p.u_gas = ScalarFn::constant(1.5);
    p.u_b = ScalarFn::constant(1.0);
    p.f = Source::constant(0.0);
    p.t_min = 1.0;
    p.t_max = 2.0;
    p.t_star = 2.0;
    p
}

/// Smooth-coefficient template for manufactured solutions on the unit
/// square: bottom Dirichlet, Robin (`alpha = 50`) elsewhere.
pub fn mms_template(radiation: bool) -> ProblemSpec {
    let domain = Domain::unit(2).with_robin(&[Side::Left, Side::Right, Side::Top]);
    let b = if radiation { TensorField::smooth(0.1, 0.2, 2) } else { TensorField::constant(0.0) };
    let mut p = ProblemSpec::new(domain, TensorField::smooth(1.0, 1.0, 2), b);
    p.m = 3.0;
    p.epsilon = 0.5;
    p.alpha = 50.0;
    p.t_min = 1.0;
    p.t_max = 2.0;
    p.t_star = 4.0;
    p
}

/// Manufactured solution `1.5 + 0.25 sin(pi x) sin(pi y)`.
pub fn mms_exact() -> ScalarFn {
    ScalarFn::sine_bump(1.5, 0.25, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configurations_validate() {
        for p in [rosseland_checkerboard(), undersized_ceiling(), interior_gradient_configuration(), randomized_variant(3), rosseland_1d(), mms_template(true), mms_template(false)] {
            p.validate().unwrap();
        }
    }
}
