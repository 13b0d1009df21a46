use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assemble::DiscreteField;
use crate::geometry::Mesh;

/// Vertex count up to which every pair is examined.
pub const ALL_PAIRS_LIMIT: usize = 2000;
/// Number of seeded random pairs used on larger meshes.
pub const SAMPLED_PAIRS: usize = 100_000;

/// Discrete `C^beta` seminorm estimate `max |u(x) - u(z)| / |x - z|^beta`
/// over vertex pairs: all pairs up to 2000 vertices, otherwise 10⁵ pairs
/// drawn from a ChaCha8 stream seeded with `seed`.
pub fn holder_diagnostic(mesh: &Mesh, u: &DiscreteField, beta: f64, seed: u64) -> f64 {
    assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1), got {beta}");
    let x = mesh.vertices();
    let v = u.values();
    let ratio = |i: usize, j: usize| {
        let d = ((x[i][0] - x[j][0]).powi(2) + (x[i][1] - x[j][1]).powi(2)).sqrt();
        if d == 0.0 {
            0.0
        } else {
            (v[i] - v[j]).abs() / d.powf(beta)
        }
    };
    let n = x.len();
    let mut best = 0.0f64;
    if n <= ALL_PAIRS_LIMIT {
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(ratio(i, j));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..SAMPLED_PAIRS {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            best = best.max(ratio(i, j));
        }
    }
    best
}
