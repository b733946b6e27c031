//! Fixtures shared by the benchmarks.

use csgnn_core::{gen_sbm, ArchConfig, Graph, NetworkParams, SbmConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Node counts the benchmarks sweep over.
pub const SIZES: [usize; 3] = [32, 64, 128];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric matrix with entries uniform in [0, 1).
pub fn symmetric_matrix(n: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    let a = Array2::from_shape_simple_fn((n, n), || r.random::<f64>());
    (&a + &a.t()) * 0.5
}

/// Benchmark SBM graph of `n` nodes.
pub fn sbm(n: usize, seed: u64) -> Graph {
    gen_sbm(
        &SbmConfig {
            n,
            ..SbmConfig::default()
        },
        seed,
    )
    .expect("valid SBM config")
}

/// Default network initialized on `g`.
pub fn network(g: &Graph, seed: u64) -> NetworkParams {
    NetworkParams::init(
        &ArchConfig::default(),
        g.feature_dim(),
        g.num_classes(),
        &g.adjacency.view(),
        &mut rng(seed),
    )
    .expect("valid architecture")
}
