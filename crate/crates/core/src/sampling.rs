//! Seeded random instance generators shared by the property suites,
//! the test harness and the benchmarks.

use ndarray::Array2;
use rand::Rng;

use crate::adjacency::EquivariantCoeffs;

/// `k2..k9` uniform in `[-scale, scale]`, `α` uniform in `[alpha_min, 0]`,
/// `k1` derived for activations with smallest slope `slope`.
pub fn random_coeffs<R: Rng + ?Sized>(rng: &mut R, scale: f64, alpha_min: f64, slope: f64) -> EquivariantCoeffs {
    let mut ks = [0.0; 8];
    for k in ks.iter_mut() {
        *k = rng.random_range(-scale..=scale);
    }
    let alpha = if alpha_min < 0.0 {
        rng.random_range(alpha_min..=0.0)
    } else {
        0.0
    };
    EquivariantCoeffs::with_slope(ks, alpha, slope).expect("sampled alpha is non-positive")
}

/// Entries uniform in `[-scale, scale]`.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..=scale))
}

pub fn random_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Array2<f64> {
    let a = random_matrix(rng, n, n, scale);
    (&a + &a.t()) * 0.5
}

/// Symmetric 0/1 matrix without self-loops, each pair present with probability `p`.
pub fn random_binary_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                a[[i, j]] = 1.0;
                a[[j, i]] = 1.0;
            }
        }
    }
    a
}

/// Symmetric positive definite matrix `QᵀQ/c + shift·I`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, c: usize, shift: f64) -> Array2<f64> {
    let q = random_matrix(rng, c, c, 1.0);
    q.t().dot(&q) / c as f64 + Array2::<f64>::eye(c) * shift
}
