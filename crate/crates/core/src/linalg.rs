//! Small dense helpers shared across modules.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, CsgnnError, Result};

pub(crate) fn ensure_square(context: &'static str, a: &ArrayView2<f64>) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(CsgnnError::NonSquare {
            context,
            rows: r,
            cols: c,
        });
    }
    Ok(r)
}

pub(crate) fn ensure_same_shape(context: &'static str, a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(shape_err(context, format!("{:?}", a.dim()), format!("{:?}", b.dim())));
    }
    Ok(())
}

/// Vectorized ℓ¹ norm.
pub fn l1_norm(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn frobenius_norm(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Induced ℓ¹ norm: maximum absolute column sum.
pub fn max_abs_col_sum(a: &ArrayView2<f64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|col| col.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Induced ℓ∞ norm: maximum absolute row sum.
pub fn max_abs_row_sum(a: &ArrayView2<f64>) -> f64 {
    a.rows()
        .into_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// A guaranteed upper bound on the spectral norm, `min(‖A‖_F, √(‖A‖₁‖A‖_∞))`.
pub fn spectral_norm_upper(a: &ArrayView2<f64>) -> f64 {
    let holder = (max_abs_col_sum(a) * max_abs_row_sum(a)).sqrt();
    frobenius_norm(a).min(holder)
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration from a seeded Gaussian start. `apply` maps a flat vector of
/// length `dim` to its image.
pub fn power_iteration_psd<R: Rng + ?Sized>(
    dim: usize,
    iters: usize,
    rng: &mut R,
    mut apply: impl FnMut(&Array1<f64>) -> Array1<f64>,
) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let mut v: Array1<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = apply(&v);
        let rayleigh = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        lambda = rayleigh.max(lambda);
        v = w / wn;
    }
    // The final Rayleigh quotient is the tightest estimate seen.
    let w = apply(&v);
    lambda.max(v.dot(&w))
}

/// Spectral norm of a small matrix via power iteration on `AᵀA`.
pub fn spectral_norm_estimate<R: Rng + ?Sized>(a: &ArrayView2<f64>, rng: &mut R) -> f64 {
    let (_, cols) = a.dim();
    power_iteration_psd(cols, 100, rng, |v| a.t().dot(&a.dot(v)))
        .max(0.0)
        .sqrt()
}

/// `(K + Kᵀ)/2`.
pub fn symmetrize(k: &ArrayView2<f64>) -> Array2<f64> {
    (k + &k.t()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn column_sums() {
        let t = array![[1.0, -2.0], [3.0, 0.0]];
        assert_eq!(max_abs_col_sum(&t.view()), 4.0);
        assert_eq!(max_abs_row_sum(&t.view()), 3.0);
    }

    #[test]
    fn power_iteration_finds_top_singular_value() {
        let a = array![[3.0, 0.0], [0.0, -5.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = spectral_norm_estimate(&a.view(), &mut rng);
        assert!((s - 5.0).abs() < 1e-9);
        assert!(spectral_norm_upper(&a.view()) >= s);
    }
}
