//! Permutation-equivariant, symmetry-preserving adjacency dynamics.
//!
//! The linear map `M` is spanned by nine basis operators on `n×n` matrices.
//! Its identity coefficient `k1` is never stored: it is derived from the
//! other eight, the margin `α ≤ 0` and the smallest activation slope `s` as
//! `k1 = α − Σ_{i≥2} |k_i| / s`. The explicit Euler step
//! `A ↦ A + h·σ(M(A))` is then non-expansive in the vectorized ℓ¹ norm
//! whenever `h ≤ 2 / ((1 + 1/s)·Σ|k_i| − α)`.
//!
//! With `s = 1` this is `k1 = α − Σ|k_i|` and `h ≤ 2 / (2Σ|k_i| − α)`. For a
//! leaky activation with `s < 1` the undivided `k1` is not enough: a Jacobian
//! column whose own entry sits on the flat branch while the rest of the
//! column sits on the steep branch can have ℓ¹ sum above one for every
//! `h > 0`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::activation::LeakyRelu;
use crate::error::{CsgnnError, Result};
use crate::linalg::{ensure_square, max_abs_col_sum};

/// Largest `n` for which [`build_t`] will materialize the `n²×n²` matrix.
pub const MAX_T_NODES: usize = 64;

/// Pre-activations below this magnitude are treated as sitting on the kink.
pub const KINK_TOLERANCE: f64 = 1e-6;

/// Central-difference step for [`jacobian_l1_probe`].
pub const PROBE_STEP: f64 = 1e-5;

/// Coefficients `k2..k9` and the contractivity margin `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivariantCoeffs {
    ks: [f64; 8],
    alpha: f64,
    slope: f64,
}

impl EquivariantCoeffs {
    /// `ks` holds `k2..k9` in order. Derived for activations with slopes in
    /// `[1, 1]`, i.e. the identity; see [`EquivariantCoeffs::with_slope`].
    pub fn new(ks: [f64; 8], alpha: f64) -> Result<Self> {
        Self::with_slope(ks, alpha, 1.0)
    }

    /// Coefficients whose `k1` stays contractive for any activation with
    /// derivative in `[slope, 1]`.
    pub fn with_slope(ks: [f64; 8], alpha: f64, slope: f64) -> Result<Self> {
        if !(slope > 0.0 && slope <= 1.0) {
            return Err(CsgnnError::InvalidParameter(format!(
                "slope must lie in (0, 1], got {slope}"
            )));
        }
        if !(alpha <= 0.0) {
            return Err(CsgnnError::InvalidParameter(format!(
                "alpha must be non-positive, got {alpha}"
            )));
        }
        if ks.iter().any(|k| !k.is_finite()) {
            return Err(CsgnnError::NonFinite("equivariant coefficients".into()));
        }
        Ok(Self { ks, alpha, slope })
    }

    pub fn zero() -> Self {
        Self {
            ks: [0.0; 8],
            alpha: 0.0,
            slope: 1.0,
        }
    }

    /// Smallest activation slope `k1` was derived for.
    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// `k2..k9`.
    pub fn ks(&self) -> &[f64; 8] {
        &self.ks
    }

    pub(crate) fn ks_mut(&mut self) -> &mut [f64; 8] {
        &mut self.ks
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Projects `α` back onto `(-∞, 0]`.
    pub(crate) fn project_alpha(&mut self) {
        self.alpha = self.alpha.min(0.0);
    }

    #[cfg(test)]
    pub(crate) fn set_alpha_unchecked(&mut self, alpha: f64) {
        self.alpha = alpha;
    }

    /// `Σ_{i=2..9} |k_i|`.
    pub fn abs_sum(&self) -> f64 {
        self.ks.iter().map(|k| k.abs()).sum()
    }

    /// The derived identity coefficient `k1 = α − Σ|k_i| / s`.
    pub fn k1(&self) -> f64 {
        self.alpha - self.abs_sum() / self.slope
    }

    /// All nine coefficients `k1..k9`.
    pub fn full(&self) -> [f64; 9] {
        let mut k = [0.0; 9];
        k[0] = self.k1();
        k[1..].copy_from_slice(&self.ks);
        k
    }

    fn is_zero_map(&self) -> bool {
        self.alpha == 0.0 && self.ks.iter().all(|&k| k == 0.0)
    }
}

/// Step size and activation for one adjacency Euler step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjacencyStepConfig {
    pub coeffs: EquivariantCoeffs,
    pub h: f64,
    pub activation: LeakyRelu,
}

impl AdjacencyStepConfig {
    /// Validates `0 ≤ h ≤ ĥ(coeffs)` and that `coeffs` were derived for a
    /// slope no larger than the activation's.
    pub fn new(coeffs: EquivariantCoeffs, h: f64, activation: LeakyRelu) -> Result<Self> {
        let cfg = Self { coeffs, h, activation };
        cfg.check_step()?;
        Ok(cfg)
    }

    /// Uses `min(h, ĥ(coeffs))`.
    pub fn clamped(coeffs: EquivariantCoeffs, h: f64, activation: LeakyRelu) -> Result<Self> {
        let h = match max_step_adjacency(&coeffs) {
            Ok(max) => h.min(max),
            Err(CsgnnError::UnboundedStep) => h,
            Err(e) => return Err(e),
        };
        Self::new(coeffs, h, activation)
    }

    pub fn check_step(&self) -> Result<()> {
        if !(self.h >= 0.0) || !self.h.is_finite() {
            return Err(CsgnnError::InvalidParameter(format!(
                "step size must be finite and non-negative, got {}",
                self.h
            )));
        }
        if self.coeffs.slope > self.activation.slope() && self.coeffs.abs_sum() > 0.0 {
            return Err(CsgnnError::InvalidParameter(format!(
                "coefficients derived for slope {} but activation slope is {}",
                self.coeffs.slope,
                self.activation.slope()
            )));
        }
        match max_step_adjacency(&self.coeffs) {
            // Relative slack absorbs the rounding in h = ĥ computed elsewhere.
            Ok(max) if self.h > max * (1.0 + 1e-12) => Err(CsgnnError::StepTooLarge { h: self.h, max }),
            Ok(_) | Err(CsgnnError::UnboundedStep) => Ok(()),
            Err(e) => Err(e),
        }
    }
}

struct Summary {
    n: f64,
    row_sums: Array1<f64>,
    col_sums: Array1<f64>,
    diag: Array1<f64>,
    total: f64,
    trace: f64,
}

fn summarize(a: &ArrayView2<f64>) -> Summary {
    let row_sums = a.sum_axis(Axis(1));
    let col_sums = a.sum_axis(Axis(0));
    let diag = a.diag().to_owned();
    Summary {
        n: a.nrows() as f64,
        total: row_sums.sum(),
        trace: diag.sum(),
        row_sums,
        col_sums,
        diag,
    }
}

/// Applies the nine-term map with explicit coefficients `k1..k9`.
pub(crate) fn apply_raw(a: &ArrayView2<f64>, k: &[f64; 9]) -> Array2<f64> {
    let n_us = a.nrows();
    let s = summarize(a);
    let n = s.n;
    let off = k[4] * s.total / (n * n) + k[6] * s.trace / (n * n);
    let on_diag = k[5] * s.total / n + k[7] * s.trace / n;
    let c3 = k[2] / (2.0 * n);
    let c9 = k[8] / (2.0 * n);
    Array2::from_shape_fn((n_us, n_us), |(i, j)| {
        let mut v = k[0] * a[[i, j]] + c3 * (s.row_sums[i] + s.col_sums[j]) + off + c9 * (s.diag[i] + s.diag[j]);
        if i == j {
            v += k[1] * a[[i, i]] + k[3] * s.row_sums[i] + on_diag;
        }
        v
    })
}

/// Adjoint of [`apply_raw`] with respect to the Frobenius inner product.
pub(crate) fn apply_raw_adjoint(p: &ArrayView2<f64>, k: &[f64; 9]) -> Array2<f64> {
    let n_us = p.nrows();
    let s = summarize(p);
    let n = s.n;
    let off = k[4] * s.total / (n * n) + k[5] * s.trace / n;
    let on_diag = k[6] * s.total / (n * n) + k[7] * s.trace / n;
    let c3 = k[2] / (2.0 * n);
    let c9 = k[8] / (2.0 * n);
    Array2::from_shape_fn((n_us, n_us), |(i, j)| {
        let mut v = k[0] * p[[i, j]] + c3 * (s.row_sums[i] + s.col_sums[j]) + k[3] * s.diag[i] + off;
        if i == j {
            v += k[1] * p[[i, i]] + on_diag + c9 * (s.row_sums[i] + s.col_sums[i]);
        }
        v
    })
}

/// The nine basis images `B_1(A)..B_9(A)` so that `M(A) = Σ k_i B_i(A)`.
pub(crate) fn basis_images(a: &ArrayView2<f64>) -> Vec<Array2<f64>> {
    (0..9)
        .map(|i| {
            let mut k = [0.0; 9];
            k[i] = 1.0;
            apply_raw(a, &k)
        })
        .collect()
}

/// `M(A)` with the derived `k1`.
pub fn equivariant_linear(a: &ArrayView2<f64>, coeffs: &EquivariantCoeffs) -> Result<Array2<f64>> {
    ensure_square("equivariant_linear", a)?;
    Ok(apply_raw(a, &coeffs.full()))
}

/// Adjoint `Mᵀ` of the equivariant map.
pub fn equivariant_linear_adjoint(p: &ArrayView2<f64>, coeffs: &EquivariantCoeffs) -> Result<Array2<f64>> {
    ensure_square("equivariant_linear_adjoint", p)?;
    Ok(apply_raw_adjoint(p, &coeffs.full()))
}

/// Accumulates `scale · (x ⊗ y)` into `t`, skipping zero entries of `x`.
fn add_kron(t: &mut Array2<f64>, scale: f64, x: &Array2<f64>, y: &Array2<f64>) {
    if scale == 0.0 {
        return;
    }
    let (yr, yc) = y.dim();
    for ((a, c), &xv) in x.indexed_iter() {
        if xv == 0.0 {
            continue;
        }
        for ((b, d), &yv) in y.indexed_iter() {
            if yv != 0.0 {
                t[[a * yr + b, c * yc + d]] += scale * xv * yv;
            }
        }
    }
}

fn unit_outer(n: usize, row: Option<usize>, col: Option<usize>) -> Array2<f64> {
    // `None` stands for the all-ones vector.
    Array2::from_shape_fn((n, n), |(i, j)| {
        let r = row.map_or(1.0, |r| (r == i) as u8 as f64);
        let c = col.map_or(1.0, |c| (c == j) as u8 as f64);
        r * c
    })
}

/// Explicit Kronecker assembly of `T` from raw coefficients.
pub(crate) fn build_t_raw(k: &[f64; 9], n: usize) -> Result<Array2<f64>> {
    if n > MAX_T_NODES {
        return Err(CsgnnError::GuardExceeded { n, max: MAX_T_NODES });
    }
    if n == 0 {
        return Err(CsgnnError::InvalidParameter("n must be positive".into()));
    }
    let nf = n as f64;
    let nn = n * n;
    let mut t = Array2::<f64>::eye(nn) * k[0];
    let eye = Array2::<f64>::eye(n);
    let ones = unit_outer(n, None, None);
    for i in 0..n {
        let eiei = unit_outer(n, Some(i), Some(i));
        let ei1 = unit_outer(n, Some(i), None);
        let one_ei = unit_outer(n, None, Some(i));
        add_kron(&mut t, k[1], &eiei, &eiei);
        add_kron(&mut t, k[3], &ei1, &eiei);
        add_kron(&mut t, k[5] / nf, &ei1, &ei1);
        add_kron(&mut t, k[6] / (nf * nf), &one_ei, &one_ei);
        add_kron(&mut t, k[8] / (2.0 * nf), &one_ei, &eiei);
        add_kron(&mut t, k[8] / (2.0 * nf), &eiei, &one_ei);
        for j in 0..n {
            let ejei = unit_outer(n, Some(j), Some(i));
            add_kron(&mut t, k[7] / nf, &ejei, &ejei);
        }
    }
    add_kron(&mut t, k[2] / (2.0 * nf), &ones, &eye);
    add_kron(&mut t, k[2] / (2.0 * nf), &eye, &ones);
    add_kron(&mut t, k[4] / (nf * nf), &ones, &ones);
    Ok(t)
}

/// The `n²×n²` matrix with `vec(M(A)) = T·vec(A)` (column-major `vec`).
pub fn build_t(coeffs: &EquivariantCoeffs, n: usize) -> Result<Array2<f64>> {
    build_t_raw(&coeffs.full(), n)
}

/// Column-major vectorization.
pub fn vec_col_major(a: &ArrayView2<f64>) -> Array1<f64> {
    a.t().iter().copied().collect()
}

/// Induced ℓ¹ operator norm (maximum absolute column sum).
pub fn operator_l1_norm(t: &ArrayView2<f64>) -> f64 {
    max_abs_col_sum(t)
}

/// The contractive step bound `ĥ = 2 / ((1 + 1/s)·Σ|k_i| − α)`.
pub fn max_step_adjacency(coeffs: &EquivariantCoeffs) -> Result<f64> {
    let denom = (1.0 + 1.0 / coeffs.slope) * coeffs.abs_sum() - coeffs.alpha;
    if denom == 0.0 {
        return Err(CsgnnError::UnboundedStep);
    }
    Ok(2.0 / denom)
}

/// One explicit Euler step `A + h·σ(M(A))`, rejecting `h > ĥ`.
pub fn adjacency_step(a: &ArrayView2<f64>, cfg: &AdjacencyStepConfig) -> Result<Array2<f64>> {
    cfg.check_step()?;
    adjacency_step_unchecked(a, cfg)
}

/// [`adjacency_step`] without the step-size guard, for diagnostics that
/// deliberately probe `h > ĥ`.
pub fn adjacency_step_unchecked(a: &ArrayView2<f64>, cfg: &AdjacencyStepConfig) -> Result<Array2<f64>> {
    let m = equivariant_linear(a, &cfg.coeffs)?;
    let h = cfg.h;
    let act = cfg.activation;
    Ok(a + &m.mapv(|s| h * act.apply(s)))
}

/// Finite-difference estimate of `‖DΨ(vec A)‖₁` for the adjacency step.
pub fn jacobian_l1_probe(a: &ArrayView2<f64>, cfg: &AdjacencyStepConfig) -> Result<f64> {
    let n = ensure_square("jacobian_l1_probe", a)?;
    if cfg.coeffs.is_zero_map() || cfg.h == 0.0 {
        // The step is the identity map.
        return Ok(1.0);
    }
    let m = equivariant_linear(a, &cfg.coeffs)?;
    let smallest = m.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    if smallest < KINK_TOLERANCE {
        return Err(CsgnnError::NonSmoothPoint { magnitude: smallest });
    }
    let mut worst: f64 = 0.0;
    let mut probe = a.to_owned();
    for j in 0..n {
        for i in 0..n {
            let orig = probe[[i, j]];
            probe[[i, j]] = orig + PROBE_STEP;
            let plus = adjacency_step_unchecked(&probe.view(), cfg)?;
            probe[[i, j]] = orig - PROBE_STEP;
            let minus = adjacency_step_unchecked(&probe.view(), cfg)?;
            probe[[i, j]] = orig;
            let col: f64 = plus
                .iter()
                .zip(minus.iter())
                .map(|(p, q)| ((p - q) / (2.0 * PROBE_STEP)).abs())
                .sum();
            worst = worst.max(col);
        }
    }
    Ok(worst)
}
