//! Pointwise activations used by both dynamical systems.

use ndarray::{Array, ArrayBase, Data, Dimension};

/// Leaky rectifier `s ↦ max(s, slope·s)` with `slope ∈ (0, 1]`.
///
/// Its derivative lies in `[slope, 1] ⊆ [0, 1]`, which is the condition both
/// contractivity results need. A slope of `1` gives the identity map, handy
/// for hand-computable cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakyRelu {
    slope: f64,
}

impl Default for LeakyRelu {
    fn default() -> Self {
        Self { slope: 0.1 }
    }
}

impl LeakyRelu {
    pub fn new(slope: f64) -> crate::Result<Self> {
        if !(slope > 0.0 && slope <= 1.0) {
            return Err(crate::CsgnnError::InvalidParameter(format!(
                "leaky slope must lie in (0, 1], got {slope}"
            )));
        }
        Ok(Self { slope })
    }

    /// Identity activation (slope 1).
    pub fn linear() -> Self {
        Self { slope: 1.0 }
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    #[inline]
    pub fn apply(&self, s: f64) -> f64 {
        if s >= 0.0 {
            s
        } else {
            self.slope * s
        }
    }

    /// Derivative, taking the right-hand value `1` at the kink.
    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        if s >= 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    /// Antiderivative with `γ(0) = 0`.
    #[inline]
    pub fn antiderivative(&self, s: f64) -> f64 {
        if s >= 0.0 {
            0.5 * s * s
        } else {
            0.5 * self.slope * s * s
        }
    }

    pub fn map<S, D>(&self, x: &ArrayBase<S, D>) -> Array<f64, D>
    where
        S: Data<Elem = f64>,
        D: Dimension,
    {
        x.mapv(|s| self.apply(s))
    }

    pub fn map_derivative<S, D>(&self, x: &ArrayBase<S, D>) -> Array<f64, D>
    where
        S: Data<Elem = f64>,
        D: Dimension,
    {
        x.mapv(|s| self.derivative(s))
    }
}
