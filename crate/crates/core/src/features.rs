//! Graph-gradient feature dynamics.
//!
//! With the edge operator `(G(A)F)_{ijk} = A_ij (F_ik − F_jk)` and its adjoint,
//! one layer updates node features by
//! `F ↦ F − h · Gᵀ σ(G F W) Wᵀ K̃`, `K̃ = (K + Kᵀ)/2`. The update is an
//! explicit Euler step on the gradient flow of the convex energy
//! `E_A(F) = Σ γ(G(A) F W)` with `γ' = σ`, preconditioned by `K̃`.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activation::LeakyRelu;
use crate::error::{shape_err, CsgnnError, Result};
use crate::linalg::{ensure_square, power_iteration_psd, spectral_norm_estimate, symmetrize};

/// Which of `W`, `K` is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parameterization {
    /// `W` is learned and `K = λI` is fixed.
    LearnWIdentityK,
    /// `W = I` is fixed and `K` is learned.
    IdentityWLearnK,
}

impl Parameterization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Parameterization::LearnWIdentityK => "learn_w",
            Parameterization::IdentityWLearnK => "learn_k",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "learn_w" => Ok(Parameterization::LearnWIdentityK),
            "learn_k" => Ok(Parameterization::IdentityWLearnK),
            other => Err(CsgnnError::InvalidParameter(format!(
                "unknown parameterization '{other}' (expected learn_w or learn_k)"
            ))),
        }
    }
}

/// Channel-mixing weights and step size for one feature layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Array2<f64>,
    pub k: Array2<f64>,
    pub h: f64,
    pub parameterization: Parameterization,
}

impl LayerParams {
    /// Learned `W` with the fixed preconditioner `K = λI`.
    pub fn learn_w(w: Array2<f64>, lambda: f64, h: f64) -> Result<Self> {
        let c = ensure_square("LayerParams::learn_w", &w.view())?;
        let p = Self {
            k: Array2::eye(c) * lambda,
            w,
            h,
            parameterization: Parameterization::LearnWIdentityK,
        };
        p.validate()?;
        Ok(p)
    }

    /// Identity `W` with a learned `K`.
    pub fn learn_k(k: Array2<f64>, h: f64) -> Result<Self> {
        let c = ensure_square("LayerParams::learn_k", &k.view())?;
        let p = Self {
            w: Array2::eye(c),
            k,
            h,
            parameterization: Parameterization::IdentityWLearnK,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn channels(&self) -> usize {
        self.w.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let c = ensure_square("LayerParams W", &self.w.view())?;
        if self.k.dim() != (c, c) {
            return Err(shape_err(
                "LayerParams K",
                format!("{c}x{c}"),
                format!("{:?}", self.k.dim()),
            ));
        }
        if !(self.h >= 0.0 && self.h.is_finite()) {
            return Err(CsgnnError::InvalidParameter(format!(
                "step size must be non-negative, got {}",
                self.h
            )));
        }
        match self.parameterization {
            Parameterization::LearnWIdentityK => {
                let lambda = self.k[[0, 0]];
                if self.k != Array2::eye(c) * lambda {
                    return Err(CsgnnError::InvalidParameter("learn_w layers need K = λI".into()));
                }
            }
            Parameterization::IdentityWLearnK => {
                if self.w != Array2::<f64>::eye(c) {
                    return Err(CsgnnError::InvalidParameter("learn_k layers need W = I".into()));
                }
            }
        }
        Ok(())
    }

    /// `K̃ = (K + Kᵀ)/2`.
    pub fn k_sym(&self) -> Array2<f64> {
        symmetrize(&self.k.view())
    }
}

/// Edge-indexed quantities `O ∈ ℝ^{n×n×c}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTensor {
    values: Array3<f64>,
}

impl EdgeTensor {
    pub fn zeros(n: usize, c: usize) -> Self {
        Self {
            values: Array3::zeros((n, n, c)),
        }
    }

    pub fn from_array(values: Array3<f64>) -> Result<Self> {
        let (n, m, _) = values.dim();
        if n != m {
            return Err(shape_err("EdgeTensor", "n×n×c", format!("{:?}", values.dim())));
        }
        Ok(Self { values })
    }

    pub fn view(&self) -> ArrayView3<'_, f64> {
        self.values.view()
    }

    pub fn into_inner(self) -> Array3<f64> {
        self.values
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.values.dim()
    }

    /// Flattened `(n², c)` view, edge `(i, j)` at row `i·n + j`.
    pub(crate) fn as_rows(&self) -> ArrayView2<'_, f64> {
        let (n, _, c) = self.values.dim();
        self.values
            .view()
            .into_shape_with_order((n * n, c))
            .expect("edge tensor is contiguous")
    }

    pub(crate) fn from_rows(rows: Array2<f64>, n: usize) -> Self {
        let c = rows.ncols();
        Self {
            values: rows.into_shape_with_order((n, n, c)).expect("row count is n²"),
        }
    }

    pub fn inner(&self, other: &EdgeTensor) -> f64 {
        Zip::from(&self.values)
            .and(&other.values)
            .fold(0.0, |acc, a, b| acc + a * b)
    }
}

fn check_graph_shapes(context: &'static str, a: &ArrayView2<f64>, rows: usize) -> Result<usize> {
    let n = ensure_square(context, a)?;
    if rows != n {
        return Err(shape_err(context, format!("{n} node rows"), format!("{rows}")));
    }
    Ok(n)
}

/// `(G(A)F)_{ijk} = A_ij (F_ik − F_jk)`.
pub fn graph_gradient(a: &ArrayView2<f64>, f: &ArrayView2<f64>) -> Result<EdgeTensor> {
    let n = check_graph_shapes("graph_gradient", a, f.nrows())?;
    let c = f.ncols();
    let mut out = Array3::zeros((n, n, c));
    for i in 0..n {
        for j in 0..n {
            let aij = a[[i, j]];
            if aij == 0.0 {
                continue;
            }
            for k in 0..c {
                out[[i, j, k]] = aij * (f[[i, k]] - f[[j, k]]);
            }
        }
    }
    Ok(EdgeTensor { values: out })
}

/// `(G(A)ᵀO)_{ik} = Σ_j (A_ij O_ijk − A_ji O_jik)`.
pub fn graph_gradient_adjoint(a: &ArrayView2<f64>, o: &EdgeTensor) -> Result<Array2<f64>> {
    let (n0, _, c) = o.dim();
    let n = check_graph_shapes("graph_gradient_adjoint", a, n0)?;
    let v = &o.values;
    let mut out = Array2::zeros((n, c));
    for i in 0..n {
        for j in 0..n {
            let aij = a[[i, j]];
            if aij == 0.0 {
                continue;
            }
            for k in 0..c {
                let e = aij * v[[i, j, k]];
                out[[i, k]] += e;
                out[[j, k]] -= e;
            }
        }
    }
    Ok(out)
}

fn check_layer(f: &ArrayView2<f64>, params: &LayerParams) -> Result<()> {
    params.validate()?;
    if f.ncols() != params.channels() {
        return Err(shape_err(
            "feature layer channels",
            params.channels().to_string(),
            f.ncols().to_string(),
        ));
    }
    Ok(())
}

/// Intermediates of one feature step, kept for reverse mode.
#[derive(Debug, Clone)]
pub(crate) struct FeatureStepCache {
    /// `G(A)F` as `(n², c)` rows.
    z: Array2<f64>,
    /// Pre-activation `ZW`.
    u: Array2<f64>,
    /// `σ(U)`.
    s: Array2<f64>,
    /// `σ(U)Wᵀ`.
    v: Array2<f64>,
    /// `G(A)ᵀ V`.
    q: Array2<f64>,
    k_sym: Array2<f64>,
}

impl FeatureStepCache {
    /// Pre-activation `G(A)FW` as `(n², c)` rows.
    pub(crate) fn preactivation(&self) -> &Array2<f64> {
        &self.u
    }
}

/// `−Gᵀσ(GFW)Wᵀ K̃` together with the cached intermediates.
pub(crate) fn feature_field_cached(
    f: &ArrayView2<f64>,
    a: &ArrayView2<f64>,
    params: &LayerParams,
    act: LeakyRelu,
) -> Result<(Array2<f64>, FeatureStepCache)> {
    check_layer(f, params)?;
    let n = f.nrows();
    let z = graph_gradient(a, f)?;
    let z = z.as_rows().to_owned();
    let u = z.dot(&params.w);
    let s = act.map(&u);
    let v = s.dot(&params.w.t());
    let q = graph_gradient_adjoint(a, &EdgeTensor::from_rows(v.clone(), n))?;
    let k_sym = params.k_sym();
    let field = -q.dot(&k_sym);
    Ok((field, FeatureStepCache { z, u, s, v, q, k_sym }))
}

/// The vector field `X(F, A) = −Gᵀσ(GFW)Wᵀ K̃`.
pub fn feature_field(
    f: &ArrayView2<f64>,
    a: &ArrayView2<f64>,
    params: &LayerParams,
    act: LeakyRelu,
) -> Result<Array2<f64>> {
    Ok(feature_field_cached(f, a, params, act)?.0)
}

/// One explicit Euler step `F + h·X(F, A)`.
pub fn feature_step(
    f: &ArrayView2<f64>,
    a: &ArrayView2<f64>,
    params: &LayerParams,
    act: LeakyRelu,
) -> Result<Array2<f64>> {
    let x = feature_field(f, a, params, act)?;
    Ok(f + &(x * params.h))
}

/// Gradients of a scalar loss with respect to the inputs and weights of
/// one feature step.
#[derive(Debug, Clone)]
pub(crate) struct FeatureStepGrads {
    pub f: Array2<f64>,
    pub a: Array2<f64>,
    pub w: Array2<f64>,
    pub k: Array2<f64>,
}

/// Reverse mode through `F' = F − h·Q·K̃`.
pub(crate) fn feature_step_vjp(
    grad_out: &ArrayView2<f64>,
    f: &ArrayView2<f64>,
    a: &ArrayView2<f64>,
    params: &LayerParams,
    act: LeakyRelu,
    cache: &FeatureStepCache,
) -> Result<FeatureStepGrads> {
    let n = f.nrows();
    let c = f.ncols();
    let g_r = grad_out * (-params.h);
    let g_ksym = cache.q.t().dot(&g_r);
    let g_k = symmetrize(&g_ksym.view());
    let g_q = g_r.dot(&cache.k_sym);

    // Q = G(A)ᵀ V
    let g_v = graph_gradient(a, &g_q.view())?;
    let g_v = g_v.as_rows().to_owned();
    let mut g_a = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            let mut acc = 0.0;
            for k in 0..c {
                acc += cache.v[[row, k]] * (g_q[[i, k]] - g_q[[j, k]]);
            }
            g_a[[i, j]] = acc;
        }
    }

    // V = S Wᵀ
    let g_s = g_v.dot(&params.w);
    let mut g_w = g_v.t().dot(&cache.s);

    // S = σ(U)
    let mut g_u = g_s;
    Zip::from(&mut g_u)
        .and(&cache.u)
        .for_each(|g, &u| *g *= act.derivative(u));

    // U = Z W
    let g_z = g_u.dot(&params.w.t());
    g_w += &cache.z.t().dot(&g_u);

    // Z = G(A) F
    let g_z_tensor = EdgeTensor::from_rows(g_z, n);
    let mut g_f = graph_gradient_adjoint(a, &g_z_tensor)?;
    let gz = g_z_tensor.view();
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..c {
                acc += gz[[i, j, k]] * (f[[i, k]] - f[[j, k]]);
            }
            g_a[[i, j]] += acc;
        }
    }
    g_f += grad_out;

    Ok(FeatureStepGrads {
        f: g_f,
        a: g_a,
        w: g_w,
        k: g_k,
    })
}

/// `E_A(F) = Σ γ(G(A) F W)` with `γ' = σ`, `γ(0) = 0`.
pub fn energy(a: &ArrayView2<f64>, f: &ArrayView2<f64>, w: &ArrayView2<f64>, act: LeakyRelu) -> Result<f64> {
    if w.nrows() != f.ncols() {
        return Err(shape_err(
            "energy W",
            format!("{} rows", f.ncols()),
            format!("{}", w.nrows()),
        ));
    }
    let z = graph_gradient(a, f)?;
    let u = z.as_rows().dot(w);
    Ok(u.iter().map(|&s| act.antiderivative(s)).sum())
}

/// Tests `‖Ψ(F+δF) − Ψ(F)‖_F ≤ ‖δF‖_F` with slack `1e-9`.
///
/// The inequality is only guaranteed for `learn_w` layers with `K = λI`,
/// `λ > 0` and `h ≤ h_safe`; outside that regime the result is a diagnostic.
pub fn check_feature_contraction(
    f: &ArrayView2<f64>,
    df: &ArrayView2<f64>,
    a: &ArrayView2<f64>,
    params: &LayerParams,
    act: LeakyRelu,
) -> Result<bool> {
    let base = feature_step(f, a, params, act)?;
    let moved = feature_step(&(f + df).view(), a, params, act)?;
    let lhs = crate::linalg::frobenius_norm(&(&moved - &base).view());
    let rhs = crate::linalg::frobenius_norm(df);
    Ok(lhs <= rhs + 1e-9)
}

/// Regularizer in `h_safe = 1 / (λ_est + ε)`.
pub const SAFE_STEP_EPS: f64 = 1e-12;

/// Estimate of the ℓ² operator norm of the feature field linearized with a
/// unit-slope activation, `‖K̃‖₂ · ‖Wᵀ ⊗ G(A)‖₂²`.
///
/// Because `σ' ∈ (0, 1]`, this dominates the Lipschitz constant of
/// `F ↦ X(F, A)` for every activation slope.
pub fn linearized_step_norm(a: &ArrayView2<f64>, params: &LayerParams) -> Result<f64> {
    params.validate()?;
    let n = ensure_square("linearized_step_norm", a)?;
    let c = params.channels();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5afe);
    let k_norm = spectral_norm_estimate(&params.k_sym().view(), &mut rng);
    let w = &params.w;
    let gram = power_iteration_psd(n * c, 200, &mut rng, |v| {
        let f = v.view().into_shape_with_order((n, c)).expect("flat feature vector");
        let z = graph_gradient(a, &f).expect("shapes checked");
        let u = EdgeTensor::from_rows(z.as_rows().dot(w).dot(&w.t()), n);
        let back = graph_gradient_adjoint(a, &u).expect("shapes checked");
        back.into_shape_with_order(n * c).expect("contiguous")
    });
    Ok(k_norm * gram.max(0.0))
}

/// `h_safe = 1 / (λ_est + ε)` for the layer on graph `a`.
pub fn safe_feature_step(a: &ArrayView2<f64>, params: &LayerParams) -> Result<f64> {
    Ok(1.0 / (linearized_step_norm(a, params)? + SAFE_STEP_EPS))
}

pub(crate) fn row_norms_max(f: &ArrayView2<f64>) -> f64 {
    f.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max)
}
