//! The coupled network: linear encoder, `L` coupled Euler layers that evolve
//! features and adjacency together, and a linear classifier.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::activation::LeakyRelu;
use crate::adjacency::{adjacency_step, max_step_adjacency, AdjacencyStepConfig, EquivariantCoeffs};
use crate::error::{shape_err, CsgnnError, Result};
use crate::features::{
    feature_field_cached, row_norms_max, safe_feature_step, FeatureStepCache, LayerParams, Parameterization,
};
use crate::graph::{Graph, PerturbationBudget};
use crate::linalg::{ensure_same_shape, frobenius_norm, l1_norm, spectral_norm_upper};
use crate::sampling::random_matrix;

/// Feature and adjacency parameters of one coupled layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBlock {
    pub feature: LayerParams,
    pub adjacency: AdjacencyStepConfig,
    /// Upper limit for the shared step size, `min(configured h, h_safe)`.
    pub step_cap: f64,
}

impl LayerBlock {
    pub fn h(&self) -> f64 {
        self.feature.h
    }

    /// Sets the shared step of both systems.
    pub fn set_step(&mut self, h: f64) {
        self.feature.h = h;
        self.adjacency.h = h;
    }

    /// Re-derives `h = min(step_cap, ĥ(coeffs))` after `α` is projected.
    pub fn enforce_constraints(&mut self) {
        self.adjacency.coeffs.project_alpha();
        let h = match max_step_adjacency(&self.adjacency.coeffs) {
            Ok(max) => self.step_cap.min(max),
            Err(_) => self.step_cap,
        };
        self.set_step(h);
    }
}

/// Architecture hyperparameters used to initialize a network.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub hidden: usize,
    pub layers: usize,
    pub parameterization: Parameterization,
    /// `λ` in `K = λI` for `learn_w` layers.
    pub lambda: f64,
    pub h: f64,
    pub alpha: f64,
    pub leaky_slope: f64,
    pub share_weights: bool,
    pub dropout_p: f64,
    /// Initial `k2..k9` are drawn uniformly from `[-k_init, k_init]`.
    pub k_init: f64,
    /// Fixed initial `k2..k9`, overriding the random draw.
    pub ks_init: Option<[f64; 8]>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            layers: 2,
            parameterization: Parameterization::LearnWIdentityK,
            lambda: 1.0,
            h: 0.5,
            alpha: -1.0,
            leaky_slope: 0.1,
            share_weights: false,
            dropout_p: 0.5,
            k_init: 0.1,
            ks_init: None,
        }
    }
}

/// Full trainable state of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// `c_in × c` embedding.
    pub encoder: Array2<f64>,
    /// One block per layer, or a single block when weights are shared.
    pub layers: Vec<LayerBlock>,
    pub num_layers: usize,
    /// `c × c_out`.
    pub classifier: Array2<f64>,
    pub classifier_bias: Array1<f64>,
    pub dropout_p: f64,
    pub share_weights: bool,
}

fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    random_matrix(rng, fan_in, fan_out, s)
}

impl NetworkParams {
    /// Random initialization. `adjacency` is the graph the step caps are
    /// computed on; `h_safe` is evaluated along the initial adjacency
    /// trajectory.
    pub fn init<R: Rng + ?Sized>(
        arch: &ArchConfig,
        c_in: usize,
        c_out: usize,
        adjacency: &ArrayView2<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        if arch.layers == 0 || arch.hidden == 0 {
            return Err(CsgnnError::InvalidParameter(
                "need at least one layer and channel".into(),
            ));
        }
        if !(0.0..1.0).contains(&arch.dropout_p) {
            return Err(CsgnnError::InvalidParameter(format!(
                "dropout must lie in [0, 1), got {}",
                arch.dropout_p
            )));
        }
        let act = LeakyRelu::new(arch.leaky_slope)?;
        let c = arch.hidden;
        let encoder = glorot(rng, c_in, c);
        let blocks = if arch.share_weights { 1 } else { arch.layers };
        let mut layers = Vec::with_capacity(blocks);
        for _ in 0..blocks {
            let feature = match arch.parameterization {
                Parameterization::LearnWIdentityK => {
                    let w = Array2::<f64>::eye(c) + random_matrix(rng, c, c, 1e-2);
                    LayerParams::learn_w(w, arch.lambda, arch.h)?
                }
                Parameterization::IdentityWLearnK => LayerParams::learn_k(glorot(rng, c, c), arch.h)?,
            };
            let mut ks = [0.0; 8];
            for k in ks.iter_mut() {
                *k = rng.random_range(-arch.k_init..=arch.k_init);
            }
            if let Some(fixed) = arch.ks_init {
                ks = fixed;
            }
            let coeffs = EquivariantCoeffs::with_slope(ks, arch.alpha, act.slope())?;
            let adjacency = AdjacencyStepConfig::clamped(coeffs, arch.h, act)?;
            let mut block = LayerBlock {
                feature,
                adjacency,
                step_cap: arch.h,
            };
            block.enforce_constraints();
            layers.push(block);
        }
        let classifier = glorot(rng, c, c_out);
        let mut params = Self {
            encoder,
            layers,
            num_layers: arch.layers,
            classifier,
            classifier_bias: Array1::zeros(c_out),
            dropout_p: arch.dropout_p,
            share_weights: arch.share_weights,
        };
        params.cap_feature_steps(adjacency)?;
        Ok(params)
    }

    /// Lowers every step cap to the feature-safe step along the adjacency
    /// trajectory started at `adjacency`.
    pub fn cap_feature_steps(&mut self, adjacency: &ArrayView2<f64>) -> Result<()> {
        let mut a = adjacency.to_owned();
        for l in 0..self.num_layers {
            let idx = self.block_index(l);
            let safe = safe_feature_step(&a.view(), &self.layers[idx].feature)?;
            let block = &mut self.layers[idx];
            block.step_cap = block.step_cap.min(safe);
            block.enforce_constraints();
            a = adjacency_step(&a.view(), &self.layers[idx].adjacency)?;
        }
        Ok(())
    }

    pub fn block_index(&self, layer: usize) -> usize {
        if self.share_weights {
            0
        } else {
            layer
        }
    }

    pub fn layer(&self, l: usize) -> &LayerBlock {
        &self.layers[self.block_index(l)]
    }

    pub fn hidden(&self) -> usize {
        self.encoder.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.classifier.ncols()
    }

    pub fn activation(&self) -> LeakyRelu {
        self.layers[0].adjacency.activation
    }

    pub fn enforce_constraints(&mut self) {
        for b in &mut self.layers {
            b.enforce_constraints();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(CsgnnError::InvalidParameter("network needs at least one layer".into()));
        }
        let expected_blocks = if self.share_weights { 1 } else { self.num_layers };
        if self.layers.len() != expected_blocks {
            return Err(shape_err(
                "layer blocks",
                expected_blocks.to_string(),
                self.layers.len().to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(CsgnnError::InvalidParameter("dropout must lie in [0, 1)".into()));
        }
        let c = self.hidden();
        if self.classifier.nrows() != c || self.classifier_bias.len() != self.classifier.ncols() {
            return Err(shape_err(
                "classifier",
                format!("{c} rows"),
                format!("{:?}", self.classifier.dim()),
            ));
        }
        for b in &self.layers {
            b.feature.validate()?;
            if b.feature.channels() != c {
                return Err(shape_err(
                    "layer channels",
                    c.to_string(),
                    b.feature.channels().to_string(),
                ));
            }
        }
        Ok(())
    }

    /// The per-layer shared step sizes `h_1..h_L`.
    pub fn steps(&self) -> Vec<f64> {
        (0..self.num_layers).map(|l| self.layer(l).h()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// States visited by the coupled dynamics plus what reverse mode needs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `F^(0..L)`, each taken before dropout.
    pub feature_states: Vec<Array2<f64>>,
    /// `A^(0..L)`.
    pub adjacency_states: Vec<Array2<f64>>,
    pub(crate) input_dropped: Array2<f64>,
    pub(crate) layer_inputs: Vec<Array2<f64>>,
    pub(crate) layer_masks: Vec<Option<Array2<f64>>>,
    pub(crate) layer_caches: Vec<FeatureStepCache>,
    pub(crate) final_dropped: Array2<f64>,
    pub(crate) final_mask: Option<Array2<f64>>,
}

impl ForwardTrace {
    pub fn num_layers(&self) -> usize {
        self.feature_states.len() - 1
    }
}

/// Inverted dropout: kept entries are scaled by `1/(1-p)`.
fn dropout<R: Rng + ?Sized>(x: &Array2<f64>, p: f64, mode: Mode, rng: &mut R) -> (Array2<f64>, Option<Array2<f64>>) {
    if mode == Mode::Eval || p == 0.0 {
        return (x.clone(), None);
    }
    let keep = 1.0 - p;
    let mask = x.mapv(|_| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 });
    (x * &mask, Some(mask))
}

fn ensure_finite(x: &Array2<f64>, what: impl FnOnce() -> String) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CsgnnError::NonFinite(what()))
    }
}

/// Runs the network on `(features, adjacency)`.
pub fn forward_matrices<R: Rng + ?Sized>(
    features: &ArrayView2<f64>,
    adjacency: &ArrayView2<f64>,
    params: &NetworkParams,
    mode: Mode,
    rng: &mut R,
) -> Result<(Array2<f64>, ForwardTrace)> {
    params.validate()?;
    ensure_same_shape(
        "forward adjacency",
        &adjacency.view(),
        &Array2::<f64>::zeros((features.nrows(), features.nrows())).view(),
    )?;
    if features.ncols() != params.input_dim() {
        return Err(shape_err(
            "forward features",
            params.input_dim().to_string(),
            features.ncols().to_string(),
        ));
    }
    let p = params.dropout_p;
    let (input_dropped, _) = dropout(&features.to_owned(), p, mode, rng);
    let f0 = input_dropped.dot(&params.encoder);
    ensure_finite(&f0, || "encoder output".into())?;

    let l_total = params.num_layers;
    let mut feature_states = vec![f0];
    let mut adjacency_states = vec![adjacency.to_owned()];
    let mut layer_inputs = Vec::with_capacity(l_total);
    let mut layer_masks = Vec::with_capacity(l_total);
    let mut layer_caches = Vec::with_capacity(l_total);
    for l in 0..l_total {
        let block = params.layer(l);
        let (f_in, mask) = dropout(&feature_states[l], p, mode, rng);
        let a_prev = &adjacency_states[l];
        let act = block.adjacency.activation;
        let (field, cache) = feature_field_cached(&f_in.view(), &a_prev.view(), &block.feature, act)?;
        let f_next = &f_in + &(field * block.feature.h);
        ensure_finite(&f_next, || format!("layer {} features", l + 1))?;
        let a_next = adjacency_step(&a_prev.view(), &block.adjacency)?;
        ensure_finite(&a_next, || format!("layer {} adjacency", l + 1))?;
        layer_inputs.push(f_in);
        layer_masks.push(mask);
        layer_caches.push(cache);
        feature_states.push(f_next);
        adjacency_states.push(a_next);
    }

    let (final_dropped, final_mask) = dropout(&feature_states[l_total], p, mode, rng);
    let logits = final_dropped.dot(&params.classifier) + &params.classifier_bias;
    ensure_finite(&logits, || "logits".into())?;
    Ok((
        logits,
        ForwardTrace {
            feature_states,
            adjacency_states,
            input_dropped,
            layer_inputs,
            layer_masks,
            layer_caches,
            final_dropped,
            final_mask,
        },
    ))
}

/// Runs the network on a graph.
pub fn forward<R: Rng + ?Sized>(
    g: &Graph,
    params: &NetworkParams,
    mode: Mode,
    rng: &mut R,
) -> Result<(Array2<f64>, ForwardTrace)> {
    forward_matrices(&g.features.view(), &g.adjacency.view(), params, mode, rng)
}

/// Feature states and adjacency states, layer 0 through L.
pub type Trajectory = (Vec<Array2<f64>>, Vec<Array2<f64>>);

/// The coupled dynamics alone, `(F^(0), A^(0)) ↦ (F^(L), A^(L))`, no dropout.
pub fn propagate(f0: &ArrayView2<f64>, a0: &ArrayView2<f64>, params: &NetworkParams) -> Result<Trajectory> {
    let mut fs = vec![f0.to_owned()];
    let mut as_ = vec![a0.to_owned()];
    for l in 0..params.num_layers {
        let block = params.layer(l);
        let (f_next, a_next) = coupled_layer(&fs[l].view(), &as_[l].view(), block)?;
        fs.push(f_next);
        as_.push(a_next);
    }
    Ok((fs, as_))
}

/// One coupled layer: features move with the current adjacency, then the
/// adjacency takes its own step.
pub fn coupled_layer(
    f: &ArrayView2<f64>,
    a: &ArrayView2<f64>,
    block: &LayerBlock,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let act = block.adjacency.activation;
    let (field, _) = feature_field_cached(f, a, &block.feature, act)?;
    let f_next = f + &(field * block.feature.h);
    let a_next = adjacency_step(a, &block.adjacency)?;
    Ok((f_next, a_next))
}

/// `m1‖F − F*‖_F + m2‖vec(A) − vec(A*)‖₁`.
pub fn weighted_distance(
    m1: f64,
    m2: f64,
    s1: (&ArrayView2<f64>, &ArrayView2<f64>),
    s2: (&ArrayView2<f64>, &ArrayView2<f64>),
) -> Result<f64> {
    if !(m1 > 0.0 && m2 > 0.0) {
        return Err(CsgnnError::InvalidParameter("weights must be positive".into()));
    }
    ensure_same_shape("weighted_distance features", s1.0, s2.0)?;
    ensure_same_shape("weighted_distance adjacency", s1.1, s2.1)?;
    Ok(m1 * frobenius_norm(&(s1.0 - s2.0).view()) + m2 * l1_norm(&(s1.1 - s2.1).view()))
}

/// `ε₁ + ε₂ (1 + Σ Lip_i h_i)`.
pub fn expansivity_bound(h: &[f64], lip_estimates: &[f64], budget: &PerturbationBudget) -> Result<f64> {
    if h.len() != lip_estimates.len() {
        return Err(shape_err(
            "expansivity_bound",
            h.len().to_string(),
            lip_estimates.len().to_string(),
        ));
    }
    if h.iter().chain(lip_estimates).any(|&x| !(x >= 0.0)) {
        return Err(CsgnnError::InvalidParameter(
            "step sizes and Lipschitz estimates must be non-negative".into(),
        ));
    }
    let c: f64 = 1.0 + h.iter().zip(lip_estimates).map(|(h, l)| h * l).sum::<f64>();
    Ok(budget.eps_feat() + c * budget.eps_adj())
}

/// Analytic Lipschitz bound of `A ↦ X(F, A)` from vectorized ℓ¹ to
/// Frobenius, valid for all `A` with `|A_ij| ≤ adj_bound`.
///
/// Splitting `X(F,A) − X(F,A')` into the part linear in `A − A'` and the part
/// through the activation gives
/// `adj_bound · D_F · ‖W‖₂² · ‖K̃‖₂ · (√2 + 2√n)` with `D_F = 2 max_i ‖F_i‖`.
pub fn mixed_lipschitz_upper(f: &ArrayView2<f64>, layer: &LayerParams, adj_bound: f64) -> Result<f64> {
    layer.validate()?;
    if f.ncols() != layer.channels() {
        return Err(shape_err(
            "mixed_lipschitz_upper",
            layer.channels().to_string(),
            f.ncols().to_string(),
        ));
    }
    let n = f.nrows() as f64;
    let spread = 2.0 * row_norms_max(f);
    let w = spectral_norm_upper(&layer.w.view());
    let k = spectral_norm_upper(&layer.k_sym().view());
    Ok(adj_bound.abs() * spread * w * w * k * (2f64.sqrt() + 2.0 * n.sqrt()))
}

/// Sampled lower and analytic upper estimates of `Lip(A ↦ X(F, A))` over
/// the box `|A_ij| ≤ adj_bound`.
pub fn estimate_mixed_lipschitz<R: Rng + ?Sized>(
    f: &ArrayView2<f64>,
    layer: &LayerParams,
    adj_bound: f64,
    n_samples: usize,
    act: LeakyRelu,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n_samples == 0 {
        return Err(CsgnnError::InvalidParameter("need at least one sample".into()));
    }
    let upper = mixed_lipschitz_upper(f, layer, adj_bound)?;
    let n = f.nrows();
    let t = 1e-4;
    let inner = (adj_bound.abs() - t).max(0.0);
    let mut lower: f64 = 0.0;
    for _ in 0..n_samples {
        let a = random_matrix(rng, n, n, inner);
        let mut dir = random_matrix(rng, n, n, 1.0);
        let norm = l1_norm(&dir.view());
        if norm == 0.0 {
            continue;
        }
        dir /= norm;
        let (x0, _) = feature_field_cached(f, &a.view(), layer, act)?;
        let (x1, _) = feature_field_cached(f, &(&a + &(&dir * t)).view(), layer, act)?;
        lower = lower.max(frobenius_norm(&(&x1 - &x0).view()) / t);
    }
    if lower > upper * (1.0 + 1e-9) + 1e-12 {
        return Err(CsgnnError::InvalidParameter(format!(
            "sampled Lipschitz estimate {lower} exceeds analytic bound {upper}"
        )));
    }
    Ok((lower, upper))
}

/// Per-layer figures of an output-distance certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCertificate {
    pub h: f64,
    pub h_adj_max: Option<f64>,
    pub h_feature_safe: f64,
    pub adj_bound: f64,
    pub lipschitz_upper: f64,
}

/// A bound on the coupled-dynamics output distance for a given budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub layers: Vec<LayerCertificate>,
    /// Feature budget after the encoder, `‖E‖₂ ε₁`.
    pub eps_feat_embedded: f64,
    pub eps_adj: f64,
    pub bound: f64,
    /// Whether every layer satisfies the proved contractive setting
    /// (`learn_w` with scalar `K`, `h ≤ ĥ`, `h ≤ h_safe`).
    pub contractive_setting: bool,
}

/// Certifies `d(𝒟(F,A), 𝒟(F*,A*)) ≤ ε₁' + c(h)ε₂` along the clean
/// trajectory of `g`.
pub fn certify(g: &Graph, params: &NetworkParams, budget: &PerturbationBudget) -> Result<Certificate> {
    params.validate()?;
    let f0 = g.features.dot(&params.encoder);
    let (fs, as_) = propagate(&f0.view(), &g.adjacency.view(), params)?;
    let mut layers = Vec::with_capacity(params.num_layers);
    let mut contractive = true;
    for l in 0..params.num_layers {
        let block = params.layer(l);
        // Perturbed trajectories stay within ε₂ of the clean one in ℓ¹.
        let adj_bound = as_[l].iter().map(|x| x.abs()).fold(0.0, f64::max) + budget.eps_adj();
        let lip = mixed_lipschitz_upper(&fs[l].view(), &block.feature, adj_bound)?;
        let h_adj_max = max_step_adjacency(&block.adjacency.coeffs).ok();
        let h_feature_safe = safe_feature_step(&as_[l].view(), &block.feature)?;
        let h = block.h();
        let scalar_k =
            block.feature.parameterization == Parameterization::LearnWIdentityK && block.feature.k[[0, 0]] > 0.0;
        contractive &= scalar_k && h_adj_max.is_none_or(|m| h <= m * (1.0 + 1e-12)) && h <= h_feature_safe;
        layers.push(LayerCertificate {
            h,
            h_adj_max,
            h_feature_safe,
            adj_bound,
            lipschitz_upper: lip,
        });
    }
    let eps_feat_embedded = spectral_norm_upper(&params.encoder.view()) * budget.eps_feat();
    let hs: Vec<f64> = layers.iter().map(|c| c.h).collect();
    let lips: Vec<f64> = layers.iter().map(|c| c.lipschitz_upper).collect();
    let bound = expansivity_bound(
        &hs,
        &lips,
        &PerturbationBudget::new(eps_feat_embedded, budget.eps_adj())?,
    )?;
    Ok(Certificate {
        layers,
        eps_feat_embedded,
        eps_adj: budget.eps_adj(),
        bound,
        contractive_setting: contractive,
    })
}
