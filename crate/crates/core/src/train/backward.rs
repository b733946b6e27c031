//! Reverse mode through the coupled network.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::adjacency::{apply_raw_adjoint, basis_images, equivariant_linear};
use crate::error::{shape_err, Result};
use crate::features::{feature_step_vjp, Parameterization};
use crate::network::{ForwardTrace, NetworkParams};

/// Gradient of one layer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    /// Gradient for `W` (zero in `learn_k` layers).
    pub w: Array2<f64>,
    /// Gradient for the raw `K` (zero in `learn_w` layers).
    pub k: Array2<f64>,
    /// Gradient for `k2..k9`, including the path through the derived `k1`.
    pub ks: [f64; 8],
}

/// Gradients mirroring [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub encoder: Array2<f64>,
    pub layers: Vec<LayerGrads>,
    pub classifier: Array2<f64>,
    pub classifier_bias: Array1<f64>,
}

impl NetworkGrads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            encoder: Array2::zeros(params.encoder.dim()),
            layers: params
                .layers
                .iter()
                .map(|b| LayerGrads {
                    w: Array2::zeros(b.feature.w.dim()),
                    k: Array2::zeros(b.feature.k.dim()),
                    ks: [0.0; 8],
                })
                .collect(),
            classifier: Array2::zeros(params.classifier.dim()),
            classifier_bias: Array1::zeros(params.classifier_bias.len()),
        }
    }

    /// Gradient slices in the order of [`NetworkParams::trainable_mut`].
    pub fn slices(&self, params: &NetworkParams) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.encoder.as_slice().expect("standard layout"),
            self.classifier.as_slice().expect("standard layout"),
            self.classifier_bias.as_slice().expect("standard layout"),
        ];
        for (g, b) in self.layers.iter().zip(&params.layers) {
            match b.feature.parameterization {
                Parameterization::LearnWIdentityK => out.push(g.w.as_slice().expect("standard layout")),
                Parameterization::IdentityWLearnK => out.push(g.k.as_slice().expect("standard layout")),
            }
            out.push(&g.ks);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = self
            .encoder
            .iter()
            .chain(self.classifier.iter())
            .chain(self.classifier_bias.iter())
            .fold(0.0f64, |a, &b| a.max(b.abs()));
        for l in &self.layers {
            m =
                l.w.iter()
                    .chain(l.k.iter())
                    .chain(l.ks.iter())
                    .fold(m, |a, &b| a.max(b.abs()));
        }
        m
    }
}

fn sign_or_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Propagates `d loss / d logits` back through a recorded forward pass.
pub fn backward(trace: &ForwardTrace, params: &NetworkParams, grad_logits: &ArrayView2<f64>) -> Result<NetworkGrads> {
    let l_total = params.num_layers;
    if trace.num_layers() != l_total || trace.layer_caches.len() != l_total {
        return Err(shape_err(
            "backward trace",
            format!("{l_total} layers"),
            format!("{}", trace.num_layers()),
        ));
    }
    if grad_logits.dim() != (trace.final_dropped.nrows(), params.output_dim())
        || trace.final_dropped.ncols() != params.hidden()
    {
        return Err(shape_err(
            "backward logits",
            format!("({}, {})", trace.final_dropped.nrows(), params.output_dim()),
            format!("{:?}", grad_logits.dim()),
        ));
    }
    let mut grads = NetworkGrads::zeros_like(params);

    grads.classifier = trace.final_dropped.t().dot(grad_logits);
    grads.classifier_bias = grad_logits.sum_axis(Axis(0));
    let mut g_f = grad_logits.dot(&params.classifier.t());
    if let Some(mask) = &trace.final_mask {
        g_f *= mask;
    }
    let n = g_f.nrows();
    let mut g_a: Array2<f64> = Array2::zeros((n, n));

    for l in (0..l_total).rev() {
        let idx = params.block_index(l);
        let block = &params.layers[idx];
        let a_prev = &trace.adjacency_states[l];

        // A_l = A_{l-1} + h σ(M(A_{l-1}))
        let coeffs = &block.adjacency.coeffs;
        let act = block.adjacency.activation;
        let pre = equivariant_linear(&a_prev.view(), coeffs)?;
        let mut p = g_a.clone();
        let h = block.adjacency.h;
        Zip::from(&mut p)
            .and(&pre)
            .for_each(|g, &s| *g *= h * act.derivative(s));
        let mut g_a_prev = g_a + apply_raw_adjoint(&p.view(), &coeffs.full());
        let basis = basis_images(&a_prev.view());
        let g_full: Vec<f64> = basis.iter().map(|b| (&p * b).sum()).collect();
        let layer_grads = &mut grads.layers[idx];
        let inv_slope = 1.0 / coeffs.slope();
        for (i, k) in coeffs.ks().iter().enumerate() {
            // k1 = α − Σ|k_i|/s; the subgradient of |k| at 0 is taken as 0.
            layer_grads.ks[i] += g_full[i + 1] - g_full[0] * sign_or_zero(*k) * inv_slope;
        }

        // F_l = F̂_{l-1} + h X(F̂_{l-1}, A_{l-1}), F̂ the dropped-out input
        let fg = feature_step_vjp(
            &g_f.view(),
            &trace.layer_inputs[l].view(),
            &a_prev.view(),
            &block.feature,
            act,
            &trace.layer_caches[l],
        )?;
        match block.feature.parameterization {
            Parameterization::LearnWIdentityK => layer_grads.w += &fg.w,
            Parameterization::IdentityWLearnK => layer_grads.k += &fg.k,
        }
        g_a_prev += &fg.a;
        g_f = fg.f;
        if let Some(mask) = &trace.layer_masks[l] {
            g_f *= mask;
        }
        g_a = g_a_prev;
    }

    grads.encoder = trace.input_dropped.t().dot(&g_f);
    Ok(grads)
}
