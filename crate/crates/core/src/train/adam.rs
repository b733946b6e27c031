//! Adam with bias correction and decoupled, per-group weight decay.

use crate::error::{shape_err, Result};
use crate::features::Parameterization;
use crate::network::NetworkParams;
use crate::train::backward::NetworkGrads;

/// Hyperparameter groups of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Encoder and classifier.
    Embedding,
    /// `W` or `K` of the feature dynamics.
    NodeDynamics,
    /// `k2..k9` of the adjacency dynamics.
    AdjacencyDynamics,
}

/// One value per [`ParamGroup`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupValues {
    pub embedding: f64,
    pub node: f64,
    pub adjacency: f64,
}

impl GroupValues {
    pub fn uniform(v: f64) -> Self {
        Self {
            embedding: v,
            node: v,
            adjacency: v,
        }
    }

    pub fn get(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Embedding => self.embedding,
            ParamGroup::NodeDynamics => self.node,
            ParamGroup::AdjacencyDynamics => self.adjacency,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: GroupValues,
    pub weight_decay: GroupValues,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: GroupValues::uniform(1e-2),
            weight_decay: GroupValues::uniform(5e-4),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers, one per parameter tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// One update over matching parameter and gradient slices. Buffers are
    /// allocated on the first call.
    pub fn update(
        &mut self,
        params: Vec<(ParamGroup, &mut [f64])>,
        grads: Vec<&[f64]>,
        cfg: &AdamConfig,
    ) -> Result<()> {
        if params.len() != grads.len() {
            return Err(shape_err(
                "adam tensors",
                params.len().to_string(),
                grads.len().to_string(),
            ));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(shape_err(
                "adam state",
                self.m.len().to_string(),
                params.len().to_string(),
            ));
        }
        for ((i, (_, p)), g) in params.iter().enumerate().zip(&grads) {
            if p.len() != g.len() || self.m[i].len() != p.len() {
                return Err(shape_err(
                    "adam tensor",
                    self.m[i].len().to_string(),
                    format!("{} / {}", p.len(), g.len()),
                ));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (i, ((group, p), g)) in params.into_iter().zip(grads).enumerate() {
            let lr = cfg.lr.get(group);
            let wd = cfg.weight_decay.get(group);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + wd * p[j]);
            }
        }
        Ok(())
    }
}

impl NetworkParams {
    /// Trainable tensors with their groups: encoder, classifier, bias, then
    /// per block the learned `W` or `K` followed by `k2..k9`.
    pub fn trainable_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut out: Vec<(ParamGroup, &mut [f64])> = vec![
            (
                ParamGroup::Embedding,
                self.encoder.as_slice_mut().expect("standard layout"),
            ),
            (
                ParamGroup::Embedding,
                self.classifier.as_slice_mut().expect("standard layout"),
            ),
            (
                ParamGroup::Embedding,
                self.classifier_bias.as_slice_mut().expect("standard layout"),
            ),
        ];
        for b in &mut self.layers {
            let t = match b.feature.parameterization {
                Parameterization::LearnWIdentityK => b.feature.w.as_slice_mut(),
                Parameterization::IdentityWLearnK => b.feature.k.as_slice_mut(),
            };
            out.push((ParamGroup::NodeDynamics, t.expect("standard layout")));
            out.push((
                ParamGroup::AdjacencyDynamics,
                b.adjacency.coeffs.ks_mut().as_mut_slice(),
            ));
        }
        out
    }
}

/// Adam update of the network followed by projection onto the contractive
/// set: `α ≤ 0` and `h = min(step cap, ĥ(k))` in every layer.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &NetworkGrads,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let snapshot = params.clone();
    let g = grads.slices(&snapshot);
    state.update(params.trainable_mut(), g, cfg)?;
    params.enforce_constraints();
    Ok(())
}
