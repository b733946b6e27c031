//! Central finite-difference verification of the reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjacency::equivariant_linear;
use crate::error::Result;
use crate::features::Parameterization;
use crate::network::{forward_matrices, ArchConfig, ForwardTrace, Mode, NetworkParams};
use crate::sampling::{random_binary_symmetric, random_matrix};
use crate::train::backward::backward;
use crate::train::loss::masked_cross_entropy_with_grad;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-4;

/// Floor on the per-tensor scale in the relative error. Roundoff in a
/// central difference of an O(1) loss is about `1e-16 / FD_STEP`, so
/// gradients below this floor cannot be resolved to relative accuracy;
/// for such tensors the check is an absolute one at `tol · floor`.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Inputs of a gradient check: a graph-like triple plus the loss mask.
#[derive(Debug, Clone, Copy)]
pub struct CheckProblem<'a> {
    pub features: ArrayView2<'a, f64>,
    pub adjacency: ArrayView2<'a, f64>,
    pub labels: &'a [i64],
    pub mask: &'a [bool],
    /// Seed of the dropout masks; every forward pass reuses it.
    pub dropout_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `‖analytic − numeric‖_∞ / max(‖analytic‖_∞, ‖numeric‖_∞, floor)` per
    /// trainable tensor, in `NetworkParams::trainable_mut` order.
    pub tensor_errors: Vec<f64>,
    pub max_rel_error: f64,
    pub parameters_checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GradCheckOutcome {
    Measured(GradCheckReport),
    /// A probe moved some pre-activation or some `k_i` across its kink, so
    /// the central difference does not estimate the derivative.
    KinkCrossed,
}

fn evaluate(problem: &CheckProblem<'_>, params: &NetworkParams) -> Result<(f64, Vec<bool>, ForwardTrace, Array2<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(problem.dropout_seed);
    let (logits, trace) = forward_matrices(&problem.features, &problem.adjacency, params, Mode::Train, &mut rng)?;
    let (loss, grad) = masked_cross_entropy_with_grad(&logits.view(), problem.labels, problem.mask)?;
    let mut pattern = Vec::new();
    for l in 0..params.num_layers {
        let block = params.layer(l);
        let pre = equivariant_linear(&trace.adjacency_states[l].view(), &block.adjacency.coeffs)?;
        pattern.extend(pre.iter().map(|&s| s >= 0.0));
        pattern.extend(trace.layer_caches[l].preactivation().iter().map(|&s| s >= 0.0));
    }
    for b in &params.layers {
        pattern.extend(b.adjacency.coeffs.ks().iter().map(|&k| k > 0.0));
        pattern.extend(b.adjacency.coeffs.ks().iter().map(|&k| k < 0.0));
    }
    Ok((loss, pattern, trace, grad))
}

/// Compares `backward` with central differences of the masked cross-entropy
/// for every trainable scalar.
pub fn gradient_check(problem: &CheckProblem<'_>, params: &NetworkParams, step: f64) -> Result<GradCheckOutcome> {
    let (_, base_pattern, trace, grad_logits) = evaluate(problem, params)?;
    let grads = backward(&trace, params, &grad_logits.view())?;
    let analytic: Vec<Vec<f64>> = grads.slices(params).into_iter().map(|s| s.to_vec()).collect();

    let mut probe = params.clone();
    let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
    let mut tensor_errors = Vec::with_capacity(sizes.len());
    let mut checked = 0;
    for (t, &len) in sizes.iter().enumerate() {
        let mut numeric = vec![0.0; len];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.trainable_mut()[t].1[j];
            probe.trainable_mut()[t].1[j] = orig + step;
            let (plus, pattern_plus, _, _) = evaluate(problem, &probe)?;
            probe.trainable_mut()[t].1[j] = orig - step;
            let (minus, pattern_minus, _, _) = evaluate(problem, &probe)?;
            probe.trainable_mut()[t].1[j] = orig;
            if pattern_plus != base_pattern || pattern_minus != base_pattern {
                return Ok(GradCheckOutcome::KinkCrossed);
            }
            *slot = (plus - minus) / (2.0 * step);
            checked += 1;
        }
        let a = &analytic[t];
        let diff = a.iter().zip(&numeric).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let scale = a.iter().chain(&numeric).fold(REL_ERROR_FLOOR, |m, x| m.max(x.abs()));
        tensor_errors.push(diff / scale);
    }
    let max_rel_error = tensor_errors.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckOutcome::Measured(GradCheckReport {
        tensor_errors,
        max_rel_error,
        parameters_checked: checked,
    }))
}

/// A random small problem for gradient checking.
#[derive(Debug, Clone)]
pub struct CheckInstance {
    pub features: Array2<f64>,
    pub adjacency: Array2<f64>,
    pub labels: Vec<i64>,
    pub mask: Vec<bool>,
    pub params: NetworkParams,
    pub dropout_seed: u64,
}

impl CheckInstance {
    /// `n ∈ 3..=max_nodes`, `L ∈ 1..=max_layers`, up to 4 channels, both
    /// parameterizations, with and without dropout and weight sharing.
    /// Steps are set below `ĥ` so that probing `k` keeps them admissible.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_nodes: usize, max_layers: usize) -> Result<Self> {
        let n = rng.random_range(3..=max_nodes.max(3));
        let c_in = rng.random_range(1..=4);
        let classes = rng.random_range(2..=3);
        let arch = ArchConfig {
            hidden: rng.random_range(2..=4),
            layers: rng.random_range(1..=max_layers.max(1)),
            parameterization: if rng.random_bool(0.5) {
                Parameterization::LearnWIdentityK
            } else {
                Parameterization::IdentityWLearnK
            },
            lambda: rng.random_range(0.5..2.0),
            h: rng.random_range(0.1..1.0),
            alpha: rng.random_range(-2.0..-0.1),
            share_weights: rng.random_bool(0.3),
            dropout_p: if rng.random_bool(0.5) { 0.3 } else { 0.0 },
            k_init: 0.5,
            ..ArchConfig::default()
        };
        let adjacency = random_binary_symmetric(rng, n, 0.5);
        let features = random_matrix(rng, n, c_in, 1.0);
        let mut params = NetworkParams::init(&arch, c_in, classes, &adjacency.view(), rng)?;
        params.classifier_bias = Array1::from_shape_fn(classes, |_| rng.random_range(-0.5..0.5));
        for b in &mut params.layers {
            let h = 0.9 * b.h();
            b.step_cap = h;
            b.set_step(h);
        }
        let labels = (0..n).map(|_| rng.random_range(0..classes as i64)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        mask[0] = true;
        Ok(Self {
            features,
            adjacency,
            labels,
            mask,
            params,
            dropout_seed: rng.random(),
        })
    }

    pub fn problem(&self) -> CheckProblem<'_> {
        CheckProblem {
            features: self.features.view(),
            adjacency: self.adjacency.view(),
            labels: &self.labels,
            mask: &self.mask,
            dropout_seed: self.dropout_seed,
        }
    }
}

/// Draws random instances until `trials` of them avoid kink crossings and
/// returns `(reports, number of redrawn instances)`.
pub fn gradient_check_trials<R: Rng + ?Sized>(
    rng: &mut R,
    trials: usize,
    max_nodes: usize,
    max_layers: usize,
) -> Result<(Vec<GradCheckReport>, usize)> {
    let mut reports = Vec::with_capacity(trials);
    let mut redrawn = 0;
    while reports.len() < trials {
        let inst = CheckInstance::random(rng, max_nodes, max_layers)?;
        match gradient_check(&inst.problem(), &inst.params, FD_STEP)? {
            GradCheckOutcome::Measured(r) => reports.push(r),
            GradCheckOutcome::KinkCrossed => redrawn += 1,
        }
    }
    Ok((reports, redrawn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjacency::EquivariantCoeffs;
    use crate::network::forward_matrices;
    use crate::train::loss::masked_cross_entropy_with_grad;

    #[test]
    fn random_instances_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (reports, _) = gradient_check_trials(&mut rng, 10, 6, 3).unwrap();
        for r in &reports {
            assert!(r.max_rel_error <= 1e-5, "{:?}", r.tensor_errors);
        }
    }

    #[test]
    fn zero_loss_seed_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let inst = CheckInstance::random(&mut rng, 6, 2).unwrap();
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let (logits, trace) = forward_matrices(
            &inst.features.view(),
            &inst.adjacency.view(),
            &inst.params,
            Mode::Train,
            &mut drng,
        )
        .unwrap();
        let grads = backward(&trace, &inst.params, &Array2::zeros(logits.dim()).view()).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn frozen_adjacency_matches_feature_only_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let inst = CheckInstance::random(&mut rng, 6, 3).unwrap();
        let mut frozen = inst.params.clone();
        for b in &mut frozen.layers {
            b.adjacency.coeffs = EquivariantCoeffs::zero();
        }
        // Feature-only reference: each layer applies the feature step on the
        // fixed input graph.
        let p = &frozen;
        let loss_of = |p: &NetworkParams| {
            let mut f = inst.features.dot(&p.encoder);
            for l in 0..p.num_layers {
                f = crate::features::feature_step(
                    &f.view(),
                    &inst.adjacency.view(),
                    &p.layer(l).feature,
                    p.activation(),
                )
                .unwrap();
            }
            let logits = f.dot(&p.classifier) + &p.classifier_bias;
            masked_cross_entropy_with_grad(&logits.view(), &inst.labels, &inst.mask)
                .unwrap()
                .0
        };
        let mut eval = frozen.clone();
        eval.dropout_p = 0.0;
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let (logits, trace) = forward_matrices(
            &inst.features.view(),
            &inst.adjacency.view(),
            &eval,
            Mode::Eval,
            &mut drng,
        )
        .unwrap();
        let (loss, g) = masked_cross_entropy_with_grad(&logits.view(), &inst.labels, &inst.mask).unwrap();
        assert!((loss - loss_of(p)).abs() <= 1e-12 * loss.abs().max(1.0));
        let grads = backward(&trace, &eval, &g.view()).unwrap();
        // The adjacency states never move, so the encoder gradient equals a
        // finite-difference derivative of the feature-only loss.
        let step = 1e-6;
        for (idx, &ga) in grads.encoder.iter().enumerate() {
            let mut plus = eval.clone();
            plus.encoder.as_slice_mut().unwrap()[idx] += step;
            let mut minus = eval.clone();
            minus.encoder.as_slice_mut().unwrap()[idx] -= step;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * step);
            assert!((fd - ga).abs() <= 1e-6 * ga.abs().max(1.0), "{fd} vs {ga}");
        }
        for l in 0..eval.num_layers {
            assert_eq!(trace.adjacency_states[l], inst.adjacency);
        }
    }

    #[test]
    fn kink_crossing_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut inst = CheckInstance::random(&mut rng, 4, 1).unwrap();
        // k2 exactly at the |k| kink: probing it changes the sign pattern.
        inst.params.layers[0].adjacency.coeffs.ks_mut()[0] = 0.0;
        let out = gradient_check(&inst.problem(), &inst.params, FD_STEP).unwrap();
        assert_eq!(out, GradCheckOutcome::KinkCrossed);
    }
}
