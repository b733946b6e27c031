//! Seeded stochastic block model benchmark with class-shifted Gaussian
//! features and a 10/10/80 train/validation/test split.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CsgnnError, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmConfig {
    pub n: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    /// Norm of each class mean shift.
    pub signal: f64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            n: 100,
            classes: 2,
            p_in: 0.3,
            p_out: 0.02,
            feat_dim: 16,
            signal: 3.0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CsgnnError::InvalidParameter(m));
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return bad(format!(
                "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            ));
        }
        if self.classes == 0 || self.n < self.classes {
            return bad(format!(
                "need 1 <= classes <= n, got classes={} n={}",
                self.classes, self.n
            ));
        }
        if self.feat_dim == 0 {
            return bad("feat_dim must be positive".into());
        }
        if !(self.signal >= 0.0 && self.signal.is_finite()) {
            return bad(format!("signal must be finite and non-negative, got {}", self.signal));
        }
        Ok(())
    }
}

/// Unit class mean supported on the dimensions `d` with `d % classes == c`.
/// Classes beyond `feat_dim` get a zero mean.
fn class_mean(c: usize, classes: usize, feat_dim: usize) -> Vec<f64> {
    let support: Vec<usize> = (0..feat_dim).filter(|d| d % classes == c).collect();
    let mut mean = vec![0.0; feat_dim];
    if !support.is_empty() {
        let v = 1.0 / (support.len() as f64).sqrt();
        for d in support {
            mean[d] = v;
        }
    }
    mean
}

/// Node `i` belongs to class `⌊i·classes/n⌋`; edges are drawn independently
/// with probability `p_in` inside a class and `p_out` across classes.
pub fn gen_sbm(cfg: &SbmConfig, seed: u64) -> Result<Graph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n;
    let labels: Vec<i64> = (0..n).map(|i| (i * cfg.classes / n) as i64).collect();

    let mut adjacency = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            if rng.random_bool(p) {
                adjacency[[i, j]] = 1.0;
                adjacency[[j, i]] = 1.0;
            }
        }
    }

    let means: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|c| class_mean(c, cfg.classes, cfg.feat_dim))
        .collect();
    let mut features = Array2::zeros((n, cfg.feat_dim));
    for i in 0..n {
        let mean = &means[labels[i] as usize];
        for d in 0..cfg.feat_dim {
            let noise: f64 = rng.sample(StandardNormal);
            features[[i, d]] = cfg.signal * mean[d] + noise;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = n / 10;
    let n_val = n / 10;
    let mut train_mask = vec![false; n];
    let mut val_mask = vec![false; n];
    let mut test_mask = vec![false; n];
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_train {
            train_mask[i] = true;
        } else if rank < n_train + n_val {
            val_mask[i] = true;
        } else {
            test_mask[i] = true;
        }
    }
    Graph::new(adjacency, features, labels, train_mask, val_mask, test_mask, true)
}
