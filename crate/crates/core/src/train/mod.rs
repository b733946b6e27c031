//! Training: masked cross-entropy, reverse mode, Adam and early stopping.

pub mod adam;
pub mod backward;
pub mod gradcheck;
pub mod loss;

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adjacency::max_step_adjacency;
use crate::error::{CsgnnError, Result};
use crate::graph::Graph;
use crate::network::{forward, ArchConfig, Mode, NetworkParams};

pub use adam::{adam_step, AdamConfig, AdamState, GroupValues, ParamGroup};
pub use backward::{backward, LayerGrads, NetworkGrads};
pub use gradcheck::{gradient_check, CheckProblem, GradCheckOutcome, GradCheckReport, FD_STEP};
pub use loss::{masked_accuracy, masked_cross_entropy, masked_cross_entropy_with_grad};

/// Default early-stopping patience in epochs.
pub const DEFAULT_PATIENCE: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            optimizer: AdamConfig::default(),
            epochs: 200,
            patience: DEFAULT_PATIENCE,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rates must lie in `[1e-5, 1e-2]` and weight decays in
    /// `[5e-8, 5e-2]`, per group.
    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        for (name, v) in [
            ("embedding", o.lr.embedding),
            ("node", o.lr.node),
            ("adjacency", o.lr.adjacency),
        ] {
            if !(1e-5..=1e-2).contains(&v) {
                return Err(CsgnnError::InvalidParameter(format!(
                    "lr_{name} = {v} outside [1e-5, 1e-2]"
                )));
            }
        }
        let wd = &o.weight_decay;
        for (name, v) in [
            ("embedding", wd.embedding),
            ("node", wd.node),
            ("adjacency", wd.adjacency),
        ] {
            if !(5e-8..=5e-2).contains(&v) {
                return Err(CsgnnError::InvalidParameter(format!(
                    "wd_{name} = {v} outside [5e-8, 5e-2]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation accuracy seen.
    pub params: NetworkParams,
    pub history: Vec<EpochMetrics>,
    /// Epoch of `params`; 0 means the initialization.
    pub best_epoch: usize,
}

fn check_contractive(params: &NetworkParams, epoch: usize) -> Result<()> {
    for (i, b) in params.layers.iter().enumerate() {
        let alpha = b.adjacency.coeffs.alpha();
        let ok_step = match max_step_adjacency(&b.adjacency.coeffs) {
            Ok(max) => b.h() <= max,
            Err(_) => true,
        };
        if alpha > 0.0 || !ok_step || b.feature.h != b.adjacency.h {
            return Err(CsgnnError::InvalidParameter(format!(
                "block {i} left the contractive set after epoch {epoch}"
            )));
        }
    }
    Ok(())
}

/// Validation loss and train/val/test accuracy of `params` without dropout.
fn evaluate(g: &Graph, params: &NetworkParams, rng: &mut ChaCha8Rng) -> Result<(f64, f64, f64, f64)> {
    let (logits, _) = forward(g, params, Mode::Eval, rng)?;
    let lv = logits.view();
    Ok((
        masked_cross_entropy(&lv, &g.labels, &g.val_mask)?,
        masked_accuracy(&lv, &g.labels, &g.train_mask)?,
        masked_accuracy(&lv, &g.labels, &g.val_mask)?,
        masked_accuracy(&lv, &g.labels, &g.test_mask)?,
    ))
}

fn diverged(e: CsgnnError, epoch: usize, last_good: &NetworkParams) -> CsgnnError {
    match e {
        CsgnnError::NonFinite(_) => CsgnnError::Diverged {
            epoch,
            last_good: Box::new(last_good.clone()),
        },
        other => other,
    }
}

/// Trains a fresh network on `g`. Only `g` is seen, so attacked graphs are
/// poisoning inputs.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = NetworkParams::init(
        &cfg.arch,
        g.feature_dim(),
        g.num_classes().max(2),
        &g.adjacency.view(),
        &mut rng,
    )?;
    train_from(g, cfg, params, &mut rng)
}

/// Trains starting from `params`; the dropout stream is drawn from `rng`.
pub fn train_from(
    g: &Graph,
    cfg: &TrainConfig,
    mut params: NetworkParams,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    let mut state = AdamState::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_val = f64::NEG_INFINITY;
    let mut best_val_loss = f64::INFINITY;
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        let (logits, trace) = forward(g, &params, Mode::Train, rng).map_err(|e| diverged(e, epoch, &best))?;
        let (train_loss, grad) = masked_cross_entropy_with_grad(&logits.view(), &g.labels, &g.train_mask)?;
        if !train_loss.is_finite() {
            return Err(diverged(CsgnnError::NonFinite("train loss".into()), epoch, &best));
        }
        let grads = backward(&trace, &params, &grad.view())?;
        if !grads.max_abs().is_finite() {
            return Err(diverged(CsgnnError::NonFinite("gradients".into()), epoch, &best));
        }
        adam_step(&mut params, &grads, &mut state, &cfg.optimizer)?;
        check_contractive(&params, epoch)?;

        let (val_loss, train_acc, val_acc, test_acc) =
            evaluate(g, &params, rng).map_err(|e| diverged(e, epoch, &best))?;
        history.push(EpochMetrics {
            epoch,
            train_loss,
            val_loss,
            train_acc,
            val_acc,
            test_acc,
        });
        if val_acc > best_val || (val_acc == best_val && val_loss < best_val_loss) {
            best_val = val_acc;
            best_val_loss = val_loss;
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch,
    })
}

/// `epoch,train_loss,val_acc,test_acc` rows with a header line.
pub fn history_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,val_acc,test_acc\n");
    for m in history {
        let _ = writeln!(out, "{},{},{},{}", m.epoch, m.train_loss, m.val_acc, m.test_acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::{gen_sbm, SbmConfig};

    fn benchmark() -> Graph {
        gen_sbm(&SbmConfig::default(), 0).unwrap()
    }

    #[test]
    fn separable_sbm_reaches_accuracy() {
        let out = train(&benchmark(), &TrainConfig::default()).unwrap();
        let best = &out.history[out.best_epoch - 1];
        assert!(best.test_acc >= 0.9, "test accuracy {}", best.test_acc);
        assert!(out.history.len() <= 200);
    }

    #[test]
    fn dropout_free_loss_falls_in_five_epoch_windows() {
        let mut cfg = TrainConfig {
            epochs: 20,
            patience: 0,
            ..TrainConfig::default()
        };
        cfg.arch.dropout_p = 0.0;
        let out = train(&benchmark(), &cfg).unwrap();
        let windows: Vec<f64> = out
            .history
            .chunks(5)
            .map(|w| w.iter().map(|m| m.train_loss).sum::<f64>() / 5.0)
            .collect();
        assert_eq!(windows.len(), 4);
        assert!(windows.windows(2).all(|p| p[1] < p[0]), "{windows:?}");
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let g = benchmark();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&g, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = NetworkParams::init(&cfg.arch, g.feature_dim(), 2, &g.adjacency.view(), &mut rng).unwrap();
        assert_eq!(out.params, init);
        assert!(out.history.is_empty());
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn same_seed_same_history() {
        let g = benchmark();
        let cfg = TrainConfig {
            epochs: 30,
            ..TrainConfig::default()
        };
        let a = train(&g, &cfg).unwrap();
        let b = train(&g, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        let c = train(&g, &TrainConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn trained_blocks_stay_contractive() {
        let cfg = TrainConfig {
            epochs: 40,
            arch: ArchConfig {
                parameterization: crate::features::Parameterization::IdentityWLearnK,
                k_init: 0.5,
                ..ArchConfig::default()
            },
            ..TrainConfig::default()
        };
        let out = train(&benchmark(), &cfg).unwrap();
        for b in &out.params.layers {
            assert!(b.adjacency.coeffs.alpha() <= 0.0);
            assert!(b.h() <= max_step_adjacency(&b.adjacency.coeffs).unwrap());
        }
    }

    #[test]
    fn overflow_reports_divergence() {
        let g = benchmark();
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = NetworkParams::init(&cfg.arch, g.feature_dim(), 2, &g.adjacency.view(), &mut rng).unwrap();
        params.encoder.mapv_inplace(|x| x * 1e308);
        match train_from(&g, &cfg, params, &mut rng) {
            Err(CsgnnError::Diverged { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_rates_rejected() {
        let mut cfg = TrainConfig::default();
        cfg.optimizer.lr.node = 0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.optimizer.weight_decay.adjacency = 0.0;
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn history_csv_has_header_and_rows() {
        let m = EpochMetrics {
            epoch: 1,
            train_loss: 0.5,
            val_loss: 0.4,
            train_acc: 1.0,
            val_acc: 0.75,
            test_acc: 0.8,
        };
        assert_eq!(history_csv(&[m]), "epoch,train_loss,val_acc,test_acc\n1,0.5,0.75,0.8\n");
    }
}
