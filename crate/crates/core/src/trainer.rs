//! The outer training loop: minibatch SGD with momentum and weight decay,
//! simultaneous updates of encoder, distance model and head, periodic
//! validation EER, reduce-on-plateau learning rate, and best-checkpoint
//! selection.

use std::time::Instant;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::gradcheck::ParamAccess;
use crate::losses::{combined_loss, LossConfig};
use crate::models::{
    init_models, DistanceConfig, EncoderConfig, HeadInit, Mode, ModelBundle,
};
use crate::nn::Param;
use crate::pairing::{class_balanced_batches, enumerate_pairs, BatchPlan};
use crate::rng::{streams, Rng};
use crate::scoring::{compute_eer, generate_trials, score_trials, TrialMode};

pub const LR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub lr_factor: f64,
    /// Global L2 threshold; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub max_iterations: usize,
    pub plan: BatchPlan,
    pub loss: LossConfig,
    pub seed: u64,
    /// Validate every this many steps (0 disables validation).
    pub eval_every: usize,
    /// Size of the fixed balanced validation trial list.
    pub val_trials: usize,
    /// Include a bias in the classifier head.
    pub head_bias: bool,
    /// Keep encoder parameters fixed (identity-encoder oracle runs).
    pub freeze_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-3,
            patience: 10,
            lr_factor: 0.1,
            grad_clip: None,
            max_iterations: 1000,
            plan: BatchPlan {
                classes_per_batch: 24,
                examples_per_class: 5,
            },
            loss: LossConfig::default(),
            seed: 0,
            eval_every: 100,
            val_trials: 2000,
            head_bias: true,
            freeze_encoder: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.momentum < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("lr must be > 0, momentum/decay >= 0".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.lr_factor) || self.lr_factor == 0.0 {
            return Err(Error::Config(format!("lr_factor {} outside (0,1)", self.lr_factor)));
        }
        if let Some(c) = self.grad_clip {
            if c <= 0.0 {
                return Err(Error::Config(format!("grad_clip {c} must be > 0")));
            }
        }
        self.loss.validate()?;
        BatchPlan::new(self.plan.classes_per_batch, self.plan.examples_per_class)?;
        Ok(())
    }

    pub fn head_init(&self) -> HeadInit {
        match self.loss.aux_kind {
            crate::losses::AuxKind::AdditiveMargin => HeadInit::HeUniform,
            _ => HeadInit::Zeros,
        }
    }
}

/// One training-log row. `val_eer` is present on evaluation steps.
#[derive(Clone, Debug)]
pub struct TrainLogEntry {
    pub step: usize,
    pub epoch: usize,
    pub loss_pair: f64,
    pub loss_aux: f64,
    pub loss_total: f64,
    pub lr: f64,
    pub val_eer: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainOutcome {
    Completed,
    /// Non-finite loss or update; the returned bundle is the last good
    /// checkpoint.
    Diverged { step: usize },
}

#[derive(Debug)]
pub struct TrainResult {
    pub bundle: ModelBundle,
    pub log: Vec<TrainLogEntry>,
    pub outcome: TrainOutcome,
    pub best_val_eer: Option<f64>,
}

/// Momentum SGD update for a single tensor:
/// `g ← grad + weight_decay·value; buf ← momentum·buf + g;
/// value ← value − lr·buf`, then the gradient is zeroed.
pub fn sgd_momentum_step(param: &mut Param, lr: f64, momentum: f64, weight_decay: f64) {
    let value = param.value.data_mut();
    let grad = param.grad.data_mut();
    let buf = param.momentum.data_mut();
    for i in 0..value.len() {
        let g = grad[i] + weight_decay * value[i];
        buf[i] = momentum * buf[i] + g;
        value[i] -= lr * buf[i];
        grad[i] = 0.0;
    }
}

/// Reduce-on-plateau: when the best validation EER has not strictly
/// improved for `patience` consecutive evaluations, multiply the rate by
/// `factor` (floored at [`LR_FLOOR`]) and reset the stagnation counter.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    lr: f64,
    patience: usize,
    factor: f64,
    best: Option<f64>,
    stagnation: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, patience: usize, factor: f64) -> Self {
        PlateauScheduler {
            lr,
            patience,
            factor,
            best: None,
            stagnation: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one validation EER; returns the (possibly reduced) rate.
    pub fn observe(&mut self, eer: f64) -> f64 {
        match self.best {
            None => self.best = Some(eer),
            Some(best) if eer < best => {
                self.best = Some(eer);
                self.stagnation = 0;
            }
            Some(_) => {
                self.stagnation += 1;
                if self.stagnation >= self.patience {
                    self.lr = (self.lr * self.factor).max(LR_FLOOR);
                    self.stagnation = 0;
                }
            }
        }
        self.lr
    }
}

fn stepped_tensors(bundle: &ModelBundle, freeze_encoder: bool) -> Vec<usize> {
    (0..bundle.num_tensors())
        .filter(|&t| !(freeze_encoder && bundle.tensor_is_encoder(t)))
        .collect()
}

/// Scales gradients so their global L2 norm does not exceed `threshold`;
/// direction is preserved. Returns the pre-clip norm.
pub fn clip_global_norm(bundle: &mut ModelBundle, tensors: &[usize], threshold: f64) -> f64 {
    let norm_sq: f64 = tensors
        .iter()
        .map(|&t| bundle.tensor(t).grad.frobenius_sq())
        .sum();
    let norm = norm_sq.sqrt();
    if norm > threshold && norm > 0.0 {
        let scale = threshold / norm;
        for &t in tensors {
            bundle.tensor_mut(t).grad.scale(scale);
        }
    }
    norm
}

/// Builds a fresh bundle from the configs and trains it.
pub fn train(
    train_ds: &LabeledDataset,
    val_ds: &LabeledDataset,
    enc_cfg: &EncoderConfig,
    dist_cfg: &DistanceConfig,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    let num_classes = train_ds.num_classes().max(1);
    let bundle = init_models(
        enc_cfg,
        dist_cfg,
        num_classes,
        cfg.head_bias,
        cfg.head_init(),
        cfg.seed,
    )?;
    train_bundle(bundle, train_ds, val_ds, cfg)
}

/// Trains an existing bundle in place (used by identity-encoder oracle
/// runs); see [`train`] for the usual entry point.
pub fn train_bundle(
    mut bundle: ModelBundle,
    train_ds: &LabeledDataset,
    val_ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    if train_ds.input_dim() != bundle.enc_cfg.input_dim {
        return Err(Error::dimension(
            "train_bundle",
            train_ds.input_dim(),
            bundle.enc_cfg.input_dim,
        ));
    }
    if let Some(&bad) = train_ds.labels.iter().find(|&&l| l >= bundle.num_classes) {
        return Err(Error::Data(format!(
            "label {bad} out of range for {}-class head",
            bundle.num_classes
        )));
    }

    let root = Rng::new(cfg.seed);
    let mut batches = class_balanced_batches(train_ds, &cfg.plan, root.substream(streams::BATCHES))?;
    let mut dropout_rng = root.substream(streams::DROPOUT);

    let validate = cfg.eval_every > 0 && cfg.val_trials > 0;
    let val_trials = if validate {
        let mut trial_rng = root.substream(streams::TRIALS);
        Some(generate_trials(
            val_ds,
            TrialMode::Sampled {
                n: cfg.val_trials,
                target_fraction: 0.5,
            },
            &mut trial_rng,
        )?)
    } else {
        None
    };

    let mut scheduler = PlateauScheduler::new(cfg.lr, cfg.patience, cfg.lr_factor);
    let tensors = stepped_tensors(&bundle, cfg.freeze_encoder);
    let mut log = Vec::with_capacity(cfg.max_iterations);
    let mut best: Option<(f64, ModelBundle)> = None;
    let started = Instant::now();

    for step in 1..=cfg.max_iterations {
        let batch_idx = batches.next_batch();
        let x = train_ds.features.gather_rows(&batch_idx);
        let labels: Vec<usize> = batch_idx.iter().map(|&i| train_ds.labels[i]).collect();
        let pairs = enumerate_pairs(&labels)?;

        bundle.zero_grads();
        let loss = match combined_loss(
            &mut bundle,
            &x,
            &labels,
            &pairs,
            &cfg.loss,
            &mut Mode::Train {
                dropout: &mut dropout_rng,
            },
            true,
        ) {
            Ok(l) => l,
            Err(Error::Numeric(msg)) => {
                log::error!("training diverged at step {step}: {msg}");
                let bundle = best.map(|(_, b)| b).unwrap_or(bundle);
                return Ok(TrainResult {
                    bundle,
                    log,
                    outcome: TrainOutcome::Diverged { step },
                    best_val_eer: None,
                });
            }
            Err(e) => return Err(e),
        };

        if let Some(threshold) = cfg.grad_clip {
            clip_global_norm(&mut bundle, &tensors, threshold);
        }
        for &t in &tensors {
            let wd = if bundle.tensor_is_bias(t) {
                0.0
            } else {
                cfg.weight_decay
            };
            sgd_momentum_step(bundle.tensor_mut(t), scheduler.lr(), cfg.momentum, wd);
        }
        bundle.train_step += 1;

        let mut val_eer = None;
        if validate && step % cfg.eval_every == 0 {
            if !(0..bundle.num_tensors()).all(|t| bundle.tensor(t).value.all_finite()) {
                log::error!("training diverged at step {step}: non-finite parameter");
                let bundle = best.map(|(_, b)| b).unwrap_or(bundle);
                return Ok(TrainResult {
                    bundle,
                    log,
                    outcome: TrainOutcome::Diverged { step },
                    best_val_eer: None,
                });
            }
            let trials = val_trials.as_ref().expect("validation trials");
            let scored = score_trials(&bundle, val_ds, trials)?;
            let scores: Vec<f64> = scored.iter().map(|s| s.score_e2e).collect();
            let targets: Vec<bool> = scored.iter().map(|s| s.trial.target).collect();
            let (eer, _) = compute_eer(&scores, &targets)?;
            val_eer = Some(eer);
            if best.as_ref().is_none_or(|(b, _)| eer < *b) {
                best = Some((eer, bundle.clone()));
            }
            scheduler.observe(eer);
        }

        log.push(TrainLogEntry {
            step,
            epoch: batches.epoch(),
            loss_pair: loss.pair,
            loss_aux: loss.aux,
            loss_total: loss.total,
            lr: scheduler.lr(),
            val_eer,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }

    let best_val_eer = best.as_ref().map(|(e, _)| *e);
    let bundle = best.map(|(_, b)| b).unwrap_or(bundle);
    Ok(TrainResult {
        bundle,
        log,
        outcome: TrainOutcome::Completed,
        best_val_eer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Matrix;

    fn scalar_param(v: f64) -> Param {
        Param::new(Matrix::from_vec(1, 1, vec![v]).unwrap())
    }

    #[test]
    fn plain_sgd_without_momentum() {
        let mut p = scalar_param(1.0);
        p.grad.fill(0.5);
        sgd_momentum_step(&mut p, 0.1, 0.0, 0.0);
        assert!((p.value.get(0, 0) - 0.95).abs() < 1e-15);
        assert_eq!(p.grad.get(0, 0), 0.0);
    }

    #[test]
    fn zero_grad_zero_decay_is_fixed_point() {
        let mut p = scalar_param(2.0);
        sgd_momentum_step(&mut p, 0.1, 0.9, 0.0);
        sgd_momentum_step(&mut p, 0.1, 0.9, 0.0);
        assert_eq!(p.value.get(0, 0), 2.0);
        assert_eq!(p.momentum.get(0, 0), 0.0);
    }

    #[test]
    fn momentum_hand_recursion() {
        // theta=1, grad=1 twice, lr=0.1, momentum=0.9:
        // step1 buf=1, theta=0.9; step2 buf=1.9, theta=0.71
        let mut p = scalar_param(1.0);
        p.grad.fill(1.0);
        sgd_momentum_step(&mut p, 0.1, 0.9, 0.0);
        assert!((p.value.get(0, 0) - 0.9).abs() < 1e-15);
        p.grad.fill(1.0);
        sgd_momentum_step(&mut p, 0.1, 0.9, 0.0);
        assert!((p.value.get(0, 0) - 0.71).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let mut p = scalar_param(1.0);
        sgd_momentum_step(&mut p, 0.1, 0.0, 0.5);
        assert!((p.value.get(0, 0) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn plateau_improving_keeps_lr() {
        let mut s = PlateauScheduler::new(0.01, 2, 0.1);
        for eer in [0.4, 0.3, 0.2, 0.1] {
            assert_eq!(s.observe(eer), 0.01);
        }
    }

    #[test]
    fn plateau_counter_semantics() {
        // patience=2, EERs [10,10,10] -> one reduction after the 3rd.
        let mut s = PlateauScheduler::new(0.01, 2, 0.1);
        assert_eq!(s.observe(10.0), 0.01);
        assert_eq!(s.observe(10.0), 0.01);
        let lr = s.observe(10.0);
        assert!((lr - 0.001).abs() < 1e-15);
    }

    #[test]
    fn plateau_composition() {
        let mut s = PlateauScheduler::new(0.01, 1, 0.1);
        s.observe(10.0);
        s.observe(10.0); // first reduction -> 0.001
        let lr = s.observe(10.0); // second reduction -> 0.0001
        assert!((lr - 0.0001).abs() < 1e-15);
    }

    #[test]
    fn plateau_floor() {
        let mut s = PlateauScheduler::new(1e-5, 1, 0.1);
        s.observe(1.0);
        s.observe(1.0);
        s.observe(1.0);
        assert_eq!(s.lr(), LR_FLOOR);
    }
}
