//! Flat, line-oriented `key = value` run configuration with `#`
//! comments. Unknown keys are rejected so a typo can never silently fall
//! back to a default.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::{AuxKind, LossConfig};
use crate::models::{DistanceConfig, EncoderConfig, DEFAULT_SLOPE};
use crate::oracle::{GaussianSpec, NegativeForm};
use crate::pairing::BatchPlan;
use crate::trainer::TrainConfig;

/// Every tunable of the engine, with documented defaults. See the key
/// table in the README.
#[derive(Clone, Debug)]
pub struct RunConfig {
    // model
    pub input_dim: Option<usize>,
    pub enc_hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub slope: f64,
    pub identity_encoder: bool,
    pub dist_depth: usize,
    pub dist_width: usize,
    pub dist_dropout: f64,
    pub head_bias: bool,
    // loss
    pub aux_kind: AuxKind,
    pub label_smoothing: f64,
    pub am_scale: f64,
    pub am_margin: f64,
    pub aux_weight: f64,
    // training
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub lr_factor: f64,
    pub grad_clip: Option<f64>,
    pub max_iterations: usize,
    pub batch_classes: usize,
    pub batch_examples: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub val_trials: usize,
    pub val_fraction: f64,
    pub freeze_encoder: bool,
    // audit
    pub audit_pairs: usize,
    pub audit_triplets: usize,
    pub audit_bins: usize,
    // oracle
    pub oracle_dims: usize,
    pub oracle_means: Vec<Vec<f64>>,
    pub oracle_variance: f64,
    pub oracle_priors: Option<Vec<f64>>,
    pub oracle_n_per_class: usize,
    pub oracle_n_mc: usize,
    pub oracle_pairs: usize,
    pub oracle_negative_form: NegativeForm,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input_dim: None,
            enc_hidden: vec![256, 256],
            embedding_dim: 64,
            slope: DEFAULT_SLOPE,
            identity_encoder: false,
            dist_depth: 3,
            dist_width: 256,
            dist_dropout: 0.1,
            head_bias: true,
            aux_kind: AuxKind::Standard,
            label_smoothing: 0.1,
            am_scale: 30.0,
            am_margin: 0.35,
            aux_weight: 1.0,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-3,
            patience: 10,
            lr_factor: 0.1,
            grad_clip: None,
            max_iterations: 1000,
            batch_classes: 24,
            batch_examples: 5,
            seed: 0,
            eval_every: 100,
            val_trials: 2000,
            val_fraction: 0.1,
            freeze_encoder: false,
            audit_pairs: 10_000,
            audit_triplets: 10_000,
            audit_bins: 50,
            oracle_dims: 2,
            oracle_means: vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            oracle_variance: 1.0,
            oracle_priors: None,
            oracle_n_per_class: 500,
            oracle_n_mc: 100_000,
            oracle_pairs: 10_000,
            oracle_negative_form: NegativeForm::ConditionalDifferentClass,
        }
    }
}

fn parse_bool(v: &str, ctx: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{ctx}: expected true/false, got {v:?}"))),
    }
}

fn parse_usize(v: &str, ctx: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Config(format!("{ctx}: expected integer, got {v:?}")))
}

fn parse_u64(v: &str, ctx: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{ctx}: expected integer, got {v:?}")))
}

fn parse_f64(v: &str, ctx: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{ctx}: expected number, got {v:?}")))
}

fn parse_usize_list(v: &str, ctx: &str) -> Result<Vec<usize>> {
    if v.is_empty() || v == "none" {
        return Ok(vec![]);
    }
    v.split(',').map(|s| parse_usize(s.trim(), ctx)).collect()
}

fn parse_f64_list(v: &str, ctx: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(s.trim(), ctx)).collect()
}

/// Semicolon-separated vectors of comma-separated numbers:
/// `1,0;-1,0`.
fn parse_means(v: &str, ctx: &str) -> Result<Vec<Vec<f64>>> {
    v.split(';').map(|m| parse_f64_list(m.trim(), ctx)).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {line_no}: expected 'key = value', got {raw:?}"
                )));
            };
            let key = key.trim();
            let value = value.trim();
            let ctx = format!("line {line_no} ({key})");
            match key {
                "input_dim" => cfg.input_dim = Some(parse_usize(value, &ctx)?),
                "enc_hidden" => cfg.enc_hidden = parse_usize_list(value, &ctx)?,
                "embedding_dim" => cfg.embedding_dim = parse_usize(value, &ctx)?,
                "slope" => cfg.slope = parse_f64(value, &ctx)?,
                "identity_encoder" => cfg.identity_encoder = parse_bool(value, &ctx)?,
                "dist_depth" => cfg.dist_depth = parse_usize(value, &ctx)?,
                "dist_width" => cfg.dist_width = parse_usize(value, &ctx)?,
                "dist_dropout" => cfg.dist_dropout = parse_f64(value, &ctx)?,
                "head_bias" => cfg.head_bias = parse_bool(value, &ctx)?,
                "aux_kind" => {
                    cfg.aux_kind = match value {
                        "standard" => AuxKind::Standard,
                        "additive_margin" => AuxKind::AdditiveMargin,
                        "none" => AuxKind::None,
                        _ => {
                            return Err(Error::Config(format!(
                                "{ctx}: expected standard|additive_margin|none, got {value:?}"
                            )))
                        }
                    }
                }
                "label_smoothing" => cfg.label_smoothing = parse_f64(value, &ctx)?,
                "am_scale" => cfg.am_scale = parse_f64(value, &ctx)?,
                "am_margin" => cfg.am_margin = parse_f64(value, &ctx)?,
                "aux_weight" => cfg.aux_weight = parse_f64(value, &ctx)?,
                "lr" => cfg.lr = parse_f64(value, &ctx)?,
                "momentum" => cfg.momentum = parse_f64(value, &ctx)?,
                "weight_decay" => cfg.weight_decay = parse_f64(value, &ctx)?,
                "patience" => cfg.patience = parse_usize(value, &ctx)?,
                "lr_factor" => cfg.lr_factor = parse_f64(value, &ctx)?,
                "grad_clip" => {
                    cfg.grad_clip = if value == "none" {
                        None
                    } else {
                        Some(parse_f64(value, &ctx)?)
                    }
                }
                "max_iterations" => cfg.max_iterations = parse_usize(value, &ctx)?,
                "batch_classes" => cfg.batch_classes = parse_usize(value, &ctx)?,
                "batch_examples" => cfg.batch_examples = parse_usize(value, &ctx)?,
                "seed" => cfg.seed = parse_u64(value, &ctx)?,
                "eval_every" => cfg.eval_every = parse_usize(value, &ctx)?,
                "val_trials" => cfg.val_trials = parse_usize(value, &ctx)?,
                "val_fraction" => cfg.val_fraction = parse_f64(value, &ctx)?,
                "freeze_encoder" => cfg.freeze_encoder = parse_bool(value, &ctx)?,
                "audit_pairs" => cfg.audit_pairs = parse_usize(value, &ctx)?,
                "audit_triplets" => cfg.audit_triplets = parse_usize(value, &ctx)?,
                "audit_bins" => cfg.audit_bins = parse_usize(value, &ctx)?,
                "oracle_dims" => cfg.oracle_dims = parse_usize(value, &ctx)?,
                "oracle_means" => cfg.oracle_means = parse_means(value, &ctx)?,
                "oracle_variance" => cfg.oracle_variance = parse_f64(value, &ctx)?,
                "oracle_priors" => cfg.oracle_priors = Some(parse_f64_list(value, &ctx)?),
                "oracle_n_per_class" => cfg.oracle_n_per_class = parse_usize(value, &ctx)?,
                "oracle_n_mc" => cfg.oracle_n_mc = parse_usize(value, &ctx)?,
                "oracle_pairs" => cfg.oracle_pairs = parse_usize(value, &ctx)?,
                "oracle_negative_form" => {
                    cfg.oracle_negative_form = match value {
                        "conditional" => NegativeForm::ConditionalDifferentClass,
                        "marginals" => NegativeForm::ProductOfMarginals,
                        _ => {
                            return Err(Error::Config(format!(
                                "{ctx}: expected conditional|marginals, got {value:?}"
                            )))
                        }
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "line {line_no}: unknown key {key:?}"
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }

    /// Encoder config; `data_dim` fills in a missing `input_dim` and is
    /// cross-checked against an explicit one.
    pub fn encoder_config(&self, data_dim: usize) -> Result<EncoderConfig> {
        if let Some(d) = self.input_dim {
            if d != data_dim {
                return Err(Error::Config(format!(
                    "config input_dim {d} != dataset feature dim {data_dim}"
                )));
            }
        }
        if self.identity_encoder {
            if !self.enc_hidden.is_empty() || self.embedding_dim != data_dim {
                return Err(Error::Config(
                    "identity_encoder requires enc_hidden empty and embedding_dim == input_dim"
                        .into(),
                ));
            }
            return Ok(EncoderConfig::identity(data_dim));
        }
        Ok(EncoderConfig {
            input_dim: data_dim,
            hidden_dims: self.enc_hidden.clone(),
            embedding_dim: self.embedding_dim,
            slope: self.slope,
        })
    }

    pub fn distance_config(&self) -> DistanceConfig {
        DistanceConfig {
            embedding_dim: if self.identity_encoder {
                self.input_dim.unwrap_or(self.embedding_dim)
            } else {
                self.embedding_dim
            },
            depth: self.dist_depth,
            width: self.dist_width,
            dropout: self.dist_dropout,
            slope: self.slope,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            aux_kind: self.aux_kind,
            label_smoothing: self.label_smoothing,
            am_scale: self.am_scale,
            am_margin: self.am_margin,
            aux_weight: self.aux_weight,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            patience: self.patience,
            lr_factor: self.lr_factor,
            grad_clip: self.grad_clip,
            max_iterations: self.max_iterations,
            plan: BatchPlan {
                classes_per_batch: self.batch_classes,
                examples_per_class: self.batch_examples,
            },
            loss: self.loss_config(),
            seed: self.seed,
            eval_every: self.eval_every,
            val_trials: self.val_trials,
            head_bias: self.head_bias,
            freeze_encoder: self.freeze_encoder,
        }
    }

    pub fn gaussian_spec(&self) -> Result<GaussianSpec> {
        let priors = self.oracle_priors.clone().unwrap_or_else(|| {
            let l = self.oracle_means.len();
            vec![1.0 / l as f64; l]
        });
        let spec = GaussianSpec {
            dims: self.oracle_dims,
            means: self.oracle_means.clone(),
            variance: self.oracle_variance,
            priors,
        };
        spec.validate()?;
        Ok(spec)
    }
}
