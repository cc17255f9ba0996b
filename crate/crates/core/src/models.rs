//! The three networks: encoder `E: R^D → R^d`, distance model
//! `D: R^d × R^d → (0,1)`, and the linear classifier head behind the
//! auxiliary loss.
//!
//! The distance model consumes rowwise-concatenated embedding pairs; the
//! first argument is always the enrollment side. Its output layer is
//! zero-initialized, so a fresh bundle scores every pair at exactly 0.5.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcheck::ParamAccess;
use crate::mat::Matrix;
use crate::nn::{
    affine_backward, affine_forward, dropout, dropout_backward, he_uniform, leaky_relu,
    leaky_relu_backward, DropoutMask, Param,
};
use crate::rng::{streams, Rng};

pub const DEFAULT_SLOPE: f64 = 0.01;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub slope: f64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embedding_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config("encoder dims must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.slope) || self.slope == 0.0 {
            return Err(Error::Config(format!("slope {} outside (0,1)", self.slope)));
        }
        let identity_shaped = self.hidden_dims.is_empty() && self.input_dim == self.embedding_dim;
        if self.input_dim <= self.embedding_dim && !identity_shaped {
            log::warn!(
                "encoder input_dim {} is not larger than embedding_dim {}",
                self.input_dim,
                self.embedding_dim
            );
        }
        Ok(())
    }

    /// Passthrough configuration: single square affine layer, set to the
    /// identity by [`ModelBundle::set_identity_encoder`].
    pub fn identity(dim: usize) -> Self {
        EncoderConfig {
            input_dim: dim,
            hidden_dims: vec![],
            embedding_dim: dim,
            slope: DEFAULT_SLOPE,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DistanceConfig {
    pub embedding_dim: usize,
    /// Number of hidden layers.
    pub depth: usize,
    /// Units per hidden layer.
    pub width: usize,
    pub dropout: f64,
    pub slope: f64,
}

impl DistanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("distance model needs depth,width,dim >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if !(0.0..1.0).contains(&self.slope) || self.slope == 0.0 {
            return Err(Error::Config(format!("slope {} outside (0,1)", self.slope)));
        }
        Ok(())
    }
}

/// Forward-pass context. Train mode carries the rng that samples the
/// distance model's dropout mask.
pub enum Mode<'a> {
    Eval,
    Train { dropout: &'a mut Rng },
}

#[derive(Clone, Debug)]
pub(crate) struct Dense {
    pub w: Param,
    pub b: Param,
}

impl Dense {
    fn he(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        Dense {
            w: Param::new(he_uniform(fan_in, fan_out, rng)),
            b: Param::new(Matrix::zeros(1, fan_out)),
        }
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            w: Param::new(Matrix::zeros(fan_in, fan_out)),
            b: Param::new(Matrix::zeros(1, fan_out)),
        }
    }
}

/// MLP encoder: affine → LeakyReLU per hidden layer, final affine with no
/// output nonlinearity.
#[derive(Clone, Debug)]
pub struct EncoderNet {
    pub(crate) layers: Vec<Dense>,
    slope: f64,
}

pub(crate) struct EncoderCache {
    /// Input to each affine layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of each hidden layer (len = layers − 1).
    preacts: Vec<Matrix>,
}

impl EncoderNet {
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.0)
    }

    pub(crate) fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, EncoderCache)> {
        let mut cache = EncoderCache {
            inputs: Vec::with_capacity(self.layers.len()),
            preacts: Vec::with_capacity(self.layers.len().saturating_sub(1)),
        };
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            cache.inputs.push(h.clone());
            let z = affine_forward(&h, &layer.w, &layer.b)?;
            if l < last {
                cache.preacts.push(z.clone());
                h = leaky_relu(&z, self.slope);
            } else {
                h = z;
            }
        }
        Ok((h, cache))
    }

    /// Accumulates parameter gradients and returns dL/dx.
    pub(crate) fn backward(&mut self, cache: &EncoderCache, d_out: &Matrix) -> Result<Matrix> {
        let last = self.layers.len() - 1;
        let mut d = d_out.clone();
        for l in (0..self.layers.len()).rev() {
            if l < last {
                d = leaky_relu_backward(&cache.preacts[l], &d, self.slope);
            }
            let layer = &mut self.layers[l];
            d = affine_backward(&cache.inputs[l], &mut layer.w, &mut layer.b, &d)?;
        }
        Ok(d)
    }
}

/// Distance model: hidden affine+LeakyReLU stack over concatenated pairs,
/// dropout between the last hidden layer and the single-logit output.
#[derive(Clone, Debug)]
pub struct DistanceNet {
    pub(crate) layers: Vec<Dense>,
    slope: f64,
    dropout_p: f64,
}

pub(crate) struct DistanceCache {
    inputs: Vec<Matrix>,
    preacts: Vec<Matrix>,
    mask: Option<DropoutMask>,
}

impl DistanceNet {
    pub(crate) fn forward_cached(
        &self,
        pairs: &Matrix,
        mode: &mut Mode<'_>,
    ) -> Result<(Matrix, DistanceCache)> {
        let last = self.layers.len() - 1;
        let mut cache = DistanceCache {
            inputs: Vec::with_capacity(self.layers.len()),
            preacts: Vec::with_capacity(last),
            mask: None,
        };
        let mut h = pairs.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            if l == last {
                let (dropped, mask) = match mode {
                    Mode::Eval => dropout(&h, self.dropout_p, false, &mut Rng::new(0))?,
                    Mode::Train { dropout: rng } => dropout(&h, self.dropout_p, true, rng)?,
                };
                cache.mask = mask;
                h = dropped;
            }
            cache.inputs.push(h.clone());
            let z = affine_forward(&h, &layer.w, &layer.b)?;
            if l < last {
                cache.preacts.push(z.clone());
                h = leaky_relu(&z, self.slope);
            } else {
                h = z;
            }
        }
        Ok((h, cache))
    }

    pub(crate) fn backward(&mut self, cache: &DistanceCache, d_logits: &Matrix) -> Result<Matrix> {
        let last = self.layers.len() - 1;
        let mut d = d_logits.clone();
        for l in (0..self.layers.len()).rev() {
            if l < last {
                d = leaky_relu_backward(&cache.preacts[l], &d, self.slope);
            }
            let layer = &mut self.layers[l];
            d = affine_backward(&cache.inputs[l], &mut layer.w, &mut layer.b, &d)?;
            if l == last {
                if let Some(mask) = &cache.mask {
                    d = dropout_backward(&d, mask);
                }
            }
        }
        Ok(d)
    }
}

/// Linear head projecting embeddings onto `num_classes` logits.
#[derive(Clone, Debug)]
pub struct HeadNet {
    pub w: Param,
    pub b: Option<Param>,
}

/// Head weight initialization. `Zeros` keeps the uniform-predictive
/// identity (cross-entropy = ln L on a fresh bundle); the additive-margin
/// loss normalizes the head columns and cannot start from zero vectors,
/// so it uses `HeUniform`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadInit {
    Zeros,
    HeUniform,
}

/// The persisted model unit: all three networks plus their architecture.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub encoder: EncoderNet,
    pub distance: DistanceNet,
    pub head: HeadNet,
    pub enc_cfg: EncoderConfig,
    pub dist_cfg: DistanceConfig,
    pub num_classes: usize,
    pub train_step: u64,
}

/// Builds a fresh bundle. Hidden weights are He-uniform (fan-in) draws;
/// the distance model's output layer is exactly zero, so every initial
/// pair score is 0.5.
pub fn init_models(
    enc_cfg: &EncoderConfig,
    dist_cfg: &DistanceConfig,
    num_classes: usize,
    head_bias: bool,
    head_init: HeadInit,
    seed: u64,
) -> Result<ModelBundle> {
    enc_cfg.validate()?;
    dist_cfg.validate()?;
    if num_classes == 0 {
        return Err(Error::Config("num_classes must be >= 1".into()));
    }
    if dist_cfg.embedding_dim != enc_cfg.embedding_dim {
        return Err(Error::dimension(
            "init_models embedding dim",
            enc_cfg.embedding_dim,
            dist_cfg.embedding_dim,
        ));
    }
    let mut rng = Rng::new(seed).substream(streams::INIT);

    let mut dims = vec![enc_cfg.input_dim];
    dims.extend_from_slice(&enc_cfg.hidden_dims);
    dims.push(enc_cfg.embedding_dim);
    let enc_layers: Vec<Dense> = dims
        .windows(2)
        .map(|w| Dense::he(w[0], w[1], &mut rng))
        .collect();

    let d = dist_cfg.embedding_dim;
    let mut dist_layers = Vec::with_capacity(dist_cfg.depth + 1);
    let mut fan_in = 2 * d;
    for _ in 0..dist_cfg.depth {
        dist_layers.push(Dense::he(fan_in, dist_cfg.width, &mut rng));
        fan_in = dist_cfg.width;
    }
    dist_layers.push(Dense::zeros(fan_in, 1));

    let head_w = match head_init {
        HeadInit::Zeros => Matrix::zeros(d, num_classes),
        HeadInit::HeUniform => he_uniform(d, num_classes, &mut rng),
    };
    let head = HeadNet {
        w: Param::new(head_w),
        b: head_bias.then(|| Param::new(Matrix::zeros(1, num_classes))),
    };

    Ok(ModelBundle {
        encoder: EncoderNet {
            layers: enc_layers,
            slope: enc_cfg.slope,
        },
        distance: DistanceNet {
            layers: dist_layers,
            slope: dist_cfg.slope,
            dropout_p: dist_cfg.dropout,
        },
        head,
        enc_cfg: enc_cfg.clone(),
        dist_cfg: dist_cfg.clone(),
        num_classes,
        train_step: 0,
    })
}

/// `z = E(x)`. The encoder has no stochastic parts, so there is no
/// train/eval distinction.
pub fn encode(bundle: &ModelBundle, x: &Matrix) -> Result<Matrix> {
    if x.cols() != bundle.enc_cfg.input_dim {
        return Err(Error::dimension(
            "encode",
            format!("input cols {}", x.cols()),
            format!("encoder input_dim {}", bundle.enc_cfg.input_dim),
        ));
    }
    let z = bundle.encoder.forward(x)?;
    if !z.all_finite() {
        return Err(Error::Numeric("encode produced non-finite embedding".into()));
    }
    Ok(z)
}

/// Scores embedding pairs in eval mode (deterministic, dropout off).
/// `z_a` is the enrollment side. Returns (probs, logits), both m×1.
pub fn distance_score(bundle: &ModelBundle, z_a: &Matrix, z_b: &Matrix) -> Result<(Matrix, Matrix)> {
    let d = bundle.dist_cfg.embedding_dim;
    if z_a.shape() != z_b.shape() || z_a.cols() != d {
        return Err(Error::dimension(
            "distance_score",
            format!("{}x{} / {}x{}", z_a.rows(), z_a.cols(), z_b.rows(), z_b.cols()),
            format!("expected matching mx{d}"),
        ));
    }
    let pairs = Matrix::hconcat(z_a, z_b)?;
    let (logits, _) = bundle.distance.forward_cached(&pairs, &mut Mode::Eval)?;
    if !logits.all_finite() {
        return Err(Error::Numeric("distance model produced non-finite logit".into()));
    }
    let probs = logits.map(sigmoid);
    Ok((probs, logits))
}

/// Head logits `z·W (+ b)`; the simplex projection is completed by the
/// softmax inside the loss.
pub fn classify_logits(bundle: &ModelBundle, z: &Matrix) -> Result<Matrix> {
    if z.cols() != bundle.enc_cfg.embedding_dim {
        return Err(Error::dimension(
            "classify_logits",
            z.cols(),
            bundle.enc_cfg.embedding_dim,
        ));
    }
    let mut logits = z.matmul(&bundle.head.w.value)?;
    if let Some(b) = &bundle.head.b {
        logits.add_row_broadcast(b.value.row(0))?;
    }
    Ok(logits)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Anything that scores ordered embedding pairs with a similarity in
/// (0,1); the pseudo-distance is 1 minus this value. Row `i` of `a` is
/// paired with row `i` of `b`, `a` on the enrollment slot.
///
/// Audits and retrieval accept any implementation, which lets tests plug
/// in hand-made scorers without a trained model.
pub trait PairScorer {
    fn score_pairs(&self, a: &Matrix, b: &Matrix) -> Result<Vec<f64>>;
}

impl PairScorer for ModelBundle {
    fn score_pairs(&self, a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
        let (probs, _) = distance_score(self, a, b)?;
        Ok(probs.data().to_vec())
    }
}

impl ModelBundle {
    pub fn head_bias(&self) -> bool {
        self.head.b.is_some()
    }

    /// Replaces the encoder with an exact passthrough. Requires the
    /// identity configuration (no hidden layers, square final affine).
    pub fn set_identity_encoder(&mut self) -> Result<()> {
        if self.encoder.layers.len() != 1 || self.enc_cfg.input_dim != self.enc_cfg.embedding_dim {
            return Err(Error::Config(
                "identity encoder needs zero hidden layers and input_dim == embedding_dim".into(),
            ));
        }
        let d = self.enc_cfg.input_dim;
        self.encoder.layers[0].w = Param::new(Matrix::identity(d));
        self.encoder.layers[0].b = Param::new(Matrix::zeros(1, d));
        Ok(())
    }

    pub fn encoder_is_identity(&self) -> bool {
        self.encoder.layers.len() == 1
            && self.enc_cfg.input_dim == self.enc_cfg.embedding_dim
            && self.encoder.layers[0].w.value == Matrix::identity(self.enc_cfg.input_dim)
            && self.encoder.layers[0].b.value.data().iter().all(|&v| v == 0.0)
    }

    fn layout(&self) -> Vec<(Section, usize, Slot)> {
        let mut slots = Vec::new();
        for l in 0..self.encoder.layers.len() {
            slots.push((Section::Encoder, l, Slot::Weight));
            slots.push((Section::Encoder, l, Slot::Bias));
        }
        for l in 0..self.distance.layers.len() {
            slots.push((Section::Distance, l, Slot::Weight));
            slots.push((Section::Distance, l, Slot::Bias));
        }
        slots.push((Section::Head, 0, Slot::Weight));
        if self.head.b.is_some() {
            slots.push((Section::Head, 0, Slot::Bias));
        }
        slots
    }

    pub fn tensor_is_bias(&self, t: usize) -> bool {
        matches!(self.layout()[t].2, Slot::Bias)
    }

    pub fn tensor_is_encoder(&self, t: usize) -> bool {
        matches!(self.layout()[t].0, Section::Encoder)
    }
}

#[derive(Clone, Copy, Debug)]
enum Section {
    Encoder,
    Distance,
    Head,
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Weight,
    Bias,
}

impl ParamAccess for ModelBundle {
    fn num_tensors(&self) -> usize {
        self.layout().len()
    }

    fn tensor_name(&self, t: usize) -> String {
        let (section, layer, slot) = self.layout()[t];
        let slot = match slot {
            Slot::Weight => "w",
            Slot::Bias => "b",
        };
        match section {
            Section::Encoder => format!("encoder.{layer}.{slot}"),
            Section::Distance => format!("distance.{layer}.{slot}"),
            Section::Head => format!("head.{slot}"),
        }
    }

    fn tensor(&self, t: usize) -> &Param {
        let (section, layer, slot) = self.layout()[t];
        match (section, slot) {
            (Section::Encoder, Slot::Weight) => &self.encoder.layers[layer].w,
            (Section::Encoder, Slot::Bias) => &self.encoder.layers[layer].b,
            (Section::Distance, Slot::Weight) => &self.distance.layers[layer].w,
            (Section::Distance, Slot::Bias) => &self.distance.layers[layer].b,
            (Section::Head, Slot::Weight) => &self.head.w,
            (Section::Head, Slot::Bias) => self.head.b.as_ref().expect("head bias present"),
        }
    }

    fn tensor_mut(&mut self, t: usize) -> &mut Param {
        let (section, layer, slot) = self.layout()[t];
        match (section, slot) {
            (Section::Encoder, Slot::Weight) => &mut self.encoder.layers[layer].w,
            (Section::Encoder, Slot::Bias) => &mut self.encoder.layers[layer].b,
            (Section::Distance, Slot::Weight) => &mut self.distance.layers[layer].w,
            (Section::Distance, Slot::Bias) => &mut self.distance.layers[layer].b,
            (Section::Head, Slot::Weight) => &mut self.head.w,
            (Section::Head, Slot::Bias) => self.head.b.as_mut().expect("head bias present"),
        }
    }
}
