//! Training objectives: the pair discrimination loss, the auxiliary
//! classification losses, and their sum.
//!
//! The pair loss is computed in log-sigmoid form on logits throughout;
//! probabilities are never clamped into a log.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::models::{sigmoid, Mode, ModelBundle};
use crate::pairing::PairIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxKind {
    Standard,
    AdditiveMargin,
    None,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossConfig {
    pub aux_kind: AuxKind,
    pub label_smoothing: f64,
    pub am_scale: f64,
    pub am_margin: f64,
    /// 1 = plain unweighted sum of the two losses, 0 = ablation.
    pub aux_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            aux_kind: AuxKind::Standard,
            label_smoothing: 0.1,
            am_scale: 30.0,
            am_margin: 0.35,
            aux_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!(
                "label_smoothing {} outside [0,1)",
                self.label_smoothing
            )));
        }
        if self.am_scale <= 0.0 {
            return Err(Error::Config(format!("am_scale {} must be > 0", self.am_scale)));
        }
        if self.am_margin < 0.0 {
            return Err(Error::Config(format!("am_margin {} must be >= 0", self.am_margin)));
        }
        if self.aux_weight < 0.0 {
            return Err(Error::Config(format!("aux_weight {} must be >= 0", self.aux_weight)));
        }
        Ok(())
    }

    fn effective_aux_weight(&self) -> f64 {
        match self.aux_kind {
            AuxKind::None => 0.0,
            _ => self.aux_weight,
        }
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Pair discrimination loss on logits:
/// mean over positives of −log σ(l) plus mean over negatives of
/// −log(1 − σ(l)). Returns (loss, d_pos, d_neg). An empty side
/// contributes 0 (with a warning); both sides empty is an error.
pub fn pair_bce_loss(pos_logits: &Matrix, neg_logits: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    let p = pos_logits.rows();
    let n = neg_logits.rows();
    if p == 0 && n == 0 {
        return Err(Error::Batch("pair loss needs at least one pair".into()));
    }
    if p == 0 {
        log::warn!("pair loss: no positive pairs, positive term contributes 0");
    }
    if n == 0 {
        log::warn!("pair loss: no negative pairs, negative term contributes 0");
    }

    let mut loss = 0.0;
    let mut d_pos = Matrix::zeros(p, 1);
    for i in 0..p {
        let l = pos_logits.get(i, 0);
        loss += softplus(-l) / p as f64;
        d_pos.set(i, 0, -(1.0 - sigmoid(l)) / p as f64);
    }
    let mut d_neg = Matrix::zeros(n, 1);
    for i in 0..n {
        let l = neg_logits.get(i, 0);
        loss += softplus(l) / n as f64;
        d_neg.set(i, 0, sigmoid(l) / n as f64);
    }
    Ok((loss, d_pos, d_neg))
}

/// Label-smoothed cross-entropy over logits. The target distribution is
/// `(1−ε)·onehot + ε/L·uniform`; the log-softmax goes through log-sum-exp.
/// Returns (loss, dL/dlogits).
pub fn smoothed_cross_entropy(
    logits: &Matrix,
    labels: &[usize],
    eps: f64,
) -> Result<(f64, Matrix)> {
    let (n, l) = logits.shape();
    if labels.len() != n {
        return Err(Error::Data(format!(
            "label count {} != logit rows {n}",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::Data("cross-entropy on empty batch".into()));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Config(format!("label smoothing {eps} outside [0,1)")));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= l) {
        return Err(Error::Data(format!("label {bad} out of range [0,{l})")));
    }

    let uniform = eps / l as f64;
    let mut loss = 0.0;
    let mut dlogits = Matrix::zeros(n, l);
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum_exp.ln();

        let mut dot = 0.0;
        for (c, &v) in row.iter().enumerate() {
            let q = uniform + if c == labels[i] { 1.0 - eps } else { 0.0 };
            dot += q * v;
            let softmax = (v - max).exp() / sum_exp;
            dlogits.set(i, c, (softmax - q) / n as f64);
        }
        loss += (lse - dot) / n as f64;
    }
    Ok((loss, dlogits))
}

const NORM_FLOOR: f64 = 1e-12;

/// Normalizes each row of `m` by `max(‖row‖, floor)`. Returns the
/// normalized matrix and the divisors.
fn normalize_rows(m: &Matrix) -> (Matrix, Vec<f64>) {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let norm = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < NORM_FLOOR {
            log::warn!("zero-norm vector in additive-margin normalization (row {i})");
        }
        let r = norm.max(NORM_FLOOR);
        for v in out.row_mut(i) {
            *v /= r;
        }
        norms.push(norm);
    }
    (out, norms)
}

/// Backward through `v̂ = v / max(‖v‖, floor)` for one vector.
fn normalize_backward(v_hat: &[f64], d_hat: &[f64], norm: f64, out: &mut [f64]) {
    if norm > NORM_FLOOR {
        let dot: f64 = v_hat.iter().zip(d_hat).map(|(a, b)| a * b).sum();
        for ((o, &h), &d) in out.iter_mut().zip(v_hat).zip(d_hat) {
            *o = (d - h * dot) / norm;
        }
    } else {
        for (o, &d) in out.iter_mut().zip(d_hat) {
            *o = d / NORM_FLOOR;
        }
    }
}

/// Additive-margin softmax on unit-normalized embeddings and head
/// columns: logits are `s·cosθ_c`, with the true class penalized to
/// `s·(cosθ_y − m)`, followed by label-smoothed cross-entropy. No bias
/// term. Returns (loss, dL/dz, dL/dW).
pub fn am_softmax_loss(
    z: &Matrix,
    head_w: &Matrix,
    labels: &[usize],
    scale: f64,
    margin: f64,
    eps: f64,
) -> Result<(f64, Matrix, Matrix)> {
    let (n, d) = z.shape();
    let (dw_rows, l) = head_w.shape();
    if dw_rows != d {
        return Err(Error::dimension("am_softmax_loss", d, dw_rows));
    }
    if scale <= 0.0 || margin < 0.0 {
        return Err(Error::Config(format!(
            "am_softmax needs scale > 0 (got {scale}) and margin >= 0 (got {margin})"
        )));
    }

    let (z_hat, z_norms) = normalize_rows(z);
    // Normalize head columns by transposing to rows.
    let mut w_t = Matrix::zeros(l, d);
    for c in 0..l {
        for r in 0..d {
            w_t.set(c, r, head_w.get(r, c));
        }
    }
    let (w_hat_t, w_norms) = normalize_rows(&w_t);

    let cos = z_hat.matmul_t(&w_hat_t)?; // n×l
    let mut logits = cos.clone();
    logits.scale(scale);
    for (i, &y) in labels.iter().enumerate() {
        if y < l {
            logits.set(i, y, logits.get(i, y) - scale * margin);
        }
    }
    let (loss, dlogits) = smoothed_cross_entropy(&logits, labels, eps)?;

    // dcos = scale · dlogits (the margin shift is additive in logits).
    let mut dcos = dlogits;
    dcos.scale(scale);

    // cos = ẑ·ŵᵀ: dẑ = dcos·ŵ, dŵ = dcosᵀ·ẑ.
    let d_z_hat = dcos.matmul(&w_hat_t)?; // n×d
    let mut d_w_hat_t = Matrix::zeros(l, d);
    dcos.t_matmul_acc(&z_hat, &mut d_w_hat_t)?; // l×d

    let mut dz = Matrix::zeros(n, d);
    for i in 0..n {
        let mut row = vec![0.0; d];
        normalize_backward(z_hat.row(i), d_z_hat.row(i), z_norms[i], &mut row);
        dz.row_mut(i).copy_from_slice(&row);
    }
    let mut dw = Matrix::zeros(d, l);
    for c in 0..l {
        let mut col = vec![0.0; d];
        normalize_backward(w_hat_t.row(c), d_w_hat_t.row(c), w_norms[c], &mut col);
        for r in 0..d {
            dw.set(r, c, col[r]);
        }
    }
    Ok((loss, dz, dw))
}

/// Loss components of one batch.
#[derive(Clone, Copy, Debug)]
pub struct CombinedLoss {
    pub total: f64,
    pub pair: f64,
    pub aux: f64,
}

/// The full objective `L′ = L_pair + aux_weight·L_aux` over one batch,
/// with one backward pass accumulating gradients into the encoder, the
/// distance model and the head simultaneously (when `with_grad`).
pub fn combined_loss(
    bundle: &mut ModelBundle,
    x: &Matrix,
    labels: &[usize],
    pairs: &PairIndex,
    cfg: &LossConfig,
    mode: &mut Mode<'_>,
    with_grad: bool,
) -> Result<CombinedLoss> {
    cfg.validate()?;
    if x.rows() != labels.len() {
        return Err(Error::Data(format!(
            "batch rows {} != label count {}",
            x.rows(),
            labels.len()
        )));
    }

    let (z, enc_cache) = bundle.encoder.forward_cached(x)?;
    if !z.all_finite() {
        return Err(Error::Numeric("non-finite embedding in combined_loss".into()));
    }
    let d = z.cols();

    let firsts: Vec<usize> = pairs
        .positives
        .iter()
        .chain(&pairs.negatives)
        .map(|&(i, _)| i)
        .collect();
    let seconds: Vec<usize> = pairs
        .positives
        .iter()
        .chain(&pairs.negatives)
        .map(|&(_, j)| j)
        .collect();
    let pair_input = Matrix::hconcat(&z.gather_rows(&firsts), &z.gather_rows(&seconds))?;

    let (logits, dist_cache) = bundle.distance.forward_cached(&pair_input, mode)?;
    let n_pos = pairs.positives.len();
    let pos_logits = logits.gather_rows(&(0..n_pos).collect::<Vec<_>>());
    let neg_logits = logits.gather_rows(&(n_pos..logits.rows()).collect::<Vec<_>>());
    let (pair_loss, d_pos, d_neg) = pair_bce_loss(&pos_logits, &neg_logits)?;

    let aux_weight = cfg.effective_aux_weight();
    let mut aux_loss = 0.0;
    let mut d_z_aux: Option<Matrix> = None;
    let mut d_w_aux: Option<Matrix> = None;
    let mut d_head_logits: Option<Matrix> = None;
    if aux_weight > 0.0 {
        match cfg.aux_kind {
            AuxKind::Standard => {
                let head_logits = {
                    let mut hl = z.matmul(&bundle.head.w.value)?;
                    if let Some(b) = &bundle.head.b {
                        hl.add_row_broadcast(b.value.row(0))?;
                    }
                    hl
                };
                let (l_aux, dl) = smoothed_cross_entropy(&head_logits, labels, cfg.label_smoothing)?;
                aux_loss = l_aux;
                d_head_logits = Some(dl);
            }
            AuxKind::AdditiveMargin => {
                let (l_aux, dz, dw) = am_softmax_loss(
                    &z,
                    &bundle.head.w.value,
                    labels,
                    cfg.am_scale,
                    cfg.am_margin,
                    cfg.label_smoothing,
                )?;
                aux_loss = l_aux;
                d_z_aux = Some(dz);
                d_w_aux = Some(dw);
            }
            AuxKind::None => unreachable!("effective_aux_weight is 0 for AuxKind::None"),
        }
    }

    let total = pair_loss + aux_weight * aux_loss;
    if !total.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {total}")));
    }

    if with_grad {
        let d_logits = Matrix::vconcat(&d_pos, &d_neg)?;
        let d_pairs = bundle.distance.backward(&dist_cache, &d_logits)?;
        let (d_first, d_second) = d_pairs.split_cols(d);
        let mut d_z = Matrix::zeros(z.rows(), d);
        d_z.scatter_add_rows(&firsts, &d_first);
        d_z.scatter_add_rows(&seconds, &d_second);

        if aux_weight > 0.0 {
            match cfg.aux_kind {
                AuxKind::Standard => {
                    let mut dl = d_head_logits.expect("standard aux gradient");
                    dl.scale(aux_weight);
                    z.t_matmul_acc(&dl, &mut bundle.head.w.grad)?;
                    if let Some(b) = &mut bundle.head.b {
                        for (g, s) in b.grad.data_mut().iter_mut().zip(dl.col_sums()) {
                            *g += s;
                        }
                    }
                    d_z.add_assign(&dl.matmul_t(&bundle.head.w.value)?);
                }
                AuxKind::AdditiveMargin => {
                    let mut dz = d_z_aux.expect("am aux gradient");
                    dz.scale(aux_weight);
                    d_z.add_assign(&dz);
                    let mut dw = d_w_aux.expect("am head gradient");
                    dw.scale(aux_weight);
                    bundle.head.w.grad.add_assign(&dw);
                }
                AuxKind::None => unreachable!(),
            }
        }

        bundle.encoder.backward(&enc_cache, &d_z)?;
    }

    Ok(CombinedLoss {
        total,
        pair: pair_loss,
        aux: aux_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, ParamAccess};
    use crate::models::{init_models, DistanceConfig, EncoderConfig, HeadInit};
    use crate::pairing::enumerate_pairs;
    use crate::rng::Rng;

    const LOG4: f64 = 1.3862943611198906;

    fn logits_of(values: &[f64]) -> Matrix {
        Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn zero_logits_give_log4() {
        let (loss, _, _) = pair_bce_loss(&logits_of(&[0.0, 0.0]), &logits_of(&[0.0, 0.0, 0.0])).unwrap();
        assert!((loss - LOG4).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn hand_evaluated_pair_loss() {
        // pos prob 0.9, neg prob 0.1 -> L = -ln 0.9 - ln 0.9
        let pos = logits_of(&[(0.9f64 / 0.1).ln()]);
        let neg = logits_of(&[(0.1f64 / 0.9).ln()]);
        let (loss, _, _) = pair_bce_loss(&pos, &neg).unwrap();
        let expected = -2.0 * 0.9f64.ln();
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
        assert!((loss - 0.21072).abs() < 1e-5);
    }

    #[test]
    fn perfect_separation_drives_loss_to_zero() {
        let (loss, _, _) = pair_bce_loss(&logits_of(&[60.0]), &logits_of(&[-60.0])).unwrap();
        assert!(loss >= 0.0);
        assert!(loss < 1e-20, "{loss}");
    }

    #[test]
    fn one_empty_side_contributes_zero() {
        let (loss, _, d_neg) = pair_bce_loss(&logits_of(&[0.0]), &Matrix::zeros(0, 1)).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert_eq!(d_neg.rows(), 0);
    }

    #[test]
    fn both_empty_is_batch_error() {
        let err = pair_bce_loss(&Matrix::zeros(0, 1), &Matrix::zeros(0, 1)).unwrap_err();
        assert!(matches!(err, Error::Batch(_)));
    }

    #[test]
    fn log4_iff_all_half() {
        let (loss, _, _) = pair_bce_loss(&logits_of(&[0.0, 0.1]), &logits_of(&[0.0])).unwrap();
        assert!(loss != LOG4);
        let (loss, _, _) = pair_bce_loss(&logits_of(&[0.0, 0.0]), &logits_of(&[0.0])).unwrap();
        assert!((loss - LOG4).abs() < 1e-15);
    }

    #[test]
    fn uniform_logits_cost_ln_l() {
        for l in [2usize, 5, 10] {
            let logits = Matrix::zeros(3, l);
            let (loss, _) = smoothed_cross_entropy(&logits, &[0, 1 % l, 0], 0.0).unwrap();
            assert!((loss - (l as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_zero_reduces_to_standard_ce() {
        let logits = Matrix::from_rows(&[vec![0.3, -1.2, 2.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let labels = [2usize, 0];
        let (loss, _) = smoothed_cross_entropy(&logits, &labels, 0.0).unwrap();
        // independent: -mean log softmax[y]
        let mut expected = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = logits.row(i);
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            expected += -(row[y].exp() / denom).ln() / labels.len() as f64;
        }
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn smoothed_ce_matches_direct_summation() {
        // eps=0.1, L=2, logits [ln 2, 0], label 0.
        let logits = Matrix::from_rows(&[vec![2f64.ln(), 0.0]]).unwrap();
        let (loss, _) = smoothed_cross_entropy(&logits, &[0], 0.1).unwrap();
        // direct summation oracle: q = [0.95, 0.05], p = [2/3, 1/3]
        let expected = -(0.95 * (2.0f64 / 3.0).ln() + 0.05 * (1.0f64 / 3.0).ln());
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
    }

    #[test]
    fn label_out_of_range_rejected() {
        let logits = Matrix::zeros(1, 3);
        assert!(matches!(
            smoothed_cross_entropy(&logits, &[3], 0.0),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn am_with_no_margin_is_ce_on_cosines() {
        let mut rng = Rng::new(4);
        let z = Matrix::from_vec(5, 3, (0..15).map(|_| rng.normal()).collect()).unwrap();
        let w = Matrix::from_vec(3, 4, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let labels = [0usize, 1, 2, 3, 0];
        let (am, _, _) = am_softmax_loss(&z, &w, &labels, 1.0, 0.0, 0.05).unwrap();

        let (z_hat, _) = normalize_rows(&z);
        let mut w_t = Matrix::zeros(4, 3);
        for c in 0..4 {
            for r in 0..3 {
                w_t.set(c, r, w.get(r, c));
            }
        }
        let (w_hat_t, _) = normalize_rows(&w_t);
        let cos = z_hat.matmul_t(&w_hat_t).unwrap();
        let (ce, _) = smoothed_cross_entropy(&cos, &labels, 0.05).unwrap();
        assert!((am - ce).abs() < 1e-12);
    }

    #[test]
    fn margin_penalizes_true_class() {
        // all cosines equal -> with any margin the loss exceeds ln L.
        let z = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let w = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap(); // both columns = e1
        let (loss, _, _) = am_softmax_loss(&z, &w, &[0], 10.0, 0.2, 0.0).unwrap();
        assert!(loss > 2f64.ln(), "{loss}");
    }

    #[test]
    fn hand_evaluated_am_case() {
        // unit vectors at 0 and 90 degrees, s=30, m=0.35, label 0:
        // cosines [1, 0], logits [30*(1-0.35), 0] -> loss = softplus(-19.5).
        let z = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (loss, _, _) = am_softmax_loss(&z, &w, &[0], 30.0, 0.35, 0.0).unwrap();
        let expected = (-19.5f64).exp().ln_1p();
        assert!((loss - expected).abs() < 1e-14, "{loss} vs {expected}");
    }

    #[test]
    fn zero_norm_embedding_is_guarded() {
        let z = Matrix::zeros(1, 2);
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let (loss, _, _) = am_softmax_loss(&z, &w, &[0], 30.0, 0.35, 0.0).unwrap();
        assert!(loss.is_finite());
    }

    fn toy_bundle(aux: AuxKind, dropout: f64, seed: u64) -> ModelBundle {
        let enc = EncoderConfig {
            input_dim: 3,
            hidden_dims: vec![5],
            embedding_dim: 4,
            slope: 0.01,
        };
        let dist = DistanceConfig {
            embedding_dim: 4,
            depth: 2,
            width: 6,
            dropout,
            slope: 0.01,
        };
        let head_init = if aux == AuxKind::AdditiveMargin {
            HeadInit::HeUniform
        } else {
            HeadInit::Zeros
        };
        init_models(&enc, &dist, 2, true, head_init, seed).unwrap()
    }

    fn toy_batch(seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = Rng::new(seed);
        let x = Matrix::from_vec(6, 3, (0..18).map(|_| rng.normal()).collect()).unwrap();
        (x, vec![0, 0, 0, 1, 1, 1])
    }

    #[test]
    fn ablation_mode_equals_pair_loss() {
        let mut bundle = toy_bundle(AuxKind::Standard, 0.0, 1);
        let (x, labels) = toy_batch(2);
        let pairs = enumerate_pairs(&labels).unwrap();
        let cfg = LossConfig {
            aux_weight: 0.0,
            ..LossConfig::default()
        };
        let out = combined_loss(&mut bundle, &x, &labels, &pairs, &cfg, &mut Mode::Eval, false).unwrap();
        assert_eq!(out.total, out.pair);
    }

    #[test]
    fn fresh_bundle_total_is_log4_plus_lnl() {
        let mut bundle = toy_bundle(AuxKind::Standard, 0.0, 1);
        let (x, labels) = toy_batch(2);
        let pairs = enumerate_pairs(&labels).unwrap();
        let cfg = LossConfig {
            label_smoothing: 0.0,
            ..LossConfig::default()
        };
        let out = combined_loss(&mut bundle, &x, &labels, &pairs, &cfg, &mut Mode::Eval, false).unwrap();
        assert!((out.pair - LOG4).abs() < 1e-9);
        assert!((out.total - (LOG4 + 2f64.ln())).abs() < 1e-9, "{}", out.total);
    }

    fn grad_check_combined(aux: AuxKind, dropout: f64, seed: u64) -> f64 {
        let mut bundle = toy_bundle(aux, dropout, seed);
        // Perturb every tensor (incl. the zero-init output layer and head)
        // so no gradient path is silently dead during the check.
        let mut noise = Rng::new(seed ^ 0xF00D);
        for t in 0..bundle.num_tensors() {
            for v in bundle.tensor_mut(t).value.data_mut() {
                *v += 0.2 * noise.normal();
            }
        }
        let (x, labels) = toy_batch(seed ^ 0xABCD);
        let pairs = enumerate_pairs(&labels).unwrap();
        let cfg = LossConfig {
            aux_kind: aux,
            label_smoothing: 0.1,
            am_scale: 4.0,
            am_margin: 0.2,
            aux_weight: 1.0,
        };
        let report = grad_check(
            &mut bundle,
            |b, with_grad| {
                // Reseeding per evaluation freezes the dropout mask.
                let mut rng = Rng::new(seed ^ 0x5EED);
                let mut mode = if dropout > 0.0 {
                    Mode::Train { dropout: &mut rng }
                } else {
                    Mode::Eval
                };
                combined_loss(b, &x, &labels, &pairs, &cfg, &mut mode, with_grad).map(|c| c.total)
            },
            1e-5,
        )
        .unwrap();
        report.max_rel_err
    }

    #[test]
    fn full_network_grad_check_standard() {
        let err = grad_check_combined(AuxKind::Standard, 0.0, 7);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn full_network_grad_check_additive_margin() {
        let err = grad_check_combined(AuxKind::AdditiveMargin, 0.0, 8);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn full_network_grad_check_through_frozen_dropout() {
        let err = grad_check_combined(AuxKind::Standard, 0.4, 9);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn grads_flow_into_all_sections() {
        let mut bundle = toy_bundle(AuxKind::Standard, 0.0, 3);
        // Zero-init tensors block their own backflow; perturb everything.
        let mut rng = Rng::new(0);
        for t in 0..bundle.num_tensors() {
            for v in bundle.tensor_mut(t).value.data_mut() {
                *v += 0.1 * rng.normal();
            }
        }
        let (x, labels) = toy_batch(4);
        let pairs = enumerate_pairs(&labels).unwrap();
        let cfg = LossConfig::default();
        bundle.zero_grads();
        combined_loss(&mut bundle, &x, &labels, &pairs, &cfg, &mut Mode::Eval, true).unwrap();
        for t in 0..bundle.num_tensors() {
            let g = bundle.tensor(t).grad.frobenius_sq();
            assert!(g > 0.0, "no gradient in {}", bundle.tensor_name(t));
        }
    }
}
