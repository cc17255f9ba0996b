//! Synthetic Gaussian verification tasks with closed-form pair
//! likelihood ratios.
//!
//! The class-conditional densities are isotropic Gaussians, so the joint
//! densities of same-class and different-class pairs — and therefore the
//! likelihood ratio and the optimal discriminator output
//! `d* = lr / (1 + lr)` — are exact. Scoring against them validates that
//! a trained distance model approaches the optimum and gives every
//! synthetic task a known EER floor.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::models::{distance_score, encode, sigmoid, ModelBundle};
use crate::rng::Rng;
use crate::scoring::compute_eer;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub dims: usize,
    pub means: Vec<Vec<f64>>,
    /// Shared isotropic variance σ².
    pub variance: f64,
    pub priors: Vec<f64>,
}

/// Which different-class joint the negative density uses. The
/// conditional form excludes same-class pairs (matching how negative
/// training pairs are sampled); the product-of-marginals form includes
/// them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeForm {
    ConditionalDifferentClass,
    ProductOfMarginals,
}

impl GaussianSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::Config("spec needs dims >= 1".into()));
        }
        if self.means.len() < 2 {
            return Err(Error::Config("spec needs >= 2 class means".into()));
        }
        if self.means.iter().any(|m| m.len() != self.dims) {
            return Err(Error::Config("mean dimensionality mismatch".into()));
        }
        for (i, a) in self.means.iter().enumerate() {
            for b in self.means.iter().skip(i + 1) {
                if a == b {
                    return Err(Error::Config("class means must be distinct".into()));
                }
            }
        }
        if self.variance <= 0.0 {
            return Err(Error::Config(format!("variance {} must be > 0", self.variance)));
        }
        if self.priors.len() != self.means.len() {
            return Err(Error::Config("one prior per class required".into()));
        }
        if self.priors.iter().any(|&p| p <= 0.0) {
            return Err(Error::Config("priors must be positive".into()));
        }
        let sum: f64 = self.priors.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("priors sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Two symmetric classes at ±mu with equal priors.
    pub fn symmetric_two_class(mu: Vec<f64>, variance: f64) -> Self {
        let neg = mu.iter().map(|v| -v).collect();
        GaussianSpec {
            dims: mu.len(),
            means: vec![mu, neg],
            variance,
            priors: vec![0.5, 0.5],
        }
    }

    fn log_density(&self, x: &[f64], class: usize) -> f64 {
        let d = self.dims as f64;
        let mu = &self.means[class];
        let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
        -0.5 * d * (std::f64::consts::TAU * self.variance).ln() - sq / (2.0 * self.variance)
    }

    fn sample(&self, class: usize, rng: &mut Rng) -> Vec<f64> {
        let sigma = self.variance.sqrt();
        self.means[class]
            .iter()
            .map(|&m| m + sigma * rng.normal())
            .collect()
    }

    /// Same-class mixture weights: proportional to squared priors.
    fn target_weights(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self.priors.iter().map(|p| p * p).collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        w
    }

    /// Different-class mixture weights over ordered pairs (c, c'), c ≠ c'.
    fn nontarget_weights(&self) -> Vec<(usize, usize, f64)> {
        let l = self.means.len();
        let mut w = Vec::with_capacity(l * (l - 1));
        let mut sum = 0.0;
        for c in 0..l {
            for c2 in 0..l {
                if c != c2 {
                    let v = self.priors[c] * self.priors[c2];
                    w.push((c, c2, v));
                    sum += v;
                }
            }
        }
        for (_, _, v) in &mut w {
            *v /= sum;
        }
        w
    }
}

/// Order-canonical log-sum-exp: terms are sorted before accumulation so
/// any permutation of the inputs produces the bit-identical result
/// (exchange symmetry of the pair joints is tested exactly).
fn log_sum_exp(terms: &mut [f64]) -> f64 {
    terms.sort_by(|a, b| a.partial_cmp(b).expect("finite or -inf log terms"));
    let max = terms.last().copied().unwrap_or(f64::NEG_INFINITY);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|&t| (t - max).exp()).sum::<f64>().ln()
}

/// Draws i.i.d. examples per class with labels attached.
pub fn synth_generate(
    spec: &GaussianSpec,
    n_per_class: usize,
    rng: &mut Rng,
) -> Result<LabeledDataset> {
    spec.validate()?;
    if n_per_class == 0 {
        return Err(Error::Config("n_per_class must be >= 1".into()));
    }
    let n = n_per_class * spec.means.len();
    let mut features = Matrix::zeros(n, spec.dims);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for class in 0..spec.means.len() {
        for _ in 0..n_per_class {
            features.row_mut(row).copy_from_slice(&spec.sample(class, rng));
            labels.push(class);
            row += 1;
        }
    }
    LabeledDataset::new(features, labels, "synth")
}

/// The likelihood ratio and optimal discriminator output for one pair.
#[derive(Clone, Copy, Debug)]
pub struct PairPosterior {
    pub log_lr: f64,
    pub lr: f64,
    /// `lr / (1 + lr)` = the optimum of the pair discrimination loss.
    pub d_star: f64,
}

/// Evaluates the exact pair posterior in the log domain:
/// `p⁺(x_i,x_j) = Σ_c π̃_c N(x_i;μ_c) N(x_j;μ_c)` against the chosen
/// negative joint.
pub fn analytic_pair_posterior(
    spec: &GaussianSpec,
    x_i: &[f64],
    x_j: &[f64],
    form: NegativeForm,
) -> Result<PairPosterior> {
    if x_i.len() != spec.dims || x_j.len() != spec.dims {
        return Err(Error::dimension(
            "analytic_pair_posterior",
            format!("{}/{}", x_i.len(), x_j.len()),
            spec.dims,
        ));
    }
    // Each term sums the two densities first (commutative, so exact
    // under argument exchange) before adding the mixture weight.
    let log_pos = {
        let weights = spec.target_weights();
        let mut terms: Vec<f64> = (0..spec.means.len())
            .map(|c| (spec.log_density(x_i, c) + spec.log_density(x_j, c)) + weights[c].ln())
            .collect();
        log_sum_exp(&mut terms)
    };
    let log_neg = match form {
        NegativeForm::ConditionalDifferentClass => {
            let mut terms: Vec<f64> = spec
                .nontarget_weights()
                .into_iter()
                .map(|(c, c2, w)| (spec.log_density(x_i, c) + spec.log_density(x_j, c2)) + w.ln())
                .collect();
            log_sum_exp(&mut terms)
        }
        NegativeForm::ProductOfMarginals => {
            let marginal = |x: &[f64]| {
                let mut terms: Vec<f64> = (0..spec.means.len())
                    .map(|c| spec.priors[c].ln() + spec.log_density(x, c))
                    .collect();
                log_sum_exp(&mut terms)
            };
            marginal(x_i) + marginal(x_j)
        }
    };
    if log_pos == f64::NEG_INFINITY && log_neg == f64::NEG_INFINITY {
        return Err(Error::Numeric(format!(
            "both joint densities underflow at ({x_i:?}, {x_j:?})"
        )));
    }
    let log_lr = log_pos - log_neg;
    Ok(PairPosterior {
        log_lr,
        lr: log_lr.exp(),
        d_star: sigmoid(log_lr),
    })
}

/// A Monte Carlo pair sample: features for both sides plus target flags.
pub struct PairSample {
    pub first: Matrix,
    pub second: Matrix,
    pub targets: Vec<bool>,
}

/// Draws `n_target` same-class and `n_nontarget` different-class pairs
/// from the spec's joint distributions.
pub fn sample_pairs(
    spec: &GaussianSpec,
    n_target: usize,
    n_nontarget: usize,
    rng: &mut Rng,
) -> Result<PairSample> {
    spec.validate()?;
    let pick_weighted = |weights: &[f64], rng: &mut Rng| -> usize {
        let mut t = rng.next_f64();
        for (i, &w) in weights.iter().enumerate() {
            if t < w {
                return i;
            }
            t -= w;
        }
        weights.len() - 1
    };

    let n = n_target + n_nontarget;
    let mut first = Matrix::zeros(n, spec.dims);
    let mut second = Matrix::zeros(n, spec.dims);
    let mut targets = Vec::with_capacity(n);

    let tw = spec.target_weights();
    for row in 0..n_target {
        let c = pick_weighted(&tw, rng);
        first.row_mut(row).copy_from_slice(&spec.sample(c, rng));
        second.row_mut(row).copy_from_slice(&spec.sample(c, rng));
        targets.push(true);
    }
    let nw = spec.nontarget_weights();
    let nw_weights: Vec<f64> = nw.iter().map(|&(_, _, w)| w).collect();
    for row in 0..n_nontarget {
        let (c, c2, _) = nw[pick_weighted(&nw_weights, rng)];
        first
            .row_mut(n_target + row)
            .copy_from_slice(&spec.sample(c, rng));
        second
            .row_mut(n_target + row)
            .copy_from_slice(&spec.sample(c2, rng));
        targets.push(false);
    }
    Ok(PairSample {
        first,
        second,
        targets,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct OracleEer {
    pub eer: f64,
    /// Binomial standard error sqrt(eer·(1−eer)/n_mc).
    pub std_err: f64,
    pub n_mc: usize,
}

/// Monte Carlo EER of the analytic likelihood-ratio scorer — the task's
/// optimal-scorer floor.
pub fn oracle_eer(
    spec: &GaussianSpec,
    n_mc: usize,
    rng: &mut Rng,
    form: NegativeForm,
) -> Result<OracleEer> {
    if n_mc < 1000 {
        return Err(Error::Config(format!("oracle_eer needs n_mc >= 1000, got {n_mc}")));
    }
    let sample = sample_pairs(spec, n_mc, n_mc, rng)?;
    let mut scores = Vec::with_capacity(2 * n_mc);
    for row in 0..sample.first.rows() {
        let post = analytic_pair_posterior(spec, sample.first.row(row), sample.second.row(row), form)?;
        scores.push(post.log_lr);
    }
    let (eer, _) = compute_eer(&scores, &sample.targets)?;
    Ok(OracleEer {
        eer,
        std_err: (eer * (1.0 - eer) / n_mc as f64).sqrt(),
        n_mc,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct OracleComparison {
    /// Mean |model probability − d*| over the held-out pairs.
    pub mae: f64,
    pub trained_eer: f64,
    pub oracle_eer: f64,
    pub n_pairs: usize,
}

/// Scores a balanced held-out pair sample with both the bundle's
/// distance model and the analytic optimum, on the same pairs.
///
/// Requires the bundle's encoder to be the exact identity: only then do
/// the embedding-space joints coincide with the data-space joints the
/// oracle evaluates.
pub fn compare_to_oracle(
    bundle: &ModelBundle,
    spec: &GaussianSpec,
    n_pairs: usize,
    rng: &mut Rng,
    form: NegativeForm,
) -> Result<OracleComparison> {
    if !bundle.encoder_is_identity() {
        return Err(Error::Config(
            "compare_to_oracle requires the identity encoder configuration".into(),
        ));
    }
    if bundle.enc_cfg.input_dim != spec.dims {
        return Err(Error::dimension(
            "compare_to_oracle",
            bundle.enc_cfg.input_dim,
            spec.dims,
        ));
    }
    let half = n_pairs / 2;
    let sample = sample_pairs(spec, half, n_pairs - half, rng)?;

    let z_first = encode(bundle, &sample.first)?;
    let z_second = encode(bundle, &sample.second)?;
    let (probs, _) = distance_score(bundle, &z_first, &z_second)?;

    let mut abs_err = 0.0;
    let mut d_star_scores = Vec::with_capacity(sample.targets.len());
    for row in 0..sample.first.rows() {
        let post = analytic_pair_posterior(spec, sample.first.row(row), sample.second.row(row), form)?;
        abs_err += (probs.get(row, 0) - post.d_star).abs();
        d_star_scores.push(post.d_star);
    }
    let model_scores: Vec<f64> = (0..probs.rows()).map(|r| probs.get(r, 0)).collect();
    let (trained_eer, _) = compute_eer(&model_scores, &sample.targets)?;
    let (oracle_eer, _) = compute_eer(&d_star_scores, &sample.targets)?;
    Ok(OracleComparison {
        mae: abs_err / sample.targets.len() as f64,
        trained_eer,
        oracle_eer,
        n_pairs: sample.targets.len(),
    })
}
