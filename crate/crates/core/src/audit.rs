//! Empirical distance-property audit of the pseudo-distance
//! `D′ = 1 − score`: distance to self, symmetry, and triangle-inequality
//! slack. The audit reports distributions; it asserts nothing.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::models::{encode, ModelBundle, PairScorer};
use crate::rng::{streams, Rng};

/// Summary of one audited property over its sample.
#[derive(Clone, Debug)]
pub struct PropertyStats {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
    /// Uniform bins on [0,1]; a value of exactly 1 lands in the last bin.
    pub histogram: Vec<usize>,
    /// Samples that are exactly 0 (the metric-property ideal).
    pub zeros: usize,
    pub n: usize,
}

impl PropertyStats {
    fn from_samples(mut samples: Vec<f64>, bins: usize) -> Self {
        let n = samples.len();
        let mut histogram = vec![0usize; bins];
        if n == 0 {
            return PropertyStats {
                min: 0.0,
                median: 0.0,
                mean: 0.0,
                max: 0.0,
                histogram,
                zeros: 0,
                n,
            };
        }
        samples.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        let mean = samples.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            samples[n / 2]
        } else {
            0.5 * (samples[n / 2 - 1] + samples[n / 2])
        };
        for &v in &samples {
            let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
            histogram[b] += 1;
        }
        let zeros = samples.iter().filter(|&&v| v == 0.0).count();
        PropertyStats {
            min: samples[0],
            median,
            mean,
            max: samples[n - 1],
            histogram,
            zeros,
            n,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    pub self_distance: PropertyStats,
    pub symmetry_gap: PropertyStats,
    pub triangle_slack: PropertyStats,
    pub bins: usize,
    pub seed: u64,
}

/// Audits a pairwise scorer over a set of embeddings:
///
/// - self-distance `D′(x,x)` over every example;
/// - symmetry gap `|D′(a,b) − D′(b,a)|` over `n_pairs` sampled unordered
///   pairs (exhaustive when the sample covers them all);
/// - triangle slack `max[D′(b,c) − (D′(a,b) + D′(a,c)), 0]` over
///   `n_triplets` distinct ordered triples, sampled without replacement
///   (exhaustive for small sets).
pub fn audit_properties(
    scorer: &dyn PairScorer,
    embeddings: &Matrix,
    n_pairs: usize,
    n_triplets: usize,
    bins: usize,
    seed: u64,
) -> Result<AuditReport> {
    let n = embeddings.rows();
    if n < 3 {
        return Err(Error::Data(format!("audit needs >= 3 examples, got {n}")));
    }
    if bins == 0 {
        return Err(Error::Config("audit needs >= 1 histogram bin".into()));
    }
    if n_triplets == 0 {
        return Err(Error::Config("audit needs n_triplets >= 1".into()));
    }
    let mut rng = Rng::new(seed).substream(streams::AUDIT);

    let dist = |firsts: &[usize], seconds: &[usize]| -> Result<Vec<f64>> {
        let scores = scorer.score_pairs(
            &embeddings.gather_rows(firsts),
            &embeddings.gather_rows(seconds),
        )?;
        Ok(scores.into_iter().map(|p| 1.0 - p).collect())
    };

    // Self-distance over all examples.
    let all: Vec<usize> = (0..n).collect();
    let self_distance = dist(&all, &all)?;

    // Symmetry over sampled unordered pairs.
    let total_pairs = n * (n - 1) / 2;
    let pairs: Vec<(usize, usize)> = if n_pairs >= total_pairs {
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect()
    } else {
        let mut seen = HashSet::with_capacity(n_pairs);
        let mut out = Vec::with_capacity(n_pairs);
        while out.len() < n_pairs {
            let i = rng.gen_range(n);
            let j = rng.gen_range(n);
            if i == j {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key) {
                out.push(key);
            }
        }
        out
    };
    let (ab_first, ab_second): (Vec<usize>, Vec<usize>) = pairs.iter().cloned().unzip();
    let fwd = dist(&ab_first, &ab_second)?;
    let bwd = dist(&ab_second, &ab_first)?;
    let symmetry_gap: Vec<f64> = fwd.iter().zip(&bwd).map(|(a, b)| (a - b).abs()).collect();

    // Triangle slack over distinct ordered triples (a,b,c).
    let total_triples = n * (n - 1) * (n - 2);
    let triples: Vec<(usize, usize, usize)> = if n_triplets >= total_triples && n <= 30 {
        let mut all = Vec::with_capacity(total_triples);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if a != b && b != c && a != c {
                        all.push((a, b, c));
                    }
                }
            }
        }
        all
    } else {
        let want = n_triplets.min(total_triples);
        let mut seen = HashSet::with_capacity(want);
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            let a = rng.gen_range(n);
            let b = rng.gen_range(n);
            let c = rng.gen_range(n);
            if a == b || b == c || a == c {
                continue;
            }
            if seen.insert((a, b, c)) {
                out.push((a, b, c));
            }
        }
        out
    };
    let m = triples.len();
    let mut firsts = Vec::with_capacity(3 * m);
    let mut seconds = Vec::with_capacity(3 * m);
    for &(a, b, c) in &triples {
        firsts.push(b);
        seconds.push(c); // D'(b,c)
        firsts.push(a);
        seconds.push(b); // D'(a,b)
        firsts.push(a);
        seconds.push(c); // D'(a,c)
    }
    let d = dist(&firsts, &seconds)?;
    let triangle_slack: Vec<f64> = (0..m)
        .map(|i| (d[3 * i] - (d[3 * i + 1] + d[3 * i + 2])).max(0.0))
        .collect();

    Ok(AuditReport {
        self_distance: PropertyStats::from_samples(self_distance, bins),
        symmetry_gap: PropertyStats::from_samples(symmetry_gap, bins),
        triangle_slack: PropertyStats::from_samples(triangle_slack, bins),
        bins,
        seed,
    })
}

/// Embeds a dataset with the bundle's encoder and audits the bundle's
/// distance model over the embeddings.
pub fn audit_bundle(
    bundle: &ModelBundle,
    features: &Matrix,
    n_pairs: usize,
    n_triplets: usize,
    bins: usize,
    seed: u64,
) -> Result<AuditReport> {
    let z = encode(bundle, features)?;
    audit_properties(bundle, &z, n_pairs, n_triplets, bins, seed)
}
