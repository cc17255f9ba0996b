//! Trial generation, trial scoring, and threshold-sweep metrics.

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::{distance_score, encode, ModelBundle};
use crate::rng::Rng;

/// A verification trial: an enrollment set (same class by construction)
/// against one test example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trial {
    pub enroll_ids: Vec<usize>,
    pub test_id: usize,
    pub target: bool,
}

/// One trial with a score per scoring method. `score_fused` is the raw
/// sum of the other two.
#[derive(Clone, Debug)]
pub struct ScoredTrial {
    pub trial: Trial,
    pub score_e2e: f64,
    pub score_cos: f64,
    pub score_fused: f64,
}

#[derive(Clone, Copy, Debug)]
pub enum TrialMode {
    /// Every unordered example pair, each as a single-enrollment trial.
    AllPairs,
    /// `n` trials with the requested target fraction (exact counts).
    Sampled { n: usize, target_fraction: f64 },
}

pub fn generate_trials(
    dataset: &LabeledDataset,
    mode: TrialMode,
    rng: &mut Rng,
) -> Result<Vec<Trial>> {
    match mode {
        TrialMode::AllPairs => {
            let n = dataset.len();
            if n < 2 {
                return Err(Error::Data("all-pairs trials need >= 2 examples".into()));
            }
            let labels = &dataset.labels;
            let mut trials = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    trials.push(Trial {
                        enroll_ids: vec![i],
                        test_id: j,
                        target: labels[i] == labels[j],
                    });
                }
            }
            if trials.iter().all(|t| t.target) {
                log::warn!("single-class split: all trials are targets, EER is undefined");
            }
            Ok(trials)
        }
        TrialMode::Sampled { n, target_fraction } => {
            if !(0.0..=1.0).contains(&target_fraction) {
                return Err(Error::Config(format!(
                    "target_fraction {target_fraction} outside [0,1]"
                )));
            }
            let n_target = (n as f64 * target_fraction).round() as usize;
            let n_nontarget = n - n_target;

            let groups = dataset.class_indices();
            let pair_classes: Vec<&Vec<usize>> = groups.iter().filter(|g| g.len() >= 2).collect();
            let present: Vec<&Vec<usize>> = groups.iter().filter(|g| !g.is_empty()).collect();
            if n_target > 0 && pair_classes.is_empty() {
                return Err(Error::Config(
                    "no class has >= 2 examples, cannot sample target trials".into(),
                ));
            }
            if n_nontarget > 0 && present.len() < 2 {
                return Err(Error::Config(
                    "fewer than 2 classes, cannot sample non-target trials".into(),
                ));
            }

            let mut trials = Vec::with_capacity(n);
            for _ in 0..n_target {
                let group = pair_classes[rng.gen_range(pair_classes.len())];
                let picks = rng.sample_distinct(group.len(), 2);
                trials.push(Trial {
                    enroll_ids: vec![group[picks[0]]],
                    test_id: group[picks[1]],
                    target: true,
                });
            }
            for _ in 0..n_nontarget {
                let picks = rng.sample_distinct(present.len(), 2);
                let a = present[picks[0]];
                let b = present[picks[1]];
                trials.push(Trial {
                    enroll_ids: vec![a[rng.gen_range(a.len())]],
                    test_id: b[rng.gen_range(b.len())],
                    target: false,
                });
            }
            Ok(trials)
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Scores every trial with all three methods. Embeddings are computed
/// once per unique example id; the enrollment embedding always feeds the
/// distance model's first input slot. Enrollment sets are aggregated by
/// the mean of pairwise scores.
pub fn score_trials(
    bundle: &ModelBundle,
    dataset: &LabeledDataset,
    trials: &[Trial],
) -> Result<Vec<ScoredTrial>> {
    let n = dataset.len();
    let mut used = vec![false; n];
    for (k, t) in trials.iter().enumerate() {
        if t.enroll_ids.is_empty() {
            return Err(Error::Data("trial with empty enrollment set".into()));
        }
        for &id in t.enroll_ids.iter().chain(std::iter::once(&t.test_id)) {
            if id >= n {
                return Err(Error::Data(format!("unknown example id {id} (dataset has {n})")));
            }
            used[id] = true;
        }
        let enroll_class = dataset.labels[t.enroll_ids[0]];
        if t.enroll_ids.iter().any(|&e| dataset.labels[e] != enroll_class) {
            return Err(Error::Data(format!(
                "trial {k}: enrollment ids span multiple classes"
            )));
        }
        if t.target != (enroll_class == dataset.labels[t.test_id]) {
            return Err(Error::Data(format!(
                "trial {k}: label disagrees with dataset classes"
            )));
        }
    }

    // Embed each used example once.
    let ids: Vec<usize> = (0..n).filter(|&i| used[i]).collect();
    let mut row_of = vec![usize::MAX; n];
    for (r, &id) in ids.iter().enumerate() {
        row_of[id] = r;
    }
    let z = encode(bundle, &dataset.features.gather_rows(&ids))?;

    // One batched distance pass over every (enroll member, test) pair.
    let mut first_rows = Vec::new();
    let mut second_rows = Vec::new();
    for t in trials {
        for &e in &t.enroll_ids {
            first_rows.push(row_of[e]);
            second_rows.push(row_of[t.test_id]);
        }
    }
    let (probs, _) = distance_score(
        bundle,
        &z.gather_rows(&first_rows),
        &z.gather_rows(&second_rows),
    )?;

    let mut out = Vec::with_capacity(trials.len());
    let mut cursor = 0;
    for t in trials {
        let k = t.enroll_ids.len();
        let e2e = (0..k).map(|i| probs.get(cursor + i, 0)).sum::<f64>() / k as f64;
        let cos = t
            .enroll_ids
            .iter()
            .map(|&e| cosine(z.row(row_of[e]), z.row(row_of[t.test_id])))
            .sum::<f64>()
            / k as f64;
        cursor += k;
        out.push(ScoredTrial {
            trial: t.clone(),
            score_e2e: e2e,
            score_cos: cos,
            score_fused: e2e + cos,
        });
    }
    Ok(out)
}

/// One ROC operating point under the convention
/// `FAR(τ) = P(non-target score ≥ τ)`, `miss(τ) = P(target score < τ)`.
#[derive(Clone, Copy, Debug)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub miss: f64,
}

#[derive(Clone, Debug)]
pub struct RocReport {
    pub points: Vec<RocPoint>,
    pub eer: f64,
    pub eer_threshold: f64,
    pub one_minus_auc: f64,
}

fn check_two_sided(targets: &[bool]) -> Result<(usize, usize)> {
    let t = targets.iter().filter(|&&b| b).count();
    let n = targets.len() - t;
    if t == 0 || n == 0 {
        return Err(Error::Metric(format!(
            "need both trial kinds: {t} targets, {n} non-targets"
        )));
    }
    Ok((t, n))
}

/// Operating points at thresholds −∞, the midpoints between adjacent
/// sorted unique scores, and +∞.
fn operating_points(scores: &[f64], targets: &[bool]) -> Result<Vec<RocPoint>> {
    if scores.len() != targets.len() {
        return Err(Error::Metric("score/label length mismatch".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Metric("non-finite score".into()));
    }
    let (n_t, n_n) = check_two_sided(targets)?;

    let mut pairs: Vec<(f64, bool)> = scores.iter().cloned().zip(targets.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));

    let mut points = vec![RocPoint {
        threshold: f64::NEG_INFINITY,
        far: 1.0,
        miss: 0.0,
    }];
    let mut cum_t = 0usize;
    let mut cum_n = 0usize;
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == s {
            if pairs[i].1 {
                cum_t += 1;
            } else {
                cum_n += 1;
            }
            i += 1;
        }
        let threshold = if i < pairs.len() {
            0.5 * (s + pairs[i].0)
        } else {
            f64::INFINITY
        };
        points.push(RocPoint {
            threshold,
            far: (n_n - cum_n) as f64 / n_n as f64,
            miss: cum_t as f64 / n_t as f64,
        });
    }
    Ok(points)
}

/// Equal error rate with linear interpolation between the two operating
/// points bracketing FAR = miss. Returns (eer, threshold).
pub fn compute_eer(scores: &[f64], targets: &[bool]) -> Result<(f64, f64)> {
    let points = operating_points(scores, targets)?;
    for w in points.windows(2) {
        let (p1, p2) = (w[0], w[1]);
        let d1 = p1.far - p1.miss;
        let d2 = p2.far - p2.miss;
        if d2 <= 0.0 {
            // d1 > 0 >= d2 by monotonicity (the sweep starts at +1).
            let t = if d1 == d2 { 0.0 } else { d1 / (d1 - d2) };
            let eer = p1.far + t * (p2.far - p1.far);
            let threshold = match (p1.threshold.is_finite(), p2.threshold.is_finite()) {
                (true, true) => p1.threshold + t * (p2.threshold - p1.threshold),
                (true, false) => p1.threshold,
                (false, true) => p2.threshold,
                (false, false) => 0.0,
            };
            return Ok((eer, threshold));
        }
    }
    unreachable!("FAR - miss reaches -1 at +inf threshold")
}

/// `1 − AUC` by concordant-pair counting on integer ranks (ties count
/// one half); the only division is the final one.
pub fn compute_auc(scores: &[f64], targets: &[bool]) -> Result<f64> {
    if scores.len() != targets.len() {
        return Err(Error::Metric("score/label length mismatch".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Metric("non-finite score".into()));
    }
    let (n_t, n_n) = check_two_sided(targets)?;

    let mut pairs: Vec<(f64, bool)> = scores.iter().cloned().zip(targets.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));

    // Twice the concordant count, so a tie adds integer 1 per (t, n) pair.
    let mut concordant_x2: u128 = 0;
    let mut nontargets_below: u128 = 0;
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        let mut t_here: u128 = 0;
        let mut n_here: u128 = 0;
        while i < pairs.len() && pairs[i].0 == s {
            if pairs[i].1 {
                t_here += 1;
            } else {
                n_here += 1;
            }
            i += 1;
        }
        concordant_x2 += t_here * (2 * nontargets_below + n_here);
        nontargets_below += n_here;
    }
    let denom = 2 * n_t as u128 * n_n as u128;
    Ok((denom - concordant_x2) as f64 / denom as f64)
}

/// Full ROC sweep plus both scalar metrics.
pub fn roc_report(scores: &[f64], targets: &[bool]) -> Result<RocReport> {
    let points = operating_points(scores, targets)?;
    let (eer, eer_threshold) = compute_eer(scores, targets)?;
    let one_minus_auc = compute_auc(scores, targets)?;
    Ok(RocReport {
        points,
        eer,
        eer_threshold,
        one_minus_auc,
    })
}
