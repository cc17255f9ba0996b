//! Retrieval and clustering metrics: Recall@k, k-means with NMI, and
//! cluster assignment through the learned distance.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::models::{ModelBundle, PairScorer};
use crate::rng::{streams, Rng};

/// How candidates are ranked against a query.
pub enum RankingMode<'a> {
    /// Cosine similarity between embeddings.
    Cosine,
    /// Similarity from a pairwise scorer (query on the first slot);
    /// equivalently ranking by ascending pseudo-distance 1 − score.
    Scorer(&'a dyn PairScorer),
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

/// Fraction of queries whose top-k (by similarity, ties broken by lower
/// index) contains at least one same-class example.
pub fn recall_at_k(
    embeddings: &Matrix,
    labels: &[usize],
    k_values: &[usize],
    mode: RankingMode<'_>,
) -> Result<BTreeMap<usize, f64>> {
    let n = embeddings.rows();
    if n != labels.len() {
        return Err(Error::Data(format!(
            "embedding rows {n} != label count {}",
            labels.len()
        )));
    }
    if n < 2 {
        return Err(Error::Config("recall_at_k needs >= 2 examples".into()));
    }
    for &k in k_values {
        if k == 0 || k >= n {
            return Err(Error::Config(format!("k {k} outside [1, {})", n)));
        }
    }

    // Pairwise similarity rows, query-major.
    let sims: Vec<Vec<f64>> = match mode {
        RankingMode::Cosine => (0..n)
            .map(|q| {
                (0..n)
                    .map(|c| cosine(embeddings.row(q), embeddings.row(c)))
                    .collect()
            })
            .collect(),
        RankingMode::Scorer(scorer) => {
            let mut firsts = Vec::with_capacity(n * n);
            let mut seconds = Vec::with_capacity(n * n);
            for q in 0..n {
                for c in 0..n {
                    firsts.push(q);
                    seconds.push(c);
                }
            }
            let flat = scorer.score_pairs(
                &embeddings.gather_rows(&firsts),
                &embeddings.gather_rows(&seconds),
            )?;
            flat.chunks(n).map(|c| c.to_vec()).collect()
        }
    };

    let mut hits: BTreeMap<usize, usize> = k_values.iter().map(|&k| (k, 0)).collect();
    for q in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&c| c != q).collect();
        order.sort_by(|&a, &b| {
            sims[q][b]
                .partial_cmp(&sims[q][a])
                .expect("finite similarity")
                .then(a.cmp(&b))
        });
        for (&k, hit) in hits.iter_mut() {
            if order[..k].iter().any(|&c| labels[c] == labels[q]) {
                *hit += 1;
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|(k, h)| (k, h as f64 / n as f64))
        .collect())
}

#[derive(Clone, Debug)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Stops when the relative
/// inertia change drops below 1e-6 or after 300 iterations. Ties in
/// assignment go to the lower centroid index; an emptied cluster is
/// reseeded with the point farthest from its own centroid.
pub fn kmeans(embeddings: &Matrix, k: usize, seed: u64) -> Result<KmeansResult> {
    let n = embeddings.rows();
    let d = embeddings.cols();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k {k} outside [1, {n}]")));
    }
    let mut rng = Rng::new(seed).substream(streams::KMEANS);

    // k-means++ seeding.
    let mut centers: Vec<usize> = vec![rng.gen_range(n)];
    let mut min_sq: Vec<f64> = (0..n)
        .map(|i| sq_dist(embeddings.row(i), embeddings.row(centers[0])))
        .collect();
    while centers.len() < k {
        let total: f64 = min_sq.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.next_f64() * total;
            let mut pick = n - 1;
            for (i, &w) in min_sq.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // All remaining points coincide with a center; take the first
            // unchosen index.
            (0..n).find(|i| !centers.contains(i)).expect("k <= n")
        };
        centers.push(next);
        for i in 0..n {
            min_sq[i] = min_sq[i].min(sq_dist(embeddings.row(i), embeddings.row(next)));
        }
    }
    let mut centroids = embeddings.gather_rows(&centers);

    let mut assignments = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    for iter in 0..300 {
        iterations = iter + 1;
        let mut new_inertia = 0.0;
        for i in 0..n {
            let mut best = (0usize, f64::INFINITY);
            for c in 0..k {
                let dist = sq_dist(embeddings.row(i), centroids.row(c));
                if dist < best.1 {
                    best = (c, dist);
                }
            }
            assignments[i] = best.0;
            new_inertia += best.1;
        }

        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assignments[i]] += 1;
            let row = sums.row_mut(assignments[i]);
            for (s, &v) in row.iter_mut().zip(embeddings.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed with the point farthest from its centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(embeddings.row(a), centroids.row(assignments[a]))
                            .partial_cmp(&sq_dist(embeddings.row(b), centroids.row(assignments[b])))
                            .expect("finite distances")
                    })
                    .expect("nonempty data");
                sums.row_mut(c).copy_from_slice(embeddings.row(far));
                counts[c] = 1;
                assignments[far] = c;
            }
            let inv = 1.0 / counts[c] as f64;
            for v in sums.row_mut(c) {
                *v *= inv;
            }
        }
        centroids = sums;

        let rel_change = (inertia - new_inertia).abs() / inertia.max(1e-30);
        inertia = new_inertia;
        if rel_change < 1e-6 {
            break;
        }
    }

    Ok(KmeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
    })
}

/// Normalized mutual information `I(A;Y) / sqrt(H(A)·H(Y))` with
/// natural-log entropies from empirical joint counts; a constant
/// partition (0/0) is defined as 0.
pub fn nmi(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    if assignments.len() != labels.len() {
        return Err(Error::Data(format!(
            "assignment count {} != label count {}",
            assignments.len(),
            labels.len()
        )));
    }
    let n = assignments.len();
    if n == 0 {
        return Err(Error::Data("nmi on empty input".into()));
    }
    let ka = assignments.iter().max().unwrap() + 1;
    let ky = labels.iter().max().unwrap() + 1;
    let mut joint = vec![0usize; ka * ky];
    let mut ca = vec![0usize; ka];
    let mut cy = vec![0usize; ky];
    for (&a, &y) in assignments.iter().zip(labels) {
        joint[a * ky + y] += 1;
        ca[a] += 1;
        cy[y] += 1;
    }
    let nf = n as f64;
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let ha = entropy(&ca);
    let hy = entropy(&cy);
    let mut mi = 0.0;
    for a in 0..ka {
        for y in 0..ky {
            let c = joint[a * ky + y];
            if c > 0 {
                let p = c as f64 / nf;
                mi += p * (p / (ca[a] as f64 / nf * (cy[y] as f64 / nf))).ln();
            }
        }
    }
    let denom = (ha * hy).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Assigns every embedding to the centroid with the smallest learned
/// pseudo-distance `1 − score` (point on the first slot); ties go to the
/// lower centroid index.
pub fn d_cluster_assign(
    bundle: &ModelBundle,
    embeddings: &Matrix,
    centroids: &Matrix,
) -> Result<Vec<usize>> {
    if embeddings.cols() != centroids.cols() {
        return Err(Error::dimension(
            "d_cluster_assign",
            embeddings.cols(),
            centroids.cols(),
        ));
    }
    let n = embeddings.rows();
    let k = centroids.rows();
    if k == 0 {
        return Err(Error::Config("no centroids".into()));
    }
    let mut firsts = Vec::with_capacity(n * k);
    let mut seconds = Vec::with_capacity(n * k);
    for i in 0..n {
        for c in 0..k {
            firsts.push(i);
            seconds.push(c);
        }
    }
    let probs = bundle.score_pairs(
        &embeddings.gather_rows(&firsts),
        &centroids.gather_rows(&seconds),
    )?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = &probs[i * k..(i + 1) * k];
        let mut best = (0usize, 1.0 - row[0]);
        for (c, &p) in row.iter().enumerate().skip(1) {
            let dist = 1.0 - p;
            if dist < best.1 {
                best = (c, dist);
            }
        }
        out.push(best.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_models, DistanceConfig, EncoderConfig, HeadInit};

    #[test]
    fn recall_identical_vectors() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let r = recall_at_k(&z, &[0, 0], &[1], RankingMode::Cosine).unwrap();
        assert_eq!(r[&1], 1.0);
    }

    #[test]
    fn recall_singleton_classes_is_zero() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let r = recall_at_k(&z, &[0, 1, 2], &[1, 2], RankingMode::Cosine).unwrap();
        assert_eq!(r[&1], 0.0);
        assert_eq!(r[&2], 0.0);
    }

    #[test]
    fn recall_k_out_of_range_rejected() {
        let z = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(recall_at_k(&z, &[0, 0], &[2], RankingMode::Cosine).is_err());
    }

    #[test]
    fn recall_hand_configuration() {
        // Three near-duplicates of class 0 and three of class 1 on a line.
        let z = Matrix::from_rows(&[
            vec![0.0, 1.0],
            vec![0.1, 1.0],
            vec![0.2, 1.0],
            vec![5.0, 1.0],
            vec![5.1, 1.0],
            vec![5.2, 1.0],
        ])
        .unwrap();
        let labels = [0, 0, 0, 1, 1, 1];
        let r = recall_at_k(&z, &labels, &[1, 3], RankingMode::Cosine).unwrap();
        assert_eq!(r[&1], 1.0);
        assert_eq!(r[&3], 1.0);
    }

    #[test]
    fn kmeans_k_equals_n() {
        let z = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        let res = kmeans(&z, 3, 0).unwrap();
        assert_eq!(res.inertia, 0.0);
        let mut a = res.assignments.clone();
        a.sort_unstable();
        a.dedup();
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn kmeans_separated_blobs() {
        let mut rows = Vec::new();
        let mut rng = Rng::new(1);
        for _ in 0..20 {
            rows.push(vec![rng.normal() * 0.1, rng.normal() * 0.1]);
        }
        for _ in 0..20 {
            rows.push(vec![10.0 + rng.normal() * 0.1, rng.normal() * 0.1]);
        }
        let z = Matrix::from_rows(&rows).unwrap();
        let res = kmeans(&z, 2, 7).unwrap();
        let first = res.assignments[0];
        assert!(res.assignments[..20].iter().all(|&a| a == first));
        assert!(res.assignments[20..].iter().all(|&a| a != first));
    }

    #[test]
    fn kmeans_duplicated_dataset_same_partition() {
        let mut rows = Vec::new();
        let mut rng = Rng::new(3);
        for i in 0..12 {
            rows.push(vec![(i % 3) as f64 * 4.0 + rng.normal() * 0.05, rng.normal() * 0.05]);
        }
        let base = Matrix::from_rows(&rows).unwrap();
        let doubled = Matrix::vconcat(&base, &base).unwrap();
        let res = kmeans(&doubled, 3, 5).unwrap();
        for i in 0..12 {
            assert_eq!(res.assignments[i], res.assignments[i + 12]);
        }
    }

    #[test]
    fn kmeans_k_too_large_rejected() {
        let z = Matrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(kmeans(&z, 2, 0).is_err());
    }

    #[test]
    fn nmi_perfect_up_to_renaming() {
        let labels = [0, 0, 1, 1, 2, 2];
        let renamed = [2, 2, 0, 0, 1, 1];
        let v = nmi(&renamed, &labels).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nmi_constant_partition_is_zero() {
        let v = nmi(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn nmi_independent_is_near_zero() {
        let mut rng = Rng::new(11);
        let n = 20_000;
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(4)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.gen_range(4)).collect();
        let v = nmi(&a, &b).unwrap();
        assert!(v < 0.01, "{v}");
    }

    #[test]
    fn nmi_length_mismatch_rejected() {
        assert!(nmi(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn nmi_two_routes_agree() {
        // I = H(A) + H(Y) - H(A,Y) as an independent route.
        let mut rng = Rng::new(5);
        let n = 500;
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(3)).collect();
        let y: Vec<usize> = a.iter().map(|&v| if rng.bernoulli(0.3) { (v + 1) % 3 } else { v }).collect();
        let v = nmi(&a, &y).unwrap();

        let count = |xs: &[usize]| {
            let k = xs.iter().max().unwrap() + 1;
            let mut c = vec![0usize; k];
            for &x in xs {
                c[x] += 1;
            }
            c
        };
        let ent = |counts: &[usize]| -> f64 {
            counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / n as f64;
                    -p * p.ln()
                })
                .sum()
        };
        let joint: Vec<usize> = {
            let mut m = std::collections::HashMap::new();
            for (&x, &yy) in a.iter().zip(&y) {
                *m.entry((x, yy)).or_insert(0usize) += 1;
            }
            m.into_values().collect()
        };
        let (ha, hy, hj) = (ent(&count(&a)), ent(&count(&y)), ent(&joint));
        let expected = (ha + hy - hj) / (ha * hy).sqrt();
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn untrained_bundle_assigns_everything_to_first_centroid() {
        let enc = EncoderConfig::identity(2);
        let dist = DistanceConfig {
            embedding_dim: 2,
            depth: 1,
            width: 4,
            dropout: 0.0,
            slope: 0.01,
        };
        let bundle = init_models(&enc, &dist, 2, true, HeadInit::Zeros, 0).unwrap();
        let z = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let centroids = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let assign = d_cluster_assign(&bundle, &z, &centroids).unwrap();
        assert_eq!(assign, vec![0, 0, 0]);
    }

    #[test]
    fn single_centroid_takes_all() {
        let enc = EncoderConfig::identity(2);
        let dist = DistanceConfig {
            embedding_dim: 2,
            depth: 1,
            width: 4,
            dropout: 0.0,
            slope: 0.01,
        };
        let bundle = init_models(&enc, &dist, 2, true, HeadInit::Zeros, 0).unwrap();
        let z = Matrix::from_rows(&[vec![0.0, 0.0], vec![9.0, 9.0]]).unwrap();
        let centroids = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(d_cluster_assign(&bundle, &z, &centroids).unwrap(), vec![0, 0]);
    }
}
