//! Class-balanced minibatch construction and exhaustive in-batch pair
//! enumeration.
//!
//! Pairs are used exactly as sampled: there is deliberately no
//! hard-negative mining anywhere in this module.

use std::collections::VecDeque;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Batch shape: `classes_per_batch` (S) distinct classes with
/// `examples_per_class` (R) examples each, so batches hold S·R rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    pub classes_per_batch: usize,
    pub examples_per_class: usize,
}

impl BatchPlan {
    pub fn new(classes_per_batch: usize, examples_per_class: usize) -> Result<Self> {
        if classes_per_batch < 2 {
            return Err(Error::Config(
                "classes_per_batch must be >= 2 (no negative pairs otherwise)".into(),
            ));
        }
        if examples_per_class < 2 {
            return Err(Error::Config(
                "examples_per_class must be >= 2 (no positive pairs otherwise)".into(),
            ));
        }
        Ok(BatchPlan {
            classes_per_batch,
            examples_per_class,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.classes_per_batch * self.examples_per_class
    }
}

/// Exhaustive unordered in-batch pairs, split by label equality. Both
/// lists are in lexicographic (i, j) order with i < j, and together they
/// partition all C(n,2) pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairIndex {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

impl PairIndex {
    pub fn total(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }
}

pub fn enumerate_pairs(labels: &[usize]) -> Result<PairIndex> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::Batch(format!("need >= 2 examples to form pairs, got {n}")));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                positives.push((i, j));
            } else {
                negatives.push((i, j));
            }
        }
    }
    if positives.is_empty() {
        log::warn!("batch has no positive pairs");
    }
    if negatives.is_empty() {
        log::warn!("batch has no negative pairs");
    }
    Ok(PairIndex {
        positives,
        negatives,
    })
}

/// Infinite stream of class-balanced index batches.
///
/// Each class's (shuffled) examples are chunked into groups of R; a short
/// final chunk wraps around the shuffled order, which is also how classes
/// with fewer than R examples are completed (sampling with replacement).
/// The global group list is shuffled once per epoch and consumed front to
/// back; a group whose class already appears in the batch under
/// construction is deferred to the next batch.
pub struct BalancedBatches {
    per_class: Vec<Vec<usize>>,
    plan: BatchPlan,
    rng: Rng,
    pool: VecDeque<(usize, Vec<usize>)>,
    epoch: usize,
    started: bool,
}

pub fn class_balanced_batches(
    dataset: &LabeledDataset,
    plan: &BatchPlan,
    rng: Rng,
) -> Result<BalancedBatches> {
    let per_class: Vec<Vec<usize>> = dataset
        .class_indices()
        .into_iter()
        .filter(|g| !g.is_empty())
        .collect();
    if per_class.len() < plan.classes_per_batch {
        return Err(Error::Config(format!(
            "dataset has {} classes, plan needs {}",
            per_class.len(),
            plan.classes_per_batch
        )));
    }
    Ok(BalancedBatches {
        per_class,
        plan: *plan,
        rng,
        pool: VecDeque::new(),
        epoch: 0,
        started: false,
    })
}

impl BalancedBatches {
    /// Completed passes over the group list.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn refill(&mut self) {
        if self.started {
            self.epoch += 1;
        }
        self.started = true;
        let r = self.plan.examples_per_class;
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for (class, indices) in self.per_class.iter().enumerate() {
            let mut order = indices.clone();
            self.rng.shuffle(&mut order);
            let n_groups = order.len().div_ceil(r);
            for g in 0..n_groups {
                let group: Vec<usize> = (0..r).map(|k| order[(g * r + k) % order.len()]).collect();
                groups.push((class, group));
            }
        }
        self.rng.shuffle(&mut groups);
        self.pool.extend(groups);
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let s = self.plan.classes_per_batch;
        let mut batch: Vec<usize> = Vec::with_capacity(self.plan.batch_size());
        let mut classes: Vec<usize> = Vec::with_capacity(s);
        let mut deferred: Vec<(usize, Vec<usize>)> = Vec::new();
        while classes.len() < s {
            let Some((class, group)) = self.pool.pop_front() else {
                self.refill();
                continue;
            };
            if classes.contains(&class) {
                deferred.push((class, group));
            } else {
                classes.push(class);
                batch.extend(group);
            }
        }
        for g in deferred.into_iter().rev() {
            self.pool.push_front(g);
        }
        batch
    }
}

impl Iterator for BalancedBatches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        Some(self.next_batch())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Matrix;

    fn dataset(labels: Vec<usize>) -> LabeledDataset {
        let n = labels.len();
        let features = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        LabeledDataset::new(features, labels, "t").unwrap()
    }

    #[test]
    fn enumerate_two_by_two() {
        let idx = enumerate_pairs(&[0, 0, 1, 1]).unwrap();
        assert_eq!(idx.positives, vec![(0, 1), (2, 3)]);
        assert_eq!(idx.negatives, vec![(0, 2), (0, 3), (1, 2), (1, 3)]);
    }

    #[test]
    fn single_class_has_no_negatives() {
        let idx = enumerate_pairs(&[0, 0, 0]).unwrap();
        assert_eq!(idx.positives.len(), 3);
        assert!(idx.negatives.is_empty());
    }

    #[test]
    fn too_small_batch_rejected() {
        assert!(matches!(enumerate_pairs(&[0]), Err(Error::Batch(_))));
    }

    #[test]
    fn balanced_batch_shape() {
        let labels: Vec<usize> = (0..4).flat_map(|c| std::iter::repeat_n(c, 6)).collect();
        let ds = dataset(labels);
        let plan = BatchPlan::new(2, 2).unwrap();
        let mut batches = class_balanced_batches(&ds, &plan, Rng::new(0)).unwrap();
        let batch = batches.next_batch();
        assert_eq!(batch.len(), 4);
        let idx = enumerate_pairs(&batch.iter().map(|&i| ds.labels[i]).collect::<Vec<_>>()).unwrap();
        assert_eq!(idx.positives.len(), 2);
        assert_eq!(idx.negatives.len(), 4);
    }

    #[test]
    fn paper_scale_batch_size() {
        let labels: Vec<usize> = (0..30).flat_map(|c| std::iter::repeat_n(c, 10)).collect();
        let ds = dataset(labels);
        let plan = BatchPlan::new(24, 5).unwrap();
        let mut batches = class_balanced_batches(&ds, &plan, Rng::new(1)).unwrap();
        let batch = batches.next_batch();
        assert_eq!(batch.len(), 120);
        let mut classes: Vec<usize> = batch.iter().map(|&i| ds.labels[i]).collect();
        classes.sort_unstable();
        classes.dedup();
        assert_eq!(classes.len(), 24);
    }

    #[test]
    fn same_seed_same_batches() {
        let labels: Vec<usize> = (0..5).flat_map(|c| std::iter::repeat_n(c, 7)).collect();
        let ds = dataset(labels);
        let plan = BatchPlan::new(3, 2).unwrap();
        let a: Vec<Vec<usize>> = class_balanced_batches(&ds, &plan, Rng::new(9))
            .unwrap()
            .take(20)
            .collect();
        let b: Vec<Vec<usize>> = class_balanced_batches(&ds, &plan, Rng::new(9))
            .unwrap()
            .take(20)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn epoch_covers_every_example() {
        // 4 classes x 6 examples, R=2 -> 12 groups, S=2 -> 6 batches/epoch.
        let labels: Vec<usize> = (0..4).flat_map(|c| std::iter::repeat_n(c, 6)).collect();
        let ds = dataset(labels);
        let plan = BatchPlan::new(2, 2).unwrap();
        let mut batches = class_balanced_batches(&ds, &plan, Rng::new(3)).unwrap();
        let mut seen = vec![false; ds.len()];
        for _ in 0..6 {
            for i in batches.next_batch() {
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "{seen:?}");
    }

    #[test]
    fn small_class_wraps_with_replacement() {
        // Class 1 has a single example but R=2.
        let ds = dataset(vec![0, 0, 0, 1]);
        let plan = BatchPlan::new(2, 2).unwrap();
        let mut batches = class_balanced_batches(&ds, &plan, Rng::new(2)).unwrap();
        let batch = batches.next_batch();
        assert_eq!(batch.len(), 4);
        assert_eq!(batch.iter().filter(|&&i| i == 3).count(), 2);
    }

    #[test]
    fn too_few_classes_rejected() {
        let ds = dataset(vec![0, 0, 0, 0]);
        let plan = BatchPlan::new(2, 2).unwrap();
        assert!(class_balanced_batches(&ds, &plan, Rng::new(0)).is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(BatchPlan::new(1, 5).is_err());
        assert!(BatchPlan::new(5, 1).is_err());
        assert_eq!(BatchPlan::new(24, 5).unwrap().batch_size(), 120);
    }
}
