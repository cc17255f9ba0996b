//! Labeled feature datasets.

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::rng::Rng;

/// A feature matrix with one integer class label per row.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    /// Split tag ("train", "test", a file path, ...), informational only.
    pub name: String,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, name: impl Into<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Data(format!(
                "feature rows {} != label count {}",
                features.rows(),
                labels.len()
            )));
        }
        Ok(LabeledDataset {
            features,
            labels,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    /// Number of class ids, counted as max label + 1.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    /// Distinct labels present, ascending.
    pub fn classes_present(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_classes()];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.iter()
            .enumerate()
            .filter_map(|(c, &s)| s.then_some(c))
            .collect()
    }

    /// Example indices grouped by class id (index = class id; empty for
    /// absent classes).
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }

    pub fn subset(&self, idx: &[usize], name: impl Into<String>) -> LabeledDataset {
        LabeledDataset {
            features: self.features.gather_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            name: name.into(),
        }
    }

    /// Examples whose label is in `keep` (labels are preserved, not
    /// compacted).
    pub fn filter_classes(&self, keep: &[usize], name: impl Into<String>) -> LabeledDataset {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| keep.contains(&self.labels[i]))
            .collect();
        self.subset(&idx, name)
    }

    /// Stratified split: `val_fraction` of each class (rounded, at least
    /// one example stays in train) goes to the second dataset.
    pub fn split_validation(&self, val_fraction: f64, rng: &mut Rng) -> Result<(LabeledDataset, LabeledDataset)> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction {val_fraction} outside [0,1)"
            )));
        }
        let mut train_idx = Vec::new();
        let mut val_idx = Vec::new();
        for group in self.class_indices() {
            if group.is_empty() {
                continue;
            }
            let mut g = group.clone();
            rng.shuffle(&mut g);
            let n_val = ((g.len() as f64 * val_fraction).round() as usize).min(g.len() - 1);
            val_idx.extend_from_slice(&g[..n_val]);
            train_idx.extend_from_slice(&g[n_val..]);
        }
        train_idx.sort_unstable();
        val_idx.sort_unstable();
        Ok((
            self.subset(&train_idx, format!("{}/train", self.name)),
            self.subset(&val_idx, format!("{}/val", self.name)),
        ))
    }
}
