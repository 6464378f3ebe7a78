//! Class balancing, random forest and stratified cross-validation.

mod forest;
mod kfold;
mod smote;

pub use forest::{DecisionTree, ForestParams, ForestModel, TreeNode, FOREST_FORMAT_VERSION};
pub use kfold::{cross_validate, stratified_kfold, CvFold, CvReport, Fold};
pub use smote::{smote, SmoteOutput, Synthetic};

use crate::error::{Error, Result};

/// Row-major feature matrix with boolean labels (attack = positive).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: Vec<f64>,
    n_features: usize,
    labels: Vec<bool>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let n_features = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_features);
        for r in &rows {
            if r.len() != n_features {
                return Err(Error::Dimension {
                    expected: n_features,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Dataset {
            data,
            n_features,
            labels,
        })
    }

    pub fn from_flat(data: Vec<f64>, n_features: usize, labels: Vec<bool>) -> Result<Self> {
        if data.len() != n_features * labels.len() {
            return Err(Error::Dimension {
                expected: n_features * labels.len(),
                got: data.len(),
            });
        }
        Ok(Dataset {
            data,
            n_features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(|i| self.row(i))
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut data = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Dataset {
            data,
            n_features: self.n_features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub(crate) fn push(&mut self, row: &[f64], label: bool) {
        debug_assert_eq!(row.len(), self.n_features);
        self.data.extend_from_slice(row);
        self.labels.push(label);
    }

    pub fn require_both_classes(&self) -> Result<()> {
        if self.positives() == 0 || self.negatives() == 0 {
            return Err(Error::Insufficient(format!(
                "need both classes, got {} positive / {} negative",
                self.positives(),
                self.negatives()
            )));
        }
        Ok(())
    }
}
