//! Random forest of Gini-impurity decision trees.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means `floor(sqrt(K))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
    /// Restrict split candidates to these feature indices. Used to audit
    /// that extra features cannot change a model.
    #[serde(skip)]
    pub candidate_features: Option<Vec<usize>>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            max_depth: 20,
            min_samples_split: 6,
            min_samples_leaf: 2,
            max_features: None,
            bootstrap: true,
            seed: 0,
            candidate_features: None,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::invalid("forest parameters", "need at least one tree"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("forest parameters", "min_samples_leaf must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        /// Fraction of positive training rows.
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes in preorder; the root is node 0. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Depth of the deepest leaf (a lone root leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { value, samples } => Some((*value, *samples)),
            TreeNode::Split { .. } => None,
        })
    }

    pub fn is_stump(&self) -> bool {
        self.nodes.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub n_features: usize,
    pub params: ForestParams,
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    /// Fit `params.trees` trees, each on its own bootstrap sample and stream.
    pub fn train(data: &Dataset, params: &ForestParams) -> Result<Self> {
        params.validate()?;
        data.require_both_classes()?;
        let k = data.n_features();
        let pool: Vec<usize> = match &params.candidate_features {
            Some(c) => {
                if let Some(&bad) = c.iter().find(|&&f| f >= k) {
                    return Err(Error::invalid("forest parameters", format!("feature {bad} >= {k}")));
                }
                c.clone()
            }
            None => (0..k).collect(),
        };
        let max_features = params
            .max_features
            .unwrap_or_else(|| (pool.len() as f64).sqrt().floor() as usize)
            .clamp(1.min(pool.len()), pool.len());

        let tree_seed = seed::derive(params.seed, seed::STREAM_TREE);
        let trees: Vec<DecisionTree> = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(tree_seed, t as u64);
                let n = data.len();
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut b = Builder {
                    data,
                    params,
                    pool: &pool,
                    max_features,
                    rng,
                    nodes: Vec::new(),
                };
                b.grow(rows, 0);
                DecisionTree { nodes: b.nodes }
            })
            .collect();
        let stumps = trees.iter().filter(|t| t.is_stump()).count();
        if stumps == trees.len() {
            log::warn!("every tree is a single leaf; predictions are class priors");
        }
        Ok(ForestModel {
            format_version: FOREST_FORMAT_VERSION,
            n_features: k,
            params: params.clone(),
            trees,
        })
    }

    /// Mean over trees of the leaf positive fraction.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: row.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.rows().map(|r| self.predict_proba(r)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ForestModel = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if m.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

struct Builder<'a, R> {
    data: &'a Dataset,
    params: &'a ForestParams,
    pool: &'a [usize],
    max_features: usize,
    rng: R,
    nodes: Vec<TreeNode>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let labels = self.data.labels();
        let n = rows.len();
        let pos = rows.iter().filter(|&&i| labels[i]).count();
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            value: if n == 0 { 0.0 } else { pos as f64 / n as f64 },
            samples: n,
        });

        let pure = pos == 0 || pos == n;
        if pure || depth >= self.params.max_depth || n < self.params.min_samples_split {
            return id;
        }
        let Some(split) = self.best_split(&rows, pos) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.data.row(i)[split.feature] <= split.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    /// Best Gini gain over a random feature subset. Ties keep the lowest
    /// feature index, then the lowest threshold.
    fn best_split(&mut self, rows: &[usize], pos: usize) -> Option<Split> {
        let labels = self.data.labels();
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        let parent = gini(pos, n);

        let mut features: Vec<usize> = sample(&mut self.rng, self.pool.len(), self.max_features)
            .into_iter()
            .map(|i| self.pool[i])
            .collect();
        features.sort_unstable();

        let mut best: Option<Split> = None;
        let mut column: Vec<(f64, bool)> = Vec::with_capacity(n);
        for f in features {
            column.clear();
            column.extend(rows.iter().map(|&i| (self.data.row(i)[f], labels[i])));
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for i in 0..n - 1 {
                left_pos += column[i].1 as usize;
                let (a, b) = (column[i].0, column[i + 1].0);
                if a == b {
                    continue;
                }
                let nl = i + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let child = (nl as f64 * gini(left_pos, nl) + nr as f64 * gini(pos - left_pos, nr)) / n as f64;
                let gain = parent - child;
                if gain > 1e-12 && best.as_ref().is_none_or(|s| gain > s.gain) {
                    let mid = a + (b - a) / 2.0;
                    best = Some(Split {
                        feature: f,
                        threshold: if mid < b { mid } else { a },
                        gain,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let c = if pos { 3.0 } else { -3.0 };
            rows.push(vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng), noise.sample(&mut rng)]);
            labels.push(pos);
        }
        Dataset::new(rows, labels).unwrap()
    }

    #[test]
    fn separable_blobs_are_fit_exactly() {
        let ds = blobs(40, 1);
        let m = ForestModel::train(&ds, &ForestParams::default()).unwrap();
        let acc = ds
            .rows()
            .zip(ds.labels())
            .filter(|(r, &l)| (m.predict_proba(r).unwrap() >= 0.5) == l)
            .count();
        assert_eq!(acc, 40);
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let ds = Dataset::new(
            (0..10).map(|i| vec![i as f64]).collect(),
            (0..10).map(|i| i >= 5).collect(),
        )
        .unwrap();
        let p = ForestParams {
            trees: 1,
            bootstrap: false,
            ..Default::default()
        };
        let m = ForestModel::train(&ds, &p).unwrap();
        let t = &m.trees[0];
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.leaves().map(|l| l.0).collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert!(matches!(t.nodes[0], TreeNode::Split { threshold, .. } if threshold == 4.5));
    }

    #[test]
    fn depth_zero_predicts_the_prior() {
        let ds = blobs(30, 2);
        let p = ForestParams {
            max_depth: 0,
            bootstrap: false,
            trees: 5,
            ..Default::default()
        };
        let m = ForestModel::train(&ds, &p).unwrap();
        let prior = ds.positives() as f64 / ds.len() as f64;
        for r in ds.rows() {
            assert_eq!(m.predict_proba(r).unwrap(), prior);
        }
        // With bootstrap, every tree is still one leaf.
        let m = ForestModel::train(&ds, &ForestParams { bootstrap: true, ..p }).unwrap();
        assert!(m.trees.iter().all(DecisionTree::is_stump));
    }

    #[test]
    fn constant_features_degenerate() {
        let ds = Dataset::new(vec![vec![1.0, 2.0]; 12], (0..12).map(|i| i % 3 == 0).collect()).unwrap();
        let m = ForestModel::train(&ds, &ForestParams::default()).unwrap();
        assert!(m.trees.iter().all(DecisionTree::is_stump));
    }

    #[test]
    fn vote_averaging() {
        let leaf = |v| DecisionTree {
            nodes: vec![TreeNode::Leaf { value: v, samples: 1 }],
        };
        let mut m = ForestModel {
            format_version: 1,
            n_features: 1,
            params: ForestParams::default(),
            trees: vec![leaf(1.0), leaf(1.0)],
        };
        assert_eq!(m.predict_proba(&[0.0]).unwrap(), 1.0);
        m.trees = vec![leaf(1.0), leaf(0.0)];
        assert_eq!(m.predict_proba(&[0.0]).unwrap(), 0.5);
        m.trees = vec![leaf(0.3)];
        assert_eq!(m.predict_proba(&[0.0]).unwrap(), 0.3);
        assert!(m.predict_proba(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn structural_constraints_hold() {
        let ds = blobs(200, 3);
        let p = ForestParams {
            trees: 20,
            max_depth: 4,
            min_samples_leaf: 3,
            ..Default::default()
        };
        let m = ForestModel::train(&ds, &p).unwrap();
        for t in &m.trees {
            assert!(t.depth() <= 4);
            assert!(t.leaves().all(|(_, n)| n >= 3));
        }
    }

    #[test]
    fn deterministic_and_serializable() {
        let ds = blobs(60, 4);
        let p = ForestParams {
            seed: 9,
            ..Default::default()
        };
        let a = ForestModel::train(&ds, &p).unwrap();
        let b = ForestModel::train(&ds, &p).unwrap();
        assert_eq!(a, b);
        let c = ForestModel::from_json(&a.to_json()).unwrap();
        assert_eq!(a.predict_dataset(&ds).unwrap(), c.predict_dataset(&ds).unwrap());
    }

    #[test]
    fn extra_constant_feature_is_inert() {
        let ds = blobs(80, 5);
        let mut rows: Vec<Vec<f64>> = ds.rows().map(|r| r.to_vec()).collect();
        rows.iter_mut().for_each(|r| r.push(42.0));
        let wide = Dataset::new(rows, ds.labels().to_vec()).unwrap();
        let p = ForestParams {
            seed: 3,
            candidate_features: Some(vec![0, 1, 2]),
            ..Default::default()
        };
        let a = ForestModel::train(&ds, &p).unwrap();
        let b = ForestModel::train(&wide, &p).unwrap();
        for (r, w) in ds.rows().zip(wide.rows()) {
            assert_eq!(a.predict_proba(r).unwrap(), b.predict_proba(w).unwrap());
        }
    }
}
