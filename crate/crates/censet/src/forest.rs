//! A small random forest probability classifier: bootstrap sampling per
//! tree, Gini splits over a random feature subset at each node, leaf
//! probability equal to the class fraction.

use rand::Rng;
use rayon::prelude::*;

use crate::rng::{derive_seed, seeded_rng};

#[derive(Debug, Clone)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_split: usize,
    /// Smallest sample count allowed on either side of a split. Larger
    /// leaves keep the class fractions away from 0/1, which matters when
    /// the forest's probabilities are read back on its own training points.
    pub min_leaf: usize,
    /// Features tried per node; defaults to `max(1, floor(sqrt(p)))`.
    pub mtry: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 6,
            min_split: 2,
            min_leaf: 1,
            mtry: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        prob: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn prob(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { prob } => return *prob,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

/// Forest of probability trees; `prob(x)` averages the per-tree leaf
/// class fractions.
#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Tree>,
    n_features: usize,
}

impl RandomForest {
    /// Fit on rows `features` with binary `labels`. Deterministic given
    /// `seed`: each tree draws from its own derived RNG stream, so the
    /// result does not depend on thread scheduling.
    pub fn fit(features: &[Vec<f64>], labels: &[bool], config: &ForestConfig, seed: u64) -> Self {
        assert_eq!(features.len(), labels.len());
        assert!(!features.is_empty());
        let n_features = features[0].len();
        let trees: Vec<Tree> = (0..config.n_trees)
            .into_par_iter()
            .map(|k| build_tree(features, labels, config, derive_seed(seed, k as u64)))
            .collect();
        Self { trees, n_features }
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_features);
        let sum: f64 = self.trees.iter().map(|t| t.prob(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

fn build_tree(features: &[Vec<f64>], labels: &[bool], config: &ForestConfig, seed: u64) -> Tree {
    let mut rng = seeded_rng(seed);
    let n = features.len();
    let p = features[0].len();
    let mtry = config
        .mtry
        .unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1))
        .min(p);
    let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut tree = Tree { nodes: Vec::new() };
    grow(
        &mut tree,
        features,
        labels,
        indices,
        0,
        config,
        mtry,
        &mut rng,
    );
    tree
}

#[allow(clippy::too_many_arguments)]
fn grow(
    tree: &mut Tree,
    features: &[Vec<f64>],
    labels: &[bool],
    indices: Vec<usize>,
    depth: usize,
    config: &ForestConfig,
    mtry: usize,
    rng: &mut impl Rng,
) -> usize {
    let n = indices.len();
    let pos = indices.iter().filter(|&&i| labels[i]).count();
    let node_id = tree.nodes.len();
    let leaf = Node::Leaf {
        prob: pos as f64 / n as f64,
    };
    if depth >= config.max_depth || n < config.min_split || pos == 0 || pos == n {
        tree.nodes.push(leaf);
        return node_id;
    }
    let p = features[0].len();
    let candidates = rand::seq::index::sample(rng, p, mtry).into_vec();
    let mut best: Option<(f64, usize, f64)> = None; // (impurity, feature, threshold)
    for &feat in &candidates {
        let mut vals: Vec<(f64, bool)> = indices
            .iter()
            .map(|&i| (features[i][feat], labels[i]))
            .collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total_pos = pos as f64;
        let mut left_n = 0.0;
        let mut left_pos = 0.0;
        for k in 0..(n - 1) {
            left_n += 1.0;
            if vals[k].1 {
                left_pos += 1.0;
            }
            if vals[k].0 == vals[k + 1].0 {
                continue; // threshold must separate distinct values
            }
            if k + 1 < config.min_leaf || n - (k + 1) < config.min_leaf {
                continue;
            }
            let right_n = n as f64 - left_n;
            let right_pos = total_pos - left_pos;
            let gini = |cnt: f64, pos: f64| {
                let q = pos / cnt;
                2.0 * q * (1.0 - q)
            };
            let impurity = (left_n * gini(left_n, left_pos) + right_n * gini(right_n, right_pos))
                / n as f64;
            if best.map_or(true, |(b, _, _)| impurity < b - 1e-15) {
                best = Some((impurity, feat, 0.5 * (vals[k].0 + vals[k + 1].0)));
            }
        }
    }
    let parent_gini = {
        let q = pos as f64 / n as f64;
        2.0 * q * (1.0 - q)
    };
    match best {
        Some((impurity, feature, threshold)) if impurity < parent_gini - 1e-12 => {
            tree.nodes.push(Node::Leaf { prob: 0.0 }); // placeholder, patched below
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .into_iter()
                .partition(|&i| features[i][feature] <= threshold);
            let left = grow(tree, features, labels, left_idx, depth + 1, config, mtry, rng);
            let right = grow(
                tree, features, labels, right_idx, depth + 1, config, mtry, rng,
            );
            tree.nodes[node_id] = Node::Split {
                feature,
                threshold,
                left,
                right,
            };
            node_id
        }
        _ => {
            tree.nodes.push(leaf);
            node_id
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_points(n: usize, offset: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| vec![offset + i as f64 / n as f64, (i % 7) as f64 / 7.0])
            .collect()
    }

    #[test]
    fn separable_classes_are_learned() {
        let mut xs = grid_points(100, 0.0);
        xs.extend(grid_points(100, 2.0));
        let labels: Vec<bool> = (0..200).map(|i| i >= 100).collect();
        let forest = RandomForest::fit(&xs, &labels, &ForestConfig::default(), 3);
        assert!(forest.prob(&[0.2, 0.5]) < 0.2);
        assert!(forest.prob(&[2.5, 0.5]) > 0.8);
    }

    #[test]
    fn fit_is_deterministic_given_seed() {
        let mut xs = grid_points(60, 0.0);
        xs.extend(grid_points(60, 0.4));
        let labels: Vec<bool> = (0..120).map(|i| i >= 60).collect();
        let cfg = ForestConfig::default();
        let f1 = RandomForest::fit(&xs, &labels, &cfg, 11);
        let f2 = RandomForest::fit(&xs, &labels, &cfg, 11);
        for q in &xs {
            assert_eq!(f1.prob(q), f2.prob(q));
        }
    }

    #[test]
    fn pure_node_is_leaf() {
        let xs = vec![vec![0.0], vec![1.0], vec![2.0]];
        let labels = vec![true, true, true];
        let forest = RandomForest::fit(&xs, &labels, &ForestConfig::default(), 5);
        assert_eq!(forest.prob(&[0.5]), 1.0);
    }
}
