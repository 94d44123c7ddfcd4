//! Gradient boosted trees on logistic loss, built from scratch.
//!
//! Per round: fit a depth-bounded regression tree to the current gradients
//! and hessians with exact greedy splits over every feature, assign leaf
//! values by a regularized Newton step `-G / (H + lambda)`, and add the tree
//! scaled by the shrinkage factor. No sampling and no histogram
//! approximation, so training is fully deterministic.

use ndarray::ArrayView2;

use crate::{Error, Result};

use super::mlp::check_training_labels;
use super::Attacker;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GbtConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    /// L2 regularization on leaf values (the reference tool's default).
    pub lambda: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            rounds: 100,
            max_depth: 6,
            shrinkage: 0.3,
            lambda: 1.0,
        }
    }
}

impl GbtConfig {
    fn validate(&self) -> Result<()> {
        if self.rounds == 0 && self.max_depth == 0 {
            return Err(Error::InvalidConfig(
                "gbt rounds and max_depth cannot both be 0".into(),
            ));
        }
        if !(self.shrinkage > 0.0) {
            return Err(Error::InvalidConfig("gbt shrinkage must be > 0".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig("gbt lambda must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        value: f64,
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
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GbtClassifier {
    trees: Vec<Tree>,
    base_margin: f64,
    shrinkage: f64,
    n_features: usize,
}

impl GbtClassifier {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    fn margin(&self, row: &[f64]) -> f64 {
        self.base_margin
            + self.shrinkage
                * self
                    .trees
                    .iter()
                    .map(|t| t.predict_row(row))
                    .sum::<f64>()
    }
}

impl Attacker for GbtClassifier {
    fn predict_proba(&self, features: ArrayView2<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.n_features {
            return Err(Error::ShapeMismatch {
                expected: format!("{} features", self.n_features),
                got: format!("{}", features.ncols()),
            });
        }
        Ok(features
            .outer_iter()
            .map(|row| {
                let row: Vec<f64> = row.iter().copied().collect();
                sigmoid(self.margin(&row))
            })
            .collect())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct SplitChoice {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Exact greedy split search over all features of `samples`. Gains compare a
/// parent Newton objective against its children; ties keep the first
/// candidate in (feature, threshold) order.
fn best_split(
    x: ArrayView2<f64>,
    samples: &[usize],
    grads: &[f64],
    hess: &[f64],
    lambda: f64,
) -> Option<SplitChoice> {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    let g_total: f64 = samples.iter().map(|&i| grads[i]).sum();
    let h_total: f64 = samples.iter().map(|&i| hess[i]).sum();
    let parent = score(g_total, h_total);

    let mut best: Option<SplitChoice> = None;
    for feature in 0..x.ncols() {
        let mut order: Vec<usize> = samples.to_vec();
        order.sort_by(|&a, &b| x[[a, feature]].total_cmp(&x[[b, feature]]));
        let mut g_left = 0.0;
        let mut h_left = 0.0;
        for w in 0..order.len() - 1 {
            g_left += grads[order[w]];
            h_left += hess[order[w]];
            let v = x[[order[w], feature]];
            let v_next = x[[order[w + 1], feature]];
            if v == v_next {
                continue;
            }
            let gain =
                0.5 * (score(g_left, h_left) + score(g_total - g_left, h_total - h_left) - parent);
            if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                best = Some(SplitChoice {
                    gain,
                    feature,
                    threshold: 0.5 * (v + v_next),
                });
            }
        }
    }
    best
}

fn build_tree(
    x: ArrayView2<f64>,
    samples: Vec<usize>,
    grads: &[f64],
    hess: &[f64],
    cfg: &GbtConfig,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let leaf = |nodes: &mut Vec<Node>| {
        let g: f64 = samples.iter().map(|&i| grads[i]).sum();
        let h: f64 = samples.iter().map(|&i| hess[i]).sum();
        nodes.push(Node::Leaf {
            value: -g / (h + cfg.lambda),
        });
        nodes.len() - 1
    };
    if depth >= cfg.max_depth || samples.len() < 2 {
        return leaf(nodes);
    }
    let Some(split) = best_split(x, &samples, grads, hess, cfg.lambda) else {
        return leaf(nodes);
    };
    let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
        .iter()
        .partition(|&&i| x[[i, split.feature]] < split.threshold);
    debug_assert!(!left_samples.is_empty() && !right_samples.is_empty());

    let idx = nodes.len();
    nodes.push(Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: 0,
        right: 0,
    });
    let left = build_tree(x, left_samples, grads, hess, cfg, depth + 1, nodes);
    let right = build_tree(x, right_samples, grads, hess, cfg, depth + 1, nodes);
    if let Node::Split {
        left: l, right: r, ..
    } = &mut nodes[idx]
    {
        *l = left;
        *r = right;
    }
    idx
}

/// Train the boosted-tree attacker. The initial margin is the log-odds of
/// the training labels, so a zero-round model predicts the class prior.
pub fn train_gbt_attacker(
    x: ArrayView2<f64>,
    y: &[u8],
    cfg: &GbtConfig,
) -> Result<GbtClassifier> {
    cfg.validate()?;
    check_training_labels(x, y)?;
    let n = x.nrows();
    let pos = y.iter().filter(|l| **l == 1).count() as f64;
    let prior = pos / n as f64;
    let base_margin = (prior / (1.0 - prior)).ln();

    let mut margins = vec![base_margin; n];
    let mut trees = Vec::with_capacity(cfg.rounds);
    let mut grads = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..cfg.rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grads[i] = p - y[i] as f64;
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let mut nodes = Vec::new();
        build_tree(x, (0..n).collect(), &grads, &hess, cfg, 0, &mut nodes);
        let tree = Tree { nodes };
        for i in 0..n {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            margins[i] += cfg.shrinkage * tree.predict_row(&row);
        }
        trees.push(tree);
    }
    Ok(GbtClassifier {
        trees,
        base_margin,
        shrinkage: cfg.shrinkage,
        n_features: x.ncols(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn single_stump_splits_separable_data() {
        let x = array![[0.0], [0.1], [1.0], [1.1]];
        let y = [0u8, 0, 1, 1];
        let cfg = GbtConfig {
            rounds: 1,
            max_depth: 1,
            ..GbtConfig::default()
        };
        let clf = train_gbt_attacker(x.view(), &y, &cfg).unwrap();
        // The stump must split between 0.1 and 1.0.
        match &clf.trees[0].nodes[0] {
            Node::Split { threshold, .. } => {
                assert!((*threshold - 0.55).abs() < 1e-12, "threshold {threshold}")
            }
            other => panic!("expected a split at the root, got {other:?}"),
        }
        let probs = clf.predict_proba(x.view()).unwrap();
        let correct = probs
            .iter()
            .zip(&y)
            .filter(|(p, l)| (**p >= 0.5) == (**l == 1))
            .count();
        assert_eq!(correct, 4);
    }

    #[test]
    fn constant_features_predict_the_prior() {
        let x = Array2::from_elem((6, 3), 1.25);
        let y = [0u8, 0, 1, 1, 1, 1];
        let clf = train_gbt_attacker(x.view(), &y, &GbtConfig::default()).unwrap();
        let probs = clf.predict_proba(x.view()).unwrap();
        let prior = 4.0 / 6.0;
        for p in probs {
            assert!((p - prior).abs() < 1e-12, "{p} vs {prior}");
        }
    }

    #[test]
    fn zero_rounds_is_the_prior_logit() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [0u8, 0, 1, 1];
        let cfg = GbtConfig {
            rounds: 0,
            ..GbtConfig::default()
        };
        let clf = train_gbt_attacker(x.view(), &y, &cfg).unwrap();
        let probs = clf.predict_proba(x.view()).unwrap();
        assert!(probs.iter().all(|p| (*p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn xor_needs_depth_two() {
        // Four axis-aligned clusters in XOR arrangement.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut rng = crate::rng::rng_from_seed(5);
        use rand::Rng;
        for _ in 0..100 {
            let a = rng.gen_range(0..2);
            let b = rng.gen_range(0..2);
            let mut jitter = || rng.gen_range(-0.05..0.05f64);
            rows.push([a as f64 + jitter(), b as f64 + jitter()]);
            y.push((a ^ b) as u8);
        }
        let x = Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j]);
        let cfg = GbtConfig {
            rounds: 50,
            max_depth: 2,
            ..GbtConfig::default()
        };
        let clf = train_gbt_attacker(x.view(), &y, &cfg).unwrap();
        let probs = clf.predict_proba(x.view()).unwrap();
        let correct = probs
            .iter()
            .zip(&y)
            .filter(|(p, l)| (**p >= 0.5) == (**l == 1))
            .count();
        assert!(
            correct as f64 / y.len() as f64 >= 0.95,
            "XOR training accuracy {correct}/{}",
            y.len()
        );
    }

    #[test]
    fn deterministic_and_width_checked() {
        let x = array![[0.0, 2.0], [0.5, 1.0], [1.0, 0.0], [1.5, 3.0]];
        let y = [0u8, 0, 1, 1];
        let a = train_gbt_attacker(x.view(), &y, &GbtConfig::default()).unwrap();
        let b = train_gbt_attacker(x.view(), &y, &GbtConfig::default()).unwrap();
        assert_eq!(
            a.predict_proba(x.view()).unwrap(),
            b.predict_proba(x.view()).unwrap()
        );
        let wrong = Array2::zeros((1, 5));
        assert!(a.predict_proba(wrong.view()).is_err());
    }
}
