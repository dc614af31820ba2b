//! Bagged CART regression forests.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Fraction of features searched at each node (at least one).
    pub feature_frac: f64,
    /// Fit each tree on a with-replacement resample of the rows.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            min_leaf: 5,
            feature_frac: 1.0 / 3.0,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 {
            return Err(Error::invalid("n_trees and min_leaf must be positive"));
        }
        if !(self.feature_frac > 0.0 && self.feature_frac <= 1.0) {
            return Err(Error::invalid("feature_frac must be in (0, 1]"));
        }
        Ok(())
    }

    fn features_per_node(&self, dim: usize) -> usize {
        ((self.feature_frac * dim as f64).round() as usize).clamp(1, dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary regression tree; leaves hold the mean training target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

struct Grower<'a> {
    data: &'a Dataset,
    cfg: &'a ForestConfig,
    mtry: usize,
    rng: RngStream,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [usize]) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&r| self.data.y[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        if rows.len() < 2 * self.cfg.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows) else {
            return id;
        };
        let x = &self.data.x;
        let mut split = 0;
        for i in 0..rows.len() {
            if x.get(rows[i], feature) <= threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Variance-minimising split over a random subset of features, keeping
    /// at least `min_leaf` rows on each side.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let dim = self.data.dim();
        let mut features: Vec<usize> = (0..dim).collect();
        for i in 0..self.mtry {
            let j = i + self.rng.below(dim - i);
            features.swap(i, j);
        }
        let n = rows.len();
        let min_leaf = self.cfg.min_leaf;
        let total: f64 = rows.iter().map(|&r| self.data.y[r]).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &f in &features[..self.mtry] {
            order.clear();
            order.extend(rows.iter().map(|&r| (self.data.x.get(r, f), self.data.y[r])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let mut left_sum = 0.0;
            for i in 1..n {
                left_sum += order[i - 1].1;
                if i < min_leaf || n - i < min_leaf || order[i - 1].0 == order[i].0 {
                    continue;
                }
                // Maximising this is equivalent to minimising the summed SSE.
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64;
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, f, 0.5 * (order[i - 1].0 + order[i].0)));
                }
            }
        }
        let parent = total * total / n as f64;
        best.filter(|&(s, _, _)| s > parent * (1.0 + 1e-12) + 1e-12)
            .map(|(_, f, t)| (f, t))
    }
}

/// Fits one tree on the rows listed in `rows` (duplicates allowed).
fn fit_tree(data: &Dataset, cfg: &ForestConfig, rows: &mut [usize], rng: RngStream) -> RegressionTree {
    let mut g = Grower {
        data,
        cfg,
        mtry: cfg.features_per_node(data.dim()),
        rng,
        nodes: Vec::new(),
    };
    g.grow(rows);
    RegressionTree { nodes: g.nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: ForestConfig,
    pub trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Rows sorted lexicographically by (features, target), so the forest does
/// not depend on the order rows arrive in.
fn canonical(data: &Dataset) -> Dataset {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| {
        data.x
            .row(a)
            .iter()
            .zip(data.x.row(b))
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(data.y[a].total_cmp(&data.y[b]))
    });
    data.select(&idx)
}

/// Tree `t` draws its resample and feature subsets from
/// `rng.derive("tree", t)`.
pub fn fit_forest(data: &Dataset, cfg: &ForestConfig, rng: &RngStream) -> Result<RandomForest> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::invalid("forest needs at least two rows"));
    }
    if data.len() < cfg.min_leaf {
        return Err(Error::invalid(format!(
            "{} rows cannot fill a leaf of {}",
            data.len(),
            cfg.min_leaf
        )));
    }
    let data = canonical(data);
    let n = data.len();
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut tree_rng = rng.derive("tree", t as u64);
            let mut rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| tree_rng.below(n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree(&data, cfg, &mut rows, tree_rng)
        })
        .collect();
    Ok(RandomForest { config: *cfg, trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat;

    fn line(n: usize, f: impl Fn(f64) -> f64) -> Dataset {
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        Dataset::new(Mat::from_vec(n, 1, xs).unwrap(), ys).unwrap()
    }

    #[test]
    fn constant_targets_predict_constant() {
        let d = line(50, |_| 3.25);
        let forest = fit_forest(&d, &ForestConfig::default(), &RngStream::new(1, 0)).unwrap();
        for x in [-2.0, 0.0, 0.7] {
            assert_eq!(forest.predict(&[x]), 3.25);
        }
    }

    #[test]
    fn stump_predicts_global_mean() {
        let d = line(40, |x| x * x);
        let cfg = ForestConfig {
            n_trees: 1,
            min_leaf: 40,
            bootstrap: false,
            ..ForestConfig::default()
        };
        let forest = fit_forest(&d, &cfg, &RngStream::new(1, 0)).unwrap();
        let mean = d.y.iter().sum::<f64>() / 40.0;
        assert!((forest.predict(&[0.3]) - mean).abs() < 1e-15);
        assert_eq!(forest.trees[0].n_leaves(), 1);
    }

    #[test]
    fn leaves_respect_min_leaf() {
        let d = line(200, |x| (5.0 * x).sin());
        let cfg = ForestConfig {
            n_trees: 1,
            min_leaf: 7,
            bootstrap: false,
            feature_frac: 1.0,
        };
        let f = fit_forest(&d, &cfg, &RngStream::new(2, 0)).unwrap();
        let mut counts = std::collections::HashMap::new();
        for r in d.x.iter_rows() {
            *counts.entry(f.trees[0].predict(r).to_bits()).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 7));
    }

    #[test]
    fn rejects_too_few_rows() {
        let d = line(1, |x| x);
        assert!(fit_forest(&d, &ForestConfig::default(), &RngStream::new(1, 0)).is_err());
    }
}
