use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::util::{derive_seed, rng, Rng};

use super::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means `max(1, M / 3)`.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            min_samples_leaf: 5,
            max_depth: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
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
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

struct Grower<'a> {
    data: &'a Dataset,
    mtry: usize,
    min_leaf: usize,
    max_depth: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let y = self.data.y();
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        self.nodes.len() - 1
    }

    /// Best (feature, threshold, left size) by squared-error reduction.
    fn best_split(&self, idx: &mut [usize], r: &mut Rng) -> Option<(usize, f64)> {
        let x = self.data.x();
        let y = self.data.y();
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| y[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for f in sample(r, x.cols(), self.mtry).into_iter() {
            idx.sort_unstable_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
            let mut left = 0.0;
            for s in 1..n {
                left += y[idx[s - 1]];
                let (lo, hi) = (x.get(idx[s - 1], f), x.get(idx[s], f));
                if s < self.min_leaf || n - s < self.min_leaf || lo == hi {
                    continue;
                }
                let right = total - left;
                let gain = left * left / s as f64 + right * right / (n - s) as f64 - parent;
                if gain > 1e-12 * parent.abs().max(1.0) && best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, 0.5 * (lo + hi)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, r: &mut Rng) -> usize {
        if idx.len() < 2 * self.min_leaf || depth >= self.max_depth {
            return self.leaf(idx);
        }
        let Some((feature, threshold)) = self.best_split(idx, r) else {
            return self.leaf(idx);
        };
        let x = self.data.x();
        idx.sort_unstable_by_key(|&i| x.get(i, feature) > threshold);
        let cut = idx.partition_point(|&i| x.get(i, feature) <= threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(0.0));
        let (l, rgt) = idx.split_at_mut(cut);
        let left = self.grow(l, depth + 1, r);
        let right = self.grow(rgt, depth + 1, r);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

/// Bagged regression trees (CART, squared error) averaged into one
/// predictor. For classification the leaf means are class-1 frequencies.
#[derive(Debug, Clone)]
pub struct ForestPredictor {
    trees: Vec<Tree>,
    task: Task,
    n_features: usize,
}

impl ForestPredictor {
    pub fn fit(data: &Dataset, config: &ForestConfig) -> Result<Self> {
        let m = data.n_features();
        let mtry = config.max_features.unwrap_or((m / 3).max(1));
        if config.n_trees == 0 || config.min_samples_leaf == 0 || mtry == 0 || mtry > m {
            return Err(Error::InvalidConfig(format!(
                "forest needs trees, a positive leaf size and 1..={m} split features"
            )));
        }
        let n = data.len();
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut r = rng(derive_seed(config.seed, &[t as u64]));
                let mut idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
                let mut g = Grower {
                    data,
                    mtry,
                    min_leaf: config.min_samples_leaf,
                    max_depth: config.max_depth,
                    nodes: Vec::new(),
                };
                g.grow(&mut idx, 0, &mut r);
                Tree { nodes: g.nodes }
            })
            .collect();
        Ok(Self {
            trees,
            task: data.task(),
            n_features: m,
        })
    }
}

impl Predictor for ForestPredictor {
    fn task(&self) -> Task {
        self.task
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_one(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}
