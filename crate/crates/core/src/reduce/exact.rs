//! Exact max-coverage and min-loss solvers by depth-first branch and bound.
//!
//! Subsets are enumerated in lexicographic order and the incumbent is only
//! replaced on strict improvement, so among optimal subsets the
//! lexicographically smallest one is returned.

use serde::{Deserialize, Serialize};

use crate::data::LossMatrix;
use crate::error::{Error, Result};
use crate::metrics::min_loss_sum;

use super::{check_epsilon, check_k, item_sets, ItemSet};

/// Size limits for the exact solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactBudget {
    pub max_models: usize,
    pub max_k: usize,
}

impl Default for ExactBudget {
    fn default() -> Self {
        Self {
            max_models: 120,
            max_k: 6,
        }
    }
}

impl ExactBudget {
    pub fn admits(&self, m: usize, k: usize) -> bool {
        k == m || (m <= self.max_models && k <= self.max_k)
    }

    fn check(&self, m: usize, k: usize) -> Result<()> {
        if self.admits(m, k) {
            Ok(())
        } else {
            Err(Error::BudgetExceeded {
                models: m,
                k,
                max_models: self.max_models,
                max_k: self.max_k,
            })
        }
    }
}

/// Cardinality-`k` subset with maximal coverage at threshold `epsilon`.
pub fn exact_max_coverage(
    loss: &LossMatrix,
    epsilon: f64,
    k: usize,
    budget: ExactBudget,
) -> Result<Vec<usize>> {
    let m = loss.n_models();
    check_k(k, m)?;
    check_epsilon(epsilon)?;
    budget.check(m, k)?;
    if k == m {
        return Ok((0..m).collect());
    }
    let mut search = CoverSearch {
        sets: item_sets(loss, epsilon),
        n_items: loss.n_items(),
        k,
        chosen: Vec::with_capacity(k),
        best: None,
        gains: Vec::with_capacity(m),
    };
    let root = ItemSet::empty(loss.n_items());
    search.descend(0, &root);
    Ok(search.best.expect("at least one subset is visited").1)
}

struct CoverSearch {
    sets: Vec<ItemSet>,
    n_items: usize,
    k: usize,
    chosen: Vec<usize>,
    best: Option<(usize, Vec<usize>)>,
    gains: Vec<usize>,
}

impl CoverSearch {
    fn best_count(&self) -> Option<usize> {
        self.best.as_ref().map(|b| b.0)
    }

    fn descend(&mut self, start: usize, covered: &ItemSet) {
        let depth = self.chosen.len();
        let count = covered.len();
        if depth == self.k {
            if self.best_count().is_none_or(|b| count > b) {
                self.best = Some((count, self.chosen.clone()));
            }
            return;
        }
        if self.best_count() == Some(self.n_items) {
            return;
        }
        let remaining = self.k - depth;
        let m = self.sets.len();
        if let Some(best) = self.best_count() {
            // coverage is submodular: the remaining picks add at most the sum
            // of their individual gains over the current cover
            self.gains.clear();
            self.gains
                .extend(self.sets[start..].iter().map(|s| s.gain_over(covered)));
            self.gains.sort_unstable_by(|a, b| b.cmp(a));
            let bound = count + self.gains.iter().take(remaining).sum::<usize>();
            if bound <= best {
                return;
            }
        }
        for i in start..=(m - remaining) {
            let mut next = covered.clone();
            next.union_with(&self.sets[i]);
            self.chosen.push(i);
            self.descend(i + 1, &next);
            self.chosen.pop();
            if self.best_count() == Some(self.n_items) {
                return;
            }
        }
    }
}

/// Cardinality-`k` subset minimising the mean over items of the smallest loss.
pub fn exact_min_loss(loss: &LossMatrix, k: usize, budget: ExactBudget) -> Result<Vec<usize>> {
    let m = loss.n_models();
    check_k(k, m)?;
    budget.check(m, k)?;
    if k == m {
        return Ok((0..m).collect());
    }
    // suffix_min[s][j] = min over models i >= s of L[i][j]
    let n = loss.n_items();
    let mut suffix_min = vec![vec![f64::INFINITY; n]; m + 1];
    for s in (0..m).rev() {
        for j in 0..n {
            suffix_min[s][j] = suffix_min[s + 1][j].min(loss.get(s, j));
        }
    }
    let mut search = LossSearch {
        loss,
        suffix_min,
        k,
        chosen: Vec::with_capacity(k),
        best: None,
        decreases: Vec::with_capacity(m),
    };
    let root = vec![f64::INFINITY; n];
    search.descend(0, &root);
    Ok(search.best.expect("at least one subset is visited").1)
}

struct LossSearch<'a> {
    loss: &'a LossMatrix,
    suffix_min: Vec<Vec<f64>>,
    k: usize,
    chosen: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    decreases: Vec<f64>,
}

/// Rounding slack applied before pruning; pruning only happens when the bound
/// exceeds the incumbent by more than accumulated rounding could explain.
const PRUNE_RTOL: f64 = 1e-9;

impl LossSearch<'_> {
    fn lower_bound(&mut self, start: usize, current: &[f64]) -> f64 {
        let remaining = self.k - self.chosen.len();
        // adding every remaining candidate can only lower the loss further
        let all: f64 = current
            .iter()
            .zip(&self.suffix_min[start])
            .map(|(&c, &s)| c.min(s))
            .sum();
        if self.chosen.is_empty() {
            return all;
        }
        // supermodularity: the joint decrease of the remaining picks is at
        // most the sum of their individual decreases
        let current_sum: f64 = current.iter().sum();
        self.decreases.clear();
        for i in start..self.loss.n_models() {
            let d: f64 = current
                .iter()
                .zip(self.loss.row(i))
                .map(|(&c, &v)| (c - v).max(0.0))
                .sum();
            self.decreases.push(d);
        }
        self.decreases.sort_unstable_by(|a, b| b.total_cmp(a));
        let marginal = current_sum - self.decreases.iter().take(remaining).sum::<f64>();
        all.max(marginal)
    }

    fn descend(&mut self, start: usize, current: &[f64]) {
        let depth = self.chosen.len();
        if depth == self.k {
            let value = min_loss_sum(self.loss, &self.chosen);
            if self.best.as_ref().is_none_or(|b| value < b.0) {
                self.best = Some((value, self.chosen.clone()));
            }
            return;
        }
        if let Some(best) = self.best.as_ref().map(|b| b.0) {
            if best == 0.0 {
                return;
            }
            let bound = self.lower_bound(start, current);
            if bound - PRUNE_RTOL * bound.abs() >= best {
                return;
            }
        }
        let remaining = self.k - depth;
        let m = self.loss.n_models();
        let mut next = vec![0.0; current.len()];
        for i in start..=(m - remaining) {
            for ((nx, &c), &v) in next.iter_mut().zip(current).zip(self.loss.row(i)) {
                *nx = c.min(v);
            }
            self.chosen.push(i);
            self.descend(i + 1, &next);
            self.chosen.pop();
        }
    }
}
