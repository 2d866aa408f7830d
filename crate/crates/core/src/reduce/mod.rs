//! Subset-selection algorithms that pick a proxy set from a loss matrix.
//!
//! All algorithms break ties towards the lowest model index, so results are
//! fully determined by the inputs (and the seed, for the randomized ones).

mod cluster;
mod exact;
mod greedy;
mod kmeans;
mod random;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::LossMatrix;
use crate::error::{Error, Result};
use crate::util::fmt_float;

pub use cluster::{cluster_reduce, ClusterBasis};
pub use exact::{exact_max_coverage, exact_min_loss, ExactBudget};
pub use greedy::{greedy_const_min_loss, greedy_max_coverage, greedy_min_loss, ConstMinLoss};
pub use kmeans::{kmeans, KMeans, KMeansConfig, Metric};
pub use random::random_baseline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionMethod {
    GreedyMaxCoverage,
    ExactMaxCoverage,
    GreedyMinLoss,
    ExactMinLoss,
    ConstMinLoss,
    ClusterX,
    ClusterB,
    ClusterL,
    Random,
}

impl ReductionMethod {
    pub const ALL: [ReductionMethod; 9] = [
        ReductionMethod::GreedyMaxCoverage,
        ReductionMethod::ExactMaxCoverage,
        ReductionMethod::GreedyMinLoss,
        ReductionMethod::ExactMinLoss,
        ReductionMethod::ConstMinLoss,
        ReductionMethod::ClusterX,
        ReductionMethod::ClusterB,
        ReductionMethod::ClusterL,
        ReductionMethod::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReductionMethod::GreedyMaxCoverage => "greedy-max-coverage",
            ReductionMethod::ExactMaxCoverage => "exact-max-coverage",
            ReductionMethod::GreedyMinLoss => "greedy-min-loss",
            ReductionMethod::ExactMinLoss => "exact-min-loss",
            ReductionMethod::ConstMinLoss => "const-min-loss",
            ReductionMethod::ClusterX => "cluster-x",
            ReductionMethod::ClusterB => "cluster-b",
            ReductionMethod::ClusterL => "cluster-l",
            ReductionMethod::Random => "random",
        }
    }

    pub fn needs_epsilon(self) -> bool {
        matches!(
            self,
            ReductionMethod::GreedyMaxCoverage
                | ReductionMethod::ExactMaxCoverage
                | ReductionMethod::ConstMinLoss
        )
    }

    pub fn is_exact(self) -> bool {
        matches!(
            self,
            ReductionMethod::ExactMaxCoverage | ReductionMethod::ExactMinLoss
        )
    }
}

impl fmt::Display for ReductionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReductionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown reduction method '{s}'")))
    }
}

/// What a trace's `objective` column measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceObjective {
    Coverage,
    MeanMinLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub chosen: usize,
    /// Coverage after this step, when a loss threshold is known.
    pub coverage: Option<f64>,
    pub coverage_gain: Option<f64>,
    /// Mean over items of the smallest loss in the set after this step.
    pub loss: f64,
    /// `None` on the first step, where the loss of the empty set is unbounded.
    pub loss_decrease: Option<f64>,
}

/// Per-iteration record of a greedy reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionTrace {
    pub objective: TraceObjective,
    pub steps: Vec<TraceStep>,
}

impl ReductionTrace {
    pub(crate) fn build(
        loss: &LossMatrix,
        order: &[usize],
        epsilon: Option<f64>,
        objective: TraceObjective,
    ) -> Self {
        let n = loss.n_items();
        let mut best = vec![f64::INFINITY; n];
        let mut covered = vec![false; n];
        let mut n_covered = 0usize;
        let mut prev_loss: Option<f64> = None;
        let mut steps = Vec::with_capacity(order.len());
        for &i in order {
            let row = loss.row(i);
            let mut gained = 0usize;
            for j in 0..n {
                best[j] = best[j].min(row[j]);
                if let Some(eps) = epsilon {
                    if !covered[j] && row[j] <= eps {
                        covered[j] = true;
                        gained += 1;
                    }
                }
            }
            n_covered += gained;
            let mean = best.iter().sum::<f64>() / n as f64;
            steps.push(TraceStep {
                chosen: i,
                coverage: epsilon.map(|_| n_covered as f64 / n as f64),
                coverage_gain: epsilon.map(|_| gained as f64 / n as f64),
                loss: mean,
                loss_decrease: prev_loss.map(|p| p - mean),
            });
            prev_loss = Some(mean);
        }
        Self { objective, steps }
    }

    pub fn selected(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.chosen).collect()
    }

    /// Writes `iteration,chosen_index,coverage,objective` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "chosen_index", "coverage", "objective"])?;
        for (it, s) in self.steps.iter().enumerate() {
            let objective = match self.objective {
                TraceObjective::Coverage => s.coverage.unwrap_or(f64::NAN),
                TraceObjective::MeanMinLoss => s.loss,
            };
            w.write_record([
                it.to_string(),
                s.chosen.to_string(),
                s.coverage.map(fmt_float).unwrap_or_default(),
                fmt_float(objective),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn check_k(k: usize, m: usize) -> Result<()> {
    if k == 0 || k > m {
        return Err(Error::InvalidConfig(format!(
            "proxy count k = {k} must lie in 1..={m}"
        )));
    }
    Ok(())
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "loss threshold epsilon = {epsilon} must be positive and finite"
        )));
    }
    Ok(())
}

/// Fixed-width set of item indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ItemSet {
    words: Vec<u64>,
}

impl ItemSet {
    pub fn empty(n: usize) -> Self {
        Self {
            words: vec![0; n.div_ceil(64)],
        }
    }

    /// Items `j` with `row[j] <= epsilon`.
    pub fn below(row: &[f64], epsilon: f64) -> Self {
        let mut s = Self::empty(row.len());
        for (j, &v) in row.iter().enumerate() {
            if v <= epsilon {
                s.words[j / 64] |= 1 << (j % 64);
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Size of `self \ other`.
    pub fn gain_over(&self, other: &ItemSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & !b).count_ones() as usize)
            .sum()
    }

    pub fn union_with(&mut self, other: &ItemSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }
}

pub(crate) fn item_sets(loss: &LossMatrix, epsilon: f64) -> Vec<ItemSet> {
    (0..loss.n_models())
        .map(|i| ItemSet::below(loss.row(i), epsilon))
        .collect()
}
