//! The reduction procedure: pick a proxy set, then map every item to the
//! proxy that explains it best.

use serde::{Deserialize, Serialize};

use crate::data::{build_loss_matrix, Dataset, LocalModelSet, LossKind, LossMatrix};
use crate::error::{Error, Result};
use crate::metrics::coverage;
use crate::reduce::{
    self, cluster_reduce, ClusterBasis, ExactBudget, ReductionMethod, ReductionTrace,
};

fn default_p_norm() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub method: ReductionMethod,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_coverage: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_p_norm")]
    pub p_norm: f64,
}

impl ReductionConfig {
    pub fn new(method: ReductionMethod, k: usize) -> Self {
        Self {
            method,
            k,
            epsilon: None,
            min_coverage: None,
            seed: 0,
            p_norm: default_p_norm(),
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn with_min_coverage(mut self, c: f64) -> Self {
        self.min_coverage = Some(c);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n_models: usize) -> Result<()> {
        reduce::check_k(self.k, n_models)?;
        if let Some(eps) = self.epsilon {
            reduce::check_epsilon(eps)?;
        } else if self.method.needs_epsilon() {
            return Err(Error::InvalidConfig(format!(
                "method {} needs a loss threshold epsilon",
                self.method
            )));
        }
        if let Some(c) = self.min_coverage {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "minimum coverage {c} must lie in (0, 1]"
                )));
            }
        } else if self.method == ReductionMethod::ConstMinLoss {
            return Err(Error::InvalidConfig(
                "const-min-loss needs a minimum coverage".into(),
            ));
        }
        if !(self.p_norm.is_finite() && self.p_norm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "p-norm {} must be positive",
                self.p_norm
            )));
        }
        Ok(())
    }
}

/// Selected model indices with the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySet {
    #[serde(rename = "S")]
    pub indices: Vec<usize>,
    pub config: ReductionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_coverage: Option<f64>,
    pub constraint_met: bool,
}

impl ProxySet {
    pub fn validate(&self, n_models: usize) -> Result<()> {
        if self.indices.is_empty() || self.indices.len() > n_models {
            return Err(Error::InvalidInput(format!(
                "proxy set of size {} for {n_models} models",
                self.indices.len()
            )));
        }
        let mut seen = vec![false; n_models];
        for &i in &self.indices {
            if i >= n_models || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidInput(format!(
                    "proxy index {i} is out of range or repeated"
                )));
            }
        }
        Ok(())
    }
}

/// Item-to-proxy assignment; entries are positions in the proxy set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemModelMap {
    pub assignment: Vec<usize>,
}

impl ItemModelMap {
    /// Each item gets the proxy with the smallest loss on it; equal losses
    /// go to the lowest model index.
    pub fn from_losses(loss: &LossMatrix, proxies: &[usize]) -> Self {
        let assignment = (0..loss.n_items())
            .map(|j| {
                let mut best = 0;
                for (pos, &i) in proxies.iter().enumerate().skip(1) {
                    let (v, b) = (loss.get(i, j), loss.get(proxies[best], j));
                    if v < b || (v == b && i < proxies[best]) {
                        best = pos;
                    }
                }
                best
            })
            .collect();
        Self { assignment }
    }

    /// Model index (not position) assigned to each item.
    pub fn models(&self, proxies: &[usize]) -> Vec<usize> {
        self.assignment.iter().map(|&p| proxies[p]).collect()
    }
}

/// Everything the reduction algorithms may look at.
#[derive(Debug, Clone, Copy)]
pub struct ReductionInput<'a> {
    pub loss: &'a LossMatrix,
    pub models: &'a LocalModelSet,
    pub data: &'a Dataset,
}

/// Runs the configured reduction algorithm.
pub fn reduce(
    input: ReductionInput<'_>,
    config: &ReductionConfig,
    budget: ExactBudget,
) -> Result<(ProxySet, Option<ReductionTrace>)> {
    let m = input.loss.n_models();
    if input.models.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} models but {m} loss rows",
            input.models.len()
        )));
    }
    config.validate(m)?;
    let loss = input.loss;
    let k = config.k;
    let eps = config.epsilon;
    let need_eps = || eps.expect("validated");
    let mut constraint_met = None;
    let (indices, trace) = match config.method {
        ReductionMethod::GreedyMaxCoverage => {
            let (s, t) = reduce::greedy_max_coverage(loss, need_eps(), k)?;
            (s, Some(t))
        }
        ReductionMethod::ExactMaxCoverage => (
            reduce::exact_max_coverage(loss, need_eps(), k, budget)?,
            None,
        ),
        ReductionMethod::GreedyMinLoss => {
            let (s, t) = reduce::greedy_min_loss(loss, k)?;
            (s, Some(t))
        }
        ReductionMethod::ExactMinLoss => (reduce::exact_min_loss(loss, k, budget)?, None),
        ReductionMethod::ConstMinLoss => {
            let c = config.min_coverage.expect("validated");
            let r = reduce::greedy_const_min_loss(loss, need_eps(), c, k)?;
            constraint_met = Some(r.constraint_met);
            (r.selected, Some(r.trace))
        }
        ReductionMethod::ClusterX | ReductionMethod::ClusterB | ReductionMethod::ClusterL => {
            let basis = match config.method {
                ReductionMethod::ClusterX => ClusterBasis::X,
                ReductionMethod::ClusterB => ClusterBasis::B,
                _ => ClusterBasis::L,
            };
            let vectors = basis.vectors(input.models, loss, input.data)?;
            (
                cluster_reduce(&vectors, basis.metric(), k, config.seed)?,
                None,
            )
        }
        ReductionMethod::Random => (reduce::random_baseline(m, k, config.seed)?, None),
    };
    let achieved_coverage = eps.map(|e| coverage(loss, &indices, e));
    let constraint_met =
        constraint_met.unwrap_or_else(|| match (achieved_coverage, config.min_coverage) {
            (Some(a), Some(c)) => a >= c,
            _ => true,
        });
    let proxies = ProxySet {
        indices,
        config: config.clone(),
        achieved_coverage,
        constraint_met,
    };
    Ok((proxies, trace))
}

/// Outcome of [`explain_reduce`].
#[derive(Debug, Clone)]
pub struct Reduction {
    pub proxies: ProxySet,
    pub map: ItemModelMap,
    pub loss: LossMatrix,
    pub trace: Option<ReductionTrace>,
}

/// Builds the loss matrix of `models` on `data` (labels should already be the
/// closed-box predictions), reduces it, and maps every item to a proxy.
pub fn explain_reduce(
    data: &Dataset,
    models: &LocalModelSet,
    config: &ReductionConfig,
) -> Result<Reduction> {
    let loss = build_loss_matrix(models, data, LossKind::default_for(data.task()))?;
    explain_reduce_with_loss(data, models, loss, config, ExactBudget::default())
}

/// As [`explain_reduce`], for a precomputed loss matrix.
pub fn explain_reduce_with_loss(
    data: &Dataset,
    models: &LocalModelSet,
    loss: LossMatrix,
    config: &ReductionConfig,
    budget: ExactBudget,
) -> Result<Reduction> {
    if loss.n_items() != data.len() {
        return Err(Error::DimensionMismatch(format!(
            "loss matrix covers {} items, dataset has {}",
            loss.n_items(),
            data.len()
        )));
    }
    let (proxies, trace) = reduce(
        ReductionInput {
            loss: &loss,
            models,
            data,
        },
        config,
        budget,
    )?;
    let map = ItemModelMap::from_losses(&loss, &proxies.indices);
    Ok(Reduction {
        proxies,
        map,
        loss,
        trace,
    })
}

/// Proxy (position in the proxy set) for an unseen item: the proxy of the
/// training item nearest in p-norm, lowest item index on distance ties.
pub fn map_new_item(x: &[f64], data: &Dataset, map: &ItemModelMap, p_norm: f64) -> Result<usize> {
    if x.len() != data.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "item has {} features, training data {}",
            x.len(),
            data.n_features()
        )));
    }
    if map.assignment.len() != data.len() {
        return Err(Error::DimensionMismatch(format!(
            "map covers {} items, training data has {}",
            map.assignment.len(),
            data.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("new item".into()));
    }
    let distance = |row: &[f64]| -> f64 {
        if p_norm == 2.0 {
            crate::matrix::sq_dist(row, x)
        } else {
            row.iter()
                .zip(x)
                .map(|(a, b)| (a - b).abs().powf(p_norm))
                .sum()
        }
    };
    let mut best = (0, f64::INFINITY);
    for j in 0..data.len() {
        let d = distance(data.x().row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    Ok(map.assignment[best.0])
}
