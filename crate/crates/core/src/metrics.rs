//! Coverage, fidelity, instability and helpers for choosing the loss threshold.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LocalModelSet, LossKind, LossMatrix};
use crate::error::{Error, Result};
use crate::matrix::sq_dist;
use crate::procedure::{map_new_item, ItemModelMap};

/// Default neighbourhood size for [`instability`].
pub const DEFAULT_KAPPA: usize = 5;
/// Default minimum coverage for the coverage-constrained reduction.
pub const DEFAULT_MIN_COVERAGE: f64 = 0.8;
/// Default percentile of the closed-box training losses used as loss threshold.
pub const DEFAULT_EPSILON_PERCENTILE: f64 = 0.2;

/// Number of items whose best loss over `subset` is at most `epsilon`.
pub fn covered_count(loss: &LossMatrix, subset: &[usize], epsilon: f64) -> usize {
    (0..loss.n_items())
        .filter(|&j| subset.iter().any(|&i| loss.get(i, j) <= epsilon))
        .count()
}

/// Fraction of items explained within `epsilon` by at least one model of `subset`.
pub fn coverage(loss: &LossMatrix, subset: &[usize], epsilon: f64) -> f64 {
    covered_count(loss, subset, epsilon) as f64 / loss.n_items() as f64
}

/// Sum over items (in item order) of the smallest loss within `subset`.
///
/// Every solver reports objective values through this function so that values
/// for the same subset are bit-identical regardless of the algorithm.
pub fn min_loss_sum(loss: &LossMatrix, subset: &[usize]) -> f64 {
    (0..loss.n_items())
        .map(|j| {
            subset
                .iter()
                .map(|&i| loss.get(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Mean over items of the smallest loss within `subset`.
pub fn mean_min_loss(loss: &LossMatrix, subset: &[usize]) -> f64 {
    min_loss_sum(loss, subset) / loss.n_items() as f64
}

/// Mean loss of the model assigned to each item against that item's label.
pub fn fidelity(
    data: &Dataset,
    models: &LocalModelSet,
    model_per_item: &[usize],
    loss_kind: LossKind,
) -> Result<f64> {
    check_assignment(data, models, model_per_item)?;
    let total: f64 = model_per_item
        .iter()
        .enumerate()
        .map(|(j, &g)| loss_kind.eval(models.predict(g, data.x().row(j)), data.y()[j]))
        .sum();
    Ok(total / data.len() as f64)
}

/// Fidelity on unseen items: each item takes the proxy of its nearest
/// training item (p-norm distance in feature space).
pub fn test_fidelity(
    test: &Dataset,
    train: &Dataset,
    models: &LocalModelSet,
    proxies: &[usize],
    map: &ItemModelMap,
    p_norm: f64,
    loss_kind: LossKind,
) -> Result<f64> {
    let mut assigned = Vec::with_capacity(test.len());
    for j in 0..test.len() {
        let pos = map_new_item(test.x().row(j), train, map, p_norm)?;
        assigned.push(proxies[pos]);
    }
    fidelity(test, models, &assigned, loss_kind)
}

/// Mean loss of each item's model on the item's `kappa` nearest neighbours
/// (Euclidean, self excluded, lowest index first on distance ties).
pub fn instability(
    data: &Dataset,
    models: &LocalModelSet,
    model_per_item: &[usize],
    kappa: usize,
    loss_kind: LossKind,
) -> Result<f64> {
    check_assignment(data, models, model_per_item)?;
    let n = data.len();
    if kappa == 0 || n <= kappa {
        return Err(Error::InvalidInput(format!(
            "instability needs more than kappa = {kappa} items, got {n}"
        )));
    }
    let x = data.x();
    let mut total = 0.0;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(x.row(i), x.row(j)), j)),
        );
        order.select_nth_unstable_by(kappa - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let g = model_per_item[i];
        let local: f64 = order[..kappa]
            .iter()
            .map(|&(_, j)| loss_kind.eval(models.predict(g, x.row(j)), data.y()[j]))
            .sum();
        total += local / kappa as f64;
    }
    Ok(total / n as f64)
}

fn check_assignment(
    data: &Dataset,
    models: &LocalModelSet,
    model_per_item: &[usize],
) -> Result<()> {
    if model_per_item.len() != data.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} assignments for {} items",
            model_per_item.len(),
            data.len()
        )));
    }
    if models.n_features() != data.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "models expect {} features, data has {}",
            models.n_features(),
            data.n_features()
        )));
    }
    if let Some(&bad) = model_per_item.iter().find(|&&g| g >= models.len()) {
        return Err(Error::InvalidInput(format!(
            "model index {bad} out of range"
        )));
    }
    Ok(())
}

/// Nearest-rank (lower) percentile: the sorted value at index `ceil(p * n) - 1`.
pub fn epsilon_from_quantile(losses: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "percentile {p} must lie in (0, 1)"
        )));
    }
    if losses.is_empty() {
        return Err(Error::InvalidInput(
            "no losses to take a percentile of".into(),
        ));
    }
    if losses.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(
            "losses must be finite and non-negative".into(),
        ));
    }
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let eps = sorted[rank - 1];
    if eps <= 0.0 {
        return Err(Error::Infeasible(format!(
            "the {p} percentile of the losses is zero; supply epsilon directly"
        )));
    }
    Ok(eps)
}

/// Quantile over every entry of the loss matrix.
pub fn epsilon_from_loss_matrix(loss: &LossMatrix, p: f64) -> Result<f64> {
    epsilon_from_quantile(loss.values().as_slice(), p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Greedy value divided by the exact optimum.
///
/// Coverage ratios are at most one, loss ratios at least one. Undefined (`None`)
/// when the exact value is zero.
pub fn approximation_ratio(greedy: f64, exact: f64, sense: Sense) -> Option<f64> {
    if exact == 0.0 {
        return match sense {
            // both solvers cover nothing: identical quality
            Sense::Maximize if greedy == 0.0 => Some(1.0),
            _ => None,
        };
    }
    Some(greedy / exact)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coverage: Option<f64>,
    pub train_fidelity: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test_fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub instability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
    pub kappa: usize,
}

impl MetricReport {
    pub const CSV_HEADER: [&'static str; 6] = [
        "coverage",
        "train_fidelity",
        "test_fidelity",
        "instability",
        "epsilon",
        "kappa",
    ];

    /// Flat CSV cells matching [`Self::CSV_HEADER`]; absent values are empty.
    pub fn csv_cells(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(crate::util::fmt_float).unwrap_or_default();
        vec![
            opt(self.coverage),
            crate::util::fmt_float(self.train_fidelity),
            opt(self.test_fidelity),
            opt(self.instability),
            opt(self.epsilon),
            self.kappa.to_string(),
        ]
    }
}
