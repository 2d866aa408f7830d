//! Sweep harness: explain, reduce and evaluate over a grid of settings and
//! write one CSV row per (method, setting, repetition).
//!
//! Every repetition derives its own seeds from the master seed and its
//! coordinates, so the output is identical however the work is scheduled.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_loss_matrix, Dataset, LossKind, LossMatrix, Task};
use crate::error::{Error, Result};
use crate::explainers::{
    generate_explanations, ExplainerConfig, ExplainerMethod, ForestConfig, ForestPredictor,
    KnnPredictor, Predictor,
};
use crate::metrics::{
    self, approximation_ratio, epsilon_from_loss_matrix, epsilon_from_quantile, MetricReport, Sense,
};
use crate::procedure::{reduce, ItemModelMap, ReductionConfig, ReductionInput};
use crate::reduce::{exact_max_coverage, exact_min_loss, ExactBudget, ReductionMethod};
use crate::synth::{generate_synthetic, OraclePredictor, SyntheticGroundTruth, SyntheticSpec};
use crate::util::{derive_seed, fmt_float, rng};
use crate::LocalModelSet;

/// Schema tag written as the first line of every sweep CSV.
pub const SWEEP_SCHEMA: &str = "# explain-reduce sweep v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum DataSource {
    /// Fresh synthetic data per repetition (the generator seed is mixed with the
    /// repetition index).
    Synthetic(SyntheticSpec),
    /// A CSV file; `truth` enables the oracle predictor.
    Csv {
        path: PathBuf,
        #[serde(default = "default_target")]
        target: String,
        #[serde(default)]
        task: Task,
        #[serde(default)]
        truth: Option<PathBuf>,
    },
}

fn default_target() -> String {
    crate::io::DEFAULT_TARGET.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorChoice {
    /// Ground-truth piecewise-linear model (needs ground truth).
    Oracle,
    /// Kernel-weighted k-nearest-neighbours fitted on the training split.
    Knn { neighbours: usize },
    /// Random forest fitted on the training split.
    Forest(ForestConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonSource {
    /// Quantile of the closed-box training losses against the true labels.
    ClosedBox,
    /// Quantile over all entries of the loss matrix.
    LossMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    K,
    SubsampleN,
    /// Epsilon percentiles (axis values) crossed with `min_coverage_values`.
    EpsilonGrid,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::SubsampleN => "subsample_n",
            SweepAxis::EpsilonGrid => "epsilon_percentile",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub source: DataSource,
    pub predictor: PredictorChoice,
    pub explainer: ExplainerConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub min_coverage_values: Vec<f64>,
    pub methods: Vec<ReductionMethod>,
    /// Also report the unreduced explanation set as method `full`.
    pub include_full: bool,
    /// Solve the exact problems for the ratio columns when within budget.
    pub exact_reference: bool,
    pub repetitions: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub k: usize,
    pub subsample: usize,
    pub epsilon_percentile: f64,
    pub epsilon_source: EpsilonSource,
    pub min_coverage: f64,
    pub kappa: usize,
    pub p_norm: f64,
    pub budget: ExactBudget,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic(SyntheticSpec::default()),
            predictor: PredictorChoice::Forest(ForestConfig::default()),
            explainer: ExplainerConfig {
                method: ExplainerMethod::LimeLite,
                noise_sigma: 1.0,
                ..ExplainerConfig::default()
            },
            axis: SweepAxis::K,
            values: vec![1.0, 2.0, 3.0, 5.0, 10.0, 20.0],
            min_coverage_values: vec![metrics::DEFAULT_MIN_COVERAGE],
            methods: ReductionMethod::ALL.to_vec(),
            include_full: true,
            exact_reference: true,
            repetitions: 5,
            train_fraction: 0.7,
            seed: 0,
            k: 5,
            subsample: 500,
            epsilon_percentile: metrics::DEFAULT_EPSILON_PERCENTILE,
            epsilon_source: EpsilonSource::ClosedBox,
            min_coverage: metrics::DEFAULT_MIN_COVERAGE,
            kappa: metrics::DEFAULT_KAPPA,
            p_norm: 2.0,
            budget: ExactBudget::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.values.is_empty() {
            return bad("sweep needs at least one axis value".into());
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("axis values must be strictly increasing".into());
        }
        if self.repetitions == 0 {
            return bad("need at least one repetition".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train fraction {} must lie in (0, 1)",
                self.train_fraction
            ));
        }
        match self.axis {
            SweepAxis::K | SweepAxis::SubsampleN => {
                if self.values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                    return bad(format!(
                        "{} values must be positive integers",
                        self.axis.name()
                    ));
                }
            }
            SweepAxis::EpsilonGrid => {
                if self.values.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                    return bad("epsilon percentiles must lie in (0, 1)".into());
                }
                if self.min_coverage_values.is_empty()
                    || self
                        .min_coverage_values
                        .iter()
                        .any(|&c| !(c > 0.0 && c <= 1.0))
                {
                    return bad("minimum coverage values must lie in (0, 1]".into());
                }
            }
        }
        if self.k == 0 || self.subsample == 0 {
            return bad("k and subsample must be positive".into());
        }
        if !(self.min_coverage > 0.0 && self.min_coverage <= 1.0) {
            return bad(format!(
                "minimum coverage {} must lie in (0, 1]",
                self.min_coverage
            ));
        }
        if !(self.epsilon_percentile > 0.0 && self.epsilon_percentile < 1.0) {
            return bad("epsilon percentile must lie in (0, 1)".into());
        }
        if self.predictor == PredictorChoice::Oracle {
            if let DataSource::Csv { truth: None, .. } = self.source {
                return bad("the oracle predictor needs a ground-truth file".into());
            }
        }
        self.explainer.validate()
    }

    /// Settings of every cell in output order.
    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (a, &v) in self.values.iter().enumerate() {
            match self.axis {
                SweepAxis::K => out.push(Cell {
                    index: a,
                    axis_value: v,
                    k: v as usize,
                    m: self.subsample,
                    percentile: self.epsilon_percentile,
                    min_coverage: self.min_coverage,
                }),
                SweepAxis::SubsampleN => out.push(Cell {
                    index: a,
                    axis_value: v,
                    k: self.k,
                    m: v as usize,
                    percentile: self.epsilon_percentile,
                    min_coverage: self.min_coverage,
                }),
                SweepAxis::EpsilonGrid => {
                    for &c in &self.min_coverage_values {
                        out.push(Cell {
                            index: out.len(),
                            axis_value: v,
                            k: self.k,
                            m: self.subsample,
                            percentile: v,
                            min_coverage: c,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    index: usize,
    axis_value: f64,
    k: usize,
    m: usize,
    percentile: f64,
    min_coverage: f64,
}

/// One line of the sweep output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub axis: String,
    pub axis_value: f64,
    pub repetition: usize,
    pub k: usize,
    pub m: usize,
    pub epsilon_percentile: f64,
    pub min_coverage: f64,
    pub n_proxies: Option<usize>,
    pub constraint_met: Option<bool>,
    pub metrics: Option<MetricReport>,
    pub exact_coverage: Option<f64>,
    pub exact_loss: Option<f64>,
    pub coverage_ratio: Option<f64>,
    pub loss_ratio: Option<f64>,
    pub status: String,
}

impl SweepRow {
    pub fn header() -> Vec<&'static str> {
        let mut h = vec![
            "method",
            "axis",
            "axis_value",
            "repetition",
            "k",
            "m",
            "epsilon_percentile",
            "min_coverage",
            "n_proxies",
            "constraint_met",
        ];
        h.extend(MetricReport::CSV_HEADER);
        h.extend([
            "exact_coverage",
            "exact_loss",
            "coverage_ratio",
            "loss_ratio",
            "status",
        ]);
        h
    }

    pub fn cells(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        let mut c = vec![
            self.method.clone(),
            self.axis.clone(),
            fmt_float(self.axis_value),
            self.repetition.to_string(),
            self.k.to_string(),
            self.m.to_string(),
            fmt_float(self.epsilon_percentile),
            fmt_float(self.min_coverage),
            self.n_proxies.map(|n| n.to_string()).unwrap_or_default(),
            self.constraint_met
                .map(|b| b.to_string())
                .unwrap_or_default(),
        ];
        match &self.metrics {
            Some(m) => c.extend(m.csv_cells()),
            None => c.extend(std::iter::repeat_n(
                String::new(),
                MetricReport::CSV_HEADER.len(),
            )),
        }
        c.extend([
            f(self.exact_coverage),
            f(self.exact_loss),
            f(self.coverage_ratio),
            f(self.loss_ratio),
            self.status.clone(),
        ]);
        c
    }
}

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(out, "{SWEEP_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SweepRow::header())?;
    for r in rows {
        w.write_record(r.cells())?;
    }
    w.flush()?;
    Ok(())
}

/// Data, split and closed box of one repetition.
pub struct RepetitionContext {
    /// Training split with true labels.
    pub train: Dataset,
    /// Training split with closed-box predictions as labels.
    pub train_hat: Dataset,
    /// Test split with closed-box predictions as labels.
    pub test_hat: Option<Dataset>,
    pub predictor: Box<dyn Predictor>,
    pub truth: Option<SyntheticGroundTruth>,
    /// Closed-box loss against the true label, per training item.
    pub closed_box_losses: Vec<f64>,
    pub loss_kind: LossKind,
    /// Ground-truth cluster of each test item, when known.
    pub test_clusters: Option<Vec<usize>>,
}

const DATA_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 1;
const EXPLAIN_STREAM: u64 = 2;
const REDUCE_STREAM: u64 = 3;
const FOREST_STREAM: u64 = 4;

/// Builds the data, split and predictor for repetition `rep`.
pub fn prepare_repetition(plan: &ExperimentPlan, rep: usize) -> Result<RepetitionContext> {
    let (data, truth) = match &plan.source {
        DataSource::Synthetic(spec) => {
            let spec = SyntheticSpec {
                seed: derive_seed(plan.seed, &[DATA_STREAM, spec.seed, rep as u64]),
                ..spec.clone()
            };
            let (d, t) = generate_synthetic(&spec)?;
            (d, Some(t))
        }
        DataSource::Csv {
            path,
            target,
            task,
            truth,
        } => {
            let d = crate::io::read_dataset_file(path, target, *task)?
                .ok_or_else(|| Error::InvalidInput(format!("{} has no rows", path.display())))?;
            let t = truth
                .as_ref()
                .map(|p| crate::io::read_json::<SyntheticGroundTruth>(p))
                .transpose()?;
            (d, t)
        }
    };
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    {
        use rand::seq::SliceRandom;
        let mut r = rng(derive_seed(plan.seed, &[SPLIT_STREAM, rep as u64]));
        order.shuffle(&mut r);
    }
    let n_train = ((plan.train_fraction * n as f64).round() as usize).clamp(1, n);
    let (train_idx, test_idx) = order.split_at(n_train);
    let train = data.subset(train_idx)?;
    let test = if test_idx.is_empty() {
        None
    } else {
        Some(data.subset(test_idx)?)
    };
    let test_clusters = match (&truth, test.is_some()) {
        (Some(t), true) if t.cluster_id.len() == n => {
            Some(test_idx.iter().map(|&i| t.cluster_id[i]).collect())
        }
        _ => None,
    };

    let predictor: Box<dyn Predictor> = match &plan.predictor {
        PredictorChoice::Oracle => {
            let t = truth.clone().ok_or_else(|| {
                Error::InvalidConfig("the oracle predictor needs ground truth".into())
            })?;
            Box::new(OraclePredictor::new(t)?)
        }
        PredictorChoice::Knn { neighbours } => Box::new(KnnPredictor::fit(&train, *neighbours)?),
        PredictorChoice::Forest(cfg) => {
            let cfg = ForestConfig {
                seed: derive_seed(cfg.seed, &[FOREST_STREAM, plan.seed, rep as u64]),
                ..cfg.clone()
            };
            Box::new(ForestPredictor::fit(&train, &cfg)?)
        }
    };
    let loss_kind = LossKind::default_for(data.task());
    let yhat_train = predictor.predict(train.x())?;
    let closed_box_losses = yhat_train
        .iter()
        .zip(train.y())
        .map(|(&p, &y)| loss_kind.eval(p, y))
        .collect();
    let train_hat = train.with_labels(yhat_train)?;
    let test_hat = test
        .map(|t| {
            let yhat = predictor.predict(t.x())?;
            t.with_labels(yhat)
        })
        .transpose()?;
    Ok(RepetitionContext {
        train,
        train_hat,
        test_hat,
        predictor,
        truth,
        closed_box_losses,
        loss_kind,
        test_clusters,
    })
}

/// Explanations fitted at `m` training anchors, restricted to those anchors.
pub struct ExplainedSubsample {
    /// Models with anchors re-indexed into `items`.
    pub models: LocalModelSet,
    /// Anchor items with closed-box labels.
    pub items: Dataset,
    /// Anchor items with true labels.
    pub items_true: Dataset,
    pub loss: LossMatrix,
}

pub fn explain_subsample(
    plan: &ExperimentPlan,
    ctx: &RepetitionContext,
    rep: usize,
    m: usize,
) -> Result<ExplainedSubsample> {
    let m = m.min(ctx.train_hat.len());
    let cfg = ExplainerConfig {
        seed: derive_seed(plan.seed, &[EXPLAIN_STREAM, rep as u64, m as u64]),
        ..plan.explainer.clone()
    };
    let models = generate_explanations(ctx.predictor.as_ref(), &ctx.train_hat, m, &cfg)?;
    let anchors = models
        .origin()
        .expect("generated models carry anchors")
        .to_vec();
    let models = LocalModelSet::new(
        models.kind(),
        models.coefficients().clone(),
        Some((0..anchors.len()).collect()),
    )?;
    let items = ctx.train_hat.subset(&anchors)?;
    let items_true = ctx.train.subset(&anchors)?;
    let loss = build_loss_matrix(&models, &items, ctx.loss_kind)?;
    Ok(ExplainedSubsample {
        models,
        items,
        items_true,
        loss,
    })
}

fn method_slot(method: Option<ReductionMethod>) -> u64 {
    method.map_or(u64::MAX, |m| {
        ReductionMethod::ALL.iter().position(|&x| x == m).unwrap() as u64
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_row(
    plan: &ExperimentPlan,
    ctx: &RepetitionContext,
    sub: &ExplainedSubsample,
    proxies: &[usize],
    epsilon: f64,
) -> Result<MetricReport> {
    let map = ItemModelMap::from_losses(&sub.loss, proxies);
    let assigned = map.models(proxies);
    let test_fidelity = ctx
        .test_hat
        .as_ref()
        .map(|t| {
            metrics::test_fidelity(
                t,
                &sub.items,
                &sub.models,
                proxies,
                &map,
                plan.p_norm,
                ctx.loss_kind,
            )
        })
        .transpose()?;
    let instability = if sub.items_true.len() > plan.kappa {
        Some(metrics::instability(
            &sub.items_true,
            &sub.models,
            &assigned,
            plan.kappa,
            ctx.loss_kind,
        )?)
    } else {
        None
    };
    Ok(MetricReport {
        coverage: Some(metrics::coverage(&sub.loss, proxies, epsilon)),
        train_fidelity: metrics::mean_min_loss(&sub.loss, proxies),
        test_fidelity,
        instability,
        epsilon: Some(epsilon),
        kappa: plan.kappa,
    })
}

fn run_cell(
    plan: &ExperimentPlan,
    ctx: &RepetitionContext,
    sub: &ExplainedSubsample,
    rep: usize,
    cell: &Cell,
) -> Result<Vec<SweepRow>> {
    let m = sub.models.len();
    let k = cell.k.min(m);
    let epsilon = match plan.epsilon_source {
        EpsilonSource::ClosedBox => epsilon_from_quantile(&ctx.closed_box_losses, cell.percentile)?,
        EpsilonSource::LossMatrix => epsilon_from_loss_matrix(&sub.loss, cell.percentile)?,
    };
    let (exact_coverage, exact_loss) = if plan.exact_reference && plan.budget.admits(m, k) {
        let cov = exact_max_coverage(&sub.loss, epsilon, k, plan.budget)?;
        let los = exact_min_loss(&sub.loss, k, plan.budget)?;
        (
            Some(metrics::coverage(&sub.loss, &cov, epsilon)),
            Some(metrics::mean_min_loss(&sub.loss, &los)),
        )
    } else {
        (None, None)
    };
    let base = SweepRow {
        method: String::new(),
        axis: plan.axis.name().to_string(),
        axis_value: cell.axis_value,
        repetition: rep,
        k,
        m,
        epsilon_percentile: cell.percentile,
        min_coverage: cell.min_coverage,
        n_proxies: None,
        constraint_met: None,
        metrics: None,
        exact_coverage,
        exact_loss,
        coverage_ratio: None,
        loss_ratio: None,
        status: "ok".into(),
    };
    let finish = |mut row: SweepRow, proxies: &[usize], met: bool| -> Result<SweepRow> {
        let report = evaluate_row(plan, ctx, sub, proxies, epsilon)?;
        row.coverage_ratio = exact_coverage
            .and_then(|e| approximation_ratio(report.coverage.unwrap_or(0.0), e, Sense::Maximize));
        row.loss_ratio =
            exact_loss.and_then(|e| approximation_ratio(report.train_fidelity, e, Sense::Minimize));
        row.n_proxies = Some(proxies.len());
        row.constraint_met = Some(met);
        row.metrics = Some(report);
        Ok(row)
    };

    let mut rows = Vec::new();
    let input = ReductionInput {
        loss: &sub.loss,
        models: &sub.models,
        data: &sub.items,
    };
    for &method in &plan.methods {
        let row = SweepRow {
            method: method.name().to_string(),
            ..base.clone()
        };
        if method.is_exact() && !plan.budget.admits(m, k) {
            rows.push(SweepRow {
                status: "budget-exceeded".into(),
                ..row
            });
            continue;
        }
        let cfg = ReductionConfig {
            method,
            k,
            epsilon: Some(epsilon),
            min_coverage: Some(cell.min_coverage),
            seed: derive_seed(
                plan.seed,
                &[
                    REDUCE_STREAM,
                    rep as u64,
                    cell.index as u64,
                    method_slot(Some(method)),
                ],
            ),
            p_norm: plan.p_norm,
        };
        let (proxies, _) = reduce(input, &cfg, plan.budget)?;
        rows.push(finish(row, &proxies.indices, proxies.constraint_met)?);
    }
    if plan.include_full {
        let all: Vec<usize> = (0..m).collect();
        let row = SweepRow {
            method: "full".into(),
            k: m,
            ..base.clone()
        };
        let met = metrics::coverage(&sub.loss, &all, epsilon) >= cell.min_coverage;
        rows.push(finish(row, &all, met)?);
    }
    Ok(rows)
}

fn run_repetition(plan: &ExperimentPlan, cells: &[Cell], rep: usize) -> Result<Vec<Vec<SweepRow>>> {
    let ctx = prepare_repetition(plan, rep)?;
    let mut cached: Option<(usize, ExplainedSubsample)> = None;
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        if cached.as_ref().is_none_or(|(m, _)| *m != cell.m) {
            cached = Some((cell.m, explain_subsample(plan, &ctx, rep, cell.m)?));
        }
        let sub = &cached.as_ref().expect("filled above").1;
        out.push(run_cell(plan, &ctx, sub, rep, cell)?);
    }
    Ok(out)
}

/// Runs the whole sweep. Rows are ordered by axis value, then repetition,
/// then method (in plan order, `full` last).
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let cells = plan.cells();
    let per_rep: Vec<Vec<Vec<SweepRow>>> = (0..plan.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(plan, &cells, rep))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for c in 0..cells.len() {
        for rep_rows in &per_rep {
            rows.extend(rep_rows[c].iter().cloned());
        }
    }
    Ok(rows)
}
