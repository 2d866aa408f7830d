//! Command-line front end.
//!
//! `--config FILE` reads a flat JSON object whose keys are flag names
//! (`min_coverage` or `min-coverage`). Its values are spliced in ahead of the
//! real arguments, so anything given on the command line wins.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;

use crate::data::{build_loss_matrix, Dataset, LocalModelSet, LossKind, Task};
use crate::error::{Error, Result};
use crate::experiment::{
    run_experiment, write_sweep_csv, DataSource, EpsilonSource, ExperimentPlan, PredictorChoice,
    SweepAxis,
};
use crate::explainers::{
    generate_explanations, ExplainerConfig, ExplainerMethod, ForestConfig, ForestPredictor,
    KnnPredictor, Predictor,
};
use crate::io;
use crate::metrics::{self, epsilon_from_loss_matrix, epsilon_from_quantile, MetricReport};
use crate::procedure::{reduce, ItemModelMap, ProxySet, ReductionConfig, ReductionInput};
use crate::reduce::{ExactBudget, ReductionMethod};
use crate::synth::{generate_synthetic, OraclePredictor, SyntheticGroundTruth, SyntheticSpec};
use crate::util::{derive_seed, rng};

#[derive(Parser, Debug)]
#[command(
    name = "explain-reduce",
    version,
    about = "Reduce local explanations to a small proxy set"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a clustered synthetic regression dataset
    #[command(args_override_self = true)]
    Generate(GenerateArgs),
    /// Fit local linear explanations of a closed-box predictor
    #[command(args_override_self = true)]
    Explain(ExplainArgs),
    /// Select a proxy set from a set of local models
    #[command(args_override_self = true)]
    Reduce(ReduceArgs),
    /// Score a proxy set
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Run a parameter sweep and write one CSV row per method and setting
    #[command(args_override_self = true)]
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Regression,
    BinaryClassification,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Regression => Task::Regression,
            TaskArg::BinaryClassification => Task::BinaryClassification,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorArg {
    Oracle,
    Knn,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExplainerArg {
    Smoothgrad,
    LimeLite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EpsilonSourceArg {
    LossMatrix,
    ClosedBox,
}

impl From<EpsilonSourceArg> for EpsilonSource {
    fn from(e: EpsilonSourceArg) -> Self {
        match e {
            EpsilonSourceArg::LossMatrix => EpsilonSource::LossMatrix,
            EpsilonSourceArg::ClosedBox => EpsilonSource::ClosedBox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    K,
    SubsampleN,
    EpsilonGrid,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// CSV file with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the label column
    #[arg(long, default_value = io::DEFAULT_TARGET)]
    pub target: String,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    pub task: TaskArg,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        load_required(&self.data, &self.target, self.task.into())
    }
}

fn load_required(path: &Path, target: &str, task: Task) -> Result<Dataset> {
    io::read_dataset_file(path, target, task)?
        .ok_or_else(|| Error::InvalidInput(format!("{} has no rows", path.display())))
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 5000)]
    pub n_items: usize,
    #[arg(long, default_value_t = 11)]
    pub n_features: usize,
    #[arg(long, default_value_t = 5)]
    pub n_clusters: usize,
    /// Spread of items around their cluster centroid
    #[arg(long, default_value_t = 0.25)]
    pub spread: f64,
    /// Label noise standard deviation
    #[arg(long, default_value_t = 2.0)]
    pub sigma_e: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a shuffled train.csv / test.csv split with this test share
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Output directory
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = PredictorArg::Forest)]
    pub predictor: PredictorArg,
    /// Ground truth written by `generate` (required by the oracle predictor)
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Neighbourhood size of the k-NN predictor
    #[arg(long, default_value_t = 10)]
    pub neighbours: usize,
    /// Number of trees of the forest predictor
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, value_enum, default_value_t = ExplainerArg::Smoothgrad)]
    pub explainer: ExplainerArg,
    /// Number of explanations (anchors sampled without replacement)
    #[arg(long, default_value_t = 500)]
    pub m: usize,
    #[arg(long, default_value_t = 0.3)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 100)]
    pub n_perturbations: usize,
    #[arg(long)]
    pub kernel_width: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub ridge_lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "models.json")]
    pub out: PathBuf,
    /// Write the data relabelled with the predictor's outputs
    #[arg(long)]
    pub predictions_out: Option<PathBuf>,
    /// Held-out items to relabel alongside the training data
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, requires = "test")]
    pub test_predictions_out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    /// Items to reduce on, labelled with the closed-box outputs
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long, default_value_t = ReductionMethod::ConstMinLoss)]
    pub method: ReductionMethod,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Loss threshold; overrides --epsilon-percentile
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = metrics::DEFAULT_EPSILON_PERCENTILE)]
    pub epsilon_percentile: f64,
    /// Defaults to closed-box when --true-data is given, else loss-matrix
    #[arg(long, value_enum)]
    pub epsilon_source: Option<EpsilonSourceArg>,
    /// The same items with their true labels
    #[arg(long)]
    pub true_data: Option<PathBuf>,
    #[arg(long, default_value_t = metrics::DEFAULT_MIN_COVERAGE)]
    pub min_coverage: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2.0)]
    pub p_norm: f64,
    #[arg(long, default_value_t = ExactBudget::default().max_models)]
    pub max_exact_models: usize,
    #[arg(long, default_value_t = ExactBudget::default().max_k)]
    pub max_exact_k: usize,
    #[arg(long, default_value = "proxies.json")]
    pub out: PathBuf,
    /// Per-iteration trace of greedy methods
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Training items, labelled with the closed-box outputs
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long)]
    pub proxies: PathBuf,
    /// Held-out items, labelled with the closed-box outputs
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Training items with true labels, used for instability
    #[arg(long)]
    pub true_data: Option<PathBuf>,
    /// Coverage threshold; defaults to the one stored with the proxies
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = metrics::DEFAULT_KAPPA)]
    pub kappa: usize,
    /// Defaults to the one stored with the proxies
    #[arg(long)]
    pub p_norm: Option<f64>,
    /// Defaults to standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Full plan as JSON; flags below override its fields
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub axis: Option<AxisArg>,
    /// Comma-separated, strictly increasing
    #[arg(long)]
    pub values: Option<String>,
    /// Comma-separated method names
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated minimum-coverage values for the epsilon grid
    #[arg(long)]
    pub min_coverage_values: Option<String>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub epsilon_percentile: Option<f64>,
    #[arg(long, value_enum)]
    pub epsilon_source: Option<EpsilonSourceArg>,
    #[arg(long)]
    pub min_coverage: Option<f64>,
    #[arg(long)]
    pub kappa: Option<usize>,
    #[arg(long)]
    pub p_norm: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV data instead of the synthetic generator
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorArg>,
    #[arg(long)]
    pub n_items: Option<usize>,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad {what} value '{t}'")))
        })
        .collect()
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_items: a.n_items,
        n_features: a.n_features,
        n_clusters: a.n_clusters,
        spread: a.spread,
        noise_sigma: a.sigma_e,
        seed: a.seed,
        ..SyntheticSpec::default()
    };
    let (data, truth) = generate_synthetic(&spec)?;
    std::fs::create_dir_all(&a.out)?;
    io::write_dataset(writer(&a.out.join("data.csv"))?, &data, io::DEFAULT_TARGET)?;
    io::write_json(&a.out.join("truth.json"), &truth)?;
    if let Some(f) = a.test_fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test fraction {f} must lie in (0, 1)"
            )));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng(derive_seed(a.seed, &[1])));
        let n_test = ((f * data.len() as f64).round() as usize).min(data.len());
        let (test, train) = order.split_at(n_test);
        let (mut train, mut test) = (train.to_vec(), test.to_vec());
        train.sort_unstable();
        test.sort_unstable();
        io::write_dataset(
            writer(&a.out.join("train.csv"))?,
            &data.subset(&train)?,
            io::DEFAULT_TARGET,
        )?;
        io::write_dataset(
            writer(&a.out.join("test.csv"))?,
            &data.subset(&test)?,
            io::DEFAULT_TARGET,
        )?;
    }
    Ok(())
}

pub fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let data = a.data.load()?;
    let predictor: Box<dyn Predictor> = match a.predictor {
        PredictorArg::Oracle => {
            let path = a
                .truth
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("--predictor oracle needs --truth".into()))?;
            let truth: SyntheticGroundTruth = io::read_json(path)?;
            Box::new(OraclePredictor::new(truth)?)
        }
        PredictorArg::Knn => Box::new(KnnPredictor::fit(&data, a.neighbours)?),
        PredictorArg::Forest => {
            let cfg = ForestConfig {
                n_trees: a.trees,
                seed: a.seed,
                ..ForestConfig::default()
            };
            Box::new(ForestPredictor::fit(&data, &cfg)?)
        }
    };
    let mut m = a.m;
    if m > data.len() {
        warn(format!(
            "{m} explanations requested for {} items; using {}",
            data.len(),
            data.len()
        ));
        m = data.len();
    }
    let config = ExplainerConfig {
        method: match a.explainer {
            ExplainerArg::Smoothgrad => ExplainerMethod::Smoothgrad,
            ExplainerArg::LimeLite => ExplainerMethod::LimeLite,
        },
        noise_sigma: a.noise_sigma,
        n_perturbations: a.n_perturbations,
        kernel_width: a.kernel_width,
        ridge_lambda: a.ridge_lambda,
        seed: a.seed,
        ..ExplainerConfig::default()
    };
    let models = generate_explanations(predictor.as_ref(), &data, m, &config)?;
    io::write_json(&a.out, &models)?;
    if let Some(path) = &a.predictions_out {
        let labelled = data.with_labels(predictor.predict(data.x())?)?;
        io::write_dataset(writer(path)?, &labelled, &a.data.target)?;
    }
    if let (Some(test), Some(path)) = (&a.test, &a.test_predictions_out) {
        match io::read_dataset_file(test, &a.data.target, data.task())? {
            Some(t) => {
                let labelled = t.with_labels(predictor.predict(t.x())?)?;
                io::write_dataset(writer(path)?, &labelled, &a.data.target)?;
            }
            None => {
                warn(format!("{} has no rows", test.display()));
                std::fs::copy(test, path)?;
            }
        }
    }
    Ok(())
}

/// Per-item loss of the closed box against the true labels.
fn closed_box_losses(predicted: &Dataset, truth: &Dataset, kind: LossKind) -> Result<Vec<f64>> {
    if predicted.x() != truth.x() {
        return Err(Error::DimensionMismatch(
            "true-label data must hold the same items in the same order".into(),
        ));
    }
    Ok(predicted
        .y()
        .iter()
        .zip(truth.y())
        .map(|(&p, &y)| kind.eval(p, y))
        .collect())
}

pub fn cmd_reduce(a: &ReduceArgs) -> Result<()> {
    let data = a.data.load()?;
    let models: LocalModelSet = io::read_json(&a.models)?;
    models.validate()?;
    let loss_kind = LossKind::default_for(data.task());
    let loss = build_loss_matrix(&models, &data, loss_kind)?;
    let m = models.len();
    let mut k = a.k;
    if k >= m {
        if k > m {
            warn(format!(
                "k = {k} exceeds the {m} available models; returning the full set"
            ));
        } else {
            warn(format!(
                "k = {k} equals the number of models; returning the full set"
            ));
        }
        k = m;
    }
    let truth = a
        .true_data
        .as_ref()
        .map(|p| load_required(p, &a.data.target, data.task()))
        .transpose()?;
    let source = a
        .epsilon_source
        .map(EpsilonSource::from)
        .unwrap_or(if truth.is_some() {
            EpsilonSource::ClosedBox
        } else {
            EpsilonSource::LossMatrix
        });
    let epsilon = match a.epsilon {
        Some(e) => Some(e),
        None => {
            let q = match source {
                EpsilonSource::LossMatrix => epsilon_from_loss_matrix(&loss, a.epsilon_percentile),
                EpsilonSource::ClosedBox => {
                    let t = truth.as_ref().ok_or_else(|| {
                        Error::InvalidConfig("--epsilon-source closed-box needs --true-data".into())
                    })?;
                    epsilon_from_quantile(
                        &closed_box_losses(&data, t, loss_kind)?,
                        a.epsilon_percentile,
                    )
                }
            };
            match q {
                Ok(e) => Some(e),
                Err(e) if !a.method.needs_epsilon() => {
                    warn(format!("no coverage threshold: {e}"));
                    None
                }
                Err(e) => return Err(e),
            }
        }
    };
    let config = ReductionConfig {
        method: a.method,
        k,
        epsilon,
        min_coverage: Some(a.min_coverage),
        seed: a.seed,
        p_norm: a.p_norm,
    };
    let budget = ExactBudget {
        max_models: a.max_exact_models,
        max_k: a.max_exact_k,
    };
    let input = ReductionInput {
        loss: &loss,
        models: &models,
        data: &data,
    };
    let (proxies, trace) = reduce(input, &config, budget)?;
    if !proxies.constraint_met {
        warn(format!(
            "coverage {} is below the requested {}",
            proxies.achieved_coverage.unwrap_or(0.0),
            a.min_coverage
        ));
    }
    io::write_json(&a.out, &proxies)?;
    if let Some(path) = &a.trace {
        match trace {
            Some(t) => t.write_csv(writer(path)?)?,
            None => warn(format!("{} has no iteration trace", a.method)),
        }
    }
    Ok(())
}

/// Scores `proxies` on the given artifacts. `test` may be absent.
pub fn evaluate_artifacts(
    data: &Dataset,
    true_data: Option<&Dataset>,
    test: Option<&Dataset>,
    models: &LocalModelSet,
    proxies: &ProxySet,
    epsilon: Option<f64>,
    kappa: usize,
    p_norm: f64,
) -> Result<MetricReport> {
    let loss_kind = LossKind::default_for(data.task());
    let loss = build_loss_matrix(models, data, loss_kind)?;
    proxies.validate(models.len())?;
    let s = &proxies.indices;
    let map = ItemModelMap::from_losses(&loss, s);
    let test_fidelity = test
        .map(|t| metrics::test_fidelity(t, data, models, s, &map, p_norm, loss_kind))
        .transpose()?;
    let stab_data = true_data.unwrap_or(data);
    if stab_data.len() != data.len() {
        return Err(Error::DimensionMismatch(
            "true-label data must hold the same items as the training data".into(),
        ));
    }
    let instability = if stab_data.len() > kappa {
        Some(metrics::instability(
            stab_data,
            models,
            &map.models(s),
            kappa,
            loss_kind,
        )?)
    } else {
        warn(format!(
            "{} items are too few for {kappa} neighbours; instability omitted",
            data.len()
        ));
        None
    };
    Ok(MetricReport {
        coverage: epsilon.map(|e| metrics::coverage(&loss, s, e)),
        train_fidelity: metrics::mean_min_loss(&loss, s),
        test_fidelity,
        instability,
        epsilon,
        kappa,
    })
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let data = a.data.load()?;
    let task = data.task();
    let models: LocalModelSet = io::read_json(&a.models)?;
    models.validate()?;
    let proxies: ProxySet = io::read_json(&a.proxies)?;
    let true_data = a
        .true_data
        .as_ref()
        .map(|p| load_required(p, &a.data.target, task))
        .transpose()?;
    let test = match &a.test {
        Some(p) => {
            let t = io::read_dataset_file(p, &a.data.target, task)?;
            if t.is_none() {
                warn(format!(
                    "{} has no rows; test fidelity omitted",
                    p.display()
                ));
            }
            t
        }
        None => None,
    };
    let report = evaluate_artifacts(
        &data,
        true_data.as_ref(),
        test.as_ref(),
        &models,
        &proxies,
        a.epsilon.or(proxies.config.epsilon),
        a.kappa,
        a.p_norm.unwrap_or(proxies.config.p_norm),
    )?;
    match &a.out {
        Some(p) => io::write_json(p, &report)?,
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn experiment_plan(a: &ExperimentArgs) -> Result<ExperimentPlan> {
    let mut plan: ExperimentPlan = match &a.plan {
        Some(p) => io::read_json(p)?,
        None => ExperimentPlan::default(),
    };
    if let Some(axis) = a.axis {
        plan.axis = match axis {
            AxisArg::K => SweepAxis::K,
            AxisArg::SubsampleN => SweepAxis::SubsampleN,
            AxisArg::EpsilonGrid => SweepAxis::EpsilonGrid,
        };
    }
    if let Some(v) = &a.values {
        plan.values = parse_list(v, "axis")?;
    }
    if let Some(v) = &a.methods {
        plan.methods = parse_list(v, "method")?;
    }
    if let Some(v) = &a.min_coverage_values {
        plan.min_coverage_values = parse_list(v, "minimum coverage")?;
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { plan.$field = v.into(); } )* };
    }
    set!(
        repetitions,
        k,
        subsample,
        epsilon_percentile,
        epsilon_source,
        min_coverage,
        kappa,
        p_norm,
        train_fraction,
        seed
    );
    if let Some(p) = &a.data {
        plan.source = DataSource::Csv {
            path: p.clone(),
            target: io::DEFAULT_TARGET.to_string(),
            task: Task::Regression,
            truth: None,
        };
    }
    if let Some(n) = a.n_items {
        match &mut plan.source {
            DataSource::Synthetic(spec) => spec.n_items = n,
            DataSource::Csv { .. } => {
                return Err(Error::InvalidConfig(
                    "--n-items applies to synthetic data only".into(),
                ))
            }
        }
    }
    if let Some(p) = a.predictor {
        plan.predictor = match p {
            PredictorArg::Oracle => PredictorChoice::Oracle,
            PredictorArg::Knn => PredictorChoice::Knn { neighbours: 10 },
            PredictorArg::Forest => PredictorChoice::Forest(ForestConfig::default()),
        };
    }
    plan.validate()?;
    Ok(plan)
}

pub fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let plan = experiment_plan(a)?;
    let rows = run_experiment(&plan)?;
    write_sweep_csv(writer(&a.out)?, &rows)
}

/// Turns the JSON object in `--config FILE` into flag tokens.
fn config_tokens(path: &Path) -> Result<Vec<OsString>> {
    let value: serde_json::Value = io::read_json(path)?;
    let obj = value.as_object().ok_or_else(|| {
        Error::InvalidConfig(format!("{}: expected a JSON object", path.display()))
    })?;
    let mut out = Vec::new();
    for (key, v) in obj {
        if key == "config" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &serde_json::Value| -> Result<String> {
            match v {
                serde_json::Value::String(s) => Ok(s.clone()),
                serde_json::Value::Number(n) => Ok(n.to_string()),
                serde_json::Value::Bool(b) => Ok(b.to_string()),
                _ => Err(Error::InvalidConfig(format!(
                    "config key '{key}' has an unsupported value"
                ))),
            }
        };
        match v {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => out.push(flag.into()),
            serde_json::Value::Array(items) => {
                let parts: Vec<String> = items.iter().map(scalar).collect::<Result<_>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            other => {
                out.push(flag.into());
                out.push(scalar(other)?.into());
            }
        }
    }
    Ok(out)
}

/// Splices `--config` file contents in right after the subcommand name.
fn expand_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    let mut i = 0;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if s == "--config" && i + 1 < args.len() {
            path = Some(PathBuf::from(&args[i + 1]));
            i += 2;
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
            i += 1;
        } else {
            i += 1;
        }
    }
    let Some(path) = path else { return Ok(args) };
    let tokens = config_tokens(&path)?;
    // the subcommand is the first argument that is not a flag
    let at = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(args.len(), |p| p + 2);
    args.splice(at..at, tokens);
    Ok(args)
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Reduce(a) => cmd_reduce(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
