//! Local explanation generators producing linear surrogate models.

mod forest;
mod lime;
mod predictor;
mod smoothgrad;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LocalModelSet, ModelKind, Task};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::util::{derive_seed, rng};

pub use forest::{ForestConfig, ForestPredictor};
pub use lime::{lime_explain, weighted_ridge};
pub use predictor::{FnPredictor, KnnPredictor, Predictor};
pub use smoothgrad::smoothgrad_explain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplainerMethod {
    Smoothgrad,
    LimeLite,
    /// Precomputed models loaded from disk.
    Ingest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerConfig {
    pub method: ExplainerMethod,
    /// Standard deviation of the Gaussian perturbations, in feature units.
    pub noise_sigma: f64,
    pub n_perturbations: usize,
    /// Kernel width of the LIME proximity weights; `None` means `0.75 * sqrt(M)`.
    pub kernel_width: Option<f64>,
    /// Ridge penalty on slopes (the intercept is not penalised).
    pub ridge_lambda: f64,
    /// Central finite-difference step.
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            method: ExplainerMethod::Smoothgrad,
            noise_sigma: 0.3,
            n_perturbations: 100,
            kernel_width: None,
            ridge_lambda: 1e-3,
            fd_step: 1e-4,
            seed: 0,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} = {v} must be positive"
                )))
            }
        };
        positive("noise_sigma", self.noise_sigma)?;
        positive("fd_step", self.fd_step)?;
        if let Some(w) = self.kernel_width {
            positive("kernel_width", w)?;
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ridge_lambda = {} must be non-negative",
                self.ridge_lambda
            )));
        }
        if self.n_perturbations == 0 {
            return Err(Error::InvalidConfig(
                "n_perturbations must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn kernel_width_for(&self, n_features: usize) -> f64 {
        self.kernel_width
            .unwrap_or_else(|| 0.75 * (n_features as f64).sqrt())
    }
}

/// Draws `n` points from `Normal(x, sigma^2 I)`.
pub fn sample_perturbations(x: &[f64], sigma: f64, n: usize, seed: u64) -> Result<Matrix> {
    let normal =
        Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(format!("noise sigma: {e}")))?;
    let mut rng = rng(seed);
    let mut out = Matrix::zeros(n, x.len());
    for i in 0..n {
        for (o, &c) in out.row_mut(i).iter_mut().zip(x) {
            *o = c + normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Probability clamp applied before taking logits of classifier outputs.
const LOGIT_CLAMP: f64 = 1e-6;

/// Scale on which surrogates are linear: raw predictions for regression,
/// logits for classification.
pub(crate) fn link(task: Task, prediction: f64) -> f64 {
    match task {
        Task::Regression => prediction,
        Task::BinaryClassification => {
            let p = prediction.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
            (p / (1.0 - p)).ln()
        }
    }
}

pub(crate) fn evaluate(f: &dyn Predictor, x: &[f64]) -> Result<f64> {
    let v = f.predict_one(x);
    if v.is_finite() {
        Ok(link(f.task(), v))
    } else {
        Err(Error::NonFinite("predictor output".into()))
    }
}

pub fn model_kind_for(task: Task) -> ModelKind {
    match task {
        Task::Regression => ModelKind::LinearRegression,
        Task::BinaryClassification => ModelKind::LogisticRegression,
    }
}

/// Fits one local model at `x` with the configured method.
pub fn explain_item(f: &dyn Predictor, x: &[f64], config: &ExplainerConfig) -> Result<Vec<f64>> {
    match config.method {
        ExplainerMethod::Smoothgrad => smoothgrad_explain(f, x, config),
        ExplainerMethod::LimeLite => lime_explain(f, x, config),
        ExplainerMethod::Ingest => Err(Error::InvalidConfig(
            "ingested explanations are loaded, not generated".into(),
        )),
    }
}

/// Samples `m` anchors without replacement and fits one local model at each.
///
/// Anchors are returned ascending and every anchor draws from its own seed,
/// so the result does not depend on how the fits are scheduled.
pub fn generate_explanations(
    f: &dyn Predictor,
    data: &Dataset,
    m: usize,
    config: &ExplainerConfig,
) -> Result<LocalModelSet> {
    config.validate()?;
    if m == 0 || m > data.len() {
        return Err(Error::InvalidConfig(format!(
            "explanation count {m} must lie in 1..={}",
            data.len()
        )));
    }
    if f.n_features() != data.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "predictor expects {} features, data has {}",
            f.n_features(),
            data.n_features()
        )));
    }
    let mut anchors = if m == data.len() {
        (0..m).collect()
    } else {
        let mut r = rng(derive_seed(config.seed, &[u64::MAX]));
        rand::seq::index::sample(&mut r, data.len(), m).into_vec()
    };
    anchors.sort_unstable();
    let rows: Vec<Vec<f64>> = anchors
        .par_iter()
        .map(|&a| {
            let cfg = ExplainerConfig {
                seed: derive_seed(config.seed, &[a as u64]),
                ..config.clone()
            };
            explain_item(f, data.x().row(a), &cfg)
        })
        .collect::<Result<_>>()?;
    LocalModelSet::new(
        model_kind_for(f.task()),
        Matrix::from_rows(&rows)?,
        Some(anchors),
    )
}
