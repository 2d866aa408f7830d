//! Datasets, local model sets and the loss matrix that links them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{affine, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Regression,
    BinaryClassification,
}

/// Covariates with labels. Labels are either observed targets or closed-box
/// predictions, depending on where the dataset is used.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    task: Task,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, task: Task) -> Result<Self> {
        let names = (0..x.cols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, y, task, names)
    }

    pub fn with_names(
        x: Matrix,
        y: Vec<f64>,
        task: Task,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::InvalidInput(
                "dataset needs at least one item and one feature".into(),
            ));
        }
        if y.len() != x.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} items",
                y.len(),
                x.rows()
            )));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {} features",
                feature_names.len(),
                x.cols()
            )));
        }
        if !x.all_finite() {
            return Err(Error::NonFinite(
                "covariates contain NaN or infinity".into(),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("labels contain NaN or infinity".into()));
        }
        if task == Task::BinaryClassification && y.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(
                "binary classification labels must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            x,
            y,
            task,
            feature_names,
        })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Same covariates with replaced labels (e.g. closed-box predictions).
    pub fn with_labels(&self, y: Vec<f64>) -> Result<Self> {
        Self::with_names(self.x.clone(), y, self.task, self.feature_names.clone())
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Self::with_names(
            self.x.select_rows(idx),
            y,
            self.task,
            self.feature_names.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinearRegression,
    LogisticRegression,
}

/// A set of simple surrogate models. Row `i` of `B` holds the slopes of model
/// `i` followed by its intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalModelSet {
    kind: ModelKind,
    #[serde(rename = "B")]
    coefficients: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<Vec<usize>>,
}

impl LocalModelSet {
    pub fn new(kind: ModelKind, coefficients: Matrix, origin: Option<Vec<usize>>) -> Result<Self> {
        let set = Self {
            kind,
            coefficients,
            origin,
        };
        set.validate()?;
        Ok(set)
    }

    /// Checks invariants; also used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.coefficients.rows() == 0 {
            return Err(Error::InvalidInput("local model set is empty".into()));
        }
        if self.coefficients.cols() < 2 {
            return Err(Error::InvalidInput(
                "models need at least one slope and an intercept".into(),
            ));
        }
        if !self.coefficients.all_finite() {
            return Err(Error::NonFinite("model coefficients".into()));
        }
        if let Some(origin) = &self.origin {
            if origin.len() != self.coefficients.rows() {
                return Err(Error::DimensionMismatch(format!(
                    "{} anchors for {} models",
                    origin.len(),
                    self.coefficients.rows()
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn coefficients(&self) -> &Matrix {
        &self.coefficients
    }

    pub fn origin(&self) -> Option<&[usize]> {
        self.origin.as_deref()
    }

    pub fn len(&self) -> usize {
        self.coefficients.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.rows() == 0
    }

    /// Number of input features the models expect.
    pub fn n_features(&self) -> usize {
        self.coefficients.cols() - 1
    }

    pub fn predict(&self, model: usize, x: &[f64]) -> f64 {
        let z = affine(self.coefficients.row(model), x);
        match self.kind {
            ModelKind::LinearRegression => z,
            ModelKind::LogisticRegression => sigmoid(z),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            kind: self.kind,
            coefficients: self.coefficients.select_rows(idx),
            origin: self
                .origin
                .as_ref()
                .map(|o| idx.iter().map(|&i| o[i]).collect()),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Probability clamp used by binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    SquaredError,
    BinaryCrossEntropy,
}

impl LossKind {
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Regression => LossKind::SquaredError,
            Task::BinaryClassification => LossKind::BinaryCrossEntropy,
        }
    }

    #[inline]
    pub fn eval(self, prediction: f64, target: f64) -> f64 {
        match self {
            LossKind::SquaredError => {
                let d = prediction - target;
                d * d
            }
            LossKind::BinaryCrossEntropy => {
                let p = prediction.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                // clamp keeps the result >= 0 for targets at the boundary
                (-(target * p.ln() + (1.0 - target) * (1.0 - p).ln())).max(0.0)
            }
        }
    }

    fn check_task(self, task: Task) -> Result<()> {
        if self == LossKind::BinaryCrossEntropy && task != Task::BinaryClassification {
            return Err(Error::InvalidConfig(
                "binary cross-entropy requires a binary classification dataset".into(),
            ));
        }
        Ok(())
    }
}

/// `m x n` matrix of per-model, per-item losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    values: Matrix,
    kind: LossKind,
}

impl LossMatrix {
    /// Wraps precomputed losses, checking they are finite and non-negative.
    pub fn from_matrix(values: Matrix, kind: LossKind) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::InvalidInput("loss matrix is empty".into()));
        }
        if values.as_slice().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "loss entries must be finite and non-negative".into(),
            ));
        }
        Ok(Self { values, kind })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::from_matrix(Matrix::from_rows(rows)?, LossKind::SquaredError)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn n_models(&self) -> usize {
        self.values.rows()
    }

    pub fn n_items(&self) -> usize {
        self.values.cols()
    }

    #[inline]
    pub fn get(&self, model: usize, item: usize) -> f64 {
        self.values.get(model, item)
    }

    pub fn row(&self, model: usize) -> &[f64] {
        self.values.row(model)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(idx),
            kind: self.kind,
        }
    }
}

/// Evaluates every model on every item: `L[i][j] = loss(g_i(x_j), y_j)`.
pub fn build_loss_matrix(
    models: &LocalModelSet,
    data: &Dataset,
    loss_kind: LossKind,
) -> Result<LossMatrix> {
    if models.n_features() != data.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "models expect {} features, data has {}",
            models.n_features(),
            data.n_features()
        )));
    }
    loss_kind.check_task(data.task())?;
    let n = data.len();
    let rows: Vec<Vec<f64>> = (0..models.len())
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let pred = models.predict(i, data.x().row(j));
                    if !pred.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "model {i} predicts a non-finite value on item {j}"
                        )));
                    }
                    Ok(loss_kind.eval(pred, data.y()[j]))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    LossMatrix::from_matrix(Matrix::from_rows(&rows)?, loss_kind)
}
