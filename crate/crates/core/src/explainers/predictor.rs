use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};

/// Closed-box model: anything that maps a covariate row to a prediction.
///
/// Implementations must be pure; explainers call them concurrently.
pub trait Predictor: Send + Sync {
    fn task(&self) -> Task;

    fn n_features(&self) -> usize;

    fn predict_one(&self, x: &[f64]) -> f64;

    /// Predictions for every row, checked for dimension and finiteness.
    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "predictor expects {} features, got {}",
                self.n_features(),
                x.cols()
            )));
        }
        x.iter_rows()
            .enumerate()
            .map(|(i, row)| {
                let v = self.predict_one(row);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite(format!("prediction for row {i}")))
                }
            })
            .collect()
    }
}

/// Wraps a closure as a predictor.
pub struct FnPredictor<F> {
    f: F,
    task: Task,
    n_features: usize,
}

impl<F> FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(n_features: usize, task: Task, f: F) -> Self {
        Self {
            f,
            task,
            n_features,
        }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn task(&self) -> Task {
        self.task
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_one(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// k-nearest-neighbour regressor / probability estimator.
///
/// Neighbours are weighted by a Gaussian kernel whose bandwidth is the
/// distance to the k-th neighbour, so predictions vary smoothly enough for
/// finite-difference gradients.
#[derive(Debug, Clone)]
pub struct KnnPredictor {
    x: Matrix,
    y: Vec<f64>,
    task: Task,
    k: usize,
}

impl KnnPredictor {
    pub fn fit(data: &Dataset, k: usize) -> Result<Self> {
        if k == 0 || k > data.len() {
            return Err(Error::InvalidConfig(format!(
                "neighbour count {k} must lie in 1..={}",
                data.len()
            )));
        }
        Ok(Self {
            x: data.x().clone(),
            y: data.y().to_vec(),
            task: data.task(),
            k,
        })
    }
}

impl Predictor for KnnPredictor {
    fn task(&self) -> Task {
        self.task
    }

    fn n_features(&self) -> usize {
        self.x.cols()
    }

    fn predict_one(&self, x: &[f64]) -> f64 {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter_rows()
            .enumerate()
            .map(|(i, r)| (sq_dist(r, x), i))
            .collect();
        let k = self.k;
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        let near = &mut d[..k];
        let bw2 = near.iter().map(|p| p.0).fold(0.0, f64::max).max(1e-24);
        let (mut num, mut den) = (0.0, 0.0);
        for &(d2, i) in near.iter() {
            let w = (-0.5 * d2 / bw2).exp();
            num += w * self.y[i];
            den += w;
        }
        num / den
    }
}
