//! Synthetic clustered regression data with known local linear models.
//!
//! Each cluster owns a centroid and a coefficient vector. Items are spread
//! around their cluster's centroid, the feature columns are standardised, and
//! labels come from the cluster's linear model in standardised coordinates
//! plus Gaussian noise.

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::explainers::Predictor;
use crate::matrix::{affine, sq_dist, Matrix};
use crate::util::{rng, Rng};

/// Upper bound on rejected draws while separating clusters.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_items: usize,
    pub n_features: usize,
    pub n_clusters: usize,
    /// Standard deviation of items around their centroid (pre-standardisation).
    pub spread: f64,
    /// Label noise standard deviation.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Coefficient vectors of two clusters may not exceed this cosine similarity.
    pub max_coef_cosine: f64,
    /// Centroids of two clusters must be at least this far apart.
    pub min_centroid_distance: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_items: 5000,
            n_features: 11,
            n_clusters: 5,
            spread: 0.25,
            noise_sigma: 2.0,
            seed: 0,
            max_coef_cosine: 0.9,
            min_centroid_distance: 1.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.n_items < self.n_clusters {
            return Err(Error::InvalidConfig(format!(
                "need n_items ({}) >= n_clusters ({}) >= 1",
                self.n_items, self.n_clusters
            )));
        }
        if self.n_features == 0 {
            return Err(Error::InvalidConfig("need at least one feature".into()));
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "spread {} must be positive",
                self.spread
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise sigma {} must be non-negative",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Generating parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    /// `k x (M + 1)` coefficients in standardised coordinates, intercept last.
    pub beta: Matrix,
    /// `k x M` centroids in original (pre-standardisation) coordinates.
    pub centroids: Matrix,
    pub cluster_id: Vec<usize>,
    /// Per-feature mean removed during standardisation.
    pub feature_mean: Vec<f64>,
    /// Per-feature standard deviation divided out during standardisation.
    pub feature_std: Vec<f64>,
}

impl SyntheticGroundTruth {
    pub fn n_clusters(&self) -> usize {
        self.beta.rows()
    }

    /// Maps standardised coordinates back to the original space.
    pub fn destandardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Cluster whose centroid is nearest to a standardised point.
    pub fn nearest_cluster(&self, x: &[f64]) -> usize {
        let orig = self.destandardize(x);
        let mut best = (0, f64::INFINITY);
        for c in 0..self.centroids.rows() {
            let d = sq_dist(&orig, self.centroids.row(c));
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Draws `k` standard-normal vectors, redrawing any vector too similar to an
/// earlier one.
fn separated_draws(
    rng: &mut Rng,
    k: usize,
    dim: usize,
    too_close: impl Fn(&[f64], &[f64]) -> bool,
    budget: &mut usize,
    what: &str,
) -> Result<Matrix> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if out.iter().any(|u| too_close(u, &v)) {
            *budget += 1;
            if *budget > MAX_REJECTIONS {
                return Err(Error::Infeasible(format!(
                    "could not separate {k} {what} after {MAX_REJECTIONS} redraws"
                )));
            }
            continue;
        }
        out.push(v);
    }
    Matrix::from_rows(&out)
}

/// Generates a dataset and the parameters it was generated from.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, SyntheticGroundTruth)> {
    spec.validate()?;
    let (n, dim, k) = (spec.n_items, spec.n_features, spec.n_clusters);
    let mut rng = rng(spec.seed);
    let mut rejections = 0;
    let beta = separated_draws(
        &mut rng,
        k,
        dim + 1,
        |a, b| cosine(a, b) > spec.max_coef_cosine,
        &mut rejections,
        "coefficient vectors",
    )?;
    let min_d2 = spec.min_centroid_distance * spec.min_centroid_distance;
    let centroids = separated_draws(
        &mut rng,
        k,
        dim,
        |a, b| sq_dist(a, b) < min_d2,
        &mut rejections,
        "centroids",
    )?;

    let cluster_id: Vec<usize> = (0..n).map(|i| i % k).collect();
    let spread =
        Normal::new(0.0, spec.spread).map_err(|e| Error::InvalidConfig(format!("spread: {e}")))?;
    let mut x = Matrix::zeros(n, dim);
    for (i, &c) in cluster_id.iter().enumerate() {
        for (v, &mu) in x.row_mut(i).iter_mut().zip(centroids.row(c)) {
            *v = mu + spread.sample(&mut rng);
        }
    }

    let mut feature_mean = vec![0.0; dim];
    let mut feature_std = vec![0.0; dim];
    for j in 0..dim {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            x.set(i, j, (x.get(i, j) - mean) / sd);
        }
        feature_mean[j] = mean;
        feature_std[j] = sd;
    }

    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidConfig(format!("noise: {e}")))?;
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e = if spec.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            affine(beta.row(cluster_id[i]), x.row(i)) + e
        })
        .collect();

    let data = Dataset::new(x, y, Task::Regression)?;
    let truth = SyntheticGroundTruth {
        beta,
        centroids,
        cluster_id,
        feature_mean,
        feature_std,
    };
    Ok((data, truth))
}

/// Noise-free piecewise-linear closed box: the linear model of the cluster
/// whose centroid is nearest in original coordinates.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    truth: SyntheticGroundTruth,
}

impl OraclePredictor {
    pub fn new(truth: SyntheticGroundTruth) -> Result<Self> {
        let m = truth.centroids.cols();
        if truth.beta.cols() != m + 1
            || truth.beta.rows() != truth.centroids.rows()
            || truth.feature_mean.len() != m
            || truth.feature_std.len() != m
        {
            return Err(Error::DimensionMismatch(
                "ground truth blocks have inconsistent shapes".into(),
            ));
        }
        Ok(Self { truth })
    }

    pub fn truth(&self) -> &SyntheticGroundTruth {
        &self.truth
    }
}

impl Predictor for OraclePredictor {
    fn task(&self) -> Task {
        Task::Regression
    }

    fn n_features(&self) -> usize {
        self.truth.centroids.cols()
    }

    fn predict_one(&self, x: &[f64]) -> f64 {
        affine(self.truth.beta.row(self.truth.nearest_cluster(x)), x)
    }
}

/// Convenience constructor mirroring [`generate_synthetic`].
pub fn oracle_predictor(truth: &SyntheticGroundTruth) -> Result<OraclePredictor> {
    OraclePredictor::new(truth.clone())
}
