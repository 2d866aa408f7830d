//! Seeded k-means with k-means++ initialisation, Euclidean or spherical.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::util::{derive_seed, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Squared Euclidean distance, mean centroids.
    Euclidean,
    /// Cosine distance on unit-normalised vectors, normalised mean centroids.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            restarts: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

impl Metric {
    /// Distance between a point and a centroid (both already normalised for cosine).
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => sq_dist(a, b),
            Metric::Cosine => 1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
        }
    }

    /// Representation used for clustering (unit rows for cosine; zero rows stay zero).
    pub fn prepare(self, points: &Matrix) -> Matrix {
        let mut out = points.clone();
        if self == Metric::Cosine {
            for i in 0..out.rows() {
                normalize(out.row_mut(i));
            }
        }
        out
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Best of `restarts` Lloyd runs (lowest inertia, earliest restart on ties).
pub fn kmeans(points: &Matrix, k: usize, metric: Metric, config: KMeansConfig) -> Result<KMeans> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!(
            "cluster count {k} must lie in 1..={n}"
        )));
    }
    if !points.all_finite() {
        return Err(Error::NonFinite("clustering input".into()));
    }
    let prepared = metric.prepare(points);
    let mut best: Option<KMeans> = None;
    for r in 0..config.restarts.max(1) {
        let run = lloyd(
            &prepared,
            k,
            metric,
            config.max_iter,
            derive_seed(config.seed, &[r as u64]),
        );
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus_init(points: &Matrix, k: usize, metric: Metric, seed: u64) -> Matrix {
    let n = points.rows();
    let mut rng = rng(seed);
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| metric.distance(points.row(i), centroids.row(0)).max(0.0))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(metric.distance(points.row(i), centroids.row(c)).max(0.0));
        }
    }
    centroids
}

fn assign(points: &Matrix, centroids: &Matrix, metric: Metric) -> (Vec<usize>, Vec<f64>) {
    (0..points.rows())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for c in 0..centroids.rows() {
                let d = metric.distance(points.row(i), centroids.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

fn lloyd(points: &Matrix, k: usize, metric: Metric, max_iter: usize, seed: u64) -> KMeans {
    let dim = points.cols();
    let mut centroids = plus_plus_init(points, k, metric, seed);
    let (mut labels, mut dists) = assign(points, &centroids, metric);
    for _ in 0..max_iter {
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        // empty clusters take the point farthest from its centroid
        let mut reseeded = vec![false; points.rows()];
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.rows())
                    .filter(|&i| !reseeded[i])
                    .fold(None::<usize>, |acc, i| match acc {
                        Some(a) if dists[a] >= dists[i] => Some(a),
                        _ => Some(i),
                    })
                    .expect("k <= n leaves a point");
                reseeded[far] = true;
                sums.row_mut(c).copy_from_slice(points.row(far));
                counts[c] = 1;
            }
        }
        for c in 0..k {
            let row = sums.row_mut(c);
            let inv = 1.0 / counts[c] as f64;
            row.iter_mut().for_each(|v| *v *= inv);
            if metric == Metric::Cosine {
                normalize(row);
            }
        }
        centroids = sums;
        let (next, next_dists) = assign(points, &centroids, metric);
        let changed = next != labels;
        labels = next;
        dists = next_dists;
        if !changed {
            break;
        }
    }
    let inertia = dists.iter().sum();
    KMeans {
        centroids,
        labels,
        inertia,
    }
}
