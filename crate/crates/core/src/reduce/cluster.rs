use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LocalModelSet, LossMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::check_k;
use super::kmeans::{kmeans, KMeansConfig, Metric};

/// Which per-model vectors are clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterBasis {
    /// Feature vector of the item each model was anchored at (Euclidean).
    X,
    /// Model coefficients, cosine distance.
    B,
    /// The model's row of the loss matrix (Euclidean).
    L,
}

impl ClusterBasis {
    pub fn metric(self) -> Metric {
        match self {
            ClusterBasis::B => Metric::Cosine,
            ClusterBasis::X | ClusterBasis::L => Metric::Euclidean,
        }
    }

    /// One row per model.
    pub fn vectors(
        self,
        models: &LocalModelSet,
        loss: &LossMatrix,
        data: &Dataset,
    ) -> Result<Matrix> {
        match self {
            ClusterBasis::B => Ok(models.coefficients().clone()),
            ClusterBasis::L => Ok(loss.values().clone()),
            ClusterBasis::X => {
                let anchors = models.origin().ok_or_else(|| {
                    Error::InvalidInput(
                        "clustering on X needs the anchor item of every model".into(),
                    )
                })?;
                if let Some(&bad) = anchors.iter().find(|&&a| a >= data.len()) {
                    return Err(Error::InvalidInput(format!(
                        "anchor {bad} is outside the dataset of {} items",
                        data.len()
                    )));
                }
                Ok(data.x().select_rows(anchors))
            }
        }
    }
}

/// Clusters the model vectors into `k` groups and keeps, for each cluster,
/// the model closest to its centroid. Models picked by several clusters are
/// kept once, so fewer than `k` indices may come back. Output is ascending.
pub fn cluster_reduce(vectors: &Matrix, metric: Metric, k: usize, seed: u64) -> Result<Vec<usize>> {
    check_k(k, vectors.rows())?;
    let km = kmeans(
        vectors,
        k,
        metric,
        KMeansConfig {
            seed,
            ..KMeansConfig::default()
        },
    )?;
    let prepared = metric.prepare(vectors);
    let mut selected: Vec<usize> = (0..k)
        .map(|c| {
            let centroid = km.centroids.row(c);
            let mut best = (0, f64::INFINITY);
            for i in 0..prepared.rows() {
                let d = metric.distance(prepared.row(i), centroid);
                if d < best.1 {
                    best = (i, d);
                }
            }
            best.0
        })
        .collect();
    selected.sort_unstable();
    selected.dedup();
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce::kmeans::Metric;

    #[test]
    fn one_proxy_per_separated_cluster() {
        // three well separated directions, three models each
        let rows = vec![
            vec![1.0, 0.0, 0.0],
            vec![1.1, 0.05, 0.0],
            vec![0.9, -0.05, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.05, 2.0, 0.0],
            vec![0.0, 1.5, 0.1],
            vec![0.0, 0.0, 1.0],
            vec![0.1, 0.0, 3.0],
            vec![0.0, 0.1, 2.0],
        ];
        let b = Matrix::from_rows(&rows).unwrap();
        let s = cluster_reduce(&b, Metric::Cosine, 3, 1).unwrap();
        assert_eq!(s.len(), 3);
        let groups: Vec<usize> = s.iter().map(|i| i / 3).collect();
        assert_eq!(groups, vec![0, 1, 2]);
    }

    #[test]
    fn k_equal_m_selects_everything() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        assert_eq!(
            cluster_reduce(&x, Metric::Euclidean, 6, 3).unwrap(),
            (0..6).collect::<Vec<_>>()
        );
    }

    #[test]
    fn single_cluster_picks_model_nearest_global_mean() {
        let x = Matrix::from_rows(&[vec![0.0], vec![0.9], vec![3.0]]).unwrap();
        // mean is 1.3; closest is 0.9
        assert_eq!(
            cluster_reduce(&x, Metric::Euclidean, 1, 0).unwrap(),
            vec![1]
        );
    }
}
