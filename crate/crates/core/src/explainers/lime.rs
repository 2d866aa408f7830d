use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};

use super::{evaluate, sample_perturbations, ExplainerConfig, Predictor};

/// Kernel-weighted linear surrogate around `x`.
///
/// Minimises `sum_s w_s (t_s - phi . [x_s; 1])^2 + lambda * |slopes|^2` with
/// `w_s = exp(-|x_s - x|^2 / width^2)` over Gaussian perturbations `x_s`.
pub fn lime_explain(f: &dyn Predictor, x: &[f64], config: &ExplainerConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let samples = sample_perturbations(x, config.noise_sigma, config.n_perturbations, config.seed)?;
    let width = config.kernel_width_for(x.len());
    let mut targets = Vec::with_capacity(samples.rows());
    let mut weights = Vec::with_capacity(samples.rows());
    for s in samples.iter_rows() {
        targets.push(evaluate(f, s)?);
        weights.push((-sq_dist(s, x) / (width * width)).exp());
    }
    weighted_ridge(&samples, &targets, &weights, config.ridge_lambda)
}

/// Solves the weighted ridge normal equations with an unpenalised intercept.
/// Returns slopes followed by the intercept.
pub fn weighted_ridge(
    samples: &Matrix,
    targets: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    let (n, dim) = (samples.rows(), samples.cols());
    if targets.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} samples, {} targets, {} weights",
            targets.len(),
            weights.len()
        )));
    }
    let p = dim + 1;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut a = vec![0.0; p];
    for (s, (&t, &w)) in samples.iter_rows().zip(targets.iter().zip(weights)) {
        a[..dim].copy_from_slice(s);
        a[dim] = 1.0;
        for r in 0..p {
            rhs[r] += w * a[r] * t;
            for c in 0..p {
                gram[(r, c)] += w * a[r] * a[c];
            }
        }
    }
    for d in 0..dim {
        gram[(d, d)] += lambda;
    }
    let solution = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular(format!("{n} samples for {p} parameters")))?,
    };
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("{n} samples for {p} parameters")));
    }
    Ok(solution.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::explainers::FnPredictor;

    #[test]
    fn recovers_linear_target_without_penalty() {
        let f = FnPredictor::new(2, Task::Regression, |x: &[f64]| {
            3.0 * x[0] - 2.0 * x[1] + 1.0
        });
        let cfg = ExplainerConfig {
            ridge_lambda: 0.0,
            seed: 2,
            ..ExplainerConfig::default()
        };
        let b = lime_explain(&f, &[0.5, 0.5], &cfg).unwrap();
        for (got, want) in b.iter().zip([3.0, -2.0, 1.0]) {
            assert!((got - want).abs() < 1e-8, "{b:?}");
        }
    }

    #[test]
    fn huge_penalty_flattens_to_weighted_mean() {
        let f = FnPredictor::new(1, Task::Regression, |x: &[f64]| 5.0 * x[0] + 2.0);
        let cfg = ExplainerConfig {
            ridge_lambda: 1e12,
            seed: 8,
            ..ExplainerConfig::default()
        };
        let x = [1.0];
        let b = lime_explain(&f, &x, &cfg).unwrap();
        let pts = sample_perturbations(&x, cfg.noise_sigma, cfg.n_perturbations, cfg.seed).unwrap();
        let w = cfg.kernel_width_for(1);
        let (mut num, mut den) = (0.0, 0.0);
        for r in pts.iter_rows() {
            let wt = (-(r[0] - 1.0).powi(2) / (w * w)).exp();
            num += wt * (5.0 * r[0] + 2.0);
            den += wt;
        }
        assert!(b[0].abs() < 1e-6);
        assert!((b[1] - num / den).abs() < 1e-5);
    }

    #[test]
    fn degenerate_sampling_is_singular() {
        // one sample cannot pin down two parameters
        let s = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let err = weighted_ridge(&s, &[1.0], &[1.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        assert_eq!(err.exit_code(), 2);
    }
}
