use crate::error::Result;

use super::{evaluate, sample_perturbations, ExplainerConfig, Predictor};

/// Averages central-difference gradients over Gaussian perturbations of `x`
/// and returns the plane with that slope through `(x, f(x))`.
///
/// Output layout: slopes followed by the intercept.
pub fn smoothgrad_explain(
    f: &dyn Predictor,
    x: &[f64],
    config: &ExplainerConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let dim = x.len();
    let h = config.fd_step;
    let samples = sample_perturbations(x, config.noise_sigma, config.n_perturbations, config.seed)?;
    let mut slope = vec![0.0; dim];
    let mut probe = vec![0.0; dim];
    for s in samples.iter_rows() {
        probe.copy_from_slice(s);
        for d in 0..dim {
            probe[d] = s[d] + h;
            let up = evaluate(f, &probe)?;
            probe[d] = s[d] - h;
            let down = evaluate(f, &probe)?;
            probe[d] = s[d];
            slope[d] += (up - down) / (2.0 * h);
        }
    }
    let n = samples.rows() as f64;
    slope.iter_mut().for_each(|g| *g /= n);
    let at_x = evaluate(f, x)?;
    let intercept = at_x - slope.iter().zip(x).map(|(g, v)| g * v).sum::<f64>();
    slope.push(intercept);
    Ok(slope)
}
