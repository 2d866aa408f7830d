use crate::error::Result;
use crate::util::rng;

use super::check_k;

/// Uniform sample of `k` distinct model indices out of `m`, ascending.
pub fn random_baseline(m: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    check_k(k, m)?;
    let mut rng = rng(seed);
    let mut picked = rand::seq::index::sample(&mut rng, m, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}
