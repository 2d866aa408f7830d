use crate::data::LossMatrix;
use crate::error::{Error, Result};

use super::{check_epsilon, check_k, item_sets, ItemSet, ReductionTrace, TraceObjective};

/// Relative slack under which two floating-point scores count as tied.
const TIE_RTOL: f64 = 1e-12;

#[inline]
fn clearly_less(a: f64, b: f64) -> bool {
    a < b - TIE_RTOL * b.abs()
}

#[inline]
fn clearly_greater(a: f64, b: f64) -> bool {
    a > b + TIE_RTOL * b.abs()
}

/// Greedy maximum coverage: repeatedly add the model covering the most
/// still-uncovered items. When no model adds coverage the lowest remaining
/// index is taken so that exactly `k` models are returned.
pub fn greedy_max_coverage(
    loss: &LossMatrix,
    epsilon: f64,
    k: usize,
) -> Result<(Vec<usize>, ReductionTrace)> {
    check_k(k, loss.n_models())?;
    check_epsilon(epsilon)?;
    let sets = item_sets(loss, epsilon);
    let mut covered = ItemSet::empty(loss.n_items());
    let mut taken = vec![false; loss.n_models()];
    let mut selected = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, usize)> = None;
        for (i, set) in sets.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let gain = set.gain_over(&covered);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let (i, _) = best.expect("k <= m leaves a candidate");
        taken[i] = true;
        covered.union_with(&sets[i]);
        selected.push(i);
    }
    let trace = ReductionTrace::build(loss, &selected, Some(epsilon), TraceObjective::Coverage);
    Ok((selected, trace))
}

/// Greedy ascent on the mean-min loss: repeatedly add the model giving the
/// largest decrease of `mean_j min_{i in S} L[i][j]`.
pub fn greedy_min_loss(loss: &LossMatrix, k: usize) -> Result<(Vec<usize>, ReductionTrace)> {
    check_k(k, loss.n_models())?;
    let mut best_per_item = vec![f64::INFINITY; loss.n_items()];
    let mut taken = vec![false; loss.n_models()];
    let mut selected = Vec::with_capacity(k);
    for _ in 0..k {
        let i = best_loss_candidate(loss, &best_per_item, &taken);
        add_model(loss, i, &mut best_per_item);
        taken[i] = true;
        selected.push(i);
    }
    let trace = ReductionTrace::build(loss, &selected, None, TraceObjective::MeanMinLoss);
    Ok((selected, trace))
}

fn candidate_sum(row: &[f64], best_per_item: &[f64]) -> f64 {
    row.iter().zip(best_per_item).map(|(&a, &b)| a.min(b)).sum()
}

fn add_model(loss: &LossMatrix, i: usize, best_per_item: &mut [f64]) {
    for (b, &v) in best_per_item.iter_mut().zip(loss.row(i)) {
        *b = b.min(v);
    }
}

fn best_loss_candidate(loss: &LossMatrix, best_per_item: &[f64], taken: &[bool]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..loss.n_models() {
        if taken[i] {
            continue;
        }
        let s = candidate_sum(loss.row(i), best_per_item);
        if best.is_none_or(|(_, b)| clearly_less(s, b)) {
            best = Some((i, s));
        }
    }
    best.expect("k <= m leaves a candidate").0
}

/// Result of the coverage-constrained greedy reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstMinLoss {
    pub selected: Vec<usize>,
    pub trace: ReductionTrace,
    pub coverage: f64,
    pub constraint_met: bool,
}

/// Greedy loss minimisation under a soft coverage constraint.
///
/// While coverage is below `min_coverage`, each step minimises the
/// coverage-normalised loss `sum_j min_{S+i} L_ij / |covered(S+i)|` among the
/// candidates that cover at least one new item. Candidates covering nothing
/// new rank after all of those, ordered among themselves by loss decrease.
/// Once the constraint holds, scoring falls back to the plain loss decrease.
/// The empty set's per-item loss is taken to be the worst loss in each
/// column, so first-step decreases are finite.
///
/// `min_coverage = 0` makes the constraint hold from the start, which
/// reproduces [`greedy_min_loss`].
pub fn greedy_const_min_loss(
    loss: &LossMatrix,
    epsilon: f64,
    min_coverage: f64,
    k: usize,
) -> Result<ConstMinLoss> {
    check_k(k, loss.n_models())?;
    check_epsilon(epsilon)?;
    if !(0.0..=1.0).contains(&min_coverage) {
        return Err(Error::InvalidConfig(format!(
            "minimum coverage {min_coverage} must lie in [0, 1]"
        )));
    }
    let n = loss.n_items();
    let m = loss.n_models();
    let sets = item_sets(loss, epsilon);
    let mut covered = ItemSet::empty(n);
    let mut best_per_item: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| loss.get(i, j)).fold(0.0, f64::max))
        .collect();
    let mut taken = vec![false; m];
    let mut selected = Vec::with_capacity(k);
    for _ in 0..k {
        let coverage = covered.len() as f64 / n as f64;
        let i = if coverage < min_coverage {
            let current: f64 = best_per_item.iter().sum();
            let already = covered.len();
            // (index, score, dc): score is the normalised loss when dc > 0,
            // the loss decrease otherwise
            let mut best: Option<(usize, f64, usize)> = None;
            for c in 0..m {
                if taken[c] {
                    continue;
                }
                let after = candidate_sum(loss.row(c), &best_per_item);
                let dc = sets[c].gain_over(&covered);
                let score = if dc > 0 {
                    after / (already + dc) as f64
                } else {
                    current - after
                };
                let better = match best {
                    None => true,
                    Some((_, bs, bdc)) => match (dc > 0, bdc > 0) {
                        (true, false) => true,
                        (false, true) => false,
                        (true, true) => clearly_greater(bs, score),
                        (false, false) => clearly_greater(score, bs),
                    },
                };
                if better {
                    best = Some((c, score, dc));
                }
            }
            best.expect("k <= m leaves a candidate").0
        } else {
            best_loss_candidate(loss, &best_per_item, &taken)
        };
        add_model(loss, i, &mut best_per_item);
        covered.union_with(&sets[i]);
        taken[i] = true;
        selected.push(i);
    }
    let coverage = covered.len() as f64 / n as f64;
    let trace = ReductionTrace::build(loss, &selected, Some(epsilon), TraceObjective::MeanMinLoss);
    Ok(ConstMinLoss {
        selected,
        trace,
        coverage,
        constraint_met: coverage >= min_coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::l3x4;
    use super::*;
    use crate::metrics::{coverage, mean_min_loss};

    #[test]
    fn max_coverage_on_fixture() {
        let l = l3x4();
        let (s, trace) = greedy_max_coverage(&l, 0.2, 2).unwrap();
        assert_eq!(s, vec![0, 1]);
        assert_eq!(coverage(&l, &s, 0.2), 0.75);
        assert_eq!(trace.steps.len(), 2);
        let (s, _) = greedy_max_coverage(&l, 0.2, 3).unwrap();
        assert_eq!(s, vec![0, 1, 2]);
        assert_eq!(coverage(&l, &s, 0.2), 1.0);
    }

    #[test]
    fn max_coverage_picks_universal_model() {
        let l =
            LossMatrix::from_rows(&[[0.5, 0.0, 0.5], [0.0, 0.1, 0.0], [0.5, 0.5, 0.0]]).unwrap();
        let (s, _) = greedy_max_coverage(&l, 0.2, 1).unwrap();
        assert_eq!(s, vec![1]);
    }

    #[test]
    fn zero_gain_fills_with_lowest_index() {
        let l = LossMatrix::from_rows(&[[0.9, 0.9], [0.0, 0.0], [0.9, 0.9], [0.9, 0.9]]).unwrap();
        let (s, _) = greedy_max_coverage(&l, 0.2, 3).unwrap();
        assert_eq!(s, vec![1, 0, 2]);
    }

    #[test]
    fn min_loss_on_fixture() {
        let l = l3x4();
        let (s, _) = greedy_min_loss(&l, 1).unwrap();
        assert_eq!(s, vec![0]);
        assert!((mean_min_loss(&l, &s) - 0.5).abs() < 1e-15);
        // adding model 1 or 2 both give 0.3; the tie goes to 1
        let (s, trace) = greedy_min_loss(&l, 2).unwrap();
        assert_eq!(s, vec![0, 1]);
        assert!((mean_min_loss(&l, &s) - 0.3).abs() < 1e-15);
        assert!((trace.steps[1].loss - 0.3).abs() < 1e-15);
    }

    #[test]
    fn min_loss_prefers_zero_row() {
        let l = LossMatrix::from_rows(&[[0.3, 0.1], [0.0, 0.0], [0.1, 0.1]]).unwrap();
        let (s, _) = greedy_min_loss(&l, 1).unwrap();
        assert_eq!(s, vec![1]);
        assert_eq!(mean_min_loss(&l, &s), 0.0);
    }

    #[test]
    fn const_min_loss_on_fixture() {
        let l = l3x4();
        let r = greedy_const_min_loss(&l, 0.2, 0.75, 2).unwrap();
        assert_eq!(r.selected, vec![0, 1]);
        assert_eq!(r.coverage, 0.75);
        assert!(r.constraint_met);

        let r = greedy_const_min_loss(&l, 0.2, 1.0, 1).unwrap();
        assert_eq!(r.selected.len(), 1);
        assert!(!r.constraint_met);
    }

    #[test]
    fn const_min_loss_prefers_coverage_while_unmet() {
        // model 0 has the lowest mean loss but covers nothing at eps = 0.2;
        // model 1 covers item 0
        let l =
            LossMatrix::from_rows(&[[0.3, 0.3, 0.3], [0.1, 2.0, 2.0], [2.0, 2.0, 2.0]]).unwrap();
        let r = greedy_const_min_loss(&l, 0.2, 0.3, 1).unwrap();
        assert_eq!(r.selected, vec![1]);
        assert!(r.constraint_met);
        let (plain, _) = greedy_min_loss(&l, 1).unwrap();
        assert_eq!(plain, vec![0]);
    }

    #[test]
    fn const_min_loss_normalises_by_coverage() {
        // a: covers items 0 and 1, loss sum 2, normalised 2 / 2 = 1
        // b: covers item 0 only, loss sum 1.5, normalised 1.5 / 1 = 1.5
        let l = LossMatrix::from_rows(&[[0.0, 0.0, 1.0, 1.0], [0.0, 0.5, 0.5, 0.5]]).unwrap();
        let r = greedy_const_min_loss(&l, 0.1, 1.0, 1).unwrap();
        assert_eq!(r.selected, vec![0]);
        assert_eq!(r.coverage, 0.5);
        assert_eq!(greedy_min_loss(&l, 1).unwrap().0, vec![1]);
    }

    #[test]
    fn const_min_loss_without_constraint_matches_min_loss() {
        let l = l3x4();
        for k in 1..=3 {
            let r = greedy_const_min_loss(&l, 0.2, 0.0, k).unwrap();
            assert_eq!(r.selected, greedy_min_loss(&l, k).unwrap().0);
        }
    }

    #[test]
    fn rejects_bad_k_and_epsilon() {
        let l = l3x4();
        assert!(greedy_max_coverage(&l, 0.2, 0).is_err());
        assert!(greedy_max_coverage(&l, 0.2, 4).is_err());
        assert!(greedy_max_coverage(&l, 0.0, 1).is_err());
        assert!(greedy_const_min_loss(&l, 0.2, 1.5, 1).is_err());
    }
}
