//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::Instant;

use rand::Rng as _;

use explain_reduce::data::{build_loss_matrix, LossKind, LossMatrix};
use explain_reduce::experiment::{
    explain_subsample, prepare_repetition, run_experiment, write_sweep_csv, DataSource,
    ExperimentPlan, PredictorChoice, SweepAxis, SweepRow,
};
use explain_reduce::explainers::ExplainerConfig;
use explain_reduce::metrics::{self, epsilon_from_loss_matrix};
use explain_reduce::procedure::{map_new_item, ItemModelMap};
use explain_reduce::reduce::{
    exact_max_coverage, exact_min_loss, greedy_const_min_loss, greedy_max_coverage,
    greedy_min_loss, ExactBudget, ReductionMethod,
};
use explain_reduce::synth::SyntheticSpec;
use explain_reduce::util::{derive_seed, rng};
use explain_reduce::{Dataset, LocalModelSet, Matrix, Task};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Random instance family and a brute-force reference.

struct Instance {
    loss: LossMatrix,
    rows: Vec<Vec<f64>>,
    k: usize,
    eps: f64,
}

fn instance(seed: u64) -> Instance {
    let mut r = rng(derive_seed(0xACCE, &[seed]));
    let m = r.random_range(2..=12);
    let n = r.random_range(1..=30);
    let k = r.random_range(1..=4usize.min(m));
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| r.random::<f64>()).collect())
        .collect();
    let mut all: Vec<f64> = rows.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    // 20th percentile, nearest rank
    let eps = all[((0.2 * all.len() as f64).ceil() as usize).max(1) - 1];
    Instance {
        loss: LossMatrix::from_rows(&rows).unwrap(),
        rows,
        k,
        eps,
    }
}

fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

fn ref_covered(rows: &[Vec<f64>], s: &[usize], eps: f64) -> usize {
    (0..rows[0].len())
        .filter(|&j| s.iter().any(|&i| rows[i][j] <= eps))
        .count()
}

fn ref_loss(rows: &[Vec<f64>], s: &[usize]) -> f64 {
    let mut total = 0.0;
    for j in 0..rows[0].len() {
        total += s.iter().map(|&i| rows[i][j]).fold(f64::INFINITY, f64::min);
    }
    total
}

struct Reference {
    best_covered: usize,
    best_loss: f64,
}

fn reference(inst: &Instance) -> Reference {
    let subsets = combinations(inst.rows.len(), inst.k);
    Reference {
        best_covered: subsets
            .iter()
            .map(|s| ref_covered(&inst.rows, s, inst.eps))
            .max()
            .unwrap(),
        best_loss: subsets
            .iter()
            .map(|s| ref_loss(&inst.rows, s))
            .fold(f64::INFINITY, f64::min),
    }
}

const N_INSTANCES: u64 = 200;

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let budget = ExactBudget::default();
    let mut mismatches = 0;
    for seed in 0..N_INSTANCES {
        let inst = instance(seed);
        let want = reference(&inst);
        let cov = exact_max_coverage(&inst.loss, inst.eps, inst.k, budget).unwrap();
        let los = exact_min_loss(&inst.loss, inst.k, budget).unwrap();
        if cov.len() != inst.k
            || los.len() != inst.k
            || ref_covered(&inst.rows, &cov, inst.eps) != want.best_covered
            || ref_loss(&inst.rows, &los) != want.best_loss
        {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 60.0,
        format!("{mismatches} mismatches in {N_INSTANCES} instances, {secs:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    let mut below = 0;
    let mut ratios = Vec::new();
    for seed in 0..N_INSTANCES {
        let inst = instance(seed);
        let want = reference(&inst);
        let (s, _) = greedy_max_coverage(&inst.loss, inst.eps, inst.k).unwrap();
        let got = ref_covered(&inst.rows, &s, inst.eps);
        let k = inst.k as f64;
        let bound = 1.0 - ((k - 1.0) / k).powi(inst.k as i32);
        let ratio = if want.best_covered == 0 {
            1.0
        } else {
            got as f64 / want.best_covered as f64
        };
        if ratio < bound {
            below += 1;
        }
        ratios.push(ratio);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    outcome(
        below == 0 && mean >= 0.90,
        format!("{below} instances below the bound, mean ratio {mean:.4}"),
    )
}

fn criterion_3() -> Outcome {
    let mut below_one = 0;
    let mut ratios = Vec::new();
    for seed in 0..N_INSTANCES {
        let inst = instance(seed);
        let want = reference(&inst);
        let (s, _) = greedy_min_loss(&inst.loss, inst.k).unwrap();
        let got = ref_loss(&inst.rows, &s);
        let ratio = if want.best_loss == 0.0 {
            if got == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            got / want.best_loss
        };
        if ratio < 1.0 {
            below_one += 1;
        }
        ratios.push(ratio);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    outcome(
        below_one == 0 && (1.0..=2.5).contains(&mean),
        format!("{below_one} ratios below 1, mean ratio {mean:.4}"),
    )
}

// ---------------------------------------------------------------------------
// Synthetic pipeline criteria.

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Best agreement between two labelings over all one-to-one relabelings.
fn matched_agreement(a: &[usize], b: &[usize], n_labels: usize) -> f64 {
    let mut table = vec![vec![0usize; n_labels]; n_labels];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let best = permutations(n_labels)
        .iter()
        .map(|p| (0..n_labels).map(|i| table[i][p[i]]).sum::<usize>())
        .max()
        .unwrap();
    best as f64 / a.len() as f64
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let plan = ExperimentPlan {
        source: DataSource::Synthetic(SyntheticSpec {
            n_clusters: 4,
            noise_sigma: 0.5,
            ..SyntheticSpec::default()
        }),
        predictor: PredictorChoice::Oracle,
        explainer: ExplainerConfig::default(),
        ..ExperimentPlan::default()
    };
    let ctx = prepare_repetition(&plan, 0).unwrap();
    let sub = explain_subsample(&plan, &ctx, 0, 500).unwrap();
    let eps = epsilon_from_loss_matrix(&sub.loss, 0.10).unwrap();
    let (s, _) = greedy_max_coverage(&sub.loss, eps, 4).unwrap();
    let truth = ctx.truth.as_ref().unwrap();

    let mut worst_cos = f64::INFINITY;
    for beta in truth.beta.iter_rows() {
        let best = s
            .iter()
            .map(|&i| cosine(sub.models.coefficients().row(i), beta))
            .fold(f64::NEG_INFINITY, f64::max);
        worst_cos = worst_cos.min(best);
    }

    let map = ItemModelMap::from_losses(&sub.loss, &s);
    let test = ctx.test_hat.as_ref().unwrap();
    let assigned: Vec<usize> = test
        .x()
        .iter_rows()
        .map(|x| map_new_item(x, &sub.items, &map, 2.0).unwrap())
        .collect();
    let clusters = ctx.test_clusters.as_ref().unwrap();
    let agreement = matched_agreement(&assigned, clusters, 4);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_cos >= 0.95 && agreement >= 0.80 && secs < 120.0,
        format!("min best cosine {worst_cos:.4}, matched agreement {agreement:.4}, {secs:.1}s"),
    )
}

fn mean_test_fidelity(rows: &[SweepRow], pick: impl Fn(&SweepRow) -> bool) -> f64 {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| pick(r))
        .map(|r| r.metrics.as_ref().unwrap().test_fidelity.unwrap())
        .collect();
    assert!(!vals.is_empty());
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn criterion_5() -> Outcome {
    let plan = ExperimentPlan {
        axis: SweepAxis::K,
        values: vec![5.0],
        methods: vec![
            ReductionMethod::GreedyMinLoss,
            ReductionMethod::ConstMinLoss,
        ],
        repetitions: 5,
        seed: 5,
        ..ExperimentPlan::default()
    };
    let rows = run_experiment(&plan).unwrap();
    let full = mean_test_fidelity(&rows, |r| r.method == "full");
    let gml = mean_test_fidelity(&rows, |r| r.method == "greedy-min-loss");
    let cml = mean_test_fidelity(&rows, |r| r.method == "const-min-loss");
    outcome(
        gml <= 1.1 * full && cml <= 1.1 * full,
        format!(
            "full {full:.5}, greedy-min-loss {gml:.5} ({:.3}x), const-min-loss {cml:.5} ({:.3}x)",
            gml / full,
            cml / full
        ),
    )
}

fn criterion_6() -> Outcome {
    let plan = ExperimentPlan {
        axis: SweepAxis::SubsampleN,
        values: vec![100.0, 500.0],
        methods: vec![ReductionMethod::ConstMinLoss],
        include_full: false,
        exact_reference: false,
        repetitions: 5,
        seed: 6,
        ..ExperimentPlan::default()
    };
    let rows = run_experiment(&plan).unwrap();
    let small = mean_test_fidelity(&rows, |r| r.m == 100);
    let large = mean_test_fidelity(&rows, |r| r.m == 500);
    outcome(
        small <= 1.25 * large,
        format!(
            "m=100 {small:.5}, m=500 {large:.5}, ratio {:.3}",
            small / large
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut violations = Vec::new();
    // greedy traces on the instance family
    for seed in 0..N_INSTANCES {
        let inst = instance(seed);
        let traces = [
            greedy_max_coverage(&inst.loss, inst.eps, inst.k).unwrap().1,
            greedy_min_loss(&inst.loss, inst.k).unwrap().1,
            greedy_const_min_loss(&inst.loss, inst.eps, 0.8, inst.k)
                .unwrap()
                .trace,
        ];
        for t in &traces {
            for w in t.steps.windows(2) {
                if w[1].coverage < w[0].coverage || w[1].loss > w[0].loss {
                    violations.push(format!("trace of instance {seed}"));
                }
            }
        }
    }
    // coverage monotonicity and exact supermodularity on dyadic entries
    let mut r = rng(7);
    let mut checked = 0;
    while checked < 1000 {
        let m = r.random_range(3..=10);
        let n = r.random_range(1..=20);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                (0..n)
                    .map(|_| r.random_range(0..64) as f64 / 16.0)
                    .collect()
            })
            .collect();
        let loss = LossMatrix::from_rows(&rows).unwrap();
        let in_b: Vec<bool> = (0..m).map(|_| r.random_bool(0.5)).collect();
        let outside: Vec<usize> = (0..m).filter(|&i| !in_b[i]).collect();
        let b: Vec<usize> = (0..m).filter(|&i| in_b[i]).collect();
        if b.is_empty() || outside.is_empty() {
            continue;
        }
        let a: Vec<usize> = b.iter().copied().filter(|_| r.random_bool(0.5)).collect();
        let a = if a.is_empty() { vec![b[0]] } else { a };
        let v = outside[r.random_range(0..outside.len())];
        let with = |s: &[usize]| {
            let mut t = s.to_vec();
            t.push(v);
            t
        };
        let f = |s: &[usize]| metrics::min_loss_sum(&loss, s);
        if f(&a) - f(&with(&a)) < f(&b) - f(&with(&b)) {
            violations.push(format!("supermodularity, triple {checked}"));
        }
        let eps = rows[0][0];
        if metrics::coverage(&loss, &with(&b), eps) < metrics::coverage(&loss, &b, eps) {
            violations.push(format!("coverage monotonicity, triple {checked}"));
        }
        checked += 1;
    }
    outcome(
        violations.is_empty(),
        format!(
            "{} violations over {N_INSTANCES} instances x 3 traces and 1000 triples{}",
            violations.len(),
            violations
                .first()
                .map(|v| format!(" (first: {v})"))
                .unwrap_or_default()
        ),
    )
}

fn criterion_8() -> Outcome {
    let percentiles = [0.1, 0.2, 0.3, 0.5];
    let coverages = [0.5, 0.8, 0.95];
    let plan = ExperimentPlan {
        axis: SweepAxis::EpsilonGrid,
        values: percentiles.to_vec(),
        min_coverage_values: coverages.to_vec(),
        methods: vec![ReductionMethod::ConstMinLoss],
        include_full: false,
        repetitions: 5,
        seed: 8,
        ..ExperimentPlan::default()
    };
    let rows = run_experiment(&plan).unwrap();
    let mut cells = Vec::new();
    for &p in &percentiles {
        for &c in &coverages {
            cells.push(mean_test_fidelity(&rows, |r| {
                r.epsilon_percentile == p && r.min_coverage == c
            }));
        }
    }
    let lo = cells.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cells.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo;
    outcome(
        spread < 0.25,
        format!("test fidelity in [{lo:.5}, {hi:.5}] over 12 cells, relative spread {spread:.4}"),
    )
}

fn criterion_9() -> Outcome {
    let mut fails = Vec::new();

    // full-set training fidelity against column minima computed by hand
    let mut r = rng(9);
    for trial in 0..50 {
        let m = r.random_range(1..=15);
        let n = r.random_range(1..=40);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| r.random::<f64>() * 10.0).collect())
            .collect();
        let loss = LossMatrix::from_rows(&rows).unwrap();
        let all: Vec<usize> = (0..m).collect();
        let mut col_min_mean = 0.0;
        for j in 0..n {
            col_min_mean += (0..m).map(|i| rows[i][j]).fold(f64::INFINITY, f64::min);
        }
        col_min_mean /= n as f64;
        if (metrics::mean_min_loss(&loss, &all) - col_min_mean).abs() > 1e-12 {
            fails.push(format!("fidelity identity, trial {trial}"));
        }
    }

    // one global model that reproduces the labels exactly
    let coef = [0.5, -2.0, 1.25];
    let pts: Vec<Vec<f64>> = (0..30)
        .map(|_| vec![r.random_range(-4..=4) as f64, r.random_range(-4..=4) as f64])
        .collect();
    let y: Vec<f64> = pts
        .iter()
        .map(|p| coef[0] * p[0] + coef[1] * p[1] + coef[2])
        .collect();
    let data = Dataset::new(Matrix::from_rows(&pts).unwrap(), y, Task::Regression).unwrap();
    let models = LocalModelSet::new(
        explain_reduce::ModelKind::LinearRegression,
        Matrix::from_rows(&[coef.to_vec()]).unwrap(),
        None,
    )
    .unwrap();
    let loss = build_loss_matrix(&models, &data, LossKind::SquaredError).unwrap();
    let assigned = vec![0; data.len()];
    let inst = metrics::instability(
        &data,
        &models,
        &assigned,
        metrics::DEFAULT_KAPPA,
        LossKind::SquaredError,
    )
    .unwrap();
    if inst != 0.0 {
        fails.push(format!("instability of exact global model is {inst}"));
    }
    if metrics::mean_min_loss(&loss, &[0]) != 0.0 {
        fails.push("training fidelity of exact global model is not 0".into());
    }
    if metrics::DEFAULT_KAPPA != 5 || ExperimentPlan::default().kappa != 5 {
        fails.push("neighbourhood size is not 5".into());
    }
    outcome(
        fails.is_empty(),
        if fails.is_empty() {
            "50 fidelity identities, zero instability, kappa = 5".to_string()
        } else {
            fails.join("; ")
        },
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let small = ExperimentPlan {
        source: DataSource::Synthetic(SyntheticSpec {
            n_items: 400,
            ..SyntheticSpec::default()
        }),
        values: vec![1.0, 3.0, 5.0],
        repetitions: 3,
        subsample: 60,
        seed: 10,
        ..ExperimentPlan::default()
    };
    explain_reduce::io::write_json(&plan, &small).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("sweep{run}.csv"));
        let code = explain_reduce::cli::run([
            "explain-reduce".into(),
            "experiment".into(),
            "--plan".into(),
            plan.clone().into_os_string(),
            "--out".into(),
            out.clone().into_os_string(),
        ] as [std::ffi::OsString; 6]);
        assert_eq!(code, 0);
        outputs.push(std::fs::read(&out).unwrap());
    }
    let mut in_memory = Vec::new();
    write_sweep_csv(&mut in_memory, &run_experiment(&small).unwrap()).unwrap();
    let same = outputs[0] == outputs[1] && outputs[0] == in_memory;
    outcome(
        same && !outputs[0].is_empty(),
        format!(
            "{} bytes, identical across two CLI runs and the library",
            outputs[0].len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("exact solvers match brute-force enumeration", criterion_1),
        ("greedy coverage approximation bound", criterion_2),
        ("greedy min-loss ratio", criterion_3),
        ("synthetic cluster recovery", criterion_4),
        ("small proxy sets match full-set test fidelity", criterion_5),
        ("subsample robustness", criterion_6),
        ("monotonicity and supermodularity", criterion_7),
        ("epsilon / min-coverage sensitivity", criterion_8),
        ("metric identities", criterion_9),
        ("end-to-end determinism", criterion_10),
    ];
    // optional criterion numbers on the command line restrict the run
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({}; {:.1}s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
