use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use explain_reduce::cli::evaluate_artifacts;
use explain_reduce::data::{build_loss_matrix, LocalModelSet, LossKind, Task};
use explain_reduce::io;
use explain_reduce::metrics::MetricReport;
use explain_reduce::procedure::ProxySet;
use explain_reduce::synth::SyntheticGroundTruth;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_explain-reduce"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

/// Small synthetic data set with explanations and proxies.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let d = dir.path();
        ok(&[
            "generate", "--n-items", "240", "--n-clusters", "3", "--seed", "4",
            "--test-fraction", "0.25", "--out", &p(d, "gen"),
        ]);
        ok(&[
            "explain", "--data", &p(d, "gen/train.csv"), "--predictor", "knn",
            "--m", "40", "--seed", "1", "--out", &p(d, "models.json"),
            "--predictions-out", &p(d, "train_hat.csv"),
            "--test", &p(d, "gen/test.csv"), "--test-predictions-out", &p(d, "test_hat.csv"),
        ]);
        ok(&[
            "reduce", "--data", &p(d, "train_hat.csv"), "--models", &p(d, "models.json"),
            "--method", "greedy-min-loss", "--k", "3", "--true-data", &p(d, "gen/train.csv"),
            "--out", &p(d, "proxies.json"), "--trace", &p(d, "trace.csv"),
        ]);
        Self { dir }
    }

    fn path(&self, name: &str) -> String {
        p(self.dir.path(), name)
    }
}

#[test]
fn generate_is_deterministic_and_labels_follow_the_truth() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        ok(&[
            "generate", "--n-items", "150", "--n-features", "10", "--seed", "9",
            "--sigma-e", "0", "--out", &p(d, out),
        ]);
    }
    let a = std::fs::read(d.join("a/data.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b/data.csv")).unwrap());
    assert_eq!(
        std::fs::read(d.join("a/truth.json")).unwrap(),
        std::fs::read(d.join("b/truth.json")).unwrap()
    );

    let text = String::from_utf8(a).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 11);
    assert_eq!(*header.last().unwrap(), "target");

    let data = io::read_dataset_file(&d.join("a/data.csv"), "target", Task::Regression)
        .unwrap()
        .unwrap();
    let truth: SyntheticGroundTruth = io::read_json(&d.join("a/truth.json")).unwrap();
    assert_eq!(data.len(), 150);
    for j in 0..data.len() {
        let beta = truth.beta.row(truth.cluster_id[j]);
        let x = data.x().row(j);
        let y: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + beta[x.len()];
        assert!((y - data.y()[j]).abs() < 1e-9 * y.abs().max(1.0));
    }
}

#[test]
fn explain_is_reproducible_and_clamps_to_the_data() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["generate", "--n-items", "30", "--seed", "2", "--out", &p(d, "gen")]);
    let data = p(d, "gen/data.csv");
    let mut outputs = Vec::new();
    for name in ["m1.json", "m2.json"] {
        let out = ok(&[
            "explain", "--data", &data, "--m", "50", "--trees", "10", "--seed", "7",
            "--out", &p(d, name),
        ]);
        assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
        outputs.push(std::fs::read(d.join(name)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let models: LocalModelSet = io::read_json(&d.join("m1.json")).unwrap();
    assert_eq!(models.len(), 30);
    let mut origin = models.origin().unwrap().to_vec();
    origin.sort_unstable();
    assert_eq!(origin, (0..30).collect::<Vec<_>>());
}

#[test]
fn reduce_writes_a_trace_and_handles_large_k() {
    let f = Fixture::new();
    let trace = std::fs::read_to_string(f.path("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iteration,chosen_index,coverage,objective"));
    assert_eq!(lines.count(), 3);

    let out = ok(&[
        "reduce", "--data", &f.path("train_hat.csv"), "--models", &f.path("models.json"),
        "--method", "greedy-max-coverage", "--k", "100", "--out", &f.path("all.json"),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let all: ProxySet = io::read_json(Path::new(&f.path("all.json"))).unwrap();
    assert_eq!(all.indices.len(), 40);
}

#[test]
fn full_set_fidelity_is_the_mean_column_minimum() {
    let f = Fixture::new();
    let all = f.path("all.json");
    ok(&[
        "reduce", "--data", &f.path("train_hat.csv"), "--models", &f.path("models.json"),
        "--method", "greedy-min-loss", "--k", "40", "--out", &all,
    ]);
    let out = ok(&[
        "evaluate", "--data", &f.path("train_hat.csv"), "--models", &f.path("models.json"),
        "--proxies", &all,
    ]);
    let report: MetricReport = serde_json::from_slice(&out.stdout).unwrap();

    let data = io::read_dataset_file(Path::new(&f.path("train_hat.csv")), "target", Task::Regression)
        .unwrap()
        .unwrap();
    let models: LocalModelSet = io::read_json(Path::new(&f.path("models.json"))).unwrap();
    let loss = build_loss_matrix(&models, &data, LossKind::SquaredError).unwrap();
    let expected = (0..loss.n_items())
        .map(|j| (0..loss.n_models()).map(|i| loss.get(i, j)).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / loss.n_items() as f64;
    assert!((report.train_fidelity - expected).abs() <= 1e-12 * expected.max(1.0));
}

#[test]
fn evaluate_matches_the_in_memory_metrics() {
    let f = Fixture::new();
    let out_path = f.path("report.json");
    ok(&[
        "evaluate", "--data", &f.path("train_hat.csv"), "--models", &f.path("models.json"),
        "--proxies", &f.path("proxies.json"), "--test", &f.path("test_hat.csv"),
        "--true-data", &f.path("gen/train.csv"), "--out", &out_path,
    ]);
    let served: MetricReport = io::read_json(Path::new(&out_path)).unwrap();

    let load = |name: &str| {
        io::read_dataset_file(Path::new(&f.path(name)), "target", Task::Regression)
            .unwrap()
            .unwrap()
    };
    let models: LocalModelSet = io::read_json(Path::new(&f.path("models.json"))).unwrap();
    let proxies: ProxySet = io::read_json(Path::new(&f.path("proxies.json"))).unwrap();
    let direct = evaluate_artifacts(
        &load("train_hat.csv"),
        Some(&load("gen/train.csv")),
        Some(&load("test_hat.csv")),
        &models,
        &proxies,
        proxies.config.epsilon,
        5,
        proxies.config.p_norm,
    )
    .unwrap();

    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-12 * a.abs().max(1.0),
        (None, None) => true,
        _ => false,
    };
    assert!(served.test_fidelity.is_some() && served.instability.is_some());
    assert!(close(Some(served.train_fidelity), Some(direct.train_fidelity)));
    assert!(close(served.test_fidelity, direct.test_fidelity));
    assert!(close(served.instability, direct.instability));
    assert!(close(served.coverage, direct.coverage));
}

#[test]
fn empty_test_set_is_a_warning() {
    let f = Fixture::new();
    let header = std::fs::read_to_string(f.path("test_hat.csv")).unwrap();
    let empty = f.path("empty.csv");
    std::fs::write(&empty, format!("{}\n", header.lines().next().unwrap())).unwrap();
    let out = ok(&[
        "evaluate", "--data", &f.path("train_hat.csv"), "--models", &f.path("models.json"),
        "--proxies", &f.path("proxies.json"), "--test", &empty,
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.get("test_fidelity").is_none());
    assert!(report.get("train_fidelity").is_some());
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["reduce", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["explain"]).status.code(), Some(1));

    let missing = run(&[
        "explain", "--data", "/nonexistent/data.csv", "--out", "/tmp/never.json",
    ]);
    assert_eq!(missing.status.code(), Some(3));

    let f = Fixture::new();
    let bad_json = f.path("bad.json");
    std::fs::write(&bad_json, "{ not json").unwrap();
    let out = run(&[
        "reduce", "--data", &f.path("train_hat.csv"), "--models", &bad_json,
        "--out", &f.path("x.json"),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let out = run(&[
        "reduce", "--data", &f.path("train_hat.csv"), "--models", &f.path("models.json"),
        "--method", "exact-min-loss", "--k", "8", "--max-exact-k", "3",
        "--out", &f.path("x.json"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_values_yield_to_flags() {
    let f = Fixture::new();
    let cfg: PathBuf = f.dir.path().join("reduce.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"data": "{}", "models": "{}", "method": "random", "k": 2, "seed": 3}}"#,
            f.path("train_hat.csv"),
            f.path("models.json")
        ),
    )
    .unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    ok(&["reduce", "--config", &cfg, "--out", &f.path("c1.json")]);
    ok(&["reduce", "--config", &cfg, "--k", "4", "--out", &f.path("c2.json")]);
    let a: ProxySet = io::read_json(Path::new(&f.path("c1.json"))).unwrap();
    let b: ProxySet = io::read_json(Path::new(&f.path("c2.json"))).unwrap();
    assert_eq!(a.indices.len(), 2);
    assert_eq!(b.indices.len(), 4);
}
