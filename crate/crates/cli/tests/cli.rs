use std::fs;
use std::path::Path;
use std::process::Command;

use evoxplain::gnn::{forward, load_weights};
use evoxplain_cli::{Dataset, RunConfig};
use serde_json::Value;

fn evoxplain(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_evoxplain"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Four nodes I=0, J=1, K=2, L=3; edge J–K appears at time 1.
fn toy(dir: &Path, extra: &str) {
    fs::write(dir.join("edges.txt"), "# src dst time\n0 1 0\n2 3 0\n1 2 1\n").unwrap();
    fs::write(
        dir.join("features.txt"),
        "4 3\n0.5 -0.2 0.9\n-0.7 0.4 0.1\n0.3 0.8 -0.6\n-0.1 -0.9 0.5\n",
    )
    .unwrap();
    fs::write(dir.join("labels.txt"), "0 0\n1 1\n2 0\n3 1\n").unwrap();
    let cfg = format!(
        "task = \"node\"\nseed = 4\nthreshold = 0.0\n{extra}\n[files]\nedges = \"edges.txt\"\nfeatures = \"features.txt\"\nlabels = \"labels.txt\"\nwindows = [[0, 0], [0, 1]]\n[gnn]\nlayers = 2\nepochs = 30\n"
    );
    fs::write(dir.join("run.toml"), cfg).unwrap();
}

fn synthetic(dir: &Path, extra: &str) {
    let cfg = format!(
        "task = \"node\"\nseed = 21\nweights = \"weights.json\"\n{extra}\n[synthetic]\nevolution = \"mixed\"\nnum_nodes = 60\n[gnn]\nlayers = 2\nepochs = 40\n"
    );
    fs::write(dir.join("run.toml"), cfg).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn toy_explanation_lists_two_of_four_paths() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), "");
    assert_eq!(evoxplain(dir.path(), &["--config", "run.toml", "train"]).0, 0);
    let (code, _, err) = evoxplain(dir.path(), &["--config", "run.toml", "explain", "--target", "1", "--n", "2"]);
    assert_eq!(code, 0, "{err}");
    let out = read_json(&dir.path().join("out/explain-1-n2.json"));
    assert_eq!(out["m"], 4);
    let selected = out["selected"].as_array().unwrap();
    assert_eq!(selected.len(), 2);
    let altered = [[1, 2, 1], [2, 1, 1], [2, 2, 1], [3, 2, 1]];
    for p in selected {
        let nodes: Vec<u64> = p["nodes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        assert!(altered.iter().any(|a| a.as_slice() == nodes.as_slice()), "{nodes:?}");
        assert_eq!(p["kind"], "added");
        assert_eq!(p["logit_contribution"].as_array().unwrap().len(), 2);
        assert_eq!(p["contribution"], p["logit_contribution"]);
    }
    assert!(out["solver"]["converged"].as_bool().unwrap());

    let (code, _, _) = evoxplain(dir.path(), &["--config", "run.toml", "explain", "--target", "1", "--n", "4"]);
    assert_eq!(code, 0);
    let full = read_json(&dir.path().join("out/explain-1-n4.json"));
    assert!(full["kl_minus"].as_f64().unwrap() <= 1e-9);
    assert!(full["kl_plus"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn explain_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), "");
    assert_eq!(evoxplain(dir.path(), &["--config", "run.toml", "train"]).0, 0);
    let (code, _, err) = evoxplain(dir.path(), &["--config", "run.toml", "explain", "--target", "42"]);
    assert_eq!(code, 4, "{err}");
    assert!(err.contains("42"));

    toy(dir.path(), "max_paths = 2");
    let (code, _, err) = evoxplain(dir.path(), &["--config", "run.toml", "explain", "--target", "1", "--n", "1"]);
    assert_eq!(code, 5, "{err}");

    let high = "threshold = 1e9";
    toy(dir.path(), "");
    let cfg = fs::read_to_string(dir.path().join("run.toml")).unwrap().replace("threshold = 0.0", high);
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let (code, _, err) = evoxplain(dir.path(), &["--config", "run.toml", "explain", "--target", "1", "--n", "1"]);
    assert_eq!(code, 4, "{err}");
    assert!(err.contains("below the threshold"));
}

#[test]
fn missing_features_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), "");
    fs::remove_file(dir.path().join("features.txt")).unwrap();
    let (code, _, err) = evoxplain(dir.path(), &["--config", "run.toml", "train"]);
    assert_eq!(code, 2);
    assert!(err.contains("features.txt"), "{err}");
}

#[test]
fn bad_config_and_flags_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "task = \"node\"\nunknown_key = 3\n").unwrap();
    assert_eq!(evoxplain(dir.path(), &["--config", "run.toml", "train"]).0, 2);
    assert_eq!(evoxplain(dir.path(), &["train"]).0, 2);
    synthetic(dir.path(), "");
    assert_eq!(evoxplain(dir.path(), &["--config", "run.toml", "--workers", "0", "train"]).0, 2);
    assert_eq!(
        evoxplain(dir.path(), &["--config", "run.toml", "evaluate", "--methods", "convex,bogus"]).0,
        2
    );
    assert_eq!(evoxplain(dir.path(), &["--config", "run.toml", "evaluate"]).0, 2, "weights missing");
}

#[test]
fn training_divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), "");
    let cfg = fs::read_to_string(dir.path().join("run.toml")).unwrap().replace("epochs = 30", "epochs = 30\nlr = 1e300");
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let (code, _, err) = evoxplain(dir.path(), &["--config", "run.toml", "train"]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn training_is_reproducible_and_reloads_exactly() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), "");
    let (code, stdout, _) = evoxplain(dir.path(), &["--config", "run.toml", "--out", "a", "train"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("final loss") && stdout.contains("accuracy"));
    let first = fs::read(dir.path().join("weights.json")).unwrap();
    assert_eq!(evoxplain(dir.path(), &["--config", "run.toml", "--out", "b", "train"]).0, 0);
    assert_eq!(first, fs::read(dir.path().join("weights.json")).unwrap());

    let cfg = RunConfig::load(&dir.path().join("run.toml")).unwrap();
    let data = Dataset::load(&cfg).unwrap();
    let trained = data.train(&cfg.train_config()).unwrap().weights;
    let loaded = load_weights(&dir.path().join("weights.json")).unwrap();
    let g = &data.pairs[0].g1;
    assert_eq!(forward(g, &trained).unwrap().output_matrix(), forward(g, &loaded).unwrap().output_matrix());

    let resolved = RunConfig::load(&dir.path().join("a/config.resolved.toml")).unwrap();
    assert_eq!(resolved.seed, 21);
    assert_eq!(evoxplain(dir.path(), &["--config", "run.toml", "--seed", "5", "--out", "c", "ingest"]).0, 0);
    let resolved = RunConfig::load(&dir.path().join("c/config.resolved.toml")).unwrap();
    assert_eq!(resolved.seed, 5);
}

#[test]
fn evaluate_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), "");
    assert_eq!(evoxplain(dir.path(), &["--config", "run.toml", "train"]).0, 0);
    for out in ["r1", "r2"] {
        let (code, _, err) = evoxplain(dir.path(), &["--config", "run.toml", "--out", out, "--workers", "3", "evaluate"]);
        assert_eq!(code, 0, "{err}");
    }
    for file in ["records.csv", "summary.json", "kl_plus.svg", "kl_minus.svg"] {
        let a = fs::read(dir.path().join("r1/report").join(file)).unwrap();
        let b = fs::read(dir.path().join("r2/report").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let csv = fs::read_to_string(dir.path().join("r1/report/records.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn evaluate_methods_subset_and_empty_targets() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), "");
    assert_eq!(evoxplain(dir.path(), &["--config", "run.toml", "train"]).0, 0);
    let (code, _, _) = evoxplain(dir.path(), &["--config", "run.toml", "evaluate", "--methods", "convex,topk"]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("out/report/records.csv")).unwrap();
    let methods: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(methods.into_iter().collect::<Vec<_>>(), ["convex", "topk"]);

    synthetic(dir.path(), "threshold = 1e9");
    let (code, _, err) = evoxplain(dir.path(), &["--config", "run.toml", "--out", "empty", "evaluate"]);
    assert_eq!(code, 0);
    assert!(err.contains("no target"), "{err}");
    let csv = fs::read_to_string(dir.path().join("empty/report/records.csv")).unwrap();
    assert_eq!(csv, "target,task,m,method,n,kl_plus,kl_minus,wall_ms\n");
}

#[test]
fn ingest_writes_snapshots_and_delta() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), "");
    let (code, _, err) = evoxplain(dir.path(), &["--config", "run.toml", "ingest"]);
    assert_eq!(code, 0, "{err}");
    let pairs = read_json(&dir.path().join("out/ingest/pairs.json"));
    assert_eq!(pairs[0]["delta"], serde_json::json!([[1, 2, "added"]]));
    let g0 = read_json(&dir.path().join("out/ingest/snapshot_0.json"));
    assert_eq!(g0["num_edges"], 2);
    assert!(dir.path().join("out/config.resolved.toml").is_file());
}
