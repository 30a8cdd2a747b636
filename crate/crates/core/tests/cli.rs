use std::path::Path;
use std::process::{Command, Output};

use bagmil::bagcore::{read_bags_jsonl, transform, write_bags_jsonl, Bag, BagDataset, Task};
use bagmil::estimators::{MilModel, ModelFile};
use serde_json::Value;

fn bagmil(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bagmil"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

const SMALL_NET: &str = r#"{"kind": "neural", "task": "regression", "encoder_hidden": [16],
    "attention_hidden": 8, "head_hidden": [8], "epochs": 15, "seed": 3}"#;

#[test]
fn generate_ppi_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["generate", "ppi", "--num-bags", "100", "--seed", "42", "-o", "a.jsonl"];
    let summary = json_stdout(&bagmil(dir.path(), &args));
    assert_eq!(summary["num_positive"], 50);
    let ds = read_bags_jsonl(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(ds.len(), 100);
    assert_eq!(ds.num_positive(), 50);
    let mut again = args;
    again[7] = "b.jsonl";
    json_stdout(&bagmil(dir.path(), &again));
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bagmil(dir.path(), &["generate", "mnist-clf", "-o", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("IDX"));

    assert_eq!(bagmil(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        bagmil(dir.path(), &["generate", "ppi", "--num-bags", "x"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(bagmil(dir.path(), &["--help"]).status.code(), Some(0));

    std::fs::write(dir.path().join("cfg.json"), r#"{"num_bags": 4, "colour": 1}"#).unwrap();
    let out = bagmil(
        dir.path(),
        &["generate", "additive", "--config", "cfg.json", "-o", "y.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));

    let out = bagmil(
        dir.path(),
        &["evaluate", "--model", "missing.json", "--data", "missing.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_values_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"num_bags": 12, "dim": 4}"#).unwrap();
    let s = json_stdout(&bagmil(
        dir.path(),
        &["generate", "additive", "--config", "cfg.json", "-o", "a.jsonl"],
    ));
    assert_eq!((s["num_bags"].as_u64(), s["dim"].as_u64()), (Some(12), Some(4)));
    let s = json_stdout(&bagmil(
        dir.path(),
        &[
            "generate",
            "additive",
            "--config",
            "cfg.json",
            "--num-bags",
            "6",
            "-o",
            "a.jsonl",
        ],
    ));
    assert_eq!(s["num_bags"], 6);
}

#[test]
fn train_reload_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    json_stdout(&bagmil(
        d,
        &[
            "generate",
            "additive",
            "--num-bags",
            "120",
            "--dim",
            "6",
            "-o",
            "add.jsonl",
        ],
    ));
    std::fs::write(d.join("net.json"), SMALL_NET).unwrap();
    let summary = json_stdout(&bagmil(
        d,
        &[
            "train",
            "--data",
            "add.jsonl",
            "--config",
            "net.json",
            "--epochs",
            "40",
            "-o",
            "model.json",
        ],
    ));
    assert_eq!(summary["epochs"], 40);
    let first = summary["initial_loss"].as_f64().unwrap();
    let last = summary["final_loss"].as_f64().unwrap();
    assert!(last < first, "loss went from {first} to {last}");

    let file = ModelFile::load(d.join("model.json")).unwrap();
    let reloaded = MilModel::from_json(&file.model.to_json().unwrap()).unwrap();
    let ds = read_bags_jsonl(d.join("add.jsonl")).unwrap();
    let scaled = transform(file.scaler.as_ref().unwrap(), &ds).unwrap();
    let a = file.model.predict_dataset(&scaled).unwrap();
    let b = reloaded.predict_dataset(&scaled).unwrap();
    assert_eq!(a, b);

    let report = json_stdout(&bagmil(
        d,
        &[
            "evaluate",
            "--model",
            "model.json",
            "--data",
            "add.jsonl",
            "-o",
            "r.json",
        ],
    ));
    assert_eq!(report["n_test_bags"], 120);
    assert!(report["r2"].is_f64());
    assert!(report["kid_rank_corr"].is_f64());
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(on_disk, report);

    let out = bagmil(
        d,
        &[
            "train",
            "--data",
            "add.jsonl",
            "--task",
            "classification",
            "--epochs",
            "1",
            "-o",
            "c.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_without_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bags: Vec<Bag> = (0..10)
        .map(|i| Bag::new(vec![vec![i as f64, 1.0], vec![0.0, i as f64 % 3.0]]).unwrap())
        .collect();
    let labels = (0..10).map(|i| (i % 2) as f64).collect();
    write_bags_jsonl(
        &BagDataset::new(bags, labels, Task::Classification).unwrap(),
        d.join("c.jsonl"),
    )
    .unwrap();
    json_stdout(&bagmil(
        d,
        &[
            "train",
            "--data",
            "c.jsonl",
            "--model",
            "bag-wrapper",
            "--epochs",
            "5",
            "-o",
            "m.json",
        ],
    ));
    let report = json_stdout(&bagmil(d, &["evaluate", "--model", "m.json", "--data", "c.jsonl"]));
    assert!(report["accuracy"].is_f64());
    assert!(report.get("kid_accuracy").is_none());
    assert!(report.get("kid_rank_corr").is_none());
}

#[test]
fn hopt_trace_and_unknown_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    json_stdout(&bagmil(
        d,
        &[
            "generate",
            "additive",
            "--num-bags",
            "60",
            "--dim",
            "4",
            "-o",
            "add.jsonl",
        ],
    ));
    std::fs::write(d.join("net.json"), SMALL_NET).unwrap();
    std::fs::write(
        d.join("grid.json"),
        r#"[{"param": "learning_rate", "candidates": [0.01, 0.001]}, {"param": "epochs", "candidates": [5, 10, 20]}]"#,
    )
    .unwrap();
    let args = [
        "hopt",
        "--data",
        "add.jsonl",
        "--config",
        "net.json",
        "--grid",
        "grid.json",
        "-o",
        "h.json",
    ];
    let result = json_stdout(&bagmil(d, &args));
    assert_eq!(result["trace"].as_array().unwrap().len(), 1 + 2 + 3);
    assert!(result["best_score"].as_f64().unwrap() >= result["baseline_score"].as_f64().unwrap());
    assert_eq!(json_stdout(&bagmil(d, &args)), result);

    std::fs::write(d.join("bad.json"), r#"[{"param": "colour", "candidates": [1]}]"#).unwrap();
    let out = bagmil(
        d,
        &[
            "hopt",
            "--data",
            "add.jsonl",
            "--config",
            "net.json",
            "--grid",
            "bad.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn consensus_report_shape() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    json_stdout(&bagmil(
        d,
        &[
            "generate",
            "additive",
            "--num-bags",
            "100",
            "--dim",
            "4",
            "-o",
            "add.jsonl",
        ],
    ));
    std::fs::write(
        d.join("pool.json"),
        r#"{"models": [
            {"kind": "neural", "task": "regression", "pooling": {"kind": "mean"}, "encoder_hidden": [8], "head_hidden": [], "epochs": 10},
            {"kind": "neural", "task": "regression", "pooling": {"kind": "max"}, "encoder_hidden": [8], "head_hidden": [], "epochs": 10},
            {"kind": "bag_wrapper", "task": "regression", "aggregation": "mean", "base": {"hidden": [8], "epochs": 20}}
        ], "ga": {"generations": 5, "population": 6}}"#,
    )
    .unwrap();
    let report = json_stdout(&bagmil(
        d,
        &[
            "consensus",
            "--data",
            "add.jsonl",
            "--config",
            "pool.json",
            "-o",
            "c.json",
        ],
    ));
    assert_eq!(report["mask"].as_array().unwrap().len(), 3);
    assert_eq!(report["model_ids"][2], "bag_wrapper/mean");
    assert!(report["val_score"].as_f64().unwrap() >= report["best_single_val_score"].as_f64().unwrap());
    assert!(report["test_score"].is_f64());
}

#[test]
fn benchmark_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = bagmil(
        d,
        &[
            "benchmark",
            "mnist-clf",
            "--num-bags",
            "100",
            "--epochs",
            "3",
            "-o",
            "run",
        ],
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("surrogate"));
    let row = String::from_utf8_lossy(&out.stdout);
    assert!(row.starts_with("mnist-clf") && row.contains("kid_accuracy="));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("run/report.json")).unwrap()).unwrap();
    assert!(report["accuracy"].is_f64());
    assert!(report["kid_accuracy"].is_f64());
    assert_eq!(read_bags_jsonl(d.join("run/dataset.jsonl")).unwrap().len(), 100);
    assert!(ModelFile::load(d.join("run/model.json")).is_ok());
}
