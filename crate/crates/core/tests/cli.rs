use std::path::Path;
use std::process::{Command, Output};

fn sasanet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sasanet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a small binary task and trains a tiny model on it.
fn trained(dir: &Path) {
    let data = dir.join("d");
    let o = sasanet(&[
        "synth",
        "--task",
        "binary",
        "--n",
        "300",
        "--features",
        "4",
        "--seed",
        "7",
        "--out",
        p(&data),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = dir.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"epochs": 2, "batch_size": 64, "embedding_dimension": 8, "continuous_embedding": [8],
            "marginal": {"mlp": [16], "attention_dimension": 4, "attention_head": 2},
            "shapley": {"mlp": [16], "attention_dimension": 4, "attention_head": 2},
            "loss_variant": "bce-marginal", "history_eval_samples": 100}"#,
    )
    .unwrap();
    let o = sasanet(&[
        "train",
        "--data",
        p(&data.join("data.csv")),
        "--schema",
        p(&data.join("schema.json")),
        "--config",
        p(&cfg),
        "--split",
        p(&data.join("split.json")),
        "--out",
        p(&dir.join("m")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn synth_writes_data_schema_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let o = sasanet(&[
        "synth",
        "--task",
        "linear",
        "--n",
        "50",
        "--features",
        "3",
        "--weights",
        "1,-2,0.5",
        "--out",
        p(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let data = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(data.lines().count(), 51);
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("truth.json")).unwrap())
            .unwrap();
    assert_eq!(truth["weights"], serde_json::json!([1.0, -2.0, 0.5]));
    assert!(dir.path().join("schema.json").is_file());
}

#[test]
fn train_attribute_oracle_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let m = dir.path().join("m");
    for f in ["model.ckpt", "history.csv", "config.json", "manifest.json"] {
        assert!(m.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(m.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["dataset_fingerprint"].as_str().unwrap().len(), 64);
    assert_eq!(
        std::fs::read_to_string(m.join("history.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );

    let data = dir.path().join("d/data.csv");
    let ckpt = m.join("model.ckpt");
    let o = sasanet(&[
        "attribute",
        "--model",
        p(&ckpt),
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("a")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(dir.path().join("a/attributions.csv")).unwrap();
    let header = r.headers().unwrap().clone();
    assert_eq!(&header[4], "phi_x1");
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let v: Vec<f64> = rec.iter().skip(1).map(|x| x.parse().unwrap()).collect();
        let sum: f64 = v[3..].iter().sum();
        assert!((v[0] - v[1] - sum).abs() < 1e-9);
        rows += 1;
    }
    assert_eq!(rows, 300);

    let o = sasanet(&[
        "oracle",
        "--model",
        p(&ckpt),
        "--data",
        p(&data),
        "--perms",
        "24",
        "--limit",
        "2",
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let oracle = std::fs::read_to_string(dir.path().join("o/oracle.csv")).unwrap();
    assert_eq!(oracle.lines().count(), 1 + 2 * 4);
    assert!(oracle.lines().nth(1).unwrap().ends_with("exhaustive"));

    let out = dir.path().join("e");
    let o = sasanet(&[
        "--threads",
        "2",
        "evaluate",
        "--model",
        p(&ckpt),
        "--data",
        p(&data),
        "--experiments",
        "metrics,mask,add,subset,oracle-rmse,timing,plots",
        "--kernel-mode",
        "native",
        "--k-max",
        "3",
        "--oracle-samples",
        "3",
        "--perms",
        "24",
        "--timing-samples",
        "5",
        "--shift",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "metrics.csv",
        "masking.csv",
        "adding.csv",
        "subset_size.csv",
        "oracle_rmse.csv",
        "timing.csv",
        "shift_bias.csv",
        "manifest.json",
        "plots/summary.svg",
        "plots/sample_0.svg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let masking = std::fs::read_to_string(out.join("masking.csv")).unwrap();
    // three methods, k = 0..=3
    assert_eq!(masking.lines().count(), 1 + 3 * 4);
}

#[test]
fn missing_schema_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(&data, "x1,y\n1,0\n").unwrap();
    let o = sasanet(&[
        "train",
        "--data",
        p(&data),
        "--schema",
        p(&dir.path().join("nope.json")),
        "--out",
        p(&dir.path().join("m")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--schema"));

    let o = sasanet(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("m")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--schema"));
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    assert!(sasanet(&[
        "synth",
        "--task",
        "linear",
        "--n",
        "20",
        "--features",
        "2",
        "--out",
        p(&d)
    ])
    .status
    .success());
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"batch_size": 0, "learning_rate": -1}"#).unwrap();
    let o = sasanet(&[
        "train",
        "--data",
        p(&d.join("data.csv")),
        "--schema",
        p(&d.join("schema.json")),
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("m")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("batch_size") && err.contains("learning_rate"),
        "{err}"
    );
}

#[test]
fn schema_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let other = dir.path().join("other");
    assert!(sasanet(&[
        "synth",
        "--task",
        "binary",
        "--n",
        "10",
        "--features",
        "5",
        "--out",
        p(&other)
    ])
    .status
    .success());
    let o = sasanet(&[
        "attribute",
        "--model",
        p(&dir.path().join("m/model.ckpt")),
        "--data",
        p(&other.join("data.csv")),
        "--schema",
        p(&other.join("schema.json")),
        "--out",
        p(&dir.path().join("a")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn help_documents_every_subcommand() {
    let o = sasanet(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in [
        "train",
        "attribute",
        "oracle",
        "evaluate",
        "synth",
        "--threads",
    ] {
        assert!(text.contains(cmd), "help lacks {cmd}");
    }
    let o = sasanet(&["evaluate", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in [
        "--experiments",
        "--shift",
        "--kernel-coalitions",
        "--rank-key",
        "--fixed-ranking",
    ] {
        assert!(text.contains(flag), "evaluate help lacks {flag}");
    }
}
