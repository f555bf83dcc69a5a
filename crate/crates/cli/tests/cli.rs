use std::path::Path;
use std::process::{Command, Output};

fn ddlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddlab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DDLAB_DATA_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, noise_p: f64, data_seed: u64) -> String {
    let cfg = format!(
        r#"{{
  "widths": [3, 6, 12],
  "noise_p": {noise_p},
  "noise_seed": 2,
  "replicates": 1,
  "dataset": {{
    "source": {{"kind": "synthetic", "train_pool": 300, "test": 100, "features": 12}},
    "train_size": 150,
    "seed": {data_seed}
  }},
  "train": {{"epochs": 12, "batch_size": 32, "seed": 4}},
  "output_dir": "{name}_out"
}}
"#
    );
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, cfg).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn help_and_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&ddlab(&["--help"], tmp.path())), 0);
    assert_eq!(code(&ddlab(&["--version"], tmp.path())), 0);
    assert_eq!(code(&ddlab(&["frobnicate"], tmp.path())), 1);
    assert_eq!(code(&ddlab(&["sweep", "--config", "missing.json"], tmp.path())), 1);

    std::fs::write(tmp.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&ddlab(&["sweep", "--config", "bad.json"], tmp.path())), 1);

    std::fs::write(
        tmp.path().join("typo.json"),
        r#"{"widths": [1], "train": {"epochs": 1}, "output_dir": "o", "noise_pp": 0.2}"#,
    )
    .unwrap();
    let out = ddlab(&["sweep", "--config", "typo.json"], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("noise_pp"));
}

#[test]
fn dry_run_applies_overrides_and_touches_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "dry", 0.2, 0);
    let out = ddlab(&["sweep", "--config", &cfg, "--widths", "1,2,5", "--dry-run"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let resolved: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(resolved["widths"], serde_json::json!([1, 2, 5]));
    assert_eq!(resolved["diagnostics"]["knn_k"], 10);
    assert!(!tmp.path().join("dry_out").exists());

    let out = ddlab(&["sweep", "--config", &cfg, "--widths", "5,2", "--dry-run"], tmp.path());
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("idx.json"),
        r#"{"widths": [2], "train": {"epochs": 1}, "output_dir": "o",
            "dataset": {"source": {"kind": "idx"}, "train_size": 10}}"#,
    )
    .unwrap();
    let out = ddlab(&["sweep", "--config", "idx.json", "--data-dir", "nowhere"], tmp.path());
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn sweep_report_and_diagnose() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "noisy", 0.2, 0);
    let out = ddlab(&["sweep", "--config", &cfg], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let dir = tmp.path().join("noisy_out");
    let records = std::fs::read_to_string(dir.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 4);
    assert!(std::fs::read_to_string(dir.join("config.json")).unwrap().contains("\"widths\""));

    let out = ddlab(&["report", "noisy_out"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let curves = std::fs::read_to_string(dir.join("report/double_descent.csv")).unwrap();
    assert_eq!(curves.lines().count(), 4);

    let ckpt = "noisy_out/checkpoints/k00006_r00.bin";
    let args = [
        "diagnose",
        ckpt,
        "--noise-record",
        "noisy_out/noise_record.json",
        "--config",
        &cfg,
        "--metrics",
        "cam,richness",
        "--group-size",
        "5",
    ];
    let first = ddlab(&args, tmp.path());
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let json: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["cam", "richness"]);
    assert_eq!(ddlab(&args, tmp.path()).stdout, first.stdout);

    let knn = ddlab(
        &["diagnose", ckpt, "--noise-record", "noisy_out/noise_record.json", "--config", &cfg, "--metrics", "knn"],
        tmp.path(),
    );
    assert_eq!(code(&knn), 0, "{}", stderr(&knn));
    let json: serde_json::Value = serde_json::from_slice(&knn.stdout).unwrap();
    assert_eq!(json["knn"]["k"], 10);
}

#[test]
fn diagnose_guards() {
    let tmp = tempfile::tempdir().unwrap();
    let clean = write_config(tmp.path(), "clean", 0.0, 0);
    let other = write_config(tmp.path(), "other", 0.2, 9);
    assert_eq!(code(&ddlab(&["sweep", "--config", &clean], tmp.path())), 0);
    assert_eq!(code(&ddlab(&["sweep", "--config", &other], tmp.path())), 0);

    let out = ddlab(
        &[
            "diagnose",
            "clean_out/checkpoints/k00003_r00.bin",
            "--noise-record",
            "clean_out/noise_record.json",
            "--config",
            &clean,
            "--metrics",
            "knn",
        ],
        tmp.path(),
    );
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("no noisy samples"));

    // checkpoint trained on one subset, noise record of another
    let out = ddlab(
        &[
            "diagnose",
            "clean_out/checkpoints/k00003_r00.bin",
            "--noise-record",
            "other_out/noise_record.json",
            "--config",
            &other,
            "--metrics",
            "errors",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("hash"), "{}", stderr(&out));
}

#[test]
fn data_dir_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("mnist");
    std::fs::create_dir(&data).unwrap();
    let mut rng = ddlab::tensor::Rng::new(3);
    for (stem, n) in [("train", 120usize), ("t10k", 40)] {
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let pixels: Vec<u8> = (0..n * 16).map(|_| rng.below(256) as u8).collect();
        ddlab::data::write_idx(
            &data.join(format!("{stem}-images-idx3-ubyte")),
            &data.join(format!("{stem}-labels-idx1-ubyte")),
            4,
            4,
            &pixels,
            &labels,
        )
        .unwrap();
    }
    std::fs::write(
        tmp.path().join("env.json"),
        r#"{"widths": [2], "replicates": 1, "train": {"epochs": 2}, "output_dir": "env_out",
            "dataset": {"source": {"kind": "idx"}, "train_size": 100}}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ddlab"))
        .args(["sweep", "--config", "env.json"])
        .current_dir(tmp.path())
        .env("DDLAB_DATA_DIR", &data)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(tmp.path().join("env_out/records.csv").exists());
}

#[test]
fn frozen_rep_dry_run_shows_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ddlab(&["frozen-rep", "--dry-run"], tmp.path());
    assert_eq!(code(&out), 0);
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["rep_width"], 20);
    assert_eq!(cfg["depths"], serde_json::json!([1, 2, 3, 4]));
    assert_eq!(cfg["train"]["epochs"], 400);
}
