mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use entroreg::report::{parse_aggregate_csv, parse_metrics_csv, parse_sweep_csv};

fn entroreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entroreg"))
        .args(args)
        .env_remove("ENTROREG_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gradcheck_passes() {
    let out = entroreg(&["gradcheck"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("gradcheck PASSED"));
}

#[test]
fn demo_writes_csv_and_images() {
    let tmp = tempfile::tempdir().unwrap();
    let out = entroreg(&["demo", "--pairs", "4", "--out", s(tmp.path())]);
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("demo.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "pair_seed,l1_dense,l1_sparse,l2_dense,l2_sparse,hc_dense,hc_sparse,margin");
    assert_eq!(lines.len(), 5);
    let pgm = fs::read(tmp.path().join("demo_sparse.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n256 256\n255\n"));
    assert_eq!(pgm.len(), 15 + 256 * 256);
    assert_eq!(pgm.iter().skip(15).filter(|&&b| b == 255).count(), 1024);
}

#[test]
fn train_then_sweep_on_small_data() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    common::write_fake_mnist(&data, 400, 120);
    let out_dir = tmp.path().join("out");
    let config = tmp.path().join("run.toml");
    fs::write(&config, "epochs = 2\nbatch_size = 32\nlearning_rate = 0.002\n").unwrap();
    let common_args = [
        "--config",
        s(&config),
        "--data-dir",
        s(&data),
        "--out",
        s(&out_dir),
        "--seeds",
        "3",
        "--conditions",
        "dense,sparse+wd",
        "--threads",
        "2",
    ];

    let mut args = vec!["train"];
    args.extend(common_args);
    let out = entroreg(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for stem in ["dense_seed3", "sparse-wd_seed3"] {
        assert!(out_dir.join(format!("runs/{stem}.ckpt")).is_file());
        let metrics = fs::read_to_string(out_dir.join(format!("runs/{stem}_metrics.csv"))).unwrap();
        let log = parse_metrics_csv(&metrics).unwrap();
        assert_eq!(log.len(), 2);
        assert!(log[1].test_accuracy > 0.5, "{stem}: {log:?}");
    }

    args[0] = "sweep";
    let out = entroreg(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = parse_sweep_csv(&fs::read_to_string(out_dir.join("sweeps/dense_seed3.csv")).unwrap()).unwrap();
    assert_eq!(curve.points.len(), 1000);
    let agg = parse_aggregate_csv(&fs::read_to_string(out_dir.join("aggregate.csv")).unwrap()).unwrap();
    assert!(agg.iter().any(|r| r.condition == "dense"));
    assert!(agg.iter().any(|r| r.condition == "sparse+wd"));
    let svg = fs::read_to_string(out_dir.join("accuracy_vs_params.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn data_dir_falls_back_to_env() {
    let tmp = tempfile::tempdir().unwrap();
    common::write_fake_mnist(tmp.path(), 50, 20);
    let out = Command::new(env!("CARGO_BIN_EXE_entroreg"))
        .args(["train", "--epochs", "1", "--seeds", "1", "--conditions", "dense", "--out"])
        .arg(tmp.path().join("out"))
        .env("ENTROREG_DATA_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("out/runs/dense_seed1.ckpt").is_file());
}

#[test]
fn missing_data_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = entroreg(&["train", "--data-dir", s(tmp.path()), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MNIST data not found"));
    let out = entroreg(&["train", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_arguments_are_rejected() {
    assert!(!entroreg(&["train", "--conditions", "medium"]).status.success());
    assert!(!entroreg(&["train", "--seeds", "a,b"]).status.success());
    assert!(!entroreg(&["frobnicate"]).status.success());
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "epochz = 3\n").unwrap();
    let out = entroreg(&["demo", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
    let out = entroreg(&["train", "--batch-size", "0", "--data-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}
