//! End-to-end runs of the `olma` binary on synthetic data.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn olma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_olma"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = olma(args);
    assert!(
        out.status.success(),
        "olma {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_TRAIN: &[&str] = &[
    "--data",
    "synthetic:sines",
    "--lookback",
    "16",
    "--horizon",
    "8",
    "--set",
    "synthetic.steps=600",
    "--set",
    "synthetic.channels=3",
    "--set",
    "model=plain",
];

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn train_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = ["--seed", "3", "--set", "train.epochs=5"];
    for dir in [&a, &b] {
        let mut args = vec!["train"];
        args.extend(with(SMALL_TRAIN, &extra));
        let out_dir = dir.path().to_str().unwrap();
        args.extend(["--out", out_dir]);
        ok(&args);
    }
    let ma = std::fs::read(a.path().join("metrics.json")).unwrap();
    let mb = std::fs::read(b.path().join("metrics.json")).unwrap();
    // The output directory is part of the embedded config; compare the rest.
    let strip = |bytes: &[u8], dir: &Path| {
        String::from_utf8(bytes.to_vec())
            .unwrap()
            .replace(dir.to_str().unwrap(), "<out>")
    };
    assert_eq!(strip(&ma, a.path()), strip(&mb, b.path()));
    assert_eq!(
        std::fs::read(a.path().join("checkpoint_h8.json")).unwrap(),
        std::fs::read(b.path().join("checkpoint_h8.json")).unwrap()
    );

    let metrics = read_json(&a.path().join("metrics.json"));
    assert_eq!(metrics["command"], "train");
    assert_eq!(metrics["seed"], 3);
    assert_eq!(metrics["config"]["lookback"], 16);
    assert_eq!(metrics["config"]["train"]["epochs"], 5);
}

#[test]
fn train_eval_and_bands_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let extra = ["--set", "train.epochs=20", "--out", out_dir];
    let mut args = vec!["train"];
    args.extend(with(SMALL_TRAIN, &extra));
    ok(&args);
    let trained = read_json(&dir.path().join("metrics.json"));

    let eval_dir = dir.path().join("eval");
    let eval_out = eval_dir.to_str().unwrap();
    let ckpt = dir.path().join("checkpoint_h8.json");
    let ckpt = ckpt.to_str().unwrap();
    let extra = ["--checkpoint", ckpt, "--out", eval_out];
    let mut args = vec!["eval"];
    args.extend(with(SMALL_TRAIN, &extra));
    ok(&args);
    let evaluated = read_json(&eval_dir.join("metrics.json"));
    assert_eq!(
        trained["result"]["horizons"][0]["test"],
        evaluated["result"]["horizons"][0]["test"]
    );

    let extra = ["--checkpoint", ckpt, "--out", eval_out, "--bands", "3"];
    let mut args = vec!["bands"];
    args.extend(with(SMALL_TRAIN, &extra));
    ok(&args);
    let csv = std::fs::read_to_string(eval_dir.join("bands.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "band_index,error");
    assert_eq!(lines.len(), 4);
    let bands = read_json(&eval_dir.join("bands.json"));
    assert_eq!(bands["result"]["horizons"][0]["report"]["n_bands"], 3);
}

#[test]
fn theorem_check_default_holds() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["theorem-check", "--out", dir.path().to_str().unwrap()]);
    let report = read_json(&dir.path().join("theorem.json"));
    let trials = report["result"]["trials"].as_array().unwrap();
    assert_eq!(trials.len(), 200);
    for t in trials {
        assert!(t["determinant"].as_f64().unwrap() <= t["diag_product"].as_f64().unwrap());
    }
    assert_eq!(report["result"]["summary"]["all_witnessed"], true);
}

#[test]
fn ablate_realizable_all_near_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let extra = [
        "--set",
        "train.epochs=300",
        "--set",
        "train.patience=0",
        "--out",
        out_dir,
    ];
    let mut args = vec!["ablate"];
    args.extend(with(SMALL_TRAIN, &extra));
    ok(&args);
    let report = read_json(&dir.path().join("ablate.json"));
    let variants = report["result"]["horizons"][0]["variants"]
        .as_array()
        .unwrap();
    assert_eq!(variants.len(), 4);
    for v in variants {
        let mse = v["outcome"]["test"]["mse"].as_f64().unwrap();
        assert!(mse < 1e-3, "{v}");
    }
}

#[test]
fn sweep_reports_every_proportion() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let extra = [
        "--set",
        "train.epochs=3",
        "--set",
        "sweep.proportions=0.2,0.8",
        "--out",
        out_dir,
    ];
    let mut args = vec!["sweep"];
    args.extend(with(SMALL_TRAIN, &extra));
    ok(&args);
    let report = read_json(&dir.path().join("sweep.json"));
    let rows = report["result"]["horizons"][0]["sweep"]["rows"]
        .as_array()
        .unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["spec"]["alpha"], 0.8);
    assert!(report["result"]["max_test_mse_ratio"].as_f64().unwrap() >= 1.0);
}

#[test]
fn entropy_and_causal_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    ok(&[
        "entropy-scan",
        "--data",
        "synthetic:shared_sine",
        "--set",
        "synthetic.channels=8",
        "--set",
        "synthetic.steps=960",
        "--out",
        out_dir,
    ]);
    let e = read_json(&dir.path().join("entropy.json"));
    assert_eq!(
        e["result"]["report"]["segments"].as_array().unwrap().len(),
        10
    );

    ok(&[
        "causal",
        "--data",
        "synthetic:ar1",
        "--set",
        "max_offset=3",
        "--set",
        "domain=frequency_real",
        "--out",
        out_dir,
    ]);
    let c = read_json(&dir.path().join("causal.json"));
    assert_eq!(c["result"]["channel"], "ch6");
    assert_eq!(
        c["result"]["matrix"]["effects"].as_array().unwrap().len(),
        4
    );
    assert!(c["result"]["matrix"]["effects"][1][0].is_null());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# small run\ndata = synthetic:shared_sine\nbins = 4\nseg_len = 48\nsynthetic.steps = 480\n",
    )
    .unwrap();
    ok(&[
        "entropy-scan",
        "--config",
        cfg.to_str().unwrap(),
        "--bins",
        "8",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let e = read_json(&dir.path().join("entropy.json"));
    assert_eq!(e["config"]["bins"], 8);
    assert_eq!(e["config"]["seg_len"], 48);
}

#[test]
fn errors_exit_one_and_leave_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();

    let out = olma(&["train", "--bogus-flag", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(1));

    let out = olma(&["train", "--set", "lookbak=3", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lookbak"));

    let out = olma(&["train", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage: load data"), "{err}");

    let out = olma(&["eval", "--data", "synthetic:sines", "--out", out_dir]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));

    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn csv_input_with_date_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("series.csv");
    let mut text = String::from("date,a,b\n");
    for t in 0..300 {
        let x = t as f64;
        text.push_str(&format!(
            "2020-01-01 {:02}:00,{},{}\n",
            t % 24,
            (x / 5.0).sin(),
            (x / 7.0).cos() + 0.01 * x
        ));
    }
    std::fs::write(&csv, text).unwrap();
    ok(&[
        "train",
        "--data",
        csv.to_str().unwrap(),
        "--lookback",
        "24",
        "--horizon",
        "12",
        "--set",
        "train.epochs=2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let m = read_json(&dir.path().join("metrics.json"));
    let mse = m["result"]["average_test"]["mse"].as_f64().unwrap();
    assert!(mse.is_finite());
}
