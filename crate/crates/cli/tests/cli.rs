use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::tempdir;

fn parcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parcomp"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = parcomp(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn tiny_model() -> Value {
    json!({ "f": 8, "m": 4, "t": 8, "k": 6, "global_queries": 4, "dist_hidden": 8,
            "n_input": 256, "n_proxies": 16, "patch_k": 8 })
}

fn write_config(path: &Path, body: Value) {
    let mut body = body;
    body["format_version"] = json!(1);
    std::fs::write(path, serde_json::to_vec_pretty(&body).unwrap()).unwrap();
}

#[test]
fn gen_writes_hard_samples() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&[
        "gen",
        "--seed",
        "1",
        "--count",
        "10",
        "--level",
        "hard",
        "--max-complexity",
        "10",
        "--out",
        s(&a),
    ]);
    ok(&[
        "gen",
        "--seed",
        "1",
        "--count",
        "10",
        "--level",
        "hard",
        "--max-complexity",
        "10",
        "--out",
        s(&b),
        "--jobs",
        "1",
    ]);
    let m = read_json(&a.join("manifest.json"));
    assert_eq!(m["format_version"], 1);
    let samples = m["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 10);
    for e in samples {
        assert_eq!(e["spec"]["level"], "hard");
        let name = e["name"].as_str().unwrap();
        let meta = read_json(&a.join(name).join("sample.json"));
        assert_eq!(meta["level"], "hard");
        for f in ["input.ply", "gt.ply", "gt_mesh.obj", "sample.json"] {
            assert_eq!(
                std::fs::read(a.join(name).join(f)).unwrap(),
                std::fs::read(b.join(name).join(f)).unwrap()
            );
        }
        let input = std::fs::read_to_string(a.join(name).join("input.ply")).unwrap();
        assert!(input.contains("element vertex 2048"));
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let out = parcomp(&["gen", "--count", "2", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(parcomp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(parcomp(&[]).status.code(), Some(1));
    assert_eq!(
        parcomp(&["gen", "--count", "2", "--level", "extreme", "--out", "x"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(parcomp(&["--help"]).status.code(), Some(0));
    assert_eq!(
        parcomp(&["--jobs", "0", "gen", "--count", "1", "--out", "x"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn data_errors_exit_with_two_on_one_line() {
    let dir = tempdir().unwrap();
    let out = parcomp(&[
        "segment",
        "--data",
        s(&dir.path().join("missing")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("parcomp: data error:"), "{err}");
    assert!(err.contains("manifest.json"));

    let data = dir.path().join("d");
    ok(&[
        "gen",
        "--count",
        "1",
        "--max-complexity",
        "6",
        "--out",
        s(&data),
    ]);
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"nonsense").unwrap();
    let out = parcomp(&[
        "complete",
        "--data",
        s(&data),
        "--checkpoint",
        s(&bad),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);
}

#[test]
fn stages_chain_and_rerun_identically() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let pred = dir.path().join("pred");
    let cfg = dir.path().join("train.json");
    write_config(
        &cfg,
        json!({ "model": tiny_model(), "train": { "epochs": 2, "batch_size": 2, "gt_points": 256 } }),
    );
    ok(&[
        "gen",
        "--seed",
        "4",
        "--count",
        "4",
        "--max-complexity",
        "8",
        "--out",
        s(&data),
    ]);
    ok(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--config",
        s(&cfg),
    ]);
    let history = std::fs::read_to_string(run.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);

    let report = |tag: &str| {
        let out = dir.path().join(tag);
        ok(&["segment", "--data", s(&data), "--out", s(&pred)]);
        ok(&[
            "complete",
            "--data",
            s(&data),
            "--checkpoint",
            s(&run.join("checkpoint.bin")),
            "--out",
            s(&pred),
            "--tau",
            "0.3",
        ]);
        ok(&["assemble", "--data", s(&data), "--pred", s(&pred)]);
        ok(&[
            "eval",
            "--data",
            s(&data),
            "--pred",
            s(&pred),
            "--out",
            s(&out),
            "--samples",
            "2000",
        ]);
        (
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("report.csv")).unwrap(),
        )
    };
    let first = report("r1");
    let second = report("r2");
    assert_eq!(first, second);

    let r: Value = serde_json::from_slice(&first.0).unwrap();
    assert_eq!(r["format_version"], 1);
    assert_eq!(r["samples"].as_array().unwrap().len(), 4);
    for k in ["cd", "hd", "nc", "fr", "faces", "vertices"] {
        assert!(r["aggregate"][k].is_number(), "{k}");
    }
    let csv = String::from_utf8(first.1).unwrap();
    assert!(csv.starts_with("sample,failed,cd,hd,nc,nc_prim,faces,vertices\n"));
    assert!(csv.lines().last().unwrap().starts_with("ALL,"));
    let sample0 = pred.join("sample_00000");
    for f in [
        "segmentation.json",
        "primitives.json",
        "primitives.ply",
        "assembly.json",
    ] {
        assert!(sample0.join(f).exists(), "{f}");
    }

    // Resuming to a later epoch extends the history.
    ok(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--config",
        s(&cfg),
        "--resume",
        "--epochs",
        "3",
    ]);
    assert_eq!(
        std::fs::read_to_string(run.join("history.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn pipeline_report_is_reproducible() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write_config(
        &cfg,
        json!({
            "train_data": { "seed": 1, "count": 4, "level": "mixed", "max_complexity": 8 },
            "test_data": { "seed": 2, "count": 3, "level": "hard", "max_complexity": 8 },
            "model": tiny_model(),
            "train": { "epochs": 1, "batch_size": 2, "gt_points": 256 },
            "reconstruct": { "metric_samples": 1000 }
        }),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["pipeline", "--config", s(&cfg), "--out", s(&a)]);
    ok(&[
        "--jobs",
        "1",
        "pipeline",
        "--config",
        s(&cfg),
        "--out",
        s(&b),
    ]);
    for f in ["report.json", "report.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }

    // A trained checkpoint can replace the training stage.
    let c = dir.path().join("c");
    let cfg2 = dir.path().join("cfg2.json");
    write_config(
        &cfg2,
        json!({
            "checkpoint": "a/run/checkpoint.bin",
            "test_data": { "seed": 2, "count": 3, "level": "hard", "max_complexity": 8 },
            "reconstruct": { "metric_samples": 1000 }
        }),
    );
    ok(&["pipeline", "--config", s(&cfg2), "--out", s(&c)]);
    assert_eq!(
        std::fs::read(a.join("report.json")).unwrap(),
        std::fs::read(c.join("report.json")).unwrap()
    );

    write_config(&cfg2, json!({ "test_data": { "seed": 2, "count": 1 } }));
    assert_eq!(
        parcomp(&["pipeline", "--config", s(&cfg2), "--out", s(&c)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn tau_out_of_range_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let out = parcomp(&[
        "complete",
        "--data",
        s(dir.path()),
        "--checkpoint",
        "x",
        "--out",
        s(dir.path()),
        "--tau",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn diverging_training_exits_with_three() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = dir.path().join("train.json");
    write_config(
        &cfg,
        json!({ "model": tiny_model(), "train": { "epochs": 5, "lr": 1e300, "batch_size": 1, "gt_points": 256 } }),
    );
    ok(&[
        "gen",
        "--count",
        "2",
        "--max-complexity",
        "6",
        "--out",
        s(&data),
    ]);
    let out = parcomp(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&dir.path().join("run")),
        "--config",
        s(&cfg),
    ]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(out.status.code(), Some(3), "{err}");
    assert!(err.contains("numeric error"));
}
