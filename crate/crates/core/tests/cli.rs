use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn isihd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isihd")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn preset_toml(name: &str) -> String {
    let o = isihd(&["presets", "--preset", name]);
    assert!(o.status.success());
    stdout(&o)
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn presets_lists_all_six() {
    let out = stdout(&isihd(&["presets"]));
    for name in ["cor1", "corabcdd-tr", "strongly-convex", "beta-zero-atr", "weak-convergence", "sgf-baseline"] {
        assert!(out.lines().any(|l| l.starts_with(name)), "{name} missing from\n{out}");
    }
}

#[test]
fn every_preset_round_trips_through_toml() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["cor1", "corabcdd-tr", "strongly-convex", "beta-zero-atr", "weak-convergence", "sgf-baseline"] {
        let path = tmp.path().join(format!("{name}.toml"));
        std::fs::write(&path, preset_toml(name)).unwrap();
        let a = isihd::harness::preset(name).unwrap();
        let b = isihd::harness::ExperimentConfig::from_path(&path).unwrap();
        assert_eq!(a.hash(), b.hash(), "{name}");
    }
}

#[test]
fn simulate_writes_files_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = isihd(&["simulate", "--preset", "cor1", "--paths", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["path_0000.csv", "path_0001.csv", "path_0002.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 1);
    assert_eq!(manifest["paths"], 3);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    let csv = std::fs::read_to_string(out.join("path_0000.csv")).unwrap();
    assert!(csv.starts_with("t,f_gap,speed2,grad2,grad_shift2,dist2"));
    assert_eq!(csv.lines().count(), 62);
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let o = isihd(&[
            "ensemble", "--preset", "strongly-convex", "--paths", "12", "--threads", threads, "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(data_files(&a), data_files(&b));
    let ma: Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let mb: Value = serde_json::from_str(&std::fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["files"], mb["files"]);
}

#[test]
fn seed_override_changes_output() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    isihd(&["simulate", "--preset", "strongly-convex", "--paths", "1", "--out", a.to_str().unwrap()]);
    isihd(&["simulate", "--preset", "strongly-convex", "--paths", "1", "--seed", "99", "--out", b.to_str().unwrap()]);
    assert_ne!(data_files(&a), data_files(&b));
}

#[test]
fn json_format() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("j");
    let o = isihd(&["ensemble", "--preset", "strongly-convex", "--paths", "4", "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("ensemble.json")).unwrap()).unwrap();
    assert_eq!(v["n_paths"], 4);
}

#[test]
fn malformed_config_exits_two_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let bad = [
        preset_toml("cor1").replace("paths = 256", "paths = 256\nbogus = 1"),
        preset_toml("cor1").replace("h = 0.01", "h = -0.01"),
        preset_toml("cor1").replace("kind = \"quadratic\"", "kind = \"cubic\""),
        "name = 3".to_string(),
    ];
    for (i, text) in bad.iter().enumerate() {
        let path = tmp.path().join(format!("bad{i}.toml"));
        std::fs::write(&path, text).unwrap();
        let o = isihd(&["simulate", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "case {i} created output");
    }
    assert_eq!(isihd(&["simulate", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(isihd(&["simulate"]).status.code(), Some(2));
}

#[test]
fn verify_lyapunov_preset_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let o = isihd(&["verify-lyapunov", "--preset", "cor1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("PASS lyapunov_system"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("system_report.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], true);
    assert_eq!(report["conditions"].as_array().unwrap().len(), 6);
}

#[test]
fn mutated_b_fails_relation_six() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("mut.toml");
    std::fs::write(&path, preset_toml("cor1").replace("b = 2.5", "b = 3.5")).unwrap();
    let out = tmp.path().join("v");
    let o = isihd(&["verify-lyapunov", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let line = stdout(&o);
    assert!(line.starts_with("FAIL lyapunov_system"));
    assert!(line.contains("\"binding_condition\":6"), "{line}");
}

#[test]
fn custom_quadruple_with_zero_a_fails_relation_three() {
    let tmp = tempfile::tempdir().unwrap();
    let quad = tmp.path().join("quad.toml");
    std::fs::write(&quad, "t_hat = 1.0\na = []\nb = [[2.5, 0.0]]\nc = [[1.0, 1.0]]\nd = [[-1.25, 0.0]]\n").unwrap();
    let cfg = preset_toml("cor1").replace(
        "provenance = \"cor1\"\nalpha = 4.0\ngamma0 = 0.5\nbeta1 = 1.0\nb = 2.5",
        &format!("provenance = \"custom_file\"\npath = {:?}", quad.to_str().unwrap()),
    );
    let path = tmp.path().join("custom.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = tmp.path().join("v");
    let o = isihd(&["verify-lyapunov", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("system_report.json")).unwrap()).unwrap();
    assert_eq!(report["conditions"][2]["pass"], false);
}

#[test]
fn rates_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let o = isihd(&["rates", "--preset", "strongly-convex", "--paths", "16", "--out", out.to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0) | Some(1)));
    for f in ["ensemble.csv", "rates.json", "verdicts.json", "plot.py", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
