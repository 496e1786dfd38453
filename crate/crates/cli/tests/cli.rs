use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_weakkam");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn model(id: &str, dim: usize) -> String {
    format!(r#"{{"family": "mechanical", "dim": {dim}, "potential": {{"id": "{id}"}}}}"#)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn critical_pendulum_and_free() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pend");
    let o = run(&["critical", "--grid", "64", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("c = 1.00"), "{}", stdout(&o));
    assert!(out.join("critical.json").exists());

    let cfg = write_config(tmp.path(), "free.json", &format!(r#"{{"model": {}, "n": 32}}"#, model("zero", 1)));
    let o = run(&["critical", "--config", s(&cfg), "--out", s(&tmp.path().join("free"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("c = 0.000"), "{}", stdout(&o));
}

#[test]
fn malformed_config_exits_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", "{\n  \"n\": 64,\n");
    let o = run(&["critical", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "unknown.json", r#"{"grid_size": 64}"#);
    assert_eq!(run(&["critical", "--config", s(&cfg)]).status.code(), Some(1));
    assert_eq!(run(&["critical", "--grid", "100"]).status.code(), Some(1));
}

#[test]
fn solve_rejects_zero_discount() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--lambda", "0", "--grid", "32", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("λ must be positive; use sweep for the limit"));
}

#[test]
fn solve_writes_fields_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&["solve", "--grid", "64", "--lambda", "0.1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["u_plus_0.1.wkf", "u_minus_0.1.wkf", "residual_0.1.wkf", "calibrated_0.1.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let m = manifest(&out);
    assert_eq!(m["command"], "solve");
    assert!(m["forward"]["iterations"].as_u64().unwrap() > 0);
    assert_eq!(m["ground_state"]["converged"], true);
    // defaults echoed
    assert_eq!(m["config"]["seed"], 42);
    assert_eq!(m["config"]["n"], 64);
    assert!(m["config"]["solver"]["dt"].as_f64().unwrap() > 0.0);
    assert!(m["config"]["checks"]["aubry_threshold"].as_f64().is_some());
}

#[test]
fn solve_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = run(&["solve", "--grid", "64", "--out", s(d), "--threads", "1"]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["u_plus_0.1.wkf", "u_minus_0.1.wkf"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn two_bump_calibrated_set_has_both_wells() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tb.json", &format!(r#"{{"model": {}, "n": 64}}"#, model("two_bump", 1)));
    let out = tmp.path().join("run");
    let o = run(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("calibrated_0.1.csv")).unwrap();
    let xs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    let near = |t: f64| xs.iter().any(|&x| ((x - t + 0.5).rem_euclid(1.0) - 0.5).abs() < 0.05);
    assert!(near(0.0) && near(0.5), "{xs:?}");
}

#[test]
fn sweep_free_passes_and_tight_tolerance_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "free.json", &format!(r#"{{"model": {}, "n": 32}}"#, model("zero", 1)));
    let out = tmp.path().join("ok");
    let o = run(&["sweep", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 4);
    let m = manifest(&out);
    assert_eq!(m["checks"].as_array().unwrap().len(), 4);
    assert!(out.join("cauchy.csv").exists());
    assert!(out.join("u_minus_0.025.wkf").exists());

    let tight = write_config(
        tmp.path(),
        "tight.json",
        &format!(r#"{{"model": {}, "n": 32, "checks": {{"epsilon": 1e-9}}}}"#, model("zero", 1)),
    );
    let out = tmp.path().join("tight");
    let o = run(&["sweep", "--config", s(&tight), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn check_suite_passes_on_coarse_grid_and_ignores_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let pass_set = |seed: u64| {
        let cfg = write_config(tmp.path(), &format!("s{seed}.json"), &format!(r#"{{"n": 32, "seed": {seed}}}"#));
        let out = tmp.path().join(format!("s{seed}"));
        let o = run(&["check", "--config", s(&cfg), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        let m = manifest(&out);
        m["checks"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| (c["name"].as_str().unwrap().to_string(), c["passed"].as_bool().unwrap()))
            .collect::<Vec<_>>()
    };
    let a = pass_set(42);
    assert_eq!(a.len(), 6);
    assert!(a.iter().all(|(_, p)| *p));
    assert_eq!(a, pass_set(7));
}

#[test]
fn aubry_and_barrier_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tb.json", &format!(r#"{{"model": {}, "n": 64}}"#, model("two_bump", 1)));
    let out = tmp.path().join("a");
    let o = run(&["aubry", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(manifest(&out)["aubry"]["classes"], 2);
    assert!(out.join("aubry.csv").exists() && out.join("mather.csv").exists());

    let out = tmp.path().join("b");
    let o = run(&["barrier", "--grid", "64", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("barrier.wkf").exists());
    let m = manifest(&out);
    assert!(m["self_barrier"].as_f64().unwrap().abs() < 1e-3);
}

#[test]
fn plot_script_references_existing_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(run(&["solve", "--grid", "32", "--out", s(&out)]).status.code(), Some(0));
    let o = run(&["plot", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let script = fs::read_to_string(out.join("plot.gp")).unwrap();
    let mut referenced = 0;
    for part in script.split('\'').skip(1).step_by(2) {
        if part.ends_with(".dat") {
            assert!(out.join(part).exists(), "{part} missing");
            referenced += 1;
        }
    }
    assert!(referenced >= 2);

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["plot", s(&empty)]).status.code(), Some(1));
    assert_eq!(run(&["plot", s(&tmp.path().join("absent"))]).status.code(), Some(1));
}

#[test]
fn plot_two_dimensional_heatmap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "p2.json",
        &format!(r#"{{"model": {}, "n": 16, "lambda": 0.2}}"#, model("cos_sum", 2)),
    );
    let out = tmp.path().join("run");
    let o = run(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(run(&["plot", s(&out)]).status.code(), Some(0));
    let text = fs::read_to_string(out.join("heatmap_u_minus_0.2.dat")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 16));
}
