use std::fs;
use std::path::Path;
use std::process::Command;

const SMALL: &str = "\
filter.kind = EAKF
filter.ensemble_members = 30
harness.seeds = 0..2
harness.forecast_start_week = 8
harness.forecast_end_week = 9
";

fn srassim(args: &[&str], dir: &Path) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_srassim")).args(args).arg("--out-dir").arg(dir).env_remove("SRASSIM_SEED").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn manifest_without_clock(dir: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert!(v["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    v.as_object_mut().unwrap().remove("wall_clock_seconds");
    v
}

fn outputs(dir: &Path) -> Vec<String> {
    manifest_without_clock(dir)["outputs"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

#[test]
fn every_command_writes_manifest_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let cfg = cfg.to_str().unwrap();
    for (cmd, expected) in [
        ("simulate", vec!["truth.csv"]),
        ("fit", vec!["fit.csv"]),
        ("forecast", vec!["forecast.csv"]),
        ("compare", vec!["forecast_sr.csv", "forecast_base.csv", "compare.csv"]),
        ("sweep", vec!["sweep.csv", "sweep_cells.json"]),
    ] {
        let dir = tmp.path().join(cmd);
        srassim(&[cmd, "--config", cfg, "--seed", "4"], &dir);
        assert_eq!(outputs(&dir), expected);
        for f in expected {
            assert!(dir.join(f).exists());
        }
    }
    let truth = fs::read_to_string(tmp.path().join("simulate/truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 53);
}

#[test]
fn sweep_grid_has_one_row_per_cell_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("grid.cfg");
    fs::write(&cfg, "filter.kind = EAKF\nfilter.ensemble_members = 20\nharness.seeds = 0..5\nharness.scenarios = unimodal, two_strain\nharness.forecast_start_week = 9\nharness.forecast_end_week = 9\n").unwrap();
    let dir = tmp.path().join("out");
    srassim(&["sweep", "--config", cfg.to_str().unwrap()], &dir);
    let text = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 31);
    assert_eq!(manifest_without_clock(&dir)["seeds"].as_array().unwrap().len(), 5);
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &Path, env: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_srassim"));
        c.arg("simulate").arg("--out-dir").arg(dir).env_remove("SRASSIM_SEED");
        if let Some(v) = env {
            c.env("SRASSIM_SEED", v);
        }
        if let Some(v) = flag {
            c.args(["--seed", v]);
        }
        assert!(c.status().unwrap().success());
        fs::read(dir.join("truth.csv")).unwrap()
    };
    let a = run(&tmp.path().join("a"), Some("11"), None);
    let b = run(&tmp.path().join("b"), None, Some("11"));
    let c = run(&tmp.path().join("c"), None, None);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(manifest_without_clock(&tmp.path().join("a"))["seeds"], serde_json::json!([11]));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "filter.kind = PF\nfilter.bogus = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_srassim")).args(["fit", "--config", cfg.to_str().unwrap(), "--out-dir"]).arg(tmp.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let out = Command::new(env!("CARGO_BIN_EXE_srassim")).args(["compare", "--sr", "on", "--out-dir"]).arg(tmp.path()).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn outputs_are_byte_stable_across_runs_and_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let cfg = cfg.to_str().unwrap();
    for cmd in ["fit", "forecast", "sweep"] {
        let dirs: Vec<_> = ["1", "1", "2"].iter().enumerate().map(|(k, jobs)| {
            let dir = tmp.path().join(format!("{cmd}{k}"));
            srassim(&[cmd, "--config", cfg, "--jobs", jobs], &dir);
            dir
        }).collect();
        for f in outputs(&dirs[0]) {
            let first = fs::read(dirs[0].join(&f)).unwrap();
            for d in &dirs[1..] {
                assert_eq!(first, fs::read(d.join(&f)).unwrap(), "{cmd}: {f}");
            }
        }
        assert_eq!(manifest_without_clock(&dirs[0]), manifest_without_clock(&dirs[2]));
    }
}
