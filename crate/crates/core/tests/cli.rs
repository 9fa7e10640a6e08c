use std::path::Path;
use std::process::{Command, Output};

use lsol::io::{read_grid, Manifest};

fn lsol(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsol"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("LSOL_THREADS")
        .output()
        .expect("binary runs")
}

fn column(path: &Path, idx: usize) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn homog_reports_the_free_lasing_roots() {
    let dir = tempfile::tempdir().unwrap();
    let o = lsol(&["homog", "--g0", "2.08", "--a0", "2", "--b", "10", "--theta", "0", "--iin", "0"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let roots = column(&dir.path().join("roots.csv"), 1);
    assert_eq!(roots.len(), 3);
    assert_eq!(roots[0], 0.0);
    assert!((roots[1] / 1.448469865573747 - 1.0).abs() < 1e-6);
    assert!((roots[2] / 6.351530134426253 - 1.0).abs() < 1e-6);
    let header = std::fs::read_to_string(dir.path().join("roots.csv")).unwrap();
    assert!(header.lines().next().unwrap().contains("[reduced]"));
    let m = Manifest::read(dir.path()).unwrap();
    assert_eq!(m.command, "homog");
    assert_eq!(m.config["g0"], 2.08);
    assert_eq!(m.outputs, vec!["roots.csv"]);
}

#[test]
fn noise_test_lands_within_five_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = lsol(&["noise-test", "--s-a", "0", "--i", "1", "--samples", "1e6"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let z = column(&dir.path().join("moments.csv"), 4);
    assert_eq!(z.len(), 6);
    assert!(z.iter().all(|z| *z < 5.0), "{z:?}");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = lsol(&["evolve", "--config", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = lsol(&["homog", "--no-such-flag", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = lsol(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"g0": 2.08, "typo_key": 1}"#).unwrap();
    let o = lsol(&["homog", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&cfg, r#"{"g0": "high"}"#).unwrap();
    let o = lsol(&["homog", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = lsol(&["soliton", "--geometry", "cube"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three_and_keeps_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = lsol(&["soliton", "--g0", "1.5", "--n", "128", "--length", "48"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let m = Manifest::read(dir.path()).unwrap();
    assert!(m.warnings.iter().any(|w| w.starts_with("failed")));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"g0": 2.5, "theta": 0.3, "seed": 11}"#).unwrap();
    let o = lsol(&["homog", "--config", cfg.to_str().unwrap(), "--theta", "0.047"], dir.path());
    assert!(o.status.success());
    let m = Manifest::read(dir.path()).unwrap();
    assert_eq!(m.config["g0"], 2.5);
    assert_eq!(m.config["theta"], 0.047);
    assert_eq!(m.seed, Some(11));
}

#[test]
fn stochastic_runs_repeat_bit_for_bit() {
    let base = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = base.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_lsol"))
            .args(["evolve", "--initial", "uniform", "--amplitude", "1.5", "--e-in", "0.3", "--theta", "0.1"])
            .args(["--noise", "true", "--t-end", "2", "--dt", "0.01", "--n", "32", "--length", "16", "--seed", "9"])
            .arg("--out")
            .arg(&out)
            .env("LSOL_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(out.join("final.lsol")).unwrap(), Manifest::read(&out).unwrap())
    };
    let (a, ma) = run("a", "1");
    let (b, mb) = run("b", "3");
    assert_eq!(a, b);
    assert_eq!((ma.threads, mb.threads), (1, 3));
    let rec = read_grid(&base.path().join("a").join("final.lsol")).unwrap();
    assert_eq!(rec.header.variable, "E");
    assert!((rec.header.time - 2.0).abs() < 1e-9);
    // a different seed gives a different path
    let out = base.path().join("c");
    let o = Command::new(env!("CARGO_BIN_EXE_lsol"))
        .args(["evolve", "--initial", "uniform", "--amplitude", "1.5", "--e-in", "0.3", "--theta", "0.1"])
        .args(["--noise", "true", "--t-end", "2", "--dt", "0.01", "--n", "32", "--length", "16", "--seed", "10"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_ne!(a, std::fs::read(out.join("final.lsol")).unwrap());
}

#[test]
fn evolve_restarts_from_its_own_output() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = lsol(&["evolve", "--initial", "uniform", "--amplitude", "2", "--t-end", "1", "--n", "64"], &first);
    assert!(o.status.success());
    let path = first.join("final.lsol");
    let o = lsol(&["evolve", "--initial", path.to_str().unwrap(), "--t-end", "1", "--n", "64"], &dir.path().join("second"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = column(&dir.path().join("second").join("observers.csv"), 0);
    assert_eq!(t.first(), Some(&0.0));
}

#[test]
fn soliton_writes_profile_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = lsol(&["soliton", "--stability", "false"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let peak = s["peak_intensity"].as_f64().unwrap();
    assert!((peak - 7.416).abs() < 1e-3);
    let rec = read_grid(&dir.path().join("profile.lsol")).unwrap();
    assert_eq!(rec.field.grid.n[0], 256);
    let abs = column(&dir.path().join("profile.csv"), 3);
    assert!((abs.iter().cloned().fold(0.0, f64::max) - peak.sqrt()).abs() < 1e-9);
}
