use std::path::Path;
use std::process::{Command, Output};

fn strata(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strata"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn classify_prints_roots_and_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let out = strata(&["classify"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["regime"], "Hyperbolic");
    assert_eq!(v["roots"].as_array().unwrap().len(), 4);
    for key in ["fr_minus", "fr_plus", "margin"] {
        assert!(v[key].is_f64(), "{key}");
    }
}

#[test]
fn unstable_point_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"version": 1, "rho_s": 2.0}"#);
    let out = strata(&["classify", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn atlas_is_reproducible_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let a = strata(&["atlas", "--out", "a", "--plots", "--seed", "11"], dir.path());
    let b = strata(&["atlas", "--out", "b", "--seed", "11"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let s = summary(&dir.path().join("a"));
    assert_eq!(s["id"], "atlas");
    assert_eq!(s["seed"], 11);
    assert_eq!(s["pass"], true);
    for k in 0..3 {
        let name = format!("atlas_{k}.csv");
        let x = std::fs::read(dir.path().join("a").join(&name)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(&name)).unwrap();
        assert_eq!(x, y);
        assert!(String::from_utf8(x).unwrap().starts_with("branch_id,p_s,p_b\n"));
        assert!(dir.path().join("a").join(format!("atlas_{k}.svg")).exists());
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"kappas": [0.001, 0.01]}"#,
        r#"{"version": 7}"#,
        r#"{"version": 1, "kappas": [0.01, 0.001, 0.1, 0.2]}"#,
        r#"{"version": 1, "unknown": 3}"#,
        "not json",
    ];
    for (k, text) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("c{k}.json"), text);
        let out = strata(&["sweep-kappa", "--config", &cfg, "--out", "o"], dir.path());
        assert_eq!(out.status.code(), Some(2), "{text}");
    }
    let out = strata(&["sweep-kappa", "--config", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bilayer_run_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x,H_s,H_b,U_s,U_b\n");
    let n = 32;
    for j in 0..n {
        let x = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        csv += &format!("{x},{},0,0,0\n", 0.01 * x.sin());
    }
    write(dir.path(), "init.csv", &csv);
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"version": 1, "n_x": 32, "t_end": 0.3, "initial": {"source": "csv", "path": "init.csv"}}"#,
    );
    let out = strata(&["simulate-bilayer", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = std::fs::read_to_string(dir.path().join("o/trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,x,H_s,H_b,U_s,U_b\n"));
    assert_eq!(traj.lines().count(), 1 + 4 * n);
    let diag = std::fs::read_to_string(dir.path().join("o/diagnostics.csv")).unwrap();
    assert!(diag.starts_with("t,mass_s,mass_b,hs_norm,margin\n"));
}

#[test]
fn blow_up_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"version": 1, "n_x": 64, "t_end": 4.0, "sigma": null, "blowup_factor": 1.5,
            "params": {"rho_s": 0.5, "rho_b": 1.0, "hbar_s": 0.4, "hbar_b": 0.6,
                       "ubar_s": 0.0, "ubar_b": 0.0, "kappa": 0.0},
            "initial": {"source": "closed",
                "h_s": {"kind": "sine", "amplitude": 0.2, "wavenumber": 1, "phase": 0.0},
                "h_b": {"kind": "zero"}, "u_s": {"kind": "zero"}, "u_b": {"kind": "zero"}}}"#,
    );
    let out = strata(&["simulate-bilayer", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(summary(&dir.path().join("o"))["verdict"], "inconclusive");
}

#[test]
fn stratified_run_from_written_profile() {
    let dir = tempfile::tempdir().unwrap();
    let first = write(
        dir.path(),
        "a.json",
        r#"{"version": 1, "n_x": 32, "t_end": 0.1, "levels": {"n_below": 6, "n_above": 6, "stretch": 2.0}}"#,
    );
    let out = strata(&["simulate-stratified", "--config", &first, "--out", "a"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let second = write(
        dir.path(),
        "b.json",
        r#"{"version": 1, "n_x": 32, "t_end": 0.1,
            "profile": {"source": "csv", "path": "a/profile.csv"},
            "initial": {"source": "csv", "path": "a/state_final.csv"}}"#,
    );
    let out = strata(&["simulate-stratified", "--config", &second, "--out", "b"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let values = |name: &str| -> Vec<f64> {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .skip(1)
            .flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .collect()
    };
    let (profile_a, profile_b) = (values("a/profile.csv"), values("b/profile.csv"));
    assert_eq!(profile_a.len(), profile_b.len());
    for (a, b) in profile_a.iter().zip(&profile_b) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn refine_reports_consistency() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"version": 1, "n_x": 32, "t_end": 0.1, "levels": {"n_below": 8, "n_above": 8, "stretch": 2.0}}"#,
    );
    let out = strata(&["refine", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let res = std::fs::read_to_string(dir.path().join("o/residuals.csv")).unwrap();
    assert!(res.starts_with("t,r,residual_hs,bound,ratio\n"));
}

#[test]
fn kappa_sweep_summary_has_fit_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"version": 1, "n_x": 64, "t_end": 0.25}"#);
    let out = strata(&["sweep-kappa", "--config", &cfg, "--out", "o", "--threads", "2", "--plots"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let s = summary(&dir.path().join("o"));
    let slope = s["slope"].as_f64().unwrap();
    assert!((slope - 1.0).abs() <= 0.1);
    let interval = s["interval"].as_array().unwrap();
    assert!(interval[0].as_f64().unwrap() <= slope && slope <= interval[1].as_f64().unwrap());
    let files: Vec<&str> = s["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert_eq!(files, ["sweep_kappa.csv", "sweep_kappa.svg", "summary.json"]);
    let table = std::fs::read_to_string(dir.path().join("o/sweep_kappa.csv")).unwrap();
    assert!(table.starts_with("kappa,error,dt\n"));
    assert_eq!(table.lines().count(), 6);
}

#[test]
fn zero_data_kappa_sweep_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"version": 1, "n_x": 32, "t_end": 0.1, "initial": {
            "h_s": {"kind": "zero"}, "h_b": {"kind": "zero"}, "u_s": {"kind": "zero"}, "u_b": {"kind": "zero"}}}"#,
    );
    let out = strata(&["sweep-kappa", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&dir.path().join("o"));
    assert_eq!(s["detail"]["outcome"]["kind"], "exact");
    assert!(s["slope"].is_null());
}

#[test]
fn check_all_records_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"version": 1, "points": 50, "kappa": 0.0}"#);
    let out = strata(&["check-all", "--config", &cfg, "--seed", "42", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let s = summary(&dir.path().join("o"));
    assert_eq!(s["seed"], 42);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/check_all.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 42);
    let skipped: Vec<_> = report["suites"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["status"] == "skipped")
        .collect();
    assert_eq!(skipped.len(), 1);
    assert_eq!(skipped[0]["name"], "total-velocity");
}
