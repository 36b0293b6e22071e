use std::path::Path;
use std::process::{Command, Output};

use simrobust::bench::{read_rows_csv, SweepReport};
use simrobust::data::load;

const SMALL: &str = r#"{
  "n": 6000, "d": 4, "link": "gelu", "sigma": 0.5,
  "noise": {"kind": "student_t", "nu": 6},
  "eps": 0.05,
  "adversary": {"kind": "point_mass", "magnitude": 100, "direction_seed": 3},
  "seed": 11,
  "eps_grid": [0.0, 0.05],
  "trials": 2,
  "P": 4
}"#;

fn simrobust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simrobust"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn constants_json_matches_reference_row() {
    let o = simrobust(&["constants", "--link", "square", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for (key, want) in [
        ("esc", 6.0),
        ("mu", 4.0),
        ("mu1", 12.0),
        ("R", 1.64e-3),
        ("c_lip", 2.89e2),
        ("phi1", 6.08e2),
        ("phi2", 6.95),
    ] {
        let got = v[key].as_f64().unwrap();
        assert!((got - want).abs() <= 0.02 * want, "{key}: {got}");
    }
    for key in ["link", "c4", "alpha", "gamma", "eta"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let text = simrobust(&["constants", "--link", "square"]);
    assert!(stdout(&text).contains("ESC"));
}

#[test]
fn verify_commands_exit_codes() {
    let o = simrobust(&["verify", "table2", "--tol", "0.02", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 42);
    assert_eq!(simrobust(&["verify", "table2", "--tol", "1e-9"]).status.code(), Some(1));
    assert_eq!(
        simrobust(&["verify", "stein", "--link", "square"]).status.code(),
        Some(0)
    );
}

#[test]
fn usage_errors_exit_two_with_one_line() {
    for args in [
        vec!["frobnicate"],
        vec!["constants"],
        vec!["constants", "--link", "relu"],
        vec!["recover", "--config", "/definitely/missing.json"],
    ] {
        let o = simrobust(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(o.stdout.is_empty());
        assert!(!o.stderr.is_empty());
    }
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{"n": 10, "d": 2, "link": "gelu", "sigma": 0.5, "eps": 0.7}"#,
    );
    assert_eq!(simrobust(&["simulate", "--config", &bad]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SMALL);
    let a = simrobust(&["simulate", "--config", &cfg, "--seed", "5"]);
    let b = simrobust(&["simulate", "--config", &cfg, "--seed", "5"]);
    let c = simrobust(&["simulate", "--config", &cfg, "--seed", "6"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().next().unwrap(), "x_0,x_1,x_2,x_3,y,corrupted");
    assert_eq!(text.lines().count(), 6001);

    let bin = dir.path().join("data.bin");
    let o = simrobust(&[
        "simulate",
        "--config",
        &cfg,
        "--seed",
        "5",
        "--out",
        bin.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let ds = load(&bin).unwrap();
    assert_eq!((ds.n(), ds.d(), ds.corrupted_count()), (6000, 4, 300));
}

#[test]
fn recover_json_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SMALL);
    let traj = dir.path().join("traj.csv");
    let run = || {
        simrobust(&[
            "recover",
            "--config",
            &cfg,
            "--seed",
            "2",
            "--json",
            "--baseline",
            "--trajectory",
            traj.to_str().unwrap(),
        ])
    };
    let a = run();
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, run().stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["result"]["beta_hat"].as_array().unwrap().len(), 4);
    assert!(v["result"]["dist_final"].as_f64().unwrap() < 0.5);
    assert!(v["baseline"]["dist_final"].as_f64().is_some());
    let csv = std::fs::read_to_string(&traj).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "iteration,grad_norm,dist");
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn recover_on_the_acceptance_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "gelu.json",
        r#"{
  "n": 1300000, "d": 10, "link": "gelu", "sigma": 0.5,
  "noise": {"kind": "student_t", "nu": 6},
  "eps": 0.05,
  "adversary": {"kind": "point_mass", "magnitude": 100, "direction_seed": 1},
  "seed": 1, "P": 25
}"#,
    );
    let o = simrobust(&["recover", "--config", &cfg, "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let dist = v["result"]["dist_final"].as_f64().unwrap();
    assert!(dist <= 10.0 * 0.5 * 0.05f64.sqrt(), "{dist}");
}

#[test]
fn sweep_writes_rows_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SMALL);
    let rows = dir.path().join("rows.csv");
    let report = dir.path().join("report.json");
    let o = simrobust(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        rows.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let parsed = read_rows_csv(std::fs::File::open(&rows).unwrap()).unwrap();
    assert_eq!(parsed.len(), 2);
    assert_eq!(parsed[1].eps, 0.05);
    let rep: SweepReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep.rows, parsed);
    assert_eq!(rep.trials.len(), 4);

    let again = simrobust(&["sweep", "--config", &cfg, "--trials", "1"]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(read_rows_csv(again.stdout.as_slice()).unwrap()[0].trials, 1);
}
