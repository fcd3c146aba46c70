use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn bowlforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bowlforge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn last_row(csv: &str) -> Vec<f64> {
    csv.lines()
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect()
}

#[test]
fn solve_mean_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("mean.csv");
    let out = bowlforge(&[
        "solve",
        "--speed",
        "mean",
        "--dim",
        "2",
        "--rmax",
        "100",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("r,v,vprime,u,kappa1,kappa_rot,residual\n"));
    let row = last_row(&text);
    assert_eq!(row[0], 100.0);
    assert!((row[1] / 100.0 - 1.0).abs() < 1e-3);

    let report = read_json(&dir.path().join("mean.json"));
    assert_eq!(report["schema"], "bowlforge/1");
    assert_eq!(report["status"], "reached_horizon");
    assert_eq!(report["classification"]["verdict"], "entire");
    assert_eq!(report["manifest"]["command"], "solve");
    assert_eq!(report["manifest"]["overrides"]["r_max"], 100.0);
    assert_eq!(report["manifest"]["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn solve_harmonic_mean_blows_up_inside_the_predicted_interval() {
    let out = bowlforge(&[
        "solve",
        "--speed",
        "harmonic-mean",
        "--dim",
        "2",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let report = stdout_json(&out);
    assert_eq!(report["status"], "blew_up");
    let lo = report["blow_up_bracket"][0].as_f64().unwrap();
    let hi = report["blow_up_bracket"][1].as_f64().unwrap();
    assert!(0.785 <= lo && hi <= 1.571, "[{lo}, {hi}]");
    assert_eq!(report["classification"]["verdict"], "bounded");
    assert!(report["profile"].as_array().unwrap().len() > 10);
}

#[test]
fn identical_runs_give_identical_csv() {
    let run = || bowlforge(&["solve", "--speed", "scalar", "--dim", "3", "--rmax", "50"]).stdout;
    let first = run();
    assert!(!first.is_empty());
    assert_eq!(first, run());
}

#[test]
fn parse_errors_exit_2_with_the_offset() {
    let out = bowlforge(&["solve", "--speed", "expr:S1+", "--dim", "2"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset 3"));
    assert!(out.stdout.is_empty());

    for args in [
        &["solve", "--speed", "meen", "--dim", "2"][..],
        &["solve", "--speed", "gauss:x", "--dim", "2"],
        &["classify", "--speed", "mean", "--dim", "1"],
        &["verify", "--speed", "expr:S4", "--dim", "3"],
        &["solve", "--dim", "2"],
        &[
            "solve", "--speed", "mean", "--dim", "2", "--rstart", "5", "--rmax", "1",
        ],
        &["solve", "--speed", "mean", "--dim", "2", "--tol", "-1"],
        &[
            "verify",
            "--speed",
            "mean",
            "--dim",
            "2",
            "--starts",
            "1e-5,1e-3",
        ],
    ] {
        assert_eq!(code(&bowlforge(args)), 2, "{args:?}");
    }
}

#[test]
fn inadmissible_speeds_exit_3() {
    // homogeneous and symmetric but decreasing in one curvature
    let out = bowlforge(&["solve", "--speed", "expr:S1^2 - 3*S2", "--dim", "2"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ellipticity"));
    // not homogeneous
    assert_eq!(
        code(&bowlforge(&[
            "classify",
            "--speed",
            "expr:S1 + S2",
            "--dim",
            "2"
        ])),
        3
    );
    assert_eq!(
        code(&bowlforge(&["verify", "--speed", "gauss:-1", "--dim", "2"])),
        3
    );
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("missing").join("p.csv");
    let out = bowlforge(&[
        "solve",
        "--speed",
        "mean",
        "--dim",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("i/o error"));
}

#[test]
fn classify_examples() {
    let out = bowlforge(&["classify", "--speed", "gauss:1", "--dim", "2"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_json(&out)["verdict"], "entire");

    let out = bowlforge(&["classify", "--speed", "gauss:2", "--dim", "2"]);
    let report = stdout_json(&out);
    assert_eq!(report["verdict"], "bounded");
    let (lo, hi) = (
        report["r_low"].as_f64().unwrap(),
        report["r_high"].as_f64().unwrap(),
    );
    assert!(lo <= 2f64.sqrt() && 2f64.sqrt() <= hi);

    let out = bowlforge(&["classify", "--speed", "mean", "--dim", "5"]);
    let c = stdout_json(&out)["C"].as_f64().unwrap();
    assert!((c - 0.125).abs() < 1e-12);
}

#[test]
fn classify_verify_cross_checks_the_profile() {
    let out = bowlforge(&["classify", "--speed", "mean", "--dim", "2", "--verify"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["validation"]["consistent"], true);

    // an entire verdict cannot be vouched for by a profile that stops at r = 10
    let out = bowlforge(&[
        "classify", "--speed", "mean", "--dim", "2", "--verify", "--rmax", "10",
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(stdout_json(&out)["validation"]["consistent"], false);
}

fn checks(report: &Value) -> Vec<(String, bool, String)> {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c["name"].as_str().unwrap().to_string(),
                c["passed"].as_bool().unwrap(),
                c["detail"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn verify_scalar_curvature_reports_its_barrier_lines() {
    let out = bowlforge(&["verify", "--speed", "scalar", "--dim", "3"]);
    assert_eq!(code(&out), 0);
    let report = stdout_json(&out);
    assert_eq!(report["passed"], true);
    let b = &report["barriers"];
    assert_eq!(b["linear"], true);
    assert!((b["gamma"].as_f64().unwrap() - 1.0 / 6f64.sqrt()).abs() < 1e-15);
    assert!((b["gamma_plus"].as_f64().unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    let names: Vec<String> = checks(&report).into_iter().map(|c| c.0).collect();
    for n in [
        "barrier_sandwich",
        "convexity",
        "residual",
        "tip_curvature",
        "start_convergence",
    ] {
        assert!(names.iter().any(|x| x == n), "missing {n}");
    }
}

#[test]
fn verify_start_convergence_for_mean_curvature() {
    let out = bowlforge(&[
        "verify",
        "--speed",
        "mean",
        "--dim",
        "2",
        "--starts",
        "1e-3,1e-4,1e-5",
    ]);
    assert_eq!(code(&out), 0);
    let report = stdout_json(&out);
    let factors = report["start_convergence"]["shrink_factors"]
        .as_array()
        .unwrap();
    assert_eq!(factors.len(), 1);
    assert!(factors[0].as_f64().unwrap() >= 5.0);
}

#[test]
fn verify_gauss_matches_the_closed_form() {
    let out = bowlforge(&["verify", "--speed", "gauss:2", "--dim", "2"]);
    assert_eq!(code(&out), 0);
    let all = checks(&stdout_json(&out));
    let closed = all.iter().find(|c| c.0 == "closed_form").unwrap();
    assert!(closed.1, "{}", closed.2);
    assert!(all.iter().any(|c| c.0 == "closed_form_radius" && c.1));
}

#[test]
fn verify_failures_exit_1_and_still_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.json");
    let out = bowlforge(&[
        "verify",
        "--speed",
        "mean",
        "--dim",
        "2",
        "--rstart",
        "0.05",
        "--starts",
        "1e-3,1e-4",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let report = read_json(&path);
    assert_eq!(report["passed"], false);
    let failed: Vec<String> = checks(&report)
        .into_iter()
        .filter(|c| !c.1)
        .map(|c| c.0)
        .collect();
    assert_eq!(failed, ["tip_curvature"]);
}

fn sweep_outputs(threads: &str) -> (Vec<(String, Vec<u8>)>, Value) {
    let dir = tempfile::tempdir().unwrap();
    let out = bowlforge(&[
        "sweep",
        "--speed",
        "gauss:{alpha}",
        "--alphas",
        "0.5,2",
        "--dims",
        "2,3",
        "--rmax",
        "20",
        "--threads",
        threads,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    (files, read_json(&dir.path().join("sweep.json")))
}

#[test]
fn sweep_output_does_not_depend_on_the_thread_count() {
    let (one, summary) = sweep_outputs("1");
    let (four, _) = sweep_outputs("4");
    assert_eq!(one.len(), 4);
    assert_eq!(one, four);
    let verdicts: Vec<&str> = summary["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["classification"]["verdict"].as_str().unwrap())
        .collect();
    // gauss powers are entire exactly when alpha <= n/2
    assert_eq!(verdicts, ["entire", "entire", "bounded", "bounded"]);
}

#[test]
fn sweep_rejects_malformed_templates_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("never");
    let out = bowlforge(&[
        "sweep",
        "--speed",
        "gauss:{alpha}:",
        "--alphas",
        "1",
        "--dims",
        "2",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!target.exists());
}
