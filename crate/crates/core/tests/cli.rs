use std::path::Path;
use std::process::{Command, Output};

fn fsnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsnet"))
        .args(args)
        .env("FSNET_QUIET", "1")
        .output()
        .expect("run fsnet")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn parse_csv(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn s_star(out: &Output) -> f64 {
    let text = stdout(out);
    let line = text
        .lines()
        .find(|l| l.starts_with("s_star "))
        .expect("s_star line");
    line["s_star ".len()..].trim().parse().unwrap()
}

#[test]
fn presets_lists_six_flows() {
    let out = fsnet(&["presets"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().any(|l| l == "homann 2 1"));
    assert!(text.lines().any(|l| l == "blasius 0.5 0"));
    assert!(text.lines().any(|l| l == "pohlhausen 0 1"));
    assert!(text.lines().any(|l| l == "hiemenz 1 1"));
}

#[test]
fn matrices_match_displayed_forms() {
    let out = fsnet(&["matrices", "--basis", "legendre", "--order", "5"]);
    assert!(out.status.success());
    let l = parse_csv(&stdout(&out));
    let want_l = [
        [0., 0., 0., 0., 0., 0.],
        [1., 0., 0., 0., 0., 0.],
        [0., 3., 0., 0., 0., 0.],
        [1., 0., 5., 0., 0., 0.],
        [0., 3., 0., 7., 0., 0.],
        [1., 0., 5., 0., 9., 0.],
    ];
    assert_eq!(l, want_l.iter().map(|r| r.to_vec()).collect::<Vec<_>>());

    let out = fsnet(&["matrices", "--basis", "chebyshev", "--order", "5"]);
    let c = parse_csv(&stdout(&out));
    let want_c = [
        [0., 0., 0., 0., 0., 0.],
        [1., 0., 0., 0., 0., 0.],
        [0., 4., 0., 0., 0., 0.],
        [3., 0., 6., 0., 0., 0.],
        [0., 8., 0., 8., 0., 0.],
        [5., 0., 10., 0., 10., 0.],
    ];
    assert_eq!(c, want_c.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
}

#[test]
fn matrix_power_two_is_exact_square() {
    for basis in ["legendre", "chebyshev"] {
        let m = parse_csv(&stdout(&fsnet(&[
            "matrices", "--basis", basis, "--order", "7",
        ])));
        let m2 = parse_csv(&stdout(&fsnet(&[
            "matrices", "--basis", basis, "--order", "7", "--power", "2",
        ])));
        let n = m.len();
        for i in 0..n {
            for j in 0..n {
                let sq: f64 = (0..n).map(|k| m[i][k] * m[k][j]).sum();
                assert_eq!(m2[i][j], sq, "{basis} ({i},{j})");
            }
        }
    }
    let json = stdout(&fsnet(&[
        "matrices",
        "--basis",
        "chebyshev",
        "--order",
        "3",
        "--format",
        "json",
    ]));
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["rows"][3][0], 3.0);
}

#[test]
fn oracle_reference_values() {
    for (args, want, tol) in [
        (vec!["--preset", "hiemenz"], 1.232588, 1e-5),
        (vec!["--preset", "homann"], 1.311938, 1e-5),
        (vec!["--alpha", "1", "--beta", "10"], 3.675234, 1e-5),
    ] {
        let out = fsnet(&[&["oracle"], args.as_slice()].concat());
        assert!(out.status.success(), "{args:?}");
        assert!(
            (s_star(&out) - want).abs() <= tol,
            "{args:?}: {}",
            s_star(&out)
        );
    }
}

#[test]
fn oracle_degenerate_linear_case() {
    let out = fsnet(&["oracle", "--alpha", "0", "--beta", "0", "--xmax", "6"]);
    assert!(out.status.success());
    assert!((s_star(&out) - 1.0 / 6.0).abs() <= 1e-12);
}

#[test]
fn oracle_csv_and_bracket_failure() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("blasius.csv");
    let out = fsnet(&[
        "oracle",
        "--preset",
        "blasius",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("x,g,gp,gpp"));
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(last[0], 10.0);
    assert!((last[2] - 1.0).abs() < 1e-6);

    let out = fsnet(&["oracle", "--alpha", "1", "--beta", "-0.5"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn config_errors_exit_one() {
    assert_eq!(
        fsnet(&["solve", "--preset", "wedge"]).status.code(),
        Some(1)
    );
    assert_eq!(fsnet(&["solve", "--points", "1"]).status.code(), Some(1));
    assert_eq!(fsnet(&["oracle"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"flow": {"alpha": 1.0}, "typo": 3}"#).unwrap();
    let out = fsnet(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo"));
}

fn short_solve(
    dir: &Path,
    name: &str,
    extra: &[&str],
    threads: &str,
) -> (Output, serde_json::Value, String) {
    let report = dir.join(format!("{name}.json"));
    let mut args = vec![
        "solve",
        "--points",
        "200",
        "--adam-epochs",
        "5",
        "--lbfgs-iters",
        "15",
        "--out",
        report.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = Command::new(env!("CARGO_BIN_EXE_fsnet"))
        .args(&args)
        .env("FSNET_QUIET", "1")
        .env("FSNET_THREADS", threads)
        .output()
        .unwrap();
    let text = std::fs::read_to_string(&report).unwrap();
    (out, serde_json::from_str(&text).unwrap(), text)
}

#[test]
fn solve_writes_report_profile_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report, _) = short_solve(
        dir.path(),
        "run",
        &["--preset", "blasius", "--model", "ldnn"],
        "1",
    );
    assert_eq!(out.status.code(), Some(2), "max_iters exit code");
    assert_eq!(report["model"], "LDNN");
    assert_eq!(report["preset"], "blasius");
    assert_eq!(report["converged"], "max_iters");
    assert_eq!(report["config"]["flow"]["n_points"], 200);
    assert_eq!(report["lbfgs_iterations"], 15);
    assert!(report["oracle"]["s_star"].as_f64().is_some());
    assert!(report["metrics"]["mae"].as_f64().is_some());
    assert!(report.get("timings").is_none());

    let profile = std::fs::read_to_string(dir.path().join("run.profile.csv")).unwrap();
    assert_eq!(profile.lines().next(), Some("x,g,gp,gpp,residual"));
    assert_eq!(profile.lines().count(), 301);
    let trace = std::fs::read_to_string(dir.path().join("run.trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next(),
        Some("stage,iteration,loss,wall_time_ms")
    );
    assert_eq!(trace.lines().count(), 1 + 5 + 15);
}

#[test]
fn reports_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let extra = ["--preset", "hiemenz", "--sampling", "random", "--seed", "4"];
    let (_, _, one) = short_solve(dir.path(), "t1", &extra, "1");
    let (_, _, three) = short_solve(dir.path(), "t3", &extra, "3");
    assert_eq!(one, three);
    let p1 = std::fs::read(dir.path().join("t1.profile.csv")).unwrap();
    let p3 = std::fs::read(dir.path().join("t3.profile.csv")).unwrap();
    assert_eq!(p1, p3);
}

#[test]
fn eval_reproduces_saved_run() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report, _) = short_solve(
        dir.path(),
        "saved",
        &["--preset", "pohlhausen", "--no-oracle"],
        "2",
    );
    assert!(report["oracle"].is_null());
    let path = dir.path().join("saved.json");
    let out = fsnet(&["eval", "--report", path.to_str().unwrap(), "--no-oracle"]);
    assert!(out.status.success());
    let eval: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(
        eval["g_dd_0"].as_f64().unwrap().to_bits(),
        report["g_dd_0"].as_f64().unwrap().to_bits()
    );
    assert_eq!(
        eval["loss"].as_f64().unwrap().to_bits(),
        report["final_loss"].as_f64().unwrap().to_bits()
    );
}

#[test]
fn echoed_config_reruns_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let (_, first, first_text) =
        short_solve(dir.path(), "a", &["--preset", "homann", "--no-oracle"], "1");
    let cfg = dir.path().join("echo.json");
    std::fs::write(&cfg, serde_json::to_string(&first["config"]).unwrap()).unwrap();
    let report = dir.path().join("b.json");
    let out = fsnet(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--model",
        "file",
        "--preset",
        "homann",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(std::fs::read_to_string(&report).unwrap(), first_text);
}
