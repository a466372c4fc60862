mod common;

use std::fs;
use std::path::Path;

use common::{escapade, run, stderr, stdout};

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

fn csv_column(text: &str, name: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn lyapunov_at_zero_has_tiny_residual() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["lyapunov", "--lambda", "0", "--out", "o"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v = json(dir.path().join("o/lyapunov.json"));
    let residual = v["result"]["residual"].as_f64().unwrap();
    assert!(residual <= 1e-12, "residual {residual}");
    assert!(stdout(&out).lines().all(|l| !l.starts_with("FAIL")));
}

#[test]
fn lyapunov_constants_match_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["lyapunov", "--constants", "--out", "o"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = &json(dir.path().join("o/lyapunov.json"))["result"]["constants"];
    let close = |key: &str, want: f64, tol: f64| {
        let got = r[key].as_f64().unwrap();
        assert!((got - want).abs() <= tol, "{key}: {got} vs {want}");
    };
    close("c1", 6.24668, 1e-5);
    close("c2", 25.05332, 1e-5);
    close("k", 2.83220, 1e-5);
}

#[test]
fn simulate_cascade_from_zero_history_stays_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "simulate",
            "--system",
            "cascade",
            "--history",
            "zero",
            "--T",
            "5",
            "--out",
            "o",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = read(dir.path().join("o/simulate.csv"));
    assert_eq!(text.lines().next().unwrap(), "t,x1,x2,x3");
    assert_eq!(text.lines().count(), 202);
    for line in text.lines().skip(1) {
        for cell in line.split(',').skip(1) {
            assert_eq!(cell.parse::<f64>().unwrap(), 0.0, "row {line}");
        }
    }
}

#[test]
fn simulate_planar_decays_with_off_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "simulate",
            "--history",
            "constant",
            "--x0",
            "0.1,0",
            "--T",
            "1",
            "--out",
            "o",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = read(dir.path().join("o/simulate.csv"));
    let x1 = csv_column(&text, "x1");
    let x2 = csv_column(&text, "x2");
    let n0 = x1[0].hypot(x2[0]);
    assert!((n0 - 0.1).abs() < 1e-15);
    assert!(x1
        .iter()
        .zip(&x2)
        .all(|(a, b)| a.is_finite() && b.is_finite()));
}

#[test]
fn escape_exits_zero_and_reports_a_finite_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["escape", "--out", "o"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let so = stdout(&out);
    assert!(so.contains("PASS"), "{so}");
    let text = read(dir.path().join("o/escape.csv"));
    let t = csv_column(&text, "t");
    let last = *t.last().unwrap();
    assert!((last - 0.8565724182).abs() < 1e-6, "escape at {last}");
}

#[test]
fn zero_horizon_reach_estimate_is_the_radius() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "estimate-r",
            "--T",
            "0",
            "--r",
            "0.5,2",
            "--budget",
            "3",
            "--out",
            "o",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = read(dir.path().join("o/estimate-r.csv"));
    assert_eq!(csv_column(&text, "lower_bound"), vec![0.5, 2.0]);
}

#[test]
fn same_seed_gives_byte_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "es-check", "--budget", "3", "--T", "5", "--seed", "11", "--out", out,
        ]
    };
    for out in ["a", "b"] {
        let o = run(dir.path(), &args(out));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("a/es-check.csv")).unwrap();
    let b = fs::read(dir.path().join("b/es-check.csv")).unwrap();
    assert_eq!(a, b);

    let o = run(
        dir.path(),
        &[
            "es-check", "--budget", "3", "--T", "5", "--seed", "12", "--out", "c",
        ],
    );
    assert!(o.status.success());
    let c = fs::read(dir.path().join("c/es-check.csv")).unwrap();
    assert_ne!(a, c, "a different seed should draw different histories");
}

#[test]
fn estimate_r_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = run(
            dir.path(),
            &[
                "estimate-r",
                "--budget",
                "4",
                "--T",
                "3",
                "--r",
                "0.5,1",
                "--seed",
                "3",
                "--out",
                out,
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(dir.path().join("a/estimate-r.csv")).unwrap(),
        fs::read(dir.path().join("b/estimate-r.csv")).unwrap()
    );
}

#[test]
fn manifest_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "estimate-r",
            "--budget",
            "4",
            "--T",
            "3",
            "--r",
            "1",
            "--seed",
            "5",
            "--out",
            "first",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = dir.path().join("first/manifest.json");
    let o = run(
        dir.path(),
        &["--config", manifest.to_str().unwrap(), "--out", "second"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("first/estimate-r.csv")).unwrap(),
        fs::read(dir.path().join("second/estimate-r.csv")).unwrap()
    );
    let mut second = json(dir.path().join("second/manifest.json"));
    second["out"] = "first".into();
    assert_eq!(json(&manifest), second);
}

#[test]
fn environment_sets_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = escapade(dir.path())
        .env("ESCAPADE_SEED", "77")
        .args(["es-check", "--budget", "2", "--T", "2", "--out", "o"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(dir.path().join("o/manifest.json"));
    assert_eq!(m["seed"], 77);
    assert_eq!(m["task"]["probe"]["seed"], 77);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"task": {"subcommand": "es-check", "probe": {"n_ics": 2, "horizon": 2.0}},
            "integrator": {"rel_tol": 1e-9}, "seed": 4}"#,
    )
    .unwrap();
    let o = run(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "9",
            "--out",
            "o",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(dir.path().join("o/manifest.json"));
    assert_eq!(m["seed"], 9);
    assert_eq!(m["task"]["probe"]["n_ics"], 2);
    assert_eq!(m["integrator"]["rel_tol"], 1e-9);
    assert_eq!(m["integrator"]["abs_tol"], 1e-10);
}

#[test]
fn invalid_config_exits_two_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"task": {"subcommand": "es-check", "probe": {"n_ics": "many"}}}"#,
    )
    .unwrap();
    let o = run(dir.path(), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("task.probe.n_ics"), "{err}");
}

#[test]
fn negative_tolerance_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["escape", "--tol=-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("integrator"), "{}", stderr(&o));
}

#[test]
fn mismatched_subcommand_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"task": {"subcommand": "escape"}}"#).unwrap();
    let o = run(dir.path(), &["--config", cfg.to_str().unwrap(), "lyapunov"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn budget_without_sampling_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["escape", "--budget", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn svg_is_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["lyapunov", "--out", "o", "--svg", "plot.svg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = read(dir.path().join("plot.svg"));
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}
