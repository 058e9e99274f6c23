use std::path::Path;
use std::process::{Command, Output};

use alpha_patches::io::{read_series, read_snapshot, write_series};
use alpha_patches::{DiagnosticsRecord, Mode};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_alpha-patch"));
    c.env_remove(alpha_patches::THREADS_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}\n{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
    })
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("stderr is a JSON error report")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn verify_passes_with_defaults() {
    let o = run(&["verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["circle"]["passed"], true);
    assert_eq!(v["cross_method"]["compared"], 100);
    let y = v["circle"]["discrete"][1].as_f64().unwrap();
    assert!((y + 0.8400066).abs() < 1e-3);
}

#[test]
fn zero_steps_writes_initial_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "--steps", "0", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (s, side) = read_snapshot(&out.join("snapshot_000000.csv")).unwrap();
    assert_eq!(s.contours.len(), 2);
    assert_eq!(side.step, 0);
    assert_eq!(side.t, Some(0.0));
    assert_eq!(read_series(&out.join("timeseries.csv")).unwrap().len(), 1);
    assert!(out.join("config.toml").exists());
    assert_eq!(stdout_json(&o)["termination"]["reason"], "max_steps");
}

#[test]
fn series_has_a_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "--steps", "5", "--nu", "0.3", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_series(&out.join("timeseries.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), (0..=5).collect::<Vec<_>>());
}

#[test]
fn resume_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let common = ["--nu", "0.3", "--scenario", "two_ellipses"];
    let o = run(&[&["run", "--steps", "6", "--out", p(&a)][..], &common].concat());
    assert!(o.status.success());
    let o = run(&[&["run", "--steps", "3", "--out", p(&b)][..], &common].concat());
    assert!(o.status.success());
    let snap = b.join("snapshot_000003.csv");
    let o = run(&[&["run", "--steps", "6", "--out", p(&b), "--resume", p(&snap)][..], &common].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let full = std::fs::read(a.join("timeseries.csv")).unwrap();
    let resumed = std::fs::read(b.join("timeseries.csv")).unwrap();
    assert_eq!(full, resumed);
    let (x, _) = read_snapshot(&a.join("snapshot_000006.csv")).unwrap();
    let (y, _) = read_snapshot(&b.join("snapshot_000006.csv")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for w in ["1", "3"] {
        let out = dir.path().join(w);
        let o = run(&["run", "--steps", "2", "--nu", "0.3", "--workers", w, "--out", p(&out)]);
        assert!(o.status.success());
        files.push(std::fs::read(out.join("timeseries.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn bad_alpha_reports_domain_error_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "--alpha", "1.5", "--out", p(dir.path())]);
    assert!(!o.status.success());
    let e = stderr_json(&o);
    assert_eq!(e["kind"], "domain");
    assert_eq!(e["config"]["alpha"], 1.5);
}

#[test]
fn unknown_scenario_is_reported() {
    let o = run(&["run", "--scenario", "three_circles"]);
    assert!(!o.status.success());
    assert_eq!(stderr_json(&o)["kind"], "unknown_scenario");
}

#[test]
fn bad_flag_is_a_usage_error() {
    let o = run(&["run", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["kind"], "usage");
}

#[test]
fn init_writes_loadable_config_once() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    let o = run(&["init", p(&path), "--scenario", "wedge", "--alpha", "0.9"]);
    assert!(o.status.success());
    let c = alpha_patches::RunConfig::load(&path).unwrap();
    assert_eq!(c.alpha, 0.9);
    assert_eq!(c.mode, Mode::SelfSimilar);
    let again = run(&["init", p(&path)]);
    assert!(!again.status.success());
    assert_eq!(stderr_json(&again)["kind"], "usage");
}

fn synthetic_series(path: &Path, t_star: f64, alpha: f64) {
    let records: Vec<DiagnosticsRecord> = (0..20)
        .map(|i| {
            let t = 0.3 * i as f64;
            DiagnosticsRecord {
                step: i,
                t: Some(t),
                tau: None,
                min_distance: Some(2.0 * (t_star - t).powf(1.0 / alpha)),
                max_curvature: 3.0 * (t_star - t).powf(-1.0 / alpha),
                areas: vec![1.0, 1.0],
                node_counts: vec![10, 10],
                dt: 0.3,
            }
        })
        .collect();
    write_series(path, &records).unwrap();
}

#[test]
fn fit_recovers_synthetic_collapse_time() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    synthetic_series(&path, 7.0, 0.7);
    let o = run(&["fit", "--input", p(&path), "--model", "collapse", "--alpha", "0.7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t_star = stdout_json(&o)["t_star"].as_f64().unwrap();
    assert!((t_star - 7.0).abs() < 1e-8, "{t_star}");

    let o = run(&["fit", "--input", p(&path), "--model", "curvature", "--t-star", "7", "--window", "1,5"]);
    let v = stdout_json(&o);
    assert!((v["exponent"].as_f64().unwrap() + 1.0 / 0.7).abs() < 1e-10);
    assert_eq!(v["fit"]["count"], 13);
}

#[test]
fn resolved_window_ends_where_the_gap_meets_the_spacing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    synthetic_series(&path, 7.0, 0.7);
    // dt = 0.3 with B = 0.5 means spacing 0.6; D = 2 (7 - t)^(1/0.7) stays
    // at least 6 spacings wide up to t = 5.4.
    let o = run(&["fit", "--input", p(&path), "--resolved", "6", "--span", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!((v["fit"]["window"]["end"].as_f64().unwrap() - 5.4).abs() < 1e-12);
    assert!((v["t_star"].as_f64().unwrap() - 7.0).abs() < 1e-8);

    let o = run(&["fit", "--input", p(&path), "--resolved", "100"]);
    assert_eq!(stderr_json(&o)["kind"], "usage");
}

#[test]
fn slope_fit_needs_tau() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    synthetic_series(&path, 7.0, 0.7);
    let o = run(&["fit", "--input", p(&path), "--model", "slope"]);
    assert!(!o.status.success());
    assert_eq!(stderr_json(&o)["kind"], "usage");
}

#[test]
fn classify_compares_with_delta() {
    let v = stdout_json(&run(&["classify", "--m", "1.4742", "--alpha", "0.7"]));
    assert_eq!(v["class"], "non_collapsing");
    let v = stdout_json(&run(&["classify", "--m", "1.4187", "--alpha", "0.7"]));
    assert_eq!(v["class"], "marginal");
    let v = stdout_json(&run(&["classify", "--m", "1.2", "--alpha", "0.7"]));
    assert_eq!(v["class"], "collapsing");
    assert!(!run(&["classify"]).status.success());
}

#[test]
fn rescale_round_trips_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(run(&["run", "--steps", "0", "--nu", "0.3", "--out", p(&out)]).status.success());
    let snap = out.join("snapshot_000000.csv");
    let ss = dir.path().join("ss");
    let o = run(&["rescale", p(&snap), "--t-star", "6.8", "--x-star", "1.25,0", "--out", p(&ss)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (y, side) = read_snapshot(&ss.join("snapshot_000000.csv")).unwrap();
    assert_eq!(y.mode, Mode::SelfSimilar);
    assert!((side.tau.unwrap() + 6.8f64.ln()).abs() < 1e-15);

    let back = dir.path().join("back");
    let back_snap = ss.join("snapshot_000000.csv");
    let o = run(&["rescale", p(&back_snap), "--t-star", "6.8", "--x-star", "1.25,0", "--out", p(&back)]);
    assert!(o.status.success());
    let (x0, _) = read_snapshot(&snap).unwrap();
    let (x1, _) = read_snapshot(&back.join("snapshot_000000.csv")).unwrap();
    for (a, b) in x0.contours.iter().zip(&x1.contours) {
        for (u, v) in a.nodes().iter().zip(b.nodes()) {
            assert!((*u - *v).norm() < 1e-13);
        }
    }
}

#[test]
fn wedge_snapshot_is_self_similar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run-ss", "--scenario", "wedge", "--steps", "0", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, side) = read_snapshot(&out.join("snapshot_000000.csv")).unwrap();
    assert_eq!(side.mode, Mode::SelfSimilar);
    assert_eq!(side.tau, Some(0.0));
    assert_eq!(side.t, None);
    assert_eq!(side.extra.unwrap()["scenario"]["name"], "wedge");
}

#[test]
fn backward_steps_the_wedge() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["backward", "--steps", "1", "--dt", "0.01", "--nu", "0.2", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!((v["tau"].as_f64().unwrap() + 0.01).abs() < 1e-15);
    assert_eq!(v["wedge_deviation"].as_array().unwrap().len(), 2);
    assert!(out.join("snapshot_000001.csv").exists());
}
