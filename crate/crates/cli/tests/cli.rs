use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn h2cert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_h2cert"))
        .args(args)
        .env("H2CERT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn put(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn oscillator_lpm(m: f64, r: f64, k: f64) -> String {
    format!(
        r#"{{"format": 1,
        "masses": [{{"id": "m", "value": {m}}}],
        "springs": [{{"id": "k", "between": ["ground", "m"], "k": {k}}}],
        "dampers": [{{"id": "r", "between": ["ground", "m"], "r": {r}}}],
        "signals": {{"u": {{"kind": "step", "amplitude": 1.0, "horizon": 1.0}}}},
        "sources": [{{"mass": "m", "signal": "u"}}],
        "boi": [{{"label": "x", "masses": ["m"]}}]}}"#
    )
}

const SIGNAL: &str = r#"{"kind": "ramp-hold", "amplitude": 1.0, "rise": 0.5, "end": 2.0}"#;

/// Clamped bar (L = A = 1) with a tip source of weight `load` and the tip as BoI.
fn bar_dpm(elements: usize, youngs: f64, density: f64, rayleigh: (f64, f64), lumped: bool, load: f64) -> String {
    let tip = elements - 1;
    let mass_model = if lumped { "lumped" } else { "consistent" };
    format!(
        r#"{{"format": 1,
        "bar": {{"length": 1.0, "area": 1.0, "youngs_modulus": {youngs}, "density": {density},
                 "elements": {elements}, "rayleigh": [{a}, {b}], "mass_model": "{mass_model}"}},
        "sources": [{{"nodes": [{tip}], "weights": [{load}], "signal": {SIGNAL}}}],
        "boi": [{{"label": "tip", "nodes": [{tip}]}}]}}"#,
        a = rayleigh.0,
        b = rayleigh.1,
    )
}

/// Two-mass chain ground–m1–m2 with Rayleigh-proportional dampers, loaded
/// and observed at m2.
fn chain_lpm(m1: f64, m2: f64, k1: f64, k2: f64, rayleigh: (f64, f64), load: f64) -> String {
    let (alpha, beta) = rayleigh;
    format!(
        r#"{{"format": 1,
        "masses": [{{"id": "m1", "value": {m1}}}, {{"id": "m2", "value": {m2}}}],
        "springs": [{{"id": "k1", "between": ["ground", "m1"], "k": {k1}}},
                    {{"id": "k2", "between": ["m1", "m2"], "k": {k2}}}],
        "dampers": [{{"id": "r1", "between": ["ground", "m1"], "r": {r1}}},
                    {{"id": "r2", "between": ["m1", "m2"], "r": {r2}}},
                    {{"id": "g1", "between": ["ground", "m1"], "r": {g1}}},
                    {{"id": "g2", "between": ["ground", "m2"], "r": {g2}}}],
        "signals": {{"p": {SIGNAL}}},
        "sources": [{{"mass": "m2", "signal": "p", "scale": {load}}}],
        "boi": [{{"label": "tip", "masses": ["m2"]}}]}}"#,
        r1 = beta * k1,
        r2 = beta * k2,
        g1 = alpha * m1,
        g2 = alpha * m2,
    )
}

/// A two-element lumped-mass bar and the two-mass chain it discretizes to.
fn matched_files(dir: &Path) -> (String, String) {
    let (youngs, density, rayleigh, load) = (50.0, 2.0, (0.4, 0.01), 3.0);
    let dpm = put(dir, "dpm.json", &bar_dpm(2, youngs, density, rayleigh, true, load));
    // element length 1/2: k = EA/le, node masses ρAle and ρAle/2
    let (k, me) = (2.0 * youngs, 0.5 * density);
    let lpm = put(dir, "lpm.json", &chain_lpm(me, 0.5 * me, k, k, rayleigh, load));
    (lpm, dpm)
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn check_matched_pair_is_consistent() {
    let dir = TempDir::new().unwrap();
    let (lpm, dpm) = matched_files(dir.path());
    let out = dir.path().join("out");
    let run = h2cert(&["check", &lpm, &dpm, "--tol", "0.05", "--out", path_str(&out)]);
    assert_eq!(code(&run), 0, "{}{}", stdout(&run), stderr(&run));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["eps_rel"].as_f64().unwrap() < 1e-6, "{report}");
    for f in ["bound.csv", "error_decay.csv", "summary.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn check_mass_mismatch_fails_c1() {
    let dir = TempDir::new().unwrap();
    let dpm = put(dir.path(), "dpm.json", &bar_dpm(2, 50.0, 2.0, (0.4, 0.01), true, 3.0));
    let lpm = put(dir.path(), "lpm.json", &chain_lpm(2.0, 1.0, 100.0, 100.0, (0.4, 0.01), 3.0));
    let out = dir.path().join("out");
    let run = h2cert(&["check", &lpm, &dpm, "--out", path_str(&out)]);
    assert_eq!(code(&run), 1, "{}{}", stdout(&run), stderr(&run));
    assert!(stdout(&run).contains("C1"), "{}", stdout(&run));
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["c1"]["pass"], serde_json::Value::Bool(false), "{report}");
}

#[test]
fn check_missing_manifest_is_an_error() {
    let dir = TempDir::new().unwrap();
    let lpm = put(dir.path(), "lpm.json", &oscillator_lpm(1.0, 1.0, 1.0));
    let missing = dir.path().join("nope.json");
    let run = h2cert(&["check", &lpm, path_str(&missing), "--out", path_str(&dir.path().join("out"))]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("not found"), "{}", stderr(&run));
}

#[test]
fn check_rejects_tolerance_outside_unit_interval() {
    let dir = TempDir::new().unwrap();
    let (lpm, dpm) = matched_files(dir.path());
    let run = h2cert(&["check", &lpm, &dpm, "--tol", "1.5", "--out", path_str(&dir.path().join("out"))]);
    assert_eq!(code(&run), 2);
}

#[test]
fn reduce_bar_meets_target_with_monotone_decay() {
    let dir = TempDir::new().unwrap();
    let dpm = put(dir.path(), "dpm.json", &bar_dpm(1000, 4107.3, 3.88162e5, (0.38, 0.05), false, 0.005));
    let out = dir.path().join("out");
    let run = h2cert(&["reduce", &dpm, "--target", "0.01", "--out", path_str(&out)]);
    assert_eq!(code(&run), 0, "{}{}", stdout(&run), stderr(&run));
    let rows = read_csv(&out.join("error_decay.csv"));
    assert!(!rows.is_empty());
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0], "orders increase");
        assert!(w[1][1] <= w[0][1], "certified error is non-increasing: {w:?}");
    }
    assert!(rows.last().unwrap()[2] <= 0.01);
    assert!(out.join("family.json").exists());
}

#[test]
fn reduce_unreachable_target_flags_unmet() {
    let dir = TempDir::new().unwrap();
    let dpm = put(dir.path(), "dpm.json", &bar_dpm(200, 4107.3, 3.88162e5, (0.38, 0.05), false, 0.005));
    let out = dir.path().join("out");
    let run = h2cert(&["reduce", &dpm, "--target", "1e-9", "--max-order", "4", "--out", path_str(&out)]);
    assert_eq!(code(&run), 1, "{}{}", stdout(&run), stderr(&run));
    assert!(stdout(&run).contains("target NOT met"));
    let family: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("family.json")).unwrap()).unwrap();
    assert!(family["steps"].as_array().unwrap().iter().all(|s| s["order"].as_u64().unwrap() <= 4));
}

#[test]
fn reduce_undamped_bar_is_an_error() {
    let dir = TempDir::new().unwrap();
    let dpm = put(dir.path(), "dpm.json", &bar_dpm(20, 100.0, 1.0, (0.0, 0.0), false, 1.0));
    let run = h2cert(&["reduce", &dpm, "--out", path_str(&dir.path().join("out"))]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("is_stable"), "{}", stderr(&run));
}

#[test]
fn simulate_zero_signal_gives_zero_output() {
    let dir = TempDir::new().unwrap();
    let lpm = put(dir.path(), "lpm.json", &oscillator_lpm(1.0, 1.0, 1.0));
    let out = dir.path().join("out");
    let signal = r#"{"kind": "step", "amplitude": 0.0}"#;
    let run = h2cert(&["simulate", &lpm, "--signal", signal, "--dt", "0.01", "--horizon", "2", "--out", path_str(&out)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let rows = read_csv(&out.join("trajectory.csv"));
    assert_eq!(rows.len(), 201);
    assert!(rows.iter().all(|r| r[1] == 0.0));
}

#[test]
fn simulate_non_positive_step_is_an_error() {
    let dir = TempDir::new().unwrap();
    let lpm = put(dir.path(), "lpm.json", &oscillator_lpm(1.0, 1.0, 1.0));
    for dt in ["0", "-0.1"] {
        let run = h2cert(&["simulate", &lpm, "--dt", dt, "--horizon", "1", "--out", path_str(&dir.path().join("out"))]);
        assert_eq!(code(&run), 2, "dt {dt}");
    }
}

#[test]
fn simulate_step_on_bar_settles_at_static_deflection() {
    let dir = TempDir::new().unwrap();
    // static tip deflection under a unit tip force: L/(EA) = 0.01
    let dpm = put(dir.path(), "dpm.json", &bar_dpm(20, 100.0, 1.0, (2.0, 1e-3), false, 1.0));
    let out = dir.path().join("out");
    let signal = r#"{"kind": "step", "amplitude": 1.0}"#;
    let run = h2cert(&["simulate", &dpm, "--signal", signal, "--dt", "1e-3", "--horizon", "15", "--out", path_str(&out)]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let rows = read_csv(&out.join("trajectory.csv"));
    let last = rows.last().unwrap();
    assert!((last[0] - 15.0).abs() < 1e-9);
    assert!((last[1] - 0.01).abs() < 1e-8, "{}", last[1]);
}

#[test]
fn simulate_dpm_needs_a_time_grid() {
    let dir = TempDir::new().unwrap();
    let dpm = put(dir.path(), "dpm.json", &bar_dpm(20, 100.0, 1.0, (2.0, 1e-3), false, 1.0));
    let run = h2cert(&["simulate", &dpm, "--out", path_str(&dir.path().join("out"))]);
    assert_eq!(code(&run), 2);
}

#[test]
fn h2_of_unit_oscillator() {
    let dir = TempDir::new().unwrap();
    let lpm = put(dir.path(), "lpm.json", &oscillator_lpm(1.0, 1.0, 1.0));
    let run = h2cert(&["h2", &lpm]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let value: f64 = stdout(&run).trim().strip_prefix("h2_norm ").unwrap().parse().unwrap();
    assert!((value - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12, "{value}");
}

#[test]
fn h2_distance_to_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let lpm = put(dir.path(), "lpm.json", &oscillator_lpm(2.0, 0.3, 5.0));
    let run = h2cert(&["h2", &lpm, &lpm]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let value: f64 = stdout(&run).trim().strip_prefix("h2_error ").unwrap().parse().unwrap();
    assert_eq!(value, 0.0);
}

#[test]
fn h2_of_undamped_model_is_an_error() {
    let dir = TempDir::new().unwrap();
    let lpm = put(dir.path(), "lpm.json", &oscillator_lpm(1.0, 0.0, 1.0));
    let run = h2cert(&["h2", &lpm]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).starts_with("error:"), "{}", stderr(&run));
}

fn listing(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (PathBuf::from(p.file_name().unwrap()), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_bit_identical() {
    let dir = TempDir::new().unwrap();
    let dpm = put(dir.path(), "dpm.json", &bar_dpm(60, 4107.3, 3.88162e5, (0.38, 0.05), false, 0.005));
    let lpm = put(
        dir.path(),
        "lpm.json",
        &chain_lpm(1.9e5, 1.9e5, 8.2e3, 8.2e3, (0.38, 0.05), 0.005),
    );
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let r = h2cert(&["check", &lpm, &dpm, "--validate", "--out", path_str(&out)]);
        assert!(matches!(code(&r), 0 | 1), "{}", stderr(&r));
        outputs.push(listing(&out));
    }
    assert!(outputs[0].len() >= 7);
    assert_eq!(outputs[0], outputs[1]);
}
