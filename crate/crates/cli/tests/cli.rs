use std::path::Path;
use std::process::{Command, Output};

fn jumpspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumpspec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn predict_preset_json() {
    let o = jumpspec(&["predict", "--preset", "fig4d", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    let dl = v["delta_L"].as_f64().unwrap();
    let al = v["A_L"].as_f64().unwrap();
    assert!((dl - 10.15).abs() < 0.01, "{dl}");
    assert!((al / 2.40e-2 - 1.0).abs() < 0.01, "{al}");
}

#[test]
fn predict_flags_override_and_write_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = jumpspec(&[
        "predict",
        "--tau-bright",
        "0.103",
        "--tau-dark",
        "0.008",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("42.87"));
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("prediction.json")).unwrap()).unwrap();
    assert!((saved["delta_L"].as_f64().unwrap() - 42.88).abs() < 0.01);
}

#[test]
fn predict_warns_when_pedestal_is_unresolved() {
    let o = jumpspec(&["predict", "--tau-bright", "10", "--tau-dark", "10"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
}

#[test]
fn repump_power_sets_dark_time() {
    let o = jumpspec(&["predict", "--tau-bright", "0.171", "--repump-power", "0.4", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dl = json(&o)["delta_L"].as_f64().unwrap();
    // tau_D near 25 ms
    let td = 1.0 / (std::f64::consts::PI * dl - 1.0 / 0.171);
    assert!((td - 0.025).abs() < 0.001, "{td}");
}

#[test]
fn usage_errors_exit_2() {
    let o = jumpspec(&["predict"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("tau_bright"), "{}", stderr(&o));

    let o = jumpspec(&["verify", "fig9"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown suite"));

    let o = jumpspec(&["verify", "rate-model", "--duration", "0"]);
    assert_eq!(code(&o), 2);

    let dir = tempfile::tempdir().unwrap();
    let o = jumpspec(&["simulate", "--preset", "fig4c", "--duration", "0", "--out", path(dir.path())]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = jumpspec(&["simulate", "--preset", "fig4c"]);
    assert_eq!(code(&o), 2);

    let o = jumpspec(&["predict", "--preset", "fig4c", "--config", "x.toml"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_config_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[telegraph]\ntau_bright = 0.171\ntau_dark = 0.021\n\n[run]\nduraton = 5\n").unwrap();
    let o = jumpspec(&["predict", "--config", path(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("run.toml:6"), "{}", stderr(&o));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[telegraph]\ntau_bright = 0.171\ntau_dark = 0.021\n").unwrap();
    let o = jumpspec(&["predict", "--config", path(&cfg), "--tau-dark", "0.039", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dl = json(&o)["delta_L"].as_f64().unwrap();
    assert!((dl - (1.0 / 0.171 + 1.0 / 0.039) / std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = jumpspec(&["simulate", "--preset", "fig4c", "--duration", "3", "--seed", "5", "--out", path(d)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let ma = std::fs::read(a.join("manifest.json")).unwrap();
    let mb = std::fs::read(b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);

    let c = dir.path().join("c");
    jumpspec(&["simulate", "--preset", "fig4c", "--duration", "3", "--seed", "6", "--out", path(&c)]);
    assert_ne!(std::fs::read(c.join("manifest.json")).unwrap(), ma);
}

#[test]
fn simulate_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    let o = jumpspec(&["simulate", "--preset", "fig4d", "--duration", "60", "--seed", "3", "--out", out, "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(json(&o)["outputs"].as_array().unwrap().len() >= 3);

    let o = jumpspec(&["analyze", "--out", out, "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = json(&o);
    let dl = m["pedestal_fit"]["delta_L_hat"].as_f64().unwrap();
    assert!((dl / 10.15 - 1.0).abs() < 0.15, "{dl}");
    assert!(m["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    for f in ["spectrum.csv", "pedestal_fit.json", "periods.csv", "histogram_dark.csv", "plot.gp"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn short_record_fails_checks_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    jumpspec(&["simulate", "--preset", "fig4c", "--duration", "5", "--seed", "5", "--out", out]);
    let o = jumpspec(&["analyze", "--out", out]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn corrupted_counts_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    jumpspec(&["simulate", "--preset", "fig4c", "--duration", "3", "--out", out]);
    let counts = dir.path().join("counts.csv");
    let mut text = std::fs::read_to_string(&counts).unwrap();
    text = text.replacen("\n1.000000000e-3,", "\n1.000000000e-3,abc", 1);
    std::fs::write(&counts, text).unwrap();
    let o = jumpspec(&["analyze", "--out", out]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("counts.csv:4"), "{}", stderr(&o));
}

#[test]
fn missing_input_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = jumpspec(&["analyze", "--input", path(&dir.path().join("nope")), "--out", path(dir.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn verify_rate_model_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = jumpspec(&["verify", "rate-model", "--json", "--out", path(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["passed"], true);
    assert!(dir.path().join("verify_report.json").exists());
}
