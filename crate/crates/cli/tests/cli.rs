//! End-to-end checks of the CLI surface: forward → recover pipelines, the
//! sensor certificate, and the experiment/fit flow.

use std::path::{Path, PathBuf};
use std::process::Command;

fn dhlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dhlab"))
}

fn write(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("dhlab_cli_tests").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn forward_then_recover_point_channel() {
    let dir = tmpdir("point");
    let fwd = dir.join("fwd.json");
    let run = dir.join("run.json");
    let samples = dir.join("samples.csv");
    let report = dir.join("report.json");
    write(
        &fwd,
        &format!(
            r#"{{
  "channel": "point",
  "coeffs": [0.8, -0.3, 0.45],
  "alpha": 1.0, "mu": 1.0,
  "x0": "golden", "K": 64,
  "times": {{"t0": 0.0, "t1": 1.0, "n": 513}},
  "epsilon": 1e-9, "noise_norm": "sup", "T": 1.0, "seed": 3,
  "precision_bits": 256
}}"#
        ),
    );
    write(
        &run,
        &format!(
            r#"{{
  "sample_csv": "{}",
  "alpha": 1.0, "mu": 1.0, "T": 1.0,
  "theta": 1.0, "m": 2.0,
  "x0": "golden", "K": 64,
  "precision_bits": 256
}}"#,
            samples.display()
        ),
    );
    let out = dhlab()
        .args(["forward", "--config"])
        .arg(&fwd)
        .arg("--out")
        .arg(&samples)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = dhlab()
        .args(["recover", "--channel", "point", "--method", "biortho", "--config"])
        .arg(&run)
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(body["theorem"], "point-log");
    let coeffs = body["estimate"]["coeffs"].as_array().unwrap();
    assert!(coeffs.len() >= 3);
    let first: f64 = coeffs[0].as_str().unwrap().parse::<f64>().unwrap_or_else(|_| {
        // Scientific decimal strings parse via the shortened f64 path.
        coeffs[0].as_str().unwrap()[..18].parse().unwrap()
    });
    assert!((first - 0.8).abs() < 1e-4, "first mode {first}");
}

#[test]
fn sensor_check_reports_blind_spot() {
    let out = dhlab()
        .args(["sensor-check", "--x0", "pi*1/4", "--k", "10"])
        .output()
        .unwrap();
    assert!(!out.status.success(), "rational multiple must fail");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("k = 4"), "should fail at k = 4: {text}");

    let out = dhlab()
        .args(["sensor-check", "--x0", "golden", "--k", "100"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("d0_empirical"));
}

#[test]
fn experiment_and_fit_flow() {
    let dir = tmpdir("experiment");
    let cfg = dir.join("exp.json");
    write(
        &cfg,
        r#"{
  "scenario": "series_recovery",
  "method": "biortho",
  "alpha": 1.0, "mu": 1.0, "T": 1.0,
  "theta": 1.0, "m": 1.0,
  "datum": {"random_support": 6},
  "noise_grid": [1e-2, 1e-4, 1e-6, 1e-8],
  "trials": 2,
  "seed": 5,
  "precision_bits": 256
}"#,
    );
    let out_dir = dir.join("results");
    let out = dhlab()
        .args(["experiment", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = out_dir.join("records.csv");
    assert!(records.exists());
    assert!(out_dir.join("fits.json").exists());

    // Determinism: rerunning reproduces the records byte for byte.
    let first = std::fs::read_to_string(&records).unwrap();
    let out = dhlab()
        .args(["experiment", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let second = std::fs::read_to_string(&records).unwrap();
    assert_eq!(first, second, "records must be byte-identical across runs");

    let out = dhlab()
        .args(["fit", "--records"])
        .arg(&records)
        .args(["--model", "log"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("exponent"), "fit output: {text}");
}
