use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_tomotact");

/// Small detector so each command finishes in well under a second.
const SMALL: &str = r#"{
  "schema_version": 1,
  "sim": {"volume_divisions": [12, 12, 2], "shell_divisions": 12},
  "contacts": [{"x": 0, "y": 0, "diameter": 4, "sigma_drv": 0.5}]
}"#;

fn tomotact(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).collect()
}

#[test]
fn usage_exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(tomotact(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(tomotact(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(tomotact(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(tomotact(dir.path(), &["simulate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(tomotact(dir.path(), &["--config", "missing.json", "simulate"]).status.code(), Some(1));
}

#[test]
fn config_typo_reports_location() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", "{\"schema_version\": 1,\n  \"sim\": {\"widht\": 60}}");
    let o = tomotact(dir.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("cfg.json:2") && err.contains("widht"), "{err}");
}

#[test]
fn simulate_one_centred_contact() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let o = tomotact(dir.path(), &["--config", &cfg, "--out", "run", "simulate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("run/frames.csv")).unwrap();
    assert!(text.starts_with("# tomotact-frames protocol="));
    let lines = data_lines(&text);
    assert_eq!(lines.len(), 1);
    let v: Vec<f64> = lines[0].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(v.len(), 256);
    for g in 0..16 {
        assert_eq!(v[g * 16 + g], 0.0);
    }
    assert!(v.iter().all(|&x| (0.0..=2.0).contains(&x)) && v.iter().any(|&x| x > 0.0));
}

#[test]
fn simulate_without_contacts_writes_empty_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"schema_version": 1, "sim": {"volume_divisions": [12, 12, 2]}}"#);
    let o = tomotact(dir.path(), &["--config", &cfg, "--out", "run", "simulate"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("no contacts"));
    assert_eq!(fs::read_to_string(dir.path().join("run/frames.csv")).unwrap(), "");
}

#[test]
fn simulate_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    for out in ["a", "b"] {
        assert!(tomotact(dir.path(), &["--config", &cfg, "--out", out, "simulate"]).status.success());
    }
    let seq = tomotact(dir.path(), &["--config", &cfg, "--out", "c", "--sequential", "simulate"]);
    assert!(seq.status.success());
    let a = fs::read(dir.path().join("a/frames.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/frames.csv")).unwrap());
    assert_eq!(a, fs::read(dir.path().join("c/frames.csv")).unwrap());
}

#[test]
fn reconstruct_frames_and_fingerprints() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let o = tomotact(dir.path(), &["--config", &cfg, "--out", "run", "jacobian", "--csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("run/jacobian.csv").exists());
    assert!(tomotact(dir.path(), &["--config", &cfg, "--out", "run", "simulate"]).status.success());

    // simulated frame plus an all-zero frame under the simulated header
    let sim = fs::read_to_string(dir.path().join("run/frames.csv")).unwrap();
    let zeros = vec!["0"; 256].join(",");
    write(dir.path(), "two.csv", &format!("{sim}{zeros}\n"));
    let o = tomotact(dir.path(), &["--config", &cfg, "--out", "img", "reconstruct", "--jacobian", "run/jacobian.bin", "--frames", "two.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let zero_img = fs::read_to_string(dir.path().join("img/image_0001.csv")).unwrap();
    assert_eq!(zero_img.lines().count(), 64);
    assert!(zero_img.lines().flat_map(|l| l.split(',')).all(|v| v.parse::<f64>().unwrap() == 0.0));
    let first = fs::read_to_string(dir.path().join("img/image_0000.csv")).unwrap();
    assert!(first.lines().flat_map(|l| l.split(',')).any(|v| v.parse::<f64>().unwrap() != 0.0));
    assert!(dir.path().join("img/image_0000.pgm").exists());

    // frames recorded under a foreign protocol
    let header = sim.lines().next().unwrap();
    let wrong = write(dir.path(), "wrong.csv", &format!("# tomotact-frames protocol=0123456789abcdef v_cc=2 electrodes=16\n{zeros}\n"));
    let o = tomotact(dir.path(), &["--config", &cfg, "--out", "img", "reconstruct", "--jacobian", "run/jacobian.bin", "--frames", &wrong]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    let ours = header.split_whitespace().find_map(|f| f.strip_prefix("protocol=")).unwrap();
    assert!(err.contains("0123456789abcdef") && err.contains(ours), "{err}");
}

#[test]
fn stream_skips_malformed_lines() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    assert!(tomotact(dir.path(), &["--config", &cfg, "--out", "run", "jacobian"]).status.success());
    let zeros = vec!["0"; 256].join(",");
    let short = vec!["0.1"; 255].join(",");
    let ramp: Vec<String> = (0..256).map(|i| format!("{}", (i % 16) as f64 * 0.01)).collect();
    let input = format!("{zeros}\n{short}\nt1,{}\n", ramp.join(","));

    let mut child = Command::new(BIN)
        .current_dir(dir.path())
        .args(["--config", &cfg, "reconstruct-stream", "--jacobian", "run/jacobian.bin"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout.clone()).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.split(',').count() == 64 * 64));
    assert!(lines[0].split(',').all(|v| v.parse::<f64>().unwrap() == 0.0));
    let err = stderr(&o);
    assert!(err.contains("line 2") && err.contains("skipped 1"), "{err}");
}

#[test]
fn metrics_closed_form_dataset() {
    let dir = TempDir::new().unwrap();
    let rows: Vec<String> = (0..9)
        .map(|i| {
            let f = 0.1 * 100f64.powf(i as f64 / 8.0);
            format!("{f},{}", 2.0 / (1.0 / f + 1.0))
        })
        .collect();
    let input = write(dir.path(), "samples.csv", &format!("force,output\n{}\n", rows.join("\n")));
    let o = tomotact(dir.path(), &["metrics", "--input", &input, "--f-h", "2.5", "--label", "synthetic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout.clone()).unwrap();
    let mut lines = out.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("label"), "synthetic");
    assert!((col("sens").parse::<f64>().unwrap() - 0.16327).abs() < 1e-5);
    assert!((col("fmax").parse::<f64>().unwrap() - 9.0).abs() < 1e-6);
    assert!(!dir.path().join("tomotact-out").exists());
}

#[test]
fn metrics_flat_samples_is_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "flat.csv", "1,0.5\n2,0.5\n3,0.5\n4,0.5\n5,0.5\n");
    assert_eq!(tomotact(dir.path(), &["metrics", "--input", &input]).status.code(), Some(2));
    let bad = write(dir.path(), "bad.csv", "1,0.5\n2,x\n");
    assert_eq!(tomotact(dir.path(), &["metrics", "--input", &bad]).status.code(), Some(1));
}

#[test]
fn perfmap_debug_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"schema_version": 1,
            "sim": {"volume_divisions": [12, 12, 2], "shell_divisions": 12},
            "sweep": {"sigma_min": 0.01, "sigma_max": 10, "sigma_points": 3,
                      "drive_points": 5, "positions": [[0, 0], [20, -20]]}}"#,
    );
    let o = tomotact(dir.path(), &["--config", &cfg, "--out", "map", "sweep", "perfmap"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("map/perfmap.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).collect()).collect();
    assert_eq!(rows.len(), 9);
    for name in ["sens", "fmax", "sr", "pa"] {
        let raw = header.iter().position(|h| *h == name).unwrap();
        let norm = header.iter().position(|h| *h == format!("{name}_norm")).unwrap();
        let vals: Vec<f64> = rows.iter().map(|r| r[norm]).collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let raws: Vec<f64> = rows.iter().map(|r| r[raw]).collect();
        let flat = raws.iter().all(|&v| (v - raws[0]).abs() <= 1e-9 * raws[0].abs());
        assert_eq!(hi, 1.0, "{name}");
        assert!(lo == 0.0 || flat, "{name}: {vals:?}");
    }
    for f in ["positioning.csv", "manifest.json", "perfmap_sens.pgm"] {
        assert!(dir.path().join("map").join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("map/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["results"]["conditions"], 9);
}
