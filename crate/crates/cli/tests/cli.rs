use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn varcolor(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varcolor"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = varcolor(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = varcolor(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn simcon(dir: &Path) {
    ok(
        dir,
        &["synth", "simcon", "-o", "in.ppm", "--width", "32", "--height", "16"],
    );
}

#[test]
fn enhance_writes_image_trace_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simcon(dir);
    let stdout = ok(
        dir,
        &["enhance", "-i", "in.ppm", "-o", "out.ppm", "--trace", "t.csv"],
    );
    assert!(stdout.contains("converged"), "{stdout}");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out.ppm.json")).unwrap()).unwrap();
    assert_eq!(manifest["params"]["variant"]["kind"], "id");
    assert_eq!(manifest["params"]["dt"], 0.2);
    assert_eq!(manifest["termination"], "converged");
    assert_eq!(manifest["stability"]["range_invariant"], true);
    let iterations = manifest["iterations"].as_u64().unwrap() as usize;

    let trace = fs::read_to_string(dir.join("t.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next(),
        Some("iteration,mse,energy_contrast,energy_dispersion")
    );
    assert_eq!(lines.count(), iterations);

    let stats = ok(dir, &["stats", "-i", "out.ppm"]);
    assert!(stats.starts_with("# 32x16 gray"), "{stats}");
}

#[test]
fn enhance_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &["synth", "cast", "-o", "in.ppm", "--width", "16", "--height", "16"],
    );
    for out in ["a.ppm", "b.ppm"] {
        ok(dir, &["enhance", "-i", "in.ppm", "-o", out, "--mode", "fast"]);
    }
    assert_eq!(
        fs::read(dir.join("a.ppm")).unwrap(),
        fs::read(dir.join("b.ppm")).unwrap()
    );
}

#[test]
fn verify_reports_gap_and_refuses_large_images() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simcon(dir);
    let stdout = ok(
        dir,
        &["enhance", "-i", "in.ppm", "-o", "out.ppm", "--verify"],
    );
    assert!(stdout.contains("verify: max |exact - fast|"), "{stdout}");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out.ppm.json")).unwrap()).unwrap();
    let gap = manifest["verify"]["max_abs_gap"].as_f64().unwrap();
    let fit = manifest["fit_max_error"].as_f64().unwrap();
    assert!(gap <= fit, "gap {gap} above fit error {fit}");

    ok(
        dir,
        &["synth", "mach", "-o", "big.ppm", "--width", "65", "--height", "4"],
    );
    let err = fails(dir, &["enhance", "-i", "big.ppm", "-o", "x.ppm", "--verify"]);
    assert!(err.contains("--verify"), "{err}");
}

#[test]
fn noise_control_and_png_output() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simcon(dir);
    ok(
        dir,
        &[
            "enhance", "-i", "in.ppm", "-o", "out.png", "--noise-control", "--grain-area", "4",
            "--variant", "michelson", "--gamma", "0.5",
        ],
    );
    assert!(dir.join("out.png.json").exists());
    let stats = ok(dir, &["stats", "-i", "out.png"]);
    assert!(stats.contains("channel,mean,std_dev"));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let err = fails(dir, &["stats", "-i", "missing.ppm"]);
    assert!(err.contains("missing.ppm"), "{err}");

    let mut deep = b"P6\n1 1\n65535\n".to_vec();
    deep.extend([0; 6]);
    fs::write(dir.join("deep.ppm"), deep).unwrap();
    let err = fails(dir, &["stats", "-i", "deep.ppm"]);
    assert!(err.contains("65535"), "{err}");

    simcon(dir);
    let err = fails(dir, &["enhance", "-i", "in.ppm", "-o", "x.ppm", "--gamma", "2"]);
    assert!(err.contains("gamma"), "{err}");
    fails(dir, &["enhance", "-i", "in.ppm", "-o", "x.ppm", "--dt", "-1"]);
    fails(dir, &["enhance", "-i", "in.ppm", "-o", "x.bmp"]);
    fails(dir, &["synth", "mach", "-o", "m.ppm", "--width", "4", "--steps", "5"]);
    fails(dir, &["synth", "cast", "-o", "c.ppm", "--gain", "0"]);
}

#[test]
fn energy_table_has_one_row_per_channel() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simcon(dir);
    let out = ok(dir, &["energy", "-i", "in.ppm", "--variant", "log"]);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "channel,contrast,dispersion,total");
    assert_eq!(rows.len(), 4);
    let cols: Vec<f64> = rows[1].split(',').skip(1).map(|c| c.parse().unwrap()).collect();
    assert!((cols[0] + cols[1] - cols[2]).abs() < 1e-9);
    assert!(cols[0] < 0.0, "log contrast energy is negative off the diagonal");
}

#[test]
fn fitcheck_errors_shrink_with_degree() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["fitcheck", "--degrees", "1,5,9", "--fit-samples", "41"]);
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    for chunk in rows.chunks(3) {
        let errs: Vec<f64> = chunk.iter().map(|r| r[2].parse().unwrap()).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{chunk:?}");
    }
}

#[test]
fn surface_defaults_to_256_samples() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["surface", "--variant", "michelson", "-o", "s.csv"]);
    let text = fs::read_to_string(dir.join("s.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 256 * 256);
    let out = ok(dir, &["surface", "--samples", "2"]);
    assert_eq!(out.lines().count(), 5);
}
