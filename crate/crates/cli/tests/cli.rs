use std::fs;
use std::path::PathBuf;

use dpsketch_cli::{main_with, EXIT_FINDING, EXIT_OK, EXIT_USAGE};

fn bench(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "benchmarks", &format!("{name}.dpm")].iter().collect();
    p.to_string_lossy().into_owned()
}

fn call(args: &[&str]) -> i32 {
    main_with(std::iter::once("dpsketch").chain(args.iter().copied()))
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(call(&["--help"]), EXIT_OK);
    assert_eq!(call(&[]), EXIT_USAGE);
    assert_eq!(call(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(call(&["test", "--sketch", &bench("sum"), "--noise", "1", "--epsilon", "-1"]), EXIT_USAGE);
}

#[test]
fn missing_sketch_file() {
    assert_eq!(call(&["test", "--sketch", "/nonexistent/x.dpm", "--noise", "1", "--epsilon", "1/2"]), EXIT_USAGE);
    assert_eq!(call(&["synth", "--sketch", "/nonexistent/x.dpm"]), EXIT_USAGE);
}

#[test]
fn malformed_sketch() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.dpm");
    fs::write(&p, "mechanism Bad\nprivate q\nreturn\n").unwrap();
    assert_eq!(call(&["test", "--sketch", p.to_str().unwrap(), "--noise", "1", "--epsilon", "1"]), EXIT_USAGE);
}

#[test]
fn noise_arity_mismatch() {
    assert_eq!(call(&["test", "--sketch", &bench("sum"), "--noise", "2,2", "--epsilon", "1/2"]), EXIT_USAGE);
    assert_eq!(call(&["test", "--sketch", &bench("noisymax2"), "--noise", "2", "--epsilon", "1/2"]), EXIT_USAGE);
    assert_eq!(call(&["test", "--sketch", &bench("sum"), "--noise", "x", "--epsilon", "1/2"]), EXIT_USAGE);
}

#[test]
fn unknown_integer_argument() {
    let code = call(&["test", "--sketch", &bench("sum"), "--noise", "2", "--epsilon", "1/2", "--arg", "T=3"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn test_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cx.jsonl");
    let leaky = call(&[
        "test", "--sketch", &bench("sum"), "--noise", "_", "--epsilon", "1/2", "--trials", "2000", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(leaky, EXIT_FINDING);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["p"].as_f64().unwrap() < 0.05);
    }
    let private = call(&["test", "--sketch", &bench("sum"), "--noise", "8", "--epsilon", "1/2", "--trials", "2000"]);
    assert_eq!(private, EXIT_OK);
}

#[test]
fn grid_hole_checks() {
    let s = bench("abovet1");
    assert_eq!(call(&["grid", "--sketch", &s, "--holes", "1,3", "--grid", "1:2:1"]), EXIT_USAGE);
    assert_eq!(call(&["grid", "--sketch", &s, "--holes", "0,1", "--grid", "1:2:1"]), EXIT_USAGE);
    assert_eq!(call(&["grid", "--sketch", &s, "--holes", "1,1", "--grid", "1:2:1"]), EXIT_USAGE);
    assert_eq!(call(&["grid", "--sketch", &s, "--holes", "1,2", "--grid", "3:1:1"]), EXIT_USAGE);
    assert_eq!(call(&["grid", "--sketch", &s, "--holes", "1,2", "--grid", "1:2", "--fix", "4"]), EXIT_USAGE);
}

#[test]
fn degenerate_grid_is_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let code = call(&[
        "grid", "--sketch", &bench("abovet1"), "--holes", "1,2", "--grid", "4", "--trials", "2000", "--presamples", "2000",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 2, "{text}");
    assert_eq!(rows[0], "scale1,scale2,objective,log_gap");
    let cols: Vec<f64> = rows[1].split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(&cols[..2], &[4.0, 4.0]);
    // both holes noisy: at least the two L0 units
    assert!(cols[2] >= 2.0);
}

#[test]
fn bad_synth_settings() {
    assert_eq!(call(&["synth", "--sketch", &bench("sum"), "--population", "2"]), EXIT_USAGE);
    assert_eq!(call(&["synth", "--sketch", &bench("sum"), "--trials", "10"]), EXIT_USAGE);
    assert_eq!(call(&["synth", "--sketch", &bench("sum"), "--lambda", "-1"]), EXIT_USAGE);
    assert_eq!(call(&["synth", "--sketch", &bench("sum"), "--threads", "0"]), EXIT_USAGE);
}

#[test]
fn synth_is_reproducible_with_sidecar_timing() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("r{k}.json"));
        let code = call(&[
            "synth", "--sketch", &bench("sum"), "--seed", "9", "--trials", "2000", "--presamples", "4000", "--steps", "40",
            "--rank-trials", "2000", "--out", out.to_str().unwrap(),
        ]);
        assert!(code == EXIT_OK || code == EXIT_FINDING, "{code}");
        texts.push(fs::read_to_string(&out).unwrap());
        assert!(dir.path().join(format!("r{k}.timing.json")).exists());
    }
    assert_eq!(texts[0], texts[1]);
    let v: serde_json::Value = serde_json::from_str(&texts[0]).unwrap();
    assert_eq!(v["sketch"], "Sum");
    assert_eq!(v["config"]["seed"], 9);
    assert!(v["ranked"].as_array().is_some_and(|r| !r.is_empty()));
}
