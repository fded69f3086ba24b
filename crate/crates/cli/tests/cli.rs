//! Black-box behavior of the `gpair` binary: exit-code conventions and
//! the smaller subcommands the acceptance suite doesn't exercise.

use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_gpair");

fn gpair(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("spawn gpair")
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = gpair(&[]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage"), "expected usage text, got: {text}");
}

#[test]
fn unknown_flags_are_usage_errors_with_help() {
    let out = gpair(&["phantom", "--bogus-flag", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(
        text.contains("--bogus-flag"),
        "error should name the flag: {text}"
    );
}

#[test]
fn help_exits_cleanly_and_lists_subcommands() {
    let out = gpair(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "phantom",
        "simulate",
        "backproject",
        "reconstruct",
        "metrics",
        "dottest",
        "bench",
    ] {
        assert!(text.contains(sub), "help must mention {sub}");
    }
}

#[test]
fn runtime_failures_exit_one() {
    let out = gpair(&[
        "metrics",
        "--input",
        "/does/not/exist.gpv",
        "--reference",
        "/no.gpv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(
        text.contains("error"),
        "runtime failures should report an error: {text}"
    );
}

#[test]
fn dottest_prints_a_discrepancy_and_succeeds() {
    let out = gpair(&[
        "dottest",
        "--grid",
        "8,8,8",
        "--spacing",
        "2e-4",
        "--array",
        "hemi",
        "--n",
        "16",
        "--trials",
        "5",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("max relative discrepancy"),
        "dottest must report the worst trial: {text}"
    );
    // The echo ends up on stderr, stdout stays parseable.
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("assa:"),
        "resolved AssaParams must be echoed: {err}"
    );
}

#[test]
fn backproject_and_project_round_out_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.gpv");
    let signals = dir.path().join("sig.gps");
    let vol = dir.path().join("bp.gpv");
    let map = dir.path().join("map.pgm");
    let slice = dir.path().join("slice.pgm");
    let raw = dir.path().join("vol.raw");

    let run = |args: &[&str]| {
        let out = gpair(args);
        assert!(
            out.status.success(),
            "gpair {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(&[
        "phantom",
        "--grid",
        "12,12,12",
        "--spacing",
        "4e-4",
        "--kind",
        "tubes",
        "--count",
        "3",
        "--seed",
        "2",
        "--out",
        truth.to_str().unwrap(),
    ]);
    run(&[
        "simulate",
        "--input",
        truth.to_str().unwrap(),
        "--array",
        "hemi",
        "--n",
        "8",
        "--radius",
        "0.012",
        "--rate",
        "4e7",
        "--samples",
        "512",
        "--noise-snr",
        "20",
        "--noise-seed",
        "3",
        "--out",
        signals.to_str().unwrap(),
    ]);
    run(&[
        "backproject",
        "--input",
        signals.to_str().unwrap(),
        "--grid",
        "12,12,12",
        "--spacing",
        "4e-4",
        "--out",
        vol.to_str().unwrap(),
    ]);
    run(&[
        "project",
        "--input",
        vol.to_str().unwrap(),
        "--axis",
        "z",
        "--out",
        map.to_str().unwrap(),
    ]);
    run(&[
        "project",
        "--input",
        vol.to_str().unwrap(),
        "--axis",
        "y",
        "--index",
        "6",
        "--out",
        slice.to_str().unwrap(),
    ]);
    run(&[
        "convert",
        "--input",
        vol.to_str().unwrap(),
        "--out",
        raw.to_str().unwrap(),
    ]);

    let pgm = std::fs::read(&map).unwrap();
    assert!(pgm.starts_with(b"P5\n12 12\n255\n"));
    assert_eq!(pgm.len(), b"P5\n12 12\n255\n".len() + 144);
    assert!(raw.with_extension("raw.txt").exists());
    // Single precision by default: 12^3 voxels x 4 bytes.
    assert_eq!(std::fs::read(&raw).unwrap().len(), 12 * 12 * 12 * 4);
}

#[test]
fn deterministic_traces_zero_the_wall_clock_column() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("t.gpv");
    let signals = dir.path().join("s.gps");
    let vol = dir.path().join("r.gpv");
    let trace = dir.path().join("trace.csv");
    let run = |args: &[&str]| {
        let out = gpair(args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(&[
        "phantom",
        "--grid",
        "8,8,8",
        "--spacing",
        "4e-4",
        "--kind",
        "blobs",
        "--count",
        "1",
        "--seed",
        "1",
        "--out",
        truth.to_str().unwrap(),
    ]);
    run(&[
        "simulate",
        "--input",
        truth.to_str().unwrap(),
        "--array",
        "hemi",
        "--n",
        "4",
        "--radius",
        "0.01",
        "--rate",
        "4e7",
        "--samples",
        "384",
        "--out",
        signals.to_str().unwrap(),
    ]);
    run(&[
        "reconstruct",
        "--deterministic",
        "--input",
        signals.to_str().unwrap(),
        "--grid",
        "8,8,8",
        "--spacing",
        "4e-4",
        "--iters",
        "5",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        vol.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("iter,loss,data_term,reg_term,lr,wall_ms")
    );
    let mut rows = 0;
    for line in lines {
        assert!(line.ends_with(",0"), "wall_ms must be zeroed: {line}");
        rows += 1;
    }
    assert_eq!(rows, 5);
}

#[test]
fn thread_cap_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("t.gpv");
    let out = Command::new(BIN)
        .env("GPAIR_THREADS", "1")
        .args([
            "phantom",
            "--grid",
            "6,6,6",
            "--spacing",
            "4e-4",
            "--kind",
            "points",
            "--count",
            "2",
            "--seed",
            "0",
            "--out",
            truth.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());

    let bad = Command::new(BIN)
        .env("GPAIR_THREADS", "zero")
        .args(["dottest", "--grid", "4,4,4", "--spacing", "2e-4"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
