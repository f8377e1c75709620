//! Error-path coverage for the command-line interface. Every case spawns the
//! real binary; all inputs are small enough that failures occur during
//! argument or input validation, well before any fitting.

use std::path::Path;
use std::process::{Command, Output};

fn netgsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netgsa"))
        .args(args)
        .output()
        .expect("spawn netgsa")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).expect("write fixture");
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

const X_OK: &str = "g1\tg2\tg3\n0.1\t0.2\t0.3\n1.0\t-0.2\t0.4\n-0.3\t0.5\t0.1\n0.2\t0.1\t-0.6\n";

#[test]
fn run_requires_inputs() {
    let out = netgsa(&["run"]);
    assert!(!out.status.success());
    let text = stderr(&out);
    assert!(text.contains("--x"), "clap should name the missing flag: {text}");
}

#[test]
fn unknown_inference_method_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.tsv");
    write(&x, X_OK);
    let out = netgsa(&[
        "run",
        "--x",
        x.to_str().unwrap(),
        "--y",
        x.to_str().unwrap(),
        "--genesets",
        x.to_str().unwrap(),
        "--ni",
        "gl-aic",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("gl-aic"));
}

#[test]
fn duplicate_gene_header_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.tsv");
    write(&x, "g1\tg2\tg1\n0.1\t0.2\t0.3\n0.4\t0.5\t0.6\n");
    let sets = dir.path().join("sets.gmt");
    write(&sets, "a\tna\tg1\tg2\n");
    let out = netgsa(&[
        "run",
        "--x",
        x.to_str().unwrap(),
        "--y",
        x.to_str().unwrap(),
        "--genesets",
        sets.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("duplicate gene identifier"));
}

#[test]
fn mismatched_gene_panels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.tsv");
    write(&x, X_OK);
    let y = dir.path().join("y.tsv");
    write(&y, "g1\tg2\tg9\n0.1\t0.2\t0.3\n0.4\t0.5\t0.6\n0.7\t0.8\t0.9\n0.0\t0.1\t0.2\n");
    let sets = dir.path().join("sets.gmt");
    write(&sets, "a\tna\tg1\tg2\n");
    let out = netgsa(&[
        "run",
        "--x",
        x.to_str().unwrap(),
        "--y",
        y.to_str().unwrap(),
        "--genesets",
        sets.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let text = stderr(&out);
    assert!(
        text.contains("disagree on gene identifiers"),
        "unexpected message: {text}"
    );
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.tsv");
    write(&x, X_OK);
    let sets = dir.path().join("sets.gmt");
    write(&sets, "a\tna\tg1\tg2\n");
    let config = dir.path().join("netgsa.conf");
    write(&config, "splits = 5\nbogus_key = 1\n");
    let out = netgsa(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--x",
        x.to_str().unwrap(),
        "--y",
        x.to_str().unwrap(),
        "--genesets",
        sets.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bogus_key"));
}

#[test]
fn ragged_expression_rows_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.tsv");
    write(&x, "g1\tg2\tg3\n0.1\t0.2\t0.3\n0.4\t0.5\n");
    let sets = dir.path().join("sets.gmt");
    write(&sets, "a\tna\tg1\tg2\n");
    let out = netgsa(&[
        "run",
        "--x",
        x.to_str().unwrap(),
        "--y",
        x.to_str().unwrap(),
        "--genesets",
        sets.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn simulate_rejects_bad_model() {
    let out = netgsa(&["simulate", "--model", "model9", "--runs", "1"]);
    assert!(!out.status.success());
}
