use std::path::PathBuf;
use std::process::{Command, Output};

fn lgfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgfem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lgfem-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn field<'a>(header: &'a str, row: &'a str, name: &str) -> &'a str {
    let i = header.split(',').position(|h| h == name).unwrap();
    row.split(',').nth(i).unwrap()
}

#[test]
fn run_prints_header_and_expected_error_level() {
    let out = lgfem(&["run", "--example", "sinsin", "--degree", "1", "--n", "8", "--dt-rule", "c1h"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(header, lgfem::harness::CSV_HEADER);
    let row = lines.next().unwrap();
    let e: f64 = field(header, row, "E_L2").parse().unwrap();
    assert!(e > 8.97e-2 / 2.0 && e < 8.97e-2 * 2.0, "E_L2 = {e}");
    assert_eq!(field(header, row, "diverged"), "false");
}

#[test]
fn step_larger_than_final_time_exits_2() {
    let out = lgfem(&["run", "--example", "sinsin", "--n", "8", "--dt", "2.0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["run", "--example", "nope", "--n", "8", "--dt", "0.1"][..],
        &["run", "--example", "sinsin", "--n", "8"][..],
        &["run", "--example", "sinsin", "--n", "8", "--dt", "0.1", "--dt-rule", "c1h"][..],
        &["run", "--example", "sinsin", "--n", "8", "--dt", "0.1", "--scheme", "nope"][..],
        &["run", "--example", "sinsin", "--n", "8", "--dt", "0.1", "--degree", "3"][..],
    ] {
        assert_eq!(lgfem(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn guard_violation_exits_2() {
    let out = lgfem(&["run", "--example", "sinsin", "--n", "8", "--dt", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes() {
    let out = lgfem(&["verify", "--samples", "200"]);
    assert!(out.status.success());
}

#[test]
fn dumps_and_csv_file_are_written() {
    let mesh = scratch("mesh.txt");
    let decomp = scratch("decomp.txt");
    let csv = scratch("run.csv");
    let out = lgfem(&[
        "run",
        "--example",
        "gauss-hill",
        "--degree",
        "2",
        "--n",
        "16",
        "--dt-rule",
        "c1h",
        "--dump-mesh",
        mesh.to_str().unwrap(),
        "--dump-decomp",
        decomp.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!std::fs::read_to_string(&mesh).unwrap().is_empty());
    let pieces = std::fs::read_to_string(&decomp).unwrap();
    let first = pieces.lines().next().unwrap();
    // element, piece index, area, then vertex coordinates in pairs
    let cols = first.split_whitespace().count();
    assert!(cols >= 3 + 6 && (cols - 3).is_multiple_of(2), "{first}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with(lgfem::harness::CSV_HEADER));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn sweep_emits_one_row_per_resolution() {
    let out = lgfem(&[
        "sweep", "--example", "sinsin", "--n-list", "4,8", "--dt-rule", "c1h", "--jobs", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(field(lines[0], lines[1], "order_L2"), "");
    assert!(field(lines[0], lines[2], "order_L2").parse::<f64>().is_ok());
}
