//! End-to-end checks of the binary: output files, determinism, exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epifront"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("epifront-cli-{name}-{}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).expect("clear scratch dir");
    }
    std::fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).expect("write scenario");
    path
}

const QUIET: &str = r#"
[kernel]
family = "uniform"
dbar = 0.5

[drift]
family = "constant"
mu = 0.0

[diffusion]
family = "constant"
c = 1.0

[rate]
family = "constant"
g = 0.0

[initial]
family = "point"
x0 = 0.3

[run]
n = 16
T = 0.1
dt = 1e-2
mode = "true"
seed = 42
a0 = 0.0
alpha = 0.5
"#;

const SMALL: &str = r#"
[kernel]
family = "tapered_uniform"
dbar = 0.5
taper = 0.05

[drift]
family = "constant"
mu = 0.0

[diffusion]
family = "constant"
c = 1.0

[rate]
family = "affine_in_contagion"
g0 = 5.0
g1 = 20.0

[initial]
family = "point"
x0 = 0.3

[run]
n = 32
T = 0.25
dt = 1e-3
mode = "true"
seed = 42
a0 = 0.0
alpha = 0.5
"#;

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn binary");
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn silent_rate_yields_a_constant_trace() {
    let dir = scratch("quiet");
    let scenario = write_scenario(&dir, "quiet.toml", QUIET);
    let out_dir = dir.join("out");
    run_ok(bin().args(["run", "--scenario"]).arg(&scenario).arg("--out").arg(&out_dir));

    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).expect("trace.csv");
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("t,A,I,C,V,M"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 6);
        for col in &cols[1..] {
            assert_eq!(col.parse::<f64>().unwrap(), 0.0, "nonzero column in {line}");
        }
    }
    let infections = std::fs::read_to_string(out_dir.join("infections.csv")).expect("infections");
    assert_eq!(infections.trim(), "particle,tau");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["final_i"], 0.0);
    assert_eq!(summary["seed"], 42);
}

#[test]
fn same_seed_runs_are_byte_identical_and_seeds_differ() {
    let dir = scratch("determinism");
    let scenario = write_scenario(&dir, "small.toml", SMALL);
    let (a, b, c) = (dir.join("a"), dir.join("b"), dir.join("c"));
    run_ok(bin().args(["run", "--scenario"]).arg(&scenario).arg("--out").arg(&a));
    run_ok(bin().args(["run", "--scenario"]).arg(&scenario).arg("--out").arg(&b));
    run_ok(bin()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .args(["--seed", "43", "--out"])
        .arg(&c));

    let ta = std::fs::read(a.join("trace.csv")).unwrap();
    let tb = std::fs::read(b.join("trace.csv")).unwrap();
    let tc = std::fs::read(c.join("trace.csv")).unwrap();
    assert_eq!(ta, tb, "same seed, same bytes");
    assert_ne!(ta, tc, "different seed, different trace");
    assert_eq!(
        std::fs::read(a.join("infections.csv")).unwrap(),
        std::fs::read(b.join("infections.csv")).unwrap()
    );
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let out = bin().args(["validate", "--suite", "nonsense"]).output().expect("spawn");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown suite"), "stderr was: {err}");
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let out = bin()
        .args(["run", "--scenario", "/nonexistent/nowhere.toml"])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_scenario_is_a_usage_error() {
    let dir = scratch("malformed");
    let scenario = write_scenario(&dir, "bad.toml", "[kernel]\nfamily = \"uniform\"\n");
    let out = bin().args(["run", "--scenario"]).arg(&scenario).output().expect("spawn");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn benchmark_subcommand_emits_the_expected_columns() {
    let out = run_ok(bin().args([
        "sir", "--beta", "0.0", "--dbar", "10.0", "--i0", "0.2", "--c0", "0.1", "--horizon",
        "5.0", "--dt", "0.5",
    ]));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,I,C,S,R0,Rt"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    for row in &rows {
        assert!((row[1] + row[3] - 1.0).abs() < 1e-12, "S + I must be 1");
        assert_eq!(row[4], 0.0, "reproduction number is beta * dbar");
    }
    assert!(rows.last().unwrap()[1] <= rows[0][1], "no growth without transmission");
}

#[test]
fn barrier_subcommand_requires_a_barrier_mode() {
    let dir = scratch("barrier-mode");
    let scenario = write_scenario(&dir, "small.toml", SMALL);
    let out = bin().args(["barnes", "--scenario"]).arg(&scenario).output().expect("spawn");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn barrier_run_writes_a_velocity_series() {
    let dir = scratch("barrier-run");
    let scenario = write_scenario(
        &dir,
        "barrier.toml",
        &SMALL
            .replace("mode = \"true\"", "mode = \"barnes_bar\"\nu = 1.0")
            .replace("family = \"affine_in_contagion\"\ng0 = 5.0\ng1 = 20.0", "family = \"constant\"\ng = 5.0"),
    );
    let out_dir = dir.join("out");
    run_ok(bin().args(["barnes", "--scenario"]).arg(&scenario).arg("--out").arg(&out_dir));
    let velocity = std::fs::read_to_string(out_dir.join("velocity.csv")).expect("velocity.csv");
    let mut lines = velocity.lines();
    assert_eq!(lines.next(), Some("t,u"));
    let us: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(us[0], 1.0);
    assert!(us.windows(2).all(|w| w[1] <= w[0]), "barrier only slows down");
}

#[test]
fn sweep_reports_a_fit_for_tiny_sizes() {
    let dir = scratch("sweep");
    let scenario = write_scenario(&dir, "small.toml", SMALL);
    let out = run_ok(bin()
        .args(["sweep", "--scenario"])
        .arg(&scenario)
        .args(["--sizes", "8,16", "--replications", "4"]));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["sizes"], serde_json::json!([8, 16]));
    assert_eq!(report["estimates"].as_array().unwrap().len(), 2);
}
