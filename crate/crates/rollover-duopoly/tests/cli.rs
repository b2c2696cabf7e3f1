use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_rollover-duopoly");

const TINY_SCENARIO: &str = r#"
beta = 0.8

[demand]
kind = "uniform"
max_gb = 0.05
unit_mb = 10.0

[valuation]
kind = "uniform"
theta_max_rmb_per_gb = 1000.0

[[operator]]
qos = 1.0
cost_rmb_per_gb = 100.0
cap_gb = 0.02
mechanism = "choice"

[[operator]]
qos = 0.9
cost_rmb_per_gb = 150.0
cap_gb = 0.02
mechanism = "choice"

[sweep]
variable = "c1_rmb_per_gb"
start = 80.0
stop = 120.0
points = 3

[output]
format = "csv"
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_scenario(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    fs::write(&path, TINY_SCENARIO).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn presets_verb_lists_bundled_scenarios() {
    let out = run(&["presets"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = stdout.lines().collect();
    assert_eq!(names, ["fig8", "fig12", "fig14", "monopoly", "regime-map"]);
}

#[test]
fn sweep_emits_csv_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path());
    let first = run(&["sweep", "--scenario", &scenario]);
    assert!(
        first.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&first.stderr)
    );
    let text = String::from_utf8(first.stdout.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("swept_var,eq_label,kappa1,kappa2,sigma1,sigma2,theta_tilde,W1,W2,regime,flags")
    );
    assert!(lines.clone().count() >= 3, "one data row per grid point:\n{text}");
    assert!(lines.all(|l| l.split(',').count() >= 11));

    let second = run(&["sweep", "--scenario", &scenario]);
    assert_eq!(first.stdout, second.stdout, "repeat runs must agree byte for byte");
}

#[test]
fn format_override_produces_parseable_json() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path());
    let out = run(&["sweep", "--scenario", &scenario, "--format", "json"]);
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = rows.as_array().expect("top-level array");
    assert!(rows.len() >= 3);
    for row in rows {
        assert!(row.get("eq_label").is_some() && row.get("swept_var").is_some());
    }
}

#[test]
fn out_flag_writes_the_report_to_disk() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path());
    let target = dir.path().join("report.csv");
    let out = run(&[
        "sweep",
        "--scenario",
        &scenario,
        "--out",
        target.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty(), "report should go to the file, not stdout");
    assert!(String::from_utf8_lossy(&out.stderr).contains("wrote"));
    let written = fs::read_to_string(&target).unwrap();
    assert!(written.starts_with("swept_var,"));
}

#[test]
fn solve_on_bundled_preset_reports_an_equilibrium() {
    let out = run(&["solve", "--preset", "fig8"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("\"(R,T)\""),
        "base-cost equilibrium missing from:\n{stdout}"
    );
}

#[test]
fn unknown_preset_fails_and_names_the_catalog() {
    let out = run(&["solve", "--preset", "figure-nine"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(
        stderr.contains("available") && stderr.contains("fig8"),
        "stderr should list the catalog: {stderr}"
    );
}
