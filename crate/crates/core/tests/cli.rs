mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture_path;

fn chemostat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chemostat"))
        .args(args)
        .env_remove(chemostat::scenario::ENV_REL_TOL)
        .env_remove(chemostat::scenario::ENV_ABS_TOL)
        .output()
        .expect("binary runs")
}

fn fx(name: &str) -> String {
    fixture_path(name).to_string_lossy().into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_exit_codes() {
    let ok = chemostat(&["verify", &fx("canonical.toml")]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stdout)
    );
    assert!(String::from_utf8_lossy(&ok.stdout).contains("overall: PASS"));

    let bad = chemostat(&["verify", &fx("corrupted_nu.toml")]);
    assert_eq!(bad.status.code(), Some(1));

    let missing = chemostat(&["verify", "no/such/scenario.toml"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());

    let washout = chemostat(&["verify", &fx("washout.toml")]);
    assert_eq!(washout.status.code(), Some(0));
}

#[test]
fn verify_writes_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let run = chemostat(&["verify", &fx("canonical.toml"), "-o", path(&out)]);
    assert_eq!(run.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["overall_pass"], true);
    assert_eq!(report["certificate"]["status"], "certified");
    let claims = report["claims"].as_array().unwrap();
    assert!(claims
        .iter()
        .all(|c| c["id"].is_string() && c["measured"].is_object() && c["thresholds"].is_object()));
}

#[test]
fn malformed_scenario_names_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(fixture_path("canonical.toml"))
        .unwrap()
        .replace("x = [0.01, 0.01, 0.01]", "x = [0.01, 0.01]");
    std::fs::write(&bad, text).unwrap();
    let run = chemostat(&["simulate", path(&bad)]);
    assert_eq!(run.status.code(), Some(2));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("initial.x") && err.contains("line"), "{err}");

    let usage = chemostat(&["frobnicate"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn simulate_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let run = chemostat(&["simulate", &fx("canonical.toml"), "-o", path(&out)]);
    assert_eq!(run.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,s,x1,x2,x3,b,p1,p2,p3,m,r2,r3");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2001);
    let first: Vec<f64> = rows[0].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[..5], [0.0, 10.0, 0.01, 0.01, 0.01]);
    // 17 significant digits
    assert_eq!(rows[0].split(',').nth(1).unwrap(), "1.0000000000000000e1");
}

#[test]
fn csv_round_trips_sampled_states() {
    let sc = common::fixture("two_species.toml");
    let traj = chemostat::integrate::simulate(&sc.model(), &sc.initial, &sc.integrator_settings())
        .unwrap();
    let mut buf = Vec::new();
    chemostat::cli::write_trajectory_csv(&traj, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    for (line, st) in text.lines().skip(1).zip(&traj.states) {
        let v: Vec<f64> = line
            .split(',')
            .take(4)
            .map(|f| f.parse().unwrap())
            .collect();
        assert_eq!(v[1], st.s);
        assert_eq!(v[2..], st.x[..]);
    }
}

#[test]
fn single_species_and_washout_columns() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.toml");
    std::fs::write(
        &one,
        "[chemostat]\ndilution = 1.0\ns_in = 10.0\n\n[[species]]\nid = \"A\"\nkind = \"monod\"\nmu_max = 3.0\nk = 1.0\n\n[initial]\ns = 10.0\nx = [0.1]\n\n[run]\nhorizon = 60.0\n",
    )
    .unwrap();
    let out = dir.path().join("one.csv");
    assert_eq!(
        chemostat(&["simulate", path(&one), "-o", path(&out)])
            .status
            .code(),
        Some(0)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,s,x1,b,p1,m");

    let long = dir.path().join("washout_long.toml");
    let text = std::fs::read_to_string(fixture_path("washout.toml"))
        .unwrap()
        .replace("horizon = 60.0", "horizon = 200.0");
    std::fs::write(&long, text).unwrap();
    let wo = dir.path().join("wo.csv");
    assert_eq!(
        chemostat(&["simulate", path(&long), "-o", path(&wo)])
            .status
            .code(),
        Some(0)
    );
    let last = std::fs::read_to_string(&wo)
        .unwrap()
        .lines()
        .last()
        .unwrap()
        .to_string();
    let fields: Vec<&str> = last.split(',').collect();
    // t,s,x1,x2,b,p1,p2,m,r2: biomass has fallen below the proportion floor
    assert_eq!(fields.len(), 9);
    assert_eq!(&fields[5..7], &["", ""]);
}

#[test]
fn certificate_command() {
    let ok = chemostat(&["certificate", &fx("canonical.toml")]);
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("nu: ") && text.contains("D^+: ") && text.contains("I_2: "));

    let refused = chemostat(&["certificate", &fx("washout.toml")]);
    assert_eq!(refused.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("washout"));
}

#[test]
fn curves_and_companion_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curves.csv");
    let run = chemostat(&[
        "curves",
        &fx("canonical.toml"),
        "-o",
        path(&out),
        "--points",
        "11",
    ]);
    assert_eq!(run.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "s,mu_A,mu_B,mu_C");
    assert_eq!(text.lines().count(), 12);
    let lam = std::fs::read_to_string(dir.path().join("curves.lambda.csv")).unwrap();
    assert_eq!(lam.lines().next().unwrap(), "id,lambda");
    assert!(lam.lines().nth(1).unwrap().starts_with("A,0.5"));
}

#[test]
fn sweep_reports_each_scenario() {
    let run = chemostat(&["sweep", &fx("canonical.toml"), &fx("two_species.toml")]);
    assert_eq!(run.status.code(), Some(0));
    let out = String::from_utf8_lossy(&run.stdout);
    assert_eq!(out.lines().filter(|l| l.ends_with("PASS")).count(), 2);
    let mixed = chemostat(&["sweep", &fx("canonical.toml"), &fx("corrupted_nu.toml")]);
    assert_eq!(mixed.status.code(), Some(1));
}

#[test]
fn environment_overrides_tolerances() {
    let run = Command::new(env!("CARGO_BIN_EXE_chemostat"))
        .args(["verify", &fx("canonical.toml")])
        .env(chemostat::scenario::ENV_REL_TOL, "not-a-number")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
}
