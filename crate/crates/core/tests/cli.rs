//! The `ulsense` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ulsense::container::{self, CalibratedTrial, SupportReport, TrialData};
use ulsense::experiment::{preset, read_rows, ExperimentSpec};
use ulsense::refine::EstimateSet;

fn ulsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ulsense"))
        .args(args)
        .output()
        .expect("spawn ulsense")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = ulsense(&[
        "run",
        "--preset",
        "smoke",
        "--trials",
        "1",
        "--seed",
        "5",
        "--quiet",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("cluster_sbl") && stdout.contains("individual_sbl"));
    let rows = read_rows(&out).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.seed == 5));

    let o = ulsense(&["inspect", path(&out)]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), stdout);
}

#[test]
fn flags_reach_the_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = ulsense(&[
        "run",
        "--preset",
        "smoke",
        "--trials",
        "1",
        "--methods",
        "individual_sbl",
        "--no-noise",
        "--no-offsets",
        "--quiet",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].method, "individual_sbl");
}

#[test]
fn preset_toml_round_trips_as_override() {
    let o = ulsense(&["preset", "fig3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let spec: ExperimentSpec = toml::from_str(&text).unwrap();
    assert_eq!(spec, preset("fig3").unwrap());
    assert_eq!(preset("fig2").unwrap().with_override(&text).unwrap(), spec);
}

#[test]
fn config_file_overrides_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("o.toml");
    fs::write(
        &cfg,
        "trials = 1\nmethods = [\"cluster_sbl\"]\n[sweep]\nvalues = [0.0]\n",
    )
    .unwrap();
    let out = dir.path().join("r.csv");
    let o = ulsense(&[
        "run",
        "--preset",
        "smoke",
        "--config",
        path(&cfg),
        "--quiet",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].sweep_value, 0.0);
}

#[test]
fn errors_exit_nonzero() {
    let o = ulsense(&["run", "--preset", "nope", "--quiet"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
    let dir = tempfile::tempdir().unwrap();
    let o = ulsense(&[
        "run",
        "--preset",
        "smoke",
        "--quiet",
        "--out",
        path(&dir.path().join("x/y.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = ulsense(&["inspect", path(&dir.path().join("absent.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let trial = dir.path().join("trial.json");
    let cal = dir.path().join("cal.json");
    let sup = dir.path().join("sup.json");
    let est = dir.path().join("est.json");
    let ok = |o: Output| assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    ok(ulsense(&[
        "generate",
        "--preset",
        "smoke",
        "--trial",
        "1",
        path(&trial),
    ]));
    ok(ulsense(&["calibrate", path(&trial), path(&cal)]));
    ok(ulsense(&[
        "support",
        "--preset",
        "smoke",
        "--method",
        "cluster",
        path(&cal),
        path(&sup),
    ]));
    ok(ulsense(&[
        "estimate",
        "--preset",
        "smoke",
        path(&cal),
        path(&sup),
        path(&est),
    ]));

    let t: TrialData = container::load(&trial).unwrap();
    let c: CalibratedTrial = container::load(&cal).unwrap();
    let s: SupportReport = container::load(&sup).unwrap();
    let e: EstimateSet = container::load(&est).unwrap();
    assert_eq!(c.trial, t);
    assert_eq!(s.method, "cluster_sbl");
    assert_eq!(e.ues.len(), t.scenario.ues.len());

    // Feeding the wrong container kind is rejected.
    let o = ulsense(&["calibrate", path(&sup), path(&dir.path().join("bad.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_trials_set_exit_code_unless_keep_going() {
    let dir = tempfile::tempdir().unwrap();
    // A negative ridge makes the LS normal equations indefinite.
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "trials = 1\n[refine]\nridge = -1e9\n").unwrap();
    let out = dir.path().join("r.csv");
    let args = [
        "run",
        "--preset",
        "smoke",
        "--config",
        path(&cfg),
        "--quiet",
        "--out",
        path(&out),
    ];
    assert_eq!(ulsense(&args).status.code(), Some(1));
    let rows = read_rows(&out).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows
        .iter()
        .all(|r| r.failed && !r.error.is_empty() && !r.csi_hash.is_empty()));
    let mut keep = args.to_vec();
    keep.push("--keep-going");
    assert_eq!(ulsense(&keep).status.code(), Some(0));
}
