//! End-to-end harness behaviour: containers, sweeps, resume, determinism.

use std::fs;
use std::time::Instant;

use num_complex::Complex64;

use ulsense::container::{self, CalibratedTrial, SupportReport, TrialData};
use ulsense::experiment::pipeline::{estimate_from_support, recover_supports};
use ulsense::experiment::runner::{manifest_path, timing_path};
use ulsense::experiment::{
    calibrate_trial, preset, read_rows, run_methods, run_point, run_sweep, synthesize_trial, ExperimentSpec, Method,
    ResultRow, RunOptions, StageConfig,
};
use ulsense::refine::EstimateSet;
use ulsense::Error;

fn stage(spec: &ExperimentSpec) -> StageConfig {
    StageConfig {
        vi: spec.vi,
        refine: spec.refine,
        options: spec.options,
    }
}

fn smoke(trials: usize, snr: &[f64]) -> ExperimentSpec {
    let mut s = preset("smoke").unwrap();
    s.trials = trials;
    s.sweep.values = snr.to_vec();
    s
}

fn calibrated(spec: &ExperimentSpec, trial: u64) -> CalibratedTrial {
    let p = &spec.points()[0];
    let data = synthesize_trial(&p.system, &p.sparsity, &spec.options, spec.seed, trial).unwrap();
    calibrate_trial(data, &spec.calibration).unwrap()
}

fn metric_bits(r: &ResultRow) -> Vec<u64> {
    [
        r.nmse_delay,
        r.nmse_doppler,
        r.rmse_aoa_deg,
        r.clustering_accuracy.unwrap_or(-1.0),
        r.miss_rate,
        r.false_alarm_rate,
    ]
    .iter()
    .map(|v| v.to_bits())
    .collect()
}

#[test]
fn containers_round_trip() {
    let spec = smoke(1, &[10.0]);
    let dir = tempfile::tempdir().unwrap();
    let cal = calibrated(&spec, 0);
    let (support, _) = recover_supports(&cal, &[Method::ClusterSbl], &stage(&spec))
        .unwrap()
        .remove(0);
    let est = estimate_from_support(&cal, &support, &spec.refine).unwrap();

    let p = dir.path().join("trial.json");
    container::save(&cal.trial, &p).unwrap();
    assert_eq!(container::load::<TrialData>(&p).unwrap(), cal.trial);
    let p = dir.path().join("cal.json");
    container::save(&cal, &p).unwrap();
    assert_eq!(container::load::<CalibratedTrial>(&p).unwrap(), cal);
    let p = dir.path().join("support.json");
    container::save(&support, &p).unwrap();
    assert_eq!(container::load::<SupportReport>(&p).unwrap(), support);
    let p = dir.path().join("est.json");
    container::save(&est, &p).unwrap();
    assert_eq!(container::load::<EstimateSet>(&p).unwrap(), est);

    // A support file is not an estimate file.
    assert!(matches!(
        container::load::<EstimateSet>(&dir.path().join("support.json")),
        Err(Error::Format(_))
    ));
    let text = fs::read_to_string(dir.path().join("est.json")).unwrap();
    let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
    assert!(matches!(
        container::from_str::<EstimateSet>(&bumped),
        Err(Error::Version { found: 2, .. })
    ));
}

#[test]
fn staged_pipeline_matches_in_process_run() {
    let spec = smoke(1, &[10.0]);
    let cal = calibrated(&spec, 1);
    let direct = run_methods(&cal, &spec.methods, &stage(&spec)).unwrap();
    let staged = recover_supports(&cal, &spec.methods, &stage(&spec)).unwrap();
    for (d, (s, _)) in direct.iter().zip(&staged) {
        assert_eq!(&d.support, s);
        assert_eq!(d.estimates, estimate_from_support(&cal, s, &spec.refine).unwrap());
    }
}

#[test]
fn sweep_cardinality_and_method_fairness() {
    let spec = smoke(3, &[5.0, 10.0]);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let outcome = run_sweep(&spec, &out, RunOptions::default()).unwrap();
    assert_eq!(outcome.rows.len(), 2 * 2 * 3);
    assert_eq!(outcome.failed_trials, 0);
    let rows = read_rows(&out).unwrap();
    assert_eq!(rows.len(), outcome.rows.len());
    for chunk in rows.chunks(2) {
        assert_eq!(chunk[0].trial, chunk[1].trial);
        assert_eq!(chunk[0].csi_hash, chunk[1].csi_hash);
        assert_eq!(chunk[0].method, "cluster_sbl");
        assert_eq!(chunk[1].method, "individual_sbl");
        assert!(chunk[0].clustering_accuracy.is_some());
        assert!(chunk[1].clustering_accuracy.is_none());
    }
    let mut hashes: Vec<&str> = rows.iter().map(|r| r.csi_hash.as_str()).collect();
    hashes.dedup();
    assert_eq!(hashes.len(), 6, "each (point, trial) has its own data");
    let timing = fs::read_to_string(timing_path(&out)).unwrap();
    assert_eq!(timing.lines().count(), 1 + rows.len());
}

#[test]
fn sweep_csv_is_byte_reproducible() {
    let spec = smoke(2, &[10.0]);
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_sweep(&spec, &a, RunOptions::default()).unwrap();
    run_sweep(&spec, &b, RunOptions::default()).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn results_do_not_depend_on_pool_size() {
    let spec = smoke(4, &[0.0]);
    let point = spec.points().remove(0);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_point(&spec, &point))
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(one.len(), three.len());
    for (a, b) in one.iter().zip(&three) {
        assert_eq!(metric_bits(a), metric_bits(b));
        assert_eq!(a.csi_hash, b.csi_hash);
    }
}

#[test]
fn resume_skips_completed_points() {
    let spec = smoke(2, &[5.0, 10.0]);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let full = run_sweep(&spec, &out, RunOptions::default()).unwrap();
    let reference = fs::read(&out).unwrap();

    // Simulate an interruption after the first point.
    let manifest = fs::read_to_string(manifest_path(&out)).unwrap();
    let head: Vec<&str> = manifest.lines().take(2).collect();
    fs::write(manifest_path(&out), head.join("\n") + "\n").unwrap();
    let text = String::from_utf8(reference.clone()).unwrap();
    let partial: Vec<&str> = text.lines().take(1 + 4).collect();
    fs::write(&out, partial.join("\n") + "\n").unwrap();

    let resumed = run_sweep(
        &spec,
        &out,
        RunOptions {
            resume: true,
            progress: false,
        },
    )
    .unwrap();
    assert_eq!(resumed.skipped_points, 1);
    let strip = |rows: &[ResultRow]| {
        rows.iter()
            .map(|r| ResultRow {
                wall_time_s: 0.0,
                ..r.clone()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&resumed.rows), strip(&full.rows));
    assert_eq!(fs::read(&out).unwrap(), reference);

    // Interrupted before any point finished: the CSV is still empty.
    fs::write(manifest_path(&out), head[0].to_string() + "\n").unwrap();
    fs::write(&out, "").unwrap();
    let opts = RunOptions {
        resume: true,
        progress: false,
    };
    let restarted = run_sweep(&spec, &out, opts).unwrap();
    assert_eq!(restarted.skipped_points, 0);
    assert_eq!(fs::read(&out).unwrap(), reference);

    // A different spec invalidates the manifest.
    let mut other = spec.clone();
    other.seed = 99;
    let fresh = run_sweep(
        &other,
        &out,
        RunOptions {
            resume: true,
            progress: false,
        },
    )
    .unwrap();
    assert_eq!(fresh.skipped_points, 0);
    assert_eq!(fresh.rows.len(), 8);
}

#[test]
fn unwritable_output_fails_before_work() {
    let spec = preset("fig2").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let err = run_sweep(&spec, &dir.path().join("missing/r.csv"), RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Io(_)));
    assert!(t0.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn fixed_scenario_redraws_only_offsets_and_noise() {
    let mut spec = smoke(2, &[10.0]);
    spec.options.fixed_scenario = true;
    let p = &spec.points()[0];
    let a = synthesize_trial(&p.system, &p.sparsity, &spec.options, spec.seed, 0).unwrap();
    let b = synthesize_trial(&p.system, &p.sparsity, &spec.options, spec.seed, 1).unwrap();
    assert_eq!(a.scenario, b.scenario);
    assert_ne!(a.offsets, b.offsets);
    spec.options.fixed_scenario = false;
    let c = synthesize_trial(&p.system, &p.sparsity, &spec.options, spec.seed, 1).unwrap();
    assert_ne!(a.scenario, c.scenario);
}

#[test]
fn normalized_supports_are_scale_invariant() {
    let mut spec = smoke(1, &[10.0]);
    spec.vi.normalize = true;
    let cal = calibrated(&spec, 2);
    let methods = [Method::ClusterSbl, Method::IndividualSbl];
    let base = recover_supports(&cal, &methods, &stage(&spec)).unwrap();
    for s in [1e-3, 7.3, 250.0] {
        let mut scaled = cal.clone();
        for ue in &mut scaled.calibrated.ues {
            for y in &mut ue.packets {
                *y *= Complex64::new(s, 0.0);
            }
        }
        let got = recover_supports(&scaled, &methods, &stage(&spec)).unwrap();
        for ((a, _), (b, _)) in base.iter().zip(&got) {
            assert_eq!(a.indices, b.indices, "scale {s}");
            for (ea, eb) in a.row_energy.iter().zip(&b.row_energy) {
                let (ma, mb) = (
                    ea.iter().cloned().fold(0.0, f64::max),
                    eb.iter().cloned().fold(0.0, f64::max),
                );
                for (x, y) in ea.iter().zip(eb) {
                    assert!((x / ma - y / mb).abs() < 1e-9, "scale {s}");
                }
            }
        }
    }
}

#[test]
fn smoke_preset_is_fast() {
    let spec = preset("smoke").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let outcome = run_sweep(&spec, &dir.path().join("s.csv"), RunOptions::default()).unwrap();
    assert!(t0.elapsed().as_secs_f64() < 60.0);
    assert_eq!(outcome.rows.len(), 4);
}

#[test]
fn schema_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    run_sweep(&smoke(1, &[10.0]), &out, RunOptions::default()).unwrap();
    let text = fs::read_to_string(&out).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[1] = lines[1].replacen("1,", "2,", 1);
    fs::write(&out, lines.join("\n")).unwrap();
    assert!(matches!(read_rows(&out), Err(Error::Version { found: 2, .. })));
    fs::write(&out, "a,b\n1,2\n").unwrap();
    assert!(matches!(read_rows(&out), Err(Error::Format(_))));
}
