//! Monte-Carlo sweeps with a versioned CSV output and a resume manifest.
//!
//! Next to `<out>` the runner keeps `<out>.manifest` (spec fingerprint and
//! finished point indices) and `<out>.timing.csv` (wall-clock times, kept out
//! of the result CSV so that file is byte-reproducible).

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::pipeline::{calibrate_trial, csi_hash, run_methods, synthesize_trial, StageConfig};
use crate::experiment::spec::{ExperimentSpec, SweepPoint};

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// One result line: one method on one trial at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema: u32,
    pub experiment: String,
    pub composition: String,
    pub axis: String,
    pub sweep_value: f64,
    pub method: String,
    pub trial: u64,
    pub seed: u64,
    pub nmse_delay: f64,
    pub nmse_doppler: f64,
    pub rmse_aoa_deg: f64,
    pub clustering_accuracy: Option<f64>,
    pub miss_rate: f64,
    pub false_alarm_rate: f64,
    pub vi_iterations: usize,
    pub converged: bool,
    pub failed: bool,
    pub csi_hash: String,
    pub error: String,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Rows of one trial, one per method in spec order. A pipeline error yields
/// one failed row per method.
pub fn run_trial(spec: &ExperimentSpec, point: &SweepPoint, trial: u64) -> Vec<ResultRow> {
    let stage = StageConfig {
        vi: spec.vi,
        refine: spec.refine,
        options: spec.options,
    };
    let row = |method: &str, seed: u64, hash: String| ResultRow {
        schema: CSV_SCHEMA_VERSION,
        experiment: spec.name.clone(),
        composition: point.composition.label(),
        axis: spec.sweep.axis.as_str().to_string(),
        sweep_value: point.value,
        method: method.to_string(),
        trial,
        seed,
        nmse_delay: f64::NAN,
        nmse_doppler: f64::NAN,
        rmse_aoa_deg: f64::NAN,
        clustering_accuracy: None,
        miss_rate: f64::NAN,
        false_alarm_rate: f64::NAN,
        vi_iterations: 0,
        converged: false,
        failed: true,
        csi_hash: hash,
        error: String::new(),
        wall_time_s: 0.0,
    };
    let seed = crate::rng::trial_seed(spec.seed, trial);
    let mut hash = String::new();
    let outcome = synthesize_trial(&point.system, &point.sparsity, &spec.options, spec.seed, trial)
        .and_then(|data| {
            hash = csi_hash(&data.csi);
            calibrate_trial(data, &spec.calibration)
        })
        .and_then(|cal| run_methods(&cal, &spec.methods, &stage));
    match outcome {
        Ok(results) => results
            .into_iter()
            .map(|r| ResultRow {
                nmse_delay: r.metrics.nmse_delay,
                nmse_doppler: r.metrics.nmse_doppler,
                rmse_aoa_deg: r.metrics.rmse_aoa_deg,
                clustering_accuracy: r.metrics.clustering_accuracy,
                miss_rate: r.metrics.miss_rate,
                false_alarm_rate: r.metrics.false_alarm_rate,
                vi_iterations: r.support.iterations,
                converged: r.support.converged,
                failed: false,
                wall_time_s: r.wall_time_s,
                ..row(r.method.as_str(), seed, hash.clone())
            })
            .collect(),
        Err(e) => spec
            .methods
            .iter()
            .map(|m| ResultRow {
                error: e.to_string(),
                ..row(m.as_str(), seed, hash.clone())
            })
            .collect(),
    }
}

/// All rows of one point, trials in parallel, returned in trial order.
pub fn run_point(spec: &ExperimentSpec, point: &SweepPoint) -> Vec<ResultRow> {
    (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(spec, point, t))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Skip points already listed in a manifest with the same fingerprint.
    pub resume: bool,
    /// Per-point progress lines on stderr.
    pub progress: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub failed_trials: usize,
    pub skipped_points: usize,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    sidecar(out, "manifest")
}

pub fn timing_path(out: &Path) -> PathBuf {
    sidecar(out, "timing.csv")
}

fn sidecar(out: &Path, ext: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn read_manifest(path: &Path, fingerprint: &str) -> Result<Option<BTreeSet<usize>>> {
    let Ok(file) = File::open(path) else {
        return Ok(None);
    };
    let mut lines = BufReader::new(file).lines();
    match lines.next().transpose()? {
        Some(l) if l.trim() == format!("spec {fingerprint}") => {}
        _ => return Ok(None),
    }
    let mut done = BTreeSet::new();
    for line in lines {
        let line = line?;
        if let Some(idx) = line.strip_prefix("done ") {
            done.insert(
                idx.trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad manifest line `{line}`")))?,
            );
        }
    }
    Ok(Some(done))
}

/// Run every point of `spec` and write the CSV to `out`.
pub fn run_sweep(spec: &ExperimentSpec, out: &Path, opts: RunOptions) -> Result<SweepOutcome> {
    spec.validate()?;
    let points = spec.points();
    let fingerprint = spec.fingerprint();
    let manifest = manifest_path(out);
    let done = if opts.resume {
        read_manifest(&manifest, &fingerprint)?
    } else {
        None
    };

    let mut kept = Vec::new();
    if let Some(done) = &done {
        if !done.is_empty() {
            let keys: Vec<(String, u64)> = done
                .iter()
                .filter_map(|&i| points.get(i))
                .map(|p| (p.composition.label(), p.value.to_bits()))
                .collect();
            kept = read_rows(out)?
                .into_iter()
                .filter(|r| keys.contains(&(r.composition.clone(), r.sweep_value.to_bits())))
                .collect();
        }
    }
    let done = done.unwrap_or_default();

    // Opening the outputs first surfaces unwritable paths before any work.
    let mut csv = csv::Writer::from_writer(File::create(out)?);
    for r in &kept {
        csv.serialize(r)?;
    }
    csv.flush()?;
    let mut timing = if done.is_empty() {
        let mut f = File::create(timing_path(out))?;
        writeln!(f, "composition,sweep_value,method,trial,wall_time_s")?;
        f
    } else {
        OpenOptions::new().create(true).append(true).open(timing_path(out))?
    };
    let mut mf = File::create(&manifest)?;
    writeln!(mf, "spec {fingerprint}")?;
    for i in &done {
        writeln!(mf, "done {i}")?;
    }
    mf.flush()?;

    let mut rows = kept;
    let skipped_points = done.len();
    for (i, point) in points.iter().enumerate() {
        if done.contains(&i) {
            continue;
        }
        let point_rows = run_point(spec, point);
        for r in &point_rows {
            csv.serialize(r)?;
            writeln!(
                timing,
                "{},{},{},{},{:.6}",
                r.composition, r.sweep_value, r.method, r.trial, r.wall_time_s
            )?;
        }
        csv.flush()?;
        timing.flush()?;
        writeln!(mf, "done {i}")?;
        mf.flush()?;
        if opts.progress {
            eprintln!(
                "[{}/{}] {} {}={} done ({} rows)",
                i + 1,
                points.len(),
                point.composition.label(),
                spec.sweep.axis.as_str(),
                point.value,
                point_rows.len()
            );
        }
        rows.extend(point_rows);
    }
    let failed_trials = {
        let mut keys: Vec<(&str, u64, u64)> = rows
            .iter()
            .filter(|r| r.failed)
            .map(|r| (r.composition.as_str(), r.sweep_value.to_bits(), r.trial))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    };
    Ok(SweepOutcome {
        rows,
        failed_trials,
        skipped_points,
    })
}

/// Read a result CSV, rejecting other schema versions.
pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("schema") {
        return Err(Error::Format(format!("{} is not a result CSV", path.display())));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: ResultRow = rec?;
        if row.schema != CSV_SCHEMA_VERSION {
            return Err(Error::Version {
                kind: "result CSV",
                found: row.schema,
                expected: CSV_SCHEMA_VERSION,
            });
        }
        rows.push(row);
    }
    Ok(rows)
}
