//! C ABI over the ulsense pipeline.
//!
//! Objects cross the boundary as opaque handles created by `uls_*_new` /
//! `uls_*_run` functions and released with the matching `uls_*_free`. Every
//! fallible call returns a [`UlsStatus`]; the message of the last failure on
//! the calling thread is available from [`uls_last_error`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ulsense::experiment::pipeline::StageConfig;
use ulsense::experiment::{
    calibrate_trial, preset, run_methods, run_sweep, synthesize_trial, ExperimentSpec, MethodResult, RunOptions,
};
use ulsense::metrics::clustering_accuracy;
use ulsense::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numeric = 4,
    Io = 5,
    Format = 6,
    UnknownPreset = 7,
    OutOfRange = 8,
    Panic = 99,
}

/// Experiment specification handle.
pub struct UlsSpec {
    inner: ExperimentSpec,
}

/// One synthesized and processed trial.
pub struct UlsTrial {
    results: Vec<MethodResult>,
    labels: Vec<usize>,
}

/// Per-method metrics of a trial. `clustering_accuracy` is negative when the
/// method does not cluster.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct UlsMetrics {
    pub nmse_delay: f64,
    pub nmse_doppler: f64,
    pub rmse_aoa_deg: f64,
    pub clustering_accuracy: f64,
    pub miss_rate: f64,
    pub false_alarm_rate: f64,
    pub vi_iterations: u32,
    pub converged: bool,
}

/// One estimated path. `has_doppler` / `has_aoa` are false when the estimate
/// was withheld; the value is then 0.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct UlsPath {
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub aoa_rad: f64,
    pub gain_power: f64,
    pub has_doppler: bool,
    pub has_aoa: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(e: &Error) -> UlsStatus {
    match e {
        Error::Config(_) | Error::Scenario(_) | Error::Dimension(_) | Error::Toml(_) => UlsStatus::Config,
        Error::NotPositiveDefinite(_) | Error::NonFinite { .. } => UlsStatus::Numeric,
        Error::Io(_) => UlsStatus::Io,
        Error::Format(_) | Error::Version { .. } | Error::Json(_) | Error::Csv(_) => UlsStatus::Format,
        Error::UnknownPreset(_) => UlsStatus::UnknownPreset,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (UlsStatus, String)>) -> UlsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            UlsStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            UlsStatus::Panic
        }
    }
}

fn lib(e: Error) -> (UlsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (UlsStatus, String) {
    (UlsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (UlsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (UlsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn uls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn uls_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Create a spec from a preset name (`fig2`, `fig3`, `fig4`, `table1`,
/// `smoke`).
#[no_mangle]
pub unsafe extern "C" fn uls_spec_preset(name: *const c_char, out: *mut *mut UlsSpec) -> UlsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = preset(text(name, "name")?).map_err(lib)?;
        *out = Box::into_raw(Box::new(UlsSpec { inner: spec }));
        Ok(())
    })
}

/// Merge a TOML override into the spec.
#[no_mangle]
pub unsafe extern "C" fn uls_spec_apply_toml(spec: *mut UlsSpec, toml: *const c_char) -> UlsStatus {
    guard(|| {
        let s = spec.as_mut().ok_or_else(|| null("spec"))?;
        s.inner = s.inner.with_override(text(toml, "toml")?).map_err(lib)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn uls_spec_set_trials(spec: *mut UlsSpec, trials: u32) -> UlsStatus {
    guard(|| {
        let s = spec.as_mut().ok_or_else(|| null("spec"))?;
        if trials == 0 {
            return Err((UlsStatus::InvalidArgument, "trials must be >= 1".into()));
        }
        s.inner.trials = trials as usize;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn uls_spec_set_seed(spec: *mut UlsSpec, seed: u64) -> UlsStatus {
    guard(|| {
        spec.as_mut().ok_or_else(|| null("spec"))?.inner.seed = seed;
        Ok(())
    })
}

/// Number of `(composition, sweep value)` points.
#[no_mangle]
pub unsafe extern "C" fn uls_spec_num_points(spec: *const UlsSpec, out: *mut usize) -> UlsStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| null("spec"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.inner.points().len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn uls_spec_free(spec: *mut UlsSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Run the full sweep and write the result CSV. `failed_trials` may be null.
#[no_mangle]
pub unsafe extern "C" fn uls_run_sweep(
    spec: *const UlsSpec,
    out_csv: *const c_char,
    failed_trials: *mut usize,
) -> UlsStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| null("spec"))?;
        let path = text(out_csv, "out_csv")?;
        let outcome = run_sweep(&s.inner, Path::new(path), RunOptions::default()).map_err(lib)?;
        if let Some(f) = failed_trials.as_mut() {
            *f = outcome.failed_trials;
        }
        Ok(())
    })
}

/// Synthesize and process trial `trial` at sweep point `point`.
#[no_mangle]
pub unsafe extern "C" fn uls_trial_run(
    spec: *const UlsSpec,
    point: usize,
    trial: u64,
    out: *mut *mut UlsTrial,
) -> UlsStatus {
    guard(|| {
        let s = &spec.as_ref().ok_or_else(|| null("spec"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let points = s.points();
        let p = points
            .get(point)
            .ok_or_else(|| (UlsStatus::OutOfRange, format!("point {point} of {}", points.len())))?;
        let data = synthesize_trial(&p.system, &p.sparsity, &s.options, s.seed, trial).map_err(lib)?;
        let labels = data.scenario.cluster_labels();
        let cal = calibrate_trial(data, &s.calibration).map_err(lib)?;
        let stage = StageConfig {
            vi: s.vi,
            refine: s.refine,
            options: s.options,
        };
        let results = run_methods(&cal, &s.methods, &stage).map_err(lib)?;
        *out = Box::into_raw(Box::new(UlsTrial { results, labels }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn uls_trial_num_methods(trial: *const UlsTrial, out: *mut usize) -> UlsStatus {
    guard(|| {
        let t = trial.as_ref().ok_or_else(|| null("trial"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = t.results.len();
        Ok(())
    })
}

unsafe fn method<'a>(trial: *const UlsTrial, m: usize) -> Result<&'a MethodResult, (UlsStatus, String)> {
    let t = trial.as_ref().ok_or_else(|| null("trial"))?;
    t.results
        .get(m)
        .ok_or_else(|| (UlsStatus::OutOfRange, format!("method {m} of {}", t.results.len())))
}

/// Writes a NUL-terminated method name into `buf` (at most `len` bytes).
#[no_mangle]
pub unsafe extern "C" fn uls_trial_method_name(
    trial: *const UlsTrial,
    m: usize,
    buf: *mut c_char,
    len: usize,
) -> UlsStatus {
    guard(|| {
        let r = method(trial, m)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let name = r.method.as_str().as_bytes();
        if len < name.len() + 1 {
            return Err((
                UlsStatus::InvalidArgument,
                format!("buffer needs {} bytes", name.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(name.as_ptr(), buf.cast::<u8>(), name.len());
        *buf.add(name.len()) = 0;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn uls_trial_metrics(trial: *const UlsTrial, m: usize, out: *mut UlsMetrics) -> UlsStatus {
    guard(|| {
        let r = method(trial, m)?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        *o = UlsMetrics {
            nmse_delay: r.metrics.nmse_delay,
            nmse_doppler: r.metrics.nmse_doppler,
            rmse_aoa_deg: r.metrics.rmse_aoa_deg,
            clustering_accuracy: r.metrics.clustering_accuracy.unwrap_or(-1.0),
            miss_rate: r.metrics.miss_rate,
            false_alarm_rate: r.metrics.false_alarm_rate,
            vi_iterations: r.support.iterations as u32,
            converged: r.support.converged,
        };
        Ok(())
    })
}

/// Number of UEs in the trial.
#[no_mangle]
pub unsafe extern "C" fn uls_trial_num_ues(trial: *const UlsTrial, out: *mut usize) -> UlsStatus {
    guard(|| {
        let t = trial.as_ref().ok_or_else(|| null("trial"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = t.labels.len();
        Ok(())
    })
}

/// Number of estimated paths of UE `ue` under method `m`.
#[no_mangle]
pub unsafe extern "C" fn uls_trial_num_paths(
    trial: *const UlsTrial,
    m: usize,
    ue: usize,
    out: *mut usize,
) -> UlsStatus {
    guard(|| {
        let r = method(trial, m)?;
        let u = r
            .estimates
            .ues
            .get(ue)
            .ok_or_else(|| (UlsStatus::OutOfRange, format!("ue {ue}")))?;
        *out.as_mut().ok_or_else(|| null("out"))? = u.paths.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn uls_trial_path(
    trial: *const UlsTrial,
    m: usize,
    ue: usize,
    path: usize,
    out: *mut UlsPath,
) -> UlsStatus {
    guard(|| {
        let r = method(trial, m)?;
        let p = r
            .estimates
            .ues
            .get(ue)
            .and_then(|u| u.paths.get(path))
            .ok_or_else(|| (UlsStatus::OutOfRange, format!("ue {ue} path {path}")))?;
        *out.as_mut().ok_or_else(|| null("out"))? = UlsPath {
            delay_s: p.delay_s,
            doppler_hz: p.doppler_hz.unwrap_or(0.0),
            aoa_rad: p.aoa_rad.unwrap_or(0.0),
            gain_power: p.gain_power,
            has_doppler: p.doppler_hz.is_some(),
            has_aoa: p.aoa_rad.is_some(),
        };
        Ok(())
    })
}

/// True cluster labels of the trial's UEs, written to `out[0..len]`.
#[no_mangle]
pub unsafe extern "C" fn uls_trial_true_labels(trial: *const UlsTrial, out: *mut u32, len: usize) -> UlsStatus {
    guard(|| {
        let t = trial.as_ref().ok_or_else(|| null("trial"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len < t.labels.len() {
            return Err((
                UlsStatus::InvalidArgument,
                format!("buffer needs {} entries", t.labels.len()),
            ));
        }
        for (i, &l) in t.labels.iter().enumerate() {
            *out.add(i) = l as u32;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn uls_trial_free(trial: *mut UlsTrial) {
    if !trial.is_null() {
        drop(Box::from_raw(trial));
    }
}

/// Permutation-matched clustering accuracy of two label arrays of length `n`.
#[no_mangle]
pub unsafe extern "C" fn uls_clustering_accuracy(
    truth: *const u32,
    predicted: *const u32,
    n: usize,
    out: *mut f64,
) -> UlsStatus {
    guard(|| {
        if truth.is_null() || predicted.is_null() {
            return Err(null("labels"));
        }
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        let t: Vec<usize> = std::slice::from_raw_parts(truth, n)
            .iter()
            .map(|&x| x as usize)
            .collect();
        let p: Vec<usize> = std::slice::from_raw_parts(predicted, n)
            .iter()
            .map(|&x| x as usize)
            .collect();
        *o = clustering_accuracy(&t, &p);
        Ok(())
    })
}
