//! Versioned JSON containers for handing trial data between stages.
//!
//! Every file is one object `{"kind": ..., "version": ..., "payload": ...}`.
//! Field order inside the payload follows the struct declaration order; see
//! `docs/formats.md`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationReport;
use crate::config::{SparsityConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::refine::EstimateSet;
use crate::signal_model::{CsiTensor, OffsetTrace, Scenario};

pub const CONTAINER_VERSION: u32 = 1;

/// A payload type with a fixed container kind tag.
pub trait Kind {
    const KIND: &'static str;
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    kind: String,
    version: u32,
    payload: T,
}

/// Synthesized trial: configuration, ground truth and observed CSI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialData {
    pub seed: u64,
    pub system: SystemConfig,
    pub sparsity: SparsityConfig,
    pub scenario: Scenario,
    pub offsets: OffsetTrace,
    pub csi: CsiTensor,
}

impl Kind for TrialData {
    const KIND: &'static str = "trial";
}

/// Trial data after TO compensation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedTrial {
    pub trial: TrialData,
    pub calibrated: CsiTensor,
    pub report: CalibrationReport,
}

impl Kind for CalibratedTrial {
    const KIND: &'static str = "calibrated";
}

/// Support and clustering outcome of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub method: String,
    pub iterations: usize,
    pub converged: bool,
    /// Active grid indices per UE.
    pub indices: Vec<Vec<usize>>,
    pub delays_s: Vec<Vec<f64>>,
    pub row_energy: Vec<Vec<f64>>,
    /// Cluster responsibilities per UE; empty for the per-UE baseline.
    pub responsibilities: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
}

impl Kind for SupportReport {
    const KIND: &'static str = "support";
}

impl Kind for EstimateSet {
    const KIND: &'static str = "estimates";
}

pub fn to_writer<T: Serialize + Kind, W: Write>(value: &T, w: W) -> Result<()> {
    let env = Envelope {
        kind: T::KIND.to_string(),
        version: CONTAINER_VERSION,
        payload: value,
    };
    serde_json::to_writer(w, &env)?;
    Ok(())
}

pub fn from_str<T: DeserializeOwned + Kind>(s: &str) -> Result<T> {
    let raw: Envelope<serde_json::Value> = serde_json::from_str(s)?;
    check::<T>(&raw.kind, raw.version)?;
    Ok(serde_json::from_value(raw.payload)?)
}

pub fn save<T: Serialize + Kind>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    to_writer(value, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load<T: DeserializeOwned + Kind>(path: &Path) -> Result<T> {
    let raw: Envelope<serde_json::Value> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    check::<T>(&raw.kind, raw.version)?;
    Ok(serde_json::from_value(raw.payload)?)
}

fn check<T: Kind>(kind: &str, version: u32) -> Result<()> {
    if kind != T::KIND {
        return Err(Error::Format(format!(
            "expected a `{}` container, found `{kind}`",
            T::KIND
        )));
    }
    if version != CONTAINER_VERSION {
        return Err(Error::Version {
            kind: T::KIND,
            found: version,
            expected: CONTAINER_VERSION,
        });
    }
    Ok(())
}
