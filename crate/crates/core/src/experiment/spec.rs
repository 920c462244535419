//! Experiment specifications and the built-in presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::CalibrationConfig;
use crate::config::{SparsityConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_GATE_BINS;
use crate::refine::RefineConfig;
use crate::sbl::ViConfig;

pub const PRESETS: [&str; 5] = ["fig2", "fig3", "fig4", "table1", "smoke"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Snr,
    Nk,
    Packets,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Snr => "snr",
            Self::Nk => "nk",
            Self::Packets => "packets",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClusterSbl,
    IndividualSbl,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ClusterSbl => "cluster_sbl",
            Self::IndividualSbl => "individual_sbl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cluster_sbl" | "cluster" => Ok(Self::ClusterSbl),
            "individual_sbl" | "individual" => Ok(Self::IndividualSbl),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Shared/private path split `(L_sh, L_pr)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Composition {
    pub shared: usize,
    pub private: usize,
}

impl Composition {
    pub fn label(&self) -> String {
        format!("{}-{}", self.shared, self.private)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct PipelineOptions {
    pub offsets: bool,
    pub noise: bool,
    /// Select exactly the true number of paths per UE.
    pub oracle_count: bool,
    /// Threshold `rho` used when `oracle_count` is off.
    pub threshold: f64,
    /// Draw one scenario from the base seed and re-draw only offsets and
    /// noise per trial.
    pub fixed_scenario: bool,
    pub gate_bins: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            offsets: true,
            noise: true,
            oracle_count: true,
            threshold: 0.05,
            fixed_scenario: false,
            gate_bins: DEFAULT_GATE_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub sweep: Sweep,
    pub compositions: Vec<Composition>,
    pub options: PipelineOptions,
    pub system: SystemConfig,
    pub sparsity: SparsityConfig,
    pub vi: ViConfig,
    pub calibration: CalibrationConfig,
    pub refine: RefineConfig,
}

/// One `(composition, sweep value)` point with its resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub composition: Composition,
    pub value: f64,
    pub system: SystemConfig,
    pub sparsity: SparsityConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be >= 1");
        }
        if self.sweep.values.is_empty() {
            return bad("sweep values must not be empty");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        if self.compositions.is_empty() {
            return bad("at least one composition is required");
        }
        let lk = self.sparsity.paths_per_ue();
        if self.compositions.iter().any(|c| c.shared + c.private != lk) {
            return bad("every composition must satisfy L_sh + L_pr = L_k");
        }
        for p in self.points() {
            p.system.validate()?;
            p.sparsity.validate(&p.system)?;
        }
        Ok(())
    }

    /// Points in output order: compositions outermost, sweep values inner.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for comp in &self.compositions {
            for &value in &self.sweep.values {
                let mut system = self.system.clone();
                let mut sparsity = self.sparsity.clone();
                sparsity.shared_paths = comp.shared;
                sparsity.private_paths = comp.private;
                match self.sweep.axis {
                    SweepAxis::Snr => system.snr_db = value,
                    SweepAxis::Nk => sparsity.per_ue_subcarriers = value as usize,
                    SweepAxis::Packets => system.num_packets = value as usize,
                }
                out.push(SweepPoint {
                    composition: *comp,
                    value,
                    system,
                    sparsity,
                });
            }
        }
        out
    }

    /// Content hash of everything that determines the result rows.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex(&Sha256::digest(json.as_bytes())[..16])
    }

    /// Apply a TOML override: tables merge key by key into the spec.
    pub fn with_override(&self, toml_text: &str) -> Result<Self> {
        let patch: toml::Table = toml_text.parse()?;
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, serde_json::to_value(patch)?);
        let out: Self = serde_json::from_value(base)?;
        out.validate()?;
        Ok(out)
    }
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Built-in experiment by name.
pub fn preset(name: &str) -> Result<ExperimentSpec> {
    let base = |name: &str, axis: SweepAxis, values: Vec<f64>| ExperimentSpec {
        name: name.to_string(),
        trials: 100,
        seed: 0,
        methods: vec![Method::ClusterSbl, Method::IndividualSbl],
        sweep: Sweep { axis, values },
        compositions: vec![Composition { shared: 3, private: 1 }],
        options: PipelineOptions::default(),
        system: SystemConfig::default(),
        sparsity: SparsityConfig::default(),
        vi: ViConfig::default(),
        calibration: CalibrationConfig::default(),
        refine: RefineConfig::default(),
    };
    let snr = vec![-5.0, 0.0, 5.0, 10.0, 15.0];
    let spec = match name {
        "fig2" => base(name, SweepAxis::Snr, snr),
        "table1" => {
            let mut s = base(name, SweepAxis::Snr, snr);
            s.methods = vec![Method::ClusterSbl];
            s
        }
        "fig3" => {
            let mut s = base(name, SweepAxis::Nk, vec![32.0, 64.0, 128.0, 256.0]);
            s.system.snr_db = 5.0;
            s.compositions = vec![
                Composition { shared: 3, private: 1 },
                Composition { shared: 2, private: 2 },
            ];
            s
        }
        "fig4" => {
            let mut s = base(name, SweepAxis::Packets, vec![4.0, 8.0, 16.0, 32.0]);
            s.system.snr_db = 10.0;
            s
        }
        "smoke" => {
            let mut s = base(name, SweepAxis::Snr, vec![10.0]);
            s.trials = 2;
            s.system.num_ues = 2;
            s.system.num_packets = 4;
            s.sparsity.grid_size = 64;
            s.sparsity.num_clusters_true = 1;
            s
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(spec)
}
