//! System and sparsity configuration.
//!
//! Defaults reproduce the reference operating point: 3.5 GHz carrier,
//! 2048 subcarriers at 60 kHz, 8-antenna ULA, 8 UEs, 16 packets spaced
//! 0.25 ms, 3 delay clusters with 3 shared taps and one private LoS tap,
//! 256-point delay grid over 2.5 us.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub carrier_freq_hz: f64,
    /// Nominal bandwidth. Only used for the timing-offset draw range `20 / B`;
    /// signal math uses [`SystemConfig::signal_bandwidth_hz`].
    pub bandwidth_hz: f64,
    pub num_subcarriers_total: usize,
    pub subcarrier_spacing_hz: f64,
    pub packet_interval_s: f64,
    pub num_antennas: usize,
    pub num_ues: usize,
    pub num_packets: usize,
    pub snr_db: f64,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 3.5e9,
            bandwidth_hz: 140e6,
            num_subcarriers_total: 2048,
            subcarrier_spacing_hz: 60e3,
            packet_interval_s: 0.25e-3,
            num_antennas: 8,
            num_ues: 8,
            num_packets: 16,
            snr_db: 10.0,
            rng_seed: 0,
        }
    }
}

impl SystemConfig {
    /// `N * df`, the occupied bandwidth used by the signal model.
    pub fn signal_bandwidth_hz(&self) -> f64 {
        self.num_subcarriers_total as f64 * self.subcarrier_spacing_hz
    }

    /// Upper end of the uniform timing-offset draw, `20 / B`.
    pub fn max_timing_offset_s(&self) -> f64 {
        20.0 / self.bandwidth_hz
    }

    /// Baseband frequency of a 0-based subcarrier index.
    pub fn subcarrier_freq(&self, index: usize) -> f64 {
        index as f64 * self.subcarrier_spacing_hz
    }

    /// Largest Doppler the adjacent-packet phase difference can represent.
    pub fn unambiguous_doppler_hz(&self) -> f64 {
        0.5 / self.packet_interval_s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.num_ues == 0 {
            return bad("num_ues must be >= 1");
        }
        if self.num_subcarriers_total < self.num_ues {
            return bad("num_subcarriers_total must be >= num_ues");
        }
        if self.num_antennas < 2 {
            return bad("num_antennas must be >= 2");
        }
        if self.num_packets < 2 {
            return bad("num_packets must be >= 2");
        }
        if !(self.subcarrier_spacing_hz > 0.0 && self.subcarrier_spacing_hz.is_finite()) {
            return bad("subcarrier_spacing_hz must be positive");
        }
        if !(self.packet_interval_s > 0.0 && self.packet_interval_s.is_finite()) {
            return bad("packet_interval_s must be positive");
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return bad("bandwidth_hz must be positive");
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsityConfig {
    pub tau_max_s: f64,
    pub grid_size: usize,
    pub num_clusters_true: usize,
    /// Candidate clusters for the VI engine. `None` means `num_clusters_true`.
    pub num_clusters_candidate: Option<usize>,
    pub shared_paths: usize,
    /// Private paths per UE, including the LoS tap.
    pub private_paths: usize,
    pub per_ue_subcarriers: usize,
    /// Snap sampled delays onto the coarse grid.
    pub on_grid: bool,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self {
            tau_max_s: 2.5e-6,
            grid_size: 256,
            num_clusters_true: 3,
            num_clusters_candidate: None,
            shared_paths: 3,
            private_paths: 1,
            per_ue_subcarriers: 128,
            on_grid: false,
        }
    }
}

impl SparsityConfig {
    pub fn paths_per_ue(&self) -> usize {
        self.shared_paths + self.private_paths
    }

    pub fn grid_spacing_s(&self) -> f64 {
        self.tau_max_s / (self.grid_size - 1) as f64
    }

    /// Uniform coarse delay grid `(g) * tau_max / (G - 1)`, g = 0..G-1.
    pub fn delay_grid(&self) -> Vec<f64> {
        let step = self.grid_spacing_s();
        (0..self.grid_size).map(|g| g as f64 * step).collect()
    }

    /// Minimum separation between two true taps of the same UE (two bins).
    pub fn min_tap_separation_s(&self) -> f64 {
        2.0 * self.grid_spacing_s()
    }

    pub fn candidate_clusters(&self) -> usize {
        self.num_clusters_candidate.unwrap_or(self.num_clusters_true)
    }

    pub fn validate(&self, sys: &SystemConfig) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.grid_size < 2 {
            return bad("grid_size must be >= 2".into());
        }
        if self.tau_max_s.is_nan() || self.tau_max_s <= 0.0 || self.tau_max_s >= 1.0 / sys.subcarrier_spacing_hz {
            return bad(format!(
                "tau_max_s must lie in (0, 1/df) = (0, {:e})",
                1.0 / sys.subcarrier_spacing_hz
            ));
        }
        if self.private_paths < 1 {
            return bad("private_paths must be >= 1 (the LoS tap is private)".into());
        }
        if self.num_clusters_true < 1 {
            return bad("num_clusters_true must be >= 1".into());
        }
        let c = self.candidate_clusters();
        if c < self.num_clusters_true {
            return bad(format!(
                "candidate clusters ({c}) must be >= true clusters ({})",
                self.num_clusters_true
            ));
        }
        if self.per_ue_subcarriers == 0 {
            return bad("per_ue_subcarriers must be >= 1".into());
        }
        if sys.num_ues * self.per_ue_subcarriers > sys.num_subcarriers_total {
            return bad(format!(
                "K * N_k = {} exceeds N = {}",
                sys.num_ues * self.per_ue_subcarriers,
                sys.num_subcarriers_total
            ));
        }
        Ok(())
    }
}
