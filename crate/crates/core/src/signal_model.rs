//! Asynchronous multi-user uplink OFDMA CSI model.
//!
//! UE `k` owns a contiguous block of `N_k` subcarriers. After pilot matched
//! filtering, packet `t` yields an `N_k x M` CSI matrix
//!
//! ```text
//! Y_k[t] = sum_l psi_k(tau_l + dtau_k[t]) s_l[t]^T + E_k[t]
//! s_l[t] = alpha_l exp(j beta_k[t]) exp(j 2 pi t T_A (nu_l + dnu_k[t])) a(theta_l)
//! ```
//!
//! with `psi_k(tau)_n = exp(-j 2 pi f_n tau)`, `f_n = n * df` for the 0-based
//! subcarrier index `n`, and `a(theta)_m = exp(j pi m sin theta)`.
//! Packets are indexed `t = 1..=T` in the slow-time phase.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{SparsityConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{CMat, ZERO};

/// Largest Doppler magnitude drawn for NLoS paths.
pub const MAX_DOPPLER_HZ: f64 = 350.0;
/// Upper end of the per-packet CFO draw.
pub const MAX_CFO_HZ: f64 = 150.0;

const MAX_DRAW_ATTEMPTS: usize = 10_000;

/// Contiguous, disjoint subcarrier blocks: UE `k` gets `k*N_k .. (k+1)*N_k`.
pub fn allocate_subcarriers(total: usize, num_ues: usize, per_ue: usize) -> Result<Vec<Vec<usize>>> {
    if num_ues.checked_mul(per_ue).map_or(true, |used| used > total) {
        return Err(Error::Config(format!(
            "cannot allocate {num_ues} blocks of {per_ue} subcarriers out of {total}"
        )));
    }
    Ok((0..num_ues).map(|k| (k * per_ue..(k + 1) * per_ue).collect()).collect())
}

/// `[exp(-j 2 pi n df tau)]` over the given subcarrier indices.
pub fn delay_steering(tau: f64, subcarriers: &[usize], spacing_hz: f64) -> Vec<Complex64> {
    subcarriers
        .iter()
        .map(|&n| Complex64::from_polar(1.0, -2.0 * PI * n as f64 * spacing_hz * tau))
        .collect()
}

/// Half-wavelength ULA response, `exp(j pi m sin theta)` for m = 0..M-1.
pub fn array_response(theta: f64, num_antennas: usize) -> Vec<Complex64> {
    let s = theta.sin();
    (0..num_antennas)
        .map(|m| Complex64::from_polar(1.0, PI * m as f64 * s))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub aoa_rad: f64,
    pub is_los: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeScenario {
    /// 0-based true cluster label.
    pub cluster: usize,
    /// 0-based subcarrier indices, ascending.
    pub subcarriers: Vec<usize>,
    pub paths: Vec<PathParams>,
    /// Known geometric LoS delay.
    pub los_geom_delay_s: f64,
}

impl UeScenario {
    pub fn los_index(&self) -> Option<usize> {
        self.paths.iter().position(|p| p.is_los)
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub num_clusters: usize,
    pub ues: Vec<UeScenario>,
}

impl Scenario {
    pub fn cluster_labels(&self) -> Vec<usize> {
        self.ues.iter().map(|u| u.cluster).collect()
    }

    pub fn los_geom_delays(&self) -> Vec<f64> {
        self.ues.iter().map(|u| u.los_geom_delay_s).collect()
    }

    pub fn path_counts(&self) -> Vec<usize> {
        self.ues.iter().map(|u| u.paths.len()).collect()
    }
}

/// Path-gain model. NLoS magnitudes are uniform on `[nlos_min, nlos_max]`
/// with uniform phase; the LoS magnitude is `los_ratio` times the largest
/// NLoS magnitude of the same UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainModel {
    pub nlos_min: f64,
    pub nlos_max: f64,
    pub los_ratio: f64,
}

impl Default for GainModel {
    fn default() -> Self {
        Self {
            nlos_min: 0.5,
            nlos_max: 1.0,
            los_ratio: 3.0,
        }
    }
}

/// Draw a scenario: `S` clusters of shared delays, one LoS tap plus
/// `L_pr - 1` private NLoS taps per UE.
pub fn sample_scenario<R: Rng + ?Sized>(sys: &SystemConfig, sp: &SparsityConfig, rng: &mut R) -> Result<Scenario> {
    sample_scenario_with(sys, sp, &GainModel::default(), rng)
}

pub fn sample_scenario_with<R: Rng + ?Sized>(
    sys: &SystemConfig,
    sp: &SparsityConfig,
    gains: &GainModel,
    rng: &mut R,
) -> Result<Scenario> {
    sys.validate()?;
    sp.validate(sys)?;
    let blocks = allocate_subcarriers(sys.num_subcarriers_total, sys.num_ues, sp.per_ue_subcarriers)?;
    let drawer = DelayDrawer::new(sp);

    let mut labels: Vec<usize> = (0..sys.num_ues).map(|k| k % sp.num_clusters_true).collect();
    labels.shuffle(rng);

    let mut shared = Vec::with_capacity(sp.num_clusters_true);
    for c in 0..sp.num_clusters_true {
        let mut taps = Vec::with_capacity(sp.shared_paths);
        for _ in 0..sp.shared_paths {
            let tau = drawer
                .draw(&taps, rng)
                .ok_or_else(|| Error::Scenario(format!("cluster {c}: cannot place {} shared taps", sp.shared_paths)))?;
            taps.push(tau);
        }
        shared.push(taps);
    }

    let mut ues = Vec::with_capacity(sys.num_ues);
    for (k, (&cluster, subcarriers)) in labels.iter().zip(blocks).enumerate() {
        let mut taken = shared[cluster].clone();
        let los_delay = drawer
            .draw(&taken, rng)
            .ok_or_else(|| Error::Scenario(format!("UE {k}: cannot place the LoS tap")))?;
        taken.push(los_delay);
        let mut private = Vec::with_capacity(sp.private_paths - 1);
        for _ in 1..sp.private_paths {
            let tau = drawer
                .draw(&taken, rng)
                .ok_or_else(|| Error::Scenario(format!("UE {k}: cannot place private taps")))?;
            taken.push(tau);
            private.push(tau);
        }

        let mut nlos = Vec::with_capacity(sp.paths_per_ue() - 1);
        for &tau in shared[cluster].iter().chain(private.iter()) {
            let mag = rng.random_range(gains.nlos_min..=gains.nlos_max);
            let phase = rng.random_range(0.0..2.0 * PI);
            nlos.push(PathParams {
                gain: Complex64::from_polar(mag, phase),
                delay_s: tau,
                doppler_hz: rng.random_range(-MAX_DOPPLER_HZ..=MAX_DOPPLER_HZ),
                aoa_rad: rng.random_range(-PI / 2.0..=PI / 2.0),
                is_los: false,
            });
        }
        let strongest = nlos.iter().map(|p| p.gain.norm()).fold(0.0, f64::max);
        let los_mag = gains.los_ratio * if nlos.is_empty() { gains.nlos_max } else { strongest };
        let los = PathParams {
            gain: Complex64::from_polar(los_mag, rng.random_range(0.0..2.0 * PI)),
            delay_s: los_delay,
            doppler_hz: 0.0,
            aoa_rad: rng.random_range(-PI / 2.0..=PI / 2.0),
            is_los: true,
        };
        let mut paths = Vec::with_capacity(sp.paths_per_ue());
        paths.push(los);
        paths.extend(nlos);
        ues.push(UeScenario {
            cluster,
            subcarriers,
            paths,
            los_geom_delay_s: los_delay,
        });
    }
    Ok(Scenario {
        num_clusters: sp.num_clusters_true,
        ues,
    })
}

/// Rejection sampler for tap delays with a minimum pairwise separation.
struct DelayDrawer {
    tau_max: f64,
    spacing: f64,
    grid_size: usize,
    min_sep: f64,
    on_grid: bool,
}

impl DelayDrawer {
    fn new(sp: &SparsityConfig) -> Self {
        Self {
            tau_max: sp.tau_max_s,
            spacing: sp.grid_spacing_s(),
            grid_size: sp.grid_size,
            min_sep: sp.min_tap_separation_s(),
            on_grid: sp.on_grid,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, taken: &[f64], rng: &mut R) -> Option<f64> {
        // Half a bin of slack so on-grid draws two bins apart are accepted
        // despite rounding in `g * spacing`.
        let sep = self.min_sep - if self.on_grid { 0.5 * self.spacing } else { 0.0 };
        for _ in 0..MAX_DRAW_ATTEMPTS {
            let tau = if self.on_grid {
                rng.random_range(1..self.grid_size) as f64 * self.spacing
            } else {
                self.tau_max * (1.0 - rng.random::<f64>())
            };
            if taken.iter().all(|&t| (t - tau).abs() >= sep) {
                return Some(tau);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetTrace {
    /// `[k][t]` timing offsets in seconds.
    pub timing_s: Vec<Vec<f64>>,
    /// `[k][t]` carrier-frequency offsets in Hz.
    pub cfo_hz: Vec<Vec<f64>>,
    /// `[k][t]` phase offsets in radians.
    pub phase_rad: Vec<Vec<f64>>,
}

impl OffsetTrace {
    pub fn zeros(num_ues: usize, num_packets: usize) -> Self {
        let z = vec![vec![0.0; num_packets]; num_ues];
        Self {
            timing_s: z.clone(),
            cfo_hz: z.clone(),
            phase_rad: z,
        }
    }
}

/// Packet-dependent TO/CFO/PO, independently redrawn for every `(k, t)`.
/// With `enabled == false` every entry is zero (synchronous special case).
pub fn sample_offsets<R: Rng + ?Sized>(sys: &SystemConfig, enabled: bool, rng: &mut R) -> OffsetTrace {
    let (k, t) = (sys.num_ues, sys.num_packets);
    if !enabled {
        return OffsetTrace::zeros(k, t);
    }
    let max_to = sys.max_timing_offset_s();
    let mut trace = OffsetTrace::zeros(k, t);
    for ue in 0..k {
        for p in 0..t {
            trace.timing_s[ue][p] = rng.random_range(0.0..=max_to);
            trace.cfo_hz[ue][p] = rng.random_range(0.0..=MAX_CFO_HZ);
            trace.phase_rad[ue][p] = rng.random_range(0.0..2.0 * PI);
        }
    }
    trace
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeCsi {
    pub subcarriers: Vec<usize>,
    /// One `N_k x M` matrix per packet.
    pub packets: Vec<CMat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiTensor {
    pub ues: Vec<UeCsi>,
    /// True noise precision `1 / sigma^2`; `None` for noise-free data.
    pub noise_precision: Option<f64>,
}

impl CsiTensor {
    pub fn num_ues(&self) -> usize {
        self.ues.len()
    }

    pub fn num_packets(&self) -> usize {
        self.ues.first().map_or(0, |u| u.packets.len())
    }

    /// Mean `|Y_{n,m}|^2` over every `(k, t, n, m)`.
    pub fn mean_power(&self) -> f64 {
        let (mut acc, mut count) = (0.0, 0usize);
        for ue in &self.ues {
            for y in &ue.packets {
                acc += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
                count += y.len();
            }
        }
        if count == 0 {
            0.0
        } else {
            acc / count as f64
        }
    }

    pub fn check_dims(&self, num_antennas: usize) -> Result<()> {
        for (k, ue) in self.ues.iter().enumerate() {
            for (t, y) in ue.packets.iter().enumerate() {
                if y.shape() != (ue.subcarriers.len(), num_antennas) {
                    return Err(Error::Dimension(format!(
                        "UE {k} packet {t}: got {:?}, expected ({}, {num_antennas})",
                        y.shape(),
                        ue.subcarriers.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub offsets: bool,
    pub noise: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            offsets: true,
            noise: true,
        }
    }
}

/// Noise-free CSI for every UE and packet.
pub fn synthesize_clean(scn: &Scenario, off: &OffsetTrace, sys: &SystemConfig) -> CsiTensor {
    let m = sys.num_antennas;
    let ues = scn
        .ues
        .iter()
        .enumerate()
        .map(|(k, ue)| {
            let n_k = ue.subcarriers.len();
            let responses: Vec<Vec<Complex64>> = ue.paths.iter().map(|p| array_response(p.aoa_rad, m)).collect();
            let packets = (0..sys.num_packets)
                .map(|t| {
                    let slow = (t + 1) as f64 * sys.packet_interval_s;
                    let mut y = CMat::zeros(n_k, m);
                    for (path, a) in ue.paths.iter().zip(&responses) {
                        let psi = delay_steering(
                            path.delay_s + off.timing_s[k][t],
                            &ue.subcarriers,
                            sys.subcarrier_spacing_hz,
                        );
                        let phase = off.phase_rad[k][t] + 2.0 * PI * slow * (path.doppler_hz + off.cfo_hz[k][t]);
                        let coeff = path.gain * Complex64::from_polar(1.0, phase);
                        for (mi, am) in a.iter().enumerate() {
                            let s = coeff * am;
                            for (ni, p) in psi.iter().enumerate() {
                                y[(ni, mi)] += p * s;
                            }
                        }
                    }
                    y
                })
                .collect();
            UeCsi {
                subcarriers: ue.subcarriers.clone(),
                packets,
            }
        })
        .collect();
    CsiTensor {
        ues,
        noise_precision: None,
    }
}

/// Add circularly-symmetric Gaussian noise so that the mean per-element
/// signal power over the whole tensor divided by the noise variance equals
/// `snr_db`.
pub fn add_noise<R: Rng + ?Sized>(clean: &CsiTensor, snr_db: f64, rng: &mut R) -> CsiTensor {
    let signal_power = clean.mean_power();
    let variance = signal_power / 10f64.powf(snr_db / 10.0);
    let scale = (variance / 2.0).sqrt();
    let mut noisy = clean.clone();
    for ue in &mut noisy.ues {
        for y in &mut ue.packets {
            for z in y.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *z += Complex64::new(re * scale, im * scale);
            }
        }
    }
    noisy.noise_precision = (variance > 0.0).then(|| 1.0 / variance);
    noisy
}

pub fn synthesize_csi<R: Rng + ?Sized>(
    scn: &Scenario,
    off: &OffsetTrace,
    sys: &SystemConfig,
    noise: bool,
    rng: &mut R,
) -> CsiTensor {
    let clean = synthesize_clean(scn, off, sys);
    if noise {
        add_noise(&clean, sys.snr_db, rng)
    } else {
        clean
    }
}

/// Stack `[Y[1], ..., Y[T]]` horizontally into an `N x MT` matrix.
pub fn stack_packets(packets: &[CMat]) -> CMat {
    let rows = packets.first().map_or(0, |y| y.nrows());
    let total: usize = packets.iter().map(|y| y.ncols()).sum();
    let mut out = CMat::from_element(rows, total, ZERO);
    let mut col = 0;
    for y in packets {
        out.columns_mut(col, y.ncols()).copy_from(y);
        col += y.ncols();
    }
    out
}
