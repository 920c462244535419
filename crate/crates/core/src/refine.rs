//! Fixed-support reconstruction and per-path parameter estimation.
//!
//! Coarse taps from the support stage are refined on a local fine grid, the
//! per-packet tap coefficients are recovered by ridge LS against the reduced
//! dictionary, and Doppler, AoA and gain follow from conjugate products of
//! those coefficients. The LoS tap serves as the phase reference that removes
//! the per-packet CFO and phase offset.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::delay_periodogram;
use crate::error::{Error, Result};
use crate::linalg::{hpd_solve, matmul, CMat, Op, ZERO};
use crate::signal_model::{delay_steering, stack_packets, CsiTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    /// Fine-grid refinement factor `F`.
    pub factor: usize,
    /// Fine-grid half-span `I` in fine steps.
    pub span: usize,
    /// Ridge weight of the LS projection.
    pub ridge: f64,
    /// Taps below this fraction of the strongest tap energy get no
    /// Doppler/AoA.
    pub report_floor: f64,
    /// Reference-tap energy fraction below which Doppler is unreliable.
    pub reference_floor: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            factor: 4,
            span: 8,
            ridge: 1e-3,
            report_floor: 1e-4,
            reference_floor: 1e-12,
        }
    }
}

/// Fine candidates `coarse + i * dtau / F`, `i = -I..=I`, restricted to
/// `[0, tau_max]`.
pub fn fine_candidates(coarse: f64, dtau: f64, factor: usize, span: usize, tau_max: f64) -> Vec<f64> {
    let step = dtau / factor as f64;
    let span = span as i64;
    (-span..=span)
        .map(|i| coarse + i as f64 * step)
        .filter(|&t| (0.0..=tau_max).contains(&t))
        .collect()
}

/// Local periodogram argmax around each coarse tap. Ties keep the earliest
/// candidate.
pub fn refine_delays(
    y_stacked: &CMat,
    subcarriers: &[usize],
    spacing_hz: f64,
    coarse: &[f64],
    dtau: f64,
    tau_max: f64,
    cfg: &RefineConfig,
) -> Vec<f64> {
    coarse
        .iter()
        .map(|&c| {
            let cand = fine_candidates(c, dtau, cfg.factor, cfg.span, tau_max);
            if cand.is_empty() {
                return c;
            }
            let p = delay_periodogram(y_stacked, subcarriers, spacing_hz, &cand);
            let mut best = 0;
            for (i, v) in p.iter().enumerate() {
                if *v > p[best] {
                    best = i;
                }
            }
            cand[best]
        })
        .collect()
}

/// Reduced dictionary `B = [d(tau_1), ..., d(tau_L)]`.
pub fn reduced_dictionary(delays: &[f64], subcarriers: &[usize], spacing_hz: f64) -> CMat {
    let cols: Vec<Vec<Complex64>> = delays
        .iter()
        .map(|&t| delay_steering(t, subcarriers, spacing_hz))
        .collect();
    CMat::from_fn(subcarriers.len(), delays.len(), |n, l| cols[l][n])
}

/// Index of the tap nearest the geometric LoS delay; ties go to the larger
/// energy, then the lower index.
pub fn reference_tap(delays: &[f64], los_geom_delay: f64, energy: &[f64]) -> Option<usize> {
    (0..delays.len()).min_by(|&a, &b| {
        let da = (delays[a] - los_geom_delay).abs();
        let db = (delays[b] - los_geom_delay).abs();
        da.total_cmp(&db).then(energy[b].total_cmp(&energy[a])).then(a.cmp(&b))
    })
}

/// `X = (B^H B + lambda I)^-1 B^H Y`.
pub fn ls_project(y: &CMat, b: &CMat, lambda: f64) -> Result<CMat> {
    if y.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "Y has {} rows, B has {}",
            y.nrows(),
            b.nrows()
        )));
    }
    let mut gram = matmul(b, Op::H, b, Op::N);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = matmul(b, Op::H, y, Op::N);
    hpd_solve(gram, &rhs, "ridge LS normal equations")
}

/// Mean `|x|^2` of every tap over packets and antennas.
pub fn tap_energy(coeffs: &[CMat]) -> Vec<f64> {
    let Some(first) = coeffs.first() else {
        return Vec::new();
    };
    let count = (coeffs.len() * first.ncols()).max(1) as f64;
    let mut e = vec![0.0; first.nrows()];
    for x in coeffs {
        for (l, acc) in e.iter_mut().enumerate() {
            *acc += x.row(l).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    e.iter_mut().for_each(|v| *v /= count);
    e
}

/// LoS-referenced Doppler of every tap. The reference tap reports 0; every
/// tap reports `None` when the reference carries no energy.
pub fn estimate_doppler(
    coeffs: &[CMat],
    los_ref: usize,
    packet_interval_s: f64,
    reference_floor: f64,
) -> Vec<Option<f64>> {
    let taps = coeffs.first().map_or(0, |x| x.nrows());
    let energy = tap_energy(coeffs);
    let top = energy.iter().cloned().fold(0.0, f64::max);
    if los_ref >= taps || coeffs.len() < 2 || energy[los_ref].is_nan() || energy[los_ref] <= reference_floor * top {
        return vec![None; taps];
    }
    let adjacent = |l: usize, t: usize| -> Complex64 {
        coeffs[t]
            .row(l)
            .iter()
            .zip(coeffs[t + 1].row(l).iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    };
    (0..taps)
        .map(|l| {
            if l == los_ref {
                return Some(0.0);
            }
            let acc: Complex64 = (0..coeffs.len() - 1)
                .map(|t| adjacent(los_ref, t).conj() * adjacent(l, t))
                .sum();
            Some(acc.arg() / (2.0 * PI * packet_interval_s))
        })
        .collect()
}

/// `c = 1/(T(M-1)) sum_t sum_m x_m[t] x*_{m+1}[t]` for tap `l`.
pub fn adjacent_antenna_correlation(coeffs: &[CMat], l: usize) -> Complex64 {
    let m = coeffs.first().map_or(0, |x| x.ncols());
    if m < 2 {
        return ZERO;
    }
    let mut acc = ZERO;
    for x in coeffs {
        for j in 0..m - 1 {
            acc += x[(l, j)] * x[(l, j + 1)].conj();
        }
    }
    acc / (coeffs.len() * (m - 1)) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoaGain {
    pub sin_aoa: f64,
    pub aoa_rad: f64,
    pub gain_power: f64,
    /// `|sin|` exceeded 1 before clamping.
    pub clamped: bool,
}

/// AoA and gain of tap `l`. With `a(theta)_m = exp(j pi m sin theta)` the
/// product `x_m x*_{m+1}` has phase `-pi sin theta`.
pub fn estimate_aoa_gain(coeffs: &[CMat], l: usize) -> AoaGain {
    let c = adjacent_antenna_correlation(coeffs, l);
    let raw = -c.arg() / PI;
    let sin_aoa = raw.clamp(-1.0, 1.0);
    AoaGain {
        sin_aoa,
        aoa_rad: sin_aoa.asin(),
        gain_power: c.norm(),
        clamped: raw.abs() > 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub coarse_delay_s: f64,
    pub delay_s: f64,
    pub doppler_hz: Option<f64>,
    pub aoa_rad: Option<f64>,
    pub gain_power: f64,
    pub energy: f64,
    pub aoa_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeEstimate {
    pub paths: Vec<PathEstimate>,
    pub los_ref: Option<usize>,
    pub cluster: Option<usize>,
}

impl UeEstimate {
    pub fn delays(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.delay_s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub ues: Vec<UeEstimate>,
}

/// Geometry shared by every UE of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineGeometry {
    pub spacing_hz: f64,
    pub grid_spacing_s: f64,
    pub tau_max_s: f64,
    pub packet_interval_s: f64,
}

/// Full per-UE estimation from calibrated packets and coarse taps.
pub fn estimate_ue(
    packets: &[CMat],
    subcarriers: &[usize],
    coarse: &[f64],
    los_geom_delay: f64,
    geo: &RefineGeometry,
    cfg: &RefineConfig,
) -> Result<UeEstimate> {
    if coarse.is_empty() || packets.is_empty() {
        return Ok(UeEstimate {
            paths: Vec::new(),
            los_ref: None,
            cluster: None,
        });
    }
    let stacked = stack_packets(packets);
    let delays = refine_delays(
        &stacked,
        subcarriers,
        geo.spacing_hz,
        coarse,
        geo.grid_spacing_s,
        geo.tau_max_s,
        cfg,
    );
    let b = reduced_dictionary(&delays, subcarriers, geo.spacing_hz);
    let coeffs = packets
        .iter()
        .map(|y| ls_project(y, &b, cfg.ridge))
        .collect::<Result<Vec<_>>>()?;
    let energy = tap_energy(&coeffs);
    let los_ref = reference_tap(&delays, los_geom_delay, &energy);
    let doppler = match los_ref {
        Some(r) => estimate_doppler(&coeffs, r, geo.packet_interval_s, cfg.reference_floor),
        None => vec![None; delays.len()],
    };
    let top = energy.iter().cloned().fold(0.0, f64::max);
    let paths = (0..delays.len())
        .map(|l| {
            let ag = estimate_aoa_gain(&coeffs, l);
            let reportable = energy[l] >= cfg.report_floor * top && top > 0.0;
            PathEstimate {
                coarse_delay_s: coarse[l],
                delay_s: delays[l],
                doppler_hz: if reportable { doppler[l] } else { None },
                aoa_rad: reportable.then_some(ag.aoa_rad),
                gain_power: ag.gain_power,
                energy: energy[l],
                aoa_clamped: ag.clamped,
            }
        })
        .collect();
    Ok(UeEstimate {
        paths,
        los_ref,
        cluster: None,
    })
}

/// Estimation for every UE; `coarse[k]` are UE `k`'s support delays.
pub fn estimate_all(
    calibrated: &CsiTensor,
    coarse: &[Vec<f64>],
    los_geom_delays: &[f64],
    geo: &RefineGeometry,
    cfg: &RefineConfig,
) -> Result<EstimateSet> {
    let k = calibrated.num_ues();
    if coarse.len() != k || los_geom_delays.len() != k {
        return Err(Error::Dimension(format!(
            "{} supports and {} LoS delays for {k} UEs",
            coarse.len(),
            los_geom_delays.len()
        )));
    }
    let ues = calibrated
        .ues
        .par_iter()
        .zip(coarse.par_iter())
        .zip(los_geom_delays.par_iter())
        .map(|((ue, c), &geom)| estimate_ue(&ue.packets, &ue.subcarriers, c, geom, geo, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimateSet { ues })
}
