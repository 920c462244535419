//! LoS-referenced timing-offset calibration.
//!
//! For every packet the dominant peak of the delay periodogram near the
//! known geometric LoS delay is located on a fine grid, refined by a
//! three-point parabola, and the resulting offset is removed by a per-subcarrier
//! phase ramp.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::signal_model::{delay_steering, CsiTensor, UeCsi};

/// Search window and step for the per-packet TO search.
///
/// The window is `[tau_geom - below/B, tau_geom + above/B]` with step
/// `1 / (step_divisor * N_k * df)`, where `B` is the nominal bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub below_over_b: f64,
    pub above_over_b: f64,
    pub step_divisor: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            below_over_b: 5.0,
            above_over_b: 25.0,
            step_divisor: 4.0,
        }
    }
}

/// One packet's calibration outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToEstimate {
    pub observed_los_delay_s: f64,
    pub to_estimate_s: f64,
    /// Peak fell on the first or last grid point; no sub-bin refinement.
    pub boundary_peak: bool,
}

/// Per-UE, per-packet calibration results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub estimates: Vec<Vec<ToEstimate>>,
}

impl CalibrationReport {
    pub fn boundary_count(&self) -> usize {
        self.estimates.iter().flatten().filter(|e| e.boundary_peak).count()
    }
}

/// `p(tau_g) = (1/M) || d(tau_g)^H Y ||^2` on the given delay grid.
pub fn delay_periodogram(y: &CMat, subcarriers: &[usize], spacing_hz: f64, grid: &[f64]) -> Vec<f64> {
    let m = y.ncols().max(1) as f64;
    grid.iter()
        .map(|&tau| {
            let d = delay_steering(tau, subcarriers, spacing_hz);
            let mut power = 0.0;
            for col in y.column_iter() {
                let proj: Complex64 = d.iter().zip(col.iter()).map(|(a, b)| a.conj() * b).sum();
                power += proj.norm_sqr();
            }
            power / m
        })
        .collect()
}

/// Vertex offset of the parabola through three equally spaced samples.
///
/// Returns 0 for a flat or symmetric triple; the result is clamped to
/// half a grid step.
pub fn parabolic_refine(p_left: f64, p_peak: f64, p_right: f64, spacing: f64) -> f64 {
    let denom = p_left - 2.0 * p_peak + p_right;
    let scale = p_left.abs().max(p_peak.abs()).max(p_right.abs());
    if denom.abs() <= 1e-12 * scale || (p_left - p_right).abs() <= 4.0 * f64::EPSILON * scale {
        return 0.0;
    }
    let offset = spacing * 0.5 * (p_left - p_right) / denom;
    offset.clamp(-0.5 * spacing, 0.5 * spacing)
}

/// Calibration grid offsets relative to `tau_geom`, as integer multiples of
/// the step. Always contains 0 and at least one point on either side.
pub fn calibration_offsets(
    num_subcarriers: usize,
    spacing_hz: f64,
    bandwidth_hz: f64,
    cfg: &CalibrationConfig,
) -> (f64, i64, i64) {
    let step = 1.0 / (cfg.step_divisor * num_subcarriers as f64 * spacing_hz);
    let lo = ((cfg.below_over_b / bandwidth_hz) / step).ceil().max(1.0) as i64;
    let hi = ((cfg.above_over_b / bandwidth_hz) / step).ceil().max(1.0) as i64;
    (step, lo, hi)
}

/// Estimate one packet's timing offset from the LoS peak.
pub fn estimate_to(
    y: &CMat,
    subcarriers: &[usize],
    spacing_hz: f64,
    tau_geom: f64,
    bandwidth_hz: f64,
    cfg: &CalibrationConfig,
) -> ToEstimate {
    let (step, lo, hi) = calibration_offsets(subcarriers.len(), spacing_hz, bandwidth_hz, cfg);
    let offsets: Vec<f64> = (-lo..=hi).map(|i| i as f64 * step).collect();
    let grid: Vec<f64> = offsets.iter().map(|o| tau_geom + o).collect();
    let p = delay_periodogram(y, subcarriers, spacing_hz, &grid);
    let peak = argmax(&p);
    let boundary = peak == 0 || peak + 1 == p.len();
    let fine = if boundary {
        0.0
    } else {
        parabolic_refine(p[peak - 1], p[peak], p[peak + 1], step)
    };
    let observed = tau_geom + (offsets[peak] + fine);
    ToEstimate {
        observed_los_delay_s: observed,
        to_estimate_s: observed - tau_geom,
        boundary_peak: boundary,
    }
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `diag(exp(+j 2 pi f_n dtau)) * Y`.
pub fn compensate_to(y: &CMat, to_estimate: f64, subcarriers: &[usize], spacing_hz: f64) -> CMat {
    let mut out = y.clone();
    for (row, &n) in subcarriers.iter().enumerate() {
        let phi = Complex64::from_polar(1.0, 2.0 * PI * n as f64 * spacing_hz * to_estimate);
        for z in out.row_mut(row).iter_mut() {
            *z *= phi;
        }
    }
    out
}

/// Calibrate every packet of every UE.
pub fn calibrate(
    csi: &CsiTensor,
    los_geom_delays: &[f64],
    spacing_hz: f64,
    bandwidth_hz: f64,
    cfg: &CalibrationConfig,
) -> Result<(CsiTensor, CalibrationReport)> {
    if los_geom_delays.len() != csi.num_ues() {
        return Err(Error::Dimension(format!(
            "{} LoS delays for {} UEs",
            los_geom_delays.len(),
            csi.num_ues()
        )));
    }
    let mut ues = Vec::with_capacity(csi.num_ues());
    let mut estimates = Vec::with_capacity(csi.num_ues());
    for (ue, &geom) in csi.ues.iter().zip(los_geom_delays) {
        let mut packets = Vec::with_capacity(ue.packets.len());
        let mut per_ue = Vec::with_capacity(ue.packets.len());
        for y in &ue.packets {
            let est = estimate_to(y, &ue.subcarriers, spacing_hz, geom, bandwidth_hz, cfg);
            packets.push(compensate_to(y, est.to_estimate_s, &ue.subcarriers, spacing_hz));
            per_ue.push(est);
        }
        ues.push(UeCsi {
            subcarriers: ue.subcarriers.clone(),
            packets,
        });
        estimates.push(per_ue);
    }
    Ok((
        CsiTensor {
            ues,
            noise_precision: csi.noise_precision,
        },
        CalibrationReport { estimates },
    ))
}
