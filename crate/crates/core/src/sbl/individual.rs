//! Per-UE SBL baseline: one dictionary, one precision per grid row and a
//! per-UE noise precision, run through the same update-(a) kernel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sbl::dictionary::{DelayBasis, Dictionary, StackedObservation};
use crate::sbl::kernel::{UeSystem, WMoments};
use crate::sbl::vi::{relative_change, unit_power_scale, ViConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualOutcome {
    pub row_energy: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub expected_beta: f64,
    /// Final `E[eta_g]` per grid row.
    pub precision: Vec<f64>,
    pub residual_history: Vec<f64>,
}

/// Run the baseline for one UE.
pub fn individual_sbl(system: &UeSystem, cfg: &ViConfig) -> Result<IndividualOutcome> {
    let g = system.grid_size();
    let mt = system.columns() as f64;
    let eta_shape = cfg.a0 + mt;
    let mut eta = vec![1.0; g];
    let mut beta = 1.0;
    let mut prev: Option<Vec<f64>> = None;
    let mut residual_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let d: Vec<f64> = eta.iter().map(|e| 1.0 / e).collect();
        let m: WMoments = system.solve(&d, None, beta)?;
        for (e, s) in eta.iter_mut().zip(m.second_moment_sh(system.columns())) {
            *e = eta_shape / (cfg.b0 + s);
        }
        let beta_shape = cfg.a0 + mt * system.rows() as f64;
        beta = beta_shape / (cfg.b0 + m.residual_sq + mt * m.trace_sigma_gram);
        if !m.is_finite() || !beta.is_finite() || eta.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite {
                iteration: iterations,
                what: "per-UE SBL posterior".into(),
            });
        }
        residual_history.push(m.residual_sq.sqrt());
        let energy = m.row_energy();
        if let Some(p) = &prev {
            converged = relative_change(&energy, p) < cfg.tol;
        }
        prev = Some(energy);
        if converged {
            break;
        }
    }
    Ok(IndividualOutcome {
        row_energy: prev.unwrap_or_default(),
        iterations,
        converged,
        expected_beta: beta,
        precision: eta,
        residual_history,
    })
}

/// Baseline for every UE; observations share one normalization factor.
pub fn individual_sbl_all(
    dicts: &[Dictionary],
    obs: &[StackedObservation],
    cfg: &ViConfig,
    basis: Option<&DelayBasis>,
) -> Result<Vec<IndividualOutcome>> {
    if dicts.len() != obs.len() {
        return Err(Error::Dimension(format!(
            "{} dictionaries for {} observations",
            dicts.len(),
            obs.len()
        )));
    }
    let scale = if cfg.normalize { unit_power_scale(obs) } else { 1.0 };
    dicts
        .par_iter()
        .zip(obs.par_iter())
        .map(|(d, o)| {
            let y = &o.y * num_complex::Complex64::new(scale, 0.0);
            individual_sbl(&UeSystem::new(d, &y, cfg.solver, basis)?, cfg)
        })
        .collect()
}
