//! One trial end to end: synthesize, calibrate, recover supports, refine and
//! score.

use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::calibration::{calibrate, CalibrationConfig};
use crate::container::{CalibratedTrial, SupportReport, TrialData};
use crate::error::Result;
use crate::experiment::spec::{hex, Method, PipelineOptions};
use crate::metrics::{score, MetricsReport};
use crate::refine::{estimate_all, EstimateSet, RefineConfig, RefineGeometry};
use crate::rng::{stream_rng, trial_seed, Stream};
use crate::sbl::{
    extract_support, individual_sbl_all, ClusterSbl, DelayBasis, Dictionary, IndividualOutcome, InitMode,
    SelectionPolicy, StackedObservation, ViConfig,
};
use crate::signal_model::{sample_offsets, sample_scenario, synthesize_csi, CsiTensor};
use crate::{SparsityConfig, SystemConfig};

/// Synthesize one trial. The scenario comes from the trial seed, or from the
/// base seed when `fixed_scenario` is set.
pub fn synthesize_trial(
    system: &SystemConfig,
    sparsity: &SparsityConfig,
    opts: &PipelineOptions,
    base_seed: u64,
    trial: u64,
) -> Result<TrialData> {
    let seed = trial_seed(base_seed, trial);
    let scenario_seed = if opts.fixed_scenario { base_seed } else { seed };
    let mut system = system.clone();
    system.rng_seed = seed;
    let scenario = sample_scenario(&system, sparsity, &mut stream_rng(scenario_seed, Stream::Scenario))?;
    let offsets = sample_offsets(&system, opts.offsets, &mut stream_rng(seed, Stream::Offsets));
    let csi = synthesize_csi(
        &scenario,
        &offsets,
        &system,
        opts.noise,
        &mut stream_rng(seed, Stream::Noise),
    );
    Ok(TrialData {
        seed,
        system,
        sparsity: sparsity.clone(),
        scenario,
        offsets,
        csi,
    })
}

pub fn calibrate_trial(data: TrialData, cfg: &CalibrationConfig) -> Result<CalibratedTrial> {
    let (calibrated, report) = calibrate(
        &data.csi,
        &data.scenario.los_geom_delays(),
        data.system.subcarrier_spacing_hz,
        data.system.bandwidth_hz,
        cfg,
    )?;
    Ok(CalibratedTrial {
        trial: data,
        calibrated,
        report,
    })
}

/// SHA-256 over the little-endian bytes of every CSI entry, first 16 bytes
/// in hex.
pub fn csi_hash(csi: &CsiTensor) -> String {
    let mut h = Sha256::new();
    for ue in &csi.ues {
        for y in &ue.packets {
            for z in y.iter() {
                h.update(z.re.to_le_bytes());
                h.update(z.im.to_le_bytes());
            }
        }
    }
    hex(&h.finalize()[..16])
}

/// Stage settings shared by both methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConfig {
    pub vi: ViConfig,
    pub refine: RefineConfig,
    pub options: PipelineOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub support: SupportReport,
    pub estimates: EstimateSet,
    pub metrics: MetricsReport,
    pub wall_time_s: f64,
}

struct Prepared {
    dicts: Vec<Dictionary>,
    obs: Vec<StackedObservation>,
    basis: Option<std::sync::Arc<DelayBasis>>,
}

fn prepare(cal: &CalibratedTrial) -> Prepared {
    let sys = &cal.trial.system;
    let grid = cal.trial.sparsity.delay_grid();
    let dicts: Vec<Dictionary> = cal
        .calibrated
        .ues
        .iter()
        .map(|u| Dictionary::new(&grid, &u.subcarriers, sys.subcarrier_spacing_hz))
        .collect();
    let obs = cal
        .calibrated
        .ues
        .iter()
        .map(|u| StackedObservation::from_packets(&u.packets))
        .collect();
    let nk = cal.trial.sparsity.per_ue_subcarriers;
    let basis = DelayBasis::contiguous_cached(&grid, nk, sys.subcarrier_spacing_hz);
    let basis = dicts.iter().all(|d| basis.applies_to(d)).then_some(basis);
    Prepared { dicts, obs, basis }
}

fn policy(opts: &PipelineOptions, true_paths: usize) -> SelectionPolicy {
    if opts.oracle_count {
        SelectionPolicy::OracleCount { count: true_paths }
    } else {
        SelectionPolicy::Threshold { rho: opts.threshold }
    }
}

#[allow(clippy::too_many_arguments)]
fn support_report(
    method: Method,
    cal: &CalibratedTrial,
    row_energy: Vec<Vec<f64>>,
    responsibilities: Vec<Vec<f64>>,
    assignments: Vec<usize>,
    iterations: usize,
    converged: bool,
    opts: &PipelineOptions,
) -> SupportReport {
    let grid = cal.trial.sparsity.delay_grid();
    let supports: Vec<_> = row_energy
        .iter()
        .zip(&cal.trial.scenario.ues)
        .map(|(e, ue)| extract_support(e, &grid, policy(opts, ue.num_paths())))
        .collect();
    SupportReport {
        method: method.as_str().to_string(),
        iterations,
        converged,
        indices: supports.iter().map(|s| s.indices.clone()).collect(),
        delays_s: supports.iter().map(|s| s.delays_s.clone()).collect(),
        row_energy,
        responsibilities,
        assignments,
    }
}

/// Grid bin nearest each UE's geometric LoS delay.
pub fn los_bins(cal: &CalibratedTrial) -> Vec<Option<usize>> {
    let dt = cal.trial.sparsity.grid_spacing_s();
    let last = cal.trial.sparsity.grid_size - 1;
    cal.trial
        .scenario
        .los_geom_delays()
        .iter()
        .map(|t| Some(((t / dt).round() as usize).min(last)))
        .collect()
}

/// Supports for the requested methods. The per-UE baseline runs once and
/// also seeds the cluster engine.
pub fn recover_supports(
    cal: &CalibratedTrial,
    methods: &[Method],
    stage: &StageConfig,
) -> Result<Vec<(SupportReport, f64)>> {
    let p = prepare(cal);
    let basis = p.basis.as_deref();
    let needs_baseline = methods.contains(&Method::IndividualSbl) || stage.vi.init == InitMode::Baseline;
    let t0 = Instant::now();
    let baseline: Vec<IndividualOutcome> = if needs_baseline {
        individual_sbl_all(&p.dicts, &p.obs, &stage.vi, basis)?
    } else {
        Vec::new()
    };
    let baseline_time = t0.elapsed().as_secs_f64();
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        match m {
            Method::IndividualSbl => {
                let rep = support_report(
                    m,
                    cal,
                    baseline.iter().map(|b| b.row_energy.clone()).collect(),
                    Vec::new(),
                    Vec::new(),
                    baseline.iter().map(|b| b.iterations).max().unwrap_or(0),
                    baseline.iter().all(|b| b.converged),
                    &stage.options,
                );
                out.push((rep, baseline_time));
            }
            Method::ClusterSbl => {
                let t1 = Instant::now();
                let engine = ClusterSbl::new(&p.dicts, &p.obs, &stage.vi, basis)?;
                let c = cal.trial.sparsity.candidate_clusters();
                let run = match stage.vi.init {
                    InitMode::Baseline => engine.run_seeded(c, &baseline, &los_bins(cal))?,
                    InitMode::Uniform => engine.run(c, cal.trial.seed)?,
                };
                let seeding = if stage.vi.init == InitMode::Baseline {
                    baseline_time
                } else {
                    0.0
                };
                let rep = support_report(
                    m,
                    cal,
                    run.row_energy.clone(),
                    run.state.resp.clone(),
                    run.state.assignments(),
                    run.iterations,
                    run.converged,
                    &stage.options,
                );
                out.push((rep, seeding + t1.elapsed().as_secs_f64()));
            }
        }
    }
    Ok(out)
}

pub fn refine_geometry(system: &SystemConfig, sparsity: &SparsityConfig) -> RefineGeometry {
    RefineGeometry {
        spacing_hz: system.subcarrier_spacing_hz,
        grid_spacing_s: sparsity.grid_spacing_s(),
        tau_max_s: sparsity.tau_max_s,
        packet_interval_s: system.packet_interval_s,
    }
}

/// Delay/Doppler/AoA estimates from a support report.
pub fn estimate_from_support(
    cal: &CalibratedTrial,
    support: &SupportReport,
    cfg: &RefineConfig,
) -> Result<EstimateSet> {
    let geo = refine_geometry(&cal.trial.system, &cal.trial.sparsity);
    let mut est = estimate_all(
        &cal.calibrated,
        &support.delays_s,
        &cal.trial.scenario.los_geom_delays(),
        &geo,
        cfg,
    )?;
    for (ue, &c) in est.ues.iter_mut().zip(&support.assignments) {
        ue.cluster = Some(c);
    }
    Ok(est)
}

/// Everything after synthesis for every requested method.
pub fn run_methods(cal: &CalibratedTrial, methods: &[Method], stage: &StageConfig) -> Result<Vec<MethodResult>> {
    let gate = stage.options.gate_bins * cal.trial.sparsity.grid_spacing_s();
    recover_supports(cal, methods, stage)?
        .into_iter()
        .zip(methods)
        .map(|((support, t), &method)| {
            let t0 = Instant::now();
            let estimates = estimate_from_support(cal, &support, &stage.refine)?;
            let labels = (method == Method::ClusterSbl).then_some(support.assignments.as_slice());
            let metrics = score(&cal.trial.scenario, &estimates, gate, labels);
            Ok(MethodResult {
                method,
                support,
                estimates,
                metrics,
                wall_time_s: t + t0.elapsed().as_secs_f64(),
            })
        })
        .collect()
}
