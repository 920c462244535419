//! Mean-field VI for the shared/private cluster delay model.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::sbl::dictionary::{DelayBasis, Dictionary, StackedObservation};
use crate::sbl::individual::IndividualOutcome;
use crate::sbl::kernel::{Posterior, Solver, UeSystem, WMoments};

/// Hyperparameters and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct ViConfig {
    pub a0: f64,
    pub b0: f64,
    /// Symmetric Dirichlet concentration.
    pub alpha0: f64,
    /// Stop once `max_g |e_g - e_g'| / max_g e_g < tol` for every UE.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative half-width of the uniform jitter on the initial responsibilities.
    pub init_jitter: f64,
    pub init: InitMode,
    /// Half-width in bins of the window around the LoS reference bin that is
    /// zeroed in seeding profiles.
    pub seed_mask_bins: usize,
    /// Rescale all observations by one common factor to unit mean power.
    pub normalize: bool,
    pub solver: Solver,
}

impl Default for ViConfig {
    fn default() -> Self {
        Self {
            a0: 0.01,
            b0: 0.01,
            alpha0: 1.0,
            tol: 1e-4,
            max_iter: 200,
            init_jitter: 0.01,
            init: InitMode::Baseline,
            seed_mask_bins: 3,
            normalize: false,
            solver: Solver::Reduced,
        }
    }
}

/// How the cluster engine is started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `r = 1/C` with seeded jitter and unit Gamma expectations.
    Uniform,
    /// Responsibilities seeded from per-UE baseline delay profiles and Gamma
    /// expectations warm-started from the baseline precisions.
    Baseline,
}

/// Variational parameters. Index order is `[k][c]` for responsibilities,
/// `[c][g]` for shared precisions and `[k][g]` for private ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViState {
    pub mt: usize,
    pub grid_size: usize,
    pub resp: Vec<Vec<f64>>,
    /// Shape of `q(gamma_{g,c})`; identical for every `g`.
    pub gamma_shape: Vec<f64>,
    pub gamma_rate: Vec<Vec<f64>>,
    /// Shape of `q(eta_{k,g})`; identical for every `(k, g)`.
    pub eta_shape: f64,
    pub eta_rate: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub beta_shape: f64,
    pub beta_rate: f64,
    pub a0: f64,
    pub b0: f64,
    pub alpha0: f64,
}

impl ViState {
    /// Uniform responsibilities with seeded jitter, unit Gamma expectations.
    pub fn init(num_ues: usize, grid_size: usize, num_clusters: usize, mt: usize, cfg: &ViConfig, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::ViInit);
        let c = num_clusters.max(1);
        let resp = (0..num_ues)
            .map(|_| {
                let raw: Vec<f64> = (0..c)
                    .map(|_| (1.0 + cfg.init_jitter * rng.random_range(-1.0..=1.0)) / c as f64)
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            })
            .collect();
        Self {
            mt,
            grid_size,
            resp,
            gamma_shape: vec![1.0; c],
            gamma_rate: vec![vec![1.0; grid_size]; c],
            eta_shape: 1.0,
            eta_rate: vec![vec![1.0; grid_size]; num_ues],
            alpha: vec![cfg.alpha0; c],
            beta_shape: 1.0,
            beta_rate: 1.0,
            a0: cfg.a0,
            b0: cfg.b0,
            alpha0: cfg.alpha0,
        }
    }

    pub fn num_ues(&self) -> usize {
        self.resp.len()
    }

    /// Replace the responsibilities and set every Gamma factor from per-UE
    /// baseline results: `E[eta_k] = eta_k^base`, `E[gamma_c]` the
    /// responsibility-weighted harmonic mean of the member precisions and
    /// `E[beta]` the mean baseline noise precision.
    pub fn warm_start(&mut self, resp: Vec<Vec<f64>>, baseline: &[IndividualOutcome], rows: &[usize]) {
        let mt = self.mt as f64;
        self.resp = resp;
        self.eta_shape = self.a0 + mt;
        for (rate, b) in self.eta_rate.iter_mut().zip(baseline) {
            for (r, x) in rate.iter_mut().zip(&b.precision) {
                *r = self.eta_shape / x;
            }
        }
        for c in 0..self.num_clusters() {
            let mass: f64 = self.resp.iter().map(|r| r[c]).sum();
            self.gamma_shape[c] = self.a0 + mt * mass;
            for g in 0..self.grid_size {
                let acc: f64 = self
                    .resp
                    .iter()
                    .zip(baseline)
                    .map(|(r, b)| r[c] * mt / b.precision[g])
                    .sum();
                self.gamma_rate[c][g] = self.b0 + acc;
            }
            self.alpha[c] = self.alpha0 + mass;
        }
        self.beta_shape = self.a0 + mt * rows.iter().sum::<usize>() as f64;
        let mean_beta = baseline.iter().map(|b| b.expected_beta).sum::<f64>() / baseline.len().max(1) as f64;
        self.beta_rate = self.beta_shape / mean_beta;
    }

    pub fn num_clusters(&self) -> usize {
        self.alpha.len()
    }

    pub fn expected_beta(&self) -> f64 {
        self.beta_shape / self.beta_rate
    }

    pub fn expected_gamma(&self, c: usize, g: usize) -> f64 {
        self.gamma_shape[c] / self.gamma_rate[c][g]
    }

    pub fn expected_log_gamma(&self, c: usize, g: usize) -> f64 {
        digamma(self.gamma_shape[c]) - self.gamma_rate[c][g].ln()
    }

    pub fn expected_eta(&self, k: usize, g: usize) -> f64 {
        self.eta_shape / self.eta_rate[k][g]
    }

    /// `E[log pi_c] = psi(alpha_c) - psi(sum alpha)`.
    pub fn expected_log_pi(&self) -> Vec<f64> {
        let total = digamma(self.alpha.iter().sum());
        self.alpha.iter().map(|&a| digamma(a) - total).collect()
    }

    /// `gamma_bar_sh_{k,g} = sum_c r_{k,c} E[gamma_{g,c}]`.
    pub fn shared_precision(&self, k: usize) -> Vec<f64> {
        (0..self.grid_size)
            .map(|g| {
                self.resp[k]
                    .iter()
                    .enumerate()
                    .map(|(c, r)| r * self.expected_gamma(c, g))
                    .sum()
            })
            .collect()
    }

    pub fn private_precision(&self, k: usize) -> Vec<f64> {
        (0..self.grid_size).map(|g| self.expected_eta(k, g)).collect()
    }

    /// Hard assignments `argmax_c r_{k,c}` (lowest index on ties).
    pub fn assignments(&self) -> Vec<usize> {
        self.resp.iter().map(|r| argmax(r)).collect()
    }

    fn is_finite(&self) -> bool {
        let flat = |v: &Vec<Vec<f64>>| v.iter().flatten().all(|x| x.is_finite());
        flat(&self.resp)
            && flat(&self.gamma_rate)
            && flat(&self.eta_rate)
            && self.gamma_shape.iter().chain(&self.alpha).all(|x| x.is_finite())
            && self.beta_shape.is_finite()
            && self.beta_rate.is_finite()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Update (b).
pub fn update_q_gamma_eta(state: &mut ViState, moments: &[WMoments]) {
    let mt = state.mt as f64;
    let sh: Vec<Vec<f64>> = moments.iter().map(|m| m.second_moment_sh(state.mt)).collect();
    for c in 0..state.num_clusters() {
        let mass: f64 = state.resp.iter().map(|r| r[c]).sum();
        state.gamma_shape[c] = state.a0 + mt * mass;
        for g in 0..state.grid_size {
            let acc: f64 = state.resp.iter().zip(&sh).map(|(r, e)| r[c] * e[g]).sum();
            state.gamma_rate[c][g] = state.b0 + acc;
        }
    }
    state.eta_shape = state.a0 + mt;
    for (k, m) in moments.iter().enumerate() {
        for (g, e) in m.second_moment_pr(state.mt).into_iter().enumerate() {
            state.eta_rate[k][g] = state.b0 + e;
        }
    }
}

/// Update (c): responsibilities from the current Gamma posteriors, then
/// the Dirichlet concentrations from the new responsibilities.
pub fn update_q_z_pi(state: &mut ViState, moments: &[WMoments]) {
    let mt = state.mt as f64;
    let c_count = state.num_clusters();
    let log_pi = state.expected_log_pi();
    let log_gamma_sum: Vec<f64> = (0..c_count)
        .map(|c| (0..state.grid_size).map(|g| state.expected_log_gamma(c, g)).sum())
        .collect();
    for (k, m) in moments.iter().enumerate() {
        let sh = m.second_moment_sh(state.mt);
        let xi: Vec<f64> = (0..c_count)
            .map(|c| {
                let quad: f64 = (0..state.grid_size).map(|g| state.expected_gamma(c, g) * sh[g]).sum();
                log_pi[c] + mt * log_gamma_sum[c] - quad
            })
            .collect();
        state.resp[k] = softmax(&xi);
    }
    for c in 0..c_count {
        state.alpha[c] = state.alpha0 + state.resp.iter().map(|r| r[c]).sum::<f64>();
    }
}

/// Update (d).
pub fn update_q_beta(state: &mut ViState, moments: &[WMoments], rows: &[usize]) {
    let mt = state.mt as f64;
    state.beta_shape = state.a0 + mt * rows.iter().sum::<usize>() as f64;
    state.beta_rate = state.b0
        + moments
            .iter()
            .map(|m| m.residual_sq + mt * m.trace_sigma_gram)
            .sum::<f64>();
}

/// Numerically stable softmax.
pub fn softmax(xi: &[f64]) -> Vec<f64> {
    let top = xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xi.iter().map(|x| (x - top).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Result of a VI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViOutcome {
    pub state: ViState,
    pub iterations: usize,
    pub converged: bool,
    /// Per-UE support statistic `e_g` from the last update (a).
    pub row_energy: Vec<Vec<f64>>,
    /// `||Y~_k - Psi_tau U_k||_F` per iteration and UE.
    pub residual_history: Vec<Vec<f64>>,
    /// Factor the observations were multiplied by before inference.
    pub data_scale: f64,
}

/// The cluster SBL engine for one set of calibrated observations.
#[derive(Debug, Clone)]
pub struct ClusterSbl {
    systems: Vec<UeSystem>,
    rows: Vec<usize>,
    mt: usize,
    grid_size: usize,
    scale: f64,
    cfg: ViConfig,
}

impl ClusterSbl {
    pub fn new(
        dicts: &[Dictionary],
        obs: &[StackedObservation],
        cfg: &ViConfig,
        basis: Option<&DelayBasis>,
    ) -> Result<Self> {
        if dicts.len() != obs.len() || dicts.is_empty() {
            return Err(Error::Dimension(format!(
                "{} dictionaries for {} observations",
                dicts.len(),
                obs.len()
            )));
        }
        let mt = obs[0].columns();
        let grid_size = dicts[0].grid_size();
        if obs.iter().any(|o| o.columns() != mt) || dicts.iter().any(|d| d.grid_size() != grid_size) {
            return Err(Error::Dimension("all UEs need equal MT and G".into()));
        }
        let scale = if cfg.normalize { unit_power_scale(obs) } else { 1.0 };
        let systems = dicts
            .par_iter()
            .zip(obs.par_iter())
            .map(|(d, o)| UeSystem::new(d, &(&o.y * num_complex::Complex64::new(scale, 0.0)), cfg.solver, basis))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows: systems.iter().map(|s| s.rows()).collect(),
            systems,
            mt,
            grid_size,
            scale,
            cfg: *cfg,
        })
    }

    pub fn num_ues(&self) -> usize {
        self.systems.len()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn data_scale(&self) -> f64 {
        self.scale
    }

    pub fn init(&self, num_clusters: usize, seed: u64) -> ViState {
        ViState::init(self.num_ues(), self.grid_size, num_clusters, self.mt, &self.cfg, seed)
    }

    /// Update (a) for every UE, in parallel.
    pub fn update_q_w(&self, state: &ViState) -> Result<Vec<WMoments>> {
        let beta = state.expected_beta();
        (0..self.num_ues())
            .into_par_iter()
            .map(|k| {
                let d_sh = recip(&state.shared_precision(k));
                let d_pr = recip(&state.private_precision(k));
                self.systems[k].solve(&d_sh, Some(&d_pr), beta)
            })
            .collect()
    }

    /// Materialized `(U_k, Sigma_k)` at the current hyperparameters.
    pub fn posterior(&self, state: &ViState, k: usize) -> Result<Posterior> {
        let d_sh = recip(&state.shared_precision(k));
        let d_pr = recip(&state.private_precision(k));
        self.systems[k].posterior(&d_sh, Some(&d_pr), state.expected_beta())
    }

    /// One full sweep (a) -> (b) -> (c) -> (d).
    pub fn step(&self, state: &mut ViState) -> Result<Vec<WMoments>> {
        let moments = self.update_q_w(state)?;
        update_q_gamma_eta(state, &moments);
        update_q_z_pi(state, &moments);
        update_q_beta(state, &moments, &self.rows);
        Ok(moments)
    }

    /// Run from the uniform start.
    pub fn run(&self, num_clusters: usize, seed: u64) -> Result<ViOutcome> {
        self.run_from(self.init(num_clusters, seed))
    }

    /// Run from a start seeded by per-UE baseline results. `los_bins[k]` is
    /// the grid bin of UE `k`'s LoS reference, masked out of its profile.
    pub fn run_seeded(
        &self,
        num_clusters: usize,
        baseline: &[IndividualOutcome],
        los_bins: &[Option<usize>],
    ) -> Result<ViOutcome> {
        if baseline.len() != self.num_ues() || los_bins.len() != self.num_ues() {
            return Err(Error::Dimension(format!(
                "{} baseline results and {} LoS bins for {} UEs",
                baseline.len(),
                los_bins.len(),
                self.num_ues()
            )));
        }
        let profiles: Vec<Vec<f64>> = baseline
            .iter()
            .zip(los_bins)
            .map(|(b, &los)| seeding_profile(&b.row_energy, los, self.cfg.seed_mask_bins))
            .collect();
        let mut state = self.init(num_clusters, 0);
        state.warm_start(seed_responsibilities(&profiles, num_clusters), baseline, &self.rows);
        self.run_from(state)
    }

    /// Iterate from a prepared state, e.g. one with seeded responsibilities.
    pub fn run_from(&self, mut state: ViState) -> Result<ViOutcome> {
        let mut prev: Option<Vec<Vec<f64>>> = None;
        let mut residual_history = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.cfg.max_iter {
            iterations += 1;
            let moments = self.step(&mut state)?;
            if !moments.iter().all(WMoments::is_finite) {
                return Err(Error::NonFinite {
                    iteration: iterations,
                    what: "q(W) moments".into(),
                });
            }
            if !state.is_finite() {
                return Err(Error::NonFinite {
                    iteration: iterations,
                    what: "Gamma/Dirichlet/categorical parameters".into(),
                });
            }
            residual_history.push(moments.iter().map(|m| m.residual_sq.sqrt()).collect());
            let energy: Vec<Vec<f64>> = moments.iter().map(WMoments::row_energy).collect();
            if let Some(p) = &prev {
                converged = energy.iter().zip(p).all(|(e, o)| relative_change(e, o) < self.cfg.tol);
            }
            prev = Some(energy);
            if converged {
                break;
            }
        }
        Ok(ViOutcome {
            state,
            iterations,
            converged,
            row_energy: prev.unwrap_or_default(),
            residual_history,
            data_scale: self.scale,
        })
    }
}

/// Row amplitudes `sqrt(e_g)` with the bins within `mask` of `los` zeroed.
pub fn seeding_profile(energy: &[f64], los: Option<usize>, mask: usize) -> Vec<f64> {
    let mut p: Vec<f64> = energy.iter().map(|e| e.max(0.0).sqrt()).collect();
    if let Some(l) = los {
        let hi = (l + mask + 1).min(p.len());
        for v in &mut p[l.saturating_sub(mask).min(hi)..hi] {
            *v = 0.0;
        }
    }
    p
}

/// Hard responsibilities from per-UE profiles by spherical k-means.
///
/// Profiles are box-smoothed over three bins, normalized and compared by
/// cosine distance. Centres start farthest-first from the UE farthest from
/// the mean profile, then Lloyd iterations run until assignments settle.
/// With more clusters than UEs the surplus clusters stay empty.
pub fn seed_responsibilities(profiles: &[Vec<f64>], num_clusters: usize) -> Vec<Vec<f64>> {
    const LLOYD_ITERS: usize = 50;
    let c = num_clusters.max(1);
    let k = profiles.len();
    if k == 0 {
        return Vec::new();
    }
    let unit: Vec<Vec<f64>> = profiles.iter().map(|p| normalized(&smooth(p))).collect();
    let dim = unit[0].len();
    let dist = |a: &[f64], b: &[f64]| 1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mean = normalized(&(0..dim).map(|g| unit.iter().map(|u| u[g]).sum()).collect::<Vec<f64>>());
    let first = argmax(&unit.iter().map(|u| dist(u, &mean)).collect::<Vec<_>>());
    let mut centres = vec![unit[first].clone()];
    let mut near: Vec<f64> = unit.iter().map(|u| dist(u, &centres[0])).collect();
    while centres.len() < c.min(k) {
        let cand = argmax(&near);
        centres.push(unit[cand].clone());
        for (n, u) in near.iter_mut().zip(&unit) {
            *n = n.min(dist(u, &unit[cand]));
        }
    }
    let nearest = |u: &[f64], centres: &[Vec<f64>]| argmax(&centres.iter().map(|m| -dist(u, m)).collect::<Vec<_>>());
    let mut labels: Vec<usize> = unit.iter().map(|u| nearest(u, &centres)).collect();
    for _ in 0..LLOYD_ITERS {
        for (j, m) in centres.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = unit
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == j)
                .map(|(u, _)| u)
                .collect();
            if !members.is_empty() {
                *m = normalized(
                    &(0..dim)
                        .map(|g| members.iter().map(|u| u[g]).sum())
                        .collect::<Vec<f64>>(),
                );
            }
        }
        let next: Vec<usize> = unit.iter().map(|u| nearest(u, &centres)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
        .into_iter()
        .map(|l| (0..c).map(|j| if j == l { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn smooth(p: &[f64]) -> Vec<f64> {
    (0..p.len())
        .map(|g| p[g.saturating_sub(1)..(g + 2).min(p.len())].iter().sum())
        .collect()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

/// `max_g |e_g - o_g| / max_g e_g`.
pub fn relative_change(e: &[f64], o: &[f64]) -> f64 {
    let top = e.iter().cloned().fold(0.0, f64::max);
    let diff = e.iter().zip(o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if top > 0.0 {
        diff / top
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn recip(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| 1.0 / x).collect()
}

/// Common factor bringing the mean `|Y|^2` over all UEs to one.
pub fn unit_power_scale(obs: &[StackedObservation]) -> f64 {
    let (mut acc, mut count) = (0.0, 0usize);
    for o in obs {
        acc += o.y.iter().map(|z| z.norm_sqr()).sum::<f64>();
        count += o.y.len();
    }
    if acc > 0.0 && count > 0 {
        (count as f64 / acc).sqrt()
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_reference_values() {
        let r = softmax(&[0.0, 3f64.ln()]);
        assert!((r[0] - 0.25).abs() < 1e-15 && (r[1] - 0.75).abs() < 1e-15);
        let r = softmax(&[1000.0, 1000.0]);
        assert_eq!(r, vec![0.5, 0.5]);
        assert_eq!(softmax(&[-3.0]), vec![1.0]);
    }

    #[test]
    fn init_is_near_uniform_and_seeded() {
        let cfg = ViConfig::default();
        let a = ViState::init(5, 10, 3, 4, &cfg, 7);
        let b = ViState::init(5, 10, 3, 4, &cfg, 7);
        assert_eq!(a, b);
        for r in &a.resp {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.iter().all(|v| (v - 1.0 / 3.0).abs() < 0.01));
        }
        assert_eq!(a.expected_beta(), 1.0);
        assert_eq!(a.expected_gamma(2, 9), 1.0);
        assert_eq!(a.expected_eta(4, 0), 1.0);
        assert_ne!(a.resp, ViState::init(5, 10, 3, 4, &cfg, 8).resp);
    }

    fn moments(sh: Vec<f64>, pr: Vec<f64>) -> WMoments {
        let g = sh.len();
        WMoments {
            mean_energy_sh: sh,
            mean_energy_pr: pr,
            sigma_diag_sh: vec![0.0; g],
            sigma_diag_pr: vec![0.0; g],
            trace_sigma_gram: 0.0,
            residual_sq: 0.0,
        }
    }

    #[test]
    fn gamma_update_reference_value() {
        let cfg = ViConfig::default();
        let mut s = ViState::init(1, 1, 1, 4, &cfg, 0);
        update_q_gamma_eta(&mut s, &[moments(vec![2.0], vec![0.0])]);
        assert!((s.expected_gamma(0, 0) - 4.01 / 2.01).abs() < 1e-12);
        assert!((s.expected_eta(0, 0) - 4.01 / 0.01).abs() < 1e-9);
    }

    #[test]
    fn single_cluster_responsibility_is_one() {
        let cfg = ViConfig::default();
        let mut s = ViState::init(3, 2, 1, 2, &cfg, 0);
        let m: Vec<_> = (0..3).map(|k| moments(vec![k as f64, 1.0], vec![0.5, 0.5])).collect();
        update_q_gamma_eta(&mut s, &m);
        update_q_z_pi(&mut s, &m);
        assert!(s.resp.iter().all(|r| r == &vec![1.0]));
        assert_eq!(s.alpha, vec![4.0]);
    }

    #[test]
    fn symmetric_clusters_split_evenly() {
        let cfg = ViConfig::default();
        let mut s = ViState::init(2, 3, 2, 2, &cfg, 0);
        s.resp = vec![vec![0.5, 0.5]; 2];
        let m = vec![moments(vec![1.0, 2.0, 0.1], vec![0.0; 3]); 2];
        update_q_gamma_eta(&mut s, &m);
        update_q_z_pi(&mut s, &m);
        for r in &s.resp {
            assert!((r[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn beta_update_limits() {
        let cfg = ViConfig::default();
        let mut s = ViState::init(1, 2, 1, 4, &cfg, 0);
        update_q_beta(&mut s, &[moments(vec![0.0; 2], vec![0.0; 2])], &[8]);
        assert!((s.expected_beta() - (0.01 + 32.0) / 0.01).abs() < 1e-9);
        let mut m = moments(vec![0.0; 2], vec![0.0; 2]);
        m.residual_sq = 5.0;
        m.trace_sigma_gram = 0.25;
        update_q_beta(&mut s, &[m], &[8]);
        assert!((s.beta_rate - (0.01 + 5.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn relative_change_edges() {
        assert_eq!(relative_change(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_change(&[2.0, 1.0], &[1.0, 1.0]), 0.5);
        assert!(relative_change(&[0.0], &[1.0]).is_infinite());
    }

    fn bump(g: usize, centre: usize) -> Vec<f64> {
        (0..g)
            .map(|i| if i.abs_diff(centre) <= 1 { 1.0 } else { 0.01 })
            .collect()
    }

    fn labels(resp: &[Vec<f64>]) -> Vec<usize> {
        resp.iter().map(|r| argmax(r)).collect()
    }

    #[test]
    fn seeding_separates_disjoint_profiles() {
        let g = 40;
        let add = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(x, y)| x + y).collect::<Vec<_>>();
        let profiles = vec![
            add(bump(g, 5), bump(g, 12)),
            add(bump(g, 25), bump(g, 33)),
            add(bump(g, 5), bump(g, 13)),
            add(bump(g, 26), bump(g, 33)),
            add(bump(g, 5), bump(g, 12)),
        ];
        let r = seed_responsibilities(&profiles, 2);
        let l = labels(&r);
        assert_eq!(l[0], l[2]);
        assert_eq!(l[0], l[4]);
        assert_eq!(l[1], l[3]);
        assert_ne!(l[0], l[1]);
        assert!(r.iter().flatten().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn seeding_is_relabel_free_of_input_order_for_clear_groups() {
        let g = 30;
        let p = vec![bump(g, 4), bump(g, 20), bump(g, 4), bump(g, 20)];
        let a = labels(&seed_responsibilities(&p, 2));
        let rev: Vec<_> = p.iter().rev().cloned().collect();
        let mut b = labels(&seed_responsibilities(&rev, 2));
        b.reverse();
        assert_eq!(a[0] == a[2], b[0] == b[2]);
        assert_eq!(a[0] == a[1], b[0] == b[1]);
    }

    #[test]
    fn surplus_clusters_stay_empty() {
        let p = vec![bump(10, 2), bump(10, 7)];
        let r = seed_responsibilities(&p, 5);
        assert_eq!(r[0].len(), 5);
        let used: std::collections::BTreeSet<_> = labels(&r).into_iter().collect();
        assert_eq!(used.len(), 2);
    }

    #[test]
    fn seeding_profile_masks_los_window() {
        let e = vec![4.0; 10];
        let p = seeding_profile(&e, Some(1), 2);
        assert_eq!(p, vec![0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(seeding_profile(&e, Some(9), 1)[7], 2.0);
        assert_eq!(seeding_profile(&e, None, 3), vec![2.0; 10]);
    }

    #[test]
    fn warm_start_matches_baseline_means() {
        let cfg = ViConfig::default();
        let mut s = ViState::init(2, 2, 2, 4, &cfg, 0);
        let base = |p: Vec<f64>, b: f64| IndividualOutcome {
            row_energy: vec![0.0; 2],
            iterations: 1,
            converged: true,
            expected_beta: b,
            precision: p,
            residual_history: Vec::new(),
        };
        let baseline = vec![base(vec![2.0, 8.0], 3.0), base(vec![4.0, 8.0], 5.0)];
        s.warm_start(vec![vec![1.0, 0.0], vec![1.0, 0.0]], &baseline, &[3, 3]);
        assert!((s.expected_eta(0, 1) - 8.0).abs() < 1e-12);
        assert!((s.expected_eta(1, 0) - 4.0).abs() < 1e-12);
        // Harmonic mean of 2 and 4 up to the b0, a0 offsets.
        let want = (0.01 + 8.0) / (0.01 + 4.0 / 2.0 + 4.0 / 4.0);
        assert!((s.expected_gamma(0, 0) - want).abs() < 1e-12);
        assert!((s.expected_beta() - 4.0).abs() < 1e-12);
        assert_eq!(s.alpha, vec![3.0, 1.0]);
    }
}
