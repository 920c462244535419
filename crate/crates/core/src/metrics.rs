//! Path association and error metrics.
//!
//! Estimated paths are associated with true paths by greedy nearest-delay
//! matching inside a gate. A true path without a partner counts as a miss and
//! enters every error sum with estimate 0.

use serde::{Deserialize, Serialize};

use crate::refine::EstimateSet;
use crate::signal_model::Scenario;

/// Default matching gate in coarse grid bins.
pub const DEFAULT_GATE_BINS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(true index, estimate index, |delay difference|)`, sorted by true index.
    pub pairs: Vec<(usize, usize, f64)>,
    pub misses: Vec<usize>,
    pub false_alarms: Vec<usize>,
}

impl MatchResult {
    pub fn partner(&self, true_index: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == true_index).map(|p| p.1)
    }
}

/// Greedy one-to-one association in ascending delay distance. Equal
/// distances resolve by lower true index, then lower estimate index.
pub fn match_paths(truth: &[f64], estimate: &[f64], gate: f64) -> MatchResult {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in estimate.iter().enumerate() {
            let d = (t - e).abs();
            if d <= gate {
                cand.push((d, i, j));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; truth.len()];
    let mut used_e = vec![false; estimate.len()];
    let mut pairs = Vec::new();
    for (d, i, j) in cand {
        if !used_t[i] && !used_e[j] {
            used_t[i] = true;
            used_e[j] = true;
            pairs.push((i, j, d));
        }
    }
    pairs.sort_by_key(|p| p.0);
    MatchResult {
        pairs,
        misses: (0..truth.len()).filter(|&i| !used_t[i]).collect(),
        false_alarms: (0..estimate.len()).filter(|&j| !used_e[j]).collect(),
    }
}

/// True and estimated values of one quantity for one UE, aligned by true
/// path.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Paired {
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub los: Vec<bool>,
}

/// `(1/K) sum_k sum_l (x^ - x)^2 / sum_l x^2`, optionally skipping the LoS
/// path. UEs with a zero denominator are left out; the count of skipped UEs
/// is returned alongside. `NaN` when every UE is skipped.
pub fn nmse(ues: &[Paired], exclude_los: bool) -> (f64, usize) {
    let mut sum = 0.0;
    let mut used = 0usize;
    for ue in ues {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((x, xh), los) in ue.truth.iter().zip(&ue.estimate).zip(&ue.los) {
            if exclude_los && *los {
                continue;
            }
            num += (xh - x) * (xh - x);
            den += x * x;
        }
        if den > 0.0 {
            sum += num / den;
            used += 1;
        }
    }
    let skipped = ues.len() - used;
    if used == 0 {
        (f64::NAN, skipped)
    } else {
        (sum / used as f64, skipped)
    }
}

/// `(1/K) sum_k sqrt((1/L_k) sum_l (theta^ - theta)^2)` in degrees over all
/// paths, LoS included. Inputs are radians.
pub fn rmse_aoa(ues: &[Paired]) -> f64 {
    let per_ue: Vec<f64> = ues
        .iter()
        .filter(|u| !u.truth.is_empty())
        .map(|u| {
            let ms: f64 = u
                .truth
                .iter()
                .zip(&u.estimate)
                .map(|(x, xh)| (xh - x).powi(2))
                .sum::<f64>()
                / u.truth.len() as f64;
            ms.sqrt().to_degrees()
        })
        .collect();
    if per_ue.is_empty() {
        f64::NAN
    } else {
        per_ue.iter().sum::<f64>() / per_ue.len() as f64
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres with
/// potentials). Returns the column assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Fraction of UEs whose predicted label equals the true label under the best
/// one-to-one relabeling of predicted clusters.
pub fn clustering_accuracy(truth: &[usize], predicted: &[usize]) -> f64 {
    assert_eq!(truth.len(), predicted.len());
    if truth.is_empty() {
        return 1.0;
    }
    let s = truth.iter().max().unwrap() + 1;
    let c = predicted.iter().max().unwrap() + 1;
    let n = s.max(c);
    let mut conf = vec![vec![0.0; n]; n];
    for (&t, &p) in truth.iter().zip(predicted) {
        conf[t][p] += 1.0;
    }
    let cost: Vec<Vec<f64>> = conf.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
    let assign = hungarian(&cost);
    let hits: f64 = assign.iter().enumerate().map(|(t, &p)| conf[t][p]).sum();
    hits / truth.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nmse_delay: f64,
    pub nmse_doppler: f64,
    pub rmse_aoa_deg: f64,
    pub clustering_accuracy: Option<f64>,
    pub miss_rate: f64,
    pub false_alarm_rate: f64,
    /// UEs left out of an NMSE average for a zero denominator.
    pub skipped_ues: usize,
}

/// Per-UE paired values for delay, Doppler and AoA.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairedSet {
    pub delay: Vec<Paired>,
    pub doppler: Vec<Paired>,
    pub aoa: Vec<Paired>,
    pub misses: usize,
    pub false_alarms: usize,
    pub true_paths: usize,
    pub estimated_paths: usize,
}

/// Match every UE and align the three quantities by true path. Doppler or
/// AoA withheld by the estimator count as 0, like a miss.
pub fn pair_estimates(truth: &Scenario, est: &EstimateSet, gate: f64) -> PairedSet {
    let mut out = PairedSet::default();
    for (ue, e) in truth.ues.iter().zip(&est.ues) {
        let td: Vec<f64> = ue.paths.iter().map(|p| p.delay_s).collect();
        let m = match_paths(&td, &e.delays(), gate);
        out.misses += m.misses.len();
        out.false_alarms += m.false_alarms.len();
        out.true_paths += td.len();
        out.estimated_paths += e.paths.len();
        let mut d = Paired::default();
        let mut nu = Paired::default();
        let mut th = Paired::default();
        for (l, p) in ue.paths.iter().enumerate() {
            let hit = m.partner(l).map(|j| &e.paths[j]);
            d.truth.push(p.delay_s);
            d.estimate.push(hit.map_or(0.0, |h| h.delay_s));
            nu.truth.push(p.doppler_hz);
            nu.estimate.push(hit.and_then(|h| h.doppler_hz).unwrap_or(0.0));
            th.truth.push(p.aoa_rad);
            th.estimate.push(hit.and_then(|h| h.aoa_rad).unwrap_or(0.0));
            for v in [&mut d, &mut nu, &mut th] {
                v.los.push(p.is_los);
            }
        }
        out.delay.push(d);
        out.doppler.push(nu);
        out.aoa.push(th);
    }
    out
}

/// Score one method on one trial.
pub fn score(truth: &Scenario, est: &EstimateSet, gate: f64, predicted_labels: Option<&[usize]>) -> MetricsReport {
    let p = pair_estimates(truth, est, gate);
    let (nmse_delay, s1) = nmse(&p.delay, true);
    let (nmse_doppler, s2) = nmse(&p.doppler, true);
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    MetricsReport {
        nmse_delay,
        nmse_doppler,
        rmse_aoa_deg: rmse_aoa(&p.aoa),
        clustering_accuracy: predicted_labels.map(|l| clustering_accuracy(&truth.cluster_labels(), l)),
        miss_rate: ratio(p.misses, p.true_paths),
        false_alarm_rate: ratio(p.false_alarms, p.estimated_paths),
        skipped_ues: s1.max(s2),
    }
}
