//! Delay-support selection from per-grid row energies.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SelectionPolicy {
    /// Local maxima with `e_g >= rho * max e`.
    Threshold { rho: f64 },
    /// The `count` strongest separated peaks.
    OracleCount { count: usize },
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self::Threshold { rho: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEstimate {
    /// Active grid indices, ascending.
    pub indices: Vec<usize>,
    pub delays_s: Vec<f64>,
    /// No local maximum qualified; the support fell back to the argmax.
    pub degenerate: bool,
    pub cluster: Option<usize>,
}

impl SupportEstimate {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Minimum index distance between two selected peaks.
pub const MIN_SEPARATION_BINS: usize = 2;

/// Select the support from `energy` over `grid`.
///
/// Local maxima are entries at least as large as both neighbours and
/// strictly larger than one of them. A single-bin grid has no maxima. Peaks are taken in descending energy
/// (lower index first on ties) and kept only if at least
/// [`MIN_SEPARATION_BINS`] away from every peak already kept. In oracle-count
/// mode, when fewer than `count` separated maxima exist, the remaining slots
/// are filled with the strongest separated non-maximal bins.
pub fn extract_support(energy: &[f64], grid: &[f64], policy: SelectionPolicy) -> SupportEstimate {
    assert_eq!(energy.len(), grid.len());
    if energy.is_empty() {
        return SupportEstimate {
            indices: Vec::new(),
            delays_s: Vec::new(),
            degenerate: true,
            cluster: None,
        };
    }
    let top = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let maxima: Vec<usize> = (0..energy.len()).filter(|&g| is_local_max(energy, g)).collect();
    let by_energy = |mut v: Vec<usize>| {
        v.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
        v
    };

    let (mut picked, degenerate) = match policy {
        SelectionPolicy::Threshold { rho } => {
            let eligible: Vec<usize> = maxima.iter().copied().filter(|&g| energy[g] >= rho * top).collect();
            let picked = greedy(&by_energy(eligible), usize::MAX, Vec::new());
            let degenerate = picked.is_empty();
            (picked, degenerate)
        }
        SelectionPolicy::OracleCount { count } => {
            let degenerate = maxima.is_empty();
            let picked = greedy(&by_energy(maxima), count, Vec::new());
            let rest = by_energy((0..energy.len()).collect());
            (greedy(&rest, count, picked), degenerate)
        }
    };
    if picked.is_empty() {
        picked.push(by_energy((0..energy.len()).collect())[0]);
    }
    picked.sort_unstable();
    SupportEstimate {
        delays_s: picked.iter().map(|&g| grid[g]).collect(),
        indices: picked,
        degenerate,
        cluster: None,
    }
}

/// Edge bins have one neighbour and must exceed it strictly.
fn is_local_max(e: &[f64], g: usize) -> bool {
    let left = g.checked_sub(1).map(|i| e[i]);
    let right = e.get(g + 1).copied();
    match (left, right) {
        (Some(l), Some(r)) => e[g] >= l && e[g] >= r && (e[g] > l || e[g] > r),
        (Some(n), None) | (None, Some(n)) => e[g] > n,
        (None, None) => false,
    }
}

fn greedy(order: &[usize], limit: usize, mut kept: Vec<usize>) -> Vec<usize> {
    for &g in order {
        if kept.len() >= limit {
            break;
        }
        if kept.iter().all(|&k| k.abs_diff(g) >= MIN_SEPARATION_BINS) {
            kept.push(g);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|g| g as f64 * 1e-8).collect()
    }

    #[test]
    fn single_dominant_entry() {
        let mut e = vec![0.0; 10];
        e[6] = 5.0;
        let s = extract_support(&e, &grid(10), SelectionPolicy::default());
        assert_eq!(s.indices, vec![6]);
        assert!(!s.degenerate);
        assert_eq!(s.delays_s, vec![grid(10)[6]]);
    }

    #[test]
    fn uniform_energy_is_degenerate() {
        let e = vec![1.0; 8];
        let s = extract_support(&e, &grid(8), SelectionPolicy::default());
        assert!(s.degenerate);
        assert_eq!(s.indices, vec![0]);
    }

    #[test]
    fn threshold_discards_weak_peaks() {
        let e = vec![0.0, 10.0, 0.0, 0.0, 0.3, 0.0, 0.0, 1.0, 0.0];
        let s = extract_support(&e, &grid(9), SelectionPolicy::Threshold { rho: 0.05 });
        assert_eq!(s.indices, vec![1, 7]);
    }

    #[test]
    fn separation_is_enforced() {
        // Plateau-adjacent maxima one bin apart: only the stronger survives.
        let e = vec![0.0, 5.0, 4.0, 6.0, 0.0, 0.0];
        let s = extract_support(&e, &grid(6), SelectionPolicy::OracleCount { count: 2 });
        assert!(s.indices.windows(2).all(|w| w[1] - w[0] >= 2));
        assert_eq!(s.len(), 2);
        assert!(s.indices.contains(&3));
    }

    #[test]
    fn oracle_count_fills_merged_peaks() {
        // One broad lobe holding two taps two bins apart.
        let e = vec![0.0, 1.0, 3.0, 4.0, 3.5, 1.0, 0.0];
        let s = extract_support(&e, &grid(7), SelectionPolicy::OracleCount { count: 2 });
        assert_eq!(s.indices.len(), 2);
        assert!(s.indices.contains(&3));
        assert!(!s.degenerate);
    }

    #[test]
    fn edge_peaks_are_maxima() {
        let e = vec![9.0, 1.0, 0.0, 2.0];
        let s = extract_support(&e, &grid(4), SelectionPolicy::Threshold { rho: 0.05 });
        assert_eq!(s.indices, vec![0, 3]);
    }
}
