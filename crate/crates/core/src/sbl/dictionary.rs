//! Delay dictionaries and their numerical column-space bases.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::config::SparsityConfig;
use crate::linalg::{matmul, CMat, Op};
use crate::signal_model::{delay_steering, stack_packets};

/// Relative singular-value cutoff for the column-space basis.
pub const BASIS_RTOL: f64 = 1e-14;

/// `Psi_k`, the `N_k x G` delay dictionary of one UE on the common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub grid: Vec<f64>,
    pub subcarriers: Vec<usize>,
    pub spacing_hz: f64,
    pub psi: CMat,
}

impl Dictionary {
    pub fn new(grid: &[f64], subcarriers: &[usize], spacing_hz: f64) -> Self {
        let mut psi = CMat::zeros(subcarriers.len(), grid.len());
        for (g, &tau) in grid.iter().enumerate() {
            for (n, z) in delay_steering(tau, subcarriers, spacing_hz).into_iter().enumerate() {
                psi[(n, g)] = z;
            }
        }
        Self {
            grid: grid.to_vec(),
            subcarriers: subcarriers.to_vec(),
            spacing_hz,
            psi,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.psi.nrows()
    }

    pub fn grid_size(&self) -> usize {
        self.psi.ncols()
    }

    /// `[Psi_k  Psi_k]`, the shared/private duplicated dictionary.
    pub fn duplicated(&self) -> CMat {
        let (n, g) = self.psi.shape();
        let mut out = CMat::zeros(n, 2 * g);
        out.columns_mut(0, g).copy_from(&self.psi);
        out.columns_mut(g, g).copy_from(&self.psi);
        out
    }

    /// `Psi_tau^H Psi_tau` (2G x 2G).
    pub fn gram(&self) -> CMat {
        let d = self.duplicated();
        matmul(&d, Op::H, &d, Op::N)
    }
}

pub fn build_dictionary(sp: &SparsityConfig, subcarriers: &[usize], spacing_hz: f64) -> Dictionary {
    Dictionary::new(&sp.delay_grid(), subcarriers, spacing_hz)
}

/// `Y~_k = [Y_k[1], ..., Y_k[T]]` (N_k x MT).
#[derive(Debug, Clone, PartialEq)]
pub struct StackedObservation {
    pub y: CMat,
    pub num_antennas: usize,
}

impl StackedObservation {
    pub fn from_packets(packets: &[CMat]) -> Self {
        Self {
            y: stack_packets(packets),
            num_antennas: packets.first().map_or(0, |p| p.ncols()),
        }
    }

    pub fn columns(&self) -> usize {
        self.y.ncols()
    }

    /// `B_k = Psi_tau^H Y~_k` (2G x MT).
    pub fn correlation(&self, dict: &Dictionary) -> CMat {
        matmul(&dict.duplicated(), Op::H, &self.y, Op::N)
    }
}

/// Orthonormal basis `Q` (N_k x r) of the numerical column space of a
/// dictionary. A delay span far below the resolution `1/(N_k df)` makes
/// `r` much smaller than both `N_k` and `G`.
#[derive(Debug, Clone)]
pub struct DelayBasis {
    pub q: CMat,
    /// Block length for contiguous bases; `None` for a basis of one
    /// specific dictionary.
    contiguous_len: Option<usize>,
    grid_key: Vec<u64>,
    spacing_key: u64,
}

impl DelayBasis {
    /// Basis of `Psi` itself.
    pub fn from_dictionary(psi: &CMat) -> Self {
        Self {
            q: column_basis(psi),
            contiguous_len: None,
            grid_key: Vec::new(),
            spacing_key: 0,
        }
    }

    /// Basis shared by every contiguous block of `n` subcarriers: shifting
    /// the block multiplies each column by a unit-modulus constant, which
    /// leaves the column space unchanged.
    pub fn contiguous(grid: &[f64], n: usize, spacing_hz: f64) -> Self {
        let subs: Vec<usize> = (0..n).collect();
        let dict = Dictionary::new(grid, &subs, spacing_hz);
        Self {
            q: column_basis(&dict.psi),
            contiguous_len: Some(n),
            grid_key: grid.iter().map(|t| t.to_bits()).collect(),
            spacing_key: spacing_hz.to_bits(),
        }
    }

    /// Process-wide cached [`DelayBasis::contiguous`].
    pub fn contiguous_cached(grid: &[f64], n: usize, spacing_hz: f64) -> Arc<Self> {
        type Key = (usize, u64, Vec<u64>);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<DelayBasis>>>> = OnceLock::new();
        let key = (n, spacing_hz.to_bits(), grid.iter().map(|t| t.to_bits()).collect());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(hit) = cache.lock().expect("basis cache poisoned").get(&key) {
            return Arc::clone(hit);
        }
        let basis = Arc::new(Self::contiguous(grid, n, spacing_hz));
        cache
            .lock()
            .expect("basis cache poisoned")
            .entry(key)
            .or_insert(basis)
            .clone()
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    /// Whether this basis spans the given dictionary's columns.
    pub fn applies_to(&self, dict: &Dictionary) -> bool {
        let Some(n) = self.contiguous_len else {
            return false;
        };
        let subs = &dict.subcarriers;
        subs.len() == n
            && subs.windows(2).all(|w| w[1] == w[0] + 1)
            && dict.spacing_hz.to_bits() == self.spacing_key
            && dict.grid.len() == self.grid_key.len()
            && dict.grid.iter().zip(&self.grid_key).all(|(t, k)| t.to_bits() == *k)
    }
}

/// Left singular vectors whose singular values exceed `BASIS_RTOL * s_max`.
fn column_basis(a: &CMat) -> CMat {
    let (n, g) = a.shape();
    if n == 0 || g == 0 {
        return CMat::zeros(n, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let s = &svd.singular_values;
    let top = s.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > BASIS_RTOL * top).collect();
    let mut q = CMat::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        q.set_column(j, &u.column(i));
    }
    q
}
