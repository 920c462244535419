//! Posterior of the row-sparse coefficients for one UE, update (a).
//!
//! With row variances `d = 1 / lambda`, the Woodbury identity turns the
//! `2G x 2G` precision system into an `N_k x N_k` one,
//!
//! ```text
//! C      = beta^-1 I + Psi diag(d_sh + d_pr) Psi^H
//! U(j,:) = d_j psi_j^H C^-1 Y~
//! S_jj   = d_j - d_j^2 psi_j^H C^-1 psi_j
//! tr(S Psi_tau^H Psi_tau) = beta^-1 tr(C^-1 (C - beta^-1 I))
//! Y~ - Psi_tau U          = beta^-1 C^-1 Y~
//! ```
//!
//! and `C` is only ever needed on the numerical column space of `Psi`
//! (dimension `r`), so every per-iteration product is `r x r` or `r x G`.
//! The [`Solver::Dense`] path factors the `2G x 2G` precision matrix
//! directly and serves as a cross-check.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, hpd_inverse, matmul, trace_of_product, CMat, Op, ZERO};
use crate::sbl::dictionary::{DelayBasis, Dictionary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Woodbury form on the dictionary's column space.
    #[default]
    Reduced,
    /// Cholesky of `beta * Gram + diag(lambda)` in the full coefficient space.
    Dense,
}

/// Sufficient statistics of `q(W_k)` consumed by the other updates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WMoments {
    /// `||U(g,:)||^2` for the shared (or only) block.
    pub mean_energy_sh: Vec<f64>,
    /// `||U(G+g,:)||^2`; empty for a single dictionary.
    pub mean_energy_pr: Vec<f64>,
    pub sigma_diag_sh: Vec<f64>,
    pub sigma_diag_pr: Vec<f64>,
    /// `tr(Sigma G_k)`.
    pub trace_sigma_gram: f64,
    /// `||Y~ - Psi_tau U||_F^2`.
    pub residual_sq: f64,
}

impl WMoments {
    /// `E||w_sh,g||^2 = ||U(g,:)||^2 + MT Sigma_gg`.
    pub fn second_moment_sh(&self, mt: usize) -> Vec<f64> {
        second_moments(&self.mean_energy_sh, &self.sigma_diag_sh, mt)
    }

    pub fn second_moment_pr(&self, mt: usize) -> Vec<f64> {
        second_moments(&self.mean_energy_pr, &self.sigma_diag_pr, mt)
    }

    /// Support statistic `||U(g,:)||^2 + ||U(G+g,:)||^2`.
    pub fn row_energy(&self) -> Vec<f64> {
        if self.mean_energy_pr.is_empty() {
            return self.mean_energy_sh.clone();
        }
        self.mean_energy_sh
            .iter()
            .zip(&self.mean_energy_pr)
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.mean_energy_sh
            .iter()
            .chain(&self.mean_energy_pr)
            .chain(&self.sigma_diag_sh)
            .chain(&self.sigma_diag_pr)
            .all(|v| v.is_finite())
            && self.trace_sigma_gram.is_finite()
            && self.residual_sq.is_finite()
    }
}

pub fn second_moments(mean_energy: &[f64], sigma_diag: &[f64], mt: usize) -> Vec<f64> {
    mean_energy
        .iter()
        .zip(sigma_diag)
        .map(|(e, s)| e + mt as f64 * s)
        .collect()
}

/// Row second moments straight from a materialized posterior `(U, Sigma)`.
pub fn row_second_moments(u: &CMat, sigma: &CMat, mt: usize) -> Vec<f64> {
    (0..u.nrows())
        .map(|i| u.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() + mt as f64 * sigma[(i, i)].re)
        .collect()
}

/// Full `(U_k, Sigma_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: CMat,
    pub cov: CMat,
}

/// Per-UE data precomputed once per VI run.
#[derive(Debug, Clone)]
pub struct UeSystem {
    rows: usize,
    cols: usize,
    grid: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Reduced {
        /// `Q^H Psi` (r x G).
        psi_r: CMat,
        /// `Q^H Y~` (r x MT).
        y_r: CMat,
        /// `F F^H = Q^H Y~ Y~^H Q`, with at most `min(r, MT)` columns.
        f: CMat,
        /// `||(I - Q Q^H) Y~||_F^2`.
        energy_out: f64,
    },
    Dense {
        psi: CMat,
        y: CMat,
        /// `Psi^H Psi` (G x G).
        gram: CMat,
        /// `Psi^H Y~` (G x MT).
        corr: CMat,
    },
}

impl UeSystem {
    pub fn new(dict: &Dictionary, y: &CMat, solver: Solver, basis: Option<&DelayBasis>) -> Result<Self> {
        if y.nrows() != dict.num_rows() {
            return Err(Error::Dimension(format!(
                "observation has {} rows, dictionary {}",
                y.nrows(),
                dict.num_rows()
            )));
        }
        let kind = match solver {
            Solver::Reduced => {
                let own;
                let basis = match basis.filter(|b| b.applies_to(dict)) {
                    Some(b) => b,
                    None => {
                        own = DelayBasis::from_dictionary(&dict.psi);
                        &own
                    }
                };
                let q = &basis.q;
                let psi_r = matmul(q, Op::H, &dict.psi, Op::N);
                let y_r = matmul(q, Op::H, y, Op::N);
                let outside = y - matmul(q, Op::N, &y_r, Op::N);
                let f = if y_r.ncols() <= y_r.nrows() {
                    y_r.clone()
                } else {
                    y_r.adjoint().qr().r().adjoint()
                };
                Kind::Reduced {
                    psi_r,
                    y_r,
                    f,
                    energy_out: frobenius_sq(&outside),
                }
            }
            Solver::Dense => Kind::Dense {
                gram: matmul(&dict.psi, Op::H, &dict.psi, Op::N),
                corr: matmul(&dict.psi, Op::H, y, Op::N),
                psi: dict.psi.clone(),
                y: y.clone(),
            },
        };
        Ok(Self {
            rows: y.nrows(),
            cols: y.ncols(),
            grid: dict.grid_size(),
            kind,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> usize {
        self.cols
    }

    pub fn grid_size(&self) -> usize {
        self.grid
    }

    /// Dimension of the working space: `r` for the reduced solver, `2G`
    /// (or `G`) for the dense one.
    pub fn working_rank(&self) -> usize {
        match &self.kind {
            Kind::Reduced { psi_r, .. } => psi_r.nrows(),
            Kind::Dense { .. } => self.grid,
        }
    }

    /// Update (a) for row variances `d_sh` and optional `d_pr`.
    ///
    /// With `d_pr = None` the model has a single dictionary (per-UE SBL).
    pub fn solve(&self, d_sh: &[f64], d_pr: Option<&[f64]>, beta: f64) -> Result<WMoments> {
        self.check(d_sh, d_pr, beta)?;
        match &self.kind {
            Kind::Reduced {
                psi_r, f, energy_out, ..
            } => {
                let d_eff = effective(d_sh, d_pr);
                let (ci, m) = self.reduced_inverse(psi_r, &d_eff, beta)?;
                let w = matmul(&ci, Op::N, psi_r, Op::N);
                let p = matmul(f, Op::H, &w, Op::N);
                let g = self.grid;
                let mut q = vec![0.0; g];
                let mut s = vec![0.0; g];
                for j in 0..g {
                    q[j] = psi_r
                        .column(j)
                        .iter()
                        .zip(w.column(j).iter())
                        .map(|(a, b)| (a.conj() * b).re)
                        .sum();
                    s[j] = p.column(j).iter().map(|z| z.norm_sqr()).sum();
                }
                let energy = |d: &[f64]| d.iter().zip(&s).map(|(d, s)| d * d * s).collect::<Vec<_>>();
                let sigma = |d: &[f64]| {
                    d.iter()
                        .zip(&q)
                        .map(|(d, q)| (d - d * d * q).max(0.0))
                        .collect::<Vec<_>>()
                };
                let z = matmul(&ci, Op::N, f, Op::N);
                let trace_sigma_gram = (trace_of_product(&ci, &m).re / beta).max(0.0);
                let residual_sq = energy_out + frobenius_sq(&z) / (beta * beta);
                let (mean_energy_pr, sigma_diag_pr) = match d_pr {
                    Some(d) => (energy(d), sigma(d)),
                    None => (Vec::new(), Vec::new()),
                };
                Ok(WMoments {
                    mean_energy_sh: energy(d_sh),
                    mean_energy_pr,
                    sigma_diag_sh: sigma(d_sh),
                    sigma_diag_pr,
                    trace_sigma_gram,
                    residual_sq,
                })
            }
            Kind::Dense { .. } => {
                let post = self.posterior(d_sh, d_pr, beta)?;
                Ok(self.dense_moments(&post, d_pr.is_some()))
            }
        }
    }

    /// Materialized `(U_k, Sigma_k)`; `2G` rows with a private block,
    /// `G` rows without.
    pub fn posterior(&self, d_sh: &[f64], d_pr: Option<&[f64]>, beta: f64) -> Result<Posterior> {
        self.check(d_sh, d_pr, beta)?;
        let d: Vec<f64> = d_sh.iter().chain(d_pr.unwrap_or(&[])).copied().collect();
        match &self.kind {
            Kind::Reduced { psi_r, y_r, .. } => {
                let d_eff = effective(d_sh, d_pr);
                let (ci, _) = self.reduced_inverse(psi_r, &d_eff, beta)?;
                let psi_t = tile(psi_r, d_pr.is_some());
                let mut a = psi_t.adjoint();
                scale_rows(&mut a, &d);
                let mean = matmul(&matmul(&a, Op::N, &ci, Op::N), Op::N, y_r, Op::N);
                let mut cov = matmul(&matmul(&a, Op::N, &ci, Op::N), Op::N, &a, Op::H);
                cov.neg_mut();
                for (i, di) in d.iter().enumerate() {
                    cov[(i, i)] += di;
                }
                Ok(Posterior { mean, cov })
            }
            Kind::Dense { gram, corr, .. } => {
                let dup = d_pr.is_some();
                let gram_t = tile_gram(gram, dup);
                let corr_t = if dup { stack_rows(corr) } else { corr.clone() };
                let mut prec = gram_t * Complex64::new(beta, 0.0);
                for (i, di) in d.iter().enumerate() {
                    prec[(i, i)] += 1.0 / di;
                }
                let cov = hpd_inverse(prec, "beta * Gram + diag(lambda)")?;
                let mut mean = matmul(&cov, Op::N, &corr_t, Op::N);
                mean *= Complex64::new(beta, 0.0);
                Ok(Posterior { mean, cov })
            }
        }
    }

    fn dense_moments(&self, post: &Posterior, dup: bool) -> WMoments {
        let Kind::Dense { psi, y, gram, .. } = &self.kind else {
            unreachable!("dense moments on a reduced system")
        };
        let g = self.grid;
        let energies: Vec<f64> = (0..post.mean.nrows())
            .map(|i| post.mean.row(i).iter().map(|z| z.norm_sqr()).sum())
            .collect();
        let diag: Vec<f64> = (0..post.cov.nrows()).map(|i| post.cov[(i, i)].re).collect();
        let gram_t = tile_gram(gram, dup);
        let psi_t = tile(psi, dup);
        let resid = y - matmul(&psi_t, Op::N, &post.mean, Op::N);
        let (sh, pr) = if dup { (0..g, g..2 * g) } else { (0..g, 0..0) };
        WMoments {
            mean_energy_sh: energies[sh.clone()].to_vec(),
            mean_energy_pr: energies[pr.clone()].to_vec(),
            sigma_diag_sh: diag[sh].to_vec(),
            sigma_diag_pr: diag[pr].to_vec(),
            trace_sigma_gram: trace_of_product(&post.cov, &gram_t).re,
            residual_sq: frobenius_sq(&resid),
        }
    }

    /// `(C_r^-1, Psi_r diag(d) Psi_r^H)`.
    fn reduced_inverse(&self, psi_r: &CMat, d_eff: &[f64], beta: f64) -> Result<(CMat, CMat)> {
        let mut scaled = psi_r.clone();
        for (j, &d) in d_eff.iter().enumerate() {
            scaled.column_mut(j).scale_mut(d);
        }
        let m = matmul(&scaled, Op::N, psi_r, Op::H);
        let mut c = m.clone();
        for i in 0..c.nrows() {
            c[(i, i)] += 1.0 / beta;
        }
        let ci = hpd_inverse(c, "reduced noise covariance")?;
        Ok((ci, m))
    }

    fn check(&self, d_sh: &[f64], d_pr: Option<&[f64]>, beta: f64) -> Result<()> {
        let g = self.grid;
        if d_sh.len() != g || d_pr.is_some_and(|d| d.len() != g) {
            return Err(Error::Dimension(format!("row variances must have length G = {g}")));
        }
        let positive = |v: &f64| *v > 0.0 && v.is_finite();
        if !d_sh.iter().chain(d_pr.unwrap_or(&[])).all(positive) || !positive(&beta) {
            return Err(Error::NonFinite {
                iteration: 0,
                what: "row variances or noise precision (must be finite and > 0)".into(),
            });
        }
        Ok(())
    }
}

fn effective(d_sh: &[f64], d_pr: Option<&[f64]>) -> Vec<f64> {
    match d_pr {
        Some(p) => d_sh.iter().zip(p).map(|(a, b)| a + b).collect(),
        None => d_sh.to_vec(),
    }
}

/// `[A A]` when `dup`, else `A`.
fn tile(a: &CMat, dup: bool) -> CMat {
    if !dup {
        return a.clone();
    }
    let (r, c) = a.shape();
    let mut out = CMat::from_element(r, 2 * c, ZERO);
    out.columns_mut(0, c).copy_from(a);
    out.columns_mut(c, c).copy_from(a);
    out
}

/// `[A; A]`.
fn stack_rows(a: &CMat) -> CMat {
    let (r, c) = a.shape();
    let mut out = CMat::from_element(2 * r, c, ZERO);
    out.rows_mut(0, r).copy_from(a);
    out.rows_mut(r, r).copy_from(a);
    out
}

/// `[[G G]; [G G]]` when `dup`.
fn tile_gram(g: &CMat, dup: bool) -> CMat {
    if dup {
        stack_rows(&tile(g, true))
    } else {
        g.clone()
    }
}

fn scale_rows(a: &mut CMat, d: &[f64]) {
    for (i, &di) in d.iter().enumerate() {
        a.row_mut(i).scale_mut(di);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(n: usize, g: usize, mt: usize) -> (Dictionary, CMat) {
        let grid: Vec<f64> = (0..g).map(|i| i as f64 * 0.6e-6).collect();
        let subs: Vec<usize> = (3..3 + n).collect();
        let dict = Dictionary::new(&grid, &subs, 60e3);
        let y = CMat::from_fn(n, mt, |i, j| {
            Complex64::new(
                (0.7 * i as f64 + 1.3 * j as f64).sin(),
                (0.2 * i as f64 - 0.9 * j as f64).cos(),
            )
        });
        (dict, y)
    }

    fn variances(g: usize) -> (Vec<f64>, Vec<f64>) {
        let sh = (0..g).map(|i| 0.3 + 0.2 * i as f64).collect();
        let pr = (0..g).map(|i| 1.1 - 0.15 * i as f64).collect();
        (sh, pr)
    }

    #[test]
    fn reduced_matches_dense_duplicated() {
        let (dict, y) = instance(6, 4, 4);
        let (sh, pr) = variances(4);
        let red = UeSystem::new(&dict, &y, Solver::Reduced, None).unwrap();
        let den = UeSystem::new(&dict, &y, Solver::Dense, None).unwrap();
        let a = red.solve(&sh, Some(&pr), 2.5).unwrap();
        let b = den.solve(&sh, Some(&pr), 2.5).unwrap();
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1e-3));
        assert!(close(&a.mean_energy_sh, &b.mean_energy_sh));
        assert!(close(&a.mean_energy_pr, &b.mean_energy_pr));
        assert!(close(&a.sigma_diag_sh, &b.sigma_diag_sh));
        assert!(close(&a.sigma_diag_pr, &b.sigma_diag_pr));
        assert!((a.trace_sigma_gram - b.trace_sigma_gram).abs() < 1e-9 * b.trace_sigma_gram);
        assert!((a.residual_sq - b.residual_sq).abs() < 1e-9 * b.residual_sq);

        let pa = red.posterior(&sh, Some(&pr), 2.5).unwrap();
        let pb = den.posterior(&sh, Some(&pr), 2.5).unwrap();
        assert!((&pa.mean - &pb.mean).norm() < 1e-9 * pb.mean.norm());
        assert!((&pa.cov - &pb.cov).norm() < 1e-9 * pb.cov.norm());
    }

    #[test]
    fn reduced_matches_dense_single() {
        let (dict, y) = instance(8, 5, 3);
        let (sh, _) = variances(5);
        let red = UeSystem::new(&dict, &y, Solver::Reduced, None).unwrap();
        let den = UeSystem::new(&dict, &y, Solver::Dense, None).unwrap();
        let a = red.solve(&sh, None, 0.7).unwrap();
        let b = den.solve(&sh, None, 0.7).unwrap();
        assert!(a.mean_energy_pr.is_empty() && b.mean_energy_pr.is_empty());
        for (x, z) in a.mean_energy_sh.iter().zip(&b.mean_energy_sh) {
            assert!((x - z).abs() < 1e-9 * z.max(1e-3));
        }
        assert!((a.residual_sq - b.residual_sq).abs() < 1e-9 * b.residual_sq);
        assert!((a.trace_sigma_gram - b.trace_sigma_gram).abs() < 1e-9 * b.trace_sigma_gram);
    }

    #[test]
    fn wide_observation_uses_square_factor() {
        // MT larger than the rank forces the QR-based factor of Y_r Y_r^H.
        let (dict, y) = instance(6, 3, 20);
        let (sh, pr) = variances(3);
        let red = UeSystem::new(&dict, &y, Solver::Reduced, None).unwrap();
        let den = UeSystem::new(&dict, &y, Solver::Dense, None).unwrap();
        let a = red.solve(&sh, Some(&pr), 1.3).unwrap();
        let b = den.solve(&sh, Some(&pr), 1.3).unwrap();
        for (x, z) in a.row_energy().iter().zip(b.row_energy()) {
            assert!((x - z).abs() < 1e-9 * z);
        }
        assert!((a.residual_sq - b.residual_sq).abs() < 1e-9 * b.residual_sq);
    }

    #[test]
    fn huge_precision_pins_mean_to_zero() {
        let (dict, y) = instance(6, 4, 4);
        let tiny = vec![1e-12; 4];
        let sys = UeSystem::new(&dict, &y, Solver::Dense, None).unwrap();
        let post = sys.posterior(&tiny, Some(&tiny), 1.0).unwrap();
        let b = matmul(&dict.duplicated(), Op::H, &y, Op::N).norm();
        assert!(post.mean.norm() < 1e-6 * b);
    }

    #[test]
    fn vanishing_noise_precision_shrinks_mean() {
        let (dict, y) = instance(6, 4, 4);
        let (sh, pr) = variances(4);
        let sys = UeSystem::new(&dict, &y, Solver::Reduced, None).unwrap();
        let post = sys.posterior(&sh, Some(&pr), 1e-12).unwrap();
        assert!(post.mean.norm() < 1e-9);
    }

    #[test]
    fn second_moment_hand_instance() {
        let u = CMat::from_row_slice(1, 2, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        let s = CMat::from_element(1, 1, Complex64::new(0.5, 0.0));
        assert_eq!(row_second_moments(&u, &s, 2), vec![3.0]);
        assert_eq!(second_moments(&[0.0], &[0.25], 4), vec![1.0]);
        assert_eq!(second_moments(&[2.0], &[0.0], 4), vec![2.0]);
    }

    #[test]
    fn rejects_nonpositive_variances() {
        let (dict, y) = instance(4, 3, 2);
        let sys = UeSystem::new(&dict, &y, Solver::Reduced, None).unwrap();
        assert!(sys.solve(&[1.0, 0.0, 1.0], None, 1.0).is_err());
        assert!(sys.solve(&[1.0, 1.0, 1.0], None, f64::NAN).is_err());
        assert!(sys.solve(&[1.0, 1.0], None, 1.0).is_err());
    }
}
