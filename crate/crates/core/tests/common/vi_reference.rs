//! Tiny VI instance and a literal dense evaluation of updates (a)-(d).

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ulsense::sbl::{ClusterSbl, Dictionary, Solver, StackedObservation, ViConfig, ViState};

pub type M = DMatrix<Complex64>;

pub const NK: usize = 6;
pub const G: usize = 4;
pub const C: usize = 2;
pub const ANT: usize = 2;
pub const T: usize = 2;
pub const K: usize = 3;
pub const MT: usize = ANT * T;
pub const SPACING: f64 = 1e6;

/// Series plus recurrence; independent of the library's digamma.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + x.ln()
        - 0.5 / x
        - x2 * (1.0 / 12.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 252.0 - x2 * (1.0 / 240.0 - x2 / 132.0))))
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn assert_rel(a: f64, b: f64, tol: f64, what: &str) {
    assert!(rel(a, b) < tol, "{what}: {a} vs {b} (rel {})", rel(a, b));
}

pub fn cgauss(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub struct Instance {
    pub dicts: Vec<Dictionary>,
    pub obs: Vec<StackedObservation>,
    pub psi: Vec<M>,
    pub y: Vec<M>,
    pub state: ViState,
    pub cfg: ViConfig,
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Vec<f64> = (0..G).map(|g| g as f64 * 0.25e-6).collect();
    let mut dicts = Vec::new();
    let mut obs = Vec::new();
    let mut psi = Vec::new();
    let mut y = Vec::new();
    for k in 0..K {
        let subs: Vec<usize> = (k * NK..(k + 1) * NK).collect();
        dicts.push(Dictionary::new(&grid, &subs, SPACING));
        psi.push(M::from_fn(NK, G, |n, g| {
            Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * subs[n] as f64 * SPACING * grid[g])
        }));
        let packets: Vec<M> = (0..T).map(|_| M::from_fn(NK, ANT, |_, _| cgauss(&mut rng))).collect();
        y.push(M::from_fn(NK, MT, |n, col| packets[col / ANT][(n, col % ANT)]));
        obs.push(StackedObservation::from_packets(&packets));
    }
    let cfg = ViConfig {
        normalize: false,
        ..Default::default()
    };
    let mut state = ViState::init(K, G, C, MT, &cfg, 0);
    for r in &mut state.resp {
        let raw: Vec<f64> = (0..C).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = raw.iter().sum();
        *r = raw.iter().map(|v| v / s).collect();
    }
    for c in 0..C {
        state.gamma_shape[c] = rng.random_range(1.0..5.0);
        for g in 0..G {
            state.gamma_rate[c][g] = rng.random_range(0.2..3.0);
        }
        state.alpha[c] = rng.random_range(1.0..4.0);
    }
    state.eta_shape = rng.random_range(1.0..5.0);
    for k in 0..K {
        for g in 0..G {
            state.eta_rate[k][g] = rng.random_range(0.2..3.0);
        }
    }
    state.beta_shape = rng.random_range(5.0..20.0);
    state.beta_rate = rng.random_range(1.0..10.0);
    Instance {
        dicts,
        obs,
        psi,
        y,
        state,
        cfg,
    }
}

pub struct Reference {
    pub sigma: Vec<M>,
    pub u: Vec<M>,
    pub state: ViState,
}

/// Updates (a)-(d) evaluated literally with dense complex matrices.
pub fn reference(inst: &Instance) -> Reference {
    let s0 = &inst.state;
    let e_beta = s0.beta_shape / s0.beta_rate;
    let mut sigma = Vec::new();
    let mut u = Vec::new();
    let mut sh = vec![vec![0.0; G]; K];
    let mut pr = vec![vec![0.0; G]; K];
    let mut resid = 0.0;
    for k in 0..K {
        let mut dup = M::zeros(NK, 2 * G);
        dup.columns_mut(0, G).copy_from(&inst.psi[k]);
        dup.columns_mut(G, G).copy_from(&inst.psi[k]);
        let gram = dup.adjoint() * &dup;
        let b = dup.adjoint() * &inst.y[k];
        let mut prec = gram.scale(e_beta);
        for g in 0..G {
            let gsh: f64 = (0..C)
                .map(|c| s0.resp[k][c] * s0.gamma_shape[c] / s0.gamma_rate[c][g])
                .sum();
            prec[(g, g)] += gsh;
            prec[(G + g, G + g)] += s0.eta_shape / s0.eta_rate[k][g];
        }
        let sig = prec.try_inverse().expect("invertible");
        let mean = sig.clone() * b * Complex64::new(e_beta, 0.0);
        for g in 0..G {
            sh[k][g] = mean.row(g).iter().map(|z| z.norm_sqr()).sum::<f64>() + MT as f64 * sig[(g, g)].re;
            pr[k][g] = mean.row(G + g).iter().map(|z| z.norm_sqr()).sum::<f64>() + MT as f64 * sig[(G + g, G + g)].re;
        }
        let r = &inst.y[k] - &dup * &mean;
        resid += r.iter().map(|z| z.norm_sqr()).sum::<f64>() + MT as f64 * (sig.clone() * &gram).trace().re;
        sigma.push(sig);
        u.push(mean);
    }

    let mut s = s0.clone();
    let (a0, b0) = (s0.a0, s0.b0);
    for c in 0..C {
        let mass: f64 = (0..K).map(|k| s0.resp[k][c]).sum();
        s.gamma_shape[c] = a0 + MT as f64 * mass;
        for g in 0..G {
            s.gamma_rate[c][g] = b0 + (0..K).map(|k| s0.resp[k][c] * sh[k][g]).sum::<f64>();
        }
    }
    s.eta_shape = a0 + MT as f64;
    for k in 0..K {
        for g in 0..G {
            s.eta_rate[k][g] = b0 + pr[k][g];
        }
    }
    let alpha_sum: f64 = s0.alpha.iter().sum();
    for k in 0..K {
        let xi: Vec<f64> = (0..C)
            .map(|c| {
                let mut v = digamma(s0.alpha[c]) - digamma(alpha_sum);
                for g in 0..G {
                    v += MT as f64 * (digamma(s.gamma_shape[c]) - s.gamma_rate[c][g].ln());
                    v -= s.gamma_shape[c] / s.gamma_rate[c][g] * sh[k][g];
                }
                v
            })
            .collect();
        let top = xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = xi.iter().map(|v| (v - top).exp()).sum();
        s.resp[k] = xi.iter().map(|v| (v - top).exp() / z).collect();
    }
    for c in 0..C {
        s.alpha[c] = s0.alpha0 + (0..K).map(|k| s.resp[k][c]).sum::<f64>();
    }
    s.beta_shape = a0 + MT as f64 * (K * NK) as f64;
    s.beta_rate = b0 + resid;
    Reference { sigma, u, state: s }
}

/// Largest relative deviation over every updated parameter.
pub fn state_error(got: &ViState, want: &ViState) -> f64 {
    let mut worst: f64 = 0.0;
    let mut see = |a: f64, b: f64| worst = worst.max(rel(a, b));
    for c in 0..C {
        see(got.gamma_shape[c], want.gamma_shape[c]);
        see(got.alpha[c], want.alpha[c]);
        for g in 0..G {
            see(got.gamma_rate[c][g], want.gamma_rate[c][g]);
        }
    }
    see(got.eta_shape, want.eta_shape);
    for k in 0..K {
        for g in 0..G {
            see(got.eta_rate[k][g], want.eta_rate[k][g]);
        }
        for c in 0..C {
            see(got.resp[k][c], want.resp[k][c]);
        }
    }
    see(got.beta_shape, want.beta_shape);
    see(got.beta_rate, want.beta_rate);
    worst
}

/// Largest relative error of one sweep of `solver` against [`reference`]:
/// `(Sigma, U)` in Frobenius norm per UE, every other parameter entrywise.
pub fn sweep_error(inst: &Instance, solver: Solver) -> f64 {
    let want = reference(inst);
    let cfg = ViConfig { solver, ..inst.cfg };
    let engine = ClusterSbl::new(&inst.dicts, &inst.obs, &cfg, None).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..K {
        let post = engine.posterior(&inst.state, k).unwrap();
        worst = worst.max((&post.cov - &want.sigma[k]).norm() / want.sigma[k].norm());
        worst = worst.max((&post.mean - &want.u[k]).norm() / want.u[k].norm());
    }
    let mut state = inst.state.clone();
    engine.step(&mut state).unwrap();
    worst.max(state_error(&state, &want.state))
}

/// Worst `|sum_c r_kc - 1|`, worst relative Hermitian defect of the row
/// covariances and whether every one is positive definite, over `sweeps`
/// iterations.
pub fn structural_checks(inst: &Instance, sweeps: usize) -> (f64, f64, bool) {
    let engine = ClusterSbl::new(&inst.dicts, &inst.obs, &inst.cfg, None).unwrap();
    let mut state = inst.state.clone();
    let (mut resp_err, mut herm, mut pd) = (0.0f64, 0.0f64, true);
    for _ in 0..sweeps {
        engine.step(&mut state).unwrap();
        for r in &state.resp {
            resp_err = resp_err.max((r.iter().sum::<f64>() - 1.0).abs());
        }
        for k in 0..K {
            let cov = engine.posterior(&state, k).unwrap().cov;
            herm = herm.max((&cov - cov.adjoint()).norm() / cov.norm());
            pd &= (0..cov.nrows()).all(|i| cov[(i, i)].re > 0.0);
            pd &= (&cov + cov.adjoint()).scale(0.5).cholesky().is_some();
        }
    }
    (resp_err, herm, pd)
}
