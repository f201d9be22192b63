//! Greedy swap heuristic with random restarts.
//!
//! For `M = 1, 2, …` the heuristic runs `max_iter` independent restarts, each
//! drawing a random support of size `M` with random unit phases and then
//! performing `max_count` swap steps. It stops at the first `M` whose best
//! restart meets the error bound.

use std::time::Instant;

use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ComplexSolution, ProblemInstance};

/// Diagonal regularization of the 2×2 normal equations.
pub const RIDGE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub max_iter: usize,
    pub max_count: usize,
    pub m_guess: usize,
    pub seed: u64,
    pub parallel_restarts: bool,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self { max_iter: 1000, max_count: 1000, m_guess: 1, seed: 0, parallel_restarts: true }
    }
}

impl HeuristicConfig {
    pub fn validate(&self, n_antennas: usize) -> Result<()> {
        if self.max_iter == 0 || self.max_count == 0 {
            return Err(Error::InvalidConfig("max_iter and max_count must be at least 1".into()));
        }
        if self.m_guess == 0 || self.m_guess > n_antennas {
            return Err(Error::InvalidConfig(format!(
                "m_guess must lie in 1..={n_antennas}, got {}",
                self.m_guess
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeuristicStatus {
    Feasible,
    /// No support size up to `N` met the bound; the result holds the best
    /// point found at `M = N`.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicResult {
    pub status: HeuristicStatus,
    pub x: ComplexSolution,
    pub cardinality: usize,
    pub error: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartResult {
    pub x: Vec<Complex64>,
    pub error: f64,
}

/// Seed of restart `i` at support size `m`.
pub fn sub_seed(master: u64, m: usize, i: usize) -> u64 {
    let mut h = master;
    for word in [m as u64, i as u64] {
        h = splitmix(h ^ splitmix(word));
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn unit(c: Complex64) -> Complex64 {
    Complex64::from_polar(1.0, c.arg())
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Least-squares fit `r ≈ a·hu + c·hv` over complex `a, c`.
fn fit_pair(hu: &[Complex64], hv: &[Complex64], r: &[Complex64]) -> (Complex64, Complex64) {
    let mut guu = RIDGE;
    let mut gvv = RIDGE;
    let mut guv = Complex64::new(0.0, 0.0);
    let mut bu = Complex64::new(0.0, 0.0);
    let mut bv = Complex64::new(0.0, 0.0);
    for k in 0..r.len() {
        guu += hu[k].norm_sqr();
        gvv += hv[k].norm_sqr();
        guv += hu[k].conj() * hv[k];
        bu += hu[k].conj() * r[k];
        bv += hv[k].conj() * r[k];
    }
    let det = guu * gvv - guv.norm_sqr();
    let a = (bu * gvv - guv * bv) / det;
    let c = (bv * guu - guv.conj() * bu) / det;
    (a, c)
}

fn fit_single(hu: &[Complex64], r: &[Complex64]) -> Complex64 {
    let mut g = RIDGE;
    let mut b = Complex64::new(0.0, 0.0);
    for k in 0..r.len() {
        g += hu[k].norm_sqr();
        b += hu[k].conj() * r[k];
    }
    b / g
}

/// Proposed point of one swap step from `x` with `|x_u| = 1`, `x_v = 0`,
/// together with its error. The caller accepts it only if the error drops.
/// With `u == v` only antenna `u` is re-phased.
pub fn swap_step(inst: &ProblemInstance, x: &[Complex64], u: usize, v: usize) -> Result<(Vec<Complex64>, f64)> {
    let mut r: Vec<Complex64> = inst.desired().iter().zip(inst.receive(x)?).map(|(s, y)| s - y).collect();
    let mut y = x.to_vec();
    let hu = inst.antenna_row(u);
    for (rk, hk) in r.iter_mut().zip(hu) {
        *rk += x[u] * hk;
    }
    propose(inst, &mut y, &mut r, u, v);
    Ok((y, norm(&r)))
}

/// Updates `y` and residual `r` (with antenna `u` already removed) in place.
fn propose(inst: &ProblemInstance, y: &mut [Complex64], r: &mut [Complex64], u: usize, v: usize) {
    let hu = inst.antenna_row(u);
    if u == v {
        let a = fit_single(hu, r);
        y[u] = if a.norm() > 0.0 { unit(a) } else { y[u] };
    } else {
        let hv = inst.antenna_row(v);
        let (a, c) = fit_pair(hu, hv, r);
        if a.norm() >= c.norm() {
            y[u] = if a.norm() > 0.0 { unit(a) } else { y[u] };
        } else {
            y[u] = Complex64::new(0.0, 0.0);
            y[v] = unit(c);
        }
        for (rk, hk) in r.iter_mut().zip(hv) {
            *rk -= y[v] * hk;
        }
    }
    for (rk, hk) in r.iter_mut().zip(hu) {
        *rk -= y[u] * hk;
    }
}

/// One restart at support size `m`. When `trace` is given, the tracked
/// error after each step is appended to it.
pub fn run_restart_traced(
    inst: &ProblemInstance,
    m: usize,
    sub_seed: u64,
    max_count: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> RestartResult {
    let n = inst.n_antennas();
    let kk = inst.n_users();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let chosen = index::sample(&mut rng, n, m).into_vec();
    let mut on = vec![false; n];
    for &u in &chosen {
        x[u] = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        on[u] = true;
    }
    let mut support = chosen;
    let mut zeros: Vec<usize> = (0..n).filter(|&i| !on[i]).collect();

    let mut res: Vec<Complex64> = inst.desired().to_vec();
    for &u in &support {
        for (rk, hk) in res.iter_mut().zip(inst.antenna_row(u)) {
            *rk -= x[u] * hk;
        }
    }
    let mut err = norm(&res);
    let mut r = vec![Complex64::new(0.0, 0.0); kk];
    let mut y = x.clone();

    for _ in 0..max_count {
        let pu = rng.random_range(0..support.len());
        let u = support[pu];
        let pv = if zeros.is_empty() { None } else { Some(rng.random_range(0..zeros.len())) };
        let v = pv.map_or(u, |p| zeros[p]);

        let hu = inst.antenna_row(u);
        for k in 0..kk {
            r[k] = res[k] + x[u] * hu[k];
        }
        y[u] = x[u];
        y[v] = x[v];
        propose(inst, &mut y, &mut r, u, v);
        let e_hat = norm(&r);
        if e_hat < err {
            err = e_hat;
            res.copy_from_slice(&r);
            x[u] = y[u];
            x[v] = y[v];
            if let Some(p) = pv {
                if x[u] == Complex64::new(0.0, 0.0) {
                    support[pu] = v;
                    zeros[p] = u;
                }
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(err);
        }
    }
    let error = inst.residual(&x).expect("dimensions match");
    RestartResult { x, error }
}

pub fn run_restart(inst: &ProblemInstance, m: usize, sub_seed: u64, max_count: usize) -> RestartResult {
    run_restart_traced(inst, m, sub_seed, max_count, None)
}

/// Best of `max_iter` restarts at support size `m`; ties go to the lowest
/// restart index.
pub fn best_restart(inst: &ProblemInstance, m: usize, cfg: &HeuristicConfig) -> RestartResult {
    let run = |i: usize| run_restart(inst, m, sub_seed(cfg.seed, m, i), cfg.max_count);
    let results: Vec<RestartResult> = if cfg.parallel_restarts {
        (0..cfg.max_iter).into_par_iter().map(run).collect()
    } else {
        (0..cfg.max_iter).map(run).collect()
    };
    results
        .into_iter()
        .reduce(|best, r| if r.error < best.error { r } else { best })
        .expect("max_iter ≥ 1")
}

pub fn solve_heuristic(inst: &ProblemInstance, cfg: &HeuristicConfig) -> Result<HeuristicResult> {
    let start = Instant::now();
    let n = inst.n_antennas();
    cfg.validate(n)?;
    let mut m = cfg.m_guess;
    loop {
        let best = best_restart(inst, m, cfg);
        let feasible = best.error <= inst.tol();
        if feasible || m == n {
            let status = if feasible { HeuristicStatus::Feasible } else { HeuristicStatus::Infeasible };
            return Ok(HeuristicResult {
                status,
                x: ComplexSolution { x: best.x },
                cardinality: m,
                error: best.error,
                time_s: start.elapsed().as_secs_f64(),
            });
        }
        m += 1;
    }
}
