//! Brute-force reference for small instances: every support is enumerated
//! and its best unit-modulus phases are searched by multistart cyclic
//! coordinate descent, backed by a dense phase grid for supports of size
//! three or less.
//!
//! The phase search is local, so the reported cardinality is an upper bound
//! on the true optimum rather than a certificate.

use itertools::Itertools;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ComplexSolution, ProblemInstance};

pub const RESTARTS: usize = 64;
pub const GRID_POINTS: usize = 64;
pub const GRID_MAX_SUPPORT: usize = 3;
pub const MAX_ANTENNAS: usize = 12;
/// Relative slack on the error bound when declaring a support feasible.
pub const FEAS_SLACK: f64 = 1e-7;

const MIN_IMPROVEMENT: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFit {
    pub error: f64,
    /// Full-length vector, zero outside the support.
    pub x: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportError {
    pub support: Vec<usize>,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// `None` when no support up to `m_max` meets the bound.
    pub cardinality: Option<usize>,
    pub witness: Option<ComplexSolution>,
    /// Best error of every support visited at the last level searched.
    pub support_errors: Vec<SupportError>,
    pub supports_visited: usize,
}

fn residual_vec(inst: &ProblemInstance, x: &[Complex64], support: &[usize]) -> Vec<Complex64> {
    let mut r = inst.desired().to_vec();
    for &u in support {
        for (rk, hk) in r.iter_mut().zip(inst.antenna_row(u)) {
            *rk -= x[u] * hk;
        }
    }
    r
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Sets `x_u` to the phase minimizing the residual with all other entries
/// fixed. `r` is the residual including `x_u` and is updated in place.
fn align(inst: &ProblemInstance, x: &mut [Complex64], r: &mut [Complex64], u: usize) {
    let h = inst.antenna_row(u);
    let mut proj = Complex64::new(0.0, 0.0);
    for (rk, hk) in r.iter().zip(h) {
        proj += hk.conj() * (rk + x[u] * hk);
    }
    let new = if proj.norm() > 0.0 { Complex64::from_polar(1.0, proj.arg()) } else { x[u] };
    for (rk, hk) in r.iter_mut().zip(h) {
        *rk += (x[u] - new) * hk;
    }
    x[u] = new;
}

/// Cyclic coordinate phase descent on `support` starting from `x` (entries
/// on the support must have unit modulus). Returns the final error.
pub fn refine_phases(inst: &ProblemInstance, x: &mut [Complex64], support: &[usize]) -> f64 {
    let mut r = residual_vec(inst, x, support);
    let mut err = norm(&r);
    for _ in 0..MAX_SWEEPS {
        for &u in support {
            align(inst, x, &mut r, u);
        }
        let e = norm(&r);
        let done = err - e < MIN_IMPROVEMENT;
        err = e;
        if done {
            break;
        }
    }
    norm(&residual_vec(inst, x, support))
}

fn support_seed(support: &[usize]) -> u64 {
    support.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &u| (h ^ u as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Grid over all but the last support entry; the last is aligned in closed
/// form. Each grid winner is polished by coordinate descent.
fn grid_fit(inst: &ProblemInstance, support: &[usize]) -> PhaseFit {
    let n = inst.n_antennas();
    let (&last, head) = support.split_last().expect("nonempty support");
    let step = std::f64::consts::TAU / GRID_POINTS as f64;
    let mut best = PhaseFit { error: f64::INFINITY, x: vec![Complex64::new(0.0, 0.0); n] };
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let grid: Vec<Vec<usize>> = if head.is_empty() {
        vec![Vec::new()]
    } else {
        head.iter().map(|_| 0..GRID_POINTS).multi_cartesian_product().collect()
    };
    for idx in grid {
        for (&u, &g) in head.iter().zip(&idx) {
            x[u] = Complex64::from_polar(1.0, g as f64 * step);
        }
        x[last] = Complex64::new(1.0, 0.0);
        let mut r = residual_vec(inst, &x, support);
        align(inst, &mut x, &mut r, last);
        let e = norm(&r);
        if e < best.error {
            best = PhaseFit { error: e, x: x.clone() };
        }
    }
    best.error = refine_phases(inst, &mut best.x, support);
    best
}

/// Best unit-modulus phases on `support`.
pub fn best_phase_fit(inst: &ProblemInstance, support: &[usize]) -> Result<PhaseFit> {
    let n = inst.n_antennas();
    if support.is_empty() {
        return Err(Error::InvalidConfig("support must be nonempty".into()));
    }
    if let Some(&u) = support.iter().find(|&&u| u >= n) {
        return Err(Error::InvalidConfig(format!("antenna {u} out of range for N = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(support_seed(support));
    let mut best = PhaseFit { error: f64::INFINITY, x: Vec::new() };
    for _ in 0..RESTARTS {
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for &u in support {
            x[u] = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        }
        let e = refine_phases(inst, &mut x, support);
        if e < best.error {
            best = PhaseFit { error: e, x };
        }
    }
    if support.len() <= GRID_MAX_SUPPORT {
        let g = grid_fit(inst, support);
        if g.error < best.error {
            best = g;
        }
    }
    Ok(best)
}

pub fn bound_met(inst: &ProblemInstance, error: f64) -> bool {
    error <= inst.tol() * (1.0 + FEAS_SLACK)
}

/// Smallest support size whose best phase fit meets the bound, searching
/// sizes `0..=m_max`.
pub fn brute_force(inst: &ProblemInstance, m_max: usize) -> Result<OracleResult> {
    let n = inst.n_antennas();
    if n > MAX_ANTENNAS {
        return Err(Error::InvalidInstance(format!("brute force is limited to N ≤ {MAX_ANTENNAS}, got {n}")));
    }
    let zero_err = inst.desired_norm();
    let mut visited = 1;
    if bound_met(inst, zero_err) {
        return Ok(OracleResult {
            cardinality: Some(0),
            witness: Some(ComplexSolution { x: vec![Complex64::new(0.0, 0.0); n] }),
            support_errors: vec![SupportError { support: Vec::new(), error: zero_err }],
            supports_visited: visited,
        });
    }
    let mut last_level = Vec::new();
    for m in 1..=m_max.min(n) {
        let supports: Vec<Vec<usize>> = (0..n).combinations(m).collect();
        visited += supports.len();
        let fits: Vec<PhaseFit> =
            supports.par_iter().map(|s| best_phase_fit(inst, s)).collect::<Result<Vec<_>>>()?;
        let best = fits.iter().enumerate().min_by(|a, b| a.1.error.total_cmp(&b.1.error)).map(|(i, _)| i);
        last_level = supports
            .iter()
            .zip(&fits)
            .map(|(s, f)| SupportError { support: s.clone(), error: f.error })
            .collect();
        if let Some(i) = best.filter(|&i| bound_met(inst, fits[i].error)) {
            return Ok(OracleResult {
                cardinality: Some(m),
                witness: Some(ComplexSolution { x: fits[i].x.clone() }),
                support_errors: last_level,
                supports_visited: visited,
            });
        }
    }
    Ok(OracleResult { cardinality: None, witness: None, support_errors: last_level, supports_visited: visited })
}
