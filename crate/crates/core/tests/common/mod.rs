//! Sampling checks shared by several test targets.

#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use beamsel::model::RealInstance;
use beamsel::modulus::{self, AngularState, AntennaBox, Orthant, Propagation};
use beamsel::relaxation::RelaxationLayout;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_orthant(rng: &mut ChaCha8Rng) -> Orthant {
    Orthant::BRANCH_ORDER[rng.random_range(0..4)]
}

pub fn random_arc(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a = rng.random_range(0.0..FRAC_PI_2);
    let b = rng.random_range(0.0..FRAC_PI_2);
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    // a share of very narrow arcs
    if rng.random_bool(0.1) {
        (a, (a + rng.random_range(0.0..1e-6)).min(FRAC_PI_2))
    } else {
        (a, b)
    }
}

pub fn random_box(rng: &mut ChaCha8Rng, o: Orthant) -> AntennaBox {
    let mut side = || {
        let p = rng.random_range(-1.2..1.2);
        let q = rng.random_range(-1.2..1.2);
        if p <= q { (p, q) } else { (q, p) }
    };
    let (w, z) = (side(), side());
    let bx = if rng.random_bool(0.3) { AntennaBox::FULL } else { AntennaBox::new(w.0, w.1, z.0, z.1) };
    bx.intersect(&AntennaBox::quadrant(o))
}

pub fn on_circle(o: Orthant, t: f64) -> (f64, f64) {
    let (sw, sz) = o.signs();
    (sw * t.cos(), sz * t.sin())
}

/// Unit-circle points of the arc that lie in the box.
pub fn feasible_points(st: &AngularState, bx: &AntennaBox) -> Vec<(f64, f64)> {
    let o = st.orthant.unwrap();
    (0..=64)
        .map(|i| st.alpha + (st.beta - st.alpha) * i as f64 / 64.0)
        .map(|t| on_circle(o, t))
        .filter(|&(w, z)| bx.contains(w, z, 0.0))
        .collect()
}

pub fn covers(st: &AngularState, bx: &AntennaBox, w: f64, z: f64) -> bool {
    let o = st.orthant.unwrap();
    let (sw, sz) = o.signs();
    let t = (sz * z).atan2(sw * w);
    bx.contains(w, z, 1e-9) && t >= st.alpha - 1e-9 && t <= st.beta + 1e-9
}

/// Propagates `samples` random arc/box pairs and checks that every sampled
/// feasible point survives. Returns the number of points checked.
pub fn check_propagation(seed: u64, samples: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = 0;
    for _ in 0..samples {
        let o = random_orthant(&mut rng);
        let (alpha, beta) = random_arc(&mut rng);
        let mut st = AngularState { orthant: Some(o), alpha, beta, secant: false };
        let mut bx = random_box(&mut rng, o);
        if bx.is_empty() {
            continue;
        }
        let one = rng.random_bool(0.5);
        let before = feasible_points(&st, &bx);
        let origin = !one && bx.contains(0.0, 0.0, 0.0);
        let (st0, bx0) = (st, bx);
        let lost = |what: &str| format!("{what}: {st0:?} {bx0:?} had {before:?}");
        match modulus::propagate(&mut st, &mut bx, one) {
            Propagation::Infeasible => {
                if !before.is_empty() || origin {
                    return Err(lost("declared infeasible"));
                }
            }
            Propagation::ForceZero => {
                if !before.is_empty() || !bx.contains(0.0, 0.0, 0.0) {
                    return Err(lost("forced to zero"));
                }
            }
            Propagation::Tightened | Propagation::Unchanged => {
                for &(w, z) in &before {
                    if !covers(&st, &bx, w, z) {
                        return Err(lost(&format!("({w}, {z}) cut off by {st:?} {bx:?}")));
                    }
                    kept += 1;
                }
                if origin && !bx.contains(0.0, 0.0, 1e-12) {
                    return Err(lost("origin cut off"));
                }
            }
        }
    }
    Ok(kept)
}

/// Checks `samples` random secants against a point of their arc.
pub fn check_secants(seed: u64, samples: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = RelaxationLayout::new(1);
    for _ in 0..samples {
        let o = random_orthant(&mut rng);
        let (alpha, beta) = random_arc(&mut rng);
        let st = AngularState { orthant: Some(o), alpha, beta, secant: true };
        let row = modulus::secant_row(&layout, 0, &st).unwrap();
        let t = if beta > alpha { rng.random_range(alpha..=beta) } else { alpha };
        let (w, z) = on_circle(o, t);
        if row.violation(&[w, z, 1.0]) > 1e-9 {
            return Err(format!("{st:?} cuts off the circle at angle {t}"));
        }
        if row.violation(&[0.0, 0.0, 0.0]) != 0.0 {
            return Err(format!("{st:?} cuts off the origin"));
        }
        if beta - alpha > 1e-3 {
            let (w0, z0) = on_circle(o, alpha);
            let (w1, z1) = on_circle(o, beta);
            if row.violation(&[0.45 * (w0 + w1), 0.45 * (z0 + z1), 1.0]) <= 0.0 {
                return Err(format!("{st:?} does not cut inside its chord"));
            }
        }
    }
    Ok(())
}

pub fn random_point(rng: &mut ChaCha8Rng, n: usize, unit: bool) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            if unit {
                match rng.random_range(0..3) {
                    0 => Complex64::new(0.0, 0.0),
                    _ => Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)),
                }
            } else {
                Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5))
            }
        })
        .collect()
}

pub fn split(x: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    (x.iter().map(|c| c.re).collect(), x.iter().map(|c| c.im).collect())
}

/// Largest relative gap between the analytic error gradient and central
/// differences at `x`.
pub fn gradient_gap(real: &RealInstance, x: &[Complex64]) -> f64 {
    let h = 1e-6;
    let (w, z) = split(x);
    let (_, gw, gz) = real.error_constraint(&w, &z);
    let mut worst = 0.0f64;
    for n in 0..w.len() {
        let fd = |dw: f64, dz: f64| {
            let (mut wp, mut zp, mut wm, mut zm) = (w.clone(), z.clone(), w.clone(), z.clone());
            wp[n] += dw;
            zp[n] += dz;
            wm[n] -= dw;
            zm[n] -= dz;
            (real.error_sq(&wp, &zp) - real.error_sq(&wm, &zm)) / (2.0 * h)
        };
        for (analytic, numeric) in [(gw[n], fd(h, 0.0)), (gz[n], fd(0.0, h))] {
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1.0));
        }
    }
    worst
}
