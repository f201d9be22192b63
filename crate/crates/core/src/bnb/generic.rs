//! Treatment of `w² + z² ≥ b` as a general nonconvex quadratic constraint:
//! interval propagation, box secants and variable bisection.

use crate::modulus::AntennaBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Fbbt {
    Unchanged,
    Tightened,
    Infeasible,
}

fn min_sq(l: f64, h: f64) -> f64 {
    if l <= 0.0 && h >= 0.0 {
        0.0
    } else {
        (l * l).min(h * h)
    }
}

fn max_sq(l: f64, h: f64) -> f64 {
    (l * l).max(h * h)
}

/// Interval propagation of `w² + z² ≤ b_hi` and, when `b` is fixed to one,
/// of `w² + z² ≥ 1`.
pub(crate) fn fbbt(bx: &mut AntennaBox, b_hi: f64, b_fixed_one: bool) -> Fbbt {
    let old = *bx;
    let rw = (b_hi - min_sq(bx.z_lo, bx.z_hi)).max(0.0).sqrt();
    bx.w_lo = bx.w_lo.max(-rw);
    bx.w_hi = bx.w_hi.min(rw);
    let rz = (b_hi - min_sq(bx.w_lo, bx.w_hi)).max(0.0).sqrt();
    bx.z_lo = bx.z_lo.max(-rz);
    bx.z_hi = bx.z_hi.min(rz);
    if b_fixed_one {
        let r = (1.0 - max_sq(bx.z_lo, bx.z_hi)).max(0.0).sqrt();
        exclude_open(&mut bx.w_lo, &mut bx.w_hi, r);
        let r = (1.0 - max_sq(bx.w_lo, bx.w_hi)).max(0.0).sqrt();
        exclude_open(&mut bx.z_lo, &mut bx.z_hi, r);
    }
    if bx.w_lo > bx.w_hi + 1e-12 || bx.z_lo > bx.z_hi + 1e-12 {
        return Fbbt::Infeasible;
    }
    bx.w_hi = bx.w_hi.max(bx.w_lo);
    bx.z_hi = bx.z_hi.max(bx.z_lo);
    let moved = (bx.w_lo - old.w_lo).abs() > 1e-9
        || (bx.w_hi - old.w_hi).abs() > 1e-9
        || (bx.z_lo - old.z_lo).abs() > 1e-9
        || (bx.z_hi - old.z_hi).abs() > 1e-9;
    if moved {
        Fbbt::Tightened
    } else {
        Fbbt::Unchanged
    }
}

/// Removes `(−r, r)` from `[lo, hi]` where that leaves an interval.
fn exclude_open(lo: &mut f64, hi: &mut f64, r: f64) {
    if r <= 0.0 {
        return;
    }
    if *lo > -r && *hi < r {
        *lo = r;
        *hi = -r;
    } else if *lo > -r {
        *lo = lo.max(r);
    } else if *hi < r {
        *hi = hi.min(-r);
    }
}

/// Which coordinate to bisect and where: the wider of `w`, `z`, at the LP
/// value pulled at least a fifth of the width away from either bound.
pub(crate) fn spatial_split(bx: &AntennaBox, w: f64, z: f64) -> Option<(bool, f64)> {
    let ww = bx.w_hi - bx.w_lo;
    let wz = bx.z_hi - bx.z_lo;
    let (on_w, l, h, v) = if ww >= wz { (true, bx.w_lo, bx.w_hi, w) } else { (false, bx.z_lo, bx.z_hi, z) };
    let width = h - l;
    if width < 1e-9 {
        return None;
    }
    Some((on_w, v.clamp(l + 0.2 * width, h - 0.2 * width)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_modulus_pushes_out() {
        let mut bx = AntennaBox::new(-0.5, 1.0, -0.6, 0.6);
        assert_eq!(fbbt(&mut bx, 1.0, true), Fbbt::Tightened);
        assert!((bx.w_lo - 0.8).abs() < 1e-12);
    }

    #[test]
    fn inner_box_infeasible() {
        let mut bx = AntennaBox::new(-0.5, 0.5, -0.5, 0.5);
        assert_eq!(fbbt(&mut bx, 1.0, true), Fbbt::Infeasible);
    }

    #[test]
    fn free_binary_only_upper() {
        let mut bx = AntennaBox::new(-1.0, 1.0, 0.8, 1.0);
        fbbt(&mut bx, 1.0, false);
        assert!((bx.w_hi - 0.6).abs() < 1e-12);
        assert!((bx.w_lo + 0.6).abs() < 1e-12);
    }

    #[test]
    fn split_prefers_wider() {
        let bx = AntennaBox::new(0.0, 1.0, -1.0, 1.0);
        assert_eq!(spatial_split(&bx, 0.5, 0.9), Some((false, 0.6)));
    }
}
