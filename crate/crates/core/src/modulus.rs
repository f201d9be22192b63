//! Handler for the nonconvex lower modulus constraints `w_n² + z_n² ≥ b_n`.
//!
//! Every routine works in the first-quadrant frame: a box in orthant `Q`
//! is reflected into `w, z ≥ 0` by sign flips, processed there, and mapped
//! back. An antenna whose orthant is assigned carries an angular interval
//! `[α, β] ⊆ [0, π/2]` (in that frame) containing every unit-circle point of
//! its box.

use std::f64::consts::FRAC_PI_2;

use crate::lp::Row;
use crate::relaxation::RelaxationLayout;

/// Arcs narrower than this (radians) are accepted instead of branched.
pub const DEGENERATE_ARC: f64 = 1e-9;

/// Minimum violation for a secant cut to be worth adding; smaller
/// violations would be rejected again by the LP feasibility tolerance.
pub const CUT_MIN_VIOLATION: f64 = 1e-6;

const ANGLE_SLACK: f64 = 1e-12;
const TIGHTEN_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orthant {
    /// `w ≥ 0, z ≥ 0`
    Q1,
    /// `w ≤ 0, z ≥ 0`
    Q2,
    /// `w ≤ 0, z ≤ 0`
    Q3,
    /// `w ≥ 0, z ≤ 0`
    Q4,
}

impl Orthant {
    /// Order in which orthant children are created.
    pub const BRANCH_ORDER: [Orthant; 4] = [Orthant::Q1, Orthant::Q4, Orthant::Q3, Orthant::Q2];

    /// Sign flips `(σ_w, σ_z)` mapping this orthant onto the first quadrant.
    pub fn signs(self) -> (f64, f64) {
        match self {
            Orthant::Q1 => (1.0, 1.0),
            Orthant::Q2 => (-1.0, 1.0),
            Orthant::Q3 => (-1.0, -1.0),
            Orthant::Q4 => (1.0, -1.0),
        }
    }
}

/// Bounds of one antenna's `(w, z)` pair in original coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntennaBox {
    pub w_lo: f64,
    pub w_hi: f64,
    pub z_lo: f64,
    pub z_hi: f64,
}

impl AntennaBox {
    pub const FULL: AntennaBox = AntennaBox { w_lo: -1.0, w_hi: 1.0, z_lo: -1.0, z_hi: 1.0 };

    pub fn new(w_lo: f64, w_hi: f64, z_lo: f64, z_hi: f64) -> Self {
        Self { w_lo, w_hi, z_lo, z_hi }
    }

    pub fn is_empty(&self) -> bool {
        self.w_lo > self.w_hi || self.z_lo > self.z_hi
    }

    pub fn contains(&self, w: f64, z: f64, tol: f64) -> bool {
        w >= self.w_lo - tol && w <= self.w_hi + tol && z >= self.z_lo - tol && z <= self.z_hi + tol
    }

    pub fn intersect(&self, other: &AntennaBox) -> AntennaBox {
        AntennaBox {
            w_lo: self.w_lo.max(other.w_lo),
            w_hi: self.w_hi.min(other.w_hi),
            z_lo: self.z_lo.max(other.z_lo),
            z_hi: self.z_hi.min(other.z_hi),
        }
    }

    /// Closed quadrant of `o`, clipped to the unit box.
    pub fn quadrant(o: Orthant) -> AntennaBox {
        AntennaBox::new(0.0, 1.0, 0.0, 1.0).reflect(o)
    }

    /// Applies the sign flips of `o`. The map is an involution, so it takes
    /// boxes into and out of the first-quadrant frame.
    pub fn reflect(&self, o: Orthant) -> AntennaBox {
        let (sw, sz) = o.signs();
        let (w_lo, w_hi) = if sw > 0.0 { (self.w_lo, self.w_hi) } else { (-self.w_hi, -self.w_lo) };
        let (z_lo, z_hi) = if sz > 0.0 { (self.z_lo, self.z_hi) } else { (-self.z_hi, -self.z_lo) };
        AntennaBox { w_lo, w_hi, z_lo, z_hi }
    }

    fn moved_from(&self, old: &AntennaBox) -> bool {
        (self.w_lo - old.w_lo).abs() > TIGHTEN_MIN
            || (self.w_hi - old.w_hi).abs() > TIGHTEN_MIN
            || (self.z_lo - old.z_lo).abs() > TIGHTEN_MIN
            || (self.z_hi - old.z_hi).abs() > TIGHTEN_MIN
    }
}

/// Per-antenna branching state of the modulus handler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularState {
    pub orthant: Option<Orthant>,
    /// Arc start in the first-quadrant frame.
    pub alpha: f64,
    /// Arc end in the first-quadrant frame.
    pub beta: f64,
    /// Whether the secant of `[alpha, beta]` belongs to the node LP.
    pub secant: bool,
}

impl Default for AngularState {
    fn default() -> Self {
        Self { orthant: None, alpha: 0.0, beta: FRAC_PI_2, secant: false }
    }
}

impl AngularState {
    pub fn in_orthant(o: Orthant) -> Self {
        Self { orthant: Some(o), ..Self::default() }
    }

    pub fn width(&self) -> f64 {
        self.beta - self.alpha
    }

    /// `(f, g)` with `f·w + g·z ≥ 1` the secant through both arc endpoints,
    /// first-quadrant frame.
    pub fn secant_coeffs(&self) -> (f64, f64) {
        secant_coeffs(self.alpha, self.beta)
    }

    /// The arc's angles mapped back to the original plane, in radians.
    pub fn arc_in_plane(&self) -> Option<(f64, f64)> {
        let o = self.orthant?;
        let map = |t: f64| {
            let (sw, sz) = o.signs();
            (sz * t.sin()).atan2(sw * t.cos())
        };
        Some((map(self.alpha), map(self.beta)))
    }
}

/// Secant through `(cos α, sin α)` and `(cos β, sin β)` as `f·w + g·z = 1`.
pub fn secant_coeffs(alpha: f64, beta: f64) -> (f64, f64) {
    let m = 0.5 * (alpha + beta);
    let h = 0.5 * (beta - alpha);
    let c = h.cos();
    (m.cos() / c, m.sin() / c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusViolation {
    pub antenna: usize,
    pub rho: f64,
}

/// Most violated antenna by `ρ(n) = b̂_n − (ŵ_n² + ẑ_n²)`, restricted to
/// antennas with squared modulus below `1 − eps`; ties go to the lowest index.
pub fn select_violated(w: &[f64], z: &[f64], b: &[f64], eps: f64) -> Option<ModulusViolation> {
    let mut best: Option<ModulusViolation> = None;
    for n in 0..b.len() {
        let m2 = w[n] * w[n] + z[n] * z[n];
        let rho = b[n] - m2;
        if rho > 0.0 && m2 < 1.0 - eps && best.map_or(true, |v| rho > v.rho) {
            best = Some(ModulusViolation { antenna: n, rho });
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixOutcome {
    Fixed,
    NotApplicable,
}

/// Collapses the box to the origin when `b_n` is fixed to zero.
pub fn try_fix(b_hi: f64, bx: &mut AntennaBox) -> FixOutcome {
    if b_hi > 0.0 {
        return FixOutcome::NotApplicable;
    }
    *bx = AntennaBox::new(0.0, 0.0, 0.0, 0.0);
    FixOutcome::Fixed
}

/// The four orthant children of an unassigned antenna. A child whose box is
/// empty cannot contain any point of the parent and may be dropped.
pub fn branch_orthants(bx: &AntennaBox) -> [(AngularState, AntennaBox); 4] {
    Orthant::BRANCH_ORDER.map(|o| (AngularState::in_orthant(o), bx.intersect(&AntennaBox::quadrant(o))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    Unchanged,
    Tightened,
    /// No unit-circle point remains while `b_n` is still free: `b_n` must be 0.
    ForceZero,
    Infeasible,
}

fn arc_f(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    (1.0 - x * x).sqrt()
}

/// Arc bound propagation for an antenna with an assigned orthant.
///
/// Upper bounds follow `u₁' = min(u₁, f(l₂))`, `u₂' = min(u₂, f(l₁))`; lower
/// bounds `l₁' = max(l₁, f(u₂))`, `l₂' = max(l₂, f(u₁))` only when `b_n` is
/// fixed to one. The angular interval is then synchronized with the box.
pub fn propagate(state: &mut AngularState, bx: &mut AntennaBox, b_fixed_one: bool) -> Propagation {
    let Some(o) = state.orthant else {
        return Propagation::Unchanged;
    };
    let old = *bx;
    let mut c = bx.reflect(o);
    c.w_lo = c.w_lo.max(0.0);
    c.z_lo = c.z_lo.max(0.0);
    let contains_origin = c.w_lo <= 0.0 && c.z_lo <= 0.0;

    let (l1, u1, l2, u2) = (c.w_lo, c.w_hi, c.z_lo, c.z_hi);
    c.w_hi = u1.min(arc_f(l2));
    c.z_hi = u2.min(arc_f(l1));
    if b_fixed_one {
        c.w_lo = l1.max(arc_f(u2));
        c.z_lo = l2.max(arc_f(u1));
    }

    let empty = |c: &AntennaBox| c.w_lo > c.w_hi + ANGLE_SLACK || c.z_lo > c.z_hi + ANGLE_SLACK;
    let circle_empty = c.w_lo > 1.0 || c.z_lo > 1.0 || c.w_hi < 0.0 || c.z_hi < 0.0 || empty(&c);
    let (alpha, beta) = if circle_empty {
        (1.0, 0.0)
    } else {
        let alpha = state.alpha.max(c.w_hi.min(1.0).acos()).max(c.z_lo.min(1.0).asin());
        let beta = state.beta.min(c.w_lo.min(1.0).acos()).min(c.z_hi.min(1.0).asin());
        (alpha, beta)
    };
    if alpha > beta + ANGLE_SLACK {
        if b_fixed_one || !contains_origin {
            return Propagation::Infeasible;
        }
        *bx = AntennaBox::new(0.0, 0.0, 0.0, 0.0);
        return Propagation::ForceZero;
    }
    let beta = beta.max(alpha);
    state.alpha = alpha;
    state.beta = beta;
    c = tighten_to_arc(&c, alpha, beta, b_fixed_one);
    fix_crossing(&mut c);
    *bx = c.reflect(o);
    if bx.moved_from(&old) {
        Propagation::Tightened
    } else {
        Propagation::Unchanged
    }
}

/// Intersects a first-quadrant box with the bounding box of arc `[α, β]`;
/// lower bounds only when the origin is excluded (`b_n = 1`).
fn tighten_to_arc(c: &AntennaBox, alpha: f64, beta: f64, b_fixed_one: bool) -> AntennaBox {
    let mut c = *c;
    c.w_hi = c.w_hi.min(alpha.cos());
    c.z_hi = c.z_hi.min(beta.sin());
    if b_fixed_one {
        c.w_lo = c.w_lo.max(beta.cos());
        c.z_lo = c.z_lo.max(alpha.sin());
    }
    c
}

/// Rounding can leave `lo` a hair above `hi` at a single-point arc.
fn fix_crossing(c: &mut AntennaBox) {
    if c.w_lo > c.w_hi {
        let m = 0.5 * (c.w_lo + c.w_hi);
        c.w_lo = m;
        c.w_hi = m;
    }
    if c.z_lo > c.z_hi {
        let m = 0.5 * (c.z_lo + c.z_hi);
        c.z_lo = m;
        c.z_hi = m;
    }
}

/// The secant of the antenna's current arc, `f·σ_w·w + g·σ_z·z − b ≥ 0`.
/// On the full quadrant this is the chord `σ_w·w + σ_z·z ≥ b`.
pub fn secant_row(layout: &RelaxationLayout, n: usize, state: &AngularState) -> Option<Row> {
    let o = state.orthant?;
    let (sw, sz) = o.signs();
    let (f, g) = state.secant_coeffs();
    Some(Row::ge(vec![(layout.w(n), f * sw), (layout.z(n), g * sz), (layout.b(n), -1.0)], 0.0))
}

/// Secant cut for the current arc when the point violates it and lies
/// strictly inside the `1 − eps` disk.
pub fn separate_chord(
    layout: &RelaxationLayout,
    n: usize,
    state: &AngularState,
    point: &[f64],
    eps: f64,
) -> Option<Row> {
    let (w, z, b) = (point[layout.w(n)], point[layout.z(n)], point[layout.b(n)]);
    if w * w + z * z >= 1.0 - eps {
        return None;
    }
    let row = secant_row(layout, n, state)?;
    if row.violation(point) > CUT_MIN_VIOLATION * (1.0 + b.abs()) {
        Some(row)
    } else {
        None
    }
}

/// Splits the arc at its midpoint. Child A covers `[mid, β]`, child B
/// `[α, mid]`; both carry their secant and the sub-arc's bounding box.
/// Returns `None` for arcs narrower than [`DEGENERATE_ARC`].
pub fn branch_subarc(
    state: &AngularState,
    bx: &AntennaBox,
    b_fixed_one: bool,
) -> Option<[(AngularState, AntennaBox); 2]> {
    let o = state.orthant?;
    if state.width() < DEGENERATE_ARC {
        return None;
    }
    let mid = 0.5 * (state.alpha + state.beta);
    let c = bx.reflect(o);
    let child = |alpha: f64, beta: f64| {
        let st = AngularState { orthant: Some(o), alpha, beta, secant: true };
        let mut cb = tighten_to_arc(&c, alpha, beta, b_fixed_one);
        fix_crossing(&mut cb);
        (st, cb.reflect(o))
    };
    Some([child(mid, state.beta), child(state.alpha, mid)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn select_argmax() {
        let w = [0.2f64.sqrt(), 0.7f64.sqrt()];
        let v = select_violated(&w, &[0.0, 0.0], &[1.0, 1.0], 1e-5).unwrap();
        assert_eq!(v.antenna, 0);
        assert!((v.rho - 0.8).abs() < 1e-12);
    }

    #[test]
    fn select_tie_lowest_index() {
        let w = [0.5f64.sqrt(), 0.0];
        let z = [0.0, 0.5f64.sqrt()];
        assert_eq!(select_violated(&w, &z, &[1.0, 1.0], 1e-5).unwrap().antenna, 0);
    }

    #[test]
    fn select_accepts_band() {
        let w = [(1.0f64 - 1e-6).sqrt(), 1.0, 0.0];
        let z = [0.0, 0.0, 1.0];
        assert!(select_violated(&w, &z, &[1.0, 1.0, 1.0], 1e-5).is_none());
    }

    #[test]
    fn fix_collapses_box() {
        let mut bx = AntennaBox::FULL;
        assert_eq!(try_fix(0.0, &mut bx), FixOutcome::Fixed);
        assert_eq!(bx, AntennaBox::new(0.0, 0.0, 0.0, 0.0));
        let mut bx = AntennaBox::FULL;
        assert_eq!(try_fix(1.0, &mut bx), FixOutcome::NotApplicable);
        assert_eq!(bx, AntennaBox::FULL);
    }

    #[test]
    fn orthant_children_tile() {
        let kids = branch_orthants(&AntennaBox::FULL);
        let orthants: Vec<_> = kids.iter().map(|k| k.0.orthant.unwrap()).collect();
        assert_eq!(orthants, Orthant::BRANCH_ORDER);
        assert_eq!(kids[1].1, AntennaBox::new(0.0, 1.0, -1.0, 0.0));
        let area: f64 = kids.iter().map(|(_, b)| (b.w_hi - b.w_lo) * (b.z_hi - b.z_lo)).sum();
        assert!(close(area, 4.0));
        let t = 0.75 * PI;
        let hits: Vec<_> =
            kids.iter().filter(|(_, b)| b.contains(t.cos(), t.sin(), 0.0)).map(|k| k.0.orthant.unwrap()).collect();
        assert_eq!(hits, vec![Orthant::Q2]);
    }

    #[test]
    fn propagate_upper_from_lower() {
        let mut st = AngularState::in_orthant(Orthant::Q1);
        let mut bx = AntennaBox::new(0.0, 1.0, 0.6, 1.0);
        assert_eq!(propagate(&mut st, &mut bx, true), Propagation::Tightened);
        assert!(bx.w_lo.abs() < 1e-12);
        assert!(close(bx.w_hi, 0.8));
        assert!(close(bx.z_lo, 0.6));
        assert!(close(bx.z_hi, 1.0));
        assert!(close(st.alpha, 0.6f64.asin()));
        assert!(close(st.beta, FRAC_PI_2));
    }

    #[test]
    fn propagate_empty_arc() {
        let mut st = AngularState::in_orthant(Orthant::Q1);
        let mut bx = AntennaBox::new(0.8, 1.0, 0.8, 1.0);
        assert_eq!(propagate(&mut st, &mut bx, true), Propagation::Infeasible);
    }

    #[test]
    fn propagate_reflected() {
        let mut st = AngularState::in_orthant(Orthant::Q3);
        let mut bx = AntennaBox::new(-1.0, 0.0, -1.0, -0.6);
        propagate(&mut st, &mut bx, true);
        assert!(close(bx.w_lo, -0.8));
        assert!(close(bx.z_hi, -0.6));
    }

    #[test]
    fn propagate_free_binary_keeps_lower_bounds() {
        let mut st = AngularState::in_orthant(Orthant::Q1);
        let mut bx = AntennaBox::new(0.0, 0.5, 0.0, 1.0);
        propagate(&mut st, &mut bx, false);
        assert_eq!(bx.w_lo, 0.0);
        assert_eq!(bx.z_lo, 0.0);
        assert!(close(st.alpha, 0.5f64.acos()));
    }

    #[test]
    fn propagate_force_zero() {
        let mut st = AngularState { orthant: Some(Orthant::Q1), alpha: 0.0, beta: 0.2, secant: true };
        let mut bx = AntennaBox::new(0.0, 0.5, 0.0, 1.0);
        assert_eq!(propagate(&mut st, &mut bx, false), Propagation::ForceZero);
        assert_eq!(bx, AntennaBox::new(0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn chord_cut() {
        let layout = RelaxationLayout::new(1);
        let st = AngularState::in_orthant(Orthant::Q1);
        let row = separate_chord(&layout, 0, &st, &[0.4, 0.4, 1.0], 1e-5).unwrap();
        assert!(close(row.coeffs[0].1, 1.0) && close(row.coeffs[1].1, 1.0));
        assert_eq!(row.coeffs[2], (2, -1.0));
        assert!(separate_chord(&layout, 0, &st, &[0.9, 0.5, 1.0], 1e-5).is_none());
    }

    #[test]
    fn chord_reflected_sign() {
        let layout = RelaxationLayout::new(1);
        let st = AngularState::in_orthant(Orthant::Q4);
        let row = separate_chord(&layout, 0, &st, &[0.4, -0.4, 1.0], 1e-5).unwrap();
        assert!(close(row.coeffs[0].1, 1.0) && close(row.coeffs[1].1, -1.0));
    }

    #[test]
    fn subarc_full_quadrant() {
        let st = AngularState::in_orthant(Orthant::Q1);
        let [(a, _), (b, bbox)] = branch_subarc(&st, &AntennaBox::quadrant(Orthant::Q1), true).unwrap();
        assert!(close(a.alpha, PI / 4.0) && close(a.beta, PI / 2.0));
        let (f, g) = b.secant_coeffs();
        let t = PI / 8.0;
        assert!(close(f, 1.0));
        assert!(close(g * t.cos(), t.sin()));
        assert!(close(bbox.w_lo, (PI / 4.0).cos()));
        let p = [0.6, 0.6, 1.0];
        let layout = RelaxationLayout::new(1);
        for st in [a, b] {
            assert!(secant_row(&layout, 0, &st).unwrap().violation(&p) > 0.1);
        }
    }

    #[test]
    fn subarc_degenerate() {
        let st = AngularState { orthant: Some(Orthant::Q2), alpha: 0.3, beta: 0.3 + 1e-10, secant: true };
        assert!(branch_subarc(&st, &AntennaBox::quadrant(Orthant::Q2), true).is_none());
    }

    #[test]
    fn subarc_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layout = RelaxationLayout::new(1);
        for _ in 0..200 {
            let o = Orthant::BRANCH_ORDER[rng.random_range(0..4)];
            let a = rng.random_range(0.0..FRAC_PI_2);
            let b = rng.random_range(a..=FRAC_PI_2);
            let st = AngularState { orthant: Some(o), alpha: a, beta: b, secant: true };
            let mut bx = AntennaBox::quadrant(o);
            propagate(&mut st.clone(), &mut bx, true);
            let Some(kids) = branch_subarc(&st, &bx, true) else { continue };
            for _ in 0..50 {
                let t = rng.random_range(a..=b);
                let (sw, sz) = o.signs();
                let p = [sw * t.cos(), sz * t.sin(), 1.0];
                let ok = kids.iter().any(|(s, cb)| {
                    cb.contains(p[0], p[1], 1e-12) && secant_row(&layout, 0, s).unwrap().violation(&p) < 1e-12
                });
                assert!(ok);
            }
        }
    }

    #[test]
    fn plane_angles() {
        let st = AngularState { orthant: Some(Orthant::Q2), alpha: 0.0, beta: FRAC_PI_2, secant: false };
        let (a, b) = st.arc_in_plane().unwrap();
        assert!(close(a, PI) && close(b, FRAC_PI_2));
    }
}
