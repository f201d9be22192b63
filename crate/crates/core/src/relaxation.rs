//! Root LP relaxation and gradient-cut separation for the convex quadratic
//! constraints.
//!
//! Column layout for `N` antennas: `w_n` at `n`, `z_n` at `N + n`, `b_n` at
//! `2N + n`. The root LP minimizes `Σ b_n` with `b_n ∈ [0, 1]`, the box
//! `|w_n|, |z_n| ≤ 1` and, per antenna, the eight octagon rows
//! `|w_n| ≤ b_n`, `|z_n| ≤ b_n`, `±w_n ± z_n ≤ √2·b_n`.

use std::f64::consts::SQRT_2;
use std::rc::Rc;

use crate::lp::{LpModel, Row};
use crate::model::RealInstance;

/// Gradient cuts kept per node before inactive ones are evicted.
pub const CUTS_PER_ANTENNA: usize = 50;

/// Cutting rounds per node before the convex constraints are treated as
/// enforced within tolerance.
pub const MAX_SEPARATION_ROUNDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelaxationLayout {
    n: usize,
}

impl RelaxationLayout {
    pub fn new(n_antennas: usize) -> Self {
        Self { n: n_antennas }
    }

    pub fn n_antennas(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn w(&self, n: usize) -> usize {
        n
    }

    #[inline]
    pub fn z(&self, n: usize) -> usize {
        self.n + n
    }

    #[inline]
    pub fn b(&self, n: usize) -> usize {
        2 * self.n + n
    }

    pub fn n_structural(&self) -> usize {
        3 * self.n
    }

    /// Rows `8n .. 8n + 8` of the root model belong to antenna `n`.
    pub fn octagon_row_ids(&self, n: usize) -> std::ops::Range<usize> {
        8 * n..8 * n + 8
    }

    /// Splits an LP point into `(w, z, b)` slices.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        (&x[..self.n], &x[self.n..2 * self.n], &x[2 * self.n..3 * self.n])
    }
}

/// The eight octagon rows of antenna `n`, each written as `… ≤ 0`.
pub fn octagon_rows(layout: &RelaxationLayout, n: usize) -> [Row; 8] {
    let (w, z, b) = (layout.w(n), layout.z(n), layout.b(n));
    [
        Row::le(vec![(w, 1.0), (b, -1.0)], 0.0),
        Row::le(vec![(w, -1.0), (b, -1.0)], 0.0),
        Row::le(vec![(z, 1.0), (b, -1.0)], 0.0),
        Row::le(vec![(z, -1.0), (b, -1.0)], 0.0),
        Row::le(vec![(w, 1.0), (z, 1.0), (b, -SQRT_2)], 0.0),
        Row::le(vec![(w, 1.0), (z, -1.0), (b, -SQRT_2)], 0.0),
        Row::le(vec![(w, -1.0), (z, 1.0), (b, -SQRT_2)], 0.0),
        Row::le(vec![(w, -1.0), (z, -1.0), (b, -SQRT_2)], 0.0),
    ]
}

/// Root LP: binaries relaxed to `[0, 1]`, nonlinear constraints dropped,
/// octagon rows added.
pub fn build_root(inst: &RealInstance) -> (LpModel, RelaxationLayout) {
    let layout = RelaxationLayout::new(inst.n_antennas);
    let mut model = LpModel::new();
    for _ in 0..inst.n_antennas {
        model.add_var(-1.0, 1.0, 0.0).expect("valid bounds");
    }
    for _ in 0..inst.n_antennas {
        model.add_var(-1.0, 1.0, 0.0).expect("valid bounds");
    }
    for _ in 0..inst.n_antennas {
        model.add_var(0.0, 1.0, 1.0).expect("valid bounds");
    }
    for n in 0..inst.n_antennas {
        model.add_rows(octagon_rows(&layout, n)).expect("octagon rows reference existing columns");
    }
    (model, layout)
}

/// Gradient cut for the error constraint at `point` when it is violated by
/// more than `feas_tol`: `g(p) + ∇g(p)·((w, z) − p) ≤ 0` with
/// `g = error_sq − δ`.
pub fn separate_error_soc(
    inst: &RealInstance,
    layout: &RelaxationLayout,
    point: &[f64],
    feas_tol: f64,
) -> Option<Row> {
    let (w, z, _) = layout.split(point);
    let (g, gw, gz) = inst.error_constraint(w, z);
    if g <= feas_tol {
        return None;
    }
    let mut coeffs = Vec::with_capacity(2 * layout.n);
    let mut rhs = -g;
    for n in 0..layout.n {
        if gw[n] != 0.0 {
            coeffs.push((layout.w(n), gw[n]));
            rhs += gw[n] * w[n];
        }
        if gz[n] != 0.0 {
            coeffs.push((layout.z(n), gz[n]));
            rhs += gz[n] * z[n];
        }
    }
    Some(Row::le(coeffs, rhs))
}

/// Gradient cut `2ŵ·w + 2ẑ·z − b ≤ ŵ² + ẑ²` for `w² + z² ≤ b` at antenna
/// `n` when violated by more than `feas_tol`.
pub fn separate_upper_modulus(
    layout: &RelaxationLayout,
    n: usize,
    point: &[f64],
    feas_tol: f64,
) -> Option<Row> {
    let (w, z, b) = (point[layout.w(n)], point[layout.z(n)], point[layout.b(n)]);
    let m2 = w * w + z * z;
    if m2 <= b + feas_tol {
        return None;
    }
    Some(Row::le(vec![(layout.w(n), 2.0 * w), (layout.z(n), 2.0 * z), (layout.b(n), -1.0)], m2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutKind {
    ErrorGradient,
    ModulusGradient,
}

/// A globally valid cut with a creation stamp used for age-based eviction.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub id: u64,
    pub kind: CutKind,
    pub row: Row,
}

/// Drops the oldest cuts that are slack at `point` until at most `cap`
/// remain. Cuts tight at `point` are kept even above the cap.
pub fn evict_inactive(cuts: &mut Vec<Rc<Cut>>, cap: usize, point: &[f64]) {
    if cuts.len() <= cap {
        return;
    }
    let mut order: Vec<usize> = (0..cuts.len()).collect();
    order.sort_by_key(|&i| cuts[i].id);
    let mut excess = cuts.len() - cap;
    let mut drop = vec![false; cuts.len()];
    for i in order {
        if excess == 0 {
            break;
        }
        let r = &cuts[i].row;
        let act = r.activity(point);
        let slack = (r.hi - act).min(act - r.lo);
        if slack > 1e-6 * (1.0 + r.hi.abs().min(r.lo.abs())) {
            drop[i] = true;
            excess -= 1;
        }
    }
    let mut idx = 0;
    cuts.retain(|_| {
        let keep = !drop[idx];
        idx += 1;
        keep
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve, LpStatus};
    use crate::model::{generate_instance, ProblemInstance};
    use num_complex::Complex64;

    fn point(layout: &RelaxationLayout, w: &[f64], z: &[f64], b: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; layout.n_structural()];
        for n in 0..layout.n_antennas() {
            p[layout.w(n)] = w[n];
            p[layout.z(n)] = z[n];
            p[layout.b(n)] = b[n];
        }
        p
    }

    #[test]
    fn octagon_cuts_corner_point() {
        let inst = generate_instance(1, 1, 0.1, 1).unwrap().to_real();
        let (model, layout) = build_root(&inst);
        let p = point(&layout, &[0.9], &[0.9], &[1.0]);
        let worst = model.rows().iter().map(|r| r.violation(&p)).fold(0.0, f64::max);
        assert!(worst > 0.38 && worst < 0.39, "w+z-√2b = 1.8-1.4142");
    }

    #[test]
    fn circle_vertex_satisfies_octagon() {
        let inst = generate_instance(1, 1, 0.1, 1).unwrap().to_real();
        let (model, layout) = build_root(&inst);
        let p = point(&layout, &[1.0], &[0.0], &[1.0]);
        let tight = model.rows().iter().filter(|r| r.activity(&p).abs() < 1e-12).count();
        assert!(model.rows().iter().all(|r| r.violation(&p) == 0.0));
        assert_eq!(tight, 1, "only w ≤ b is active");
    }

    #[test]
    fn root_objective_zero_when_budget_covers_desired() {
        let inst = generate_instance(5, 2, 0.1, 3).unwrap();
        let inst = inst.with_tol(inst.desired_norm() + 0.01).unwrap().to_real();
        let (model, _) = build_root(&inst);
        let sol = solve(&model, None);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn scalar_error_cut() {
        let inst = ProblemInstance::new(1, 1, vec![Complex64::new(1.0, 0.0)], vec![Complex64::new(2.0, 0.0)], 0.5)
            .unwrap()
            .to_real();
        assert_eq!(inst.delta, 0.25);
        let layout = RelaxationLayout::new(1);
        let cut = separate_error_soc(&inst, &layout, &[0.0, 0.0, 0.0], 1e-7).unwrap();
        // 3.75 − 4w ≤ 0  ⇔  −4w ≤ −3.75
        assert_eq!(cut.coeffs, vec![(0, -4.0)]);
        assert!((cut.hi + 3.75).abs() < 1e-12);
        assert!(separate_error_soc(&inst, &layout, &[2.0, 0.0, 1.0], 1e-7).is_none());
    }

    #[test]
    fn upper_modulus_cut() {
        let layout = RelaxationLayout::new(1);
        let cut = separate_upper_modulus(&layout, 0, &[1.0, 1.0, 1.0], 1e-7).unwrap();
        assert_eq!(cut.coeffs, vec![(0, 2.0), (1, 2.0), (2, -1.0)]);
        assert_eq!(cut.hi, 2.0);
        assert!(cut.violation(&[1.0, 1.0, 1.0]) > 0.99);
        assert!(separate_upper_modulus(&layout, 0, &[0.5, 0.0, 1.0], 1e-7).is_none());
    }

    #[test]
    fn eviction_keeps_tight_cuts() {
        let mk = |id, hi| Rc::new(Cut { id, kind: CutKind::ErrorGradient, row: Row::le(vec![(0, 1.0)], hi) });
        let mut cuts = vec![mk(0, 5.0), mk(1, 1.0), mk(2, 7.0), mk(3, 9.0)];
        evict_inactive(&mut cuts, 2, &[1.0]);
        let ids: Vec<u64> = cuts.iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![1, 3]);
    }
}
