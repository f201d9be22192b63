use std::cmp::Ordering;
use std::collections::HashMap;
use std::rc::Rc;

use crate::lp::{Basis, LpModel, LpSolver, Row, VarStatus};
use crate::modulus::{self, AngularState, AntennaBox};
use crate::relaxation::{Cut, RelaxationLayout};

/// Identity of an LP row across nodes, used to carry basis statuses from a
/// parent to its children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum RowKey {
    Root(usize),
    Cut(u64),
    Secant(usize),
    BoxSecant(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct KeyedBasis {
    cols: Vec<VarStatus>,
    rows: HashMap<RowKey, VarStatus>,
}

impl KeyedBasis {
    pub fn new(basis: &Basis, keys: &[RowKey]) -> Self {
        let rows = keys.iter().copied().zip(basis.rows.iter().copied()).collect();
        Self { cols: basis.cols.clone(), rows }
    }

    pub fn for_rows(&self, keys: &[RowKey]) -> Basis {
        Basis {
            cols: self.cols.clone(),
            rows: keys.iter().map(|k| self.rows.get(k).copied().unwrap_or(VarStatus::Basic)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub id: u64,
    pub depth: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub ang: Vec<AngularState>,
    /// Default variant: antenna carries the box secant of its current bounds.
    pub box_secant: Vec<bool>,
    pub cuts: Vec<Rc<Cut>>,
    pub lower_bound: f64,
    /// Modulus acceptance band; shrinks when polishing fails.
    pub eps: f64,
    pub hint: Option<Rc<KeyedBasis>>,
}

impl Node {
    pub fn antenna_box(&self, layout: &RelaxationLayout, n: usize) -> AntennaBox {
        let (w, z) = (layout.w(n), layout.z(n));
        AntennaBox::new(self.lo[w], self.hi[w], self.lo[z], self.hi[z])
    }

    pub fn set_antenna_box(&mut self, layout: &RelaxationLayout, n: usize, bx: &AntennaBox) {
        let (w, z) = (layout.w(n), layout.z(n));
        self.lo[w] = bx.w_lo;
        self.hi[w] = bx.w_hi;
        self.lo[z] = bx.z_lo;
        self.hi[z] = bx.z_hi;
    }

    /// Fixes `b_n = 0` and `w_n = z_n = 0`.
    pub fn fix_off(&mut self, layout: &RelaxationLayout, n: usize) {
        for j in [layout.w(n), layout.z(n), layout.b(n)] {
            self.lo[j] = 0.0;
            self.hi[j] = 0.0;
        }
    }

    pub fn fix_on(&mut self, layout: &RelaxationLayout, n: usize) {
        self.lo[layout.b(n)] = 1.0;
        self.hi[layout.b(n)] = 1.0;
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l > h)
    }

    /// Rows added on top of the root model, in LP order.
    pub fn local_rows(&self, layout: &RelaxationLayout) -> Vec<(RowKey, Row)> {
        let mut rows: Vec<(RowKey, Row)> = self.cuts.iter().map(|c| (RowKey::Cut(c.id), c.row.clone())).collect();
        for n in 0..layout.n_antennas() {
            if self.ang[n].secant {
                if let Some(r) = modulus::secant_row(layout, n, &self.ang[n]) {
                    rows.push((RowKey::Secant(n), r));
                }
            }
            if self.box_secant[n] {
                rows.push((RowKey::BoxSecant(n), box_secant_row(layout, n, &self.antenna_box(layout, n))));
            }
        }
        rows
    }

    pub fn build_lp(&self, root: &LpModel, layout: &RelaxationLayout, warm: bool) -> (LpSolver, Vec<RowKey>) {
        let mut model = root.clone();
        for j in 0..self.lo.len() {
            model.set_bounds(j, self.lo[j], self.hi[j]).expect("node bounds are nonempty");
        }
        let mut keys: Vec<RowKey> = (0..root.n_rows()).map(RowKey::Root).collect();
        let local = self.local_rows(layout);
        for (k, r) in local {
            keys.push(k);
            model.add_row(r).expect("rows reference model columns");
        }
        let solver = match (&self.hint, warm) {
            (Some(h), true) => LpSolver::with_basis(model, &h.for_rows(&keys)),
            _ => LpSolver::new(model),
        };
        (solver, keys)
    }
}

/// Overestimator of `w² + z²` on the box, used as `b ≤ secant`:
/// `(l₁+u₁)·w + (l₂+u₂)·z − b ≥ l₁u₁ + l₂u₂`.
pub(crate) fn box_secant_row(layout: &RelaxationLayout, n: usize, bx: &AntennaBox) -> Row {
    Row::ge(
        vec![(layout.w(n), bx.w_lo + bx.w_hi), (layout.z(n), bx.z_lo + bx.z_hi), (layout.b(n), -1.0)],
        bx.w_lo * bx.w_hi + bx.z_lo * bx.z_hi,
    )
}

/// Open-node queue entry: best bound first, then deeper, then older.
pub(crate) struct Queued(pub Node);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (&self.0, &other.0);
        b.lower_bound
            .total_cmp(&a.lower_bound)
            .then(a.depth.cmp(&b.depth))
            .then(b.id.cmp(&a.id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BinaryHeap;

    fn node(id: u64, depth: usize, lb: f64) -> Node {
        Node {
            id,
            depth,
            lo: vec![],
            hi: vec![],
            ang: vec![],
            box_secant: vec![],
            cuts: vec![],
            lower_bound: lb,
            eps: 1e-5,
            hint: None,
        }
    }

    #[test]
    fn queue_order() {
        let mut q = BinaryHeap::new();
        for (id, d, lb) in [(0, 1, 2.0), (1, 3, 1.5), (2, 2, 1.5), (3, 3, 1.5), (4, 0, 0.5)] {
            q.push(Queued(node(id, d, lb)));
        }
        let order: Vec<u64> = std::iter::from_fn(|| q.pop().map(|n| n.0.id)).collect();
        assert_eq!(order, vec![4, 1, 3, 2, 0]);
    }

    #[test]
    fn box_secant_valid_on_circle() {
        let layout = RelaxationLayout::new(1);
        let bx = AntennaBox::new(-0.3, 0.9, 0.2, 1.0);
        let row = box_secant_row(&layout, 0, &bx);
        for i in 0..1000 {
            let t = i as f64 * std::f64::consts::TAU / 1000.0;
            let (w, z) = (t.cos(), t.sin());
            if bx.contains(w, z, 0.0) {
                assert!(row.violation(&[w, z, 1.0]) < 1e-12);
            }
        }
        assert!(row.violation(&[0.3, 0.6, 1.0]) > 0.0);
    }
}
