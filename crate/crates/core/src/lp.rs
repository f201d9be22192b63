//! Dense bounded-variable simplex with warm starts.
//!
//! Every row `lo ≤ a·x ≤ hi` gets a logical variable `s = a·x`, so the
//! working system is `[A | −I]·(x, s) = 0` with bounds on all `n + m`
//! variables. A dense tableau over the `n` nonbasic columns is kept, so a
//! pivot costs `m·n` regardless of how many rows the cuts have added.
//!
//! Solves run the dual simplex. Any basis can be made dual feasible because
//! every working bound is finite: logicals get the activity range implied by
//! the column bounds, and infinite column bounds are boxed at `±BIG` and
//! released afterwards by a primal cleanup. Appending rows or tightening
//! bounds keeps the current basis dual feasible, so re-solves after cuts
//! or branching restart from where the last solve ended.

use std::fmt;

use thiserror::Error;

/// Primal feasibility tolerance guaranteed on `Optimal` solutions.
pub const FEAS_TOL: f64 = 1e-7;
/// Smallest tableau entry accepted as a pivot.
pub const PIVOT_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots before switching to Bland's rule.
pub const BLAND_AFTER: usize = 5000;

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const BIG: f64 = 1e7;
const REFRESH_EVERY: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("unknown variable id {0}")]
    UnknownVar(usize),
    #[error("empty bound box for variable {var}: [{lo}, {hi}]")]
    EmptyBox { var: usize, lo: f64, hi: f64 },
    #[error("non-finite coefficient in row")]
    NonFinite,
}

/// Status of a structural variable or of a row's logical in a basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

/// A simplex basis usable as a warm start: one status per column and one per
/// row (the row's activity).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub cols: Vec<VarStatus>,
    pub rows: Vec<VarStatus>,
}

/// Sparse row `lo ≤ Σ coef·x[var] ≤ hi`; one side may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

impl Row {
    /// `a·x ≤ rhs`
    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { coeffs, lo: f64::NEG_INFINITY, hi: rhs }
    }

    /// `a·x ≥ rhs`
    pub fn ge(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { coeffs, lo: rhs, hi: f64::INFINITY }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        (self.lo - act).max(act - self.hi).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Column {
    lo: f64,
    hi: f64,
    cost: f64,
}

/// A minimization LP over bounded columns and sparse two-sided rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpModel {
    cols: Vec<Column>,
    rows: Vec<Row>,
}

impl LpModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a column with bounds `[lo, hi]` and objective coefficient `cost`.
    pub fn add_var(&mut self, lo: f64, hi: f64, cost: f64) -> Result<usize, LpError> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(LpError::EmptyBox { var: self.cols.len(), lo, hi });
        }
        if !cost.is_finite() {
            return Err(LpError::NonFinite);
        }
        self.cols.push(Column { lo, hi, cost });
        Ok(self.cols.len() - 1)
    }

    pub fn add_row(&mut self, row: Row) -> Result<usize, LpError> {
        self.check_row(&row)?;
        self.rows.push(row);
        Ok(self.rows.len() - 1)
    }

    pub fn add_rows(&mut self, rows: impl IntoIterator<Item = Row>) -> Result<Vec<usize>, LpError> {
        rows.into_iter().map(|r| self.add_row(r)).collect()
    }

    fn check_row(&self, row: &Row) -> Result<(), LpError> {
        for &(j, a) in &row.coeffs {
            if j >= self.cols.len() {
                return Err(LpError::UnknownVar(j));
            }
            if !a.is_finite() {
                return Err(LpError::NonFinite);
            }
        }
        if row.lo.is_nan() || row.hi.is_nan() || row.lo == f64::INFINITY || row.hi == f64::NEG_INFINITY {
            return Err(LpError::NonFinite);
        }
        Ok(())
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> Result<(), LpError> {
        let col = self.cols.get_mut(var).ok_or(LpError::UnknownVar(var))?;
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(LpError::EmptyBox { var, lo, hi });
        }
        col.lo = lo;
        col.hi = hi;
        Ok(())
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.cols[var].lo, self.cols[var].hi)
    }

    pub fn cost(&self, var: usize) -> f64 {
        self.cols[var].cost
    }

    pub fn n_vars(&self) -> usize {
        self.cols.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &Row {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cols.iter().zip(x).map(|(c, v)| c.cost * v).sum()
    }

    /// Largest bound or row violation of `x`, each measured relative to
    /// `1 + |bound|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (c, &v) in self.cols.iter().zip(x) {
            worst = worst.max((c.lo - v) / (1.0 + c.lo.abs())).max((v - c.hi) / (1.0 + c.hi.abs()));
        }
        for r in &self.rows {
            let act = r.activity(x);
            worst = worst.max((r.lo - act) / (1.0 + r.lo.abs())).max((act - r.hi) / (1.0 + r.hi.abs()));
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::IterationLimit => "iteration-limit",
            LpStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Column values; meaningful only when `status` is `Optimal`.
    pub x: Vec<f64>,
    pub objective: f64,
    pub basis: Basis,
    /// Pivots performed by this call.
    pub iterations: usize,
}

/// Solves `model`, optionally warm-started from a basis of a related model.
pub fn solve(model: &LpModel, warm_start: Option<&Basis>) -> LpSolution {
    let mut solver = match warm_start {
        Some(b) => LpSolver::with_basis(model.clone(), b),
        None => LpSolver::new(model.clone()),
    };
    solver.solve()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Nb {
    Basic,
    Lower,
    Upper,
    /// Nonbasic strictly between bounds; only after releasing a box.
    Free,
}

/// Incremental simplex state over an owned [`LpModel`].
#[derive(Debug, Clone)]
pub struct LpSolver {
    model: LpModel,
    n: usize,
    m: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    /// Columns whose infinite bound was replaced by `±BIG`.
    boxed: Vec<(bool, bool)>,
    /// `m × n`, row-major: `x_basic[i] = −Σ_c tab[i][c]·x_nonbasic[c]`.
    tab: Vec<f64>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    /// Row of a basic variable or column of a nonbasic one.
    pos: Vec<usize>,
    state: Vec<Nb>,
    val: Vec<f64>,
    d: Vec<f64>,
    factored: bool,
    hint: Option<Basis>,
    iterations: usize,
    since_factor: usize,
}

impl LpSolver {
    pub fn new(model: LpModel) -> Self {
        Self::build(model, None)
    }

    /// Starts from `hint`; statuses beyond the hint's length default to an
    /// all-logical basis for extra rows and cost-directed bounds for extra
    /// columns.
    pub fn with_basis(model: LpModel, hint: &Basis) -> Self {
        Self::build(model, Some(hint.clone()))
    }

    fn build(model: LpModel, hint: Option<Basis>) -> Self {
        let n = model.cols.len();
        let m = model.rows.len();
        let mut s = Self {
            model,
            n,
            m,
            lo: Vec::new(),
            hi: Vec::new(),
            cost: Vec::new(),
            boxed: Vec::new(),
            tab: Vec::new(),
            basic: Vec::new(),
            nonbasic: Vec::new(),
            pos: Vec::new(),
            state: Vec::new(),
            val: Vec::new(),
            d: Vec::new(),
            factored: false,
            hint,
            iterations: 0,
            since_factor: 0,
        };
        s.init_bounds();
        s
    }

    pub fn model(&self) -> &LpModel {
        &self.model
    }

    pub fn into_model(self) -> LpModel {
        self.model
    }

    #[inline]
    fn ncols(&self) -> usize {
        self.n + self.m
    }

    fn init_bounds(&mut self) {
        let n = self.n;
        self.lo = Vec::with_capacity(n + self.m);
        self.hi = Vec::with_capacity(n + self.m);
        self.cost = Vec::with_capacity(n + self.m);
        self.boxed = Vec::with_capacity(n);
        for c in &self.model.cols {
            let bl = !c.lo.is_finite();
            let bh = !c.hi.is_finite();
            self.lo.push(if bl { -BIG } else { c.lo });
            self.hi.push(if bh { BIG } else { c.hi });
            self.cost.push(c.cost);
            self.boxed.push((bl, bh));
        }
        for i in 0..self.m {
            let (l, h) = self.logical_bounds(&self.model.rows[i]);
            self.lo.push(l);
            self.hi.push(h);
            self.cost.push(0.0);
        }
    }

    /// Row bounds intersected with the activity range implied by the working
    /// column bounds.
    fn logical_bounds(&self, row: &Row) -> (f64, f64) {
        let (mut il, mut ih) = (0.0, 0.0);
        for &(j, a) in &row.coeffs {
            if a >= 0.0 {
                il += a * self.lo[j];
                ih += a * self.hi[j];
            } else {
                il += a * self.hi[j];
                ih += a * self.lo[j];
            }
        }
        let slack = 1e-9 * (1.0 + il.abs().max(ih.abs()));
        let lo = row.lo.max(il - slack);
        let hi = row.hi.min(ih + slack);
        (lo, hi)
    }

    /// Appends rows; the new logicals enter the basis.
    pub fn add_rows(&mut self, rows: Vec<Row>) -> Result<Vec<usize>, LpError> {
        for r in &rows {
            self.model.check_row(r)?;
        }
        let first = self.m;
        if !self.factored {
            for r in rows {
                let (l, h) = self.logical_bounds(&r);
                self.model.rows.push(r);
                self.lo.push(l);
                self.hi.push(h);
                self.cost.push(0.0);
                self.m += 1;
            }
            return Ok((first..self.m).collect());
        }
        let w = self.n;
        for r in rows {
            let (l, h) = self.logical_bounds(&r);
            // s = a·x with basic structurals substituted out
            let mut row = vec![0.0; w];
            for &(j, a) in &r.coeffs {
                if self.state[j] == Nb::Basic {
                    let i = self.pos[j];
                    for (dst, t) in row.iter_mut().zip(&self.tab[i * w..(i + 1) * w]) {
                        *dst += a * t;
                    }
                } else {
                    row[self.pos[j]] -= a;
                }
            }
            self.tab.extend_from_slice(&row);
            let activity = r.activity(&self.val[..self.n]);
            self.model.rows.push(r);
            self.lo.push(l);
            self.hi.push(h);
            self.cost.push(0.0);
            self.val.push(activity);
            self.d.push(0.0);
            self.state.push(Nb::Basic);
            self.pos.push(self.m);
            self.basic.push(self.n + self.m);
            self.m += 1;
        }
        Ok((first..self.m).collect())
    }

    /// Changes a column's bounds, keeping the basis.
    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> Result<(), LpError> {
        let (old_lo, old_hi) = self.model.bounds(var);
        self.model.set_bounds(var, lo, hi)?;
        let bl = !lo.is_finite();
        let bh = !hi.is_finite();
        self.boxed[var] = (bl, bh);
        self.lo[var] = if bl { -BIG } else { lo };
        self.hi[var] = if bh { BIG } else { hi };
        let loosened = lo < old_lo || hi > old_hi;
        if loosened {
            for i in 0..self.m {
                if self.model.rows[i].coeffs.iter().any(|&(j, _)| j == var) {
                    let (l, h) = self.logical_bounds(&self.model.rows[i]);
                    self.lo[self.n + i] = l;
                    self.hi[self.n + i] = h;
                }
            }
        }
        if self.factored {
            let target = match self.state[var] {
                Nb::Basic => return Ok(()),
                Nb::Lower => self.lo[var],
                Nb::Upper => self.hi[var],
                Nb::Free => self.val[var].clamp(self.lo[var], self.hi[var]),
            };
            self.move_nonbasic(var, target);
        }
        Ok(())
    }

    fn move_nonbasic(&mut self, j: usize, target: f64) {
        let delta = target - self.val[j];
        if delta != 0.0 {
            let (w, c) = (self.n, self.pos[j]);
            for i in 0..self.m {
                let t = self.tab[i * w + c];
                if t != 0.0 {
                    self.val[self.basic[i]] -= t * delta;
                }
            }
            self.val[j] = target;
        }
    }

    /// Current basis in model order.
    pub fn basis(&self) -> Basis {
        let conv = |s: Nb, v: f64, lo: f64, hi: f64| match s {
            Nb::Basic => VarStatus::Basic,
            Nb::Lower => VarStatus::AtLower,
            Nb::Upper => VarStatus::AtUpper,
            Nb::Free => {
                if (v - lo).abs() <= (hi - v).abs() {
                    VarStatus::AtLower
                } else {
                    VarStatus::AtUpper
                }
            }
        };
        if !self.factored {
            if let Some(h) = &self.hint {
                return h.clone();
            }
        }
        let all: Vec<VarStatus> = (0..self.ncols())
            .map(|j| {
                if self.factored {
                    conv(self.state[j], self.val[j], self.lo[j], self.hi[j])
                } else if j < self.n {
                    VarStatus::AtLower
                } else {
                    VarStatus::Basic
                }
            })
            .collect();
        Basis { cols: all[..self.n].to_vec(), rows: all[self.n..].to_vec() }
    }

    /// Builds the tableau for the hinted basis (or the all-logical basis).
    fn factor(&mut self) {
        let n = self.n;
        let m = self.m;
        let nc = n + m;
        self.tab = vec![0.0; m * n];
        for (i, r) in self.model.rows.iter().enumerate() {
            for &(j, a) in &r.coeffs {
                self.tab[i * n + j] -= a;
            }
        }
        self.basic = (n..nc).collect();
        self.nonbasic = (0..n).collect();
        self.pos = (0..n).chain(0..m).collect();
        self.state = vec![Nb::Lower; nc];
        for j in n..nc {
            self.state[j] = Nb::Basic;
        }
        let hint = self.hint.take();
        let want = |j: usize| -> Option<VarStatus> {
            let h = hint.as_ref()?;
            if j < n {
                h.cols.get(j).copied()
            } else {
                h.rows.get(j - n).copied()
            }
        };
        if hint.is_some() {
            let mut row_taken = vec![false; m];
            for j in 0..n {
                if want(j) != Some(VarStatus::Basic) {
                    continue;
                }
                // pick a row currently held by a logical, preferring logicals the hint wants out
                let mut best: Option<(usize, f64)> = None;
                let mut best_pref: Option<(usize, f64)> = None;
                for r in 0..m {
                    if row_taken[r] {
                        continue;
                    }
                    let a = self.tab[r * n + self.pos[j]].abs();
                    if a < 1e-7 {
                        continue;
                    }
                    if best.is_none_or(|(_, b)| a > b) {
                        best = Some((r, a));
                    }
                    if want(self.basic[r]) != Some(VarStatus::Basic) && best_pref.is_none_or(|(_, b)| a > b) {
                        best_pref = Some((r, a));
                    }
                }
                let choice = match (best_pref, best) {
                    (Some((r, a)), Some((_, b))) if a >= 1e-3 * b => Some(r),
                    (_, Some((r, _))) => Some(r),
                    _ => None,
                };
                if let Some(r) = choice {
                    self.pivot_tableau(r, j);
                    row_taken[r] = true;
                }
            }
        }
        for j in 0..nc {
            if self.state[j] == Nb::Basic {
                continue;
            }
            self.state[j] = match want(j) {
                Some(VarStatus::AtUpper) => Nb::Upper,
                Some(VarStatus::AtLower) => Nb::Lower,
                _ => {
                    if self.cost[j] < 0.0 {
                        Nb::Upper
                    } else if self.cost[j] > 0.0 {
                        Nb::Lower
                    } else if self.lo[j] <= 0.0 && self.hi[j] >= 0.0 && self.hi[j].abs() < self.lo[j].abs() {
                        Nb::Upper
                    } else {
                        Nb::Lower
                    }
                }
            };
        }
        self.val = vec![0.0; nc];
        self.d = vec![0.0; nc];
        self.factored = true;
        self.since_factor = 0;
        self.recompute_values();
        self.recompute_duals();
    }

    /// Pivots column `q` into row `r` of the tableau (basis bookkeeping only).
    fn pivot_tableau(&mut self, r: usize, q: usize) {
        let w = self.n;
        let c = self.pos[q];
        let inv = 1.0 / self.tab[r * w + c];
        for v in &mut self.tab[r * w..(r + 1) * w] {
            *v *= inv;
        }
        self.tab[r * w + c] = inv;
        let (before, rest) = self.tab.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (dst, s) in row.iter_mut().zip(prow.iter()) {
                    *dst -= f * s;
                }
                row[c] = -f * inv;
            }
        }
        let leaving = self.basic[r];
        self.state[leaving] = Nb::Lower;
        self.state[q] = Nb::Basic;
        self.basic[r] = q;
        self.nonbasic[c] = leaving;
        self.pos[q] = r;
        self.pos[leaving] = c;
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            Nb::Lower => self.lo[j],
            Nb::Upper => self.hi[j],
            Nb::Free => self.val[j],
            Nb::Basic => unreachable!(),
        }
    }

    fn recompute_values(&mut self) {
        let nc = self.ncols();
        for j in 0..nc {
            if self.state[j] != Nb::Basic {
                self.val[j] = self.nonbasic_value(j);
            }
        }
        let w = self.n;
        for i in 0..self.m {
            let row = &self.tab[i * w..(i + 1) * w];
            let v: f64 = row.iter().zip(&self.nonbasic).map(|(t, &j)| t * self.val[j]).sum();
            self.val[self.basic[i]] = -v;
        }
    }

    fn recompute_duals(&mut self) {
        let w = self.n;
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basic[i]];
            if cb != 0.0 {
                let row = &self.tab[i * w..(i + 1) * w];
                for (&j, t) in self.nonbasic.iter().zip(row) {
                    self.d[j] -= cb * t;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basic[i]] = 0.0;
        }
    }

    /// Flips nonbasic variables to the bound their reduced cost prefers.
    fn make_dual_feasible(&mut self) {
        for j in 0..self.ncols() {
            let target = match self.state[j] {
                Nb::Lower if self.d[j] < -DUAL_TOL => Some((Nb::Upper, self.hi[j])),
                Nb::Upper if self.d[j] > DUAL_TOL => Some((Nb::Lower, self.lo[j])),
                Nb::Free if self.d[j] > DUAL_TOL => Some((Nb::Lower, self.lo[j])),
                Nb::Free if self.d[j] < -DUAL_TOL => Some((Nb::Upper, self.hi[j])),
                _ => None,
            };
            if let Some((st, v)) = target {
                self.move_nonbasic(j, v);
                self.state[j] = st;
            }
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.val[j];
        (self.lo[j] - v).max(v - self.hi[j]).max(0.0)
    }

    /// Full pivot: entering `q` replaces the basic variable of row `r`, which
    /// leaves at `target` with status `leave_state`.
    fn pivot(&mut self, r: usize, q: usize, target: f64, leave_state: Nb) {
        let (w, c) = (self.n, self.pos[q]);
        let leaving = self.basic[r];
        let alpha = self.tab[r * w + c];
        let step = (self.val[leaving] - target) / alpha;
        if step != 0.0 {
            for i in 0..self.m {
                let t = self.tab[i * w + c];
                if t != 0.0 {
                    self.val[self.basic[i]] -= t * step;
                }
            }
            self.val[q] += step;
        }
        self.val[leaving] = target;
        self.pivot_tableau(r, q);
        self.state[leaving] = leave_state;
        let dq = self.d[q];
        if dq != 0.0 {
            let row = &self.tab[r * w..(r + 1) * w];
            for (&j, t) in self.nonbasic.iter().zip(row) {
                self.d[j] -= dq * t;
            }
        }
        self.d[q] = 0.0;
        self.iterations += 1;
        self.since_factor += 1;
    }

    /// Runs the dual simplex to optimality from a dual feasible basis.
    fn dual_simplex(&mut self, max_iter: usize) -> LpStatus {
        let w = self.n;
        let mut degenerate = 0usize;
        let mut since_refresh = 0usize;
        loop {
            if self.iterations >= max_iter {
                return LpStatus::IterationLimit;
            }
            if since_refresh >= REFRESH_EVERY {
                self.recompute_values();
                self.recompute_duals();
                self.make_dual_feasible();
                since_refresh = 0;
            }
            let bland = degenerate >= BLAND_AFTER;
            // leaving row
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let j = self.basic[i];
                let inf = self.infeasibility(j);
                if inf > PRIMAL_TOL * (1.0 + self.lo[j].abs().min(self.hi[j].abs())) {
                    let better = match leave {
                        None => true,
                        Some((bi, binf)) => {
                            if bland {
                                j < self.basic[bi]
                            } else {
                                inf > binf
                            }
                        }
                    };
                    if better {
                        leave = Some((i, inf));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return LpStatus::Optimal;
            };
            let lv = self.basic[r];
            let to_lower = self.val[lv] < self.lo[lv];
            let row = &self.tab[r * w..(r + 1) * w];
            // Harris two-pass ratio test
            let eligible = |j: usize, a: f64, st: Nb| -> bool {
                if st == Nb::Basic || self.lo[j] == self.hi[j] {
                    return false;
                }
                match (st, to_lower) {
                    (Nb::Lower, true) => a < -PIVOT_TOL,
                    (Nb::Upper, true) => a > PIVOT_TOL,
                    (Nb::Lower, false) => a > PIVOT_TOL,
                    (Nb::Upper, false) => a < -PIVOT_TOL,
                    (Nb::Free, _) => a.abs() > PIVOT_TOL,
                    (Nb::Basic, _) => false,
                }
            };
            let mut bound = f64::INFINITY;
            for (&j, &a) in self.nonbasic.iter().zip(row) {
                if a != 0.0 && eligible(j, a, self.state[j]) {
                    let ratio = (self.d[j].abs() + DUAL_TOL) / a.abs();
                    if ratio < bound {
                        bound = ratio;
                    }
                }
            }
            if bound == f64::INFINITY {
                return LpStatus::Infeasible;
            }
            let mut enter: Option<(usize, f64, f64)> = None;
            for (&j, &a) in self.nonbasic.iter().zip(row) {
                if a == 0.0 || !eligible(j, a, self.state[j]) {
                    continue;
                }
                let ratio = self.d[j].abs() / a.abs();
                if ratio <= bound {
                    let better = match enter {
                        None => true,
                        Some((_, ba, br)) => {
                            if bland {
                                ratio < br - 1e-15
                            } else {
                                a.abs() > ba
                            }
                        }
                    };
                    if better {
                        enter = Some((j, a.abs(), ratio));
                    }
                }
            }
            let (q, _, ratio) = enter.expect("ratio test found a bound");
            if ratio < 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            let (target, st) = if to_lower { (self.lo[lv], Nb::Lower) } else { (self.hi[lv], Nb::Upper) };
            self.pivot(r, q, target, st);
            // keep reduced-cost signs consistent after Harris steps
            for &j in &self.nonbasic {
                match self.state[j] {
                    Nb::Lower if self.d[j] < 0.0 && self.d[j] > -DUAL_TOL => self.d[j] = 0.0,
                    Nb::Upper if self.d[j] > 0.0 && self.d[j] < DUAL_TOL => self.d[j] = 0.0,
                    _ => {}
                }
            }
            since_refresh += 1;
        }
    }

    /// Primal simplex from a primal feasible basis; used after releasing
    /// boxed columns.
    fn primal_simplex(&mut self, max_iter: usize) -> LpStatus {
        let w = self.n;
        loop {
            if self.iterations >= max_iter {
                return LpStatus::IterationLimit;
            }
            let mut enter: Option<(usize, f64)> = None;
            for &j in &self.nonbasic {
                let dj = self.d[j];
                let can = match self.state[j] {
                    Nb::Basic => false,
                    _ if self.lo[j] == self.hi[j] => false,
                    Nb::Lower => dj < -DUAL_TOL,
                    Nb::Upper => dj > DUAL_TOL,
                    Nb::Free => dj.abs() > DUAL_TOL,
                };
                if can && enter.is_none_or(|(_, b)| dj.abs() > b) {
                    enter = Some((j, dj.abs()));
                }
            }
            let Some((q, _)) = enter else {
                return LpStatus::Optimal;
            };
            let dir = if self.d[q] < 0.0 { 1.0 } else { -1.0 };
            let mut limit = if dir > 0.0 { self.hi[q] - self.val[q] } else { self.val[q] - self.lo[q] };
            let mut block: Option<(usize, f64, Nb)> = None;
            let c = self.pos[q];
            for i in 0..self.m {
                let t = self.tab[i * w + c];
                if t.abs() <= PIVOT_TOL {
                    continue;
                }
                let bj = self.basic[i];
                // basic changes by -t*dir per unit step
                let rate = -t * dir;
                let (room, tgt, st) = if rate > 0.0 {
                    ((self.hi[bj] - self.val[bj]) / rate, self.hi[bj], Nb::Upper)
                } else {
                    ((self.val[bj] - self.lo[bj]) / -rate, self.lo[bj], Nb::Lower)
                };
                let room = room.max(0.0);
                if room < limit {
                    limit = room;
                    block = Some((i, tgt, st));
                }
            }
            if !limit.is_finite() || limit >= BIG {
                return LpStatus::Unbounded;
            }
            match block {
                None => {
                    let target = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    self.move_nonbasic(q, target);
                    self.state[q] = if dir > 0.0 { Nb::Upper } else { Nb::Lower };
                    self.iterations += 1;
                }
                Some((r, tgt, st)) => self.pivot(r, q, tgt, st),
            }
        }
    }

    /// Releases artificial boxes that are active at the current point;
    /// returns whether any was released.
    fn release_boxes(&mut self) -> bool {
        let mut released = false;
        for j in 0..self.n {
            let (bl, bh) = self.boxed[j];
            let at_lo = bl && self.val[j] <= -BIG * (1.0 - 1e-9);
            let at_hi = bh && self.val[j] >= BIG * (1.0 - 1e-9);
            if at_lo || at_hi {
                released = true;
                if bl {
                    self.lo[j] = f64::NEG_INFINITY;
                }
                if bh {
                    self.hi[j] = f64::INFINITY;
                }
                if self.state[j] != Nb::Basic {
                    self.state[j] = Nb::Free;
                }
            }
        }
        if released {
            for i in 0..self.m {
                let (l, h) = self.logical_bounds(&self.model.rows[i]);
                self.lo[self.n + i] = l;
                self.hi[self.n + i] = h;
            }
        }
        released
    }

    fn check_primal(&self) -> bool {
        self.model.max_violation(&self.val[..self.n]) <= FEAS_TOL
    }

    pub fn solve(&mut self) -> LpSolution {
        let first = self.iterations;
        let max_iter = self.iterations + 10_000.max(50 * (self.n + self.m));
        let mut refactors = 0;
        let status = loop {
            if !self.factored {
                self.factor();
            }
            self.make_dual_feasible();
            let mut st = self.dual_simplex(max_iter);
            if st == LpStatus::Optimal {
                self.recompute_values();
                self.recompute_duals();
                if self.release_boxes() {
                    st = self.primal_simplex(max_iter);
                }
            }
            match st {
                LpStatus::Optimal => {
                    let dual_ok = (0..self.ncols()).all(|j| match self.state[j] {
                        Nb::Lower => self.d[j] >= -1e-7 || self.lo[j] == self.hi[j],
                        Nb::Upper => self.d[j] <= 1e-7 || self.lo[j] == self.hi[j],
                        _ => true,
                    });
                    if self.check_primal() && dual_ok {
                        break LpStatus::Optimal;
                    }
                }
                LpStatus::Infeasible => {
                    // after many pivots, confirm on a fresh tableau
                    if refactors > 0 || self.since_factor <= 50 {
                        break st;
                    }
                }
                other => break other,
            }
            refactors += 1;
            if refactors > 2 {
                break LpStatus::NumericalFailure;
            }
            self.hint = Some(self.basis());
            self.factored = false;
        };
        let x = self.val[..self.n].to_vec();
        let objective = match status {
            LpStatus::Optimal => self.model.objective(&x),
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::NAN,
        };
        LpSolution { status, x, objective, basis: self.basis(), iterations: self.iterations - first }
    }
}
