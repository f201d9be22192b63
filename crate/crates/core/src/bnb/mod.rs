//! Exact branch-and-bound over the LP outer approximation.
//!
//! Each node solves its LP, separates gradient cuts for the convex
//! constraints, and then enforces, in this order: integrality of the
//! binaries, the convex constraints, and the lower modulus constraints.
//! A node whose point passes all three is polished onto the unit circle and
//! offered as incumbent.

mod generic;
mod node;

use std::collections::{BinaryHeap, HashSet};
use std::rc::Rc;
use std::time::Instant;

use log::{debug, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LpModel, LpSolution, LpSolver, LpStatus};
use crate::model::{is_feasible, CandidateSolution, ProblemInstance, RealInstance, DEFAULT_EPS};
use crate::modulus::{self, FixOutcome, Propagation};
use crate::oracle;
use crate::relaxation::{self, Cut, CutKind, RelaxationLayout, CUTS_PER_ANTENNA, MAX_SEPARATION_ROUNDS};

use generic::{fbbt, spatial_split, Fbbt};
use node::{box_secant_row, KeyedBasis, Node, Queued, RowKey};

/// Fractionality above which a binary is branched on.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Violation of the error constraint that triggers a gradient cut.
pub const SEPARATION_TOL: f64 = 1e-6;

/// Handler steps (propagation, cuts) allowed per node before it must branch.
const MAX_INNER: usize = 100;
const MIN_CUT_VIOLATION: f64 = 1e-6;
const SMALLEST_EPS: f64 = 1e-12;
/// Separation stops early on a fractional point once the bound has gained
/// less than this over the last `TAIL_WINDOW` rounds.
const TAIL_GAIN: f64 = 1e-3;
const TAIL_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub time_limit_s: f64,
    pub node_limit: Option<usize>,
    pub eps: f64,
    /// Orthant/arc handling of the modulus constraints; otherwise they are
    /// treated as general nonconvex quadratics.
    pub modulus_handler: bool,
    pub initial_solution: Option<CandidateSolution>,
    /// Prune on `ceil(bound) ≥ incumbent` rather than `bound ≥ incumbent`.
    pub integer_rounding: bool,
    /// Phase refinement of integral LP supports as a primal heuristic.
    pub phase_heuristic: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            time_limit_s: 3600.0,
            node_limit: None,
            eps: DEFAULT_EPS,
            modulus_handler: true,
            initial_solution: None,
            integer_rounding: true,
            phase_heuristic: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
    NodeLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn label(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::TimeLimit => "time-limit",
            SolveStatus::NodeLimit => "node-limit",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub cardinality: Option<usize>,
    pub solution: Option<CandidateSolution>,
    pub nodes: usize,
    pub modulus_branches: usize,
    pub time_s: f64,
    /// Lower bound on the optimal cardinality.
    pub dual_bound: f64,
    /// Global dual bound each time a node was selected.
    pub dual_trace: Vec<f64>,
    pub lp_iterations: usize,
    /// Nodes dropped because their LP could not be solved or their point
    /// could not be polished into a feasible solution.
    pub unresolved_nodes: usize,
    /// Every incumbent in the order it was stored, the initial solution
    /// included.
    pub incumbents: Vec<CandidateSolution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOutcome {
    BranchedBinary,
    ConvexEnforced,
    ModulusHandled,
    IntegerFeasible,
    PrunedBound,
    PrunedInfeasible,
}

enum Processed {
    Children(NodeOutcome, Vec<Node>),
    Requeue(Node),
    Done(NodeOutcome),
}

enum Step {
    Resolve,
    Branch(Vec<Node>),
    Infeasible,
    Accept,
}

/// Most fractional binary, lowest index on ties.
pub fn most_fractional(b: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (n, &v) in b.iter().enumerate() {
        let f = (v - v.round()).abs();
        if f > INTEGRALITY_TOL && best.map_or(true, |(_, bf)| f > bf) {
            best = Some((n, f));
        }
    }
    best.map(|(n, _)| n)
}

/// Whether a node with LP bound `bound` can be discarded given incumbent
/// cardinality `incumbent`.
pub fn prunable(bound: f64, incumbent: Option<usize>, integer_rounding: bool) -> bool {
    match incumbent {
        None => false,
        Some(c) if integer_rounding => (bound - 1e-9).ceil() >= c as f64,
        Some(c) => bound >= c as f64 - 1e-9,
    }
}

struct Search<'a> {
    inst: &'a ProblemInstance,
    real: RealInstance,
    layout: RelaxationLayout,
    root: LpModel,
    cfg: &'a SolveConfig,
    incumbent: Option<CandidateSolution>,
    incumbent_card: Option<usize>,
    history: Vec<CandidateSolution>,
    next_node: u64,
    next_cut: u64,
    modulus_branches: usize,
    lp_iterations: usize,
    unresolved: usize,
    tried_supports: HashSet<Vec<usize>>,
}

pub fn solve_exact(inst: &ProblemInstance, cfg: &SolveConfig) -> Result<SolveReport> {
    let start = Instant::now();
    if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
        return Err(Error::InvalidConfig(format!("eps must lie in (0, 1), got {}", cfg.eps)));
    }
    if !(cfg.time_limit_s > 0.0) {
        return Err(Error::InvalidConfig("time limit must be positive".into()));
    }
    let real = inst.to_real();
    let (root, layout) = relaxation::build_root(&real);
    let mut s = Search {
        inst,
        real,
        layout,
        root,
        cfg,
        incumbent: None,
        incumbent_card: None,
        history: Vec::new(),
        next_node: 0,
        next_cut: 0,
        modulus_branches: 0,
        lp_iterations: 0,
        unresolved: 0,
        tried_supports: HashSet::new(),
    };
    if let Some(sol) = &cfg.initial_solution {
        if sol.b.len() != inst.n_antennas() || !is_feasible(inst, sol, cfg.eps) {
            return Err(Error::InvalidConfig("initial solution is not feasible".into()));
        }
        s.incumbent_card = Some(sol.cardinality());
        s.incumbent = Some(sol.clone());
        s.history.push(sol.clone());
    }

    let mut queue = BinaryHeap::new();
    queue.push(Queued(s.root_node()));
    let mut nodes = 0;
    let mut trace = Vec::new();
    let mut status = None;
    while let Some(Queued(node)) = queue.pop() {
        if start.elapsed().as_secs_f64() >= cfg.time_limit_s {
            queue.push(Queued(node));
            status = Some(SolveStatus::TimeLimit);
            break;
        }
        if cfg.node_limit.is_some_and(|l| nodes >= l) {
            queue.push(Queued(node));
            status = Some(SolveStatus::NodeLimit);
            break;
        }
        let inc = s.incumbent_card.map_or(f64::INFINITY, |c| c as f64);
        trace.push(node.lower_bound.min(inc));
        if s.prunable(node.lower_bound) {
            continue;
        }
        nodes += 1;
        match s.process(node) {
            Processed::Children(outcome, kids) => {
                debug!("node branched: {outcome:?}, {} children", kids.len());
                for k in kids {
                    if !k.is_empty() && !s.prunable(k.lower_bound) {
                        queue.push(Queued(k));
                    }
                }
            }
            Processed::Requeue(n) => queue.push(Queued(n)),
            Processed::Done(outcome) => debug!("node done: {outcome:?}"),
        }
    }

    let open_bound = queue.iter().map(|q| q.0.lower_bound).fold(f64::INFINITY, f64::min);
    let inc = s.incumbent_card.map_or(f64::INFINITY, |c| c as f64);
    let raw = open_bound.min(inc);
    let dual_bound = if cfg.integer_rounding && raw.is_finite() { (raw - 1e-9).ceil().max(0.0) } else { raw };
    let status = status.unwrap_or(if s.incumbent.is_some() { SolveStatus::Optimal } else { SolveStatus::Infeasible });
    let dual_bound = if status == SolveStatus::Optimal { inc } else { dual_bound };
    Ok(SolveReport {
        status,
        cardinality: s.incumbent_card,
        solution: s.incumbent,
        nodes,
        modulus_branches: s.modulus_branches,
        time_s: start.elapsed().as_secs_f64(),
        dual_bound,
        dual_trace: trace,
        lp_iterations: s.lp_iterations,
        unresolved_nodes: s.unresolved,
        incumbents: s.history,
    })
}

impl Search<'_> {
    fn n(&self) -> usize {
        self.layout.n_antennas()
    }

    fn prunable(&self, bound: f64) -> bool {
        prunable(bound, self.incumbent_card, self.cfg.integer_rounding)
    }

    fn root_node(&mut self) -> Node {
        let n = self.n();
        let (lo, hi) = (0..self.root.n_vars()).map(|j| self.root.bounds(j)).unzip();
        Node {
            id: self.fresh_id(),
            depth: 0,
            lo,
            hi,
            ang: vec![Default::default(); n],
            box_secant: vec![false; n],
            cuts: Vec::new(),
            lower_bound: 0.0,
            eps: self.cfg.eps,
            hint: None,
        }
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_node += 1;
        self.next_node - 1
    }

    fn child(&mut self, parent: &Node) -> Node {
        let mut c = parent.clone();
        c.id = self.fresh_id();
        c.depth = parent.depth + 1;
        c
    }

    fn solve_lp(&mut self, lp: &mut LpSolver) -> LpSolution {
        let sol = lp.solve();
        self.lp_iterations += sol.iterations;
        sol
    }

    fn process(&mut self, mut node: Node) -> Processed {
        let (mut lp, mut keys) = node.build_lp(&self.root, &self.layout, true);
        let mut cold = false;
        let mut inner = 0;
        loop {
            inner += 1;
            let mut round = 0;
            let mut history: Vec<f64> = Vec::new();
            let sol = loop {
                let sol = self.solve_lp(&mut lp);
                match sol.status {
                    LpStatus::Optimal => {}
                    LpStatus::Infeasible => return Processed::Done(NodeOutcome::PrunedInfeasible),
                    other => {
                        if !cold {
                            debug!("node {}: LP {other}, retrying cold", node.id);
                            cold = true;
                            (lp, keys) = node.build_lp(&self.root, &self.layout, false);
                            continue;
                        }
                        return self.numerical_fallback(node);
                    }
                }
                if self.prunable(sol.objective) {
                    return Processed::Done(NodeOutcome::PrunedBound);
                }
                round += 1;
                history.push(sol.objective);
                let stalled = history.len() > TAIL_WINDOW
                    && sol.objective - history[history.len() - 1 - TAIL_WINDOW] < TAIL_GAIN
                    && most_fractional(self.layout.split(&sol.x).2).is_some();
                let cuts = if stalled { Vec::new() } else { self.separate(&sol.x) };
                if cuts.is_empty() || round >= MAX_SEPARATION_ROUNDS {
                    break sol;
                }
                let mut rows = Vec::with_capacity(cuts.len());
                for c in cuts {
                    keys.push(RowKey::Cut(c.id));
                    rows.push(c.row.clone());
                    node.cuts.push(c);
                }
                lp.add_rows(rows).expect("cut rows reference model columns");
            };
            node.lower_bound = node.lower_bound.max(sol.objective);
            let basis = Rc::new(KeyedBasis::new(&sol.basis, &keys));
            let x = sol.x;
            let (_, _, b) = self.layout.split(&x);

            if let Some(n) = most_fractional(b) {
                relaxation::evict_inactive(&mut node.cuts, CUTS_PER_ANTENNA * self.n(), &x);
                node.hint = Some(basis);
                return Processed::Children(NodeOutcome::BranchedBinary, self.branch_binary(&node, n));
            }

            if self.cfg.phase_heuristic {
                self.phase_heuristic(&x);
                if self.prunable(node.lower_bound) {
                    return Processed::Done(NodeOutcome::PrunedBound);
                }
            }

            let step = self.enforce_modulus(&mut node, &x, inner);
            match step {
                Some(Step::Resolve) => {
                    node.hint = Some(basis);
                    (lp, keys) = node.build_lp(&self.root, &self.layout, !cold);
                    continue;
                }
                Some(Step::Branch(kids)) => {
                    let mut kids = kids;
                    for k in &mut kids {
                        relaxation::evict_inactive(&mut k.cuts, CUTS_PER_ANTENNA * self.n(), &x);
                        k.hint = Some(basis.clone());
                    }
                    return Processed::Children(NodeOutcome::ModulusHandled, kids);
                }
                Some(Step::Infeasible) => return Processed::Done(NodeOutcome::PrunedInfeasible),
                Some(Step::Accept) | None => {}
            }

            if self.offer_incumbent(&x) {
                return Processed::Done(NodeOutcome::IntegerFeasible);
            }
            node.eps *= 0.01;
            if node.eps < SMALLEST_EPS {
                warn!("node {}: LP point cannot be polished into a feasible solution", node.id);
                self.unresolved += 1;
                return Processed::Done(NodeOutcome::PrunedInfeasible);
            }
            node.hint = Some(basis);
            return Processed::Requeue(node);
        }
    }

    fn separate(&mut self, x: &[f64]) -> Vec<Rc<Cut>> {
        let mut cuts = Vec::new();
        let tol = SEPARATION_TOL * self.real.delta.max(1.0);
        if let Some(row) = relaxation::separate_error_soc(&self.real, &self.layout, x, tol) {
            cuts.push((CutKind::ErrorGradient, row));
        }
        for n in 0..self.n() {
            if let Some(row) = relaxation::separate_upper_modulus(&self.layout, n, x, SEPARATION_TOL) {
                cuts.push((CutKind::ModulusGradient, row));
            }
        }
        cuts.into_iter()
            .map(|(kind, row)| {
                self.next_cut += 1;
                Rc::new(Cut { id: self.next_cut, kind, row })
            })
            .collect()
    }

    fn branch_binary(&mut self, node: &Node, n: usize) -> Vec<Node> {
        let mut off = self.child(node);
        off.fix_off(&self.layout, n);
        let mut on = self.child(node);
        on.fix_on(&self.layout, n);
        vec![off, on]
    }

    /// Runs the modulus enforcement on the most violated antenna; antennas
    /// whose arc is too narrow to branch are accepted and skipped.
    fn enforce_modulus(&mut self, node: &mut Node, x: &[f64], inner: usize) -> Option<Step> {
        let (w, z, b) = self.layout.split(x);
        let mut bsel = b.to_vec();
        loop {
            let v = modulus::select_violated(w, z, &bsel, node.eps)?;
            let n = v.antenna;
            let step = if self.cfg.modulus_handler {
                self.modulus_step(node, n, x, inner)
            } else {
                self.generic_step(node, n, x, inner)
            };
            match step {
                Step::Accept => bsel[n] = 0.0,
                other => return Some(other),
            }
        }
    }

    fn modulus_step(&mut self, node: &mut Node, n: usize, x: &[f64], inner: usize) -> Step {
        let l = &self.layout;
        let mut bx = node.antenna_box(l, n);
        let (b_lo, b_hi) = (node.lo[l.b(n)], node.hi[l.b(n)]);
        if modulus::try_fix(b_hi, &mut bx) == FixOutcome::Fixed {
            node.set_antenna_box(l, n, &bx);
            return Step::Resolve;
        }
        if node.ang[n].orthant.is_none() {
            self.modulus_branches += 1;
            let mut kids = Vec::with_capacity(4);
            for (st, cbx) in modulus::branch_orthants(&bx) {
                if cbx.is_empty() {
                    continue;
                }
                let mut k = self.child(node);
                k.ang[n] = st;
                k.set_antenna_box(&self.layout, n, &cbx);
                kids.push(k);
            }
            return Step::Branch(kids);
        }
        let one = b_lo >= 1.0;
        if inner <= MAX_INNER {
            let mut st = node.ang[n];
            let prop = modulus::propagate(&mut st, &mut bx, one);
            node.ang[n] = st;
            match prop {
                Propagation::Infeasible => return Step::Infeasible,
                Propagation::ForceZero => {
                    node.fix_off(l, n);
                    return Step::Resolve;
                }
                Propagation::Tightened => {
                    node.set_antenna_box(l, n, &bx);
                    return Step::Resolve;
                }
                Propagation::Unchanged => {}
            }
            if modulus::separate_chord(l, n, &node.ang[n], x, node.eps).is_some() {
                node.ang[n].secant = true;
                return Step::Resolve;
            }
        }
        match modulus::branch_subarc(&node.ang[n], &bx, one) {
            Some(halves) => {
                self.modulus_branches += 1;
                let mut kids = Vec::with_capacity(2);
                for (st, cbx) in halves {
                    let mut k = self.child(node);
                    k.ang[n] = st;
                    k.set_antenna_box(&self.layout, n, &cbx);
                    kids.push(k);
                }
                Step::Branch(kids)
            }
            None => Step::Accept,
        }
    }

    fn generic_step(&mut self, node: &mut Node, n: usize, x: &[f64], inner: usize) -> Step {
        let l = &self.layout;
        let mut bx = node.antenna_box(l, n);
        let (b_lo, b_hi) = (node.lo[l.b(n)], node.hi[l.b(n)]);
        if modulus::try_fix(b_hi, &mut bx) == FixOutcome::Fixed {
            node.set_antenna_box(l, n, &bx);
            return Step::Resolve;
        }
        let one = b_lo >= 1.0;
        if inner <= MAX_INNER {
            match fbbt(&mut bx, b_hi, one) {
                Fbbt::Infeasible => return Step::Infeasible,
                Fbbt::Tightened => {
                    node.set_antenna_box(l, n, &bx);
                    return Step::Resolve;
                }
                Fbbt::Unchanged => {}
            }
            let row = box_secant_row(l, n, &bx);
            if !node.box_secant[n] && row.violation(x) > MIN_CUT_VIOLATION {
                node.box_secant[n] = true;
                return Step::Resolve;
            }
        }
        let (w, z) = (x[l.w(n)], x[l.z(n)]);
        match spatial_split(&bx, w, z) {
            Some((on_w, p)) => {
                self.modulus_branches += 1;
                let j = if on_w { l.w(n) } else { l.z(n) };
                let mut left = self.child(node);
                left.hi[j] = p;
                left.box_secant[n] = true;
                let mut right = self.child(node);
                right.lo[j] = p;
                right.box_secant[n] = true;
                Step::Branch(vec![left, right])
            }
            None => Step::Accept,
        }
    }

    /// Branches conservatively on a node whose LP failed twice.
    fn numerical_fallback(&mut self, node: Node) -> Processed {
        let l = &self.layout;
        if let Some(n) = (0..self.n()).find(|&n| node.lo[l.b(n)] < node.hi[l.b(n)]) {
            warn!("node {}: LP failed, branching on b_{n}", node.id);
            return Processed::Children(NodeOutcome::BranchedBinary, self.branch_binary(&node, n));
        }
        warn!("node {}: LP failed with all binaries fixed; node dropped", node.id);
        self.unresolved += 1;
        Processed::Done(NodeOutcome::PrunedInfeasible)
    }

    /// Rounds an integral LP point onto the unit circle and stores it if it
    /// is feasible and improves the incumbent. Returns whether the node is
    /// settled.
    fn offer_incumbent(&mut self, x: &[f64]) -> bool {
        let (w, z, b) = self.layout.split(x);
        let n = self.n();
        let mut sol = CandidateSolution { w: vec![0.0; n], z: vec![0.0; n], b: vec![false; n] };
        for i in 0..n {
            if b[i] > 0.5 {
                let r = w[i].hypot(z[i]);
                let (cw, cz) = if r > 0.0 { (w[i] / r, z[i] / r) } else { (1.0, 0.0) };
                sol.w[i] = cw;
                sol.z[i] = cz;
                sol.b[i] = true;
            }
        }
        let card = sol.cardinality();
        if self.incumbent_card.is_some_and(|c| card >= c) {
            return true;
        }
        if is_feasible(self.inst, &sol, self.cfg.eps) {
            self.store(sol);
            return true;
        }
        if let Some(sol) = self.refine(&sol) {
            self.store(sol);
            return true;
        }
        false
    }

    fn refine(&self, sol: &CandidateSolution) -> Option<CandidateSolution> {
        let support: Vec<usize> = (0..self.n()).filter(|&i| sol.b[i]).collect();
        if support.is_empty() {
            return None;
        }
        let mut xc = sol.to_complex().x;
        oracle::refine_phases(self.inst, &mut xc, &support);
        let cand = CandidateSolution::from_complex(&xc);
        is_feasible(self.inst, &cand, self.cfg.eps).then_some(cand)
    }

    fn phase_heuristic(&mut self, x: &[f64]) {
        let (w, z, b) = self.layout.split(x);
        let support: Vec<usize> = (0..self.n()).filter(|&i| b[i] > 0.5).collect();
        if support.is_empty()
            || self.incumbent_card.is_some_and(|c| support.len() >= c)
            || !self.tried_supports.insert(support.clone())
        {
            return;
        }
        let mut xc = vec![Complex64::new(0.0, 0.0); self.n()];
        for &i in &support {
            let v = Complex64::new(w[i], z[i]);
            xc[i] = if v.norm() > 0.0 { v / v.norm() } else { Complex64::new(1.0, 0.0) };
        }
        let cand = CandidateSolution::from_complex(&xc);
        if let Some(sol) = self.refine(&cand) {
            debug!("phase heuristic found cardinality {}", sol.cardinality());
            self.store(sol);
        }
    }

    fn store(&mut self, sol: CandidateSolution) {
        debug_assert!(is_feasible(self.inst, &sol, self.cfg.eps));
        let card = sol.cardinality();
        if self.incumbent_card.map_or(true, |c| card < c) {
            self.incumbent_card = Some(card);
            self.history.push(sol.clone());
            self.incumbent = Some(sol);
        }
    }
}
