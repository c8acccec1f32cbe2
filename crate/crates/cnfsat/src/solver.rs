//! Conflict-driven clause learning over watched literals.
//!
//! The engine implements the standard CDCL loop: two-watched-literal unit
//! propagation, first-UIP conflict analysis with self-subsumption
//! minimization, activity-driven branching (exponential VSIDS with a binary
//! heap), phase saving, Luby restarts, and activity-based learnt-clause
//! reduction. Given a fixed seed the run is fully deterministic.

use std::time::{Duration, Instant};

use crate::formula::CnfFormula;

const TOP_LEVEL: u32 = 0;
const VAR_DECAY: f64 = 0.95;
const CLA_DECAY: f64 = 0.999;
const RESTART_FIRST: u64 = 100;
const RESTART_INC: f64 = 2.0;
/// One in this many decisions picks a random saved polarity flip.
const RANDOM_POLARITY_ONE_IN: u64 = 64;

/// Resource limits for a single `solve` call.
#[derive(Debug, Clone, Copy, Default)]
pub struct Budget {
    pub time: Option<Duration>,
    pub conflicts: Option<u64>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget::default()
    }

    pub fn with_time(time: Duration) -> Self {
        Budget {
            time: Some(time),
            conflicts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    /// Total assignment, index `var - 1`. Unconstrained variables default to false.
    Sat(Vec<bool>),
    Unsat,
    BudgetExceeded {
        elapsed: Duration,
        conflicts: u64,
    },
}

impl SolveResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveResult::Sat(_))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolverConfig {
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Lit(u32);

impl Lit {
    fn new(var: usize, negative: bool) -> Lit {
        Lit((var as u32) << 1 | negative as u32)
    }

    fn from_dimacs(lit: i32) -> Lit {
        Lit::new((lit.unsigned_abs() - 1) as usize, lit < 0)
    }

    fn to_dimacs(self) -> i32 {
        let v = (self.var() + 1) as i32;
        if self.is_neg() {
            -v
        } else {
            v
        }
    }

    #[inline]
    fn var(self) -> usize {
        (self.0 >> 1) as usize
    }

    #[inline]
    fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    #[inline]
    fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    #[inline]
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Val {
    True,
    False,
    Undef,
}

#[inline]
fn lit_value(assign: &[Val], lit: Lit) -> Val {
    match assign[lit.var()] {
        Val::Undef => Val::Undef,
        v => {
            if (v == Val::True) ^ lit.is_neg() {
                Val::True
            } else {
                Val::False
            }
        }
    }
}

#[derive(Debug)]
struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    deleted: bool,
    activity: f64,
}

#[derive(Debug, Clone, Copy)]
struct Watch {
    cref: u32,
    blocker: Lit,
}

/// Max-heap over variable activities.
#[derive(Debug, Default)]
struct VarHeap {
    heap: Vec<usize>,
    pos: Vec<Option<usize>>,
}

impl VarHeap {
    fn new(n: usize) -> VarHeap {
        VarHeap {
            heap: (0..n).collect(),
            pos: (0..n).map(Some).collect(),
        }
    }

    fn contains(&self, v: usize) -> bool {
        self.pos[v].is_some()
    }

    fn push(&mut self, v: usize, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.pos[v] = Some(self.heap.len());
        self.heap.push(v);
        self.sift_up(self.heap.len() - 1, act);
    }

    fn pop(&mut self, act: &[f64]) -> Option<usize> {
        let top = *self.heap.first()?;
        self.pos[top] = None;
        let last = self.heap.pop().unwrap();
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last] = Some(0);
            self.sift_down(0, act);
        }
        Some(top)
    }

    fn update(&mut self, v: usize, act: &[f64]) {
        if let Some(i) = self.pos[v] {
            self.sift_up(i, act);
        }
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64]) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if act[self.heap[i]] <= act[self.heap[parent]] {
                break;
            }
            self.heap.swap(i, parent);
            self.pos[self.heap[i]] = Some(i);
            self.pos[self.heap[parent]] = Some(parent);
            i = parent;
        }
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64]) {
        loop {
            let left = 2 * i + 1;
            if left >= self.heap.len() {
                break;
            }
            let right = left + 1;
            let child = if right < self.heap.len() && act[self.heap[right]] > act[self.heap[left]] {
                right
            } else {
                left
            };
            if act[self.heap[child]] <= act[self.heap[i]] {
                break;
            }
            self.heap.swap(i, child);
            self.pos[self.heap[i]] = Some(i);
            self.pos[self.heap[child]] = Some(child);
            i = child;
        }
    }
}

struct XorShift64(u64);

impl XorShift64 {
    fn new(seed: u64) -> Self {
        // Zero state would be a fixed point.
        XorShift64(seed.wrapping_mul(0x9e3779b97f4a7c15).max(1))
    }

    fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }
}

pub struct Solver {
    clauses: Vec<Clause>,
    learnt_refs: Vec<u32>,
    watches: Vec<Vec<Watch>>,

    assign: Vec<Val>,
    level: Vec<u32>,
    reason: Vec<Option<u32>>,
    polarity: Vec<bool>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,

    activity: Vec<f64>,
    var_inc: f64,
    heap: VarHeap,
    cla_inc: f64,
    max_learnts: f64,

    seen: Vec<bool>,

    conflicts: u64,
    rng: XorShift64,
    /// Set when input clauses conflict at the top level.
    root_conflict: bool,
}

impl Solver {
    pub fn new(cnf: &CnfFormula, config: SolverConfig) -> Solver {
        let n = cnf.num_vars() as usize;
        let mut s = Solver {
            clauses: Vec::with_capacity(cnf.num_clauses()),
            learnt_refs: Vec::new(),
            watches: vec![Vec::new(); 2 * n],
            assign: vec![Val::Undef; n],
            level: vec![TOP_LEVEL; n],
            reason: vec![None; n],
            polarity: vec![false; n],
            trail: Vec::with_capacity(n),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: vec![0.0; n],
            var_inc: 1.0,
            heap: VarHeap::new(n),
            cla_inc: 1.0,
            max_learnts: 0.0,
            seen: vec![false; n],
            conflicts: 0,
            rng: XorShift64::new(config.seed),
            root_conflict: false,
        };
        for clause in cnf.clauses() {
            s.add_input_clause(clause);
            if s.root_conflict {
                break;
            }
        }
        s
    }

    /// Learnt clauses currently in the database, in DIMACS literal form.
    pub fn learnt_clauses(&self) -> Vec<Vec<i32>> {
        self.learnt_refs
            .iter()
            .filter(|&&cr| !self.clauses[cr as usize].deleted)
            .map(|&cr| {
                self.clauses[cr as usize]
                    .lits
                    .iter()
                    .map(|l| l.to_dimacs())
                    .collect()
            })
            .collect()
    }

    pub fn conflicts(&self) -> u64 {
        self.conflicts
    }

    fn value(&self, lit: Lit) -> Val {
        lit_value(&self.assign, lit)
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    fn enqueue(&mut self, lit: Lit, reason: Option<u32>) {
        debug_assert_eq!(self.value(lit), Val::Undef);
        self.assign[lit.var()] = if lit.is_neg() { Val::False } else { Val::True };
        self.level[lit.var()] = self.decision_level();
        self.reason[lit.var()] = reason;
        self.trail.push(lit);
    }

    fn add_input_clause(&mut self, lits: &[i32]) {
        let mut lits: Vec<Lit> = lits.iter().map(|&l| Lit::from_dimacs(l)).collect();
        lits.sort_by_key(|l| l.0);
        lits.dedup();
        // Drop tautologies (x ∨ ¬x ∨ ...).
        if lits.windows(2).any(|w| w[0] == !w[1]) {
            return;
        }
        // Top-level simplification against already-enqueued units.
        let mut simplified = Vec::with_capacity(lits.len());
        for lit in lits {
            match self.value(lit) {
                Val::True => return,
                Val::False => {}
                Val::Undef => simplified.push(lit),
            }
        }
        match simplified.len() {
            0 => self.root_conflict = true,
            1 => {
                self.enqueue(simplified[0], None);
                if self.propagate().is_some() {
                    self.root_conflict = true;
                }
            }
            _ => {
                self.attach_clause(simplified, false);
            }
        }
    }

    fn attach_clause(&mut self, lits: Vec<Lit>, learnt: bool) -> u32 {
        debug_assert!(lits.len() >= 2);
        let cref = self.clauses.len() as u32;
        self.watches[(!lits[0]).index()].push(Watch {
            cref,
            blocker: lits[1],
        });
        self.watches[(!lits[1]).index()].push(Watch {
            cref,
            blocker: lits[0],
        });
        self.clauses.push(Clause {
            lits,
            learnt,
            deleted: false,
            activity: 0.0,
        });
        if learnt {
            self.learnt_refs.push(cref);
        }
        cref
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;

            let mut i = 0;
            let mut ws = std::mem::take(&mut self.watches[p.index()]);
            while i < ws.len() {
                let blocker = ws[i].blocker;
                if self.value(blocker) == Val::True {
                    i += 1;
                    continue;
                }
                let cref = ws[i].cref;
                let assign = &self.assign;
                let clause = &mut self.clauses[cref as usize];
                // Put the false literal (¬p) at position 1.
                if clause.lits[0] == !p {
                    clause.lits.swap(0, 1);
                }
                debug_assert_eq!(clause.lits[1], !p);
                let first = clause.lits[0];
                if first != blocker && lit_value(assign, first) == Val::True {
                    ws[i] = Watch {
                        cref,
                        blocker: first,
                    };
                    i += 1;
                    continue;
                }
                // Look for a non-false replacement watch.
                let mut replacement = None;
                for k in 2..clause.lits.len() {
                    if lit_value(assign, clause.lits[k]) != Val::False {
                        clause.lits.swap(1, k);
                        replacement = Some(clause.lits[1]);
                        break;
                    }
                }
                if let Some(new_watch) = replacement {
                    self.watches[(!new_watch).index()].push(Watch {
                        cref,
                        blocker: first,
                    });
                    ws.swap_remove(i);
                    continue;
                }
                ws[i] = Watch {
                    cref,
                    blocker: first,
                };
                if self.value(first) == Val::False {
                    // Conflict: restore and bail out.
                    self.watches[p.index()] = ws;
                    self.qhead = self.trail.len();
                    return Some(cref);
                }
                self.enqueue(first, Some(cref));
                i += 1;
            }
            self.watches[p.index()] = ws;
        }
        None
    }

    fn bump_var(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.update(v, &self.activity);
    }

    fn bump_clause(&mut self, cref: u32) {
        let c = &mut self.clauses[cref as usize];
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for r in &self.learnt_refs {
                self.clauses[*r as usize].activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    /// First-UIP conflict analysis; returns (learnt clause, backtrack level).
    fn analyze(&mut self, confl: u32) -> (Vec<Lit>, u32) {
        let mut learnt: Vec<Lit> = vec![Lit(0)]; // slot 0 = asserting literal
        let mut counter = 0usize;
        let mut cref = confl;
        let mut trail_idx = self.trail.len();
        let mut uip = None;
        let current = self.decision_level();

        loop {
            if self.clauses[cref as usize].learnt {
                self.bump_clause(cref);
            }
            let start = usize::from(uip.is_some());
            for k in start..self.clauses[cref as usize].lits.len() {
                let q = self.clauses[cref as usize].lits[k];
                let v = q.var();
                if self.seen[v] || self.level[v] == TOP_LEVEL {
                    continue;
                }
                self.seen[v] = true;
                self.bump_var(v);
                if self.level[v] == current {
                    counter += 1;
                } else {
                    learnt.push(q);
                }
            }
            // Walk the trail back to the next marked literal.
            loop {
                trail_idx -= 1;
                if self.seen[self.trail[trail_idx].var()] {
                    break;
                }
            }
            let p = self.trail[trail_idx];
            self.seen[p.var()] = false;
            counter -= 1;
            if counter == 0 {
                uip = Some(p);
                break;
            }
            cref = self.reason[p.var()].expect("non-decision literal must have a reason");
            uip = Some(p);
        }
        learnt[0] = !uip.expect("conflict at a decision level above root");

        // Self-subsumption: drop a literal whose reason is covered by the rest.
        for lit in &learnt {
            self.seen[lit.var()] = true;
        }
        let mut kept = vec![learnt[0]];
        for &lit in &learnt[1..] {
            let redundant = match self.reason[lit.var()] {
                None => false,
                Some(r) => self.clauses[r as usize]
                    .lits
                    .iter()
                    .skip(1)
                    .all(|q| self.seen[q.var()] || self.level[q.var()] == TOP_LEVEL),
            };
            if !redundant {
                kept.push(lit);
            }
        }
        for lit in &learnt {
            self.seen[lit.var()] = false;
        }
        let mut learnt = kept;

        let backtrack = if learnt.len() == 1 {
            TOP_LEVEL
        } else {
            // Second-highest decision level watches position 1.
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[learnt[i].var()] > self.level[learnt[max_i].var()] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            self.level[learnt[1].var()]
        };
        (learnt, backtrack)
    }

    fn backtrack_to(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let sep = self.trail_lim[level as usize];
        for i in (sep..self.trail.len()).rev() {
            let lit = self.trail[i];
            let v = lit.var();
            self.polarity[v] = !lit.is_neg();
            self.assign[v] = Val::Undef;
            self.reason[v] = None;
            self.level[v] = TOP_LEVEL;
            self.heap.push(v, &self.activity);
        }
        self.trail.truncate(sep);
        self.trail_lim.truncate(level as usize);
        self.qhead = sep;
    }

    fn locked(&self, cref: u32) -> bool {
        let first = self.clauses[cref as usize].lits[0];
        self.value(first) == Val::True && self.reason[first.var()] == Some(cref)
    }

    fn reduce_learnts(&mut self) {
        let mut refs: Vec<u32> = self
            .learnt_refs
            .iter()
            .copied()
            .filter(|&cr| !self.clauses[cr as usize].deleted)
            .collect();
        refs.sort_by(|&a, &b| {
            let ca = &self.clauses[a as usize];
            let cb = &self.clauses[b as usize];
            (ca.lits.len() <= 2)
                .cmp(&(cb.lits.len() <= 2))
                .then(ca.activity.partial_cmp(&cb.activity).unwrap())
                .then(a.cmp(&b))
        });
        let half = refs.len() / 2;
        for (i, &cr) in refs.iter().enumerate() {
            let keep = i >= half || self.clauses[cr as usize].lits.len() <= 2 || self.locked(cr);
            if !keep {
                self.clauses[cr as usize].deleted = true;
            }
        }
        self.learnt_refs
            .retain(|&cr| !self.clauses[cr as usize].deleted);
        self.rebuild_watches();
    }

    fn rebuild_watches(&mut self) {
        for w in &mut self.watches {
            w.clear();
        }
        for (i, c) in self.clauses.iter().enumerate() {
            if c.deleted {
                continue;
            }
            self.watches[(!c.lits[0]).index()].push(Watch {
                cref: i as u32,
                blocker: c.lits[1],
            });
            self.watches[(!c.lits[1]).index()].push(Watch {
                cref: i as u32,
                blocker: c.lits[0],
            });
        }
    }

    fn pick_branch_lit(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assign[v] == Val::Undef {
                let mut phase = self.polarity[v];
                if self.rng.next().is_multiple_of(RANDOM_POLARITY_ONE_IN) {
                    phase = self.rng.next() & 1 == 0;
                }
                return Some(Lit::new(v, !phase));
            }
        }
        None
    }

    fn luby(i: u64) -> f64 {
        // Luby restart sequence: 1 1 2 1 1 2 4 ...
        let (mut size, mut seq) = (1u64, 0u64);
        while size < i + 1 {
            seq += 1;
            size = 2 * size + 1;
        }
        let mut x = i;
        let mut sz = size;
        while sz - 1 != x {
            sz = (sz - 1) / 2;
            seq -= 1;
            x %= sz;
        }
        RESTART_INC.powi(seq as i32)
    }

    pub fn solve(&mut self, budget: Budget) -> SolveResult {
        let start = Instant::now();
        if self.root_conflict {
            return SolveResult::Unsat;
        }
        if self.propagate().is_some() {
            return SolveResult::Unsat;
        }
        self.max_learnts = (self.clauses.len() as f64 / 3.0).max(2000.0);
        let mut restarts = 0u64;
        loop {
            let limit = (Self::luby(restarts) * RESTART_FIRST as f64) as u64;
            match self.search(limit, budget, start) {
                SearchOutcome::Sat(model) => return SolveResult::Sat(model),
                SearchOutcome::Unsat => return SolveResult::Unsat,
                SearchOutcome::Restart => restarts += 1,
                SearchOutcome::Budget => {
                    return SolveResult::BudgetExceeded {
                        elapsed: start.elapsed(),
                        conflicts: self.conflicts,
                    }
                }
            }
        }
    }

    fn over_budget(&self, budget: Budget, start: Instant) -> bool {
        if let Some(max) = budget.conflicts {
            if self.conflicts >= max {
                return true;
            }
        }
        // Time is polled every 128 conflicts to stay off the syscall path.
        if let Some(max) = budget.time {
            if self.conflicts.is_multiple_of(128) && start.elapsed() >= max {
                return true;
            }
        }
        false
    }

    fn search(&mut self, restart_limit: u64, budget: Budget, start: Instant) -> SearchOutcome {
        let mut conflicts_here = 0u64;
        loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                conflicts_here += 1;
                if self.decision_level() == TOP_LEVEL {
                    return SearchOutcome::Unsat;
                }
                let (learnt, bt_level) = self.analyze(confl);
                self.backtrack_to(bt_level);
                let asserting = learnt[0];
                if learnt.len() == 1 {
                    self.enqueue(asserting, None);
                } else {
                    let cref = self.attach_clause(learnt, true);
                    self.bump_clause(cref);
                    self.enqueue(asserting, Some(cref));
                }
                self.var_inc /= VAR_DECAY;
                self.cla_inc /= CLA_DECAY;
                if self.over_budget(budget, start) {
                    return SearchOutcome::Budget;
                }
            } else {
                if conflicts_here >= restart_limit {
                    self.backtrack_to(TOP_LEVEL);
                    return SearchOutcome::Restart;
                }
                if self.learnt_refs.len() as f64 >= self.max_learnts {
                    self.reduce_learnts();
                    self.max_learnts *= 1.5;
                }
                match self.pick_branch_lit() {
                    None => {
                        let model = self.assign.iter().map(|&v| v == Val::True).collect();
                        self.backtrack_to(TOP_LEVEL);
                        return SearchOutcome::Sat(model);
                    }
                    Some(lit) => {
                        self.trail_lim.push(self.trail.len());
                        self.enqueue(lit, None);
                    }
                }
            }
        }
    }
}

enum SearchOutcome {
    Sat(Vec<bool>),
    Unsat,
    Restart,
    Budget,
}

/// Convenience wrapper: build a solver and run it once.
pub fn solve(cnf: &CnfFormula, budget: Budget, config: SolverConfig) -> SolveResult {
    Solver::new(cnf, config).solve(budget)
}
