//! A CDCL SAT solver with assumptions, plus lazy AIG-to-CNF encoding.
//!
//! Two watched literals, first-UIP learning with local minimization, VSIDS
//! with phase saving, Luby restarts, and activity-based clause deletion.
//! After an unsatisfiable call under assumptions, [`Solver::failed_assumptions`]
//! holds a subset of the assumptions that is already contradictory.

use crate::netlist::{Circuit, Lit, VarKind};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct SatLit(u32);

impl SatLit {
    pub fn new(var: u32, negated: bool) -> SatLit {
        SatLit(var * 2 + negated as u32)
    }

    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_negated(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn xor(self, flip: bool) -> SatLit {
        SatLit(self.0 ^ flip as u32)
    }

    /// DIMACS form, 1-based.
    pub fn to_dimacs(self) -> i32 {
        let v = self.var() as i32 + 1;
        if self.is_negated() {
            -v
        } else {
            v
        }
    }

    fn idx(self) -> usize {
        self.0 as usize
    }
}

impl std::ops::Not for SatLit {
    type Output = SatLit;
    fn not(self) -> SatLit {
        SatLit(self.0 ^ 1)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SatResult {
    Sat,
    Unsat,
    Unknown,
}

const UNDEF: u8 = 2;

#[derive(Clone, Debug)]
struct Clause {
    lits: Vec<SatLit>,
    learnt: bool,
    deleted: bool,
    activity: f64,
}

#[derive(Clone, Copy, Debug)]
struct Watcher {
    cref: u32,
    blocker: SatLit,
}

/// Max-heap over variables keyed by activity.
#[derive(Clone, Debug, Default)]
struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<Option<usize>>,
}

impl VarHeap {
    fn contains(&self, v: u32) -> bool {
        self.pos[v as usize].is_some()
    }

    fn insert(&mut self, v: u32, act: &[f64]) {
        if self.pos.len() <= v as usize {
            self.pos.resize(v as usize + 1, None);
        }
        if self.contains(v) {
            return;
        }
        self.heap.push(v);
        self.pos[v as usize] = Some(self.heap.len() - 1);
        self.up(self.heap.len() - 1, act);
    }

    fn pop(&mut self, act: &[f64]) -> Option<u32> {
        if self.heap.is_empty() {
            return None;
        }
        let top = self.heap.swap_remove(0);
        self.pos[top as usize] = None;
        if !self.heap.is_empty() {
            self.pos[self.heap[0] as usize] = Some(0);
            self.down(0, act);
        }
        Some(top)
    }

    fn increased(&mut self, v: u32, act: &[f64]) {
        if let Some(p) = self.pos.get(v as usize).copied().flatten() {
            self.up(p, act);
        }
    }

    fn up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            let pv = self.heap[parent];
            if act[pv as usize] >= act[v as usize] {
                break;
            }
            self.heap[i] = pv;
            self.pos[pv as usize] = Some(i);
            i = parent;
        }
        self.heap[i] = v;
        self.pos[v as usize] = Some(i);
    }

    fn down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        let n = self.heap.len();
        loop {
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let r = l + 1;
            let c = if r < n && act[self.heap[r] as usize] > act[self.heap[l] as usize] {
                r
            } else {
                l
            };
            if act[self.heap[c] as usize] <= act[v as usize] {
                break;
            }
            self.heap[i] = self.heap[c];
            self.pos[self.heap[i] as usize] = Some(i);
            i = c;
        }
        self.heap[i] = v;
        self.pos[v as usize] = Some(i);
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolverStats {
    pub solves: u64,
    pub conflicts: u64,
    pub decisions: u64,
    pub propagations: u64,
}

#[derive(Clone, Debug)]
pub struct Solver {
    clauses: Vec<Clause>,
    watches: Vec<Vec<Watcher>>,
    assigns: Vec<u8>,
    level: Vec<u32>,
    reason: Vec<Option<u32>>,
    polarity: Vec<bool>,
    activity: Vec<f64>,
    var_inc: f64,
    cla_inc: f64,
    heap: VarHeap,
    trail: Vec<SatLit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    seen: Vec<bool>,
    ok: bool,
    model: Vec<bool>,
    failed: Vec<SatLit>,
    budget: Option<u64>,
    num_learnts: usize,
    max_learnts: f64,
    pub stats: SolverStats,
}

impl Default for Solver {
    fn default() -> Self {
        Self::new()
    }
}

impl Solver {
    /// A solver whose variable 0 is fixed to true.
    pub fn new() -> Solver {
        let mut s = Solver {
            clauses: Vec::new(),
            watches: Vec::new(),
            assigns: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            polarity: Vec::new(),
            activity: Vec::new(),
            var_inc: 1.0,
            cla_inc: 1.0,
            heap: VarHeap::default(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            seen: Vec::new(),
            ok: true,
            model: Vec::new(),
            failed: Vec::new(),
            budget: None,
            num_learnts: 0,
            max_learnts: 0.0,
            stats: SolverStats::default(),
        };
        let t = s.new_var();
        s.add_clause(&[t]);
        s
    }

    pub fn true_lit(&self) -> SatLit {
        SatLit(0)
    }

    pub fn num_vars(&self) -> u32 {
        self.assigns.len() as u32
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.iter().filter(|c| !c.deleted && !c.learnt).count()
    }

    /// A fresh variable, returned as its positive literal.
    pub fn new_var(&mut self) -> SatLit {
        let v = self.assigns.len() as u32;
        self.assigns.push(UNDEF);
        self.level.push(0);
        self.reason.push(None);
        self.polarity.push(false);
        self.activity.push(0.0);
        self.seen.push(false);
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.heap.insert(v, &self.activity);
        SatLit::new(v, false)
    }

    /// Bounds the number of conflicts of each following `solve` call.
    pub fn set_conflict_budget(&mut self, budget: Option<u64>) {
        self.budget = budget;
    }

    fn value(&self, l: SatLit) -> u8 {
        let a = self.assigns[l.var() as usize];
        if a == UNDEF {
            UNDEF
        } else {
            a ^ l.is_negated() as u8
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// Adds a clause at level 0. Returns false once the formula is known to
    /// be unsatisfiable.
    pub fn add_clause(&mut self, lits: &[SatLit]) -> bool {
        if !self.ok {
            return false;
        }
        self.cancel_until(0);
        let mut ls: Vec<SatLit> = lits.to_vec();
        ls.sort_unstable();
        ls.dedup();
        let mut out = Vec::with_capacity(ls.len());
        for (i, &l) in ls.iter().enumerate() {
            if i + 1 < ls.len() && ls[i + 1] == !l {
                return true;
            }
            match self.value(l) {
                1 => return true,
                0 => {}
                _ => out.push(l),
            }
        }
        match out.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.enqueue(out[0], None);
                if self.propagate().is_some() {
                    self.ok = false;
                }
                self.ok
            }
            _ => {
                self.attach(out, false);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<SatLit>, learnt: bool) -> u32 {
        let cref = self.clauses.len() as u32;
        self.watches[(!lits[0]).idx()].push(Watcher { cref, blocker: lits[1] });
        self.watches[(!lits[1]).idx()].push(Watcher { cref, blocker: lits[0] });
        if learnt {
            self.num_learnts += 1;
        }
        self.clauses.push(Clause {
            lits,
            learnt,
            deleted: false,
            activity: 0.0,
        });
        cref
    }

    fn enqueue(&mut self, l: SatLit, reason: Option<u32>) {
        let v = l.var() as usize;
        self.assigns[v] = !l.is_negated() as u8;
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[p.idx()]);
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.value(w.blocker) == 1 {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let cref = w.cref as usize;
                if self.clauses[cref].deleted {
                    continue;
                }
                {
                    let c = &mut self.clauses[cref].lits;
                    if c[0] == false_lit {
                        c.swap(0, 1);
                    }
                }
                let first = self.clauses[cref].lits[0];
                if first != w.blocker && self.value(first) == 1 {
                    ws[j] = Watcher {
                        cref: w.cref,
                        blocker: first,
                    };
                    j += 1;
                    continue;
                }
                let len = self.clauses[cref].lits.len();
                let mut found = false;
                for k in 2..len {
                    let lk = self.clauses[cref].lits[k];
                    if self.value(lk) != 0 {
                        self.clauses[cref].lits.swap(1, k);
                        self.watches[(!lk).idx()].push(Watcher {
                            cref: w.cref,
                            blocker: first,
                        });
                        found = true;
                        break;
                    }
                }
                if found {
                    continue;
                }
                ws[j] = Watcher {
                    cref: w.cref,
                    blocker: first,
                };
                j += 1;
                if self.value(first) == 0 {
                    conflict = Some(w.cref);
                    self.qhead = self.trail.len();
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, Some(w.cref));
                }
            }
            ws.truncate(j);
            // watchers added to p's own list while it was taken
            let added = std::mem::take(&mut self.watches[p.idx()]);
            ws.extend(added);
            self.watches[p.idx()] = ws;
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    fn cancel_until(&mut self, lvl: u32) {
        if self.decision_level() <= lvl {
            return;
        }
        let lim = self.trail_lim[lvl as usize];
        for k in (lim..self.trail.len()).rev() {
            let l = self.trail[k];
            let v = l.var();
            self.assigns[v as usize] = UNDEF;
            self.reason[v as usize] = None;
            self.polarity[v as usize] = !l.is_negated();
            self.heap.insert(v, &self.activity);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(lvl as usize);
        self.qhead = lim;
    }

    fn bump_var(&mut self, v: u32) {
        self.activity[v as usize] += self.var_inc;
        if self.activity[v as usize] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.increased(v, &self.activity);
    }

    fn bump_clause(&mut self, cref: u32) {
        let c = &mut self.clauses[cref as usize];
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for c in &mut self.clauses {
                c.activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn analyze(&mut self, confl: u32) -> (Vec<SatLit>, u32) {
        let mut learnt = vec![SatLit(0)];
        let mut path = 0;
        let mut p: Option<SatLit> = None;
        let mut idx = self.trail.len();
        let mut confl = Some(confl);
        let dl = self.decision_level();
        loop {
            let cref = confl.expect("conflict analysis needs a reason");
            if self.clauses[cref as usize].learnt {
                self.bump_clause(cref);
            }
            let start = if p.is_some() { 1 } else { 0 };
            let lits = self.clauses[cref as usize].lits.clone();
            for &q in &lits[start..] {
                let v = q.var() as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    self.bump_var(q.var());
                    self.seen[v] = true;
                    if self.level[v] >= dl {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var() as usize] {
                    break;
                }
            }
            let pl = self.trail[idx];
            p = Some(pl);
            confl = self.reason[pl.var() as usize];
            self.seen[pl.var() as usize] = false;
            path -= 1;
            if path == 0 {
                break;
            }
        }
        learnt[0] = !p.unwrap();

        // drop literals implied by others in the clause
        let mut keep = vec![learnt[0]];
        for &l in &learnt[1..] {
            let v = l.var() as usize;
            let redundant = match self.reason[v] {
                None => false,
                Some(r) => self.clauses[r as usize].lits[1..].iter().all(|q| {
                    let qv = q.var() as usize;
                    self.seen[qv] || self.level[qv] == 0
                }),
            };
            if !redundant {
                keep.push(l);
            }
        }
        for &l in &learnt {
            self.seen[l.var() as usize] = false;
        }
        let learnt = keep;

        let mut bt = 0;
        let mut max_i = 1;
        for (i, l) in learnt.iter().enumerate().skip(1) {
            let lv = self.level[l.var() as usize];
            if lv > bt {
                bt = lv;
                max_i = i;
            }
        }
        let mut learnt = learnt;
        if learnt.len() > 1 {
            learnt.swap(1, max_i);
        }
        (learnt, bt)
    }

    /// Assumptions responsible for `p` being false.
    fn analyze_final(&mut self, p: SatLit) {
        self.failed.clear();
        self.failed.push(p);
        if self.decision_level() == 0 {
            return;
        }
        self.seen[p.var() as usize] = true;
        for k in (self.trail_lim[0]..self.trail.len()).rev() {
            let l = self.trail[k];
            let v = l.var() as usize;
            if !self.seen[v] {
                continue;
            }
            match self.reason[v] {
                None => {
                    if self.level[v] > 0 {
                        self.failed.push(!l);
                    }
                }
                Some(r) => {
                    for &q in &self.clauses[r as usize].lits[1..] {
                        if self.level[q.var() as usize] > 0 {
                            self.seen[q.var() as usize] = true;
                        }
                    }
                }
            }
            self.seen[v] = false;
        }
        self.seen[p.var() as usize] = false;
    }

    fn reduce_db(&mut self) {
        let mut cands: Vec<usize> = (0..self.clauses.len())
            .filter(|&i| {
                let c = &self.clauses[i];
                c.learnt && !c.deleted && c.lits.len() > 2
            })
            .filter(|&i| {
                // keep clauses that are reasons
                let l0 = self.clauses[i].lits[0];
                !(self.value(l0) == 1 && self.reason[l0.var() as usize] == Some(i as u32))
            })
            .collect();
        cands.sort_by(|&a, &b| self.clauses[a].activity.partial_cmp(&self.clauses[b].activity).unwrap());
        for &i in &cands[..cands.len() / 2] {
            self.clauses[i].deleted = true;
            self.clauses[i].lits = Vec::new();
            self.num_learnts -= 1;
        }
        for w in &mut self.watches {
            w.clear();
        }
        for (i, c) in self.clauses.iter().enumerate() {
            if c.deleted {
                continue;
            }
            self.watches[(!c.lits[0]).idx()].push(Watcher {
                cref: i as u32,
                blocker: c.lits[1],
            });
            self.watches[(!c.lits[1]).idx()].push(Watcher {
                cref: i as u32,
                blocker: c.lits[0],
            });
        }
    }

    fn pick_branch(&mut self) -> Option<SatLit> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assigns[v as usize] == UNDEF {
                return Some(SatLit::new(v, !self.polarity[v as usize]));
            }
        }
        None
    }

    fn luby(mut x: u64) -> u64 {
        let (mut size, mut seq) = (1u64, 0u32);
        while size < x + 1 {
            seq += 1;
            size = 2 * size + 1;
        }
        while size - 1 != x {
            size = (size - 1) >> 1;
            seq -= 1;
            x %= size;
        }
        1 << seq
    }

    /// Decides satisfiability of the clauses under `assumptions`.
    pub fn solve(&mut self, assumptions: &[SatLit]) -> SatResult {
        self.stats.solves += 1;
        self.failed.clear();
        self.model.clear();
        if !self.ok {
            return SatResult::Unsat;
        }
        self.cancel_until(0);
        if self.max_learnts == 0.0 {
            self.max_learnts = (self.clauses.len() as f64 / 3.0).max(2000.0);
        }
        let start_conflicts = self.stats.conflicts;
        let mut restart = 0u64;
        let result = loop {
            let limit = Self::luby(restart) * 100;
            restart += 1;
            match self.search(assumptions, limit, start_conflicts) {
                Some(r) => break r,
                None => continue,
            }
        };
        if result == SatResult::Sat {
            self.model = (0..self.assigns.len()).map(|v| self.assigns[v] == 1).collect();
        }
        self.cancel_until(0);
        result
    }

    fn search(&mut self, assumptions: &[SatLit], limit: u64, start: u64) -> Option<SatResult> {
        let mut conflicts = 0u64;
        loop {
            if let Some(confl) = self.propagate() {
                self.stats.conflicts += 1;
                conflicts += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    return Some(SatResult::Unsat);
                }
                let (learnt, bt) = self.analyze(confl);
                self.cancel_until(bt);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let l0 = learnt[0];
                    let cref = self.attach(learnt, true);
                    self.bump_clause(cref);
                    self.enqueue(l0, Some(cref));
                }
                self.var_inc /= 0.95;
                self.cla_inc /= 0.999;
            } else {
                if let Some(b) = self.budget {
                    if self.stats.conflicts - start >= b {
                        return Some(SatResult::Unknown);
                    }
                }
                if conflicts >= limit {
                    self.cancel_until(0);
                    return None;
                }
                if self.num_learnts as f64 - self.trail.len() as f64 >= self.max_learnts {
                    self.reduce_db();
                    self.max_learnts *= 1.1;
                }
                let mut next = None;
                while (self.decision_level() as usize) < assumptions.len() {
                    let a = assumptions[self.decision_level() as usize];
                    match self.value(a) {
                        1 => self.trail_lim.push(self.trail.len()),
                        0 => {
                            self.analyze_final(!a);
                            // report assumptions, not their negations
                            for f in &mut self.failed {
                                *f = !*f;
                            }
                            return Some(SatResult::Unsat);
                        }
                        _ => {
                            next = Some(a);
                            break;
                        }
                    }
                }
                let lit = match next {
                    Some(a) => a,
                    None => {
                        self.stats.decisions += 1;
                        match self.pick_branch() {
                            Some(l) => l,
                            None => return Some(SatResult::Sat),
                        }
                    }
                };
                self.trail_lim.push(self.trail.len());
                self.enqueue(lit, None);
            }
        }
    }

    /// Model value after a satisfiable call.
    pub fn model_value(&self, l: SatLit) -> bool {
        self.model[l.var() as usize] ^ l.is_negated()
    }

    pub fn has_model(&self) -> bool {
        !self.model.is_empty()
    }

    /// After an unsatisfiable call: assumptions whose conjunction is
    /// contradictory. Empty if the clauses alone are unsatisfiable.
    pub fn failed_assumptions(&self) -> &[SatLit] {
        &self.failed
    }

    pub fn is_ok(&self) -> bool {
        self.ok
    }

    /// Clauses in DIMACS numbering, without learnt clauses.
    pub fn dimacs_clauses(&self) -> Vec<Vec<i32>> {
        let mut out: Vec<Vec<i32>> = self
            .trail
            .iter()
            .filter(|l| self.level[l.var() as usize] == 0)
            .map(|l| vec![l.to_dimacs()])
            .collect();
        out.extend(
            self.clauses
                .iter()
                .filter(|c| !c.learnt && !c.deleted)
                .map(|c| c.lits.iter().map(|l| l.to_dimacs()).collect()),
        );
        out
    }
}

/// Lazily encodes AIG logic into a solver. Inputs and latches map to caller
/// supplied literals; AND gates are encoded on first use.
#[derive(Clone, Debug)]
pub struct AigEncoder {
    map: Vec<Option<SatLit>>,
}

impl AigEncoder {
    pub fn new(c: &Circuit, s: &Solver, inputs: &[SatLit], latches: &[SatLit]) -> AigEncoder {
        let mut map = vec![None; c.max_var() as usize + 1];
        map[0] = Some(!s.true_lit());
        for (i, &v) in c.inputs().iter().enumerate() {
            map[v as usize] = Some(inputs[i]);
        }
        for (i, l) in c.latches().iter().enumerate() {
            map[l.var as usize] = Some(latches[i]);
        }
        AigEncoder { map }
    }

    /// Fresh solver variables for every input and latch.
    pub fn fresh(c: &Circuit, s: &mut Solver) -> (AigEncoder, Vec<SatLit>, Vec<SatLit>) {
        let ins: Vec<SatLit> = (0..c.num_inputs()).map(|_| s.new_var()).collect();
        let lats: Vec<SatLit> = (0..c.num_latches()).map(|_| s.new_var()).collect();
        (AigEncoder::new(c, s, &ins, &lats), ins, lats)
    }

    pub fn lit(&mut self, c: &Circuit, s: &mut Solver, root: Lit) -> SatLit {
        if let Some(x) = self.map[root.var() as usize] {
            return x.xor(root.is_negated());
        }
        let mut stack = vec![root.var()];
        while let Some(&v) = stack.last() {
            if self.map[v as usize].is_some() {
                stack.pop();
                continue;
            }
            let a = match c.kind(v) {
                Some(VarKind::And(i)) => c.ands()[i],
                _ => unreachable!("leaves are mapped at construction"),
            };
            let x = self.map[a.rhs0.var() as usize];
            let y = self.map[a.rhs1.var() as usize];
            match (x, y) {
                (Some(x), Some(y)) => {
                    let x = x.xor(a.rhs0.is_negated());
                    let y = y.xor(a.rhs1.is_negated());
                    let g = s.new_var();
                    s.add_clause(&[!g, x]);
                    s.add_clause(&[!g, y]);
                    s.add_clause(&[g, !x, !y]);
                    self.map[v as usize] = Some(g);
                    stack.pop();
                }
                _ => {
                    if x.is_none() {
                        stack.push(a.rhs0.var());
                    }
                    if y.is_none() {
                        stack.push(a.rhs1.var());
                    }
                }
            }
        }
        self.map[root.var() as usize].unwrap().xor(root.is_negated())
    }
}

/// Input and latch values.
pub type CombModel = (Vec<bool>, Vec<bool>);

/// Satisfiability of `root` in a combinational view of `c`: inputs and
/// latches are free. On SAT returns their values.
pub fn solve_comb(c: &Circuit, root: Lit, budget: Option<u64>) -> (SatResult, Option<CombModel>) {
    let mut s = Solver::new();
    s.set_conflict_budget(budget);
    let (mut enc, ins, lats) = AigEncoder::fresh(c, &mut s);
    let r = enc.lit(c, &mut s, root);
    let res = s.solve(&[r]);
    let model = (res == SatResult::Sat).then(|| {
        (
            ins.iter().map(|&l| s.model_value(l)).collect(),
            lats.iter().map(|&l| s.model_value(l)).collect(),
        )
    });
    (res, model)
}
