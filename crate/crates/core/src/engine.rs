//! Backend model checking: BMC, k-induction and IC3.
//!
//! Time 0 is coupled: the input of step 0 feeds the resets, the property
//! at time 0 and the first transition alike.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::netlist::{Circuit, CircuitBuilder, Lit};
use crate::satkit::{AigEncoder, SatLit, SatResult, Solver};
use crate::tersim::{Cube, TernarySim, Tv};
use crate::transform::forward;

/// A disjunction of latch literals `(latch, value)`.
pub type Clause = Vec<(usize, bool)>;

/// A conjunction of clauses over the latches.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Invariant {
    pub clauses: Vec<Clause>,
}

impl Invariant {
    pub fn top() -> Invariant {
        Invariant::default()
    }

    pub fn encode(&self, b: &mut CircuitBuilder, latches: &[Lit]) -> Lit {
        let cls: Vec<Lit> = self
            .clauses
            .iter()
            .map(|cl| {
                let lits: Vec<Lit> = cl.iter().map(|&(l, v)| latches[l].xor(!v)).collect();
                b.or_all(&lits)
            })
            .collect();
        b.and_all(&cls)
    }

    pub fn holds(&self, state: &[bool]) -> bool {
        self.clauses.iter().all(|cl| cl.iter().any(|&(l, v)| state[l] == v))
    }
}

/// A concrete run: the state at time 0 and one input vector per step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub initial: Vec<bool>,
    pub inputs: Vec<Vec<bool>>,
}

impl Trace {
    /// Checks that the run starts in a reset state and ends in a bad state.
    pub fn replay(&self, c: &Circuit) -> Result<(), String> {
        if self.inputs.is_empty() {
            return Err("trace has no steps".into());
        }
        let mut state = self.initial.clone();
        if state.len() != c.num_latches() {
            return Err("wrong number of latch values".into());
        }
        for (t, ins) in self.inputs.iter().enumerate() {
            let ev = c.eval(ins, &state).map_err(|e| e.to_string())?;
            if t == 0 {
                let r = ev.reset_values(c);
                for (l, latch) in c.latches().iter().enumerate() {
                    if !latch.is_uninitialized() && r[l] != state[l] {
                        return Err(format!("latch {l} does not match its reset"));
                    }
                }
            }
            if t + 1 == self.inputs.len() {
                return if ev.bad(c) {
                    Ok(())
                } else {
                    Err("final state is not bad".into())
                };
            }
            state = ev.next_state(c);
        }
        unreachable!()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub invariant: Invariant,
    /// The invariant covers states from time 1 on; see
    /// [`crate::witness::terminal_witness`].
    pub after_first_step: bool,
    /// IC3 frames used beyond the initial one, or the induction depth.
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// `None` when safety was shown without a certificate.
    Safe(Option<Proof>),
    Unsafe(Trace),
    Unknown(String),
}

impl Verdict {
    pub fn status(&self) -> &'static str {
        match self {
            Verdict::Safe(_) => "SAFE",
            Verdict::Unsafe(_) => "UNSAFE",
            Verdict::Unknown(_) => "UNKNOWN",
        }
    }
}

/// Resource limits shared by all engines.
#[derive(Clone, Debug, Default)]
pub struct Budget {
    pub max_bound: Option<usize>,
    /// Conflicts per SAT call.
    pub conflicts: Option<u64>,
    pub deadline: Option<Instant>,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Budget {
    fn exhausted(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
            || self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed))
    }

    fn bound(&self, default: usize) -> usize {
        self.max_bound.unwrap_or(default)
    }
}

pub const OUT_OF_BUDGET: &str = "resource budget exhausted";

fn solve(s: &mut Solver, assumptions: &[SatLit], budget: &Budget) -> Result<bool, String> {
    if budget.exhausted() {
        return Err(OUT_OF_BUDGET.into());
    }
    s.set_conflict_budget(budget.conflicts);
    match s.solve(assumptions) {
        SatResult::Sat => Ok(true),
        SatResult::Unsat => Ok(false),
        SatResult::Unknown => Err(OUT_OF_BUDGET.into()),
    }
}

fn equiv(s: &mut Solver, a: SatLit, b: SatLit) {
    s.add_clause(&[!a, b]);
    s.add_clause(&[a, !b]);
}

/// Incremental unrolling with per-frame inputs and latches.
struct Unroller<'c> {
    c: &'c Circuit,
    s: Solver,
    inputs: Vec<Vec<SatLit>>,
    latches: Vec<Vec<SatLit>>,
    enc: Vec<AigEncoder>,
}

impl<'c> Unroller<'c> {
    fn new(c: &'c Circuit, with_reset: bool) -> Unroller<'c> {
        let mut s = Solver::new();
        let (mut enc, ins, lats) = AigEncoder::fresh(c, &mut s);
        if with_reset {
            for (l, latch) in c.latches().iter().enumerate() {
                if !latch.is_uninitialized() {
                    let r = enc.lit(c, &mut s, latch.reset);
                    equiv(&mut s, lats[l], r);
                }
            }
        }
        Unroller {
            c,
            s,
            inputs: vec![ins],
            latches: vec![lats],
            enc: vec![enc],
        }
    }

    fn extend(&mut self) {
        let c = self.c;
        let f = self.enc.len() - 1;
        let next: Vec<SatLit> = c
            .latches()
            .iter()
            .map(|l| self.enc[f].lit(c, &mut self.s, l.next))
            .collect();
        let ins: Vec<SatLit> = (0..c.num_inputs()).map(|_| self.s.new_var()).collect();
        self.enc.push(AigEncoder::new(c, &self.s, &ins, &next));
        self.inputs.push(ins);
        self.latches.push(next);
    }

    fn bad(&mut self, f: usize) -> SatLit {
        self.enc[f].lit(self.c, &mut self.s, self.c.bad())
    }

    fn trace(&self, last: usize) -> Trace {
        Trace {
            initial: self.latches[0].iter().map(|&l| self.s.model_value(l)).collect(),
            inputs: self.inputs[..=last]
                .iter()
                .map(|f| f.iter().map(|&l| self.s.model_value(l)).collect())
                .collect(),
        }
    }
}

/// Counterexample with at most `bound` steps after time 0, if any.
pub fn bmc_upto(c: &Circuit, bound: usize, budget: &Budget) -> Result<Option<Trace>, String> {
    let b = Budget {
        max_bound: Some(bound),
        ..budget.clone()
    };
    match bmc(c, &b) {
        Verdict::Unsafe(t) => Ok(Some(t)),
        Verdict::Unknown(e) if e == OUT_OF_BUDGET => Err(e),
        _ => Ok(None),
    }
}

/// Searches for a counterexample of length `0..=max_bound`.
pub fn bmc(c: &Circuit, budget: &Budget) -> Verdict {
    let max = budget.bound(20);
    let mut u = Unroller::new(c, true);
    for k in 0..=max {
        if k > 0 {
            u.extend();
        }
        let bad = u.bad(k);
        match solve(&mut u.s, &[bad], budget) {
            Ok(true) => return Verdict::Unsafe(u.trace(k)),
            Ok(false) => {
                u.s.add_clause(&[!bad]);
            }
            Err(e) => return Verdict::Unknown(e),
        }
    }
    Verdict::Unknown(format!("no counterexample up to bound {max}"))
}

/// k-induction without simple-path constraints. Only a proof at `k = 1`
/// carries an invariant; deeper proofs return `Safe(None)`.
pub fn kinduction(c: &Circuit, budget: &Budget) -> Verdict {
    let max = budget.bound(20);
    let mut base = Unroller::new(c, true);
    let mut step = Unroller::new(c, false);
    for k in 0..=max {
        if k > 0 {
            base.extend();
            step.extend();
        }
        let bad = base.bad(k);
        match solve(&mut base.s, &[bad], budget) {
            Ok(true) => return Verdict::Unsafe(base.trace(k)),
            Ok(false) => {
                base.s.add_clause(&[!bad]);
            }
            Err(e) => return Verdict::Unknown(e),
        }
        if k == 0 {
            continue;
        }
        let prev = step.bad(k - 1);
        step.s.add_clause(&[!prev]);
        let bad = step.bad(k);
        match solve(&mut step.s, &[bad], budget) {
            Ok(true) => {}
            Ok(false) => {
                let proof = (k == 1).then(|| Proof {
                    invariant: Invariant::top(),
                    after_first_step: false,
                    depth: 1,
                });
                return Verdict::Safe(proof);
            }
            Err(e) => return Verdict::Unknown(e),
        }
    }
    Verdict::Unknown(format!("no induction proof up to k = {max}"))
}

/// True when an input read by some reset is also read by a transition or
/// the property, so the time-0 input cannot be chosen separately.
pub fn has_coupled_reset(c: &Circuit) -> bool {
    let resets: Vec<Lit> = c
        .latches()
        .iter()
        .filter(|l| !l.is_uninitialized())
        .map(|l| l.reset)
        .collect();
    let (ri, _) = c.support(&resets);
    if ri.is_empty() {
        return false;
    }
    let mut rest: Vec<Lit> = c.latches().iter().map(|l| l.next).collect();
    rest.push(c.bad());
    let (oi, _) = c.support(&rest);
    ri.iter().any(|i| oi.contains(i))
}

/// One frame solver: `T(I, L)` with next-state nets, `bad(I, L)`, and for
/// frame 0 the reset predicate `R(I_r, L)` over separate inputs.
struct Frame {
    s: Solver,
    inputs: Vec<SatLit>,
    latches: Vec<SatLit>,
    next: Vec<SatLit>,
    bad: SatLit,
}

impl Frame {
    fn new(c: &Circuit, init: bool) -> Frame {
        let mut s = Solver::new();
        let (mut enc, inputs, latches) = AigEncoder::fresh(c, &mut s);
        let next = c.latches().iter().map(|l| enc.lit(c, &mut s, l.next)).collect();
        let bad = enc.lit(c, &mut s, c.bad());
        if init {
            let rin: Vec<SatLit> = (0..c.num_inputs()).map(|_| s.new_var()).collect();
            let mut renc = AigEncoder::new(c, &s, &rin, &latches);
            for (l, latch) in c.latches().iter().enumerate() {
                if !latch.is_uninitialized() {
                    let r = renc.lit(c, &mut s, latch.reset);
                    equiv(&mut s, latches[l], r);
                }
            }
        }
        Frame {
            s,
            inputs,
            latches,
            next,
            bad,
        }
    }

    fn cur(&self, cube: &Cube) -> Vec<SatLit> {
        cube.iter().map(|&(l, v)| self.latches[l].xor(!v)).collect()
    }

    fn nxt(&self, cube: &Cube) -> Vec<SatLit> {
        cube.iter().map(|&(l, v)| self.next[l].xor(!v)).collect()
    }

    fn block(&mut self, cube: &Cube) {
        let cl: Vec<SatLit> = self.cur(cube).into_iter().map(|l| !l).collect();
        self.s.add_clause(&cl);
    }

    fn model(&self) -> (Vec<bool>, Vec<bool>) {
        (
            self.inputs.iter().map(|&l| self.s.model_value(l)).collect(),
            self.latches.iter().map(|&l| self.s.model_value(l)).collect(),
        )
    }
}

struct Obligation {
    cube: Cube,
    level: usize,
    dist: usize,
}

struct Ic3<'c> {
    c: &'c Circuit,
    budget: &'c Budget,
    frames: Vec<Frame>,
    /// `cubes[i]`: cubes blocked exactly up to frame `i`.
    cubes: Vec<Vec<Cube>>,
    sim: TernarySim<'c>,
}

enum Ic3Result {
    Proof(Invariant, usize),
    Cex(usize),
}

impl<'c> Ic3<'c> {
    fn new(c: &'c Circuit, budget: &'c Budget) -> Ic3<'c> {
        Ic3 {
            c,
            budget,
            frames: vec![Frame::new(c, true)],
            cubes: vec![vec![]],
            sim: TernarySim::new(c),
        }
    }

    fn top(&self) -> usize {
        self.frames.len() - 1
    }

    fn push_frame(&mut self) {
        self.frames.push(Frame::new(self.c, false));
        self.cubes.push(vec![]);
    }

    fn intersects_init(&mut self, cube: &Cube) -> Result<bool, String> {
        let a = self.frames[0].cur(cube);
        solve(&mut self.frames[0].s, &a, self.budget)
    }

    /// Drops latches whose value is not needed to fix `target` under the
    /// given inputs.
    fn minimize(&mut self, inputs: &[bool], state: &[bool], target: &dyn Fn(&TernarySim) -> bool) -> Cube {
        let ins: Vec<Tv> = inputs.iter().map(|&b| Tv::from_bool(b)).collect();
        let mut st: Vec<Tv> = state.iter().map(|&b| Tv::from_bool(b)).collect();
        for l in 0..st.len() {
            let keep = st[l];
            st[l] = Tv::X;
            self.sim.eval(&ins, &st);
            if !target(&self.sim) {
                st[l] = keep;
            }
        }
        st.iter()
            .enumerate()
            .filter_map(|(l, v)| v.to_bool().map(|b| (l, b)))
            .collect()
    }

    /// `F_{i} ∧ ¬cube ∧ T ∧ cube'`. On UNSAT returns the literals of
    /// `cube` used in the proof.
    fn relative(&mut self, i: usize, cube: &Cube) -> Result<Option<Cube>, String> {
        let f = &mut self.frames[i];
        let act = f.s.new_var();
        let mut cl = vec![!act];
        cl.extend(f.cur(cube).into_iter().map(|l| !l));
        f.s.add_clause(&cl);
        let mut a = vec![act];
        a.extend(f.nxt(cube));
        let sat = solve(&mut f.s, &a, self.budget);
        let out = match sat {
            Ok(true) => Ok(None),
            Ok(false) => {
                let failed = f.s.failed_assumptions().to_vec();
                let core = cube
                    .iter()
                    .zip(&a[1..])
                    .filter(|(_, l)| failed.contains(l))
                    .map(|(x, _)| *x)
                    .collect();
                Ok(Some(core))
            }
            Err(e) => Err(e),
        };
        f.s.add_clause(&[!act]);
        out
    }

    fn generalize(&mut self, i: usize, cube: &Cube, core: Cube) -> Result<Cube, String> {
        let mut g = if self.intersects_init(&core)? {
            cube.clone()
        } else {
            core
        };
        let mut j = 0;
        while j < g.len() {
            let mut t = g.clone();
            t.remove(j);
            if !t.is_empty() && !self.intersects_init(&t)? {
                if let Some(core) = self.relative(i, &t)? {
                    g = if core.is_empty() || self.intersects_init(&core)? {
                        t
                    } else {
                        core
                    };
                    continue;
                }
            }
            j += 1;
        }
        Ok(g)
    }

    fn add_blocked(&mut self, level: usize, cube: Cube) {
        for f in &mut self.frames[1..=level] {
            f.block(&cube);
        }
        self.cubes[level].push(cube);
    }

    fn block(&mut self, start: Obligation) -> Result<Option<usize>, String> {
        let mut stack = vec![start];
        while let Some(ob) = stack.pop() {
            if ob.level == 0 || self.intersects_init(&ob.cube)? {
                return Ok(Some(ob.dist));
            }
            match self.relative(ob.level - 1, &ob.cube)? {
                None => {
                    let (ins, st) = self.frames[ob.level - 1].model();
                    let c = self.c;
                    let target = ob.cube.clone();
                    let pred = self.minimize(&ins, &st, &|sim: &TernarySim| {
                        target
                            .iter()
                            .all(|&(l, v)| sim.lit(c.latches()[l].next) == Tv::from_bool(v))
                    });
                    let level = ob.level - 1;
                    let dist = ob.dist + 1;
                    stack.push(ob);
                    stack.push(Obligation {
                        cube: pred,
                        level,
                        dist,
                    });
                }
                Some(core) => {
                    let g = self.generalize(ob.level - 1, &ob.cube, core)?;
                    let mut level = ob.level;
                    while level < self.top() && self.relative(level, &g)?.is_some() {
                        level += 1;
                    }
                    self.add_blocked(level, g);
                }
            }
        }
        Ok(None)
    }

    /// Moves clauses forward; returns the level where two frames agree.
    fn propagate(&mut self) -> Result<Option<usize>, String> {
        let k = self.top();
        for i in 1..k {
            let cubes = std::mem::take(&mut self.cubes[i]);
            for cube in cubes {
                let a = self.frames[i].nxt(&cube);
                if solve(&mut self.frames[i].s, &a, self.budget)? {
                    self.cubes[i].push(cube);
                } else {
                    self.frames[i + 1].block(&cube);
                    self.cubes[i + 1].push(cube);
                }
            }
            if self.cubes[i].is_empty() {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    fn run(&mut self) -> Result<Ic3Result, String> {
        let max = self.budget.bound(1000);
        let bad = self.frames[0].bad;
        if solve(&mut self.frames[0].s, &[bad], self.budget)? {
            return Ok(Ic3Result::Cex(0));
        }
        self.push_frame();
        loop {
            let k = self.top();
            loop {
                let bad = self.frames[k].bad;
                if !solve(&mut self.frames[k].s, &[bad], self.budget)? {
                    break;
                }
                let (ins, st) = self.frames[k].model();
                let c = self.c;
                let cube = self.minimize(&ins, &st, &|sim: &TernarySim| sim.lit(c.bad()) == Tv::T);
                let ob = Obligation {
                    cube,
                    level: k,
                    dist: 0,
                };
                if let Some(d) = self.block(ob)? {
                    return Ok(Ic3Result::Cex(d));
                }
            }
            if let Some(i) = self.propagate()? {
                let clauses = self.cubes[i + 1..]
                    .iter()
                    .flatten()
                    .map(|cube| cube.iter().map(|&(l, v)| (l, !v)).collect())
                    .collect();
                return Ok(Ic3Result::Proof(Invariant { clauses }, i - 1));
            }
            if k >= max {
                return Err(format!("no fixpoint within {max} frames"));
            }
            self.push_frame();
        }
    }
}

/// Reruns BMC to turn a counterexample depth into a concrete trace.
fn concretize(c: &Circuit, depth: usize, budget: &Budget) -> Verdict {
    match bmc_upto(c, depth, budget) {
        Ok(Some(t)) => Verdict::Unsafe(t),
        Ok(None) => Verdict::Unknown(format!("no counterexample of depth {depth}")),
        Err(e) => Verdict::Unknown(e),
    }
}

/// IC3 with frames as clause sets, one solver per frame, a stack of proof
/// obligations, literal-dropping generalization guarded by a SAT call
/// against the reset predicate, and ternary cube minimization.
///
/// Frame 0 lets the resets read inputs of their own. When the resets
/// share inputs with the rest of the circuit, time 0 is checked directly
/// and IC3 runs on the circuit forwarded by one step.
pub fn ic3(c: &Circuit, budget: &Budget) -> Verdict {
    let coupled = has_coupled_reset(c);
    let fwd;
    let target = if coupled {
        match bmc_upto(c, 0, budget) {
            Ok(Some(t)) => return Verdict::Unsafe(t),
            Err(e) => return Verdict::Unknown(e),
            Ok(None) => {}
        }
        fwd = forward(c, 1);
        &fwd
    } else {
        c
    };
    let mut engine = Ic3::new(target, budget);
    match engine.run() {
        Ok(Ic3Result::Proof(invariant, depth)) => Verdict::Safe(Some(Proof {
            invariant,
            after_first_step: coupled,
            depth,
        })),
        Ok(Ic3Result::Cex(d)) => concretize(c, d + coupled as usize, budget),
        Err(e) => Verdict::Unknown(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EngineKind {
    #[default]
    Ic3,
    KInduction,
    Bmc,
    Portfolio,
}

/// Runs k-induction and IC3 in parallel. The first decided verdict wins,
/// except that a proof without certificate waits for IC3.
pub fn portfolio(c: &Circuit, budget: &Budget) -> Verdict {
    let cancel = Arc::new(AtomicBool::new(false));
    let shared = Budget {
        cancel: Some(cancel.clone()),
        ..budget.clone()
    };
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::scope(|scope| {
        for kind in [EngineKind::Ic3, EngineKind::KInduction] {
            let tx = tx.clone();
            let b = shared.clone();
            scope.spawn(move || {
                let _ = tx.send((kind, run(c, kind, &b)));
            });
        }
        drop(tx);
        let mut fallback = None;
        for (kind, v) in rx.iter() {
            match &v {
                Verdict::Unsafe(_) | Verdict::Safe(Some(_)) => {
                    cancel.store(true, Ordering::Relaxed);
                    return v;
                }
                Verdict::Safe(None) => fallback = Some(v),
                Verdict::Unknown(_) if kind == EngineKind::Ic3 => {
                    if fallback.is_some() {
                        break;
                    }
                    fallback.get_or_insert(v);
                }
                Verdict::Unknown(_) => {
                    fallback.get_or_insert(v);
                }
            }
        }
        fallback.unwrap_or_else(|| Verdict::Unknown("no engine finished".into()))
    })
}

pub fn run(c: &Circuit, kind: EngineKind, budget: &Budget) -> Verdict {
    match kind {
        EngineKind::Ic3 => ic3(c, budget),
        EngineKind::KInduction => kinduction(c, budget),
        EngineKind::Bmc => bmc(c, budget),
        EngineKind::Portfolio => portfolio(c, budget),
    }
}

/// The checked circuit with its property strengthened by the proof.
pub fn terminal_witness(c: &Circuit, proof: &Proof) -> Circuit {
    crate::witness::terminal_witness(c, &proof.invariant, proof.after_first_step)
}
