//! Three-valued simulation and detection of cube lassos.
//!
//! Simulation starts from the ternary reset state with every input at X.
//! Each step yields a cube: the latches with a known value. When an earlier
//! cube subsumes the current one, monotonicity of ternary logic guarantees
//! the sequence from that point on is over-approximated by repeating the
//! loop, which gives a lasso.

use std::collections::HashSet;

use crate::netlist::{Circuit, CircuitBuilder, Lit};
use crate::satkit::{solve_comb, SatResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tv {
    F,
    T,
    X,
}

impl Tv {
    pub fn from_bool(b: bool) -> Tv {
        if b {
            Tv::T
        } else {
            Tv::F
        }
    }

    pub fn and(self, o: Tv) -> Tv {
        match (self, o) {
            (Tv::F, _) | (_, Tv::F) => Tv::F,
            (Tv::T, Tv::T) => Tv::T,
            _ => Tv::X,
        }
    }

    pub fn negate_if(self, neg: bool) -> Tv {
        match (self, neg) {
            (Tv::T, true) => Tv::F,
            (Tv::F, true) => Tv::T,
            _ => self,
        }
    }

    pub fn to_bool(self) -> Option<bool> {
        match self {
            Tv::T => Some(true),
            Tv::F => Some(false),
            Tv::X => None,
        }
    }
}

/// A conjunction of latch literals `(latch index, value)`, sorted by index.
pub type Cube = Vec<(usize, bool)>;

/// Reusable ternary evaluator for one circuit.
pub struct TernarySim<'c> {
    c: &'c Circuit,
    values: Vec<Tv>,
}

impl<'c> TernarySim<'c> {
    pub fn new(c: &'c Circuit) -> TernarySim<'c> {
        TernarySim {
            c,
            values: vec![Tv::X; c.max_var() as usize + 1],
        }
    }

    pub fn eval(&mut self, inputs: &[Tv], latches: &[Tv]) {
        self.values[0] = Tv::F;
        for (i, &v) in self.c.inputs().iter().enumerate() {
            self.values[v as usize] = inputs[i];
        }
        for (i, l) in self.c.latches().iter().enumerate() {
            self.values[l.var as usize] = latches[i];
        }
        for a in self.c.ands() {
            let x = self.lit(a.rhs0);
            let y = self.lit(a.rhs1);
            self.values[a.lhs as usize] = x.and(y);
        }
    }

    pub fn lit(&self, l: Lit) -> Tv {
        self.values[l.var() as usize].negate_if(l.is_negated())
    }

    pub fn next_state(&self) -> Vec<Tv> {
        self.c.latches().iter().map(|l| self.lit(l.next)).collect()
    }

    /// Ternary reset state: resets evaluated in stratified order with all
    /// inputs at X. Uninitialized latches are X.
    pub fn reset_state(&mut self) -> Vec<Tv> {
        let c = self.c;
        let order = c.check_stratified().expect("ternary reset needs stratified resets");
        let xs = vec![Tv::X; c.num_inputs()];
        let mut state = vec![Tv::X; c.num_latches()];
        for &l in &order {
            let latch = c.latches()[l];
            if latch.is_uninitialized() {
                continue;
            }
            self.eval(&xs, &state);
            state[l] = self.lit(latch.reset);
        }
        state
    }
}

pub fn state_to_cube(state: &[Tv]) -> Cube {
    state
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.to_bool().map(|b| (i, b)))
        .collect()
}

pub fn cube_to_state(cube: &Cube, num_latches: usize) -> Vec<Tv> {
    let mut s = vec![Tv::X; num_latches];
    for &(i, b) in cube {
        s[i] = Tv::from_bool(b);
    }
    s
}

/// `a ⊆ b` as literal sets, so every state in `b` is also in `a`.
pub fn subsumes(a: &Cube, b: &Cube) -> bool {
    if a.len() > b.len() {
        return false;
    }
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j].0 < x.0 {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            return false;
        }
        j += 1;
    }
    true
}

/// Cubes `c_0 .. c_{δ+ω}`; from step δ on the loop `c_δ .. c_{δ+ω}` repeats.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lasso {
    pub cubes: Vec<Cube>,
    pub delta: usize,
    pub omega: usize,
}

impl Lasso {
    pub fn loop_len(&self) -> usize {
        self.omega + 1
    }

    /// Cube covering the states reachable at `step`.
    pub fn cube_at(&self, step: usize) -> &Cube {
        if step < self.cubes.len() {
            &self.cubes[step]
        } else {
            &self.cubes[self.delta + (step - self.delta) % self.loop_len()]
        }
    }

    /// The ω+1 loop-entry variants, starting with `self`.
    pub fn rotations(&self) -> Vec<Lasso> {
        let mut out = vec![self.clone()];
        for r in 1..=self.omega {
            let mut cubes = self.cubes.clone();
            cubes.extend_from_slice(&self.cubes[self.delta..self.delta + r]);
            out.push(Lasso {
                cubes,
                delta: self.delta + r,
                omega: self.omega,
            });
        }
        out
    }
}

/// Simulates from reset for at most `max_steps` cubes, reporting a lasso
/// each time an earlier cube subsumes the newest one. Stops at the first
/// exact repeat.
pub fn find_lassos(c: &Circuit, max_steps: usize) -> Vec<Lasso> {
    let mut sim = TernarySim::new(c);
    let xs = vec![Tv::X; c.num_inputs()];
    let mut state = sim.reset_state();
    let mut trace: Vec<Cube> = Vec::new();
    // cubes indexed by their first literal; empty cubes kept aside
    let mut watch: Vec<Vec<usize>> = vec![Vec::new(); 2 * c.num_latches()];
    let mut empty: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    let mut seen_loops = HashSet::new();
    while trace.len() <= max_steps {
        let cube = state_to_cube(&state);
        let k = trace.len();
        let mut hits: Vec<usize> = empty.clone();
        for &(l, b) in &cube {
            for &j in &watch[2 * l + b as usize] {
                if subsumes(&trace[j], &cube) {
                    hits.push(j);
                }
            }
        }
        hits.sort_unstable();
        hits.dedup();
        let mut exact = false;
        for &j in hits.iter().rev() {
            exact |= trace[j] == cube;
            if seen_loops.insert((j, k)) {
                out.push(Lasso {
                    cubes: trace.clone(),
                    delta: j,
                    omega: k - 1 - j,
                });
            }
        }
        if exact || k == max_steps {
            break;
        }
        match cube.first() {
            None => empty.push(k),
            Some(&(l, b)) => watch[2 * l + b as usize].push(k),
        }
        trace.push(cube);
        sim.eval(&xs, &state);
        state = sim.next_state();
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LassoFailure {
    /// Some reset state lies outside `c_0`.
    Reset,
    /// `c_i` has a successor outside `c_{i+1}`.
    Step(usize),
    /// `c_{δ+ω}` has a successor outside `c_δ`.
    Closure,
}

/// Checks by SAT that the lasso over-approximates every run.
pub fn verify_lasso(c: &Circuit, l: &Lasso) -> Result<(), LassoFailure> {
    let mut b = CircuitBuilder::new();
    let ins: Vec<Lit> = (0..c.num_inputs()).map(|_| b.input(None)).collect();
    let lats: Vec<Lit> = (0..c.num_latches()).map(|_| b.input(None)).collect();
    let map = c.copy_logic(&mut b, &ins, &lats);
    let next: Vec<Lit> = c.latches().iter().map(|x| map.get(x.next)).collect();
    let reset = c.reset_predicate(&mut b, &map);
    let cube = |b: &mut CircuitBuilder, cube: &Cube, vals: &[Lit]| {
        let lits: Vec<Lit> = cube.iter().map(|&(i, v)| vals[i].xor(!v)).collect();
        b.and_all(&lits)
    };
    let mut roots = Vec::new();
    let c0 = cube(&mut b, &l.cubes[0], &lats);
    roots.push((LassoFailure::Reset, b.and(reset, !c0)));
    let last = l.delta + l.omega;
    for i in 0..=last {
        let (fail, succ) = if i < last {
            (LassoFailure::Step(i), &l.cubes[i + 1])
        } else {
            (LassoFailure::Closure, &l.cubes[l.delta])
        };
        let now = cube(&mut b, &l.cubes[i], &lats);
        let then = cube(&mut b, succ, &next);
        roots.push((fail, b.and(now, !then)));
    }
    let lits: Vec<Lit> = roots.iter().map(|r| r.1).collect();
    let (circ, mapped) = b.build_with_roots(&lits);
    for ((fail, _), r) in roots.iter().zip(mapped) {
        if solve_comb(&circ, r, None).0 != SatResult::Unsat {
            return Err(*fail);
        }
    }
    Ok(())
}
