//! Explicit-state reachability and random circuit generation, used as
//! ground truth by the fuzzer and the tests.

use std::collections::HashSet;

use rand::Rng;

use crate::netlist::{Circuit, CircuitBuilder, Lit};
use crate::satkit::{AigEncoder, SatLit, SatResult, Solver};

/// Largest number of latches explored explicitly.
pub const MAX_STATE_BITS: usize = 16;
/// Inputs are enumerated up to this many bits, above it successors are
/// projected out of a SAT solver.
const ENUM_INPUT_BITS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reach {
    Safe {
        states: usize,
    },
    /// Shortest counterexample length in steps.
    Unsafe {
        depth: usize,
    },
}

impl Reach {
    pub fn is_safe(self) -> bool {
        matches!(self, Reach::Safe { .. })
    }
}

fn bits(x: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| x >> i & 1 == 1).collect()
}

fn pack(v: &[bool]) -> u64 {
    v.iter().enumerate().fold(0, |acc, (i, &b)| acc | (b as u64) << i)
}

/// Successor and bad queries for one circuit.
trait Stepper {
    /// Whether some reset run is bad at time 0, and the states at time 1.
    fn initial(&mut self) -> (bool, Vec<u64>);
    /// Whether `s` is bad under some input, and its successors.
    fn step(&mut self, s: u64) -> (bool, Vec<u64>);
}

struct Enumerate<'c> {
    c: &'c Circuit,
    order: Vec<usize>,
}

impl Enumerate<'_> {
    fn inputs(&self) -> impl Iterator<Item = Vec<bool>> + '_ {
        let ni = self.c.num_inputs();
        (0..1u64 << ni).map(move |x| bits(x, ni))
    }
}

impl Stepper for Enumerate<'_> {
    fn initial(&mut self) -> (bool, Vec<u64>) {
        let c = self.c;
        let nl = c.num_latches();
        let free: Vec<usize> = (0..nl).filter(|&l| c.latches()[l].is_uninitialized()).collect();
        let mut bad = false;
        let mut out = HashSet::new();
        for x in self.inputs() {
            for f in 0..1u64 << free.len() {
                let mut s = vec![false; nl];
                for (k, &l) in free.iter().enumerate() {
                    s[l] = f >> k & 1 == 1;
                }
                for &l in &self.order {
                    let latch = c.latches()[l];
                    if !latch.is_uninitialized() {
                        s[l] = c.eval(&x, &s).unwrap().lit(latch.reset);
                    }
                }
                let ev = c.eval(&x, &s).unwrap();
                bad |= ev.bad(c);
                out.insert(pack(&ev.next_state(c)));
            }
        }
        (bad, out.into_iter().collect())
    }

    fn step(&mut self, s: u64) -> (bool, Vec<u64>) {
        let c = self.c;
        let st = bits(s, c.num_latches());
        let mut bad = false;
        let mut out = HashSet::new();
        for x in self.inputs() {
            let ev = c.eval(&x, &st).unwrap();
            bad |= ev.bad(c);
            out.insert(pack(&ev.next_state(c)));
        }
        (bad, out.into_iter().collect())
    }
}

struct Project {
    s: Solver,
    latches: Vec<SatLit>,
    next: Vec<SatLit>,
    bad: SatLit,
    /// Activates the reset constraints.
    init: SatLit,
}

impl Project {
    fn new(c: &Circuit) -> Project {
        let mut s = Solver::new();
        let (mut enc, _, latches) = AigEncoder::fresh(c, &mut s);
        let next = c.latches().iter().map(|l| enc.lit(c, &mut s, l.next)).collect();
        let bad = enc.lit(c, &mut s, c.bad());
        let init = s.new_var();
        for (i, l) in c.latches().iter().enumerate() {
            if !l.is_uninitialized() {
                let r = enc.lit(c, &mut s, l.reset);
                s.add_clause(&[!init, !latches[i], r]);
                s.add_clause(&[!init, latches[i], !r]);
            }
        }
        Project {
            s,
            latches,
            next,
            bad,
            init,
        }
    }

    fn query(&mut self, fixed: &[SatLit]) -> (bool, Vec<u64>) {
        let mut a = fixed.to_vec();
        a.push(self.bad);
        let bad = self.s.solve(&a) == SatResult::Sat;
        let act = self.s.new_var();
        let mut a = fixed.to_vec();
        a.push(act);
        let mut out = Vec::new();
        while self.s.solve(&a) == SatResult::Sat {
            let v: Vec<bool> = self.next.iter().map(|&l| self.s.model_value(l)).collect();
            let mut block = vec![!act];
            block.extend(self.next.iter().zip(&v).map(|(&l, &b)| l.xor(b)));
            self.s.add_clause(&block);
            out.push(pack(&v));
        }
        self.s.add_clause(&[!act]);
        (bad, out)
    }
}

impl Stepper for Project {
    fn initial(&mut self) -> (bool, Vec<u64>) {
        let init = self.init;
        self.query(&[init])
    }

    fn step(&mut self, s: u64) -> (bool, Vec<u64>) {
        let mut a: Vec<SatLit> = self
            .latches
            .iter()
            .enumerate()
            .map(|(i, &l)| l.xor(s >> i & 1 == 0))
            .collect();
        a.push(!self.init);
        self.query(&a)
    }
}

/// Breadth-first search over concrete states. The input at time 0 is the
/// one the resets read. Returns `None` for circuits that are not
/// stratified, have more than [`MAX_STATE_BITS`] latches, or exceed
/// `max_states`.
pub fn reachability(c: &Circuit, max_states: usize) -> Option<Reach> {
    if c.num_latches() > MAX_STATE_BITS {
        return None;
    }
    let order = c.check_stratified().ok()?;
    let mut stepper: Box<dyn Stepper> = if c.num_inputs() <= ENUM_INPUT_BITS {
        Box::new(Enumerate { c, order })
    } else {
        Box::new(Project::new(c))
    };
    let (bad, first) = stepper.initial();
    if bad {
        return Some(Reach::Unsafe { depth: 0 });
    }
    let mut seen: HashSet<u64> = first.iter().copied().collect();
    let mut layer: Vec<u64> = seen.iter().copied().collect();
    layer.sort_unstable();
    let mut depth = 1;
    while !layer.is_empty() {
        let mut next_layer = Vec::new();
        for &s in &layer {
            let (bad, succ) = stepper.step(s);
            if bad {
                return Some(Reach::Unsafe { depth });
            }
            for t in succ {
                if seen.insert(t) {
                    if seen.len() > max_states {
                        return None;
                    }
                    next_layer.push(t);
                }
            }
        }
        next_layer.sort_unstable();
        layer = next_layer;
        depth += 1;
    }
    Some(Reach::Safe { states: seen.len() })
}

/// Size bounds for [`random_circuit`].
#[derive(Clone, Copy, Debug)]
pub struct GenParams {
    pub max_inputs: usize,
    pub max_latches: usize,
    pub max_ands: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_inputs: 4,
            max_latches: 8,
            max_ands: 16,
        }
    }
}

/// A random circuit with stratified resets. Latches are biased towards
/// toggling and copying so periodic behaviour shows up often.
pub fn random_circuit(rng: &mut impl Rng, p: &GenParams) -> Circuit {
    let ni = rng.gen_range(0..=p.max_inputs);
    let nl = rng.gen_range(0..=p.max_latches);
    let na = rng.gen_range(0..=p.max_ands);
    let mut b = CircuitBuilder::new();
    let ins: Vec<Lit> = (0..ni).map(|_| b.input(None)).collect();
    let lats: Vec<Lit> = (0..nl).map(|_| b.latch(None)).collect();
    // pool of literals with the highest latch index they read, if any
    let mut pool: Vec<(Lit, Option<usize>)> = vec![(Lit::FALSE, None)];
    pool.extend(ins.iter().map(|&l| (l, None)));
    pool.extend(lats.iter().enumerate().map(|(k, &l)| (l, Some(k))));
    let pick = |rng: &mut dyn rand::RngCore, pool: &[(Lit, Option<usize>)]| {
        let (l, m) = pool[rng.gen_range(0..pool.len())];
        (l.xor(rng.gen_bool(0.5)), m)
    };
    for _ in 0..na {
        let (x, mx) = pick(rng, &pool);
        let (y, my) = pick(rng, &pool);
        let g = b.and(x, y);
        pool.push((g, mx.max(my)));
    }
    for (k, &l) in lats.iter().enumerate() {
        let next = match rng.gen_range(0..10) {
            0..=1 => !l,
            2..=3 if nl > 1 => lats[rng.gen_range(0..nl)].xor(rng.gen_bool(0.3)),
            _ => pick(rng, &pool).0,
        };
        b.set_next(l, next);
        let reset = match rng.gen_range(0..10) {
            0..=4 => Lit::FALSE.xor(rng.gen_bool(0.3)),
            5 => l,
            _ => {
                let ok: Vec<(Lit, Option<usize>)> =
                    pool.iter().copied().filter(|&(_, m)| m.is_none_or(|m| m < k)).collect();
                pick(rng, &ok).0
            }
        };
        b.set_reset(l, reset);
    }
    let width = rng.gen_range(1..=3);
    let terms: Vec<Lit> = (0..width).map(|_| pick(rng, &pool).0).collect();
    let bad = b.and_all(&terms);
    b.set_bad(bad);
    b.build()
}
