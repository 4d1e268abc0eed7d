//! And-inverter graph circuits with function-valued latch resets.
//!
//! A [`Circuit`] is immutable once built. Variables are numbered as in AIGER:
//! variable 0 is the constant, every other variable is defined exactly once
//! as an input, a latch, or an AND gate. AND gates are stored in topological
//! order, so a single forward pass evaluates the whole netlist.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::Not;

use thiserror::Error;

/// An AIGER literal: `2 * var + negated`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Lit(u32);

impl Lit {
    pub const FALSE: Lit = Lit(0);
    pub const TRUE: Lit = Lit(1);

    pub fn new(var: u32, negated: bool) -> Lit {
        Lit(var * 2 + negated as u32)
    }

    pub fn from_code(code: u32) -> Lit {
        Lit(code)
    }

    pub fn code(self) -> u32 {
        self.0
    }

    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_negated(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn is_const(self) -> bool {
        self.0 < 2
    }

    /// The positive literal of the same variable.
    pub fn positive(self) -> Lit {
        Lit(self.0 & !1)
    }

    /// Negates `self` iff `flip` holds.
    pub fn xor(self, flip: bool) -> Lit {
        Lit(self.0 ^ flip as u32)
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Latch {
    pub var: u32,
    pub next: Lit,
    pub reset: Lit,
}

impl Latch {
    pub fn lit(&self) -> Lit {
        Lit::new(self.var, false)
    }

    /// A latch whose reset is its own literal has no initial value.
    pub fn is_uninitialized(&self) -> bool {
        self.reset == self.lit()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct And {
    pub lhs: u32,
    pub rhs0: Lit,
    pub rhs1: Lit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Const,
    Input(usize),
    Latch(usize),
    And(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("variable {var} is out of range (max variable {max_var})")]
    OutOfRange { var: u32, max_var: u32 },
    #[error("variable {var} is defined more than once")]
    DuplicateDefinition { var: u32 },
    #[error("variable {var} is used but never defined")]
    Undefined { var: u32 },
    #[error("AND gate {var} uses a gate that is defined later")]
    NonTopological { var: u32 },
    #[error("reset functions form a cycle through latches {latches:?}")]
    ResetCycle { latches: Vec<usize> },
    #[error("no value given for variable {var}")]
    MissingValue { var: u32 },
    #[error("substitution creates a combinational cycle through variable {var}")]
    CombinationalCycle { var: u32 },
    #[error("{0}")]
    Contract(String),
}

/// Concrete values for inputs and latches, keyed by variable.
pub type Assignment = BTreeMap<u32, bool>;

/// A sequential and-inverter graph `(I, L, R, F, P)` with `bad = ¬P`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    max_var: u32,
    inputs: Vec<u32>,
    latches: Vec<Latch>,
    ands: Vec<And>,
    bad: Lit,
    prop_bad: Option<Lit>,
    input_names: Vec<Option<String>>,
    latch_names: Vec<Option<String>>,
    kinds: Vec<Option<VarKind>>,
}

/// Raw pieces of a circuit, validated by [`Circuit::from_parts`].
#[derive(Clone, Debug, Default)]
pub struct CircuitParts {
    pub max_var: u32,
    pub inputs: Vec<u32>,
    pub latches: Vec<Latch>,
    pub ands: Vec<And>,
    pub bad: Lit,
    /// Optional second output. Witness files use it for a property that is
    /// weaker than the invariant in the first output.
    pub prop_bad: Option<Lit>,
    pub input_names: Vec<Option<String>>,
    pub latch_names: Vec<Option<String>>,
}

impl Circuit {
    pub fn from_parts(parts: CircuitParts) -> Result<Circuit, NetlistError> {
        let CircuitParts {
            max_var,
            inputs,
            latches,
            ands,
            bad,
            prop_bad,
            mut input_names,
            mut latch_names,
        } = parts;
        let mut kinds: Vec<Option<VarKind>> = vec![None; max_var as usize + 1];
        kinds[0] = Some(VarKind::Const);
        let mut define = |var: u32, kind: VarKind| -> Result<(), NetlistError> {
            if var == 0 || var > max_var {
                return Err(NetlistError::OutOfRange { var, max_var });
            }
            if kinds[var as usize].is_some() {
                return Err(NetlistError::DuplicateDefinition { var });
            }
            kinds[var as usize] = Some(kind);
            Ok(())
        };
        for (i, &v) in inputs.iter().enumerate() {
            define(v, VarKind::Input(i))?;
        }
        for (i, l) in latches.iter().enumerate() {
            define(l.var, VarKind::Latch(i))?;
        }
        for (i, a) in ands.iter().enumerate() {
            define(a.lhs, VarKind::And(i))?;
        }
        let check_use = |lit: Lit| -> Result<(), NetlistError> {
            let var = lit.var();
            if var > max_var {
                return Err(NetlistError::OutOfRange { var, max_var });
            }
            if kinds[var as usize].is_none() {
                return Err(NetlistError::Undefined { var });
            }
            Ok(())
        };
        for l in &latches {
            check_use(l.next)?;
            check_use(l.reset)?;
        }
        check_use(bad)?;
        if let Some(p) = prop_bad {
            check_use(p)?;
        }
        for (i, a) in ands.iter().enumerate() {
            for rhs in [a.rhs0, a.rhs1] {
                check_use(rhs)?;
                if let Some(VarKind::And(j)) = kinds[rhs.var() as usize] {
                    if j >= i {
                        return Err(NetlistError::NonTopological { var: a.lhs });
                    }
                }
            }
        }
        input_names.resize(inputs.len(), None);
        latch_names.resize(latches.len(), None);
        Ok(Circuit {
            max_var,
            inputs,
            latches,
            ands,
            bad,
            prop_bad,
            input_names,
            latch_names,
            kinds,
        })
    }

    pub fn parts(&self) -> CircuitParts {
        CircuitParts {
            max_var: self.max_var,
            inputs: self.inputs.clone(),
            latches: self.latches.clone(),
            ands: self.ands.clone(),
            bad: self.bad,
            prop_bad: self.prop_bad,
            input_names: self.input_names.clone(),
            latch_names: self.latch_names.clone(),
        }
    }

    pub fn max_var(&self) -> u32 {
        self.max_var
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_latches(&self) -> usize {
        self.latches.len()
    }

    pub fn num_ands(&self) -> usize {
        self.ands.len()
    }

    pub fn inputs(&self) -> &[u32] {
        &self.inputs
    }

    pub fn input_lit(&self, i: usize) -> Lit {
        Lit::new(self.inputs[i], false)
    }

    pub fn latches(&self) -> &[Latch] {
        &self.latches
    }

    pub fn ands(&self) -> &[And] {
        &self.ands
    }

    pub fn bad(&self) -> Lit {
        self.bad
    }

    pub fn prop_bad(&self) -> Option<Lit> {
        self.prop_bad
    }

    pub fn input_name(&self, i: usize) -> Option<&str> {
        self.input_names[i].as_deref()
    }

    pub fn latch_name(&self, i: usize) -> Option<&str> {
        self.latch_names[i].as_deref()
    }

    pub fn kind(&self, var: u32) -> Option<VarKind> {
        self.kinds.get(var as usize).copied().flatten()
    }

    /// Index of the latch holding `var`, if any.
    pub fn latch_index(&self, var: u32) -> Option<usize> {
        match self.kind(var) {
            Some(VarKind::Latch(i)) => Some(i),
            _ => None,
        }
    }

    /// The same circuit with a different bad-state literal.
    pub fn with_bad(&self, bad: Lit) -> Result<Circuit, NetlistError> {
        let mut parts = self.parts();
        parts.bad = bad;
        Circuit::from_parts(parts)
    }

    /// Structural support of `roots`: the inputs and latches they read,
    /// looking through AND gates but not through latches.
    pub fn support(&self, roots: &[Lit]) -> (Vec<usize>, Vec<usize>) {
        let mut mark = vec![false; self.max_var as usize + 1];
        for r in roots {
            mark[r.var() as usize] = true;
        }
        for a in self.ands.iter().rev() {
            if mark[a.lhs as usize] {
                mark[a.rhs0.var() as usize] = true;
                mark[a.rhs1.var() as usize] = true;
            }
        }
        let ins = (0..self.inputs.len())
            .filter(|&i| mark[self.inputs[i] as usize])
            .collect();
        let lats = (0..self.latches.len())
            .filter(|&i| mark[self.latches[i].var as usize])
            .collect();
        (ins, lats)
    }

    /// Latch indices each latch's reset function structurally depends on.
    /// A reset that is exactly the latch's own literal (uninitialized) has
    /// no dependencies.
    pub fn reset_dependencies(&self) -> Vec<Vec<usize>> {
        self.latches
            .iter()
            .map(|l| {
                if l.is_uninitialized() {
                    Vec::new()
                } else {
                    self.support(&[l.reset]).1
                }
            })
            .collect()
    }

    /// Orders latches so every reset only reads earlier latches, or returns
    /// the latches on a dependency cycle.
    pub fn check_stratified(&self) -> Result<Vec<usize>, NetlistError> {
        let deps = self.reset_dependencies();
        let n = deps.len();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut order = Vec::with_capacity(n);
        for root in 0..n {
            if state[root] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            state[root] = 1;
            while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
                if *pos < deps[node].len() {
                    let succ = deps[node][*pos];
                    *pos += 1;
                    match state[succ] {
                        0 => {
                            state[succ] = 1;
                            stack.push((succ, 0));
                        }
                        1 => {
                            let start = stack.iter().position(|&(v, _)| v == succ).unwrap();
                            let mut cycle: Vec<usize> = stack[start..].iter().map(|&(v, _)| v).collect();
                            cycle.sort_unstable();
                            return Err(NetlistError::ResetCycle { latches: cycle });
                        }
                        _ => {}
                    }
                } else {
                    state[node] = 2;
                    order.push(node);
                    stack.pop();
                }
            }
        }
        Ok(order)
    }

    pub fn is_combinational(&self) -> bool {
        self.latches.is_empty()
    }

    /// Evaluates every gate for the given input and latch values.
    pub fn eval(&self, inputs: &[bool], latches: &[bool]) -> Result<Evaluation, NetlistError> {
        if inputs.len() < self.inputs.len() {
            return Err(NetlistError::MissingValue {
                var: self.inputs[inputs.len()],
            });
        }
        if latches.len() < self.latches.len() {
            return Err(NetlistError::MissingValue {
                var: self.latches[latches.len()].var,
            });
        }
        let mut values = vec![false; self.max_var as usize + 1];
        for (i, &v) in self.inputs.iter().enumerate() {
            values[v as usize] = inputs[i];
        }
        for (i, l) in self.latches.iter().enumerate() {
            values[l.var as usize] = latches[i];
        }
        for a in &self.ands {
            let x = values[a.rhs0.var() as usize] ^ a.rhs0.is_negated();
            let y = values[a.rhs1.var() as usize] ^ a.rhs1.is_negated();
            values[a.lhs as usize] = x && y;
        }
        Ok(Evaluation { values })
    }

    /// Like [`Circuit::eval`] but keyed by variable.
    pub fn eval_assignment(&self, asg: &Assignment) -> Result<Evaluation, NetlistError> {
        let get = |v: u32| asg.get(&v).copied().ok_or(NetlistError::MissingValue { var: v });
        let inputs = self.inputs.iter().map(|&v| get(v)).collect::<Result<Vec<_>, _>>()?;
        let latches = self.latches.iter().map(|l| get(l.var)).collect::<Result<Vec<_>, _>>()?;
        self.eval(&inputs, &latches)
    }

    /// Inputs and latches in the cone of influence of the bad literal.
    pub fn coi(&self) -> Coi {
        let mut in_coi = vec![false; self.max_var as usize + 1];
        let mut latch_queue: Vec<usize> = Vec::new();
        let mark_roots = |roots: &[Lit], in_coi: &mut Vec<bool>, queue: &mut Vec<usize>| {
            let (ins, lats) = self.support(roots);
            for i in ins {
                in_coi[self.inputs[i] as usize] = true;
            }
            for l in lats {
                let v = self.latches[l].var as usize;
                if !in_coi[v] {
                    in_coi[v] = true;
                    queue.push(l);
                }
            }
        };
        mark_roots(&[self.bad], &mut in_coi, &mut latch_queue);
        while let Some(l) = latch_queue.pop() {
            let latch = self.latches[l];
            mark_roots(&[latch.next, latch.reset], &mut in_coi, &mut latch_queue);
        }
        Coi {
            inputs: (0..self.inputs.len())
                .filter(|&i| in_coi[self.inputs[i] as usize])
                .collect(),
            latches: (0..self.latches.len())
                .filter(|&i| in_coi[self.latches[i].var as usize])
                .collect(),
        }
    }

    /// Copies the combinational logic of `self` into `b`, with inputs and
    /// latches replaced by the given literals of `b`.
    pub fn copy_logic(&self, b: &mut CircuitBuilder, inputs: &[Lit], latches: &[Lit]) -> LitMap {
        let mut map = vec![Lit::FALSE; self.max_var as usize + 1];
        for (i, &v) in self.inputs.iter().enumerate() {
            map[v as usize] = inputs[i];
        }
        for (i, l) in self.latches.iter().enumerate() {
            map[l.var as usize] = latches[i];
        }
        for a in &self.ands {
            let x = map[a.rhs0.var() as usize].xor(a.rhs0.is_negated());
            let y = map[a.rhs1.var() as usize].xor(a.rhs1.is_negated());
            map[a.lhs as usize] = b.and(x, y);
        }
        LitMap(map)
    }

    /// `R(L) = ⋀ l ≃ r_l(I, L)` for an instantiated copy of the circuit.
    pub fn reset_predicate(&self, b: &mut CircuitBuilder, map: &LitMap) -> Lit {
        let mut conj = Vec::new();
        for l in &self.latches {
            if l.is_uninitialized() {
                continue;
            }
            conj.push(b.xnor(map.get(l.lit()), map.get(l.reset)));
        }
        b.and_all(&conj)
    }

    /// Replaces every use of the mapped variables by the image literal.
    /// Definitions of mapped inputs and latches are kept.
    pub fn substitute(&self, subst: &HashMap<u32, Lit>) -> Result<Circuit, NetlistError> {
        let subst: HashMap<u32, Lit> = subst
            .iter()
            .filter(|(&v, &img)| img != Lit::new(v, false))
            .map(|(&v, &img)| (v, img))
            .collect();
        let subst = &subst;
        for (&v, &img) in subst {
            if v == 0 || v > self.max_var || img.var() > self.max_var {
                return Err(NetlistError::OutOfRange {
                    var: v.max(img.var()),
                    max_var: self.max_var,
                });
            }
        }
        let mut b = CircuitBuilder::new();
        let mut done: Vec<Option<Lit>> = vec![None; self.max_var as usize + 1];
        done[0] = Some(Lit::FALSE);
        for (i, &v) in self.inputs.iter().enumerate() {
            let lit = b.input(self.input_names[i].clone());
            if !subst.contains_key(&v) {
                done[v as usize] = Some(lit);
            }
        }
        let mut latch_lits = Vec::with_capacity(self.latches.len());
        for (i, l) in self.latches.iter().enumerate() {
            let lit = b.latch(self.latch_names[i].clone());
            latch_lits.push(lit);
            if !subst.contains_key(&l.var) {
                done[l.var as usize] = Some(lit);
            }
        }
        let mut on_stack = vec![false; self.max_var as usize + 1];
        let mut resolve = |root: Lit, b: &mut CircuitBuilder| -> Result<Lit, NetlistError> {
            let mut stack = vec![root.var()];
            while let Some(&v) = stack.last() {
                if done[v as usize].is_some() {
                    stack.pop();
                    continue;
                }
                // children of v in the substituted graph
                let children: Vec<u32> = if let Some(img) = subst.get(&v) {
                    vec![img.var()]
                } else {
                    match self.kinds[v as usize] {
                        Some(VarKind::And(i)) => vec![self.ands[i].rhs0.var(), self.ands[i].rhs1.var()],
                        _ => unreachable!("inputs and latches are resolved upfront"),
                    }
                };
                let pending: Vec<u32> = children.into_iter().filter(|c| done[*c as usize].is_none()).collect();
                if pending.is_empty() {
                    let lit = if let Some(img) = subst.get(&v) {
                        done[img.var() as usize].unwrap().xor(img.is_negated())
                    } else if let Some(VarKind::And(i)) = self.kinds[v as usize] {
                        let a = self.ands[i];
                        let x = done[a.rhs0.var() as usize].unwrap().xor(a.rhs0.is_negated());
                        let y = done[a.rhs1.var() as usize].unwrap().xor(a.rhs1.is_negated());
                        b.and(x, y)
                    } else {
                        unreachable!()
                    };
                    done[v as usize] = Some(lit);
                    on_stack[v as usize] = false;
                    stack.pop();
                } else {
                    if on_stack[v as usize] {
                        return Err(NetlistError::CombinationalCycle { var: v });
                    }
                    on_stack[v as usize] = true;
                    for c in pending {
                        if on_stack[c as usize] {
                            return Err(NetlistError::CombinationalCycle { var: c });
                        }
                        stack.push(c);
                    }
                }
            }
            Ok(done[root.var() as usize].unwrap().xor(root.is_negated()))
        };
        for (i, l) in self.latches.iter().enumerate() {
            let next = resolve(l.next, &mut b)?;
            let reset = if l.is_uninitialized() && !subst.contains_key(&l.var) {
                latch_lits[i]
            } else {
                resolve(l.reset, &mut b)?
            };
            b.set_next(latch_lits[i], next);
            b.set_reset(latch_lits[i], reset);
        }
        let bad = resolve(self.bad, &mut b)?;
        b.set_bad(bad);
        if let Some(p) = self.prop_bad {
            let p = resolve(p, &mut b)?;
            b.set_prop_bad(p);
        }
        Ok(b.build())
    }

    /// Unrolls the transition relation `k` steps into one combinational
    /// circuit with fresh inputs for the latches of every frame.
    pub fn unroll(&self, k: usize) -> Unrolling {
        let mut b = CircuitBuilder::new();
        let mut frame_inputs = Vec::new();
        let mut frame_latches = Vec::new();
        let mut bads = Vec::new();
        let mut trans = Vec::new();
        let mut reset = Lit::TRUE;
        let mut prev_next: Option<Vec<Lit>> = None;
        for f in 0..=k {
            let ins: Vec<Lit> = (0..self.inputs.len())
                .map(|i| b.input(Some(format!("{}@{f}", self.display_input(i)))))
                .collect();
            let lats: Vec<Lit> = (0..self.latches.len())
                .map(|i| b.input(Some(format!("{}@{f}", self.display_latch(i)))))
                .collect();
            if let Some(prev) = &prev_next {
                for (l, n) in lats.iter().zip(prev) {
                    let eq = b.xnor(*l, *n);
                    trans.push(eq);
                }
            }
            let map = self.copy_logic(&mut b, &ins, &lats);
            if f == 0 {
                reset = self.reset_predicate(&mut b, &map);
            }
            bads.push(map.get(self.bad));
            prev_next = Some(self.latches.iter().map(|l| map.get(l.next)).collect());
            frame_inputs.push(ins);
            frame_latches.push(lats);
        }
        let transition = b.and_all(&trans);
        let mut roots = vec![reset, transition];
        roots.extend(&bads);
        roots.extend(frame_inputs.iter().flatten());
        roots.extend(frame_latches.iter().flatten());
        let (circuit, mapped) = b.build_with_roots(&roots);
        let mut it = mapped.into_iter();
        let reset = it.next().unwrap();
        let transition = it.next().unwrap();
        let bad = it.by_ref().take(k + 1).collect();
        let ni = self.inputs.len();
        let nl = self.latches.len();
        let frame_inputs = (0..=k).map(|_| it.by_ref().take(ni).collect()).collect();
        let frame_latches = (0..=k).map(|_| it.by_ref().take(nl).collect()).collect();
        Unrolling {
            circuit,
            frame_inputs,
            frame_latches,
            bad,
            reset,
            transition,
        }
    }

    pub fn display_input(&self, i: usize) -> String {
        self.input_names[i].clone().unwrap_or_else(|| format!("i{i}"))
    }

    pub fn display_latch(&self, i: usize) -> String {
        self.latch_names[i].clone().unwrap_or_else(|| format!("l{i}"))
    }
}

/// Values of every variable after [`Circuit::eval`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evaluation {
    values: Vec<bool>,
}

impl Evaluation {
    pub fn lit(&self, lit: Lit) -> bool {
        self.values[lit.var() as usize] ^ lit.is_negated()
    }

    pub fn next_state(&self, c: &Circuit) -> Vec<bool> {
        c.latches().iter().map(|l| self.lit(l.next)).collect()
    }

    pub fn reset_values(&self, c: &Circuit) -> Vec<bool> {
        c.latches().iter().map(|l| self.lit(l.reset)).collect()
    }

    pub fn bad(&self, c: &Circuit) -> bool {
        self.lit(c.bad())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Coi {
    pub inputs: Vec<usize>,
    pub latches: Vec<usize>,
}

/// Maps variables of a source circuit to literals of a target builder.
#[derive(Clone, Debug)]
pub struct LitMap(Vec<Lit>);

impl LitMap {
    pub fn get(&self, lit: Lit) -> Lit {
        self.0[lit.var() as usize].xor(lit.is_negated())
    }
}

/// `U_k` as a combinational circuit. Latch copies of every frame are inputs
/// of `circuit`; `transition` asserts `L_{i+1} ≃ F(I_i, L_i)`.
#[derive(Clone, Debug)]
pub struct Unrolling {
    pub circuit: Circuit,
    pub frame_inputs: Vec<Vec<Lit>>,
    pub frame_latches: Vec<Vec<Lit>>,
    pub bad: Vec<Lit>,
    pub reset: Lit,
    pub transition: Lit,
}

#[derive(Clone, Debug)]
enum Node {
    Const,
    Input(Option<String>),
    Latch {
        name: Option<String>,
        next: Lit,
        reset: Lit,
    },
    And(Lit, Lit),
}

/// Incremental construction of a [`Circuit`] with eager constant folding.
#[derive(Clone, Debug)]
pub struct CircuitBuilder {
    nodes: Vec<Node>,
    bad: Lit,
    prop_bad: Option<Lit>,
}

impl Default for CircuitBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl CircuitBuilder {
    pub fn new() -> CircuitBuilder {
        CircuitBuilder {
            nodes: vec![Node::Const],
            bad: Lit::FALSE,
            prop_bad: None,
        }
    }

    /// A builder holding a copy of `c`. Returned literals map `c`'s
    /// variables into the builder.
    pub fn from_circuit(c: &Circuit) -> (CircuitBuilder, LitMap) {
        let mut b = CircuitBuilder::new();
        let ins: Vec<Lit> = (0..c.num_inputs()).map(|i| b.input(c.input_names[i].clone())).collect();
        let lats: Vec<Lit> = (0..c.num_latches())
            .map(|i| b.latch(c.latch_names[i].clone()))
            .collect();
        let map = c.copy_logic(&mut b, &ins, &lats);
        for (i, l) in c.latches().iter().enumerate() {
            b.set_next(lats[i], map.get(l.next));
            b.set_reset(lats[i], map.get(l.reset));
        }
        b.set_bad(map.get(c.bad()));
        if let Some(p) = c.prop_bad() {
            b.set_prop_bad(map.get(p));
        }
        (b, map)
    }

    pub fn input(&mut self, name: Option<String>) -> Lit {
        self.nodes.push(Node::Input(name));
        Lit::new(self.nodes.len() as u32 - 1, false)
    }

    /// A new latch with next = ⊥ and reset = ⊥.
    pub fn latch(&mut self, name: Option<String>) -> Lit {
        self.nodes.push(Node::Latch {
            name,
            next: Lit::FALSE,
            reset: Lit::FALSE,
        });
        Lit::new(self.nodes.len() as u32 - 1, false)
    }

    fn latch_node(&mut self, latch: Lit) -> (&mut Lit, &mut Lit) {
        match &mut self.nodes[latch.var() as usize] {
            Node::Latch { next, reset, .. } => (next, reset),
            _ => panic!("literal {latch} is not a latch"),
        }
    }

    pub fn set_next(&mut self, latch: Lit, next: Lit) {
        *self.latch_node(latch).0 = next;
    }

    pub fn set_reset(&mut self, latch: Lit, reset: Lit) {
        *self.latch_node(latch).1 = reset;
    }

    pub fn set_bad(&mut self, bad: Lit) {
        self.bad = bad;
    }

    pub fn set_prop_bad(&mut self, bad: Lit) {
        self.prop_bad = Some(bad);
    }

    pub fn bad(&self) -> Lit {
        self.bad
    }

    pub fn and(&mut self, a: Lit, b: Lit) -> Lit {
        if a == Lit::FALSE || b == Lit::FALSE || a == !b {
            return Lit::FALSE;
        }
        if a == Lit::TRUE || a == b {
            return b;
        }
        if b == Lit::TRUE {
            return a;
        }
        self.nodes.push(Node::And(a, b));
        Lit::new(self.nodes.len() as u32 - 1, false)
    }

    pub fn or(&mut self, a: Lit, b: Lit) -> Lit {
        !self.and(!a, !b)
    }

    pub fn implies(&mut self, a: Lit, b: Lit) -> Lit {
        self.or(!a, b)
    }

    pub fn xor(&mut self, a: Lit, b: Lit) -> Lit {
        let x = self.and(a, !b);
        let y = self.and(!a, b);
        self.or(x, y)
    }

    pub fn xnor(&mut self, a: Lit, b: Lit) -> Lit {
        !self.xor(a, b)
    }

    pub fn ite(&mut self, c: Lit, t: Lit, e: Lit) -> Lit {
        if t == e {
            return t;
        }
        let x = self.and(c, t);
        let y = self.and(!c, e);
        self.or(x, y)
    }

    pub fn and_all(&mut self, lits: &[Lit]) -> Lit {
        lits.iter().fold(Lit::TRUE, |acc, &l| self.and(acc, l))
    }

    pub fn or_all(&mut self, lits: &[Lit]) -> Lit {
        lits.iter().fold(Lit::FALSE, |acc, &l| self.or(acc, l))
    }

    /// Finishes the circuit: inputs first, then latches, then the AND gates
    /// reachable from latch functions and outputs. Unused inputs are kept.
    pub fn build(self) -> Circuit {
        self.build_with_roots(&[]).0
    }

    /// Like [`CircuitBuilder::build`], also keeping the logic of `roots` and
    /// returning their literals in the finished circuit.
    pub fn build_with_roots(self, roots: &[Lit]) -> (Circuit, Vec<Lit>) {
        let n = self.nodes.len();
        let mut used = vec![false; n];
        let mark = |l: Lit, used: &mut Vec<bool>| used[l.var() as usize] = true;
        for &r in roots {
            mark(r, &mut used);
        }
        for node in &self.nodes {
            if let Node::Latch { next, reset, .. } = node {
                mark(*next, &mut used);
                mark(*reset, &mut used);
            }
        }
        mark(self.bad, &mut used);
        if let Some(p) = self.prop_bad {
            mark(p, &mut used);
        }
        for v in (0..n).rev() {
            if used[v] {
                if let Node::And(a, b) = self.nodes[v] {
                    used[a.var() as usize] = true;
                    used[b.var() as usize] = true;
                }
            }
        }
        let mut remap = vec![0u32; n];
        let mut next_var = 1u32;
        let mut inputs = Vec::new();
        let mut input_names = Vec::new();
        let mut latch_vars = Vec::new();
        let mut latch_names = Vec::new();
        for (v, node) in self.nodes.iter().enumerate() {
            if let Node::Input(name) = node {
                remap[v] = next_var;
                inputs.push(next_var);
                input_names.push(name.clone());
                next_var += 1;
            }
        }
        for (v, node) in self.nodes.iter().enumerate() {
            if let Node::Latch { name, .. } = node {
                remap[v] = next_var;
                latch_vars.push(v);
                latch_names.push(name.clone());
                next_var += 1;
            }
        }
        let map = |l: Lit, remap: &Vec<u32>| Lit::new(remap[l.var() as usize], l.is_negated());
        let mut ands = Vec::new();
        for (v, node) in self.nodes.iter().enumerate() {
            if let Node::And(a, b) = node {
                if used[v] {
                    remap[v] = next_var;
                    ands.push(And {
                        lhs: next_var,
                        rhs0: map(*a, &remap),
                        rhs1: map(*b, &remap),
                    });
                    next_var += 1;
                }
            }
        }
        let latches = latch_vars
            .iter()
            .map(|&v| match &self.nodes[v] {
                Node::Latch { next, reset, .. } => Latch {
                    var: remap[v],
                    next: map(*next, &remap),
                    reset: map(*reset, &remap),
                },
                _ => unreachable!(),
            })
            .collect();
        let c = Circuit::from_parts(CircuitParts {
            max_var: next_var - 1,
            inputs,
            latches,
            ands,
            bad: map(self.bad, &remap),
            prop_bad: self.prop_bad.map(|p| map(p, &remap)),
            input_names,
            latch_names,
        })
        .expect("builder output is well-formed");
        (c, roots.iter().map(|&r| map(r, &remap)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Latches t, c with next(t) = c, next(c) = ¬c, bad = t ∧ c.
    pub(crate) fn copy_clock() -> Circuit {
        let mut b = CircuitBuilder::new();
        let t = b.latch(Some("t".into()));
        let c = b.latch(Some("c".into()));
        b.set_next(t, c);
        b.set_next(c, !c);
        let bad = b.and(t, c);
        b.set_bad(bad);
        b.build()
    }

    fn clock() -> Circuit {
        let mut b = CircuitBuilder::new();
        let c = b.latch(Some("c".into()));
        b.set_next(c, !c);
        b.set_bad(c);
        b.build()
    }

    #[test]
    fn lit_negation_is_an_involution() {
        for code in 0..20 {
            let l = Lit::from_code(code);
            assert_eq!(!!l, l);
        }
        assert_eq!(!Lit::FALSE, Lit::TRUE);
    }

    #[test]
    fn stratified_orders() {
        let mut b2 = CircuitBuilder::new();
        let a2 = b2.latch(None);
        let bb = b2.latch(None);
        b2.set_reset(a2, bb);
        let c = b2.build();
        assert_eq!(c.check_stratified().unwrap(), vec![1, 0]);

        let mut b3 = CircuitBuilder::new();
        let a3 = b3.latch(None);
        let b3l = b3.latch(None);
        b3.set_reset(a3, b3l);
        b3.set_reset(b3l, a3);
        let c3 = b3.build();
        assert_eq!(
            c3.check_stratified(),
            Err(NetlistError::ResetCycle { latches: vec![0, 1] })
        );
    }

    #[test]
    fn constant_reset_is_stratified() {
        let c = clock();
        assert_eq!(c.check_stratified().unwrap(), vec![0]);
    }

    #[test]
    fn self_reset_is_not_a_cycle() {
        let mut b = CircuitBuilder::new();
        let a = b.latch(None);
        b.set_reset(a, a);
        let c = b.build();
        assert!(c.check_stratified().is_ok());
        assert!(c.latches()[0].is_uninitialized());
    }

    #[test]
    fn eval_clock_and_copy_clock() {
        let c = clock();
        let e = c.eval(&[], &[false]).unwrap();
        assert_eq!(e.next_state(&c), vec![true]);

        let fig = copy_clock();
        let e = fig.eval(&[], &[false, true]).unwrap();
        assert_eq!(e.next_state(&fig), vec![true, false]);
        assert!(!e.bad(&fig));
        let e2 = fig.eval(&[], &[false, true]).unwrap();
        assert_eq!(e, e2);
    }

    #[test]
    fn eval_reports_missing_values() {
        let fig = copy_clock();
        assert!(matches!(fig.eval(&[], &[true]), Err(NetlistError::MissingValue { .. })));
        let mut asg = Assignment::new();
        asg.insert(fig.latches()[0].var, true);
        assert!(fig.eval_assignment(&asg).is_err());
        asg.insert(fig.latches()[1].var, true);
        assert!(fig.eval_assignment(&asg).unwrap().bad(&fig));
    }

    #[test]
    fn substitute_constant_propagates() {
        let fig = copy_clock();
        let mut m = HashMap::new();
        m.insert(fig.latches()[1].var, Lit::TRUE);
        let s = fig.substitute(&m).unwrap();
        assert_eq!(s.bad(), s.latches()[0].lit());
        assert_eq!(s.num_ands(), 0);
    }

    #[test]
    fn substitute_identity_and_involution() {
        let fig = copy_clock();
        assert_eq!(fig.substitute(&HashMap::new()).unwrap(), fig);

        let mut b = CircuitBuilder::new();
        let x = b.latch(Some("b".into()));
        let y = b.latch(Some("c".into()));
        b.set_next(x, y);
        b.set_next(y, !x);
        let bad = b.and(x, y);
        b.set_bad(bad);
        let c = b.build();
        let (bv, cv) = (c.latches()[0].var, c.latches()[1].var);
        let mut m1 = HashMap::new();
        m1.insert(cv, !Lit::new(bv, false));
        let once = c.substitute(&m1).unwrap();
        // x ∧ ¬x folds away
        assert_eq!(once.bad(), Lit::FALSE);
        let mut m2 = HashMap::new();
        m2.insert(cv, !!Lit::new(cv, false));
        assert_eq!(c.substitute(&m2).unwrap(), c);
    }

    #[test]
    fn substitute_detects_cycles() {
        let mut b = CircuitBuilder::new();
        let i = b.input(None);
        let l = b.latch(None);
        let g = b.and(i, l);
        b.set_bad(g);
        let c = b.build();
        let mut m = HashMap::new();
        m.insert(c.inputs()[0], Lit::new(c.ands()[0].lhs, false));
        assert!(matches!(c.substitute(&m), Err(NetlistError::CombinationalCycle { .. })));
    }

    #[test]
    fn coi_examples() {
        let mut b = CircuitBuilder::new();
        let a = b.latch(None);
        let _unrelated = b.latch(None);
        b.set_next(a, a);
        b.set_bad(a);
        let c = b.build();
        assert_eq!(c.coi().latches, vec![0]);

        let mut b = CircuitBuilder::new();
        let i = b.input(None);
        let a = b.latch(None);
        let n = b.and(i, a);
        b.set_next(a, n);
        b.set_bad(a);
        let c = b.build();
        let coi = c.coi();
        assert_eq!((coi.inputs, coi.latches), (vec![0], vec![0]));

        assert_eq!(copy_clock().with_bad(Lit::FALSE).unwrap().coi(), Coi::default());
    }

    #[test]
    fn unroll_counts_and_frames() {
        let c = clock();
        let u0 = c.unroll(0);
        assert_eq!(u0.transition, Lit::TRUE);
        let u2 = c.unroll(2);
        assert_eq!(u2.frame_latches.iter().map(|f| f.len()).sum::<usize>(), 3);
        // reset frame forces c0 = 0, c1 = 1, c2 = 0
        let circ = &u2.circuit;
        for bits in 0..8u32 {
            let vals: Vec<bool> = (0..3).map(|k| bits >> k & 1 == 1).collect();
            let e = circ.eval(&vals, &[]).unwrap();
            let ok = e.lit(u2.reset) && e.lit(u2.transition);
            assert_eq!(ok, vals == vec![false, true, false]);
        }
    }

    #[test]
    fn builder_folds_constants() {
        let mut b = CircuitBuilder::new();
        let x = b.input(None);
        assert_eq!(b.and(x, Lit::FALSE), Lit::FALSE);
        assert_eq!(b.and(x, Lit::TRUE), x);
        assert_eq!(b.and(x, !x), Lit::FALSE);
        assert_eq!(b.and(x, x), x);
    }
}
