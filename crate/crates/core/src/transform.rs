//! Preprocessing stages: forwarding, unfolding, factoring, rewriting and
//! cone-of-influence reduction.
//!
//! Every stage keeps input and latch names unique so later witness
//! construction can match variables by name.

use std::collections::HashSet;

use thiserror::Error;

use crate::netlist::{Circuit, CircuitBuilder, Lit, NetlistError};
use crate::periodic::{all_free, PeriodicSignal, Phase};
use crate::tersim::Lasso;
use crate::witness::{verify_loop_invariant, LoopInvariant};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("signal for latch {latch} phase {phase} refers to a constrained latch")]
    BadSignal { latch: usize, phase: usize },
    #[error("signals have {got} phases, expected {expected}")]
    PhaseCount { got: usize, expected: usize },
    #[error("loop invariant check failed: {0}")]
    LoopInvariant(String),
}

/// Hands out names that do not clash with any name seen so far.
#[derive(Clone, Debug, Default)]
pub struct NameSet {
    used: HashSet<String>,
}

impl NameSet {
    pub fn of(c: &Circuit) -> NameSet {
        let mut s = NameSet::default();
        for i in 0..c.num_inputs() {
            if let Some(n) = c.input_name(i) {
                s.used.insert(n.to_string());
            }
        }
        for i in 0..c.num_latches() {
            if let Some(n) = c.latch_name(i) {
                s.used.insert(n.to_string());
            }
        }
        s
    }

    pub fn fresh(&mut self, base: &str) -> String {
        if self.used.insert(base.to_string()) {
            return base.to_string();
        }
        (1..)
            .map(|k| format!("{base}_{k}"))
            .find(|cand| self.used.insert(cand.clone()))
            .unwrap()
    }
}

/// True if every input and latch has a name and no name repeats.
pub fn has_unique_names(c: &Circuit) -> bool {
    let mut seen = HashSet::new();
    (0..c.num_inputs()).all(|i| c.input_name(i).is_some_and(|n| seen.insert(n)))
        && (0..c.num_latches()).all(|i| c.latch_name(i).is_some_and(|n| seen.insert(n)))
}

/// Names every unnamed input `i<k>` and latch `l<k>`, renaming clashes.
pub fn name_all(c: &Circuit) -> Circuit {
    if has_unique_names(c) {
        return c.clone();
    }
    let mut names = NameSet::default();
    let mut parts = c.parts();
    for (i, slot) in parts.input_names.iter_mut().enumerate() {
        let base = slot.clone().unwrap_or_else(|| format!("i{i}"));
        *slot = Some(names.fresh(&base));
    }
    for (i, slot) in parts.latch_names.iter_mut().enumerate() {
        let base = slot.clone().unwrap_or_else(|| format!("l{i}"));
        *slot = Some(names.fresh(&base));
    }
    Circuit::from_parts(parts).expect("renaming keeps the circuit well-formed")
}

/// Replaces every reset by its `d`-step image. The inputs of step `k` are
/// fresh inputs `fwd_<k>_<name>`; uninitialized latches start from fresh
/// inputs `fwd_init_<name>`. Transitions and the property are unchanged.
pub fn forward(c: &Circuit, d: usize) -> Circuit {
    if d == 0 {
        return c.clone();
    }
    let order = c.check_stratified().expect("forwarding needs stratified resets");
    let mut names = NameSet::of(c);
    let mut b = CircuitBuilder::new();
    let ins: Vec<Lit> = (0..c.num_inputs())
        .map(|i| b.input(c.input_name(i).map(str::to_string)))
        .collect();
    let lats: Vec<Lit> = (0..c.num_latches())
        .map(|i| b.latch(c.latch_name(i).map(str::to_string)))
        .collect();
    let map = c.copy_logic(&mut b, &ins, &lats);
    for (i, l) in c.latches().iter().enumerate() {
        b.set_next(lats[i], map.get(l.next));
    }
    b.set_bad(map.get(c.bad()));

    let step_inputs = |b: &mut CircuitBuilder, names: &mut NameSet, k: usize| -> Vec<Lit> {
        (0..c.num_inputs())
            .map(|i| b.input(Some(names.fresh(&format!("fwd_{k}_{}", c.display_input(i))))))
            .collect()
    };
    // ρ_0 in stratified order over the step-0 inputs
    let in0 = step_inputs(&mut b, &mut names, 0);
    let mut rho = vec![Lit::FALSE; c.num_latches()];
    for &l in &order {
        let latch = c.latches()[l];
        rho[l] = if latch.is_uninitialized() {
            b.input(Some(names.fresh(&format!("fwd_init_{}", c.display_latch(l)))))
        } else {
            let m = c.copy_logic(&mut b, &in0, &rho);
            m.get(latch.reset)
        };
    }
    let mut step_in = in0;
    for k in 0..d {
        if k > 0 {
            step_in = step_inputs(&mut b, &mut names, k);
        }
        let m = c.copy_logic(&mut b, &step_in, &rho);
        rho = c.latches().iter().map(|l| m.get(l.next)).collect();
    }
    for (i, &r) in rho.iter().enumerate() {
        b.set_reset(lats[i], r);
    }
    b.build()
}

/// An `n`-fold unfolding with the index maps witness construction needs.
///
/// Copy `j` holds the state of micro step `j` of each macro step. Inputs
/// `x#j` feed the property of copy `j` and the transition out of it; the
/// transition-only inputs `x#t<j>` drive the composed next-state nets, so
/// one macro step can follow any `n` micro steps.
#[derive(Clone, Debug)]
pub struct Unfolded {
    pub circuit: Circuit,
    pub n: usize,
    /// `inputs[j][i]`: index of copy `j` of input `i`.
    pub inputs: Vec<Vec<usize>>,
    /// `trans_inputs[j][i]` for `j < n-1`.
    pub trans_inputs: Vec<Vec<usize>>,
    /// `latches[j][l]`: index of copy `j` of latch `l`.
    pub latches: Vec<Vec<usize>>,
}

/// Resets: `l^0 = r_l(I^0, L^0)` and `l^j = f_l(I^{j-1}, L^{j-1})`.
/// Transitions: `N^0 = F(I^{n-1}, L^{n-1})`, `N^j = F(T^{j-1}, N^{j-1})`.
/// Property: `bad' = ⋁_j bad(I^j, L^j)`.
pub fn unfold(c: &Circuit, n: usize) -> Unfolded {
    assert!(n >= 1);
    let ni = c.num_inputs();
    let nl = c.num_latches();
    if n == 1 {
        return Unfolded {
            circuit: c.clone(),
            n,
            inputs: vec![(0..ni).collect()],
            trans_inputs: vec![],
            latches: vec![(0..nl).collect()],
        };
    }
    let mut b = CircuitBuilder::new();
    let mut names = NameSet::default();
    let ins: Vec<Vec<Lit>> = (0..n)
        .map(|j| {
            (0..ni)
                .map(|i| b.input(Some(names.fresh(&format!("{}#{j}", c.display_input(i))))))
                .collect()
        })
        .collect();
    let tins: Vec<Vec<Lit>> = (0..n - 1)
        .map(|j| {
            (0..ni)
                .map(|i| b.input(Some(names.fresh(&format!("{}#t{j}", c.display_input(i))))))
                .collect()
        })
        .collect();
    let lats: Vec<Vec<Lit>> = (0..n)
        .map(|j| {
            (0..nl)
                .map(|l| b.latch(Some(names.fresh(&format!("{}#{j}", c.display_latch(l))))))
                .collect()
        })
        .collect();
    let mut bads = Vec::with_capacity(n);
    for j in 0..n {
        let m = c.copy_logic(&mut b, &ins[j], &lats[j]);
        bads.push(m.get(c.bad()));
        if j == 0 {
            for (l, latch) in c.latches().iter().enumerate() {
                b.set_reset(lats[0][l], m.get(latch.reset));
            }
        }
        if j + 1 < n {
            for (l, latch) in c.latches().iter().enumerate() {
                b.set_reset(lats[j + 1][l], m.get(latch.next));
            }
        }
    }
    let m = c.copy_logic(&mut b, &ins[n - 1], &lats[n - 1]);
    let mut net: Vec<Lit> = c.latches().iter().map(|l| m.get(l.next)).collect();
    for l in 0..nl {
        b.set_next(lats[0][l], net[l]);
    }
    for j in 1..n {
        let m = c.copy_logic(&mut b, &tins[j - 1], &net);
        net = c.latches().iter().map(|l| m.get(l.next)).collect();
        for l in 0..nl {
            b.set_next(lats[j][l], net[l]);
        }
    }
    let bad = b.or_all(&bads);
    b.set_bad(bad);
    Unfolded {
        circuit: b.build(),
        n,
        inputs: (0..n).map(|j| (0..ni).map(|i| j * ni + i).collect()).collect(),
        trans_inputs: (0..n - 1)
            .map(|j| (0..ni).map(|i| n * ni + j * ni + i).collect())
            .collect(),
        latches: (0..n).map(|j| (0..nl).map(|l| j * nl + l).collect()).collect(),
    }
}

/// Replaces latch copies by their periodic values: constant copies become
/// constants wherever they are read, and equivalent copies take their
/// representative's reset and next-state functions.
pub fn factor(u: &Unfolded, signals: &[PeriodicSignal]) -> Result<Circuit, TransformError> {
    let c = &u.circuit;
    let nl = u.latches.first().map_or(0, |v| v.len());
    if signals.len() != nl {
        return Err(TransformError::PhaseCount {
            got: signals.len(),
            expected: nl,
        });
    }
    let mut b = CircuitBuilder::new();
    let ins: Vec<Lit> = (0..c.num_inputs())
        .map(|i| b.input(c.input_name(i).map(str::to_string)))
        .collect();
    let lats: Vec<Lit> = (0..c.num_latches())
        .map(|i| b.latch(c.latch_name(i).map(str::to_string)))
        .collect();
    let mut value = lats.clone();
    // (copy index, representative copy index, negated)
    let mut linked = Vec::new();
    for (l, sig) in signals.iter().enumerate() {
        if sig.phases.len() != u.n {
            return Err(TransformError::PhaseCount {
                got: sig.phases.len(),
                expected: u.n,
            });
        }
        for (j, ph) in sig.phases.iter().enumerate() {
            let idx = u.latches[j][l];
            match *ph {
                Phase::Free => {}
                Phase::False => value[idx] = Lit::FALSE,
                Phase::True => value[idx] = Lit::TRUE,
                Phase::Latch { latch, negated } => {
                    if latch >= nl || signals[latch].phases[j] != Phase::Free {
                        return Err(TransformError::BadSignal { latch: l, phase: j });
                    }
                    linked.push((idx, u.latches[j][latch], negated));
                }
            }
        }
    }
    let map = c.copy_logic(&mut b, &ins, &value);
    for (i, l) in c.latches().iter().enumerate() {
        let (reset, next) = if value[i].is_const() {
            (value[i], value[i])
        } else {
            (map.get(l.reset), map.get(l.next))
        };
        b.set_reset(lats[i], reset);
        b.set_next(lats[i], next);
    }
    for &(idx, rep, neg) in &linked {
        let r = c.latches()[rep];
        b.set_reset(lats[idx], map.get(r.reset).xor(neg));
        b.set_next(lats[idx], map.get(r.next).xor(neg));
    }
    b.set_bad(map.get(c.bad()));
    Ok(b.build())
}

/// Constant propagation and removal of dead gates. The bad literal stays
/// combinationally equivalent.
pub fn rewrite(c: &Circuit) -> Circuit {
    let (b, _) = CircuitBuilder::from_circuit(c);
    b.build()
}

/// Keeps only the inputs and latches in the cone of influence of `bad`.
pub fn reduce(c: &Circuit) -> Circuit {
    let coi = c.coi();
    let mut b = CircuitBuilder::new();
    let mut ins = vec![Lit::FALSE; c.num_inputs()];
    for &i in &coi.inputs {
        ins[i] = b.input(c.input_name(i).map(str::to_string));
    }
    let mut lats = vec![Lit::FALSE; c.num_latches()];
    for &l in &coi.latches {
        lats[l] = b.latch(c.latch_name(l).map(str::to_string));
    }
    let map = c.copy_logic(&mut b, &ins, &lats);
    for &l in &coi.latches {
        let latch = c.latches()[l];
        b.set_next(lats[l], map.get(latch.next));
        b.set_reset(lats[l], map.get(latch.reset));
    }
    b.set_bad(map.get(c.bad()));
    b.build()
}

/// All stage outputs of one candidate.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub d: usize,
    pub n: usize,
    pub signals: Vec<PeriodicSignal>,
    pub lasso: Option<Lasso>,
    pub forwarded: Circuit,
    pub unfolded: Unfolded,
    pub loop_invariant: Option<LoopInvariant>,
    pub factored: Circuit,
    pub rewritten: Circuit,
    pub reduced: Circuit,
}

impl Pipeline {
    /// Runs every stage on `c`, whose variables must carry unique names.
    /// Non-trivial signals are only used after their loop invariant passes.
    pub fn run(
        c: &Circuit,
        lasso: Option<&Lasso>,
        d: usize,
        n: usize,
        signals: &[PeriodicSignal],
    ) -> Result<Pipeline, TransformError> {
        let forwarded = forward(c, d);
        let unfolded = unfold(&forwarded, n);
        let loop_invariant = match lasso {
            Some(l) if !all_free(signals) => {
                let phi = LoopInvariant::build(l, d, &unfolded)?;
                verify_loop_invariant(&unfolded, &phi, signals).map_err(TransformError::LoopInvariant)?;
                Some(phi)
            }
            None if !all_free(signals) => return Err(TransformError::LoopInvariant("signals without a lasso".into())),
            _ => None,
        };
        let factored = factor(&unfolded, signals)?;
        let rewritten = rewrite(&factored);
        let reduced = reduce(&rewritten);
        Ok(Pipeline {
            d,
            n,
            signals: signals.to_vec(),
            lasso: lasso.cloned(),
            forwarded,
            unfolded,
            loop_invariant,
            factored,
            rewritten,
            reduced,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::periodic::extract_signals;
    use crate::tersim::find_lassos;

    fn clock() -> Circuit {
        let mut b = CircuitBuilder::new();
        let c = b.latch(Some("c".into()));
        b.set_next(c, !c);
        b.set_bad(c);
        b.build()
    }

    fn copy_clock() -> Circuit {
        let mut b = CircuitBuilder::new();
        let t = b.latch(Some("t".into()));
        let c = b.latch(Some("c".into()));
        b.set_next(t, c);
        b.set_next(c, !c);
        let bad = b.and(t, c);
        b.set_bad(bad);
        b.build()
    }

    #[test]
    fn forward_clock() {
        let c = clock();
        assert_eq!(forward(&c, 0), c);
        let f = forward(&c, 1);
        assert_eq!(f.latches()[0].reset, Lit::TRUE);
        let f2 = forward(&c, 2);
        assert_eq!(f2.latches()[0].reset, Lit::FALSE);
    }

    #[test]
    fn forward_uninitialized_gets_fresh_input() {
        let mut b = CircuitBuilder::new();
        let l = b.latch(Some("x".into()));
        b.set_reset(l, l);
        b.set_next(l, l);
        b.set_bad(l);
        let f = forward(&b.build(), 1);
        assert_eq!(f.num_inputs(), 1);
        assert_eq!(f.input_name(0), Some("fwd_init_x"));
        assert!(f.check_stratified().is_ok());
    }

    #[test]
    fn unfold_clock_is_a_fixpoint() {
        let u = unfold(&clock(), 2);
        let c = &u.circuit;
        assert_eq!(c.num_latches(), 2);
        // reset (0, 1)
        let e = c.eval(&[], &[false, false]).unwrap();
        assert_eq!(e.reset_values(c), vec![false, true]);
        let e = c.eval(&[], &[false, true]).unwrap();
        assert_eq!(e.next_state(c), vec![false, true]);
        assert_eq!(c.latch_name(1), Some("c#1"));
    }

    #[test]
    fn unfold_one_is_identity() {
        let c = copy_clock();
        assert_eq!(unfold(&c, 1).circuit, c);
    }

    #[test]
    fn fig5_pipeline_removes_every_latch() {
        let c = copy_clock();
        let lasso = find_lassos(&c, 100)[0].rotations()[1].clone();
        let signals = extract_signals(2, &lasso, 0, 2);
        let p = Pipeline::run(&c, Some(&lasso), 0, 2, &signals).unwrap();
        assert_eq!(p.factored.bad(), Lit::FALSE);
        assert_eq!(p.reduced.num_latches(), 0);
        assert_eq!(p.reduced.num_inputs(), 0);
    }

    #[test]
    fn factor_all_free_is_identity() {
        let c = copy_clock();
        let u = unfold(&c, 2);
        let sig = vec![PeriodicSignal::free(0, 2); 2];
        assert_eq!(factor(&u, &sig).unwrap(), rewrite(&u.circuit));
    }

    #[test]
    fn factor_antivalent_copies_negated_functions() {
        let mut b = CircuitBuilder::new();
        let x = b.latch(Some("b".into()));
        let y = b.latch(Some("c".into()));
        let i = b.input(Some("i".into()));
        let nx = b.and(x, i);
        b.set_next(x, nx);
        b.set_next(y, !nx);
        b.set_reset(y, Lit::TRUE);
        let bad = b.and(x, y);
        b.set_bad(bad);
        let c = b.build();
        let u = unfold(&c, 1);
        let sig = vec![
            PeriodicSignal::free(0, 1),
            PeriodicSignal {
                duration: 0,
                phases: vec![Phase::Latch {
                    latch: 0,
                    negated: true,
                }],
            },
        ];
        let f = factor(&u, &sig).unwrap();
        let lb = f.latches()[0];
        let lc = f.latches()[1];
        assert_eq!(lc.next, !lb.next);
        assert_eq!(lc.reset, Lit::TRUE);
        assert_eq!(f.num_latches(), 2);
    }

    #[test]
    fn rewrite_is_idempotent_and_reduce_drops_unused() {
        let mut b = CircuitBuilder::new();
        let x = b.input(None);
        let l = b.latch(None);
        let m = b.latch(None);
        b.set_next(l, x);
        b.set_next(m, m);
        b.set_bad(l);
        let c = b.build();
        let r = rewrite(&c);
        assert_eq!(rewrite(&r), r);
        let red = reduce(&r);
        assert_eq!((red.num_inputs(), red.num_latches()), (1, 1));
        assert_eq!(reduce(&c.with_bad(Lit::FALSE).unwrap()).num_latches(), 0);
    }

    #[test]
    fn name_all_makes_names_unique() {
        let mut b = CircuitBuilder::new();
        b.input(Some("l0".into()));
        b.latch(None);
        b.latch(Some("l0".into()));
        let c = name_all(&b.build());
        assert!(has_unique_names(&c));
        assert_eq!(c.input_name(0), Some("l0"));
    }
}
