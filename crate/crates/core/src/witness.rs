//! Witness circuits for each preprocessing stage.
//!
//! A witness is a [`Circuit`] whose bad output is `¬Q` for an inductive
//! invariant `Q`. Variables are matched to the checked circuit by name,
//! and unnamed ones by position.

use std::collections::HashMap;

use thiserror::Error;

use crate::engine::Invariant;
use crate::netlist::{Circuit, CircuitBuilder, Lit};
use crate::periodic::{PeriodicSignal, Phase};
use crate::satkit::{solve_comb, SatResult};
use crate::tersim::Lasso;
use crate::transform::{NameSet, TransformError, Unfolded};

#[derive(Debug, Error)]
pub enum WitnessError {
    #[error("witness shape not supported: {0}")]
    Unsupported(String),
    #[error("witness input or latch {0:?} has no name")]
    Unnamed(String),
}

/// `φ = ⋁_i ⋀_j c_{i·n+j+d}(L^j)` over latch copies of the unfolding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopInvariant {
    /// Each disjunct is a cube over unfolded latch indices.
    pub disjuncts: Vec<Vec<(usize, bool)>>,
}

impl LoopInvariant {
    pub fn build(l: &Lasso, d: usize, u: &Unfolded) -> Result<LoopInvariant, TransformError> {
        let n = u.n;
        let span = l.delta + l.omega + 1;
        if d > l.delta || !(span - d).is_multiple_of(n) {
            return Err(TransformError::LoopInvariant(format!(
                "lasso of {span} cubes does not split into phases of {n} from {d}"
            )));
        }
        let m = (span - d) / n;
        let disjuncts = (0..m)
            .map(|i| {
                let mut conj = Vec::new();
                for j in 0..n {
                    for &(latch, v) in &l.cubes[i * n + j + d] {
                        conj.push((u.latches[j][latch], v));
                    }
                }
                conj.sort_unstable();
                conj
            })
            .collect();
        Ok(LoopInvariant { disjuncts })
    }

    pub fn encode(&self, b: &mut CircuitBuilder, latches: &[Lit]) -> Lit {
        let terms: Vec<Lit> = self
            .disjuncts
            .iter()
            .map(|cube| {
                let lits: Vec<Lit> = cube.iter().map(|&(l, v)| latches[l].xor(!v)).collect();
                b.and_all(&lits)
            })
            .collect();
        b.or_all(&terms)
    }
}

fn unsat(c: &Circuit, root: Lit) -> Result<(), SatResult> {
    match solve_comb(c, root, None).0 {
        SatResult::Unsat => Ok(()),
        r => Err(r),
    }
}

/// Checks that `φ` holds initially, is inductive, and implies every
/// constrained periodic value.
pub fn verify_loop_invariant(u: &Unfolded, phi: &LoopInvariant, signals: &[PeriodicSignal]) -> Result<(), String> {
    let c = &u.circuit;
    let mut b = CircuitBuilder::new();
    let ins: Vec<Lit> = (0..c.num_inputs()).map(|_| b.input(None)).collect();
    let lats: Vec<Lit> = (0..c.num_latches()).map(|_| b.input(None)).collect();
    let map = c.copy_logic(&mut b, &ins, &lats);
    let reset = c.reset_predicate(&mut b, &map);
    let now = phi.encode(&mut b, &lats);
    let next: Vec<Lit> = c.latches().iter().map(|l| map.get(l.next)).collect();
    let after = phi.encode(&mut b, &next);
    let init_bad = b.and(reset, !now);
    let step_bad = b.and(now, !after);
    let mut wrong = Vec::new();
    for (l, sig) in signals.iter().enumerate() {
        for (j, ph) in sig.phases.iter().enumerate() {
            let x = lats[u.latches[j][l]];
            let want = match *ph {
                Phase::Free => continue,
                Phase::False => Lit::FALSE,
                Phase::True => Lit::TRUE,
                Phase::Latch { latch, negated } => lats[u.latches[j][latch]].xor(negated),
            };
            wrong.push(b.xor(x, want));
        }
    }
    let any_wrong = b.or_all(&wrong);
    let value_bad = b.and(now, any_wrong);
    let (circ, roots) = b.build_with_roots(&[init_bad, step_bad, value_bad]);
    for (name, r) in ["initiation", "consecution", "signal values"].iter().zip(roots) {
        unsat(&circ, r).map_err(|res| format!("{name}: {res:?}"))?;
    }
    Ok(())
}

/// `Q = Inv ∧ P`, or `Q = P ∧ (Inv ∨ R)` when `inv` only covers states
/// reached after the first step.
pub fn terminal_witness(c: &Circuit, inv: &Invariant, after_first_step: bool) -> Circuit {
    let (mut b, map) = CircuitBuilder::from_circuit(c);
    let lats: Vec<Lit> = c.latches().iter().map(|l| map.get(l.lit())).collect();
    let inv_lit = inv.encode(&mut b, &lats);
    let p = !map.get(c.bad());
    let q = if after_first_step {
        let r = c.reset_predicate(&mut b, &map);
        let either = b.or(inv_lit, r);
        b.and(p, either)
    } else {
        b.and(inv_lit, p)
    };
    b.set_bad(!q);
    b.build()
}

/// A witness of a reduced or rewritten circuit also certifies the circuit
/// it came from; only the variable matching changes.
pub fn lift_over_reduce_rewrite(w: &Circuit) -> Circuit {
    w.clone()
}

fn name_index(names: impl Iterator<Item = Option<String>>) -> HashMap<String, usize> {
    names.enumerate().filter_map(|(i, n)| n.map(|n| (n, i))).collect()
}

fn input_names(c: &Circuit) -> impl Iterator<Item = Option<String>> + '_ {
    (0..c.num_inputs()).map(|i| c.input_name(i).map(str::to_string))
}

fn latch_names(c: &Circuit) -> impl Iterator<Item = Option<String>> + '_ {
    (0..c.num_latches()).map(|i| c.latch_name(i).map(str::to_string))
}

/// Where each witness input or latch lands in the target circuit.
struct Matching {
    inputs: Vec<Option<usize>>,
    latches: Vec<Option<usize>>,
}

fn match_by_name(target: &Circuit, w: &Circuit) -> Result<Matching, WitnessError> {
    let ti = name_index(input_names(target));
    let tl = name_index(latch_names(target));
    let mut inputs = Vec::new();
    for i in 0..w.num_inputs() {
        let name = w
            .input_name(i)
            .ok_or_else(|| WitnessError::Unnamed(format!("input {i}")))?;
        inputs.push(ti.get(name).copied());
    }
    let mut latches = Vec::new();
    for i in 0..w.num_latches() {
        let name = w
            .latch_name(i)
            .ok_or_else(|| WitnessError::Unnamed(format!("latch {i}")))?;
        latches.push(tl.get(name).copied());
    }
    Ok(Matching { inputs, latches })
}

/// Witness for the unfolded circuit from a witness of the factor circuit:
/// the unfolded latches keep their own functions and `Q = φ ∧ Q'`.
pub fn composite_witness(
    u: &Unfolded,
    w_factor: &Circuit,
    phi: Option<&LoopInvariant>,
) -> Result<Circuit, WitnessError> {
    let c = &u.circuit;
    let m = match_by_name(c, w_factor)?;
    let mut names = NameSet::of(c);
    let mut b = CircuitBuilder::new();
    let ins: Vec<Lit> = (0..c.num_inputs())
        .map(|i| b.input(c.input_name(i).map(str::to_string)))
        .collect();
    let lats: Vec<Lit> = (0..c.num_latches())
        .map(|i| b.latch(c.latch_name(i).map(str::to_string)))
        .collect();
    let w_ins: Vec<Lit> = (0..w_factor.num_inputs())
        .map(|i| match m.inputs[i] {
            Some(t) => ins[t],
            None => b.input(Some(names.fresh(w_factor.input_name(i).unwrap()))),
        })
        .collect();
    let w_lats: Vec<Lit> = (0..w_factor.num_latches())
        .map(|i| match m.latches[i] {
            Some(t) => lats[t],
            None => b.latch(Some(names.fresh(w_factor.latch_name(i).unwrap()))),
        })
        .collect();
    let cmap = c.copy_logic(&mut b, &ins, &lats);
    for (i, l) in c.latches().iter().enumerate() {
        b.set_reset(lats[i], cmap.get(l.reset));
        b.set_next(lats[i], cmap.get(l.next));
    }
    let wmap = w_factor.copy_logic(&mut b, &w_ins, &w_lats);
    for (i, l) in w_factor.latches().iter().enumerate() {
        if m.latches[i].is_none() {
            b.set_reset(w_lats[i], wmap.get(l.reset));
            b.set_next(w_lats[i], wmap.get(l.next));
        }
    }
    let q_inner = !wmap.get(w_factor.bad());
    let q = match phi {
        Some(phi) => {
            let p = phi.encode(&mut b, &lats);
            b.and(p, q_inner)
        }
        None => q_inner,
    };
    b.set_bad(!q);
    Ok(b.build())
}

/// Role of a variable of the unfolded circuit.
#[derive(Clone, Copy, Debug)]
enum Slot {
    Input { copy: usize, index: usize },
    TransInput { copy: usize, index: usize },
    Latch { copy: usize, index: usize },
}

/// Witness for the forwarded circuit `c` from a witness `w` of its
/// `n`-fold unfolding `u`.
///
/// The folded circuit runs `c` unchanged on its common latches and keeps a
/// history of the last `m = 2n-2` states and inputs. Initialization bits
/// `b^i` record that `i` steps have passed; the unary counter `e` tracks
/// the position inside the current macro step. Once the first macro step
/// is complete, `Q` asserts `Q'` on the latest complete window of history.
/// `Q'` may read the latch copies and the per-copy inputs of `u`, but not
/// the transition-only inputs or inputs private to `w`.
pub fn fold_witness(c: &Circuit, u: &Unfolded, w: &Circuit) -> Result<Circuit, WitnessError> {
    let n = u.n;
    if n == 1 {
        return Ok(w.clone());
    }
    let ni = c.num_inputs();
    let nl = c.num_latches();
    let m = 2 * n - 2;
    let uc = &u.circuit;

    let mut slot_of_input = vec![None; uc.num_inputs()];
    for (copy, row) in u.inputs.iter().enumerate() {
        for (index, &k) in row.iter().enumerate() {
            slot_of_input[k] = Some(Slot::Input { copy, index });
        }
    }
    for (copy, row) in u.trans_inputs.iter().enumerate() {
        for (index, &k) in row.iter().enumerate() {
            slot_of_input[k] = Some(Slot::TransInput { copy, index });
        }
    }
    let mut slot_of_latch = vec![None; uc.num_latches()];
    for (copy, row) in u.latches.iter().enumerate() {
        for (index, &k) in row.iter().enumerate() {
            slot_of_latch[k] = Some(Slot::Latch { copy, index });
        }
    }
    let mt = match_by_name(uc, w)?;
    let w_in_slot: Vec<Option<Slot>> = mt.inputs.iter().map(|t| t.and_then(|k| slot_of_input[k])).collect();
    let w_lat_slot: Vec<Option<Slot>> = mt.latches.iter().map(|t| t.and_then(|k| slot_of_latch[k])).collect();

    // Q' must not read transition-only or private inputs
    let (q_ins, _) = w.support(&[w.bad()]);
    for i in q_ins {
        if !matches!(w_in_slot[i], Some(Slot::Input { .. })) {
            return Err(WitnessError::Unsupported(format!(
                "property reads input {}",
                w.input_name(i).unwrap_or("?")
            )));
        }
    }
    // private latches must reset from private latches only
    for (i, l) in w.latches().iter().enumerate() {
        if w_lat_slot[i].is_some() || l.is_uninitialized() {
            continue;
        }
        let (ri, rl) = w.support(&[l.reset]);
        if !ri.is_empty() || rl.iter().any(|&k| w_lat_slot[k].is_some()) {
            return Err(WitnessError::Unsupported(format!(
                "reset of {} reads inputs or unfolded latches",
                w.latch_name(i).unwrap_or("?")
            )));
        }
    }

    let mut names = NameSet::of(c);
    let mut b = CircuitBuilder::new();
    let cur_in: Vec<Lit> = (0..ni).map(|i| b.input(c.input_name(i).map(str::to_string))).collect();
    let own_in: Vec<Option<Lit>> = (0..w.num_inputs())
        .map(|i| {
            w_in_slot[i]
                .is_none()
                .then(|| b.input(Some(names.fresh(&format!("w_{}", w.input_name(i).unwrap())))))
        })
        .collect();
    let cur: Vec<Lit> = (0..nl).map(|l| b.latch(c.latch_name(l).map(str::to_string))).collect();
    // hist[k] / hist_in[k]: state and input k steps ago, k = 0 is current
    let mut hist = vec![cur.clone()];
    let mut hist_in = vec![cur_in.clone()];
    for k in 1..=m {
        hist.push(
            (0..nl)
                .map(|l| b.latch(Some(names.fresh(&format!("h{k}_{}", c.display_latch(l))))))
                .collect(),
        );
    }
    for k in 1..=m {
        hist_in.push(
            (0..ni)
                .map(|i| b.latch(Some(names.fresh(&format!("x{k}_{}", c.display_input(i))))))
                .collect(),
        );
    }
    let bits: Vec<Lit> = (0..=m).map(|k| b.latch(Some(names.fresh(&format!("b{k}"))))).collect();
    let es: Vec<Lit> = (0..n - 1)
        .map(|k| b.latch(Some(names.fresh(&format!("e{k}")))))
        .collect();
    let own_lat: Vec<Option<Lit>> = (0..w.num_latches())
        .map(|i| {
            w_lat_slot[i]
                .is_none()
                .then(|| b.latch(Some(names.fresh(&format!("w_{}", w.latch_name(i).unwrap())))))
        })
        .collect();

    // the original circuit on the current state
    let cmap = c.copy_logic(&mut b, &cur_in, &cur);
    for (l, latch) in c.latches().iter().enumerate() {
        b.set_reset(cur[l], cmap.get(latch.reset));
        b.set_next(cur[l], cmap.get(latch.next));
    }
    let p_now = !cmap.get(c.bad());
    // shift registers
    for k in 1..=m {
        let (older, newer) = hist.split_at(k);
        for (&h, &prev) in newer[0].iter().zip(&older[k - 1]) {
            b.set_next(h, prev);
            b.set_reset(h, h);
        }
        let (older, newer) = hist_in.split_at(k);
        for (&h, &prev) in newer[0].iter().zip(&older[k - 1]) {
            b.set_next(h, prev);
            b.set_reset(h, h);
        }
    }
    b.set_reset(bits[0], Lit::TRUE);
    b.set_next(bits[0], Lit::TRUE);
    for k in 1..=m {
        b.set_next(bits[k], bits[k - 1]);
    }
    let last_e = es[n - 2];
    let e0 = b.and(bits[n - 1], !last_e);
    b.set_next(es[0], e0);
    for k in 1..n - 1 {
        let nx = b.and(es[k - 1], !last_e);
        b.set_next(es[k], nx);
    }

    // instantiate w with unfolded slots read from history at offset `a`
    let window = |b: &mut CircuitBuilder, a: usize| {
        let ins: Vec<Lit> = (0..w.num_inputs())
            .map(|i| match w_in_slot[i] {
                Some(Slot::Input { copy, index }) => hist_in[n - 1 + a - copy][index],
                Some(Slot::TransInput { copy, index }) if a == n - 1 => hist_in[n - 2 - copy][index],
                Some(_) => Lit::FALSE,
                None => own_in[i].unwrap(),
            })
            .collect();
        let lats: Vec<Lit> = (0..w.num_latches())
            .map(|i| match w_lat_slot[i] {
                Some(Slot::Latch { copy, index }) => hist[n - 1 + a - copy][index],
                Some(_) => unreachable!(),
                None => own_lat[i].unwrap(),
            })
            .collect();
        w.copy_logic(b, &ins, &lats)
    };

    // private latches of w step once per macro step
    let wmap_step = window(&mut b, n - 1);
    let own_vals: Vec<Lit> = own_lat.iter().flatten().copied().collect();
    let own_map = {
        let mut b_only = Vec::new();
        for (i, l) in w.latches().iter().enumerate() {
            if let Some(x) = own_lat[i] {
                b_only.push((x, *l));
            }
        }
        b_only
    };
    for &(x, l) in &own_map {
        let stepped = wmap_step.get(l.next);
        let nx = b.ite(last_e, stepped, x);
        b.set_next(x, nx);
    }
    // private resets read private latches only, so any instantiation works
    let mut own_reset_ok = Vec::new();
    for &(x, l) in &own_map {
        if l.is_uninitialized() {
            b.set_reset(x, x);
        } else {
            let r = wmap_step.get(l.reset);
            b.set_reset(x, r);
            own_reset_ok.push(b.xnor(x, r));
        }
    }
    let _ = own_vals;
    let own_reset = b.and_all(&own_reset_ok);

    let mut q = vec![p_now, bits[0]];
    for k in 1..=m {
        let t = b.implies(bits[k], bits[k - 1]);
        q.push(t);
        // state k-1 steps ago follows from state k steps ago
        let mk = c.copy_logic(&mut b, &hist_in[k], &hist[k]);
        let eqs: Vec<Lit> = (0..nl)
            .map(|l| {
                let nx = mk.get(c.latches()[l].next);
                b.xnor(hist[k - 1][l], nx)
            })
            .collect();
        let follows = b.and_all(&eqs);
        let t = b.implies(bits[k], follows);
        q.push(t);
        // the oldest recorded state is a reset state
        let mr = c.copy_logic(&mut b, &hist_in[k - 1], &hist[k - 1]);
        let r = c.reset_predicate(&mut b, &mr);
        let oldest = b.and(!bits[k], bits[k - 1]);
        let t = b.implies(oldest, r);
        q.push(t);
    }
    let warm = !bits[n - 1];
    let t = b.implies(warm, own_reset);
    q.push(t);
    for k in 1..n - 1 {
        let t = b.implies(es[k], es[k - 1]);
        q.push(t);
    }
    for k in 0..n - 1 {
        let t = b.implies(es[k], bits[n + k]);
        q.push(t);
        if k < n - 2 {
            let young = b.and(!bits[m], bits[n + k]);
            let t = b.implies(young, es[k]);
            q.push(t);
        }
    }
    let mut windows = Vec::new();
    for a in 0..n {
        let lo = if a == 0 { Lit::TRUE } else { es[a - 1] };
        let hi = if a == n - 1 { Lit::FALSE } else { es[a] };
        let pattern = b.and(lo, !hi);
        let wm = window(&mut b, a);
        let qa = !wm.get(w.bad());
        windows.push(b.and(pattern, qa));
    }
    let any_window = b.or_all(&windows);
    let t = b.implies(bits[n - 1], any_window);
    q.push(t);
    let q = b.and_all(&q);
    b.set_bad(!q);
    Ok(b.build())
}

/// Gives the first inputs and latches of `w` the names of `original`, so
/// unnamed originals are matched by position. Other names that clash with
/// original names are renamed.
pub fn restore_names(w: &Circuit, original: &Circuit) -> Circuit {
    let mut names = NameSet::of(original);
    let mut parts = w.parts();
    for (i, slot) in parts.input_names.iter_mut().enumerate() {
        if i < original.num_inputs() {
            *slot = original.input_name(i).map(str::to_string);
        } else if let Some(n) = slot.clone() {
            *slot = Some(names.fresh(&n));
        }
    }
    for (i, slot) in parts.latch_names.iter_mut().enumerate() {
        if i < original.num_latches() {
            *slot = original.latch_name(i).map(str::to_string);
        } else if let Some(n) = slot.clone() {
            *slot = Some(names.fresh(&n));
        }
    }
    Circuit::from_parts(parts).expect("renaming keeps the witness well-formed")
}
