//! Randomized properties across modules, checked against concrete
//! simulation and explicit-state search.

use std::collections::{BTreeSet, HashMap};

use aigcert::certcheck;
use aigcert::cli::{fuzz, model_check, McConfig};
use aigcert::engine::{self, Budget, Verdict};
use aigcert::netlist::{And, Circuit, CircuitParts, Lit};
use aigcert::oracle::{self, GenParams};
use aigcert::periodic::{self, Phase, SearchConfig};
use aigcert::tersim::{self, TernarySim, Tv};
use aigcert::transform::{forward, name_all, reduce, unfold};
use aigcert::{aiger_io, CircuitBuilder};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gen(seed: u64, p: GenParams) -> Circuit {
    oracle::random_circuit(&mut ChaCha8Rng::seed_from_u64(seed), &p)
}

fn small() -> GenParams {
    GenParams {
        max_inputs: 2,
        max_latches: 4,
        max_ands: 10,
    }
}

fn bits(rng: &mut impl Rng, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.gen()).collect()
}

fn from_index(x: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| x >> i & 1 == 1).collect()
}

/// Reset state for the time-0 input `x0` and values of uninitialized latches.
fn reset_state(c: &Circuit, x0: &[bool], free: &[bool]) -> Vec<bool> {
    let order = c.check_stratified().unwrap();
    let mut s = free.to_vec();
    for &l in &order {
        let latch = c.latches()[l];
        if !latch.is_uninitialized() {
            s[l] = c.eval(x0, &s).unwrap().lit(latch.reset);
        }
    }
    s
}

/// States at times `0..=inputs.len()`; `inputs[0]` also feeds the resets.
fn run(c: &Circuit, inputs: &[Vec<bool>], free: &[bool]) -> Vec<Vec<bool>> {
    let mut states = vec![reset_state(c, &inputs[0], free)];
    for x in inputs {
        let s = c.eval(x, states.last().unwrap()).unwrap().next_state(c);
        states.push(s);
    }
    states
}

/// Latch-level reset dependencies, computed without the library.
fn independent_stratified(c: &Circuit) -> bool {
    let n = c.num_latches();
    let gate: HashMap<u32, &And> = c.ands().iter().map(|a| (a.lhs, a)).collect();
    let latch_of: HashMap<u32, usize> = c.latches().iter().enumerate().map(|(i, l)| (l.var, i)).collect();
    let mut edges = vec![BTreeSet::new(); n];
    for (i, l) in c.latches().iter().enumerate() {
        if l.reset == l.lit() {
            continue;
        }
        let mut stack = vec![l.reset.var()];
        let mut seen = BTreeSet::new();
        while let Some(v) = stack.pop() {
            if !seen.insert(v) {
                continue;
            }
            if let Some(a) = gate.get(&v) {
                stack.push(a.rhs0.var());
                stack.push(a.rhs1.var());
            } else if let Some(&j) = latch_of.get(&v) {
                edges[i].insert(j);
            }
        }
    }
    // repeatedly remove latches whose dependencies are all removed
    let mut alive = vec![true; n];
    loop {
        let removable: Vec<usize> = (0..n)
            .filter(|&i| alive[i] && edges[i].iter().all(|&j| !alive[j]))
            .collect();
        if removable.is_empty() {
            break;
        }
        for i in removable {
            alive[i] = false;
        }
    }
    alive.iter().all(|a| !a)
}

fn scramble_resets(c: &Circuit, seed: u64) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: CircuitParts = c.parts();
    let vars: Vec<u32> = (1..=p.max_var).filter(|&v| c.kind(v).is_some()).collect();
    for l in &mut p.latches {
        if rng.gen_bool(0.6) && !vars.is_empty() {
            l.reset = Lit::new(vars[rng.gen_range(0..vars.len())], rng.gen());
        }
    }
    Circuit::from_parts(p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn eval_is_deterministic(seed in any::<u64>()) {
        let c = gen(seed, GenParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = bits(&mut rng, c.num_inputs());
        let s = bits(&mut rng, c.num_latches());
        let a = c.eval(&x, &s).unwrap();
        let b = c.eval(&x, &s).unwrap();
        prop_assert_eq!(a.next_state(&c), b.next_state(&c));
        prop_assert_eq!(a.bad(&c), b.bad(&c));
    }

    #[test]
    fn stratification_matches_independent_check(seed in any::<u64>()) {
        let c = scramble_resets(&gen(seed, GenParams::default()), seed);
        prop_assert_eq!(c.check_stratified().is_ok(), independent_stratified(&c));
        prop_assert_eq!(certcheck::reset_cycle(&c).is_none(), independent_stratified(&c));
    }

    #[test]
    fn structural_round_trip(seed in any::<u64>()) {
        let c = scramble_resets(&gen(seed, GenParams::default()), seed);
        let text = aiger_io::write(&c);
        let back = aiger_io::parse_unchecked(&text).unwrap();
        prop_assert_eq!(aiger_io::write(&back), text);
        prop_assert_eq!(back, c);
    }

    #[test]
    fn unroll_agrees_with_simulation(seed in any::<u64>(), k in 0usize..4) {
        let c = gen(seed, small());
        let u = c.unroll(k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let inputs: Vec<Vec<bool>> = (0..=k).map(|_| bits(&mut rng, c.num_inputs())).collect();
        let free = bits(&mut rng, c.num_latches());
        let states = run(&c, &inputs, &free);
        // inputs of the unrolled circuit, by variable
        let mut asg = vec![false; u.circuit.max_var() as usize + 1];
        for f in 0..=k {
            for (i, l) in u.frame_inputs[f].iter().enumerate() {
                asg[l.var() as usize] = inputs[f][i] ^ l.is_negated();
            }
            for (i, l) in u.frame_latches[f].iter().enumerate() {
                asg[l.var() as usize] = states[f][i] ^ l.is_negated();
            }
        }
        let ins: Vec<bool> = u.circuit.inputs().iter().map(|&v| asg[v as usize]).collect();
        let ev = u.circuit.eval(&ins, &[]).unwrap();
        prop_assert!(ev.lit(u.transition));
        prop_assert!(ev.lit(u.reset));
        for f in 0..=k {
            let want = c.eval(&inputs[f], &states[f]).unwrap().bad(&c);
            prop_assert_eq!(ev.lit(u.bad[f]), want);
        }
    }

    #[test]
    fn reduce_keeps_bad_and_is_idempotent(seed in any::<u64>()) {
        let c = name_all(&gen(seed, GenParams::default()));
        let r = reduce(&c);
        let rr = reduce(&r);
        prop_assert_eq!((rr.num_inputs(), rr.num_latches()), (r.num_inputs(), r.num_latches()));
        let coi = r.coi();
        prop_assert_eq!(coi.inputs.len(), r.num_inputs());
        prop_assert_eq!(coi.latches.len(), r.num_latches());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        for _ in 0..16 {
            let x = bits(&mut rng, c.num_inputs());
            let s = bits(&mut rng, c.num_latches());
            let by_in: HashMap<&str, bool> =
                (0..c.num_inputs()).map(|i| (c.input_name(i).unwrap(), x[i])).collect();
            let by_latch: HashMap<&str, bool> =
                (0..c.num_latches()).map(|i| (c.latch_name(i).unwrap(), s[i])).collect();
            let rx: Vec<bool> = (0..r.num_inputs()).map(|i| by_in[r.input_name(i).unwrap()]).collect();
            let rs: Vec<bool> = (0..r.num_latches()).map(|i| by_latch[r.latch_name(i).unwrap()]).collect();
            prop_assert_eq!(r.eval(&rx, &rs).unwrap().bad(&r), c.eval(&x, &s).unwrap().bad(&c));
        }
    }

    #[test]
    fn ternary_values_hold_on_concrete_runs(seed in any::<u64>()) {
        let c = gen(seed, GenParams::default());
        let mut sim = TernarySim::new(&c);
        let xs = vec![Tv::X; c.num_inputs()];
        let mut tern = vec![sim.reset_state()];
        for _ in 0..6 {
            sim.eval(&xs, tern.last().unwrap());
            tern.push(sim.next_state());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        for _ in 0..32 {
            let inputs: Vec<Vec<bool>> = (0..6).map(|_| bits(&mut rng, c.num_inputs())).collect();
            let free = bits(&mut rng, c.num_latches());
            for (t, s) in run(&c, &inputs, &free).iter().enumerate() {
                for (l, &v) in s.iter().enumerate() {
                    if let Some(b) = tern[t][l].to_bool() {
                        prop_assert_eq!(b, v, "step {} latch {}", t, l);
                    }
                }
            }
        }
    }

    #[test]
    fn lassos_verify_and_cubes_omit_x(seed in any::<u64>()) {
        let c = gen(seed, GenParams::default());
        for l in tersim::find_lassos(&c, 200) {
            prop_assert!(tersim::verify_lasso(&c, &l).is_ok());
            for cube in &l.cubes {
                let st = tersim::cube_to_state(cube, c.num_latches());
                prop_assert_eq!(st.iter().filter(|v| **v != Tv::X).count(), cube.len());
                prop_assert_eq!(&tersim::state_to_cube(&st), cube);
            }
        }
    }

    #[test]
    fn periodic_signals_hold_on_concrete_runs(seed in any::<u64>()) {
        let c = gen(seed, GenParams::default());
        let cands = periodic::collect_candidates(&c, &SearchConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let horizon = 24;
        let runs: Vec<Vec<Vec<bool>>> = (0..16)
            .map(|_| {
                let inputs: Vec<Vec<bool>> = (0..horizon).map(|_| bits(&mut rng, c.num_inputs())).collect();
                run(&c, &inputs, &bits(&mut rng, c.num_latches()))
            })
            .collect();
        for k in &cands {
            let Some(lasso) = &k.lasso else { continue };
            for (l, sig) in k.signals.iter().enumerate() {
                for (i, ph) in sig.phases.iter().enumerate() {
                    // the classes agree with the cube bit strings
                    if let Phase::Latch { latch, negated } = *ph {
                        for idx in periodic::phase_indices(lasso, k.d, k.n, i) {
                            let cube = &lasso.cubes[idx];
                            let get = |x: usize| cube.iter().find(|p| p.0 == x).map(|p| p.1);
                            prop_assert_eq!(get(l).map(|b| b ^ negated), get(latch));
                        }
                    }
                    for states in &runs {
                        for t in (k.d + i..states.len()).step_by(k.n) {
                            let v = states[t][l];
                            match *ph {
                                Phase::False => prop_assert!(!v),
                                Phase::True => prop_assert!(v),
                                Phase::Latch { latch, negated } => prop_assert_eq!(v, states[t][latch] ^ negated),
                                Phase::Free => {}
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn unfold_follows_micro_steps(seed in any::<u64>(), n in 1usize..4) {
        let c = gen(seed, small());
        let u = unfold(&c, n);
        let ni = c.num_inputs();
        let macros = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 6);
        let micro: Vec<Vec<bool>> = (0..n * (macros + 1)).map(|_| bits(&mut rng, ni)).collect();
        let free = bits(&mut rng, c.num_latches());
        let states = run(&c, &micro, &free);
        let macro_in = |m: usize| {
            let mut x = vec![false; u.circuit.num_inputs()];
            for j in 0..n {
                for i in 0..ni {
                    x[u.inputs[j][i]] = micro[m * n + j][i];
                }
            }
            for (j, row) in u.trans_inputs.iter().enumerate() {
                for i in 0..ni {
                    x[row[i]] = micro[(m + 1) * n + j][i];
                }
            }
            x
        };
        let mut ufree = vec![false; u.circuit.num_latches()];
        for (l, &v) in free.iter().enumerate() {
            ufree[u.latches[0][l]] = v;
        }
        let mut s = reset_state(&u.circuit, &macro_in(0), &ufree);
        for m in 0..macros {
            for j in 0..n {
                for l in 0..c.num_latches() {
                    prop_assert_eq!(s[u.latches[j][l]], states[m * n + j][l], "macro {} copy {}", m, j);
                }
            }
            let ev = u.circuit.eval(&macro_in(m), &s).unwrap();
            let want = (0..n).any(|j| c.eval(&micro[m * n + j], &states[m * n + j]).unwrap().bad(&c));
            prop_assert_eq!(ev.bad(&u.circuit), want);
            s = ev.next_state(&u.circuit);
        }
    }

    #[test]
    fn forward_resets_are_the_d_step_states(seed in any::<u64>(), d in 0usize..3) {
        let c = gen(seed, small());
        let f = forward(&c, d);
        let (ni, nl) = (c.num_inputs(), c.num_latches());
        let mut reached = BTreeSet::new();
        let steps = d.max(1);
        for x in 0..1u64 << (ni * steps + nl) {
            let all = from_index(x, ni * steps + nl);
            let inputs: Vec<Vec<bool>> = all[..ni * steps].chunks(ni.max(1)).take(steps).map(|ch| ch[..ni].to_vec()).collect();
            let inputs = if ni == 0 { vec![vec![]; steps] } else { inputs };
            let states = run(&c, &inputs, &all[ni * steps..]);
            reached.insert(states[d].clone());
        }
        let mut resets = BTreeSet::new();
        let (fi, fl) = (f.num_inputs(), f.num_latches());
        prop_assert_eq!(fl, nl);
        for x in 0..1u64 << (fi + fl) {
            let all = from_index(x, fi + fl);
            resets.insert(reset_state(&f, &all[..fi], &all[fi..]));
        }
        prop_assert_eq!(resets, reached);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn engine_answers_check_out(seed in any::<u64>()) {
        let c = gen(seed, GenParams::default());
        let truth = oracle::reachability(&c, 1 << 16).map(|r| r.is_safe());
        let b = Budget::default();
        for v in [engine::ic3(&c, &b), engine::kinduction(&c, &b), engine::bmc(&c, &b)] {
            match v {
                Verdict::Unsafe(t) => {
                    prop_assert!(t.replay(&c).is_ok());
                    prop_assert_eq!(truth, Some(false));
                }
                Verdict::Safe(p) => {
                    prop_assert_eq!(truth, Some(true));
                    if let Some(p) = p {
                        let w = engine::terminal_witness(&c, &p);
                        let rep = certcheck::check(&c, &w);
                        prop_assert!(rep.pass, "{}", rep);
                    }
                }
                Verdict::Unknown(_) => {}
            }
        }
    }

    #[test]
    fn pipeline_witnesses_are_stratified_and_share_the_model(seed in any::<u64>()) {
        let c = gen(seed, GenParams::default());
        let out = model_check(&c, &McConfig::default()).unwrap();
        // never a certificate without a passing self-check
        prop_assert_eq!(out.witness.is_some(), out.check_report.as_ref().is_some_and(|r| r.pass));
        if let Some(w) = &out.witness {
            prop_assert!(certcheck::reset_cycle(w).is_none());
            prop_assert!(w.check_stratified().is_ok());
            let corr = certcheck::match_common(&c, w).unwrap();
            prop_assert_eq!(corr.common_latches(), c.num_latches());
            prop_assert_eq!(corr.common_inputs(), c.num_inputs());
            prop_assert_eq!(certcheck::lemma1_probe(&c, w), Ok(true));
        }
    }

    /// A candidate invariant guessed at random: whenever the checker
    /// accepts it, the model really is safe.
    #[test]
    fn accepted_guesses_are_safe(seed in any::<u64>()) {
        let c = gen(seed, GenParams { max_inputs: 3, max_latches: 5, max_ands: 12 });
        let truth = oracle::reachability(&c, 1 << 16).unwrap();
        let (mut b, map) = CircuitBuilder::from_circuit(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let lats: Vec<Lit> = c.latches().iter().map(|l| map.get(l.lit())).collect();
        let mut guess = Lit::TRUE;
        for _ in 0..rng.gen_range(0..3) {
            let mut lits = Vec::new();
            for &l in &lats {
                if rng.gen_bool(0.4) {
                    lits.push(l.xor(rng.gen()));
                }
            }
            let cl = b.or_all(&lits);
            guess = b.and(guess, cl);
        }
        let bad = b.bad();
        let q = b.and(!bad, guess);
        b.set_bad(!q);
        let w = b.build();
        if certcheck::check(&c, &w).pass {
            prop_assert!(truth.is_safe());
        }
    }
}

#[test]
fn fuzzing_is_deterministic() {
    let p = GenParams::default();
    let cfg = aigcert::cli::fuzz_config();
    let key = |r: Vec<(Circuit, aigcert::cli::FuzzCase)>| -> Vec<(Circuit, String, bool)> {
        r.into_iter().map(|(c, k)| (c, k.status, k.witness_ok)).collect()
    };
    assert_eq!(key(fuzz(40, 9, &p, &cfg)), key(fuzz(40, 9, &p, &cfg)));
}
