//! Acceptance run: one PASS/FAIL line per criterion, then a single assert.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use aigcert::aiger_io::{self, Cnf};
use aigcert::certcheck::{self, Status};
use aigcert::cli::{fuzz, fuzz_config, model_check, FuzzCase, FuzzSummary, McConfig};
use aigcert::netlist::{And, Latch};
use aigcert::oracle::GenParams;
use aigcert::{Circuit, CircuitBuilder, Lit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FUZZ_COUNT: u64 = 10_000;
const FUZZ_SEED: u64 = 1;
const FUZZ_LIMIT: Duration = Duration::from_secs(30 * 60);
const FIG5_LIMIT: Duration = Duration::from_secs(1);
const MAX_OVERHEAD: f64 = 0.5;
const TSEITIN_COUNT: usize = 1000;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn load(name: &str) -> Circuit {
    aiger_io::parse_unchecked(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

struct Report(Vec<(String, bool, String)>);

impl Report {
    fn line(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        self.0.push((name.to_string(), ok, detail));
    }
}

fn fig5(r: &mut Report) {
    let c = load("fig5.aag");
    let t = Instant::now();
    let out = model_check(&c, &McConfig::default());
    let took = t.elapsed();
    let Ok(out) = out else {
        return r.line("fig5 end-to-end", false, "model check failed".into());
    };
    let p = &out.pipeline;
    let frames = out.proof().map(|p| p.depth);
    let names: Vec<String> = out
        .witness
        .as_ref()
        .map(|w| {
            (0..w.num_latches())
                .filter_map(|i| w.latch_name(i).map(str::to_string))
                .collect()
        })
        .unwrap_or_default();
    let b_bits = names.iter().filter(|n| n.starts_with('b')).count();
    let e_bits = names.iter().filter(|n| n.starts_with('e')).count();
    let report = out.witness.as_ref().map(|w| certcheck::check(&c, w));
    let passed = report.as_ref().is_some_and(|r| r.pass && r.stratified == Status::Pass);
    let ok = p.n == 2 && p.d == 0 && frames == Some(0) && b_bits == 3 && e_bits == 1 && passed && took < FIG5_LIMIT;
    r.line(
        "fig5 end-to-end",
        ok,
        format!(
            "n={} d={} frames={frames:?} b={b_bits} e={e_bits} check={passed} time={:.3}s",
            p.n,
            p.d,
            took.as_secs_f64()
        ),
    );
}

fn fuzz_criteria(r: &mut Report) {
    let p = GenParams {
        max_inputs: 4,
        max_latches: 8,
        max_ands: 16,
    };
    let t = Instant::now();
    let res = fuzz(FUZZ_COUNT, FUZZ_SEED, &p, &fuzz_config());
    let took = t.elapsed();
    let cases: Vec<FuzzCase> = res.into_iter().map(|x| x.1).collect();
    let s = FuzzSummary::from_cases(&cases);
    r.line(
        "verdict correctness",
        s.disagreements == 0 && s.oracle_decided > 0 && took < FUZZ_LIMIT && s.errors == 0,
        format!(
            "{}/{} agree, {} unknown, {} errors, {:.1}s",
            s.agreements,
            s.oracle_decided,
            s.unknown,
            s.errors,
            took.as_secs_f64()
        ),
    );
    r.line(
        "certificate validity",
        s.witness_failures == 0 && s.witnesses > 0 && s.trace_failures == 0,
        format!(
            "{} witnesses, {} failed; {} traces, {} failed",
            s.witnesses, s.witness_failures, s.traces, s.trace_failures
        ),
    );
    r.line(
        "pipeline preservation",
        s.preservation_failures == 0 && s.preservation_checked > 0,
        format!("{} failures of {}", s.preservation_failures, s.preservation_checked),
    );
    r.line(
        "loop-invariant gate",
        s.loop_invariant_failures == 0 && s.loop_invariants > 0,
        format!("{} failures of {}", s.loop_invariant_failures, s.loop_invariants),
    );
    let m = s.median_overhead;
    r.line(
        "certification overhead",
        m.is_some_and(|m| m <= MAX_OVERHEAD),
        format!("median check/mc = {m:.3?} (limit {MAX_OVERHEAD})"),
    );
}

fn fresh(p: &mut aigcert::netlist::CircuitParts) -> u32 {
    p.max_var += 1;
    p.max_var
}

fn add_and(p: &mut aigcert::netlist::CircuitParts, a: Lit, b: Lit) -> Lit {
    let v = fresh(p);
    p.ands.push(And {
        lhs: v,
        rhs0: a,
        rhs1: b,
    });
    Lit::new(v, false)
}

/// A private latch `z` with the given reset and next (`None` keeps `z`).
fn add_private(p: &mut aigcert::netlist::CircuitParts, reset: Lit, next: Option<Lit>) -> Lit {
    let v = fresh(p);
    let z = Lit::new(v, false);
    p.latches.push(Latch {
        var: v,
        next: next.unwrap_or(z),
        reset,
    });
    p.latch_names.push(Some("z".into()));
    z
}

fn corrupt(w: &Circuit, which: char) -> Circuit {
    let mut p = w.parts();
    let t = p.latch_names.iter().position(|n| n.as_deref() == Some("t")).unwrap();
    let c_lit = {
        let c = p.latch_names.iter().position(|n| n.as_deref() == Some("c")).unwrap();
        p.latches[c].lit()
    };
    match which {
        // invariant false in the initial state only
        'A' => {
            let z = add_private(&mut p, Lit::TRUE, Some(Lit::FALSE));
            let q = !p.bad;
            p.bad = !add_and(&mut p, q, !z);
        }
        // invariant false after one step
        'B' => {
            let z = add_private(&mut p, Lit::FALSE, Some(Lit::TRUE));
            let q = !p.bad;
            p.bad = !add_and(&mut p, q, !z);
        }
        // a property the invariant does not imply
        'C' => p.prop_bad = Some(p.latches[t].lit()),
        // same initial state, but the reset reads a latch the model lacks
        'D' => {
            let z = add_private(&mut p, Lit::FALSE, None);
            p.latches[t].reset = z;
        }
        // differs from the model only on states outside the invariant
        'E' => {
            let tl = p.latches[t].lit();
            p.latches[t].next = add_and(&mut p, c_lit, !tl);
        }
        // a closed extra region that admits bad model states
        'F' => {
            let z = add_private(&mut p, Lit::FALSE, None);
            let bad = p.bad;
            p.bad = add_and(&mut p, bad, !z);
        }
        _ => unreachable!(),
    }
    Circuit::from_parts(p).unwrap()
}

fn negative_fixtures(r: &mut Report) {
    let c = load("fig5.aag");
    let w = load("fig5_witness.aag");
    let golden = certcheck::check(&c, &w);
    r.line("golden pair passes", golden.pass, golden.failures().iter().collect());
    let mut ok = true;
    let mut detail = Vec::new();
    for x in certcheck::CHECKS {
        let rep = certcheck::check(&c, &corrupt(&w, x));
        let f = rep.failures();
        ok &= f == [x] && rep.stratified == Status::Pass;
        detail.push(format!("{x}->{}", f.iter().collect::<String>()));
    }
    r.line("negative fixtures", ok, detail.join(" "));
}

/// Plain DPLL with unit propagation, independent of the library solver.
fn dpll(clauses: &[Vec<i32>], assign: &mut [i8]) -> bool {
    loop {
        let mut unit = None;
        for cl in clauses {
            let mut open = None;
            let mut n_open = 0;
            let mut sat = false;
            for &x in cl {
                let v = assign[x.unsigned_abs() as usize];
                if v == 0 {
                    n_open += 1;
                    open = Some(x);
                } else if (v > 0) == (x > 0) {
                    sat = true;
                    break;
                }
            }
            if sat {
                continue;
            }
            match n_open {
                0 => return false,
                1 => {
                    unit = open;
                    break;
                }
                _ => {}
            }
        }
        match unit {
            Some(x) => assign[x.unsigned_abs() as usize] = if x > 0 { 1 } else { -1 },
            None => break,
        }
    }
    let Some(v) = (1..assign.len()).find(|&v| assign[v] == 0) else {
        return true;
    };
    for val in [1, -1] {
        let mut a = assign.to_vec();
        a[v] = val;
        if dpll(clauses, &mut a) {
            return true;
        }
    }
    false
}

fn cnf_sat(cnf: &Cnf) -> bool {
    dpll(&cnf.clauses, &mut vec![0; cnf.num_vars as usize + 1])
}

fn tseitin(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    let mut sat_count = 0;
    for _ in 0..TSEITIN_COUNT {
        let ni = rng.gen_range(0..=6);
        let ng = rng.gen_range(0..=10);
        let mut b = CircuitBuilder::new();
        let mut pool: Vec<Lit> = vec![Lit::FALSE];
        pool.extend((0..ni).map(|_| b.input(None)));
        for _ in 0..ng {
            let x = pool[rng.gen_range(0..pool.len())].xor(rng.gen_bool(0.5));
            let y = pool[rng.gen_range(0..pool.len())].xor(rng.gen_bool(0.5));
            let g = b.and(x, y);
            pool.push(g);
        }
        let out = pool[rng.gen_range(0..pool.len())].xor(rng.gen_bool(0.5));
        b.set_bad(out);
        let c = b.build();
        let truth = (0..1u32 << ni).any(|m| {
            let ins: Vec<bool> = (0..ni).map(|i| m >> i & 1 == 1).collect();
            c.eval(&ins, &[]).unwrap().bad(&c)
        });
        let cnf = aiger_io::tseitin_bad(&c).unwrap();
        sat_count += truth as usize;
        mismatches += (cnf_sat(&cnf) != truth) as usize;
    }
    r.line(
        "tseitin equisatisfiability",
        mismatches == 0,
        format!("{mismatches} mismatches of {TSEITIN_COUNT} ({sat_count} satisfiable)"),
    );
}

fn round_trip(r: &mut Report) {
    let mut files: Vec<PathBuf> = std::fs::read_dir(fixture(""))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "aag"))
        .collect();
    files.sort();
    let mut bad = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).unwrap();
        let same = aiger_io::parse_unchecked(&text).is_ok_and(|c| aiger_io::write(&c) == text);
        if !same {
            bad.push(f.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    r.line(
        "format round-trip",
        bad.is_empty() && !files.is_empty(),
        format!("{} of {} byte-identical {bad:?}", files.len() - bad.len(), files.len()),
    );
}

#[test]
fn acceptance() {
    let mut r = Report(Vec::new());
    fig5(&mut r);
    negative_fixtures(&mut r);
    tseitin(&mut r);
    round_trip(&mut r);
    fuzz_criteria(&mut r);
    let failed: Vec<&str> = r.0.iter().filter(|x| !x.1).map(|x| x.0.as_str()).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
}
