//! Independent certificate checker.
//!
//! Given a model `C` and a witness `W` whose bad output encodes `¬Q`, the
//! checker verifies that both circuits have stratified resets and that six
//! combinational checks are unsatisfiable:
//!
//! | check | query |
//! |-------|-------|
//! | A | `S(J, M) ∧ ¬Q(J, M)` |
//! | B | `Q(J, M) ∧ ¬Q(J₁, G(J, M))` |
//! | C | `Q ∧ ¬P_W`, where `P_W` is the optional second output of `W` |
//! | D | some common latch has different resets in `C` and `W` |
//! | E | some common latch has different next-state functions |
//! | F | `Q ∧ ¬P` |
//!
//! Common inputs and latches are identified by name, unnamed ones by
//! position. Only the circuit data and the SAT solver are shared with the
//! model checker; instantiation, reset predicates and the stratification
//! test are implemented here again.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::aiger_io::{parse_solver_output, tseitin_bad, write_dimacs, Cnf};
use crate::netlist::{And, Circuit, CircuitParts, Lit};
use crate::satkit::{SatLit, SatResult, Solver};

/// Environment variable naming an external DIMACS solver. The solver is
/// run as `<path> <file.cnf>` and must print `s` and `v` lines.
pub const SOLVER_ENV: &str = "AIGCERT_SAT_SOLVER";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Unknown,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: char,
    pub status: Status,
    /// Satisfying assignment when the check fails, keyed by
    /// `model.<var>` / `witness.<var>`, with `'` marking the next frame.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<BTreeMap<String, bool>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub stratified: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub common_inputs: usize,
    pub common_latches: usize,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

impl CheckReport {
    fn failed(msg: String) -> CheckReport {
        CheckReport {
            stratified: Status::Fail,
            error: Some(msg),
            common_inputs: 0,
            common_latches: 0,
            checks: Vec::new(),
            pass: false,
        }
    }

    pub fn status(&self, name: char) -> Option<Status> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.status)
    }

    /// Names of the checks that did not pass.
    pub fn failures(&self) -> Vec<char> {
        self.checks
            .iter()
            .filter(|c| c.status != Status::Pass)
            .map(|c| c.name)
            .collect()
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stratified: {:?}", self.stratified)?;
        if let Some(e) = &self.error {
            writeln!(f, "error: {e}")?;
        }
        writeln!(
            f,
            "common: {} inputs, {} latches",
            self.common_inputs, self.common_latches
        )?;
        for c in &self.checks {
            writeln!(f, "check {}: {:?}", c.name, c.status)?;
            if let Some(m) = &c.model {
                let vals: Vec<String> = m.iter().map(|(k, v)| format!("{k}={}", *v as u8)).collect();
                writeln!(f, "  {}", vals.join(" "))?;
            }
        }
        write!(f, "result: {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Which witness inputs and latches are the model's.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Correspondence {
    /// `inputs[i]`: model input matched by witness input `i`.
    pub inputs: Vec<Option<usize>>,
    pub latches: Vec<Option<usize>>,
}

impl Correspondence {
    pub fn common_inputs(&self) -> usize {
        self.inputs.iter().flatten().count()
    }

    pub fn common_latches(&self) -> usize {
        self.latches.iter().flatten().count()
    }
}

fn index_names<'a>(
    names: impl Iterator<Item = Option<&'a str>>,
    what: &str,
) -> Result<HashMap<&'a str, usize>, String> {
    let mut out = HashMap::new();
    for (i, n) in names.enumerate() {
        if let Some(n) = n {
            if out.insert(n, i).is_some() {
                return Err(format!("duplicate {what} name {n:?}"));
            }
        }
    }
    Ok(out)
}

fn match_kind<'a>(
    model: Vec<Option<&'a str>>,
    witness: Vec<Option<&'a str>>,
    what: &str,
) -> Result<Vec<Option<usize>>, String> {
    let by_name = index_names(model.iter().copied(), &format!("model {what}"))?;
    index_names(witness.iter().copied(), &format!("witness {what}"))?;
    Ok(witness
        .iter()
        .enumerate()
        .map(|(i, n)| match n {
            Some(n) => by_name.get(n).copied(),
            None => (i < model.len() && model[i].is_none()).then_some(i),
        })
        .collect())
}

/// Matches witness variables to model variables by name; an unnamed
/// witness variable matches the unnamed model variable at its position.
pub fn match_common(c: &Circuit, w: &Circuit) -> Result<Correspondence, String> {
    let ci = (0..c.num_inputs()).map(|i| c.input_name(i)).collect();
    let wi = (0..w.num_inputs()).map(|i| w.input_name(i)).collect();
    let cl = (0..c.num_latches()).map(|i| c.latch_name(i)).collect();
    let wl = (0..w.num_latches()).map(|i| w.latch_name(i)).collect();
    Ok(Correspondence {
        inputs: match_kind(ci, wi, "input")?,
        latches: match_kind(cl, wl, "latch")?,
    })
}

/// Latches whose reset cannot be evaluated in some order, if any.
pub fn reset_cycle(c: &Circuit) -> Option<Vec<usize>> {
    let mut latch_of = HashMap::new();
    for (i, l) in c.latches().iter().enumerate() {
        latch_of.insert(l.var, i);
    }
    let and_of: HashMap<u32, And> = c.ands().iter().map(|a| (a.lhs, *a)).collect();
    let deps: Vec<Vec<usize>> = c
        .latches()
        .iter()
        .map(|l| {
            if l.reset == l.lit() {
                return Vec::new();
            }
            let mut seen = std::collections::HashSet::new();
            let mut stack = vec![l.reset.var()];
            let mut out = Vec::new();
            while let Some(v) = stack.pop() {
                if !seen.insert(v) {
                    continue;
                }
                if let Some(&k) = latch_of.get(&v) {
                    out.push(k);
                } else if let Some(a) = and_of.get(&v) {
                    stack.push(a.rhs0.var());
                    stack.push(a.rhs1.var());
                }
            }
            out
        })
        .collect();
    // Kahn's algorithm on "latch depends on latch"
    let n = deps.len();
    let mut indeg = vec![0usize; n];
    let mut users = vec![Vec::new(); n];
    for (l, ds) in deps.iter().enumerate() {
        for &d in ds {
            indeg[l] += 1;
            users[d].push(l);
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&l| indeg[l] == 0).collect();
    let mut done = 0;
    while let Some(l) = ready.pop() {
        done += 1;
        for &u in &users[l] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                ready.push(u);
            }
        }
    }
    (done < n).then(|| (0..n).filter(|&l| indeg[l] > 0).collect())
}

/// Minimal AIG used to state the checks.
struct Miter {
    max_var: u32,
    inputs: Vec<u32>,
    labels: Vec<Label>,
    ands: Vec<And>,
    strash: HashMap<(Lit, Lit), Lit>,
}

/// Origin of a miter input; rendered only when a model is reported.
#[derive(Clone, Copy)]
struct Label {
    witness: bool,
    latch: bool,
    index: usize,
    primed: bool,
}

impl Label {
    fn render(self, c: &Circuit, w: &Circuit) -> String {
        let (side, x) = if self.witness { ("witness", w) } else { ("model", c) };
        let name = if self.latch {
            x.display_latch(self.index)
        } else {
            x.display_input(self.index)
        };
        let tick = if self.primed { "'" } else { "" };
        format!("{side}.{name}{tick}")
    }
}

impl Miter {
    fn new() -> Miter {
        Miter {
            max_var: 0,
            inputs: Vec::new(),
            labels: Vec::new(),
            ands: Vec::new(),
            strash: HashMap::new(),
        }
    }

    fn input(&mut self, label: Label) -> Lit {
        self.max_var += 1;
        self.inputs.push(self.max_var);
        self.labels.push(label);
        Lit::new(self.max_var, false)
    }

    fn and(&mut self, a: Lit, b: Lit) -> Lit {
        if a == Lit::FALSE || b == Lit::FALSE || a == !b {
            return Lit::FALSE;
        }
        if a == Lit::TRUE || a == b {
            return b;
        }
        if b == Lit::TRUE {
            return a;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if let Some(&g) = self.strash.get(&key) {
            return g;
        }
        self.max_var += 1;
        self.ands.push(And {
            lhs: self.max_var,
            rhs0: a,
            rhs1: b,
        });
        let g = Lit::new(self.max_var, false);
        self.strash.insert(key, g);
        g
    }

    fn or(&mut self, a: Lit, b: Lit) -> Lit {
        !self.and(!a, !b)
    }

    fn xor(&mut self, a: Lit, b: Lit) -> Lit {
        let x = self.and(a, !b);
        let y = self.and(!a, b);
        self.or(x, y)
    }

    fn any(&mut self, lits: &[Lit]) -> Lit {
        lits.iter().fold(Lit::FALSE, |acc, &l| self.or(acc, l))
    }

    fn all(&mut self, lits: &[Lit]) -> Lit {
        lits.iter().fold(Lit::TRUE, |acc, &l| self.and(acc, l))
    }

    /// Copies the gates of `c` with the given leaves; returns a literal
    /// for every variable of `c`.
    fn instantiate(&mut self, c: &Circuit, inputs: &[Lit], latches: &[Lit]) -> Vec<Lit> {
        let mut map = vec![Lit::FALSE; c.max_var() as usize + 1];
        for (i, &v) in c.inputs().iter().enumerate() {
            map[v as usize] = inputs[i];
        }
        for (i, l) in c.latches().iter().enumerate() {
            map[l.var as usize] = latches[i];
        }
        for a in c.ands() {
            let x = map[a.rhs0.var() as usize].xor(a.rhs0.is_negated());
            let y = map[a.rhs1.var() as usize].xor(a.rhs1.is_negated());
            map[a.lhs as usize] = self.and(x, y);
        }
        map
    }

    fn finish(self, root: Lit) -> (Circuit, Vec<Label>) {
        let parts = CircuitParts {
            max_var: self.max_var,
            inputs: self.inputs,
            latches: Vec::new(),
            ands: self.ands,
            bad: root,
            prop_bad: None,
            input_names: vec![None; self.labels.len()],
            latch_names: Vec::new(),
        };
        let c = Circuit::from_parts(parts).expect("miter is well-formed");
        (c, self.labels)
    }
}

fn get(map: &[Lit], l: Lit) -> Lit {
    map[l.var() as usize].xor(l.is_negated())
}

/// Instantiated variables of one frame of a circuit.
struct Frame {
    map: Vec<Lit>,
    latches: Vec<Lit>,
}

fn label(witness: bool, latch: bool, index: usize) -> Label {
    Label {
        witness,
        latch,
        index,
        primed: false,
    }
}

fn leaves(m: &mut Miter, c: &Circuit, witness: bool) -> (Vec<Lit>, Vec<Lit>) {
    let ins = (0..c.num_inputs()).map(|i| m.input(label(witness, false, i))).collect();
    let lats = (0..c.num_latches()).map(|i| m.input(label(witness, true, i))).collect();
    (ins, lats)
}

fn frame(m: &mut Miter, c: &Circuit, inputs: Vec<Lit>, latches: Vec<Lit>) -> Frame {
    let map = m.instantiate(c, &inputs, &latches);
    Frame { map, latches }
}

fn reset_predicate(m: &mut Miter, c: &Circuit, f: &Frame) -> Lit {
    let mut eqs = Vec::new();
    for (i, l) in c.latches().iter().enumerate() {
        if l.reset == l.lit() {
            continue;
        }
        let x = m.xor(f.latches[i], get(&f.map, l.reset));
        eqs.push(!x);
    }
    m.all(&eqs)
}

/// Model and witness instantiated over shared common variables.
fn joint(m: &mut Miter, c: &Circuit, w: &Circuit, corr: &Correspondence) -> (Frame, Frame) {
    let (ci, cl) = leaves(m, c, false);
    let wi = (0..w.num_inputs())
        .map(|i| match corr.inputs[i] {
            Some(k) => ci[k],
            None => m.input(label(true, false, i)),
        })
        .collect();
    let wl = (0..w.num_latches())
        .map(|i| match corr.latches[i] {
            Some(k) => cl[k],
            None => m.input(label(true, true, i)),
        })
        .collect();
    let cf = frame(m, c, ci, cl);
    let wf = frame(m, w, wi, wl);
    (cf, wf)
}

/// The combinational circuit whose bad output is satisfiable iff the
/// check fails.
pub fn check_circuit(name: char, c: &Circuit, w: &Circuit, corr: &Correspondence) -> (Circuit, Vec<String>) {
    let (circ, labels) = miter(name, c, w, corr);
    let names = labels.into_iter().map(|l| l.render(c, w)).collect();
    (circ, names)
}

fn miter(name: char, c: &Circuit, w: &Circuit, corr: &Correspondence) -> (Circuit, Vec<Label>) {
    let mut m = Miter::new();
    let root = match name {
        'A' => {
            let (i, l) = leaves(&mut m, w, true);
            let f = frame(&mut m, w, i, l);
            let s = reset_predicate(&mut m, w, &f);
            m.and(s, get(&f.map, w.bad()))
        }
        'B' => {
            let (i, l) = leaves(&mut m, w, true);
            let f0 = frame(&mut m, w, i, l);
            let next: Vec<Lit> = w.latches().iter().map(|l| get(&f0.map, l.next)).collect();
            let i1 = (0..w.num_inputs())
                .map(|i| {
                    m.input(Label {
                        primed: true,
                        ..label(true, false, i)
                    })
                })
                .collect();
            let f1 = frame(&mut m, w, i1, next);
            m.and(!get(&f0.map, w.bad()), get(&f1.map, w.bad()))
        }
        'C' => {
            let (i, l) = leaves(&mut m, w, true);
            let f = frame(&mut m, w, i, l);
            let p = w.prop_bad().unwrap_or(w.bad());
            m.and(!get(&f.map, w.bad()), get(&f.map, p))
        }
        'D' | 'E' => {
            let (cf, wf) = joint(&mut m, c, w, corr);
            let mut diffs = Vec::new();
            for (i, k) in corr.latches.iter().enumerate() {
                let Some(k) = *k else { continue };
                let (x, y) = if name == 'D' {
                    (c.latches()[k].reset, w.latches()[i].reset)
                } else {
                    (c.latches()[k].next, w.latches()[i].next)
                };
                diffs.push(m.xor(get(&cf.map, x), get(&wf.map, y)));
            }
            m.any(&diffs)
        }
        'F' => {
            let (cf, wf) = joint(&mut m, c, w, corr);
            m.and(!get(&wf.map, w.bad()), get(&cf.map, c.bad()))
        }
        _ => panic!("unknown check {name}"),
    };
    m.finish(root)
}

pub const CHECKS: [char; 6] = ['A', 'B', 'C', 'D', 'E', 'F'];

/// Below this many gates the six checks run on the calling thread.
const PARALLEL_ANDS: usize = 5000;

#[derive(Clone, Debug, Default)]
pub struct CheckOptions {
    /// Conflict limit per check; exceeding it fails the check.
    pub conflicts: Option<u64>,
    /// Write `check_<X>.cnf` files here.
    pub dump_cnf: Option<std::path::PathBuf>,
    /// External solver overriding the built-in one.
    pub solver: Option<std::path::PathBuf>,
}

impl CheckOptions {
    pub fn from_env() -> CheckOptions {
        CheckOptions {
            solver: std::env::var_os(SOLVER_ENV).map(Into::into),
            ..CheckOptions::default()
        }
    }
}

/// `Some(model)` when satisfiable, `None` when unsatisfiable.
fn solve_cnf(cnf: &Cnf, opts: &CheckOptions, tag: char) -> Result<Option<Vec<bool>>, String> {
    if let Some(path) = &opts.solver {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let file = dir.path().join(format!("check_{tag}.cnf"));
        let mut f = std::fs::File::create(&file).map_err(|e| e.to_string())?;
        write_dimacs(cnf, &mut f).map_err(|e| e.to_string())?;
        let out = std::process::Command::new(path)
            .arg(&file)
            .output()
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let text = String::from_utf8_lossy(&out.stdout);
        return parse_solver_output(&text, cnf.num_vars).ok_or_else(|| "external solver gave no answer".to_string());
    }
    let mut s = Solver::new();
    let vars: Vec<SatLit> = (0..cnf.num_vars).map(|_| s.new_var()).collect();
    let lit = |x: i32| vars[x.unsigned_abs() as usize - 1].xor(x < 0);
    for cl in &cnf.clauses {
        let lits: Vec<SatLit> = cl.iter().map(|&x| lit(x)).collect();
        s.add_clause(&lits);
    }
    s.set_conflict_budget(opts.conflicts);
    match s.solve(&[]) {
        SatResult::Sat => {
            let mut model = vec![false];
            model.extend(vars.iter().map(|&v| s.model_value(v)));
            Ok(Some(model))
        }
        SatResult::Unsat => Ok(None),
        SatResult::Unknown => Err("conflict limit reached".into()),
    }
}

fn run_check(name: char, c: &Circuit, w: &Circuit, corr: &Correspondence, opts: &CheckOptions) -> CheckResult {
    let (circ, labels) = miter(name, c, w, corr);
    let cnf = tseitin_bad(&circ).expect("check circuits are combinational");
    if let Some(dir) = &opts.dump_cnf {
        let path = dir.join(format!("check_{name}.cnf"));
        if let Ok(mut f) = std::fs::File::create(path) {
            let _ = write_dimacs(&cnf, &mut f);
        }
    }
    match solve_cnf(&cnf, opts, name) {
        Ok(None) => CheckResult {
            name,
            status: Status::Pass,
            model: None,
        },
        Ok(Some(model)) => {
            let vals = circ
                .inputs()
                .iter()
                .zip(labels)
                .map(|(&v, l)| (l.render(c, w), model[v as usize]))
                .collect();
            CheckResult {
                name,
                status: Status::Fail,
                model: Some(vals),
            }
        }
        Err(_) => CheckResult {
            name,
            status: Status::Unknown,
            model: None,
        },
    }
}

pub fn check(c: &Circuit, w: &Circuit) -> CheckReport {
    check_with(c, w, &CheckOptions::from_env())
}

pub fn check_with(c: &Circuit, w: &Circuit, opts: &CheckOptions) -> CheckReport {
    for (what, x) in [("model", c), ("witness", w)] {
        if let Some(cyc) = reset_cycle(x) {
            return CheckReport::failed(format!("{what} resets are not stratified: latches {cyc:?}"));
        }
    }
    let corr = match match_common(c, w) {
        Ok(m) => m,
        Err(e) => return CheckReport::failed(e),
    };
    if let Some(dir) = &opts.dump_cnf {
        let _ = std::fs::create_dir_all(dir);
    }
    let run = |&n: &char| run_check(n, c, w, &corr, opts);
    let checks: Vec<CheckResult> = if c.ands().len() + w.ands().len() < PARALLEL_ANDS {
        CHECKS.iter().map(run).collect()
    } else {
        CHECKS.par_iter().map(run).collect()
    };
    let pass = checks.iter().all(|r| r.status == Status::Pass);
    CheckReport {
        stratified: Status::Pass,
        error: None,
        common_inputs: corr.common_inputs(),
        common_latches: corr.common_latches(),
        checks,
        pass,
    }
}

/// Parses both files and checks the pair. Parse errors fail the report.
pub fn check_files(model: &Path, witness: &Path, opts: &CheckOptions) -> CheckReport {
    let load = |p: &Path| -> Result<Circuit, String> {
        let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
        crate::aiger_io::parse_unchecked(&text).map_err(|e| format!("{}: {e}", p.display()))
    };
    match (load(model), load(witness)) {
        (Ok(c), Ok(w)) => check_with(&c, &w, opts),
        (Err(e), _) | (_, Err(e)) => CheckReport::failed(e),
    }
}

/// Diagnostic: each reset of a common witness latch is insensitive to
/// every single variable the model does not share.
pub fn lemma1_probe(c: &Circuit, w: &Circuit) -> Result<bool, String> {
    let corr = match_common(c, w)?;
    let private: Vec<(bool, usize)> = (0..w.num_inputs())
        .filter(|&i| corr.inputs[i].is_none())
        .map(|i| (true, i))
        .chain(
            (0..w.num_latches())
                .filter(|&i| corr.latches[i].is_none())
                .map(|i| (false, i)),
        )
        .collect();
    let common: Vec<usize> = (0..w.num_latches()).filter(|&i| corr.latches[i].is_some()).collect();
    for &(is_input, k) in &private {
        let mut m = Miter::new();
        let (ins, lats) = leaves(&mut m, w, true);
        let (mut ins1, mut lats1) = (ins.clone(), lats.clone());
        if is_input {
            ins1[k] = !ins[k];
        } else {
            lats1[k] = !lats[k];
        }
        let a = m.instantiate(w, &ins, &lats);
        let b = m.instantiate(w, &ins1, &lats1);
        let mut diffs = Vec::new();
        for &l in &common {
            let latch = w.latches()[l];
            let (x, y) = if latch.reset == latch.lit() {
                (lats[l], lats1[l])
            } else {
                (get(&a, latch.reset), get(&b, latch.reset))
            };
            diffs.push(m.xor(x, y));
        }
        let root = m.any(&diffs);
        let (circ, _) = m.finish(root);
        let cnf = tseitin_bad(&circ).map_err(|e| e.to_string())?;
        if solve_cnf(&cnf, &CheckOptions::default(), 'L')?.is_some() {
            return Ok(false);
        }
    }
    Ok(true)
}
