//! Command-line driver: model checking with certificate emission,
//! certificate checking, fuzzing and circuit inspection.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::aiger_io::{self, ParseError};
use crate::certcheck::{self, CheckOptions, CheckReport};
use crate::engine::{self, Budget, EngineKind, Proof, Trace, Verdict};
use crate::netlist::{Circuit, NetlistError};
use crate::oracle::{self, GenParams, Reach};
use crate::periodic::{self, Candidate, SearchConfig};
use crate::tersim;
use crate::transform::{name_all, Pipeline};
use crate::witness;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_UNKNOWN: i32 = 3;
pub const EXIT_SELF_CHECK: i32 = 4;

#[derive(Clone, Debug)]
pub struct McConfig {
    pub search: SearchConfig,
    pub allow_forwarding: bool,
    pub engine: EngineKind,
    pub budget: Budget,
    /// Build the certificate and check it before reporting SAFE.
    pub certify: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            search: SearchConfig::default(),
            allow_forwarding: true,
            engine: EngineKind::Ic3,
            budget: Budget::default(),
            certify: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum McError {
    #[error("{0}")]
    Netlist(#[from] NetlistError),
    #[error("certificate failed its own check:\n{0}")]
    SelfCheck(Box<CheckReport>),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Clone, Debug)]
pub struct McOutcome {
    pub verdict: Verdict,
    /// Counterexample on the input circuit.
    pub trace: Option<Trace>,
    pub witness: Option<Circuit>,
    /// Why no witness accompanies a SAFE verdict.
    pub no_certificate: Option<String>,
    pub pipeline: Pipeline,
    pub candidates: usize,
    pub check_report: Option<CheckReport>,
    pub mc_time: Duration,
    pub check_time: Duration,
}

impl McOutcome {
    pub fn proof(&self) -> Option<&Proof> {
        match &self.verdict {
            Verdict::Safe(Some(p)) => Some(p),
            _ => None,
        }
    }
}

/// Scores every candidate and returns them with the index of the best.
pub fn search(c: &Circuit, cfg: &McConfig) -> (Vec<Candidate>, usize) {
    let mut cands = periodic::collect_candidates(c, &cfg.search);
    if !cfg.allow_forwarding {
        cands.retain(|k| k.d == 0);
    }
    cands.par_iter_mut().for_each(|k| {
        periodic::score_candidate(c, k);
    });
    let best = periodic::select_best(&cands).unwrap_or(0);
    (cands, best)
}

/// The full flow: candidate search, preprocessing, model checking, and for
/// SAFE results with `d = 0` a witness for `c` that passed the checker.
pub fn model_check(c: &Circuit, cfg: &McConfig) -> Result<McOutcome, McError> {
    let start = Instant::now();
    c.check_stratified()?;
    let named = name_all(c);
    let (mut cands, best) = search(&named, cfg);
    let n_cands = cands.len();
    let pipeline = match cands.swap_remove(best).pipeline {
        Some(p) => p,
        None => Pipeline::run(&named, None, 0, 1, &periodic::Candidate::identity(&named).signals)
            .map_err(|e| McError::Internal(e.to_string()))?,
    };
    let reduced = &pipeline.reduced;
    // forwarding starts at time d; the steps before it are checked here
    let prefix = if pipeline.d > 0 {
        engine::bmc_upto(c, pipeline.d - 1, &cfg.budget)
    } else {
        Ok(None)
    };
    let mut verdict = match prefix {
        Ok(Some(t)) => Verdict::Unsafe(t),
        Ok(None) => engine::run(reduced, cfg.engine, &cfg.budget),
        Err(e) => Verdict::Unknown(e),
    };
    let mut out = McOutcome {
        verdict: Verdict::Unknown(String::new()),
        trace: None,
        witness: None,
        no_certificate: None,
        pipeline: pipeline.clone(),
        candidates: n_cands,
        check_report: None,
        mc_time: Duration::ZERO,
        check_time: Duration::ZERO,
    };
    match &verdict {
        Verdict::Unsafe(t) if t.initial.len() == c.num_latches() && t.replay(c).is_ok() => {
            out.trace = Some(t.clone());
        }
        Verdict::Unsafe(t) => {
            // replay on the input circuit at the matching depth
            let bound = pipeline.d + pipeline.n * t.len();
            match engine::bmc_upto(c, bound, &cfg.budget) {
                Ok(Some(orig)) => out.trace = Some(orig),
                Ok(None) => {
                    return Err(McError::Internal(
                        "counterexample of the preprocessed circuit not found on the input".into(),
                    ))
                }
                Err(e) => verdict = Verdict::Unknown(e),
            }
        }
        Verdict::Safe(None) if cfg.certify && pipeline.d == 0 => {
            verdict = engine::ic3(reduced, &cfg.budget);
            if !matches!(verdict, Verdict::Safe(_)) {
                out.no_certificate = Some("IC3 did not finish".into());
                verdict = Verdict::Safe(None);
            }
        }
        _ => {}
    }
    out.mc_time = start.elapsed();
    if let Verdict::Safe(proof) = &verdict {
        if pipeline.d > 0 {
            out.no_certificate = Some(format!(
                "certificate unavailable: reset forwarded by {} steps",
                pipeline.d
            ));
        } else if let (Some(proof), true) = (proof, cfg.certify) {
            let w = certificate(c, &pipeline, proof)?;
            let t = Instant::now();
            let report = certcheck::check(c, &w);
            out.check_time = t.elapsed();
            if !report.pass {
                return Err(McError::SelfCheck(Box::new(report)));
            }
            out.witness = Some(w);
            out.check_report = Some(report);
        }
    }
    out.verdict = verdict;
    Ok(out)
}

/// Witness for the input circuit from a proof of the preprocessed one.
pub fn certificate(c: &Circuit, p: &Pipeline, proof: &Proof) -> Result<Circuit, McError> {
    let terminal = engine::terminal_witness(&p.reduced, proof);
    let lifted = witness::lift_over_reduce_rewrite(&terminal);
    let internal = |e: witness::WitnessError| McError::Internal(e.to_string());
    let composite = witness::composite_witness(&p.unfolded, &lifted, p.loop_invariant.as_ref()).map_err(internal)?;
    let folded = witness::fold_witness(&p.forwarded, &p.unfolded, &composite).map_err(internal)?;
    Ok(witness::restore_names(&folded, c))
}

/// Counterexample in the AIGER witness format.
pub fn format_trace(c: &Circuit, t: &Trace) -> String {
    let bits = |v: &[bool]| v.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>();
    let mut s = String::from("1\nb0\n");
    let _ = writeln!(s, "{}", bits(&t.initial));
    for ins in &t.inputs {
        let _ = writeln!(s, "{}", bits(ins));
    }
    s.push_str(".\n");
    debug_assert_eq!(t.initial.len(), c.num_latches());
    s
}

#[derive(Parser, Debug)]
#[command(
    name = "aigcert",
    version,
    about = "Certifying model checker for AIGER circuits with reset functions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EngineArg {
    Ic3,
    Kind,
    Bmc,
    Portfolio,
}

impl From<EngineArg> for EngineKind {
    fn from(e: EngineArg) -> EngineKind {
        match e {
            EngineArg::Ic3 => EngineKind::Ic3,
            EngineArg::Kind => EngineKind::KInduction,
            EngineArg::Bmc => EngineKind::Bmc,
            EngineArg::Portfolio => EngineKind::Portfolio,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Largest number of phases n.
    #[arg(long, default_value_t = periodic::DEFAULT_CAP)]
    pub max_phase: usize,
    /// Largest duration d.
    #[arg(long, default_value_t = periodic::DEFAULT_CAP)]
    pub max_duration: usize,
    /// Only consider candidates with d = 0.
    #[arg(long)]
    pub no_forward: bool,
    #[arg(long, value_enum, default_value_t = EngineArg::Ic3)]
    pub engine: EngineArg,
    /// Bound for BMC and k-induction, frame limit for IC3.
    #[arg(long)]
    pub max_bound: Option<usize>,
    /// Conflict limit per SAT call.
    #[arg(long)]
    pub conflicts: Option<u64>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Ternary simulation steps.
    #[arg(long, default_value_t = 1000)]
    pub sim_steps: usize,
}

impl RunArgs {
    pub fn config(&self) -> McConfig {
        McConfig {
            search: SearchConfig {
                max_d: self.max_duration.min(periodic::DEFAULT_CAP),
                max_n: self.max_phase.min(periodic::DEFAULT_CAP),
                max_steps: self.sim_steps,
            },
            allow_forwarding: !self.no_forward,
            engine: self.engine.into(),
            budget: Budget {
                max_bound: self.max_bound,
                conflicts: self.conflicts,
                deadline: self.timeout.map(|s| Instant::now() + Duration::from_secs_f64(s)),
                cancel: None,
            },
            certify: true,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Model check a circuit.
    Mc {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Write the certificate (SAFE) or counterexample (UNSAFE) here.
        #[arg(long)]
        witness: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Check a witness circuit against a model.
    Check {
        model: PathBuf,
        witness: PathBuf,
        /// Write the CNF of every check into this directory.
        #[arg(long)]
        dump_cnf: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Cross-check the model checker on random circuits.
    Fuzz {
        #[arg(long, default_value_t = 1000)]
        count: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        max_inputs: usize,
        #[arg(long, default_value_t = 8)]
        max_latches: usize,
        #[arg(long, default_value_t = 16)]
        max_ands: usize,
        /// Worker threads, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Directory for reproducers of discrepancies.
        #[arg(long, default_value = "fuzz-failures")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print statistics, lassos and candidates.
    Info {
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        sim_steps: usize,
    },
}

fn load(path: &Path) -> Result<Circuit, (i32, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| (EXIT_FAIL, format!("{}: {e}", path.display())))?;
    aiger_io::parse(&text).map_err(|e: ParseError| (EXIT_PARSE, format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct McJson<'a> {
    status: &'a str,
    d: usize,
    n: usize,
    latches: usize,
    reduced_latches: usize,
    candidates: usize,
    proof_depth: Option<usize>,
    certificate: bool,
    note: Option<&'a str>,
    trace_length: Option<usize>,
    mc_seconds: f64,
    check_seconds: f64,
}

fn cmd_mc(model: &Path, run: &RunArgs, witness: Option<&Path>, json: bool) -> Result<i32, (i32, String)> {
    let c = load(model)?;
    let out = match model_check(&c, &run.config()) {
        Ok(o) => o,
        Err(McError::SelfCheck(r)) => {
            return Err((EXIT_SELF_CHECK, format!("BUG: certificate failed its own check\n{r}")))
        }
        Err(McError::Netlist(e)) => return Err((EXIT_PARSE, e.to_string())),
        Err(e) => return Err((EXIT_FAIL, e.to_string())),
    };
    let p = &out.pipeline;
    if json {
        let j = McJson {
            status: out.verdict.status(),
            d: p.d,
            n: p.n,
            latches: c.num_latches(),
            reduced_latches: p.reduced.num_latches(),
            candidates: out.candidates,
            proof_depth: out.proof().map(|p| p.depth),
            certificate: out.witness.is_some(),
            note: out.no_certificate.as_deref(),
            trace_length: out.trace.as_ref().map(Trace::len),
            mc_seconds: out.mc_time.as_secs_f64(),
            check_seconds: out.check_time.as_secs_f64(),
        };
        println!("{}", serde_json::to_string_pretty(&j).unwrap());
    } else {
        println!("{}", out.verdict.status());
        println!(
            "candidate: d={} n={}, latches {} -> {}",
            p.d,
            p.n,
            c.num_latches(),
            p.reduced.num_latches()
        );
        if let Some(note) = &out.no_certificate {
            println!("{note}");
        }
        if let Verdict::Unknown(why) = &out.verdict {
            println!("{why}");
        }
    }
    if let Some(path) = witness {
        let text = match (&out.witness, &out.trace) {
            (Some(w), _) => Some(aiger_io::write(w)),
            (_, Some(t)) => Some(format_trace(&c, t)),
            _ => None,
        };
        if let Some(text) = text {
            std::fs::write(path, text).map_err(|e| (EXIT_FAIL, format!("{}: {e}", path.display())))?;
        }
    }
    Ok(match out.verdict {
        Verdict::Unknown(_) => EXIT_UNKNOWN,
        _ => EXIT_OK,
    })
}

fn cmd_check(model: &Path, witness: &Path, dump: Option<&Path>, json: bool) -> i32 {
    let mut opts = CheckOptions::from_env();
    opts.dump_cnf = dump.map(Path::to_path_buf);
    let report = certcheck::check_files(model, witness, &opts);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
    } else {
        println!("{report}");
    }
    if report.pass {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}

/// Result of one fuzz instance.
#[derive(Clone, Debug, Serialize)]
pub struct FuzzCase {
    pub index: u64,
    pub latches: usize,
    pub status: String,
    /// Explicit-state verdict, when within limits.
    pub oracle_safe: Option<bool>,
    pub agrees: Option<bool>,
    pub witness_checked: bool,
    pub witness_ok: bool,
    pub non_identity: bool,
    /// Oracle verdict on the preprocessed circuit matches the input's.
    pub preserved: Option<bool>,
    pub loop_invariants: usize,
    pub loop_invariant_failures: usize,
    pub trace_ok: Option<bool>,
    pub mc_seconds: f64,
    pub check_seconds: f64,
    pub error: Option<String>,
}

impl FuzzCase {
    pub fn discrepancy(&self) -> bool {
        self.agrees == Some(false)
            || (self.witness_checked && !self.witness_ok)
            || self.preserved == Some(false)
            || self.trace_ok == Some(false)
            || self.loop_invariant_failures > 0
            || self.error.is_some()
    }
}

/// The circuit of fuzz instance `index`.
pub fn fuzz_circuit(seed: u64, index: u64, p: &GenParams) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    oracle::random_circuit(&mut rng, p)
}

const ORACLE_STATES: usize = 1 << 16;

pub fn fuzz_one(seed: u64, index: u64, p: &GenParams, cfg: &McConfig) -> (Circuit, FuzzCase) {
    let c = fuzz_circuit(seed, index, p);
    let mut case = FuzzCase {
        index,
        latches: c.num_latches(),
        status: String::new(),
        oracle_safe: None,
        agrees: None,
        witness_checked: false,
        witness_ok: false,
        non_identity: false,
        preserved: None,
        loop_invariants: 0,
        loop_invariant_failures: 0,
        trace_ok: None,
        mc_seconds: 0.0,
        check_seconds: 0.0,
        error: None,
    };
    let out = match model_check(&c, cfg) {
        Ok(o) => o,
        Err(e) => {
            case.error = Some(e.to_string());
            case.oracle_safe = oracle::reachability(&c, ORACLE_STATES).map(Reach::is_safe);
            return (c, case);
        }
    };
    case.status = out.verdict.status().to_string();
    case.mc_seconds = out.mc_time.as_secs_f64();
    // the timed runs above go first so they see the same cache state
    let truth = oracle::reachability(&c, ORACLE_STATES).map(Reach::is_safe);
    case.oracle_safe = truth;
    let decided = match &out.verdict {
        Verdict::Safe(_) => Some(true),
        Verdict::Unsafe(_) => Some(false),
        Verdict::Unknown(_) => None,
    };
    if let (Some(t), Some(d)) = (truth, decided) {
        case.agrees = Some(t == d);
    }
    if let Some(t) = &out.trace {
        case.trace_ok = Some(t.replay(&c).is_ok());
    }
    if let Some(w) = &out.witness {
        // through the file format, as an external user would see it
        let t = Instant::now();
        let text = aiger_io::write(w);
        let ok = match aiger_io::parse_unchecked(&text) {
            Ok(w2) => certcheck::check(&c, &w2).pass,
            Err(_) => false,
        };
        case.check_seconds = t.elapsed().as_secs_f64();
        case.witness_checked = true;
        case.witness_ok = ok;
    }
    // every candidate with a loop invariant must pass its gate
    let named = name_all(&c);
    for k in periodic::collect_candidates(&named, &cfg.search) {
        if k.lasso.is_none() || periodic::all_free(&k.signals) || (!cfg.allow_forwarding && k.d > 0) {
            continue;
        }
        case.loop_invariants += 1;
        if Pipeline::run(&named, k.lasso.as_ref(), k.d, k.n, &k.signals).is_err() {
            case.loop_invariant_failures += 1;
        }
    }
    let p = &out.pipeline;
    case.non_identity = !(p.d == 0 && p.n == 1 && periodic::all_free(&p.signals));
    if case.non_identity && c.num_latches() <= 6 {
        if let Some(t) = truth {
            // the first d steps are not part of the forwarded circuit
            let prefix_ok = p.d == 0 || oracle_prefix_safe(&c, p.d);
            case.preserved = oracle::reachability(&p.reduced, ORACLE_STATES).map(|r| (prefix_ok && r.is_safe()) == t);
        }
    }
    (c, case)
}

/// No bad state within the first `d` steps, by bounded explicit search.
fn oracle_prefix_safe(c: &Circuit, d: usize) -> bool {
    match oracle::reachability(c, ORACLE_STATES) {
        Some(Reach::Unsafe { depth }) => depth >= d,
        _ => true,
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FuzzSummary {
    pub count: u64,
    pub safe: usize,
    pub unsafe_: usize,
    pub unknown: usize,
    pub oracle_decided: usize,
    pub agreements: usize,
    pub disagreements: usize,
    pub witnesses: usize,
    pub witness_failures: usize,
    pub non_identity: usize,
    pub preservation_checked: usize,
    pub preservation_failures: usize,
    pub loop_invariants: usize,
    pub loop_invariant_failures: usize,
    pub traces: usize,
    pub trace_failures: usize,
    pub errors: usize,
    /// Median of check time over model-check time for certified cases.
    pub median_overhead: Option<f64>,
    pub discrepancies: Vec<u64>,
}

impl FuzzSummary {
    pub fn from_cases(cases: &[FuzzCase]) -> FuzzSummary {
        let mut s = FuzzSummary {
            count: cases.len() as u64,
            ..FuzzSummary::default()
        };
        let mut ratios = Vec::new();
        for c in cases {
            match c.status.as_str() {
                "SAFE" => s.safe += 1,
                "UNSAFE" => s.unsafe_ += 1,
                _ => s.unknown += 1,
            }
            if let Some(a) = c.agrees {
                s.oracle_decided += 1;
                if a {
                    s.agreements += 1;
                } else {
                    s.disagreements += 1;
                }
            }
            if c.witness_checked {
                s.witnesses += 1;
                s.witness_failures += !c.witness_ok as usize;
                if c.mc_seconds > 0.0 {
                    ratios.push(c.check_seconds / c.mc_seconds);
                }
            }
            s.non_identity += c.non_identity as usize;
            if let Some(p) = c.preserved {
                s.preservation_checked += 1;
                s.preservation_failures += !p as usize;
            }
            s.loop_invariants += c.loop_invariants;
            s.loop_invariant_failures += c.loop_invariant_failures;
            if let Some(t) = c.trace_ok {
                s.traces += 1;
                s.trace_failures += !t as usize;
            }
            s.errors += c.error.is_some() as usize;
            if c.discrepancy() {
                s.discrepancies.push(c.index);
            }
        }
        ratios.sort_by(f64::total_cmp);
        s.median_overhead = (!ratios.is_empty()).then(|| ratios[ratios.len() / 2]);
        s
    }
}

/// Runs `count` instances in parallel. Results are ordered by index.
pub fn fuzz(count: u64, seed: u64, p: &GenParams, cfg: &McConfig) -> Vec<(Circuit, FuzzCase)> {
    (0..count).into_par_iter().map(|i| fuzz_one(seed, i, p, cfg)).collect()
}

/// Settings used by the `fuzz` subcommand.
pub fn fuzz_config() -> McConfig {
    McConfig {
        budget: Budget {
            conflicts: Some(200_000),
            ..Budget::default()
        },
        ..McConfig::default()
    }
}

fn cmd_fuzz(count: u64, seed: u64, p: GenParams, jobs: usize, out: &Path, json: bool) -> i32 {
    let run = || fuzz(count, seed, &p, &fuzz_config());
    let results = if jobs > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                eprintln!("{e}");
                return EXIT_FAIL;
            }
        }
    } else {
        run()
    };
    let cases: Vec<FuzzCase> = results.iter().map(|r| r.1.clone()).collect();
    let summary = FuzzSummary::from_cases(&cases);
    for (c, case) in &results {
        if case.discrepancy() {
            let _ = std::fs::create_dir_all(out);
            let path = out.join(format!("fuzz_{seed}_{}.aag", case.index));
            let _ = std::fs::write(&path, aiger_io::write(c));
            eprintln!("discrepancy in instance {}: {}", case.index, path.display());
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    } else {
        println!(
            "{} circuits: {} safe, {} unsafe, {} unknown",
            summary.count, summary.safe, summary.unsafe_, summary.unknown
        );
        println!("oracle agreement: {}/{}", summary.agreements, summary.oracle_decided);
        println!(
            "witnesses: {} checked, {} failed; traces: {} replayed, {} failed",
            summary.witnesses, summary.witness_failures, summary.traces, summary.trace_failures
        );
        println!(
            "preprocessing: {} non-identity, {} preservation failures of {}",
            summary.non_identity, summary.preservation_failures, summary.preservation_checked
        );
        println!(
            "loop invariants: {} checked, {} failed",
            summary.loop_invariants, summary.loop_invariant_failures
        );
        if let Some(m) = summary.median_overhead {
            println!("median check/mc time: {m:.3}");
        }
    }
    if summary.discrepancies.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAIL
    }
}

/// Human-readable statistics for `info`.
pub fn info(c: &Circuit, sim_steps: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "inputs {} latches {} ands {}",
        c.num_inputs(),
        c.num_latches(),
        c.num_ands()
    );
    match c.check_stratified() {
        Ok(order) => {
            let _ = writeln!(s, "reset order {order:?}");
        }
        Err(e) => {
            let _ = writeln!(s, "not stratified: {e}");
            return s;
        }
    }
    let coi = c.coi();
    let _ = writeln!(s, "coi inputs {} latches {}", coi.inputs.len(), coi.latches.len());
    let lassos = tersim::find_lassos(c, sim_steps);
    for l in &lassos {
        let _ = writeln!(s, "lasso delta {} omega {}", l.delta, l.omega);
    }
    let cfg = McConfig {
        search: SearchConfig {
            max_steps: sim_steps,
            ..SearchConfig::default()
        },
        ..McConfig::default()
    };
    let (cands, best) = search(&name_all(c), &cfg);
    for (i, k) in cands.iter().enumerate() {
        let score = k.score.map_or("-".to_string(), |x| x.to_string());
        let mark = if i == best { " *" } else { "" };
        let _ = writeln!(s, "candidate d {} n {} score {score}{mark}", k.d, k.n);
    }
    s
}

pub fn main_with(cli: Cli) -> i32 {
    let res = match &cli.command {
        Command::Mc {
            model,
            run,
            witness,
            json,
        } => cmd_mc(model, run, witness.as_deref(), *json),
        Command::Check {
            model,
            witness,
            dump_cnf,
            json,
        } => Ok(cmd_check(model, witness, dump_cnf.as_deref(), *json)),
        Command::Fuzz {
            count,
            seed,
            max_inputs,
            max_latches,
            max_ands,
            jobs,
            out,
            json,
        } => {
            let p = GenParams {
                max_inputs: *max_inputs,
                max_latches: *max_latches,
                max_ands: *max_ands,
            };
            Ok(cmd_fuzz(*count, *seed, p, *jobs, out, *json))
        }
        Command::Info { model, sim_steps } => load(model).map(|c| {
            print!("{}", info(&c, *sim_steps));
            EXIT_OK
        }),
    };
    match res {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("{msg}");
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{CircuitBuilder, Lit};

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
    fn fig5_is_certified() {
        let c = copy_clock();
        let out = model_check(&c, &McConfig::default()).unwrap();
        assert_eq!((out.pipeline.d, out.pipeline.n), (0, 2));
        assert_eq!(out.pipeline.reduced.num_latches(), 0);
        assert_eq!(out.proof().unwrap().depth, 0);
        assert!(out.check_report.unwrap().pass);
    }

    #[test]
    fn bad_true_is_a_one_state_trace() {
        let mut b = CircuitBuilder::new();
        b.set_bad(Lit::TRUE);
        let c = b.build();
        let out = model_check(&c, &McConfig::default()).unwrap();
        assert_eq!(out.trace.unwrap().len(), 1);
    }

    #[test]
    fn unnamed_circuit_gets_certificate() {
        let mut b = CircuitBuilder::new();
        let i = b.input(None);
        let l = b.latch(None);
        let m = b.latch(None);
        b.set_next(l, !l);
        let x = b.and(l, i);
        b.set_next(m, x);
        let bad = b.and(m, l);
        b.set_bad(bad);
        let c = b.build();
        let out = model_check(&c, &McConfig::default()).unwrap();
        assert!(matches!(out.verdict, Verdict::Safe(Some(_))));
        assert!(out.witness.is_some());
    }

    #[test]
    fn small_fuzz_run() {
        let p = GenParams::default();
        let res = fuzz(60, 3, &p, &fuzz_config());
        let cases: Vec<FuzzCase> = res.into_iter().map(|r| r.1).collect();
        let s = FuzzSummary::from_cases(&cases);
        assert!(s.discrepancies.is_empty(), "{s:?}");
    }
}
