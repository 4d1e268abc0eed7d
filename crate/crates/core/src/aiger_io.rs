//! ASCII AIGER reading and writing, Tseitin encoding, DIMACS output.
//!
//! The latch line accepts an optional third field holding an arbitrary
//! reset literal. A reset equal to the latch literal marks it uninitialized.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::netlist::{And, Circuit, CircuitParts, Latch, Lit, NetlistError};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("malformed circuit: {0}")]
    Netlist(#[from] NetlistError),
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, msg: msg.into() }
}

fn numbers(line_no: usize, line: &str, expect: usize) -> Result<Vec<u32>, ParseError> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != expect {
        return Err(syntax(
            line_no,
            format!("expected {expect} fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<u32>()
                .map_err(|_| syntax(line_no, format!("not a number: {f:?}")))
        })
        .collect()
}

/// Parses an `aag` file and checks that resets are stratified.
pub fn parse(text: &str) -> Result<Circuit, ParseError> {
    let c = parse_unchecked(text)?;
    c.check_stratified()?;
    Ok(c)
}

/// Parses an `aag` file without the reset stratification check.
pub fn parse_unchecked(text: &str) -> Result<Circuit, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hno, header) = lines.next().ok_or_else(|| syntax(1, "empty file"))?;
    let mut fields = header.split(' ');
    if fields.next() != Some("aag") {
        if header.starts_with("aig") {
            return Err(ParseError::Unsupported("binary AIGER".into()));
        }
        return Err(syntax(hno, "expected 'aag' header"));
    }
    let rest: Vec<&str> = fields.collect();
    if rest.len() != 5 {
        return Err(ParseError::Unsupported("header extensions beyond M I L O A".into()));
    }
    let h = numbers(hno, &rest.join(" "), 5)?;
    let (m, ni, nl, no, na) = (h[0], h[1] as usize, h[2] as usize, h[3] as usize, h[4] as usize);
    if no == 0 || no > 2 {
        return Err(ParseError::Unsupported(format!("{no} outputs, expected exactly one")));
    }
    let mut next_line = |what: &str| -> Result<(usize, &str), ParseError> {
        lines
            .next()
            .ok_or_else(|| syntax(0, format!("unexpected end of file reading {what}")))
    };
    let var_of = |line: usize, code: u32| -> Result<u32, ParseError> {
        if code & 1 == 1 || code < 2 {
            return Err(syntax(line, format!("{code} cannot be defined")));
        }
        Ok(code / 2)
    };
    let lit = |line: usize, code: u32| -> Result<Lit, ParseError> {
        if code / 2 > m {
            return Err(syntax(line, format!("literal {code} exceeds maximum variable")));
        }
        Ok(Lit::from_code(code))
    };

    let mut inputs = Vec::with_capacity(ni);
    for _ in 0..ni {
        let (n, l) = next_line("inputs")?;
        let v = numbers(n, l, 1)?;
        inputs.push(var_of(n, v[0])?);
    }
    let mut latches = Vec::with_capacity(nl);
    for _ in 0..nl {
        let (n, l) = next_line("latches")?;
        let count = l.split(' ').count();
        if !(2..=3).contains(&count) {
            return Err(syntax(n, "latch line needs 2 or 3 fields"));
        }
        let v = numbers(n, l, count)?;
        latches.push(Latch {
            var: var_of(n, v[0])?,
            next: lit(n, v[1])?,
            reset: if count == 3 { lit(n, v[2])? } else { Lit::FALSE },
        });
    }
    let mut outputs = Vec::with_capacity(no);
    for _ in 0..no {
        let (n, l) = next_line("outputs")?;
        let v = numbers(n, l, 1)?;
        outputs.push(lit(n, v[0])?);
    }
    let mut ands = Vec::with_capacity(na);
    for _ in 0..na {
        let (n, l) = next_line("and gates")?;
        let v = numbers(n, l, 3)?;
        ands.push(And {
            lhs: var_of(n, v[0])?,
            rhs0: lit(n, v[1])?,
            rhs1: lit(n, v[2])?,
        });
    }
    let mut input_names = vec![None; ni];
    let mut latch_names = vec![None; nl];
    for (n, l) in lines {
        if l == "c" || l.starts_with("c ") {
            break;
        }
        let (tag, name) = l.split_once(' ').ok_or_else(|| syntax(n, "malformed symbol line"))?;
        let (kind, idx) = tag.split_at(1);
        let idx: usize = idx.parse().map_err(|_| syntax(n, "malformed symbol index"))?;
        let slot = match kind {
            "i" => input_names.get_mut(idx),
            "l" => latch_names.get_mut(idx),
            "o" if idx < no => continue,
            "b" | "c" | "j" | "f" => return Err(ParseError::Unsupported(format!("symbol kind {kind}"))),
            _ => None,
        };
        *slot.ok_or_else(|| syntax(n, "symbol index out of range"))? = Some(name.to_string());
    }
    let ands = topo_sort(ands);
    Ok(Circuit::from_parts(CircuitParts {
        max_var: m,
        inputs,
        latches,
        ands,
        bad: outputs[0],
        prop_bad: outputs.get(1).copied(),
        input_names,
        latch_names,
    })?)
}

/// Orders AND gates so fanins come first. Already sorted input is returned
/// unchanged; cycles are left for validation to reject.
fn topo_sort(ands: Vec<And>) -> Vec<And> {
    let pos: HashMap<u32, usize> = ands.iter().enumerate().map(|(i, a)| (a.lhs, i)).collect();
    let sorted = ands.iter().enumerate().all(|(i, a)| {
        [a.rhs0, a.rhs1]
            .iter()
            .all(|r| pos.get(&r.var()).is_none_or(|&j| j < i))
    });
    if sorted {
        return ands;
    }
    let mut state = vec![0u8; ands.len()];
    let mut out = Vec::with_capacity(ands.len());
    for root in 0..ands.len() {
        let mut stack = vec![root];
        while let Some(&i) = stack.last() {
            if state[i] == 2 {
                stack.pop();
                continue;
            }
            state[i] = 1;
            let mut pushed = false;
            for r in [ands[i].rhs0, ands[i].rhs1] {
                if let Some(&j) = pos.get(&r.var()) {
                    if state[j] == 0 {
                        stack.push(j);
                        pushed = true;
                    }
                }
            }
            if !pushed {
                state[i] = 2;
                out.push(ands[i]);
                stack.pop();
            }
        }
    }
    out
}

/// Canonical `aag` text. Reset literals of ⊥ are omitted.
pub fn write(c: &Circuit) -> String {
    let mut s = String::new();
    let no = 1 + c.prop_bad().is_some() as usize;
    writeln!(
        s,
        "aag {} {} {} {} {}",
        c.max_var(),
        c.num_inputs(),
        c.num_latches(),
        no,
        c.num_ands()
    )
    .unwrap();
    for &v in c.inputs() {
        writeln!(s, "{}", v * 2).unwrap();
    }
    for l in c.latches() {
        if l.reset == Lit::FALSE {
            writeln!(s, "{} {}", l.var * 2, l.next).unwrap();
        } else {
            writeln!(s, "{} {} {}", l.var * 2, l.next, l.reset).unwrap();
        }
    }
    writeln!(s, "{}", c.bad()).unwrap();
    if let Some(p) = c.prop_bad() {
        writeln!(s, "{p}").unwrap();
    }
    for a in c.ands() {
        writeln!(s, "{} {} {}", a.lhs * 2, a.rhs0, a.rhs1).unwrap();
    }
    for i in 0..c.num_inputs() {
        if let Some(n) = c.input_name(i) {
            writeln!(s, "i{i} {n}").unwrap();
        }
    }
    for i in 0..c.num_latches() {
        if let Some(n) = c.latch_name(i) {
            writeln!(s, "l{i} {n}").unwrap();
        }
    }
    s
}

/// CNF in DIMACS numbering. AIG variable `v` becomes DIMACS variable `v`;
/// one extra variable, forced true, stands for the constant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cnf {
    pub num_vars: u32,
    pub clauses: Vec<Vec<i32>>,
    true_var: u32,
}

impl Cnf {
    pub fn lit(&self, l: Lit) -> i32 {
        let (v, neg) = if l.var() == 0 {
            (self.true_var as i32, !l.is_negated())
        } else {
            (l.var() as i32, l.is_negated())
        };
        if neg {
            -v
        } else {
            v
        }
    }

    /// Evaluates every clause under `model`, indexed by DIMACS variable.
    pub fn satisfied_by(&self, model: &[bool]) -> bool {
        self.clauses
            .iter()
            .all(|cl| cl.iter().any(|&x| model[x.unsigned_abs() as usize] == (x > 0)))
    }
}

/// Tseitin encoding of the AND gates of `c`, treating inputs and latches as
/// free variables.
pub fn tseitin(c: &Circuit) -> Cnf {
    encode_gates(c, |_| true)
}

fn encode_gates(c: &Circuit, keep: impl Fn(&And) -> bool) -> Cnf {
    let true_var = c.max_var() + 1;
    let mut cnf = Cnf {
        num_vars: true_var,
        clauses: vec![vec![true_var as i32]],
        true_var,
    };
    for a in c.ands().iter().filter(|a| keep(a)) {
        let g = a.lhs as i32;
        let x = cnf.lit(a.rhs0);
        let y = cnf.lit(a.rhs1);
        cnf.clauses.push(vec![-g, x]);
        cnf.clauses.push(vec![-g, y]);
        cnf.clauses.push(vec![g, -x, -y]);
    }
    cnf
}

/// Tseitin encoding of the cone of the bad output, with the output asserted.
pub fn tseitin_bad(c: &Circuit) -> Result<Cnf, NetlistError> {
    if !c.is_combinational() {
        return Err(NetlistError::Contract("circuit has latches; unroll it first".into()));
    }
    // only the gates the output depends on
    let mut need = vec![false; c.max_var() as usize + 1];
    need[c.bad().var() as usize] = true;
    for a in c.ands().iter().rev() {
        if need[a.lhs as usize] {
            need[a.rhs0.var() as usize] = true;
            need[a.rhs1.var() as usize] = true;
        }
    }
    let mut cnf = encode_gates(c, |a| need[a.lhs as usize]);
    let b = cnf.lit(c.bad());
    cnf.clauses.push(vec![b]);
    Ok(cnf)
}

pub fn write_dimacs(cnf: &Cnf, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "p cnf {} {}", cnf.num_vars, cnf.clauses.len())?;
    for cl in &cnf.clauses {
        for x in cl {
            write!(out, "{x} ")?;
        }
        writeln!(out, "0")?;
    }
    Ok(())
}

/// Reads a DIMACS solver answer: `s SATISFIABLE` plus `v` lines, or
/// `s UNSATISFIABLE`. Returns `None` for anything else.
pub fn parse_solver_output(text: &str, num_vars: u32) -> Option<Option<Vec<bool>>> {
    let mut status = None;
    let mut model = vec![false; num_vars as usize + 1];
    for line in text.lines() {
        if let Some(s) = line.strip_prefix("s ") {
            status = match s.trim() {
                "SATISFIABLE" => Some(true),
                "UNSATISFIABLE" => Some(false),
                _ => None,
            };
        } else if let Some(v) = line.strip_prefix("v ") {
            for tok in v.split_whitespace() {
                let x: i64 = tok.parse().ok()?;
                if x != 0 && (x.unsigned_abs() as usize) < model.len() {
                    model[x.unsigned_abs() as usize] = x > 0;
                }
            }
        }
    }
    match status? {
        true => Some(Some(model)),
        false => Some(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG: &str = "aag 3 0 2 1 1\n2 4\n4 5\n6\n6 2 4\nl0 t\nl1 c\n";

    #[test]
    fn round_trip_is_byte_exact() {
        let c = parse(FIG).unwrap();
        assert_eq!(c.num_latches(), 2);
        assert_eq!(write(&c), FIG);
        let with_reset = "aag 3 1 2 1 0\n2\n4 4 6\n6 6 2\n4\n";
        assert_eq!(write(&parse(with_reset).unwrap()), with_reset);
    }

    #[test]
    fn reset_field_defaults_to_false() {
        let c = parse("aag 1 0 1 1 0\n2 3\n2\n").unwrap();
        assert_eq!(c.latches()[0].reset, Lit::FALSE);
        let c = parse("aag 1 0 1 1 0\n2 3 2\n2\n").unwrap();
        assert!(c.latches()[0].is_uninitialized());
        let c = parse("aag 1 0 1 1 0\n2 3 1\n2\n").unwrap();
        assert_eq!(c.latches()[0].reset, Lit::TRUE);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(parse("").is_err());
        assert!(parse("aig 1 0 1 1 0\n").is_err());
        assert!(parse("aag 1 1 0 1 0\n3\n2\n").is_err());
        assert!(parse("aag 1 0 0 0 0\n").is_err());
        assert!(parse("aag 1 0 1 1 0\n2 8\n2\n").is_err());
        assert!(parse("aag 2 0 1 1 1\n2 3\n4\n2 2 2\n").is_err());
        // reset cycle
        assert!(matches!(
            parse("aag 2 0 2 1 0\n2 2 4\n4 4 2\n2\n"),
            Err(ParseError::Netlist(NetlistError::ResetCycle { .. }))
        ));
        assert!(parse_unchecked("aag 2 0 2 1 0\n2 2 4\n4 4 2\n2\n").is_ok());
    }

    #[test]
    fn unsorted_and_gates_are_reordered() {
        let c = parse("aag 4 2 0 1 2\n2\n4\n8\n8 6 2\n6 2 4\n").unwrap();
        assert_eq!(c.ands()[0].lhs, 3);
    }

    #[test]
    fn tseitin_matches_evaluation() {
        let c = parse("aag 4 2 0 1 2\n2\n4\n9\n6 2 4\n8 6 3\n").unwrap();
        let cnf = tseitin(&c);
        for bits in 0..4u32 {
            let ins = [bits & 1 == 1, bits & 2 == 2];
            let e = c.eval(&ins, &[]).unwrap();
            let mut model = vec![false; cnf.num_vars as usize + 1];
            for v in 1..=c.max_var() {
                model[v as usize] = e.lit(Lit::new(v, false));
            }
            model[cnf.num_vars as usize] = true;
            assert!(cnf.satisfied_by(&model));
        }
    }

    #[test]
    fn dimacs_output() {
        let c = parse("aag 3 2 0 1 1\n2\n4\n6\n6 2 5\n").unwrap();
        let cnf = tseitin_bad(&c).unwrap();
        let mut buf = Vec::new();
        write_dimacs(&cnf, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("p cnf 4 5\n4 0\n-3 1 0\n"));
        assert_eq!(
            parse_solver_output("s SATISFIABLE\nv 1 -2 3 4 0\n", 4),
            Some(Some(vec![false, true, false, true, true]))
        );
        assert_eq!(parse_solver_output("s UNSATISFIABLE\n", 4), Some(None));
    }
}
