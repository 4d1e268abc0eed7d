//! Periodic signals extracted from cube lassos, and candidate selection.

use std::collections::HashMap;

use crate::netlist::Circuit;
use crate::tersim::Lasso;
use crate::transform::Pipeline;

/// Behaviour of one latch in one phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    False,
    True,
    /// Equal to another latch of the same phase, negated if the flag is set.
    Latch {
        latch: usize,
        negated: bool,
    },
    /// Unconstrained.
    Free,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PeriodicSignal {
    pub duration: usize,
    pub phases: Vec<Phase>,
}

impl PeriodicSignal {
    pub fn free(duration: usize, n: usize) -> PeriodicSignal {
        PeriodicSignal {
            duration,
            phases: vec![Phase::Free; n],
        }
    }

    pub fn is_free(&self) -> bool {
        self.phases.iter().all(|p| *p == Phase::Free)
    }
}

pub const DEFAULT_CAP: usize = 8;

/// All `(d, n)` with `n | ω+1`, `n | δ−d`, `d ≤ δ`, and both within caps,
/// ordered by `n` then `d`. `(0, 1)` is always present.
pub fn enumerate_candidates(l: &Lasso, max_d: usize, max_n: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(0, 1)];
    for n in 1..=max_n.max(1) {
        if !l.loop_len().is_multiple_of(n) {
            continue;
        }
        for d in 0..=l.delta.min(max_d) {
            if (l.delta - d).is_multiple_of(n) && (d, n) != (0, 1) {
                out.push((d, n));
            }
        }
    }
    out
}

/// Cube indices constraining phase `i`.
pub fn phase_indices(l: &Lasso, d: usize, n: usize, i: usize) -> Vec<usize> {
    let last = l.delta + l.omega;
    (d + i..=last).step_by(n).collect()
}

pub fn extract_signals(num_latches: usize, l: &Lasso, d: usize, n: usize) -> Vec<PeriodicSignal> {
    let mut signals: Vec<PeriodicSignal> = (0..num_latches).map(|_| PeriodicSignal::free(d, n)).collect();
    let mut dense: Vec<Vec<Option<bool>>> = Vec::with_capacity(l.cubes.len());
    for cube in &l.cubes {
        let mut row = vec![None; num_latches];
        for &(i, b) in cube {
            row[i] = Some(b);
        }
        dense.push(row);
    }
    for phase in 0..n {
        let idx = phase_indices(l, d, n, phase);
        // sign string normalised to start with `false`, keyed to its members
        let mut pool: HashMap<Vec<bool>, Vec<(usize, bool)>> = HashMap::new();
        for latch in 0..num_latches {
            let bits: Option<Vec<bool>> = idx.iter().map(|&k| dense[k][latch]).collect();
            let Some(bits) = bits else { continue };
            if bits.iter().all(|&b| b) {
                signals[latch].phases[phase] = Phase::True;
            } else if bits.iter().all(|&b| !b) {
                signals[latch].phases[phase] = Phase::False;
            } else {
                let flip = bits[0];
                let key: Vec<bool> = bits.iter().map(|&b| b ^ flip).collect();
                pool.entry(key).or_default().push((latch, flip));
            }
        }
        for members in pool.values() {
            let (rep, rep_flip) = members[0];
            for &(latch, flip) in &members[1..] {
                debug_assert!(idx
                    .iter()
                    .all(|&k| (dense[k][latch] == dense[k][rep]) == (flip == rep_flip)));
                signals[latch].phases[phase] = Phase::Latch {
                    latch: rep,
                    negated: flip != rep_flip,
                };
            }
        }
    }
    signals
}

pub fn all_free(signals: &[PeriodicSignal]) -> bool {
    signals.iter().all(|s| s.is_free())
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub lasso: Option<Lasso>,
    pub d: usize,
    pub n: usize,
    pub signals: Vec<PeriodicSignal>,
    /// Latch count after the full pipeline, `None` if the pipeline failed.
    pub score: Option<usize>,
    pub pipeline: Option<Pipeline>,
}

impl Candidate {
    pub fn identity(c: &Circuit) -> Candidate {
        Candidate {
            lasso: None,
            d: 0,
            n: 1,
            signals: (0..c.num_latches()).map(|_| PeriodicSignal::free(0, 1)).collect(),
            score: None,
            pipeline: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.d == 0 && self.n == 1 && all_free(&self.signals)
    }
}

/// Runs the pipeline and records the final latch count.
pub fn score_candidate(c: &Circuit, cand: &mut Candidate) -> Option<usize> {
    match Pipeline::run(c, cand.lasso.as_ref(), cand.d, cand.n, &cand.signals) {
        Ok(p) => {
            cand.score = Some(p.reduced.num_latches());
            cand.pipeline = Some(p);
        }
        Err(_) => {
            cand.score = None;
            cand.pipeline = None;
        }
    }
    cand.score
}

/// Index of the candidate with the fewest latches; ties go to smaller `n`,
/// then smaller `d`, then the earlier candidate.
pub fn select_best(cands: &[Candidate]) -> Option<usize> {
    (0..cands.len())
        .filter(|&i| cands[i].score.is_some())
        .min_by_key(|&i| (cands[i].score.unwrap(), cands[i].n, cands[i].d, i))
}

#[derive(Clone, Copy, Debug)]
pub struct SearchConfig {
    pub max_d: usize,
    pub max_n: usize,
    pub max_steps: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_d: DEFAULT_CAP,
            max_n: DEFAULT_CAP,
            max_steps: 1000,
        }
    }
}

/// Identity candidate followed by every `(d, n)` of every lasso rotation,
/// skipping duplicate signal sets.
pub fn collect_candidates(c: &Circuit, cfg: &SearchConfig) -> Vec<Candidate> {
    let mut out = vec![Candidate::identity(c)];
    let lassos = crate::tersim::find_lassos(c, cfg.max_steps);
    let mut seen = std::collections::HashSet::new();
    for base in &lassos {
        for l in base.rotations() {
            for (d, n) in enumerate_candidates(&l, cfg.max_d, cfg.max_n) {
                let signals = extract_signals(c.num_latches(), &l, d, n);
                if d == 0 && n == 1 && all_free(&signals) {
                    continue;
                }
                if !seen.insert((d, n, signals.clone())) {
                    continue;
                }
                out.push(Candidate {
                    lasso: Some(l.clone()),
                    d,
                    n,
                    signals,
                    score: None,
                    pipeline: None,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig5_lasso() -> Lasso {
        Lasso {
            cubes: vec![
                vec![(0, false), (1, false)],
                vec![(0, false), (1, true)],
                vec![(0, true), (1, false)],
            ],
            delta: 1,
            omega: 1,
        }
    }

    #[test]
    fn candidate_enumeration() {
        let l = fig5_lasso();
        assert_eq!(enumerate_candidates(&l, 8, 8), vec![(0, 1), (1, 1), (1, 2)]);
        let rot = &l.rotations()[1];
        assert!(enumerate_candidates(rot, 8, 8).contains(&(0, 2)));
        let fig1 = Lasso {
            cubes: vec![vec![]; 7],
            delta: 3,
            omega: 3,
        };
        assert!(enumerate_candidates(&fig1, 8, 8).contains(&(1, 2)));
        let trivial = Lasso {
            cubes: vec![vec![]],
            delta: 0,
            omega: 0,
        };
        assert_eq!(enumerate_candidates(&trivial, 8, 8), vec![(0, 1)]);
    }

    #[test]
    fn enumeration_respects_caps() {
        let l = Lasso {
            cubes: vec![vec![]; 40],
            delta: 20,
            omega: 19,
        };
        for (d, n) in enumerate_candidates(&l, 8, 8) {
            assert!(d <= 8 && n <= 8);
            assert_eq!(l.loop_len() % n, 0);
            assert_eq!((l.delta - d) % n, 0);
        }
    }

    #[test]
    fn fig5_signals() {
        let rot = &fig5_lasso().rotations()[1];
        let s = extract_signals(2, rot, 0, 2);
        // latch 0 is t, latch 1 is c
        assert_eq!(s[1].phases, vec![Phase::False, Phase::True]);
        assert_eq!(s[0].phases, vec![Phase::Free, Phase::False]);
    }

    #[test]
    fn equivalent_and_antivalent_latches() {
        let l = Lasso {
            cubes: vec![
                vec![(0, false), (1, false), (2, true)],
                vec![(0, true), (1, true), (2, false)],
            ],
            delta: 0,
            omega: 1,
        };
        let s = extract_signals(3, &l, 0, 1);
        assert_eq!(s[0].phases, vec![Phase::Free]);
        assert_eq!(
            s[1].phases,
            vec![Phase::Latch {
                latch: 0,
                negated: false
            }]
        );
        assert_eq!(
            s[2].phases,
            vec![Phase::Latch {
                latch: 0,
                negated: true
            }]
        );
    }

    #[test]
    fn empty_cubes_are_free() {
        let l = Lasso {
            cubes: vec![vec![], vec![]],
            delta: 0,
            omega: 1,
        };
        assert!(all_free(&extract_signals(3, &l, 0, 2)));
    }

    #[test]
    fn tie_break() {
        let mk = |score, n, d| Candidate {
            lasso: None,
            d,
            n,
            signals: vec![],
            score: Some(score),
            pipeline: None,
        };
        let cands = vec![mk(5, 1, 0), mk(3, 2, 0), mk(3, 4, 0)];
        assert_eq!(select_best(&cands), Some(1));
        assert_eq!(select_best(&cands[..1]), Some(0));
    }
}
