//! A complete DPLL satisfiability solver over CNF.
//!
//! Branching is fixed to the lowest-index unassigned variable, trying
//! `false` first, so the model returned for a satisfiable formula is
//! canonical: the same formula always yields the same assignment. Unit
//! propagation and pure-literal elimination run to fixpoint between
//! decisions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SatError {
    #[error("malformed formula: {0}")]
    MalformedFormula(String),
    #[error("malformed DIMACS input: {0}")]
    Dimacs(String),
}

/// A literal: variable id (>= 1) with a polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit {
    pub var: u32,
    pub positive: bool,
}

impl Lit {
    pub fn pos(var: u32) -> Lit {
        Lit {
            var,
            positive: true,
        }
    }

    pub fn neg(var: u32) -> Lit {
        Lit {
            var,
            positive: false,
        }
    }

    pub fn negated(self) -> Lit {
        Lit {
            var: self.var,
            positive: !self.positive,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CnfFormula {
    pub clauses: Vec<Vec<Lit>>,
    pub num_vars: u32,
}

impl CnfFormula {
    pub fn new(num_vars: u32) -> Self {
        CnfFormula {
            clauses: Vec::new(),
            num_vars,
        }
    }

    pub fn fresh_var(&mut self) -> u32 {
        self.num_vars += 1;
        self.num_vars
    }

    pub fn add_clause(&mut self, lits: impl IntoIterator<Item = Lit>) {
        self.clauses.push(lits.into_iter().collect());
    }

    fn validate(&self) -> Result<(), SatError> {
        for clause in &self.clauses {
            for lit in clause {
                if lit.var == 0 || lit.var > self.num_vars {
                    return Err(SatError::MalformedFormula(format!(
                        "variable {} outside 1..={}",
                        lit.var, self.num_vars
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Appends a unit clause pinning `lit`; used to keep previously synthesized
/// automaton structure intact across incremental runs.
pub fn add_assumption(f: &CnfFormula, lit: Lit) -> CnfFormula {
    let mut out = f.clone();
    out.add_clause([lit]);
    out
}

/// Total assignment over the formula's variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    values: BTreeMap<u32, bool>,
}

impl Assignment {
    pub fn get(&self, var: u32) -> bool {
        *self.values.get(&var).unwrap_or(&false)
    }

    pub fn satisfies(&self, f: &CnfFormula) -> bool {
        f.clauses.iter().all(|clause| {
            clause
                .iter()
                .any(|lit| self.get(lit.var) == lit.positive)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Sat(Assignment),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

struct Searcher<'a> {
    clauses: &'a [Vec<Lit>],
    num_vars: usize,
    /// None = unassigned.
    values: Vec<Option<bool>>,
    /// clauses watching each variable.
    occurs: Vec<Vec<usize>>,
    trail: Vec<u32>,
}

enum Propagation {
    Ok,
    Conflict,
}

enum ClauseState {
    Satisfied,
    Conflict,
    Unit(Lit),
    Open,
}

impl<'a> Searcher<'a> {
    fn new(f: &'a CnfFormula) -> Self {
        let num_vars = f.num_vars as usize;
        let mut occurs = vec![Vec::new(); num_vars + 1];
        for (ci, clause) in f.clauses.iter().enumerate() {
            for lit in clause {
                occurs[lit.var as usize].push(ci);
            }
        }
        for v in occurs.iter_mut() {
            v.dedup();
        }
        Searcher {
            clauses: &f.clauses,
            num_vars,
            values: vec![None; num_vars + 1],
            occurs,
            trail: Vec::new(),
        }
    }

    fn lit_value(&self, lit: Lit) -> Option<bool> {
        self.values[lit.var as usize].map(|v| v == lit.positive)
    }

    fn assign(&mut self, lit: Lit) {
        self.values[lit.var as usize] = Some(lit.positive);
        self.trail.push(lit.var);
    }

    fn backtrack_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let var = self.trail.pop().unwrap();
            self.values[var as usize] = None;
        }
    }

    /// Unit propagation to fixpoint. `qhead` indexes the first trail entry
    /// whose occurrence list has not been scanned yet; a clause can only
    /// become unit or empty when one of its own variables is assigned, so
    /// scanning each newly assigned variable's occurrences reaches the
    /// fixpoint.
    fn propagate(&mut self, mut qhead: usize) -> Propagation {
        while qhead < self.trail.len() {
            let var = self.trail[qhead];
            qhead += 1;
            for i in 0..self.occurs[var as usize].len() {
                let ci = self.occurs[var as usize][i];
                match self.clause_state(ci) {
                    ClauseState::Satisfied | ClauseState::Open => {}
                    ClauseState::Unit(l) => self.assign(l),
                    ClauseState::Conflict => return Propagation::Conflict,
                }
            }
        }
        Propagation::Ok
    }

    fn clause_state(&self, ci: usize) -> ClauseState {
        let mut unassigned: Option<Lit> = None;
        let mut n_unassigned = 0;
        for &lit in &self.clauses[ci] {
            match self.lit_value(lit) {
                Some(true) => return ClauseState::Satisfied,
                Some(false) => {}
                None => {
                    n_unassigned += 1;
                    if unassigned.is_none() {
                        unassigned = Some(lit);
                    }
                }
            }
        }
        match n_unassigned {
            0 => ClauseState::Conflict,
            1 => ClauseState::Unit(unassigned.unwrap()),
            _ => ClauseState::Open,
        }
    }

    /// Assigns pure literals (single polarity across all unsatisfied
    /// clauses) until none remain. Returns false if the subsequent unit
    /// propagation hits a conflict (cannot happen for genuinely pure
    /// literals, kept for safety).
    fn eliminate_pure(&mut self) -> bool {
        loop {
            let mut pos = vec![false; self.num_vars + 1];
            let mut neg = vec![false; self.num_vars + 1];
            for ci in 0..self.clauses.len() {
                if matches!(self.clause_state(ci), ClauseState::Satisfied) {
                    continue;
                }
                for lit in &self.clauses[ci] {
                    if self.lit_value(*lit).is_none() {
                        if lit.positive {
                            pos[lit.var as usize] = true;
                        } else {
                            neg[lit.var as usize] = true;
                        }
                    }
                }
            }
            let mut assigned_any = false;
            for v in 1..=self.num_vars as u32 {
                if self.values[v as usize].is_some() {
                    continue;
                }
                let (p, n) = (pos[v as usize], neg[v as usize]);
                if p ^ n {
                    let mark = self.trail.len();
                    self.assign(Lit {
                        var: v,
                        positive: p,
                    });
                    if matches!(self.propagate(mark), Propagation::Conflict) {
                        return false;
                    }
                    assigned_any = true;
                }
            }
            if !assigned_any {
                return true;
            }
        }
    }

    fn all_satisfied(&self) -> bool {
        (0..self.clauses.len()).all(|ci| matches!(self.clause_state(ci), ClauseState::Satisfied))
    }

    fn next_decision_var(&self) -> Option<u32> {
        (1..=self.num_vars as u32).find(|&v| self.values[v as usize].is_none())
    }

    fn search(&mut self) -> bool {
        if !self.eliminate_pure() {
            return false;
        }
        if self.all_satisfied() {
            return true;
        }
        let var = match self.next_decision_var() {
            Some(v) => v,
            None => return self.all_satisfied(),
        };
        for positive in [false, true] {
            let mark = self.trail.len();
            self.assign(Lit { var, positive });
            if matches!(self.propagate(mark), Propagation::Ok) && self.search() {
                return true;
            }
            self.backtrack_to(mark);
        }
        false
    }
}

/// Complete DPLL search. A `Sat` result carries a total assignment over
/// `1..=num_vars` (variables untouched by the search default to `false`).
pub fn solve(f: &CnfFormula) -> Result<SatResult, SatError> {
    f.validate()?;
    if f.clauses.iter().any(|c| c.is_empty()) {
        return Ok(SatResult::Unsat);
    }
    let mut s = Searcher::new(f);
    // seed propagation with the initial unit clauses
    let units: Vec<Lit> = f
        .clauses
        .iter()
        .filter(|c| c.len() == 1)
        .map(|c| c[0])
        .collect();
    for u in units {
        match s.lit_value(u) {
            Some(true) => {}
            Some(false) => return Ok(SatResult::Unsat),
            None => {
                let mark = s.trail.len();
                s.assign(u);
                if matches!(s.propagate(mark), Propagation::Conflict) {
                    return Ok(SatResult::Unsat);
                }
            }
        }
    }
    if !s.search() {
        return Ok(SatResult::Unsat);
    }
    let values = (1..=f.num_vars)
        .map(|v| (v, s.values[v as usize].unwrap_or(false)))
        .collect();
    let assignment = Assignment { values };
    debug_assert!(assignment.satisfies(f));
    Ok(SatResult::Sat(assignment))
}

pub fn to_dimacs(f: &CnfFormula) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "p cnf {} {}", f.num_vars, f.clauses.len());
    for clause in &f.clauses {
        for lit in clause {
            let v = lit.var as i64;
            let _ = write!(out, "{} ", if lit.positive { v } else { -v });
        }
        let _ = writeln!(out, "0");
    }
    out
}

pub fn from_dimacs(text: &str) -> Result<CnfFormula, SatError> {
    let mut num_vars: Option<u32> = None;
    let mut clauses: Vec<Vec<Lit>> = Vec::new();
    let mut current: Vec<Lit> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("p ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "cnf" {
                return Err(SatError::Dimacs(format!("bad problem line: {line}")));
            }
            num_vars = Some(
                parts[1]
                    .parse()
                    .map_err(|_| SatError::Dimacs(format!("bad var count: {line}")))?,
            );
            continue;
        }
        for tok in line.split_whitespace() {
            let n: i64 = tok
                .parse()
                .map_err(|_| SatError::Dimacs(format!("bad literal: {tok}")))?;
            if n == 0 {
                clauses.push(std::mem::take(&mut current));
            } else {
                current.push(Lit {
                    var: n.unsigned_abs() as u32,
                    positive: n > 0,
                });
            }
        }
    }
    if !current.is_empty() {
        clauses.push(current);
    }
    let num_vars = num_vars.ok_or_else(|| SatError::Dimacs("missing problem line".into()))?;
    let f = CnfFormula { clauses, num_vars };
    f.validate()?;
    Ok(f)
}

/// Exhaustive truth-table check, usable as an oracle for up to ~20 variables.
pub fn brute_force_satisfiable(f: &CnfFormula) -> bool {
    let n = f.num_vars;
    assert!(n <= 20, "oracle limited to small formulas");
    if f.clauses.iter().any(|c| c.is_empty()) {
        return false;
    }
    for bits in 0..(1u64 << n) {
        let sat = f.clauses.iter().all(|clause| {
            clause
                .iter()
                .any(|lit| ((bits >> (lit.var - 1)) & 1 == 1) == lit.positive)
        });
        if sat {
            return true;
        }
    }
    false
}
