//! Partial deterministic finite automata: run semantics, DOT export and a
//! plain-text fixture format.
//!
//! States are numbered from 1; state 1 is always initial. Transitions may be
//! undefined (partial map). Accepting states mark task satisfaction; trap
//! states are unsafe sinks that only appear in fixture automata.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::trace::Label;

pub type StateId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DfaError {
    #[error("label {0} is not in the automaton alphabet")]
    UnknownLabel(String),
    #[error("malformed automaton: {0}")]
    Malformed(String),
    #[error("fixture parse error: {0}")]
    Fixture(String),
    #[error("DOT parse error: {0}")]
    Dot(String),
}

/// Partial deterministic automaton over a label alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfa {
    pub num_states: u32,
    pub alphabet: BTreeSet<Label>,
    pub delta: BTreeMap<(StateId, Label), StateId>,
    pub accepting: BTreeSet<StateId>,
    pub trap: BTreeSet<StateId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected,
    /// A transition was missing before the word was consumed.
    Undefined,
    /// A trap state was entered.
    Trapped,
}

impl Dfa {
    pub const INITIAL: StateId = 1;

    pub fn new(num_states: u32) -> Self {
        Dfa {
            num_states,
            alphabet: BTreeSet::new(),
            delta: BTreeMap::new(),
            accepting: BTreeSet::new(),
            trap: BTreeSet::new(),
        }
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        1..=self.num_states
    }

    pub fn step(&self, state: StateId, label: &Label) -> Option<StateId> {
        self.delta.get(&(state, label.clone())).copied()
    }

    /// Reward-machine stepping: an unknown or undefined label leaves the
    /// state unchanged, mirroring the implicit empty-observation self-loops.
    pub fn step_total(&self, state: StateId, label: &Label) -> StateId {
        self.step(state, label).unwrap_or(state)
    }

    pub fn validate(&self) -> Result<(), DfaError> {
        if self.num_states == 0 {
            return Err(DfaError::Malformed("automaton needs at least one state".into()));
        }
        for (&(s, ref l), &t) in &self.delta {
            if s == 0 || s > self.num_states || t == 0 || t > self.num_states {
                return Err(DfaError::Malformed(format!(
                    "transition {s} -{l}-> {t} out of range"
                )));
            }
            if !self.alphabet.contains(l) {
                return Err(DfaError::Malformed(format!("label {l} not in alphabet")));
            }
        }
        if let Some(s) = self.accepting.intersection(&self.trap).next() {
            return Err(DfaError::Malformed(format!(
                "state {s} is both accepting and trap"
            )));
        }
        for set in [&self.accepting, &self.trap] {
            if let Some(&s) = set.iter().find(|&&s| s == 0 || s > self.num_states) {
                return Err(DfaError::Malformed(format!("state {s} out of range")));
            }
        }
        let unreachable: Vec<StateId> = self
            .states()
            .filter(|s| !self.reachable().contains(s))
            .collect();
        if !unreachable.is_empty() {
            return Err(DfaError::Malformed(format!(
                "states {unreachable:?} unreachable from the initial state"
            )));
        }
        Ok(())
    }

    pub fn reachable(&self) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::from([Self::INITIAL]);
        let mut queue = VecDeque::from([Self::INITIAL]);
        while let Some(s) = queue.pop_front() {
            for (&(from, _), &to) in &self.delta {
                if from == s && seen.insert(to) {
                    queue.push_back(to);
                }
            }
        }
        seen
    }

    /// Runs the automaton over a word. The returned path starts at the
    /// initial state; it stops early on a missing transition (`Undefined`)
    /// or on entering a trap state (`Trapped`).
    pub fn run(&self, word: &[Label]) -> Result<(Vec<StateId>, Verdict), DfaError> {
        let mut path = vec![Self::INITIAL];
        let mut cur = Self::INITIAL;
        if self.trap.contains(&cur) {
            return Ok((path, Verdict::Trapped));
        }
        for l in word {
            if !self.alphabet.contains(l) {
                return Err(DfaError::UnknownLabel(l.as_str().to_string()));
            }
            match self.step(cur, l) {
                None => return Ok((path, Verdict::Undefined)),
                Some(next) => {
                    cur = next;
                    path.push(cur);
                    if self.trap.contains(&cur) {
                        return Ok((path, Verdict::Trapped));
                    }
                }
            }
        }
        let verdict = if self.accepting.contains(&cur) {
            Verdict::Accepted
        } else {
            Verdict::Rejected
        };
        Ok((path, verdict))
    }

    pub fn accepts(&self, word: &[Label]) -> bool {
        matches!(self.run(word), Ok((_, Verdict::Accepted)))
    }

    /// Reward-machine capture: a label outside the alphabet is behaviour the
    /// automaton has never seen (not captured); an in-alphabet label without
    /// a transition leaves the state unchanged. Captured when the final
    /// state is accepting.
    pub fn captures(&self, word: &[Label]) -> bool {
        let mut cur = Self::INITIAL;
        for l in word {
            if !self.alphabet.contains(l) {
                return false;
            }
            cur = self.step_total(cur, l);
            if self.trap.contains(&cur) {
                return false;
            }
        }
        self.accepting.contains(&cur)
    }

    /// Structural containment: every state, transition and accepting flag of
    /// `other` is present verbatim in `self`.
    pub fn contains_structure(&self, other: &Dfa) -> bool {
        other.num_states <= self.num_states
            && other.alphabet.is_subset(&self.alphabet)
            && other.accepting.is_subset(&self.accepting)
            && other
                .delta
                .iter()
                .all(|(k, v)| self.delta.get(k) == Some(v))
    }
}

/// DOT export. Accepting states are double-circled and green, trap states
/// red. Empty-observation self-loops are rendered on every non-trap state
/// that is not accepting, plus the initial state, matching the usual
/// presentation of these automata.
pub fn to_dot(dfa: &Dfa) -> String {
    let mut out = String::from("digraph dfa {\n  rankdir=LR;\n");
    out.push_str("  __start [shape=none, label=\"\", height=0, width=0];\n");
    for s in dfa.states() {
        let mut attrs = vec![format!("label=\"q{s}\"")];
        if dfa.accepting.contains(&s) {
            attrs.push("shape=doublecircle".into());
            attrs.push("style=filled".into());
            attrs.push("fillcolor=\"palegreen\"".into());
        } else if dfa.trap.contains(&s) {
            attrs.push("shape=circle".into());
            attrs.push("style=filled".into());
            attrs.push("fillcolor=\"lightcoral\"".into());
        } else {
            attrs.push("shape=circle".into());
        }
        let _ = writeln!(out, "  q{s} [{}];", attrs.join(", "));
    }
    let _ = writeln!(out, "  __start -> q{};", Dfa::INITIAL);
    for (&(from, ref label), &to) in &dfa.delta {
        let _ = writeln!(out, "  q{from} -> q{to} [label=\"{label}\"];");
    }
    for s in dfa.states() {
        let keeps_loop =
            !dfa.trap.contains(&s) && (!dfa.accepting.contains(&s) || s == Dfa::INITIAL);
        if keeps_loop {
            let _ = writeln!(out, "  q{s} -> q{s} [label=\"\u{2205}\", style=dashed];");
        }
    }
    out.push_str("}\n");
    out
}

/// Parses automata in the shape emitted by [`to_dot`]. Empty-observation
/// self-loops are presentation only and are skipped.
pub fn from_dot(text: &str) -> Result<Dfa, DfaError> {
    let mut accepting = BTreeSet::new();
    let mut trap = BTreeSet::new();
    let mut delta = BTreeMap::new();
    let mut alphabet = BTreeSet::new();
    let mut max_state = 0u32;

    let parse_state = |tok: &str| -> Result<StateId, DfaError> {
        tok.trim()
            .strip_prefix('q')
            .and_then(|n| n.parse::<u32>().ok())
            .ok_or_else(|| DfaError::Dot(format!("bad state token: {tok}")))
    };

    for raw in text.lines() {
        let line = raw.trim().trim_end_matches(';');
        if line.is_empty()
            || line.starts_with("digraph")
            || line.starts_with('}')
            || line.starts_with("rankdir")
            || line.starts_with("__start [")
        {
            continue;
        }
        if let Some((lhs, rhs)) = line.split_once("->") {
            if lhs.trim() == "__start" {
                let init = parse_state(rhs.split('[').next().unwrap_or(rhs))?;
                if init != Dfa::INITIAL {
                    return Err(DfaError::Dot("initial state must be q1".into()));
                }
                continue;
            }
            let from = parse_state(lhs)?;
            let (to_tok, attrs) = match rhs.split_once('[') {
                Some((t, a)) => (t, a),
                None => (rhs, ""),
            };
            let to = parse_state(to_tok)?;
            let label_text = attrs
                .split("label=\"")
                .nth(1)
                .and_then(|rest| rest.split('"').next())
                .ok_or_else(|| DfaError::Dot(format!("edge without label: {line}")))?;
            if label_text == "\u{2205}" {
                continue;
            }
            let label = Label::new(label_text)
                .map_err(|_| DfaError::Dot(format!("empty edge label: {line}")))?;
            alphabet.insert(label.clone());
            delta.insert((from, label), to);
            max_state = max_state.max(from).max(to);
        } else if let Some((name, attrs)) = line.split_once('[') {
            let s = parse_state(name)?;
            max_state = max_state.max(s);
            if attrs.contains("doublecircle") {
                accepting.insert(s);
            } else if attrs.contains("lightcoral") {
                trap.insert(s);
            }
        }
    }
    if max_state == 0 {
        return Err(DfaError::Dot("no states found".into()));
    }
    let dfa = Dfa {
        num_states: max_state,
        alphabet,
        delta,
        accepting,
        trap,
    };
    dfa.validate()?;
    Ok(dfa)
}

/// Plain-text fixture format:
///
/// ```text
/// states 3 initial 1
/// accept 2
/// trap 3
/// trans 1 t 2
/// trans 1 u 3
/// trans 3 u 3
/// ```
pub fn from_fixture(text: &str) -> Result<Dfa, DfaError> {
    let mut lines = text.lines().filter(|l| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    let header = lines
        .next()
        .ok_or_else(|| DfaError::Fixture("empty fixture".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "states" || parts[2] != "initial" || parts[3] != "1" {
        return Err(DfaError::Fixture(format!(
            "expected header 'states <k> initial 1', got '{header}'"
        )));
    }
    let num_states: u32 = parts[1]
        .parse()
        .map_err(|_| DfaError::Fixture(format!("bad state count in '{header}'")))?;
    let mut dfa = Dfa::new(num_states);
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["accept", s] => {
                let s = s
                    .parse()
                    .map_err(|_| DfaError::Fixture(format!("bad accept line: {line}")))?;
                dfa.accepting.insert(s);
            }
            ["trap", s] => {
                let s = s
                    .parse()
                    .map_err(|_| DfaError::Fixture(format!("bad trap line: {line}")))?;
                dfa.trap.insert(s);
            }
            ["trans", from, label, to] => {
                let from = from
                    .parse()
                    .map_err(|_| DfaError::Fixture(format!("bad trans line: {line}")))?;
                let to = to
                    .parse()
                    .map_err(|_| DfaError::Fixture(format!("bad trans line: {line}")))?;
                let label = Label::new(*label)
                    .map_err(|_| DfaError::Fixture(format!("empty label: {line}")))?;
                dfa.alphabet.insert(label.clone());
                if dfa.delta.insert((from, label), to).is_some() {
                    return Err(DfaError::Fixture(format!(
                        "duplicate transition source: {line}"
                    )));
                }
            }
            _ => return Err(DfaError::Fixture(format!("unrecognized line: {line}"))),
        }
    }
    dfa.validate()?;
    Ok(dfa)
}

pub fn to_fixture(dfa: &Dfa) -> String {
    let mut out = format!("states {} initial 1\n", dfa.num_states);
    for s in &dfa.accepting {
        let _ = writeln!(out, "accept {s}");
    }
    for s in &dfa.trap {
        let _ = writeln!(out, "trap {s}");
    }
    for (&(from, ref label), &to) in &dfa.delta {
        let _ = writeln!(out, "trans {from} {label} {to}");
    }
    out
}

/// Canonical relabeling by breadth-first discovery order (labels sorted),
/// used for isomorphism checks between automata over the same alphabet.
pub fn canonical_form(dfa: &Dfa) -> Dfa {
    let mut order: BTreeMap<StateId, StateId> = BTreeMap::new();
    let mut queue = VecDeque::from([Dfa::INITIAL]);
    order.insert(Dfa::INITIAL, 1);
    while let Some(s) = queue.pop_front() {
        for label in &dfa.alphabet {
            if let Some(t) = dfa.step(s, label) {
                let next_id = order.len() as u32 + 1;
                if let std::collections::btree_map::Entry::Vacant(e) = order.entry(t) {
                    e.insert(next_id);
                    queue.push_back(t);
                }
            }
        }
    }
    let mut out = Dfa::new(order.len() as u32);
    out.alphabet = dfa.alphabet.clone();
    for (&(from, ref label), &to) in &dfa.delta {
        if let (Some(&f), Some(&t)) = (order.get(&from), order.get(&to)) {
            out.delta.insert((f, label.clone()), t);
        }
    }
    out.accepting = dfa
        .accepting
        .iter()
        .filter_map(|s| order.get(s).copied())
        .collect();
    out.trap = dfa
        .trap
        .iter()
        .filter_map(|s| order.get(s).copied())
        .collect();
    out
}

pub fn isomorphic(a: &Dfa, b: &Dfa) -> bool {
    canonical_form(a) == canonical_form(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::label;

    fn chain(labels: &[&str]) -> Dfa {
        let mut d = Dfa::new(labels.len() as u32 + 1);
        for (i, l) in labels.iter().enumerate() {
            let lab = label(l);
            d.alphabet.insert(lab.clone());
            d.delta.insert((i as u32 + 1, lab), i as u32 + 2);
        }
        d.accepting.insert(labels.len() as u32 + 1);
        d
    }

    #[test]
    fn run_accepts_task4_word() {
        let d = chain(&["wood", "smithtable"]);
        let (path, verdict) = d.run(&[label("wood"), label("smithtable")]).unwrap();
        assert_eq!(verdict, Verdict::Accepted);
        assert_eq!(path, vec![1, 2, 3]);
    }

    #[test]
    fn empty_word_rejected_at_initial() {
        let d = chain(&["wood", "smithtable"]);
        let (path, verdict) = d.run(&[]).unwrap();
        assert_eq!(verdict, Verdict::Rejected);
        assert_eq!(path, vec![1]);
    }

    #[test]
    fn missing_transition_is_undefined() {
        let d = chain(&["wood", "smithtable"]);
        let (_, verdict) = d.run(&[label("smithtable")]).unwrap();
        assert_eq!(verdict, Verdict::Undefined);
    }

    #[test]
    fn unknown_label_is_an_error() {
        let d = chain(&["wood"]);
        assert_eq!(
            d.run(&[label("gold")]),
            Err(DfaError::UnknownLabel("gold".into()))
        );
    }

    #[test]
    fn frozen_lake_fixture_traps() {
        let text = "states 3 initial 1\naccept 2\ntrap 3\ntrans 1 obj1 2\ntrans 1 u 3\ntrans 3 u 3\n";
        let d = from_fixture(text).unwrap();
        let (path, verdict) = d.run(&[label("u")]).unwrap();
        assert_eq!(verdict, Verdict::Trapped);
        assert_eq!(path, vec![1, 3]);
    }

    #[test]
    fn fixture_round_trip() {
        let d = chain(&["a", "b"]);
        let back = from_fixture(&to_fixture(&d)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn fixture_rejects_bad_header() {
        assert!(from_fixture("states x initial 1").is_err());
        assert!(from_fixture("hello").is_err());
    }

    #[test]
    fn dot_export_counts_for_task4_shape() {
        let d = chain(&["wood", "smithtable"]);
        let dot = to_dot(&d);
        let labeled_edges = dot
            .lines()
            .filter(|l| l.contains("->") && l.contains("label=") && !l.contains('\u{2205}'))
            .filter(|l| !l.contains("__start"))
            .count();
        let loops = dot.lines().filter(|l| l.contains('\u{2205}')).count();
        let nodes = dot
            .lines()
            .filter(|l| l.contains("[") && l.contains("label=\"q") && !l.contains("->"))
            .count();
        assert_eq!(nodes, 3);
        assert_eq!(labeled_edges, 2);
        assert_eq!(loops, 2);
    }

    #[test]
    fn single_accepting_state_keeps_empty_loop() {
        let mut d = Dfa::new(1);
        d.accepting.insert(1);
        let dot = to_dot(&d);
        assert_eq!(dot.lines().filter(|l| l.contains('\u{2205}')).count(), 1);
    }

    #[test]
    fn dot_round_trip_is_isomorphic() {
        let d = chain(&["wood", "grass", "iron", "crafttable"]);
        let back = from_dot(&to_dot(&d)).unwrap();
        assert!(isomorphic(&back, &d));
    }

    #[test]
    fn structural_containment() {
        let small = chain(&["a"]);
        let mut big = chain(&["a"]);
        big.num_states = 3;
        big.alphabet.insert(label("b"));
        big.delta.insert((2, label("b")), 3);
        big.accepting.insert(3);
        assert!(big.contains_structure(&small));
        assert!(!small.contains_structure(&big));
    }

    #[test]
    fn unreachable_states_fail_validation() {
        let mut d = chain(&["a"]);
        d.num_states = 3;
        assert!(matches!(d.validate(), Err(DfaError::Malformed(_))));
    }
}
