//! Episode traces, the label vocabulary and the prefix tree acceptor.
//!
//! Traces are finite sequences of non-empty labels observed during one
//! episode; the empty observation is represented by `Option::None` and is
//! stripped before a trace enters the store. Positive traces are the only
//! ones that shape the synthesized automaton; proper prefixes of positive
//! traces that are not themselves stored as positive act as reject samples.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("label must be a non-empty token")]
    EmptyLabel,
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("sample contains no positive trace")]
    EmptySample,
    #[error("malformed trace record: {0}")]
    Malformed(String),
}

/// A non-empty observation token, e.g. `wood`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(String);

impl Label {
    pub fn new(name: impl Into<String>) -> Result<Self, TraceError> {
        let name = name.into();
        if name.is_empty() {
            return Err(TraceError::EmptyLabel);
        }
        Ok(Label(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Convenience for tests and fixtures; panics on empty names.
pub fn label(name: &str) -> Label {
    Label::new(name).expect("non-empty label")
}

/// One episode's compressed label sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trace {
    pub labels: Vec<Label>,
    pub positive: bool,
}

impl Trace {
    pub fn new(labels: Vec<Label>, positive: bool) -> Result<Self, TraceError> {
        if positive && labels.is_empty() {
            return Err(TraceError::InvalidTrace(
                "positive trace must contain at least one label".into(),
            ));
        }
        Ok(Trace { labels, positive })
    }
}

/// Drops empty observations from a raw episode; `completed` marks the episode
/// as positive. A completed episode that never produced a label is invalid.
pub fn compress_episode(
    raw: &[Option<Label>],
    completed: bool,
) -> Result<Trace, TraceError> {
    let labels: Vec<Label> = raw.iter().filter_map(|l| l.clone()).collect();
    if completed && labels.is_empty() {
        return Err(TraceError::InvalidTrace(
            "completed episode produced no labels".into(),
        ));
    }
    Trace::new(labels, completed)
}

/// Label-change view of a sequence: runs of the same label collapse to one
/// occurrence. Lingering on or bouncing against a labeled cell re-emits its
/// label; for behaviour identification only the changes matter.
pub fn collapse_consecutive(labels: &[Label]) -> Vec<Label> {
    let mut out: Vec<Label> = Vec::with_capacity(labels.len());
    for l in labels {
        if out.last() != Some(l) {
            out.push(l.clone());
        }
    }
    out
}

/// Reported by [`TraceStore::add_trace`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaReport {
    pub new_labels: Vec<Label>,
    pub new_behaviour: bool,
}

/// Append-only store of episode traces with a monotonically growing vocabulary.
///
/// Single writer; readers may share a snapshot between mutations.
#[derive(Debug, Clone, Default)]
pub struct TraceStore {
    traces: Vec<Trace>,
    vocabulary: BTreeSet<Label>,
    seen: HashSet<Trace>,
}

impl TraceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn vocabulary(&self) -> &BTreeSet<Label> {
        &self.vocabulary
    }

    pub fn positive_traces(&self) -> impl Iterator<Item = &Trace> {
        self.traces.iter().filter(|t| t.positive)
    }

    pub fn add_trace(&mut self, trace: Trace) -> DeltaReport {
        let mut new_labels = Vec::new();
        for l in &trace.labels {
            if self.vocabulary.insert(l.clone()) {
                new_labels.push(l.clone());
            }
        }
        let new_behaviour = self.seen.insert(trace.clone());
        self.traces.push(trace);
        DeltaReport {
            new_labels,
            new_behaviour,
        }
    }

    /// The distinct positive label sequences, deduplicated.
    pub fn positive_words(&self) -> BTreeSet<Vec<Label>> {
        self.positive_traces().map(|t| t.labels.clone()).collect()
    }

    pub fn read_jsonl(reader: impl BufRead) -> Result<Self, TraceError> {
        let mut store = TraceStore::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| TraceError::Malformed(format!("line {}: {e}", i + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Trace = serde_json::from_str(&line)
                .map_err(|e| TraceError::Malformed(format!("line {}: {e}", i + 1)))?;
            let rec = Trace::new(rec.labels, rec.positive)?;
            for l in &rec.labels {
                if l.as_str().is_empty() {
                    return Err(TraceError::EmptyLabel);
                }
            }
            store.add_trace(rec);
        }
        Ok(store)
    }

    pub fn write_jsonl(&self, mut writer: impl Write) -> std::io::Result<()> {
        for t in &self.traces {
            let line = serde_json::to_string(t).expect("trace serializes");
            writeln!(writer, "{line}")?;
        }
        Ok(())
    }
}

/// Classification of a prefix-tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Accept,
    Reject,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct PtaNode {
    pub class: NodeClass,
    pub children: BTreeMap<Label, usize>,
    /// Word reaching this node, for diagnostics and oracle checks.
    pub word: Vec<Label>,
}

/// Prefix tree acceptor over the stored positive traces.
///
/// Node 0 is the root (empty word). Terminal nodes of positive traces are
/// `Accept`; every other node is a proper prefix of some positive trace and
/// is `Reject`.
#[derive(Debug, Clone)]
pub struct PrefixTree {
    pub nodes: Vec<PtaNode>,
    pub alphabet: BTreeSet<Label>,
}

impl PrefixTree {
    pub fn root(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges(&self) -> Vec<(usize, Label, usize)> {
        let mut out = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            for (l, &c) in &n.children {
                out.push((i, l.clone(), c));
            }
        }
        out
    }

    pub fn accept_words(&self) -> BTreeSet<Vec<Label>> {
        self.nodes
            .iter()
            .filter(|n| n.class == NodeClass::Accept)
            .map(|n| n.word.clone())
            .collect()
    }

    pub fn reject_words(&self) -> BTreeSet<Vec<Label>> {
        self.nodes
            .iter()
            .filter(|n| n.class == NodeClass::Reject)
            .map(|n| n.word.clone())
            .collect()
    }
}

/// Builds the prefix tree acceptor from the store's positive traces.
pub fn build_prefix_tree(store: &TraceStore) -> Result<PrefixTree, TraceError> {
    let positives = store.positive_words();
    if positives.is_empty() {
        return Err(TraceError::EmptySample);
    }
    let mut tree = PrefixTree {
        nodes: vec![PtaNode {
            class: NodeClass::Reject,
            children: BTreeMap::new(),
            word: Vec::new(),
        }],
        alphabet: BTreeSet::new(),
    };
    for word in &positives {
        let mut cur = 0usize;
        for l in word {
            tree.alphabet.insert(l.clone());
            let next = match tree.nodes[cur].children.get(l) {
                Some(&n) => n,
                None => {
                    let mut w = tree.nodes[cur].word.clone();
                    w.push(l.clone());
                    let id = tree.nodes.len();
                    tree.nodes.push(PtaNode {
                        class: NodeClass::Reject,
                        children: BTreeMap::new(),
                        word: w,
                    });
                    tree.nodes[cur].children.insert(l.clone(), id);
                    id
                }
            };
            cur = next;
        }
        tree.nodes[cur].class = NodeClass::Accept;
    }
    Ok(tree)
}
