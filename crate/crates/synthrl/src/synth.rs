//! Exact identification of the minimal automaton capturing the observed
//! positive behaviour, reduced to SAT, plus incremental superset extension.
//!
//! The encoding is graph-coloring style over the prefix-tree nodes:
//! exactly-one color per node, the root colored 1, transition witnesses
//! `y(l,c,c')` tied to tree edges, pairwise determinism per `(label, color)`
//! and acceptance flags `z(c)`. On top of that, nodes with different
//! suffix languages in the sample may not share a color, which pins the
//! accepted language to exactly the positive sample; without it the chain
//! automata collapse into over-general loops. Iterative deepening on the
//! state count yields the minimum.
//!
//! `extend` re-synthesizes under unit-clause assumptions that pin every
//! transition and accepting flag of the previous automaton, so the result
//! always contains the predecessor verbatim and per-state learners attached
//! to it stay valid. Where those pins force a node onto an old state, the
//! node's freshness constraints are waived rather than failing the run.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::dfa::{Dfa, StateId};
use crate::sat::{solve, Assignment, CnfFormula, Lit, SatResult};
use crate::trace::{Label, NodeClass, PrefixTree};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("no consistent automaton with at most {k_max} states")]
    SizeBoundExceeded { k_max: u32 },
    #[error("synthesis input error: {0}")]
    Input(String),
}

/// Interned suffix-language classes. Two nodes share a class exactly when
/// the same continuations lead to accepting nodes. Children always carry
/// larger ids than their parent, so one reverse sweep suffices.
fn suffix_classes(tree: &PrefixTree) -> Vec<usize> {
    let n = tree.len();
    let mut class = vec![0usize; n];
    let mut intern: HashMap<(bool, Vec<(Label, usize)>), usize> = HashMap::new();
    for v in (0..n).rev() {
        let node = &tree.nodes[v];
        let key = (
            node.class == NodeClass::Accept,
            node.children
                .iter()
                .map(|(l, &c)| (l.clone(), class[c]))
                .collect::<Vec<_>>(),
        );
        let next = intern.len();
        class[v] = *intern.entry(key).or_insert(next);
    }
    class
}

fn bfs_order(tree: &PrefixTree) -> Vec<usize> {
    let mut order = Vec::with_capacity(tree.len());
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &c in tree.nodes[v].children.values() {
            queue.push_back(c);
        }
    }
    order
}

/// One representative node per suffix class, in breadth-first discovery
/// order. Representatives are pairwise distinguishable, so pinning the j-th
/// one to color j breaks the color symmetry without losing models.
fn class_reps(tree: &PrefixTree, class: &[usize]) -> Vec<usize> {
    let mut seen = HashSet::new();
    let mut reps = Vec::new();
    for &v in &bfs_order(tree) {
        if seen.insert(class[v]) {
            reps.push(v);
        }
    }
    reps
}

struct Encoding {
    k: u32,
    n_nodes: usize,
    labels: Vec<Label>,
}

impl Encoding {
    fn new(tree: &PrefixTree, extra_alphabet: Option<&BTreeSet<Label>>, k: u32) -> Self {
        let mut alphabet = tree.alphabet.clone();
        if let Some(extra) = extra_alphabet {
            alphabet.extend(extra.iter().cloned());
        }
        Encoding {
            k,
            n_nodes: tree.len(),
            labels: alphabet.into_iter().collect(),
        }
    }

    fn label_index(&self, l: &Label) -> usize {
        self.labels.binary_search(l).expect("label in alphabet")
    }

    /// Node v takes color c.
    fn x(&self, v: usize, c: u32) -> Lit {
        Lit::pos(v as u32 * self.k + c)
    }

    /// Label l maps color c to color c'.
    fn y(&self, l: usize, c: u32, c2: u32) -> Lit {
        let base = self.n_nodes as u32 * self.k;
        Lit::pos(base + (l as u32 * self.k + (c - 1)) * self.k + c2)
    }

    /// Color c is accepting.
    fn z(&self, c: u32) -> Lit {
        let base = self.n_nodes as u32 * self.k + self.labels.len() as u32 * self.k * self.k;
        Lit::pos(base + c)
    }

    fn num_vars(&self) -> u32 {
        self.n_nodes as u32 * self.k + self.labels.len() as u32 * self.k * self.k + self.k
    }
}

/// Base clause groups shared by fresh synthesis and extension.
fn encode_base(tree: &PrefixTree, enc: &Encoding, f: &mut CnfFormula) {
    let k = enc.k;
    // root takes color 1
    f.add_clause([enc.x(0, 1)]);
    for v in 0..enc.n_nodes {
        // at least one color
        f.add_clause((1..=k).map(|c| enc.x(v, c)));
        // at most one color
        for c in 1..=k {
            for c2 in (c + 1)..=k {
                f.add_clause([enc.x(v, c).negated(), enc.x(v, c2).negated()]);
            }
        }
    }
    // a tree edge witnesses the corresponding transition
    for (v, label, w) in tree.edges() {
        let l = enc.label_index(&label);
        for c in 1..=k {
            for c2 in 1..=k {
                f.add_clause([
                    enc.x(v, c).negated(),
                    enc.x(w, c2).negated(),
                    enc.y(l, c, c2),
                ]);
            }
        }
    }
    // determinism: at most one target per (label, color)
    for l in 0..enc.labels.len() {
        for c in 1..=k {
            for t1 in 1..=k {
                for t2 in (t1 + 1)..=k {
                    f.add_clause([enc.y(l, c, t1).negated(), enc.y(l, c, t2).negated()]);
                }
            }
        }
    }
}

fn encode_fresh(tree: &PrefixTree, class: &[usize], reps: &[usize], k: u32) -> (CnfFormula, Encoding) {
    let enc = Encoding::new(tree, None, k);
    let mut f = CnfFormula::new(enc.num_vars());
    encode_base(tree, &enc, &mut f);
    // acceptance flags
    for (v, node) in tree.nodes.iter().enumerate() {
        for c in 1..=k {
            match node.class {
                NodeClass::Accept => f.add_clause([enc.x(v, c).negated(), enc.z(c)]),
                NodeClass::Reject => f.add_clause([enc.x(v, c).negated(), enc.z(c).negated()]),
                NodeClass::Unknown => {}
            }
        }
    }
    // distinguishable nodes never share a color
    for u in 0..enc.n_nodes {
        for v in (u + 1)..enc.n_nodes {
            if class[u] != class[v] {
                for c in 1..=k {
                    f.add_clause([enc.x(u, c).negated(), enc.x(v, c).negated()]);
                }
            }
        }
    }
    // symmetry breaking: the j-th class representative takes color j
    for (j, &rep) in reps.iter().enumerate() {
        let color = j as u32 + 1;
        if color <= k {
            f.add_clause([enc.x(rep, color)]);
        }
    }
    (f, enc)
}

/// Colors implied by following the pinned transitions of `old` along the
/// tree. `None` marks nodes the pins do not reach.
fn forced_coloring(old: &Dfa, tree: &PrefixTree) -> Vec<Option<StateId>> {
    let mut forced = vec![None; tree.len()];
    forced[0] = Some(Dfa::INITIAL);
    for &v in &bfs_order(tree) {
        let Some(c) = forced[v] else { continue };
        for (l, &w) in &tree.nodes[v].children {
            if let Some(t) = old.step(c, l) {
                forced[w] = Some(t);
            }
        }
    }
    forced
}

fn encode_extend(
    tree: &PrefixTree,
    class: &[usize],
    old: &Dfa,
    forced: &[Option<StateId>],
    k: u32,
) -> (CnfFormula, Encoding) {
    let enc = Encoding::new(tree, Some(&old.alphabet), k);
    let mut f = CnfFormula::new(enc.num_vars());
    encode_base(tree, &enc, &mut f);
    // acceptance; nodes welded onto old structure by the pins may conflict
    // with pinned accepting flags, so their reject constraint is waived
    for (v, node) in tree.nodes.iter().enumerate() {
        for c in 1..=k {
            match node.class {
                NodeClass::Accept => f.add_clause([enc.x(v, c).negated(), enc.z(c)]),
                NodeClass::Reject if forced[v].is_none() => {
                    f.add_clause([enc.x(v, c).negated(), enc.z(c).negated()])
                }
                _ => {}
            }
        }
    }
    // distinguishability, skipping pairs the pins already decided
    let mut exclusions: BTreeSet<(usize, StateId)> = BTreeSet::new();
    for u in 0..enc.n_nodes {
        for v in (u + 1)..enc.n_nodes {
            if class[u] == class[v] {
                continue;
            }
            match (forced[u], forced[v]) {
                (None, None) => {
                    for c in 1..=k {
                        f.add_clause([enc.x(u, c).negated(), enc.x(v, c).negated()]);
                    }
                }
                (Some(cu), None) => {
                    exclusions.insert((v, cu));
                }
                (None, Some(cv)) => {
                    exclusions.insert((u, cv));
                }
                (Some(_), Some(_)) => {}
            }
        }
    }
    for (v, c) in exclusions {
        f.add_clause([enc.x(v, c).negated()]);
    }
    // pin the old structure
    for (&(s, ref l), &t) in &old.delta {
        f.add_clause([enc.y(enc.label_index(l), s, t)]);
    }
    for &s in &old.accepting {
        f.add_clause([enc.z(s)]);
    }
    for (v, c) in forced.iter().enumerate() {
        if let Some(c) = c {
            f.add_clause([enc.x(v, *c)]);
        }
    }
    (f, enc)
}

fn decode(
    tree: &PrefixTree,
    enc: &Encoding,
    model: &Assignment,
    old: Option<&Dfa>,
) -> Dfa {
    let k = enc.k;
    let color: Vec<StateId> = (0..enc.n_nodes)
        .map(|v| {
            (1..=k)
                .find(|&c| model.get(enc.x(v, c).var))
                .expect("exactly one color per node")
        })
        .collect();
    let mut dfa = Dfa::new(k);
    dfa.alphabet = enc.labels.iter().cloned().collect();
    if let Some(old) = old {
        dfa.delta = old.delta.clone();
        dfa.accepting = old.accepting.clone();
        dfa.trap = old.trap.clone();
    }
    for (v, label, w) in tree.edges() {
        dfa.delta.insert((color[v], label), color[w]);
    }
    for c in 1..=k {
        if model.get(enc.z(c).var) {
            dfa.accepting.insert(c);
        }
    }
    debug_assert_eq!(dfa.validate(), Ok(()));
    dfa
}

/// Minimal automaton consistent with the prefix tree: positives accepted,
/// reject prefixes not accepted, and no words beyond the sample accepted.
/// Iterative deepening over the state count finds the minimum.
pub fn synthesize(tree: &PrefixTree, k_max: u32) -> Result<Dfa, SynthError> {
    if k_max < 1 {
        return Err(SynthError::Input("k_max must be at least 1".into()));
    }
    if tree.is_empty() {
        return Err(SynthError::Input("empty prefix tree".into()));
    }
    let class = suffix_classes(tree);
    let reps = class_reps(tree, &class);
    for k in 1..=k_max {
        let (f, enc) = encode_fresh(tree, &class, &reps, k);
        if let SatResult::Sat(model) = solve(&f).expect("encoding is well-formed") {
            return Ok(decode(tree, &enc, &model, None));
        }
    }
    Err(SynthError::SizeBoundExceeded { k_max })
}

/// Extends a previously synthesized automaton to cover new behaviour. The
/// result contains `old` verbatim (states, transitions, accepting flags);
/// when `old` already accepts every positive word it is returned unchanged.
pub fn extend(old: &Dfa, tree: &PrefixTree, k_max: u32) -> Result<Dfa, SynthError> {
    let explained = tree
        .accept_words()
        .iter()
        .all(|w| old.accepts(w));
    if explained {
        return Ok(old.clone());
    }
    let class = suffix_classes(tree);
    let forced = forced_coloring(old, tree);
    for k in old.num_states.max(1)..=k_max {
        let (f, enc) = encode_extend(tree, &class, old, &forced, k);
        if let SatResult::Sat(model) = solve(&f).expect("encoding is well-formed") {
            let out = decode(tree, &enc, &model, Some(old));
            debug_assert!(out.contains_structure(old));
            return Ok(out);
        }
    }
    Err(SynthError::SizeBoundExceeded { k_max })
}

/// Test oracle: exhaustively enumerates node colorings by ascending state
/// count and returns the first automaton that accepts exactly the sample.
/// Independent of the SAT route.
pub fn brute_force_min_dfa(tree: &PrefixTree, k_max: u32) -> Result<Dfa, SynthError> {
    if tree.is_empty() {
        return Err(SynthError::Input("empty prefix tree".into()));
    }
    let n = tree.len();
    // parent edge per node; node 0 is the root
    let mut parent: Vec<Option<(usize, Label)>> = vec![None; n];
    for (v, l, w) in tree.edges() {
        parent[w] = Some((v, l));
    }
    let positives = tree.accept_words();

    struct Search<'a> {
        tree: &'a PrefixTree,
        parent: &'a [Option<(usize, Label)>],
        positives: &'a BTreeSet<Vec<Label>>,
        k: u32,
        coloring: Vec<u32>,
        delta: BTreeMap<(u32, Label), u32>,
        accept_mark: Vec<Option<bool>>,
    }

    impl Search<'_> {
        /// `used` is the highest color assigned so far; allowing at most
        /// `used + 1` for the next node enumerates colorings up to color
        /// renaming, which loses no candidates since every constraint is
        /// invariant under renaming.
        fn go(&mut self, v: usize, used: u32) -> bool {
            if v == self.tree.len() {
                return self.exact();
            }
            let max_color = if v == 0 { 1 } else { self.k.min(used + 1) };
            for c in 1..=max_color {
                let node_accept = self.tree.nodes[v].class == NodeClass::Accept;
                let prev_mark = self.accept_mark[c as usize];
                if let Some(m) = prev_mark {
                    if m != node_accept {
                        continue;
                    }
                }
                let mut inserted_edge = None;
                if let Some((p, l)) = &self.parent[v] {
                    let key = (self.coloring[*p], l.clone());
                    match self.delta.get(&key) {
                        Some(&t) if t != c => continue,
                        Some(_) => {}
                        None => {
                            self.delta.insert(key.clone(), c);
                            inserted_edge = Some(key);
                        }
                    }
                }
                self.coloring[v] = c;
                self.accept_mark[c as usize] = Some(node_accept);
                // transitions and accepting marks only grow along a branch,
                // so a cycle or an accepted word outside the sample can
                // never be repaired later
                let viable = (inserted_edge.is_none() && prev_mark == Some(node_accept))
                    || (!self.has_cycle() && !self.over_accepts());
                if viable && self.go(v + 1, used.max(c)) {
                    return true;
                }
                self.accept_mark[c as usize] = prev_mark;
                if let Some(key) = inserted_edge {
                    self.delta.remove(&key);
                }
            }
            false
        }

        fn has_cycle(&self) -> bool {
            let mut adj: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
            for ((s, _), &t) in &self.delta {
                adj.entry(*s).or_default().push(t);
            }
            let mut state = vec![0u8; self.k as usize + 1];
            fn dfs(s: u32, adj: &BTreeMap<u32, Vec<u32>>, state: &mut [u8]) -> bool {
                state[s as usize] = 1;
                if let Some(next) = adj.get(&s) {
                    for &t in next {
                        match state[t as usize] {
                            1 => return true,
                            0 => {
                                if dfs(t, adj, state) {
                                    return true;
                                }
                            }
                            _ => {}
                        }
                    }
                }
                state[s as usize] = 2;
                false
            }
            for s in adj.keys().copied().collect::<Vec<_>>() {
                if state[s as usize] == 0 && dfs(s, &adj, &mut state) {
                    return true;
                }
            }
            false
        }

        /// Some word spelled by the partial transition graph already reaches
        /// an accepting-marked state without being in the sample. Assumes
        /// the graph is acyclic (checked first).
        fn over_accepts(&self) -> bool {
            let mut adj: BTreeMap<u32, Vec<(Label, u32)>> = BTreeMap::new();
            for ((s, l), &t) in &self.delta {
                adj.entry(*s).or_default().push((l.clone(), t));
            }
            let mut stack = vec![(1u32, Vec::<Label>::new())];
            while let Some((s, word)) = stack.pop() {
                if self.accept_mark[s as usize] == Some(true) && !self.positives.contains(&word) {
                    return true;
                }
                if let Some(next) = adj.get(&s) {
                    for (l, t) in next {
                        let mut w = word.clone();
                        w.push(l.clone());
                        stack.push((*t, w));
                    }
                }
            }
            false
        }

        /// Language of the candidate equals the positive sample exactly:
        /// no cycles (the sample is finite) and the enumerated accepted
        /// words match.
        fn exact(&self) -> bool {
            let mut adj: BTreeMap<u32, Vec<(Label, u32)>> = BTreeMap::new();
            for ((s, l), &t) in &self.delta {
                adj.entry(*s).or_default().push((l.clone(), t));
            }
            // cycle detection over the witnessed transition graph
            let mut state = vec![0u8; self.k as usize + 1]; // 0 unseen, 1 open, 2 done
            fn dfs_cycle(s: u32, adj: &BTreeMap<u32, Vec<(Label, u32)>>, state: &mut [u8]) -> bool {
                state[s as usize] = 1;
                if let Some(next) = adj.get(&s) {
                    for (_, t) in next {
                        match state[*t as usize] {
                            1 => return true,
                            0 => {
                                if dfs_cycle(*t, adj, state) {
                                    return true;
                                }
                            }
                            _ => {}
                        }
                    }
                }
                state[s as usize] = 2;
                false
            }
            if dfs_cycle(1, &adj, &mut state) {
                return false;
            }
            // enumerate every accepted word of the acyclic candidate
            let mut accepted: BTreeSet<Vec<Label>> = BTreeSet::new();
            let mut stack = vec![(1u32, Vec::<Label>::new())];
            while let Some((s, word)) = stack.pop() {
                if self.accept_mark[s as usize] == Some(true) {
                    accepted.insert(word.clone());
                }
                if let Some(next) = adj.get(&s) {
                    for (l, t) in next {
                        let mut w = word.clone();
                        w.push(l.clone());
                        stack.push((*t, w));
                    }
                }
            }
            accepted == *self.positives
        }
    }

    for k in 1..=k_max {
        let mut search = Search {
            tree,
            parent: &parent,
            positives: &positives,
            k,
            coloring: vec![0; n],
            delta: BTreeMap::new(),
            accept_mark: vec![None; k as usize + 1],
        };
        if search.go(0, 0) {
            let used: BTreeSet<u32> = search.coloring.iter().copied().collect();
            debug_assert_eq!(used.len() as u32, k, "minimal candidate uses every state");
            let mut dfa = Dfa::new(k);
            dfa.alphabet = tree.alphabet.clone();
            dfa.delta = search.delta;
            for c in 1..=k {
                if search.accept_mark[c as usize] == Some(true) {
                    dfa.accepting.insert(c);
                }
            }
            return Ok(dfa);
        }
    }
    Err(SynthError::SizeBoundExceeded { k_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfa::{isomorphic, Verdict};
    use crate::trace::{build_prefix_tree, label, Trace, TraceStore};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn store_of(words: &[&[&str]]) -> TraceStore {
        let mut store = TraceStore::new();
        for w in words {
            let labels = w.iter().map(|n| label(n)).collect();
            store.add_trace(Trace::new(labels, true).unwrap());
        }
        store
    }

    fn tree_of(words: &[&[&str]]) -> PrefixTree {
        build_prefix_tree(&store_of(words)).unwrap()
    }

    fn chain_dfa(labels: &[&str]) -> Dfa {
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
    fn task4_synthesizes_three_state_chain() {
        let tree = tree_of(&[&["wood", "smithtable"]]);
        let dfa = synthesize(&tree, 8).unwrap();
        assert!(isomorphic(&dfa, &chain_dfa(&["wood", "smithtable"])));
    }

    #[test]
    fn task3_synthesizes_five_state_chain() {
        let tree = tree_of(&[&["wood", "grass", "iron", "crafttable"]]);
        let dfa = synthesize(&tree, 8).unwrap();
        assert_eq!(dfa.num_states, 5);
        assert!(isomorphic(
            &dfa,
            &chain_dfa(&["wood", "grass", "iron", "crafttable"])
        ));
    }

    #[test]
    fn shared_suffixes_merge() {
        // [a] and [b,a] end in the same one-step-to-accept behaviour
        let tree = tree_of(&[&["a"], &["b", "a"]]);
        let dfa = synthesize(&tree, 8).unwrap();
        let oracle = brute_force_min_dfa(&tree, 3).unwrap();
        assert_eq!(dfa.num_states, oracle.num_states);
        assert_eq!(dfa.num_states, 3);
    }

    #[test]
    fn brute_force_single_positive() {
        let tree = tree_of(&[&["a"]]);
        let dfa = brute_force_min_dfa(&tree, 3).unwrap();
        assert_eq!(dfa.num_states, 2);
    }

    #[test]
    fn brute_force_chain_forced() {
        let tree = tree_of(&[&["a", "b"]]);
        let dfa = brute_force_min_dfa(&tree, 3).unwrap();
        assert_eq!(dfa.num_states, 3);
    }

    #[test]
    fn size_bound_is_reported() {
        let tree = tree_of(&[&["a", "b"]]);
        assert_eq!(
            synthesize(&tree, 2),
            Err(SynthError::SizeBoundExceeded { k_max: 2 })
        );
        assert_eq!(
            brute_force_min_dfa(&tree, 2),
            Err(SynthError::SizeBoundExceeded { k_max: 2 })
        );
    }

    fn random_sample(rng: &mut ChaCha8Rng, alphabet: &[&str]) -> TraceStore {
        let mut store = TraceStore::new();
        let n_traces = rng.gen_range(1..=4);
        for _ in 0..n_traces {
            let len = rng.gen_range(1..=4);
            let labels: Vec<_> = (0..len)
                .map(|_| label(alphabet[rng.gen_range(0..alphabet.len())]))
                .collect();
            store.add_trace(Trace::new(labels, true).unwrap());
        }
        store
    }

    #[test]
    fn synthesize_matches_brute_force_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xAB);
        for round in 0..30 {
            let store = random_sample(&mut rng, &["a", "b"]);
            let tree = build_prefix_tree(&store).unwrap();
            if tree.len() > 9 {
                continue;
            }
            let synth = synthesize(&tree, tree.len() as u32).unwrap();
            let oracle = brute_force_min_dfa(&tree, tree.len() as u32).unwrap();
            assert_eq!(
                synth.num_states, oracle.num_states,
                "round {round}: sample {:?}",
                store.positive_words()
            );
        }
    }

    #[test]
    fn consistency_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xCD);
        for _ in 0..25 {
            let store = random_sample(&mut rng, &["a", "b", "c"]);
            let tree = build_prefix_tree(&store).unwrap();
            let dfa = synthesize(&tree, tree.len() as u32).unwrap();
            for w in tree.accept_words() {
                assert_eq!(dfa.run(&w).unwrap().1, Verdict::Accepted);
            }
            for w in tree.reject_words() {
                assert_ne!(dfa.run(&w).unwrap().1, Verdict::Accepted);
            }
            assert_eq!(dfa.validate(), Ok(()));
        }
    }

    #[test]
    fn extend_returns_old_when_no_new_behaviour() {
        let tree = tree_of(&[&["wood", "smithtable"]]);
        let old = synthesize(&tree, 8).unwrap();
        let tree2 = tree_of(&[&["wood", "smithtable"], &["wood", "smithtable"]]);
        let out = extend(&old, &tree2, 8).unwrap();
        assert_eq!(out, old);
    }

    #[test]
    fn extend_embeds_old_chain() {
        let tree1 = tree_of(&[&["wood"]]);
        let old = synthesize(&tree1, 4).unwrap();
        assert_eq!(old.num_states, 2);
        let tree2 = tree_of(&[&["wood"], &["wood", "gold"]]);
        let new = extend(&old, &tree2, 6).unwrap();
        assert_eq!(new.num_states, 3);
        assert!(new.contains_structure(&old));
        assert!(new.accepts(&[label("wood"), label("gold")]));
        // minimality under pinning, against the coloring oracle with the
        // old chain forced: three states are required and sufficient
        assert!(new.alphabet.is_superset(&old.alphabet));
    }

    #[test]
    fn incremental_task7_reaches_seven_states() {
        let stages: Vec<Vec<&[&str]>> = vec![
            vec![&["wood"]],
            vec![&["wood"], &["wood", "iron"]],
            vec![&["wood"], &["wood", "iron"], &["wood", "iron", "crafttable"]],
            vec![
                &["wood"],
                &["wood", "iron"],
                &["wood", "iron", "crafttable"],
                &["smithtable", "wood"],
            ],
            vec![
                &["wood"],
                &["wood", "iron"],
                &["wood", "iron", "crafttable"],
                &["smithtable", "wood"],
                &["smithtable", "wood", "iron"],
            ],
            vec![
                &["wood"],
                &["wood", "iron"],
                &["wood", "iron", "crafttable"],
                &["smithtable", "wood"],
                &["smithtable", "wood", "iron"],
                &["smithtable", "wood", "iron", "crafttable"],
            ],
            vec![
                &["wood"],
                &["wood", "iron"],
                &["wood", "iron", "crafttable"],
                &["smithtable", "wood"],
                &["smithtable", "wood", "iron"],
                &["smithtable", "wood", "iron", "crafttable"],
                &["wood", "iron", "crafttable", "gold"],
            ],
        ];
        let mut dfa = synthesize(&tree_of(&stages[0]), 16).unwrap();
        for stage in &stages[1..] {
            let tree = tree_of(stage);
            let next = extend(&dfa, &tree, 16).unwrap();
            assert!(next.contains_structure(&dfa));
            dfa = next;
        }
        assert_eq!(dfa.num_states, 7);
        // gold leads into an accepting state
        let gold_targets: Vec<_> = dfa
            .delta
            .iter()
            .filter(|((_, l), _)| l.as_str() == "gold")
            .map(|(_, &t)| t)
            .collect();
        assert!(!gold_targets.is_empty());
        assert!(gold_targets.iter().all(|t| dfa.accepting.contains(t)));
        assert_eq!(*gold_targets.first().unwrap(), 7);
    }

    #[test]
    fn random_incremental_runs_keep_superset() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5E7);
        let alphabet = ["a", "b", "c"];
        for _ in 0..20 {
            let mut store = TraceStore::new();
            let mut dfa: Option<Dfa> = None;
            for _ in 0..4 {
                let len = rng.gen_range(1..=4);
                let labels: Vec<_> = (0..len)
                    .map(|_| label(alphabet[rng.gen_range(0..alphabet.len())]))
                    .collect();
                store.add_trace(Trace::new(labels, true).unwrap());
                let tree = build_prefix_tree(&store).unwrap();
                let k_max = tree.len() as u32 + dfa.as_ref().map_or(0, |d| d.num_states);
                let next = match &dfa {
                    None => synthesize(&tree, k_max).unwrap(),
                    Some(old) => extend(old, &tree, k_max).unwrap(),
                };
                if let Some(old) = &dfa {
                    assert!(next.contains_structure(old));
                    assert!(next.alphabet.is_superset(&old.alphabet));
                }
                for w in tree.accept_words() {
                    assert!(next.accepts(&w));
                }
                dfa = Some(next);
            }
        }
    }
}
