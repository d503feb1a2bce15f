//! kTails state merging over the prefix tree acceptor.
//!
//! Nodes whose outgoing label-sequences up to depth `k` (annotated with the
//! acceptance of their endpoints) coincide are merged; merges that introduce
//! nondeterminism are resolved by merging the conflicting targets until the
//! quotient is deterministic again.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::dfa::Dfa;
use crate::trace::{Label, NodeClass, PrefixTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KTailsConfig {
    pub k: usize,
}

type Tail = BTreeSet<(Vec<Label>, bool)>;

fn tails(tree: &PrefixTree, v: usize, k: usize, memo: &mut BTreeMap<(usize, usize), Tail>) -> Tail {
    if let Some(t) = memo.get(&(v, k)) {
        return t.clone();
    }
    let mut out: Tail = BTreeSet::new();
    out.insert((Vec::new(), tree.nodes[v].class == NodeClass::Accept));
    if k > 0 {
        for (l, &c) in &tree.nodes[v].children {
            for (mut w, acc) in tails(tree, c, k - 1, memo) {
                w.insert(0, l.clone());
                out.insert((w, acc));
            }
        }
    }
    memo.insert((v, k), out.clone());
    out
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // keep the smaller id as representative
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

/// Merges k-tail-equivalent nodes of the tree and returns the deterministic
/// quotient automaton. The result over-approximates the sample: every stored
/// positive trace is still accepted.
pub fn ktails(tree: &PrefixTree, cfg: KTailsConfig) -> Dfa {
    let n = tree.len();
    let mut memo = BTreeMap::new();
    let node_tails: Vec<Tail> = (0..n).map(|v| tails(tree, v, cfg.k, &mut memo)).collect();

    let mut uf = UnionFind::new(n);
    for u in 0..n {
        for v in (u + 1)..n {
            if node_tails[u] == node_tails[v] {
                uf.union(u, v);
            }
        }
    }

    // determinization closure: conflicting same-label successors merge
    loop {
        let mut to_merge: Option<(usize, usize)> = None;
        let mut successors: BTreeMap<(usize, Label), usize> = BTreeMap::new();
        'scan: for v in 0..n {
            let class = uf.find(v);
            for (l, &c) in &tree.nodes[v].children {
                let target = uf.find(c);
                match successors.get(&(class, l.clone())) {
                    Some(&t) if t != target => {
                        to_merge = Some((t, target));
                        break 'scan;
                    }
                    Some(_) => {}
                    None => {
                        successors.insert((class, l.clone()), target);
                    }
                }
            }
        }
        match to_merge {
            Some((a, b)) => {
                uf.union(a, b);
            }
            None => break,
        }
    }

    // renumber classes in breadth-first order from the root class
    let root = uf.find(0);
    let mut id_of: BTreeMap<usize, u32> = BTreeMap::from([(root, 1)]);
    let mut queue = VecDeque::from([root]);
    let mut edges: BTreeMap<(usize, Label), usize> = BTreeMap::new();
    for v in 0..n {
        let class = uf.find(v);
        for (l, &c) in &tree.nodes[v].children {
            edges.insert((class, l.clone()), uf.find(c));
        }
    }
    while let Some(class) = queue.pop_front() {
        for ((from, _), &to) in &edges {
            if *from == class && !id_of.contains_key(&to) {
                id_of.insert(to, id_of.len() as u32 + 1);
                queue.push_back(to);
            }
        }
    }

    let mut dfa = Dfa::new(id_of.len() as u32);
    dfa.alphabet = tree.alphabet.clone();
    for ((from, l), to) in &edges {
        dfa.delta.insert((id_of[from], l.clone()), id_of[to]);
    }
    for v in 0..n {
        if tree.nodes[v].class == NodeClass::Accept {
            dfa.accepting.insert(id_of[&uf.find(v)]);
        }
    }
    debug_assert_eq!(dfa.validate(), Ok(()));
    dfa
}
