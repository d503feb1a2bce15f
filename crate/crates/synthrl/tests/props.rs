//! Property tests for the structural invariants that hold across modules:
//! prefix-tree shape, solver soundness, synthesis consistency and the DOT
//! round trip.

use proptest::prelude::*;

use synthrl::dfa::{from_dot, isomorphic, to_dot, Dfa, Verdict};
use synthrl::sat::{brute_force_satisfiable, solve, CnfFormula, Lit, SatResult};
use synthrl::synth::synthesize;
use synthrl::trace::{build_prefix_tree, compress_episode, label, Label, Trace, TraceStore};

fn letters() -> Vec<&'static str> {
    vec!["a", "b", "c"]
}

fn word_strategy() -> impl Strategy<Value = Vec<Label>> {
    proptest::collection::vec(prop::sample::select(letters()), 1..6)
        .prop_map(|ls| ls.into_iter().map(label).collect())
}

fn sample_strategy() -> impl Strategy<Value = Vec<Vec<Label>>> {
    proptest::collection::vec(word_strategy(), 1..5)
}

fn store_of(words: &[Vec<Label>]) -> TraceStore {
    let mut store = TraceStore::new();
    for w in words {
        store.add_trace(Trace::new(w.clone(), true).unwrap());
    }
    store
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Insertion order never changes the prefix tree up to isomorphism, and
    /// the node count is bounded by the total trace length.
    #[test]
    fn prefix_tree_is_order_insensitive(words in sample_strategy(), seed in 0u64..64) {
        let tree_a = build_prefix_tree(&store_of(&words)).unwrap();
        let mut shuffled = words.clone();
        // cheap deterministic shuffle
        let n = shuffled.len();
        for i in 0..n {
            let j = (seed as usize + i * 7) % n;
            shuffled.swap(i, j);
        }
        let tree_b = build_prefix_tree(&store_of(&shuffled)).unwrap();
        prop_assert_eq!(tree_a.len(), tree_b.len());
        prop_assert_eq!(tree_a.accept_words(), tree_b.accept_words());
        let total: usize = words.iter().map(|w| w.len()).sum();
        prop_assert!(tree_a.len() <= 1 + total);
        // determinism: at most one child per (node, label) is structural
        for node in &tree_a.nodes {
            let labels: Vec<_> = node.children.keys().collect();
            let mut dedup = labels.clone();
            dedup.dedup();
            prop_assert_eq!(labels, dedup);
        }
    }

    /// Compression never emits the empty observation and never grows.
    #[test]
    fn compression_shrinks(raw in proptest::collection::vec(
        proptest::option::weighted(0.4, prop::sample::select(letters())), 0..20)
    ) {
        let raw: Vec<Option<Label>> = raw.into_iter().map(|o| o.map(label)).collect();
        let trace = compress_episode(&raw, false).unwrap();
        prop_assert!(trace.labels.len() <= raw.len());
        prop_assert!(trace.labels.iter().all(|l| !l.as_str().is_empty()));
    }

    /// Any model the solver returns satisfies the formula, and the verdict
    /// agrees with exhaustive enumeration.
    #[test]
    fn solver_sound_and_complete(
        num_vars in 1u32..9,
        clauses in proptest::collection::vec(
            proptest::collection::vec((1u32..9, any::<bool>()), 1..4), 0..20)
    ) {
        let mut f = CnfFormula::new(num_vars);
        for clause in clauses {
            f.add_clause(clause.into_iter().map(|(v, pos)| Lit {
                var: (v - 1) % num_vars + 1,
                positive: pos,
            }));
        }
        let got = solve(&f).unwrap();
        prop_assert_eq!(got.is_sat(), brute_force_satisfiable(&f));
        if let SatResult::Sat(a) = got {
            prop_assert!(a.satisfies(&f));
        }
    }

    /// Synthesis accepts every positive word, rejects every derived reject
    /// prefix, and every state stays reachable.
    #[test]
    fn synthesis_is_consistent(words in sample_strategy()) {
        let store = store_of(&words);
        let tree = build_prefix_tree(&store).unwrap();
        let dfa = synthesize(&tree, tree.len() as u32).unwrap();
        for w in tree.accept_words() {
            prop_assert_eq!(dfa.run(&w).unwrap().1, Verdict::Accepted);
        }
        for w in tree.reject_words() {
            prop_assert_ne!(dfa.run(&w).unwrap().1, Verdict::Accepted);
        }
        prop_assert_eq!(dfa.validate(), Ok(()));
    }

    /// DOT round trip is isomorphism-preserving for synthesized automata.
    #[test]
    fn dot_round_trip(words in sample_strategy()) {
        let store = store_of(&words);
        let tree = build_prefix_tree(&store).unwrap();
        let dfa = synthesize(&tree, tree.len() as u32).unwrap();
        let back = from_dot(&to_dot(&dfa)).unwrap();
        prop_assert!(isomorphic(&back, &dfa));
    }
}

/// Fixture automata round-trip through DOT as well, including traps.
#[test]
fn fixture_dot_round_trip() {
    for name in [
        "mars-rover-1",
        "mars-rover-2",
        "slp-easy",
        "slp-hard",
        "robot-surve",
        "frozen-lake-123",
        "frozen-lake-456",
    ] {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("fixtures")
            .join(format!("{name}.txt"));
        let text = std::fs::read_to_string(&path).unwrap();
        let dfa = synthrl::dfa::from_fixture(&text).unwrap();
        let back = from_dot(&to_dot(&dfa)).unwrap();
        assert!(isomorphic(&back, &dfa), "{name} failed the round trip");
    }
}

/// 50 random synthesized automata keep the round trip exact.
#[test]
fn dot_round_trip_50_random() {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let names = ["a", "b", "c"];
    for _ in 0..50 {
        let mut store = TraceStore::new();
        for _ in 0..rng.gen_range(1..=4) {
            let len = rng.gen_range(1..=5);
            let word: Vec<Label> = (0..len)
                .map(|_| label(names[rng.gen_range(0..names.len())]))
                .collect();
            store.add_trace(Trace::new(word, true).unwrap());
        }
        let tree = build_prefix_tree(&store).unwrap();
        let dfa = synthesize(&tree, tree.len() as u32).unwrap();
        let back = from_dot(&to_dot(&dfa)).unwrap();
        assert!(isomorphic(&back, &dfa));
    }
}

/// A trap state reachable in a fixture stays a dead end under run().
#[test]
fn trap_fixture_semantics() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/frozen-lake-456.txt");
    let dfa = synthrl::dfa::from_fixture(&std::fs::read_to_string(path).unwrap()).unwrap();
    let (_, verdict) = dfa.run(&[label("obj3"), label("u")]).unwrap();
    assert_eq!(verdict, Verdict::Trapped);
    let (_, verdict) = dfa
        .run(&[label("obj3"), label("obj2"), label("obj3"), label("obj1"), label("obj4")])
        .unwrap();
    assert_eq!(verdict, Verdict::Accepted);
}

/// Extending with a superset sample containing unknown labels grows the
/// alphabet monotonically.
#[test]
fn extension_grows_vocabulary() {
    let mut store = TraceStore::new();
    store.add_trace(Trace::new(vec![label("a")], true).unwrap());
    let tree = build_prefix_tree(&store).unwrap();
    let old = synthesize(&tree, 4).unwrap();
    store.add_trace(Trace::new(vec![label("a"), label("b")], true).unwrap());
    let tree2 = build_prefix_tree(&store).unwrap();
    let new = synthrl::synth::extend(&old, &tree2, 8).unwrap();
    assert!(new.alphabet.is_superset(&old.alphabet));
    assert!(new.alphabet.contains(&label("b")));
    let used: Vec<_> = new.states().collect();
    assert_eq!(used.len(), new.num_states as usize);
}

/// Deterministic solver: two identical synthesis calls return equal
/// automata, not merely isomorphic ones.
#[test]
fn synthesis_is_canonical() {
    let words = [
        vec![label("a"), label("b")],
        vec![label("b"), label("a"), label("b")],
    ];
    let store = store_of(&words);
    let tree = build_prefix_tree(&store).unwrap();
    let a = synthesize(&tree, 10).unwrap();
    let b = synthesize(&tree, 10).unwrap();
    assert_eq!(a, b);
}
