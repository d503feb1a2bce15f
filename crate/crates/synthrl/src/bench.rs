//! Runtime benchmark: incremental synthesis against the Tabu and kTails
//! learners on the same growing trace corpus. Timings use a monotonic
//! clock; acceptance of the results relies on trend statistics only, never
//! on absolute times.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dfa::Dfa;
use crate::ktails::{ktails, KTailsConfig};
use crate::synth::{extend, synthesize};
use crate::tabu::{tabu_learn, TabuConfig};
use crate::trace::{build_prefix_tree, label, Label, Trace, TraceStore};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchError {
    #[error("lengths must be strictly increasing")]
    LengthsNotIncreasing,
    #[error("unknown learner '{0}'")]
    UnknownLearner(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Learner {
    Synth,
    Tabu,
    KTails,
}

impl Learner {
    pub fn name(self) -> &'static str {
        match self {
            Learner::Synth => "synth",
            Learner::Tabu => "tabu",
            Learner::KTails => "ktails",
        }
    }

    pub fn parse(s: &str) -> Result<Learner, BenchError> {
        match s {
            "synth" => Ok(Learner::Synth),
            "tabu" => Ok(Learner::Tabu),
            "ktails" => Ok(Learner::KTails),
            other => Err(BenchError::UnknownLearner(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub learner: &'static str,
    pub cum_trace_len: usize,
    pub ms: f64,
    pub states: u32,
}

/// Bounded-behaviour trace source: a fixed pool of distinct positive words;
/// longer streams repeat them, so an incremental learner saturates once the
/// pool is exhausted.
pub struct TraceGenerator {
    pool: Vec<Vec<Label>>,
    rng: ChaCha8Rng,
}

impl TraceGenerator {
    pub fn new(seed: u64) -> TraceGenerator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let letters = ["a", "b", "c", "d"];
        // a handful of goal suffixes encourages suffix sharing and keeps
        // the exact automata small
        let suffixes: Vec<Vec<Label>> = vec![
            vec![label("c"), label("d")],
            vec![label("d")],
            vec![label("b"), label("d")],
        ];
        let mut pool = Vec::new();
        while pool.len() < 14 {
            let prefix_len = rng.gen_range(1..=3);
            let mut word: Vec<Label> = (0..prefix_len)
                .map(|_| label(letters[rng.gen_range(0..2)]))
                .collect();
            word.extend(suffixes[rng.gen_range(0..suffixes.len())].iter().cloned());
            if !pool.contains(&word) {
                pool.push(word);
            }
        }
        TraceGenerator { pool, rng }
    }

    pub fn next_trace(&mut self) -> Trace {
        let word = self.pool[self.rng.gen_range(0..self.pool.len())].clone();
        Trace::new(word, true).expect("pool words are non-empty")
    }
}

struct SynthState {
    store: TraceStore,
    dfa: Option<Dfa>,
}

impl SynthState {
    fn ingest(&mut self, new_traces: &[Trace]) -> u32 {
        let mut needs_update = false;
        for t in new_traces {
            let captured = self
                .dfa
                .as_ref()
                .map(|d| d.captures(&t.labels))
                .unwrap_or(false);
            if t.positive && !captured {
                needs_update = true;
            }
            self.store.add_trace(t.clone());
        }
        if needs_update {
            let tree = build_prefix_tree(&self.store).expect("positive traces present");
            let k_max = tree.len() as u32 + self.dfa.as_ref().map_or(0, |d| d.num_states);
            let next = match &self.dfa {
                None => synthesize(&tree, k_max).expect("prefix tree is always realizable"),
                Some(old) => extend(old, &tree, k_max).expect("extension is always realizable"),
            };
            self.dfa = Some(next);
        }
        self.dfa.as_ref().map_or(0, |d| d.num_states)
    }
}

/// Measures every learner on the same growing corpus at each cumulative
/// length checkpoint; `repeats` timings are averaged. Synthesis runs
/// incrementally (it only processes the new traces and extends on unseen
/// behaviour); Tabu and kTails reprocess the whole corpus.
pub fn run_bench(
    lengths: &[usize],
    learners: &[Learner],
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchRow>, BenchError> {
    if lengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BenchError::LengthsNotIncreasing);
    }
    let repeats = repeats.max(1);
    let mut rows = Vec::new();
    // one shared trace stream per repeat, chunked by the length grid
    for &learner in learners {
        let mut timings: Vec<Vec<f64>> = vec![Vec::new(); lengths.len()];
        let mut states_at: Vec<u32> = vec![0; lengths.len()];
        let mut cum_at: Vec<usize> = vec![0; lengths.len()];
        for rep in 0..repeats {
            let mut gen = TraceGenerator::new(seed.wrapping_add(rep as u64));
            let mut synth = SynthState {
                store: TraceStore::new(),
                dfa: None,
            };
            let mut corpus = TraceStore::new();
            let mut cum = 0usize;
            for (i, &target) in lengths.iter().enumerate() {
                let mut new_traces = Vec::new();
                while cum < target {
                    let t = gen.next_trace();
                    cum += t.labels.len();
                    new_traces.push(t);
                }
                let (elapsed, states) = match learner {
                    Learner::Synth => {
                        let start = Instant::now();
                        let states = synth.ingest(&new_traces);
                        (start.elapsed(), states)
                    }
                    Learner::Tabu => {
                        for t in &new_traces {
                            corpus.add_trace(t.clone());
                        }
                        let cfg = TabuConfig {
                            max_states: 8,
                            iterations: 60,
                            tabu_len: 10,
                            seed,
                            moves_per_iter: 4,
                        };
                        let start = Instant::now();
                        let (dfa, _) = tabu_learn(&corpus, cfg).expect("positive corpus");
                        (start.elapsed(), dfa.num_states)
                    }
                    Learner::KTails => {
                        for t in &new_traces {
                            corpus.add_trace(t.clone());
                        }
                        let start = Instant::now();
                        let tree = build_prefix_tree(&corpus).expect("positive corpus");
                        let dfa = ktails(&tree, KTailsConfig { k: 2 });
                        (start.elapsed(), dfa.num_states)
                    }
                };
                timings[i].push(elapsed.as_secs_f64() * 1e3);
                states_at[i] = states;
                cum_at[i] = cum;
            }
        }
        for (i, t) in timings.iter().enumerate() {
            rows.push(BenchRow {
                learner: learner.name(),
                cum_trace_len: cum_at[i],
                ms: t.iter().sum::<f64>() / t.len() as f64,
                states: states_at[i],
            });
        }
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("learner,cum_trace_len,ms,states\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.3},{}\n",
            r.learner, r.cum_trace_len, r.ms, r.states
        ));
    }
    out
}

/// Mean of the last quartile divided by the mean of the second quartile; a
/// saturating series stays near 1.
pub fn saturation_ratio(values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n >= 4, "need at least one point per quartile");
    let q = n / 4;
    let second: &[f64] = &values[q..2 * q];
    let last: &[f64] = &values[n - q..];
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    mean(last) / mean(second)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_lengths_give_empty_result() {
        let rows = run_bench(&[], &[Learner::Synth], 1, 0).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn non_increasing_lengths_are_rejected() {
        assert_eq!(
            run_bench(&[100, 100], &[Learner::Synth], 1, 0),
            Err(BenchError::LengthsNotIncreasing)
        );
    }

    #[test]
    fn learner_names_parse() {
        assert_eq!(Learner::parse("synth").unwrap(), Learner::Synth);
        assert_eq!(Learner::parse("tabu").unwrap(), Learner::Tabu);
        assert_eq!(Learner::parse("ktails").unwrap(), Learner::KTails);
        assert!(Learner::parse("magic").is_err());
    }

    #[test]
    fn small_bench_produces_ordered_rows() {
        let lengths = [60, 120, 180, 240];
        let rows = run_bench(&lengths, &[Learner::Synth, Learner::KTails], 1, 7).unwrap();
        assert_eq!(rows.len(), 8);
        for pair in rows.chunks(4) {
            for w in pair.windows(2) {
                assert!(w[1].cum_trace_len > w[0].cum_trace_len);
            }
        }
        // the synthesized automaton accepts the pool behaviours seen so far
        assert!(rows[3].states >= 2);
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let mut a = TraceGenerator::new(3);
        let mut b = TraceGenerator::new(3);
        for _ in 0..20 {
            assert_eq!(a.next_trace(), b.next_trace());
        }
    }

    #[test]
    fn statistics_helpers() {
        let flat = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert!((saturation_ratio(&flat) - 1.0).abs() < 1e-12);
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 4.0, 6.0, 8.0];
        assert!((pearson(&xs, &ys) - 1.0).abs() < 1e-12);
        let zs = [8.0, 6.0, 4.0, 2.0];
        assert!((pearson(&xs, &zs) + 1.0).abs() < 1e-12);
    }
}
