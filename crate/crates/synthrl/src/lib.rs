//! Automaton synthesis from exploration traces, with the synthesized
//! automaton structuring reinforcement learning: one Q-learner per
//! automaton state over a labeled gridworld.
//!
//! The pipeline: episodes produce label traces; positive traces feed a
//! prefix tree acceptor; a SAT reduction identifies the minimal
//! deterministic automaton that captures exactly the observed behaviour,
//! with incremental superset updates as new behaviour arrives; the
//! automaton then decomposes the non-Markovian task reward into one
//! Q-module per automaton state. State-merge (kTails) and Tabu-search
//! learners are included as baselines, plus a runtime benchmark harness.

pub mod bench;
pub mod cli;
pub mod dfa;
pub mod experiment;
pub mod grid;
pub mod ktails;
pub mod rl;
pub mod sat;
pub mod synth;
pub mod tabu;
pub mod trace;

pub use dfa::{Dfa, Verdict};
pub use trace::{Label, Trace, TraceStore};
