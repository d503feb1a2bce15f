//! Product-automaton reinforcement learning: one Q-module per automaton
//! state, each with its own experience partition, trained tabularly, by
//! batch fitted Q-iteration or by the replay/target-network loop.

pub mod checkpoint;
pub mod dqn;
pub mod estimator;
pub mod mlp;
pub mod nfq;
pub mod ql;
pub mod vi;

use std::collections::VecDeque;

use thiserror::Error;

use crate::dfa::{Dfa, StateId};
use crate::grid::Pos;
use crate::trace::Label;

pub use estimator::{Estimator, QTable};
pub use mlp::Mlp;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RlError {
    #[error("experience buffer is empty")]
    EmptyBuffer,
    #[error("automaton has no accepting state")]
    NoAcceptingState,
    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Linear exploration schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub final_value: f64,
    pub anneal_steps: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if self.anneal_steps == 0 || step >= self.anneal_steps {
            return self.final_value;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        self.initial + (self.final_value - self.initial) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QLConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
}

impl QLConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(RlError::InvalidConfig(format!(
                "alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(RlError::InvalidConfig(format!(
                "gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        Ok(())
    }
}

impl Default for QLConfig {
    fn default() -> Self {
        QLConfig {
            alpha: 0.3,
            gamma: 0.99,
            epsilon: EpsilonSchedule {
                initial: 1.0,
                final_value: 0.05,
                anneal_steps: 60_000,
            },
        }
    }
}

/// Replay/target-network defaults. `history_len` and `no_op_max` belong to
/// the pixel pipeline and have no effect in the gridworld; they are kept so
/// configurations round-trip unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub minibatch: usize,
    pub replay_capacity: usize,
    pub history_len: u32,
    pub target_sync: u64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub eps_initial: f64,
    pub eps_final: f64,
    pub eps_anneal_frames: u64,
    pub replay_start: usize,
    pub no_op_max: u32,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            minibatch: 32,
            replay_capacity: 150_000,
            history_len: 4,
            target_sync: 10_000,
            gamma: 0.99,
            learning_rate: 0.000_25,
            eps_initial: 1.0,
            eps_final: 0.1,
            eps_anneal_frames: 150_000,
            replay_start: 8_000,
            no_op_max: 30,
        }
    }
}

/// Scale of the first-visit automaton-progress bonus added to the extrinsic
/// reward; zero disables intrinsic shaping.
pub const DEFAULT_INTRINSIC_SCALE: f64 = 0.1;

/// Environment state coupled with the automaton state tracking the episode's
/// label history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProductState {
    pub env_state: Pos,
    pub aut_state: StateId,
}

/// One stored interaction. `reward` is the total reward (extrinsic plus any
/// intrinsic bonus) observed when the transition was taken while the
/// automaton sat at the owning module's state.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Pos,
    pub action: usize,
    pub next_state: Pos,
    pub reward: f64,
    pub next_label: Option<Label>,
    pub terminal: bool,
}

/// FIFO experience buffer with a capacity bound.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: VecDeque::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}

/// Per-automaton-state learner: the owning state, its value estimator and
/// its experience partition.
#[derive(Debug, Clone)]
pub struct QModule {
    pub owner: StateId,
    pub estimator: Estimator,
    pub buffer: ReplayBuffer,
}

impl QModule {
    pub fn new(owner: StateId, estimator: Estimator, capacity: usize) -> Self {
        QModule {
            owner,
            estimator,
            buffer: ReplayBuffer::new(capacity),
        }
    }
}

/// The automaton state after observing `label` from `q`; unlabeled steps
/// and labels without a defined transition leave the state unchanged.
pub fn advance(dfa: &Dfa, q: StateId, label: Option<&Label>) -> StateId {
    match label {
        Some(l) => dfa.step_total(q, l),
        None => q,
    }
}
