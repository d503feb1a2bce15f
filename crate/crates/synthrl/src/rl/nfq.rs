//! Batch fitted Q-iteration over the automaton decomposition. Each epoch
//! freezes a snapshot of all modules, rebuilds every module's pattern set
//! against that snapshot (bootstrapping across modules through the
//! automaton transition of each stored tuple) and then fits the modules,
//! walking from the highest state index down to the initial state.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dfa::{Dfa, StateId};
use crate::grid::{step, Action, EpisodeState, GridWorld, Pos, TaskSpec};

use super::estimator::{FitConfig, QTable, MLP_INPUTS};
use super::mlp::Mlp;
use super::{advance, Estimator, QModule, RlError, Transition};

/// Estimator family for a set of modules.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Tabular,
    Mlp { hidden: Vec<usize> },
}

impl Backend {
    pub fn default_mlp() -> Backend {
        Backend::Mlp {
            hidden: vec![128, 128],
        }
    }
}

/// One module per automaton state, estimators seeded deterministically.
pub fn make_modules(
    world: &GridWorld,
    dfa: &Dfa,
    backend: &Backend,
    capacity: usize,
    seed: u64,
) -> Vec<QModule> {
    (1..=dfa.num_states)
        .map(|q| {
            let estimator = match backend {
                Backend::Tabular => Estimator::Table(QTable::new(world)),
                Backend::Mlp { hidden } => {
                    let mut dims = vec![MLP_INPUTS];
                    dims.extend_from_slice(hidden);
                    dims.push(1);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (q as u64).wrapping_mul(0x9E37));
                    Estimator::Net(Mlp::new(&dims, &mut rng))
                }
            };
            QModule::new(q, estimator, capacity)
        })
        .collect()
}

/// Pattern set for one module: inputs are (state, action) pairs, targets the
/// one-step backup `r + gamma * max_a' Q(s', a')` evaluated on the module
/// owning the successor automaton state, from the frozen `snapshot`.
/// Terminal tuples contribute their reward alone.
pub fn build_pattern_set(
    world: &GridWorld,
    buffer: &super::ReplayBuffer,
    owner: StateId,
    dfa: &Dfa,
    snapshot: &[Estimator],
    gamma: f64,
) -> Result<Vec<((Pos, usize), f64)>, RlError> {
    if buffer.is_empty() {
        return Err(RlError::EmptyBuffer);
    }
    let mut out = Vec::with_capacity(buffer.len());
    for t in buffer.iter() {
        let target = if t.terminal {
            t.reward
        } else {
            let q_next = advance(dfa, owner, t.next_label.as_ref());
            t.reward + gamma * snapshot[(q_next - 1) as usize].max_value(world, t.next_state)
        };
        out.push(((t.state, t.action), target));
    }
    Ok(out)
}

/// Per-module fitting losses, one row per epoch; `None` marks modules whose
/// buffer was empty that epoch.
pub type LossHistory = Vec<Vec<Option<f64>>>;

/// Fitted Q-iteration: per epoch, snapshot all estimators, rebuild pattern
/// sets from the snapshot, then fit modules from state `|Q|` down to 1.
/// Zero epochs returns the modules untouched.
pub fn train_temporal_nfq(
    world: &GridWorld,
    dfa: &Dfa,
    modules: &mut [QModule],
    epochs: usize,
    fit: &FitConfig,
    gamma: f64,
) -> Result<LossHistory, RlError> {
    if dfa.accepting.is_empty() {
        return Err(RlError::NoAcceptingState);
    }
    if modules.len() != dfa.num_states as usize {
        return Err(RlError::InvalidConfig(format!(
            "{} modules for {} automaton states",
            modules.len(),
            dfa.num_states
        )));
    }
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let snapshot: Vec<Estimator> = modules.iter().map(|m| m.estimator.clone()).collect();
        let mut pattern_sets: Vec<Option<Vec<((Pos, usize), f64)>>> =
            vec![None; modules.len()];
        for m in modules.iter() {
            if !m.buffer.is_empty() {
                let p = build_pattern_set(world, &m.buffer, m.owner, dfa, &snapshot, gamma)?;
                pattern_sets[(m.owner - 1) as usize] = Some(p);
            }
        }
        let mut losses = vec![None; modules.len()];
        for qi in (1..=dfa.num_states).rev() {
            let ix = (qi - 1) as usize;
            if let Some(patterns) = &pattern_sets[ix] {
                let cfg = FitConfig {
                    seed: fit
                        .seed
                        .wrapping_add(epoch as u64)
                        .wrapping_mul(31)
                        .wrapping_add(qi as u64),
                    ..*fit
                };
                let loss = modules[ix].estimator.fit(world, patterns, &cfg);
                losses[ix] = Some(loss);
            }
        }
        history.push(losses);
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectStats {
    pub episodes: usize,
    pub completions: usize,
    pub transitions: usize,
}

/// Runs episodes under `policy` and partitions the transitions into the
/// buffers of the automaton state active when each action was taken. The
/// stored reward is the total reward: extrinsic plus the first-visit
/// automaton-progress bonus `eta`.
pub fn collect_experience(
    world: &GridWorld,
    task: &TaskSpec,
    dfa: &Dfa,
    modules: &mut [QModule],
    episodes: usize,
    eta: f64,
    seed: u64,
    mut policy: impl FnMut(Pos, StateId, &mut ChaCha8Rng) -> Action,
) -> CollectStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = CollectStats {
        episodes,
        completions: 0,
        transitions: 0,
    };
    for _ in 0..episodes {
        let mut state = EpisodeState::start(world);
        let mut q = Dfa::INITIAL;
        let mut visited = vec![false; dfa.num_states as usize + 1];
        visited[q as usize] = true;
        while !state.done {
            let a = policy(state.position, q, &mut rng);
            let (next, label, extrinsic) =
                step(world, task, &state, a).expect("episode not finished");
            let q_next = advance(dfa, q, label.as_ref());
            let mut total = extrinsic;
            if q_next != q && !visited[q_next as usize] {
                visited[q_next as usize] = true;
                total += eta;
            }
            if extrinsic > 0.0 {
                stats.completions += 1;
            }
            modules[(q - 1) as usize].buffer.push(Transition {
                state: state.position,
                action: a.index(),
                next_state: next.position,
                reward: total,
                next_label: label,
                terminal: next.done,
            });
            stats.transitions += 1;
            q = q_next;
            state = next;
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::load_map;
    use crate::rl::vi::{evaluate_policy, value_iteration, ProductMdp};
    use crate::rl::ReplayBuffer;
    use crate::synth::synthesize;
    use crate::trace::{build_prefix_tree, label, Trace, TraceStore};

    fn chain_dfa_2() -> Dfa {
        let mut d = Dfa::new(2);
        d.alphabet.insert(label("wood"));
        d.delta.insert((1, label("wood")), 2);
        d.accepting.insert(2);
        d
    }

    #[test]
    fn terminal_tuple_target_is_reward() {
        let world = load_map("@.").unwrap();
        let dfa = chain_dfa_2();
        let mut buffer = ReplayBuffer::new(4);
        buffer.push(Transition {
            state: (0, 0),
            action: 1,
            next_state: (1, 0),
            reward: 0.75,
            next_label: Some(label("wood")),
            terminal: true,
        });
        let snapshot = vec![
            Estimator::Table(QTable::new(&world)),
            Estimator::Table(QTable::new(&world)),
        ];
        let patterns = build_pattern_set(&world, &buffer, 1, &dfa, &snapshot, 0.9).unwrap();
        assert_eq!(patterns, vec![(((0, 0), 1), 0.75)]);
    }

    #[test]
    fn accepting_successor_bootstraps_from_accepting_module() {
        let world = load_map("@.").unwrap();
        let dfa = chain_dfa_2();
        let mut buffer = ReplayBuffer::new(4);
        buffer.push(Transition {
            state: (0, 0),
            action: 0,
            next_state: (1, 0),
            reward: 0.0,
            next_label: Some(label("wood")),
            terminal: false,
        });
        let mut q1 = QTable::new(&world);
        q1.set((1, 0), 0, 100.0); // wrong module: must not be used
        let mut q2 = QTable::new(&world);
        q2.set((1, 0), 3, 2.0);
        let snapshot = vec![Estimator::Table(q1), Estimator::Table(q2)];
        let patterns = build_pattern_set(&world, &buffer, 1, &dfa, &snapshot, 0.5).unwrap();
        assert_eq!(patterns[0].1, 0.0 + 0.5 * 2.0);
    }

    #[test]
    fn pattern_targets_match_hand_computed_backups() {
        let world = load_map("@...").unwrap();
        let mut dfa = Dfa::new(1);
        dfa.accepting.insert(1);
        let mut buffer = ReplayBuffer::new(8);
        let items = [
            ((0, 0), 0usize, (1, 0), 0.0, false),
            ((1, 0), 1usize, (2, 0), 0.5, false),
            ((2, 0), 1usize, (3, 0), 1.0, true),
            ((1, 0), 0usize, (0, 0), -0.25, false),
        ];
        for (s, a, s2, r, term) in items {
            buffer.push(Transition {
                state: s,
                action: a,
                next_state: s2,
                reward: r,
                next_label: None,
                terminal: term,
            });
        }
        let mut table = QTable::new(&world);
        table.set((0, 0), 2, 0.2);
        table.set((1, 0), 3, 0.4);
        table.set((2, 0), 0, 0.6);
        let snapshot = vec![Estimator::Table(table)];
        let gamma = 0.5;
        let patterns = build_pattern_set(&world, &buffer, 1, &dfa, &snapshot, gamma).unwrap();
        let expected = [
            0.0 + gamma * 0.4,
            0.5 + gamma * 0.6,
            1.0,
            -0.25 + gamma * 0.2,
        ];
        for (p, e) in patterns.iter().zip(expected) {
            assert!((p.1 - e).abs() < 1e-12, "{} vs {}", p.1, e);
        }
    }

    #[test]
    fn empty_buffer_is_an_error() {
        let world = load_map("@.").unwrap();
        let dfa = chain_dfa_2();
        let buffer = ReplayBuffer::new(4);
        let snapshot = vec![
            Estimator::Table(QTable::new(&world)),
            Estimator::Table(QTable::new(&world)),
        ];
        assert_eq!(
            build_pattern_set(&world, &buffer, 1, &dfa, &snapshot, 0.9),
            Err(RlError::EmptyBuffer)
        );
    }

    #[test]
    fn no_accepting_state_is_an_error() {
        let world = load_map("@.").unwrap();
        let mut dfa = Dfa::new(1);
        dfa.accepting.clear();
        let mut modules = make_modules(&world, &dfa, &Backend::Tabular, 8, 0);
        assert_eq!(
            train_temporal_nfq(&world, &dfa, &mut modules, 1, &FitConfig::default(), 0.9),
            Err(RlError::NoAcceptingState)
        );
    }

    #[test]
    fn zero_epochs_leaves_modules_untouched() {
        let world = load_map("@W").unwrap();
        let dfa = chain_dfa_2();
        let mut modules = make_modules(&world, &dfa, &Backend::default_mlp(), 8, 3);
        let before: Vec<Estimator> = modules.iter().map(|m| m.estimator.clone()).collect();
        let hist =
            train_temporal_nfq(&world, &dfa, &mut modules, 0, &FitConfig::default(), 0.9).unwrap();
        assert!(hist.is_empty());
        for (m, b) in modules.iter().zip(before) {
            assert_eq!(m.estimator, b);
        }
    }

    #[test]
    fn experience_partition_matches_replayed_history() {
        // forced corridor: wood then crafttable, one action
        let world = load_map("@WC").unwrap();
        let task = TaskSpec::standard(1).unwrap();
        let mut store = TraceStore::new();
        store.add_trace(Trace::new(vec![label("wood"), label("crafttable")], true).unwrap());
        let dfa = synthesize(&build_prefix_tree(&store).unwrap(), 4).unwrap();
        let mut modules = make_modules(&world, &dfa, &Backend::Tabular, 64, 0);
        collect_experience(&world, &task, &dfa, &mut modules, 3, 0.1, 1, |_, _, _| {
            Action::Right
        });
        // replaying [wood, crafttable] from q1 visits q1 then q2
        assert_eq!(modules[0].buffer.len(), 3); // q1 owns the first step
        assert_eq!(modules[1].buffer.len(), 3); // q2 owns the completing step
        assert_eq!(modules[2].buffer.len(), 0);
        for t in modules[0].buffer.iter() {
            assert_eq!(t.next_label, Some(label("wood")));
        }
        for t in modules[1].buffer.iter() {
            assert_eq!(t.next_label, Some(label("crafttable")));
            assert!(t.terminal);
            assert!((t.reward - (1.0 + 0.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn tabular_nfq_reaches_oracle_policy_on_3x3_world() {
        let world = load_map("@..\n...\n..W").unwrap();
        let task = TaskSpec {
            id: 1,
            required_sequence: vec![label("wood")],
            extrinsic_reward: 1.0,
        };
        let mut store = TraceStore::new();
        store.add_trace(Trace::new(vec![label("wood")], true).unwrap());
        let dfa = synthesize(&build_prefix_tree(&store).unwrap(), 4).unwrap();
        assert_eq!(dfa.num_states, 2);
        let mut modules = make_modules(&world, &dfa, &Backend::Tabular, 4096, 0);
        collect_experience(&world, &task, &dfa, &mut modules, 120, 0.0, 5, |_, _, rng| {
            Action::from_index(rng.gen_range(0..4))
        });
        let gamma = 0.95;
        train_temporal_nfq(&world, &dfa, &mut modules, 40, &FitConfig::default(), gamma).unwrap();
        let got = evaluate_policy(&world, &task, &dfa, &modules, 1, gamma);
        let mdp = ProductMdp::new(world, task);
        let opt = value_iteration(&mdp, gamma, 1e-12).optimal_return(&mdp);
        assert!(got >= 0.999 * opt, "greedy {got} vs optimal {opt}");
    }

    #[test]
    fn tabular_fixed_buffer_reaches_empirical_bellman_fixed_point() {
        let world = load_map("@...").unwrap();
        let mut dfa = Dfa::new(1);
        dfa.accepting.insert(1);
        let mut modules = make_modules(&world, &dfa, &Backend::Tabular, 64, 0);
        let tuples = [
            ((0, 0), 1usize, (1, 0), 0.0, false),
            ((1, 0), 1usize, (2, 0), 0.0, false),
            ((2, 0), 1usize, (3, 0), 1.0, true),
            ((1, 0), 0usize, (0, 0), 0.0, false),
            ((3, 0), 0usize, (2, 0), 0.0, false),
        ];
        for (s, a, s2, r, term) in tuples {
            modules[0].buffer.push(Transition {
                state: s,
                action: a,
                next_state: s2,
                reward: r,
                next_label: None,
                terminal: term,
            });
        }
        let gamma = 0.5;
        train_temporal_nfq(&world, &dfa, &mut modules, 60, &FitConfig::default(), gamma).unwrap();
        // independent fixed point of the empirical one-step operator
        let mut q: std::collections::BTreeMap<((u32, u32), usize), f64> =
            std::collections::BTreeMap::new();
        for _ in 0..200 {
            let maxv = |q: &std::collections::BTreeMap<((u32, u32), usize), f64>, s: (u32, u32)| {
                (0..4)
                    .map(|a| q.get(&(s, a)).copied().unwrap_or(0.0))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let mut next = q.clone();
            for (s, a, s2, r, term) in tuples {
                let t = if term { r } else { r + gamma * maxv(&q, s2) };
                next.insert((s, a), t);
            }
            q = next;
        }
        if let Estimator::Table(t) = &modules[0].estimator {
            for ((s, a), v) in &q {
                assert!((t.get(*s, *a) - v).abs() < 1e-9, "({s:?},{a}): {v}");
            }
        } else {
            panic!("expected tabular estimator");
        }
    }
}
