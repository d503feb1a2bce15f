//! Tabular Q-learning: the single-table update rule, the temporal variant
//! with one table per automaton state, and the flat baseline that ignores
//! the automaton entirely.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dfa::Dfa;
use crate::grid::{step, Action, EpisodeState, GridWorld, Pos, TaskSpec};

use super::estimator::{QTable, NUM_ACTIONS};
use super::vi::evaluate_policy;
use super::{advance, Estimator, QLConfig, QModule, RlError};

/// One-step update: `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`.
/// A terminal successor (`None`) contributes no bootstrap term.
pub fn ql_update(
    table: &mut QTable,
    s: Pos,
    a: usize,
    r: f64,
    next: Option<Pos>,
    cfg: &QLConfig,
) {
    let bootstrap = next.map_or(0.0, |p| table.max_value(p));
    td_update(table, s, a, r, bootstrap, cfg);
}

/// The same rule with an externally supplied bootstrap value, used when the
/// max is taken on a different module's table.
pub fn td_update(table: &mut QTable, s: Pos, a: usize, r: f64, bootstrap: f64, cfg: &QLConfig) {
    let old = table.get(s, a);
    table.set(s, a, old + cfg.alpha * (r + cfg.gamma * bootstrap - old));
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Discounted extrinsic return of the behaviour policy.
    pub ret: f64,
    pub epsilon: f64,
    /// Visit counts per automaton state (empty for the flat learner).
    pub visits: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub modules: Vec<QModule>,
    pub curve: Vec<EpisodeRecord>,
    /// Greedy-policy returns sampled every `eval_every` episodes:
    /// (episode, mean discounted return).
    pub eval_curve: Vec<(usize, f64)>,
}

/// Temporal tabular Q-learning: episodes follow an epsilon-greedy policy
/// over the module owning the current automaton state; each transition
/// updates that module with the successor module's value as bootstrap. The
/// total reward adds `eta` on the first visit of an automaton state within
/// the episode.
pub fn train_temporal_ql(
    world: &GridWorld,
    task: &TaskSpec,
    dfa: &Dfa,
    cfg: &QLConfig,
    eta: f64,
    episodes: usize,
    seed: u64,
    eval_every: usize,
) -> Result<TrainResult, RlError> {
    cfg.validate()?;
    let mut modules: Vec<QModule> = (1..=dfa.num_states)
        .map(|q| QModule::new(q, Estimator::Table(QTable::new(world)), 1))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = Vec::with_capacity(episodes);
    let mut eval_curve = Vec::new();
    let mut global_step: u64 = 0;

    for episode in 0..episodes {
        let mut state = EpisodeState::start(world);
        let mut q = Dfa::INITIAL;
        let mut visited = vec![false; dfa.num_states as usize + 1];
        visited[q as usize] = true;
        let mut visits = vec![0u64; dfa.num_states as usize];
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut eps = cfg.epsilon.value(global_step);
        while !state.done {
            visits[(q - 1) as usize] += 1;
            eps = cfg.epsilon.value(global_step);
            let table = match &modules[(q - 1) as usize].estimator {
                Estimator::Table(t) => t,
                Estimator::Net(_) => unreachable!("temporal QL is tabular"),
            };
            let a = if rng.gen::<f64>() < eps {
                rng.gen_range(0..NUM_ACTIONS)
            } else {
                table.greedy_action(state.position)
            };
            let (next, label, extrinsic) =
                step(world, task, &state, Action::from_index(a)).expect("episode not finished");
            let q_next = advance(dfa, q, label.as_ref());
            let mut total = extrinsic;
            if q_next != q && !visited[q_next as usize] {
                visited[q_next as usize] = true;
                total += eta;
            }
            let bootstrap = if next.done {
                0.0
            } else {
                modules[(q_next - 1) as usize]
                    .estimator
                    .max_value(world, next.position)
            };
            let table = match &mut modules[(q - 1) as usize].estimator {
                Estimator::Table(t) => t,
                Estimator::Net(_) => unreachable!(),
            };
            td_update(table, state.position, a, total, bootstrap, cfg);
            ret += discount * extrinsic;
            discount *= cfg.gamma;
            global_step += 1;
            q = q_next;
            state = next;
        }
        curve.push(EpisodeRecord {
            episode,
            ret,
            epsilon: eps,
            visits,
        });
        if eval_every > 0 && (episode + 1) % eval_every == 0 {
            let g = evaluate_policy(world, task, dfa, &modules, 1, cfg.gamma);
            eval_curve.push((episode + 1, g));
        }
    }
    Ok(TrainResult {
        modules,
        curve,
        eval_curve,
    })
}

/// Flat baseline: a single table over grid cells, blind to the automaton.
/// Runs on the identical episode/step budget as the temporal learner.
pub fn train_flat_ql(
    world: &GridWorld,
    task: &TaskSpec,
    cfg: &QLConfig,
    episodes: usize,
    seed: u64,
    eval_every: usize,
) -> Result<TrainResult, RlError> {
    cfg.validate()?;
    let mut table = QTable::new(world);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = Vec::with_capacity(episodes);
    let mut eval_curve = Vec::new();
    let mut global_step: u64 = 0;

    for episode in 0..episodes {
        let mut state = EpisodeState::start(world);
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut eps = cfg.epsilon.value(global_step);
        while !state.done {
            eps = cfg.epsilon.value(global_step);
            let a = if rng.gen::<f64>() < eps {
                rng.gen_range(0..NUM_ACTIONS)
            } else {
                table.greedy_action(state.position)
            };
            let (next, _, extrinsic) =
                step(world, task, &state, Action::from_index(a)).expect("episode not finished");
            let next_pos = if next.done { None } else { Some(next.position) };
            ql_update(&mut table, state.position, a, extrinsic, next_pos, cfg);
            ret += discount * extrinsic;
            discount *= cfg.gamma;
            global_step += 1;
            state = next;
        }
        curve.push(EpisodeRecord {
            episode,
            ret,
            epsilon: eps,
            visits: Vec::new(),
        });
        if eval_every > 0 && (episode + 1) % eval_every == 0 {
            let g = flat_greedy_return(world, task, &table, cfg.gamma);
            eval_curve.push((episode + 1, g));
        }
    }
    let modules = vec![QModule::new(1, Estimator::Table(table), 1)];
    Ok(TrainResult {
        modules,
        curve,
        eval_curve,
    })
}

/// Greedy rollout of a flat table.
pub fn flat_greedy_return(world: &GridWorld, task: &TaskSpec, table: &QTable, gamma: f64) -> f64 {
    let mut state = EpisodeState::start(world);
    let mut ret = 0.0;
    let mut discount = 1.0;
    while !state.done {
        let a = Action::from_index(table.greedy_action(state.position));
        let (next, _, r) = step(world, task, &state, a).expect("episode not finished");
        ret += discount * r;
        discount *= gamma;
        state = next;
    }
    ret
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::load_map;
    use crate::rl::vi::{value_iteration, ProductMdp};
    use crate::rl::EpsilonSchedule;
    use crate::synth::synthesize;
    use crate::trace::{build_prefix_tree, label, Trace, TraceStore};

    fn cfg(alpha: f64, gamma: f64) -> QLConfig {
        QLConfig {
            alpha,
            gamma,
            epsilon: EpsilonSchedule {
                initial: 1.0,
                final_value: 0.1,
                anneal_steps: 100,
            },
        }
    }

    #[test]
    fn update_from_zero_table() {
        let world = load_map("@.").unwrap();
        let mut table = QTable::new(&world);
        ql_update(&mut table, (0, 0), 1, 1.0, Some((1, 0)), &cfg(0.5, 0.9));
        assert_eq!(table.get((0, 0), 1), 0.5);
    }

    #[test]
    fn terminal_update_with_full_rate() {
        let world = load_map("@.").unwrap();
        let mut table = QTable::new(&world);
        table.set((0, 0), 2, 0.7);
        ql_update(&mut table, (0, 0), 2, 0.0, None, &cfg(1.0, 0.9));
        assert_eq!(table.get((0, 0), 2), 0.0);
    }

    #[test]
    fn repeated_updates_reach_value_iteration_fixed_point() {
        // 1x4 corridor, wood at the far end
        let world = load_map("@..W").unwrap();
        let task = TaskSpec {
            id: 1,
            required_sequence: vec![label("wood")],
            extrinsic_reward: 1.0,
        };
        let mdp = ProductMdp::new(world.clone(), task.clone());
        let gamma = 0.9;
        let oracle = value_iteration(&mdp, gamma, 1e-14);
        let mut table = QTable::new(&world);
        let c = cfg(1.0, gamma);
        for _ in 0..64 {
            for y in 0..world.height {
                for x in 0..world.width {
                    let pos = (x, y);
                    for a in 0..NUM_ACTIONS {
                        let next = world.move_from(pos, Action::from_index(a));
                        let reached = world.cell_labels.get(&next) == Some(&label("wood"));
                        let r = if reached { 1.0 } else { 0.0 };
                        let succ = if reached { None } else { Some(next) };
                        ql_update(&mut table, pos, a, r, succ, &c);
                    }
                }
            }
        }
        for y in 0..world.height {
            for x in 0..world.width {
                if world.cell_labels.contains_key(&(x, y)) {
                    continue;
                }
                let vi = oracle.values[mdp.state_index((x, y), 0)];
                let ql = table.max_value((x, y));
                assert!((vi - ql).abs() < 1e-6, "({x},{y}): vi {vi} ql {ql}");
            }
        }
    }

    #[test]
    fn temporal_ql_solves_a_small_task() {
        let world = load_map("@W.C").unwrap();
        let task = TaskSpec::standard(1).unwrap();
        let mut store = TraceStore::new();
        store.add_trace(Trace::new(vec![label("wood"), label("crafttable")], true).unwrap());
        let dfa = synthesize(&build_prefix_tree(&store).unwrap(), 4).unwrap();
        let c = QLConfig {
            alpha: 0.5,
            gamma: 0.99,
            epsilon: EpsilonSchedule {
                initial: 1.0,
                final_value: 0.05,
                anneal_steps: 2_000,
            },
        };
        let out = train_temporal_ql(&world, &task, &dfa, &c, 0.1, 300, 7, 50).unwrap();
        let mdp = ProductMdp::new(world.clone(), task.clone());
        let opt = value_iteration(&mdp, 0.99, 1e-12).optimal_return(&mdp);
        let last = out.eval_curve.last().unwrap().1;
        assert!(last >= 0.99 * opt, "greedy {last} vs optimal {opt}");
        // experience partition bookkeeping: every episode visited q1
        assert!(out.curve.iter().all(|r| r.visits[0] > 0));
    }

    #[test]
    fn training_is_reproducible_by_seed() {
        let world = load_map("@W.C").unwrap();
        let task = TaskSpec::standard(1).unwrap();
        let mut store = TraceStore::new();
        store.add_trace(Trace::new(vec![label("wood"), label("crafttable")], true).unwrap());
        let dfa = synthesize(&build_prefix_tree(&store).unwrap(), 4).unwrap();
        let c = cfg(0.5, 0.9);
        let a = train_temporal_ql(&world, &task, &dfa, &c, 0.1, 50, 3, 0).unwrap();
        let b = train_temporal_ql(&world, &task, &dfa, &c, 0.1, 50, 3, 0).unwrap();
        assert_eq!(a.curve, b.curve);
    }
}
