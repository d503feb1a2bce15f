//! Value-iteration oracle over the product of the grid and the task's
//! progress automaton, plus greedy policy evaluation. The oracle is
//! independent of synthesis and of the learners: the product is built
//! directly from the task's required sequence.

use crate::dfa::Dfa;
use crate::grid::{step, Action, EpisodeState, GridWorld, Pos, TaskSpec};

use super::{advance, QModule};

/// Finite product MDP: every grid cell crossed with the count of matched
/// task labels. The final progress level is absorbing. `reward_offset` adds
/// a constant to every transition's reward (zero in normal use).
#[derive(Debug, Clone)]
pub struct ProductMdp {
    pub world: GridWorld,
    pub task: TaskSpec,
    pub reward_offset: f64,
}

impl ProductMdp {
    pub fn new(world: GridWorld, task: TaskSpec) -> ProductMdp {
        ProductMdp {
            world,
            task,
            reward_offset: 0.0,
        }
    }

    pub fn with_reward_offset(mut self, offset: f64) -> ProductMdp {
        self.reward_offset = offset;
        self
    }

    pub fn num_progress(&self) -> usize {
        self.task.required_sequence.len() + 1
    }

    pub fn num_states(&self) -> usize {
        self.world.num_cells() * self.num_progress()
    }

    pub fn state_index(&self, pos: Pos, progress: usize) -> usize {
        progress * self.world.num_cells() + self.world.cell_index(pos)
    }

    /// Deterministic successor and reward.
    fn transition(&self, pos: Pos, progress: usize, action: Action) -> (Pos, usize, f64) {
        let goal = self.task.required_sequence.len();
        if progress == goal {
            // absorbing
            return (pos, progress, self.reward_offset);
        }
        let next = self.world.move_from(pos, action);
        let label = self.world.cell_labels.get(&next);
        let mut next_progress = progress;
        if let Some(l) = label {
            if *l == self.task.required_sequence[progress] {
                next_progress += 1;
            }
        }
        let reward = if next_progress == goal {
            self.task.extrinsic_reward
        } else {
            0.0
        };
        (next, next_progress, reward + self.reward_offset)
    }
}

#[derive(Debug, Clone)]
pub struct ViSolution {
    pub values: Vec<f64>,
    /// Greedy action index per product state (ties to the lowest index).
    pub policy: Vec<usize>,
    pub iterations: usize,
}

impl ViSolution {
    pub fn optimal_return(&self, mdp: &ProductMdp) -> f64 {
        self.values[mdp.state_index(mdp.world.start, 0)]
    }
}

/// Bellman sweeps until the sup-norm residual drops below `tol`.
pub fn value_iteration(mdp: &ProductMdp, gamma: f64, tol: f64) -> ViSolution {
    let n = mdp.num_states();
    let goal = mdp.task.required_sequence.len();
    let mut values = vec![0.0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut next_values = vec![0.0; n];
        let mut residual: f64 = 0.0;
        for progress in 0..mdp.num_progress() {
            for y in 0..mdp.world.height {
                for x in 0..mdp.world.width {
                    let pos = (x, y);
                    if mdp.world.obstacles.contains(&pos) {
                        continue;
                    }
                    let si = mdp.state_index(pos, progress);
                    let v = if progress == goal {
                        mdp.reward_offset + gamma * values[si]
                    } else {
                        Action::ALL
                            .iter()
                            .map(|&a| {
                                let (p2, g2, r) = mdp.transition(pos, progress, a);
                                r + gamma * values[mdp.state_index(p2, g2)]
                            })
                            .fold(f64::NEG_INFINITY, f64::max)
                    };
                    residual = residual.max((v - values[si]).abs());
                    next_values[si] = v;
                }
            }
        }
        values = next_values;
        if residual < tol {
            break;
        }
    }
    let mut policy = vec![0usize; n];
    for progress in 0..mdp.num_progress() {
        for y in 0..mdp.world.height {
            for x in 0..mdp.world.width {
                let pos = (x, y);
                if mdp.world.obstacles.contains(&pos) || progress == goal {
                    continue;
                }
                let si = mdp.state_index(pos, progress);
                let mut best = 0usize;
                let mut best_v = f64::NEG_INFINITY;
                for (ai, &a) in Action::ALL.iter().enumerate() {
                    let (p2, g2, r) = mdp.transition(pos, progress, a);
                    let v = r + gamma * values[mdp.state_index(p2, g2)];
                    if v > best_v {
                        best_v = v;
                        best = ai;
                    }
                }
                policy[si] = best;
            }
        }
    }
    ViSolution {
        values,
        policy,
        iterations,
    }
}

/// Discounted extrinsic return of a deterministic policy over (position,
/// progress), rolled out from the start cell.
pub fn rollout_return(
    mdp: &ProductMdp,
    gamma: f64,
    max_steps: u32,
    mut policy: impl FnMut(Pos, usize) -> Action,
) -> f64 {
    let goal = mdp.task.required_sequence.len();
    let mut pos = mdp.world.start;
    let mut progress = 0usize;
    let mut ret = 0.0;
    let mut discount = 1.0;
    for _ in 0..max_steps {
        if progress == goal {
            break;
        }
        let a = policy(pos, progress);
        let (p2, g2, r) = mdp.transition(pos, progress, a);
        ret += discount * (r - mdp.reward_offset);
        discount *= gamma;
        pos = p2;
        progress = g2;
    }
    ret
}

/// Mean discounted extrinsic return of the modules' greedy policy. The
/// automaton tracks the emitted labels; each step takes the greedy action of
/// the module owning the current automaton state.
pub fn evaluate_policy(
    world: &GridWorld,
    task: &TaskSpec,
    dfa: &Dfa,
    modules: &[QModule],
    episodes: usize,
    gamma: f64,
) -> f64 {
    let mut total = 0.0;
    for _ in 0..episodes.max(1) {
        let mut state = EpisodeState::start(world);
        let mut q = Dfa::INITIAL;
        let mut ret = 0.0;
        let mut discount = 1.0;
        while !state.done {
            let module = &modules[(q - 1) as usize];
            let a = Action::from_index(module.estimator.greedy_action(world, state.position));
            let (next, label, r) = step(world, task, &state, a).expect("episode not finished");
            ret += discount * r;
            discount *= gamma;
            q = advance(dfa, q, label.as_ref());
            state = next;
        }
        total += ret;
    }
    total / episodes.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::load_map;
    use crate::rl::estimator::QTable;
    use crate::rl::Estimator;
    use crate::synth::synthesize;
    use crate::trace::{build_prefix_tree, label, Trace, TraceStore};

    #[test]
    fn zero_reward_mdp_has_zero_values() {
        let world = load_map("@...").unwrap();
        let mut task = TaskSpec::standard(1).unwrap();
        task.required_sequence = vec![label("wood")]; // wood not on this map
        let mdp = ProductMdp::new(world, task);
        let sol = value_iteration(&mdp, 0.99, 1e-10);
        assert!(sol.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn geometric_discount_at_distance() {
        // wood is 4 moves away: reward on the 4th transition, discounted
        // by gamma^3
        let world = load_map("@...W").unwrap();
        let task = TaskSpec {
            id: 1,
            required_sequence: vec![label("wood")],
            extrinsic_reward: 1.0,
        };
        let mdp = ProductMdp::new(world, task);
        let gamma = 0.99;
        let sol = value_iteration(&mdp, gamma, 1e-12);
        let expected = gamma.powi(3);
        assert!((sol.optimal_return(&mdp) - expected).abs() < 1e-9);
    }

    #[test]
    fn oracle_policy_rollout_matches_values() {
        let world = GridWorld::default_map();
        let task = TaskSpec::standard(1).unwrap();
        let mdp = ProductMdp::new(world, task);
        let gamma = 0.99;
        let sol = value_iteration(&mdp, gamma, 1e-12);
        let ret = rollout_return(&mdp, gamma, 10_000, |pos, progress| {
            Action::from_index(sol.policy[mdp.state_index(pos, progress)])
        });
        assert!((ret - sol.optimal_return(&mdp)).abs() < 1e-9);
    }

    #[test]
    fn reward_shift_preserves_greedy_policy() {
        let world = GridWorld::default_map();
        let task = TaskSpec::standard(4).unwrap();
        let base = ProductMdp::new(world.clone(), task.clone());
        let shifted = ProductMdp::new(world, task).with_reward_offset(0.25);
        let a = value_iteration(&base, 0.95, 1e-11);
        let b = value_iteration(&shifted, 0.95, 1e-11);
        assert_eq!(a.policy, b.policy);
        // values shift, policies don't
        let delta = b.values[0] - a.values[0];
        assert!(delta > 0.0);
    }

    #[test]
    fn random_modules_on_reward_free_task_return_zero() {
        let world = load_map("@...").unwrap();
        let task = TaskSpec {
            id: 1,
            required_sequence: vec![label("wood")],
            extrinsic_reward: 1.0,
        };
        let mut store = TraceStore::new();
        store.add_trace(Trace::new(vec![label("wood")], true).unwrap());
        let tree = build_prefix_tree(&store).unwrap();
        let dfa = synthesize(&tree, 4).unwrap();
        let modules: Vec<QModule> = (1..=dfa.num_states)
            .map(|q| QModule::new(q, Estimator::Table(QTable::new(&world)), 64))
            .collect();
        let ret = evaluate_policy(&world, &task, &dfa, &modules, 3, 0.99);
        assert_eq!(ret, 0.0);
    }
}
