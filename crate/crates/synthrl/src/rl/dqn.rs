//! Replay/target-network Q-learning over the automaton decomposition: an
//! epsilon-greedy step from the module owning the current automaton state,
//! uniform minibatch sampling from that module's experience partition, and
//! target networks cloned from the live estimators every `target_sync`
//! parameter updates. Bootstraps cross modules through each tuple's stored
//! label, always against the target copies.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dfa::Dfa;
use crate::grid::{step, Action, EpisodeState, GridWorld, TaskSpec};

use super::estimator::{features, NUM_ACTIONS};
use super::mlp::Adam;
use super::nfq::{make_modules, Backend};
use super::ql::EpisodeRecord;
use super::{advance, EpsilonSchedule, Estimator, HyperParams, QModule, RlError, Transition};

pub struct DqnResult {
    pub modules: Vec<QModule>,
    pub curve: Vec<EpisodeRecord>,
}

/// Temporal DQN training loop. Fully deterministic given the seed.
pub fn train_temporal_dqn(
    world: &GridWorld,
    task: &TaskSpec,
    dfa: &Dfa,
    hp: &HyperParams,
    backend: &Backend,
    eta: f64,
    episodes: usize,
    seed: u64,
) -> Result<DqnResult, RlError> {
    if dfa.accepting.is_empty() {
        return Err(RlError::NoAcceptingState);
    }
    let mut modules = make_modules(world, dfa, backend, hp.replay_capacity, seed);
    let mut targets: Vec<Estimator> = modules.iter().map(|m| m.estimator.clone()).collect();
    let mut optim: Vec<Option<Adam>> = modules
        .iter()
        .map(|m| match &m.estimator {
            Estimator::Net(n) => Some(Adam::new(n, hp.learning_rate)),
            Estimator::Table(_) => None,
        })
        .collect();
    let schedule = EpsilonSchedule {
        initial: hp.eps_initial,
        final_value: hp.eps_final,
        anneal_steps: hp.eps_anneal_frames,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = Vec::with_capacity(episodes);
    let mut frame: u64 = 0;
    let mut stored: usize = 0;
    let mut updates: u64 = 0;

    for episode in 0..episodes {
        let mut state = EpisodeState::start(world);
        let mut q = Dfa::INITIAL;
        let mut visited = vec![false; dfa.num_states as usize + 1];
        visited[q as usize] = true;
        let mut visits = vec![0u64; dfa.num_states as usize];
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut eps = schedule.value(frame);
        while !state.done {
            visits[(q - 1) as usize] += 1;
            eps = schedule.value(frame);
            let a = if rng.gen::<f64>() < eps {
                rng.gen_range(0..NUM_ACTIONS)
            } else {
                modules[(q - 1) as usize]
                    .estimator
                    .greedy_action(world, state.position)
            };
            let (next, label, extrinsic) =
                step(world, task, &state, Action::from_index(a)).expect("episode not finished");
            let q_next = advance(dfa, q, label.as_ref());
            let mut total = extrinsic;
            if q_next != q && !visited[q_next as usize] {
                visited[q_next as usize] = true;
                total += eta;
            }
            modules[(q - 1) as usize].buffer.push(Transition {
                state: state.position,
                action: a,
                next_state: next.position,
                reward: total,
                next_label: label,
                terminal: next.done,
            });
            stored += 1;
            if stored >= hp.replay_start && !modules[(q - 1) as usize].buffer.is_empty() {
                minibatch_update_shared(
                    world,
                    dfa,
                    &mut modules,
                    &targets,
                    &mut optim,
                    (q - 1) as usize,
                    hp,
                    &mut rng,
                );
                updates += 1;
                if updates % hp.target_sync == 0 {
                    targets = modules.iter().map(|m| m.estimator.clone()).collect();
                }
            }
            ret += discount * extrinsic;
            discount *= hp.gamma;
            frame += 1;
            q = q_next;
            state = next;
        }
        curve.push(EpisodeRecord {
            episode,
            ret,
            epsilon: eps,
            visits,
        });
    }
    Ok(DqnResult { modules, curve })
}

/// One uniform minibatch update of module `ix` against the target
/// estimators; shared with the end-to-end experiment loop.
#[allow(clippy::too_many_arguments)]
pub(crate) fn minibatch_update_shared(
    world: &GridWorld,
    dfa: &Dfa,
    modules: &mut [QModule],
    targets: &[Estimator],
    optim: &mut [Option<Adam>],
    ix: usize,
    hp: &HyperParams,
    rng: &mut ChaCha8Rng,
) {
    let owner = modules[ix].owner;
    let n = modules[ix].buffer.len();
    let mut batch = Vec::with_capacity(hp.minibatch);
    for _ in 0..hp.minibatch {
        let t = modules[ix].buffer.get(rng.gen_range(0..n)).clone();
        let y = if t.terminal {
            t.reward
        } else {
            let q_next = advance(dfa, owner, t.next_label.as_ref());
            t.reward
                + hp.gamma * targets[(q_next - 1) as usize].max_value(world, t.next_state)
        };
        batch.push((t.state, t.action, y));
    }
    match &mut modules[ix].estimator {
        Estimator::Table(table) => {
            for (s, a, y) in batch {
                let old = table.get(s, a);
                table.set(s, a, old + hp.learning_rate * (y - old));
            }
        }
        Estimator::Net(net) => {
            let data: Vec<(Vec<f64>, f64)> = batch
                .into_iter()
                .map(|(s, a, y)| (features(world, s, a), y))
                .collect();
            let grad = net.loss_gradient(&data);
            optim[ix]
                .as_mut()
                .expect("network modules carry an optimizer")
                .step(net, &grad);
        }
    }
}
