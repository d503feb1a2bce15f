//! End-to-end experiment loop: exploration episodes feed the trace store;
//! completing episodes (and episodes discovering new labels) become
//! positive traces; the automaton is synthesized from the first behaviour
//! and extended on new behaviour, never invalidating existing Q-modules;
//! training runs on the chosen backend throughout. All artifacts are
//! deterministic functions of (config, seed).

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dfa::{to_dot, Dfa};
use crate::grid::{load_map, step, Action, EpisodeState, GridWorld, GridError, TaskSpec};
use crate::rl::checkpoint;
use crate::rl::estimator::{FitConfig, NUM_ACTIONS};
use crate::rl::nfq::{make_modules, train_temporal_nfq, Backend};
use crate::rl::ql::{td_update, EpisodeRecord};
use crate::rl::vi::{evaluate_policy, value_iteration, ProductMdp};
use crate::rl::{advance, Estimator, HyperParams, QModule, RlError, Transition};
use crate::synth::{extend, synthesize, SynthError};
use crate::trace::{
    build_prefix_tree, collapse_consecutive, compress_episode, Label, Trace, TraceError,
    TraceStore,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Tabular,
    Nfq,
    Dqn,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tabular" => Ok(BackendKind::Tabular),
            "nfq" => Ok(BackendKind::Nfq),
            "dqn" => Ok(BackendKind::Dqn),
            other => Err(format!("unknown backend '{other}', expected tabular|nfq|dqn")),
        }
    }
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Tabular => "tabular",
            BackendKind::Nfq => "nfq",
            BackendKind::Dqn => "dqn",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub map_path: Option<PathBuf>,
    pub task: u32,
    pub backend: BackendKind,
    pub seed: u64,
    pub episodes: usize,
    pub eta: f64,
    /// 0 selects an automatic bound (prefix-tree size plus old states).
    pub k_max: u32,
    pub out_dir: PathBuf,
    pub alpha: f64,
    pub gamma: f64,
    pub eps_initial: f64,
    pub eps_final: f64,
    pub eps_anneal_steps: u64,
    pub eval_every: usize,
    pub target_return: Option<f64>,
    /// Overrides the map's episode step budget when nonzero.
    pub step_budget: u32,
    pub nfq_train_every: usize,
    pub nfq_epochs: usize,
    pub mlp_hidden: Vec<usize>,
    pub hyper: HyperParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            map_path: None,
            task: 1,
            backend: BackendKind::Tabular,
            seed: 0,
            episodes: 2_000,
            eta: crate::rl::DEFAULT_INTRINSIC_SCALE,
            k_max: 0,
            out_dir: PathBuf::from("out"),
            alpha: 0.3,
            gamma: 0.99,
            eps_initial: 1.0,
            eps_final: 0.05,
            eps_anneal_steps: 60_000,
            eval_every: 25,
            target_return: None,
            step_budget: 0,
            nfq_train_every: 50,
            nfq_epochs: 5,
            mlp_hidden: vec![128, 128],
            hyper: HyperParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ExperimentError::BadConfig(format!(
                "alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ExperimentError::BadConfig(format!(
                "gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        if self.episodes == 0 {
            return Err(ExperimentError::BadConfig("episodes must be positive".into()));
        }
        if self.eta < 0.0 {
            return Err(ExperimentError::BadConfig("eta must be non-negative".into()));
        }
        if let Some(p) = &self.map_path {
            if !p.exists() {
                return Err(ExperimentError::BadConfig(format!(
                    "map file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    /// Applies `key = value` pairs from a flat config file; command-line
    /// flags are applied afterwards and take precedence.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ExperimentError> {
        for (k, v) in parse_kv(text)? {
            self.apply_key(&k, &v)?;
        }
        Ok(())
    }

    fn apply_key(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        let bad = |e: String| ExperimentError::BadConfig(e);
        macro_rules! parse {
            ($t:ty) => {
                value
                    .parse::<$t>()
                    .map_err(|e| bad(format!("{key}: {e}")))?
            };
        }
        match key {
            "map" => self.map_path = Some(PathBuf::from(value)),
            "task" => self.task = parse!(u32),
            "backend" => self.backend = value.parse().map_err(bad)?,
            "seed" => self.seed = parse!(u64),
            "episodes" => self.episodes = parse!(usize),
            "eta" => self.eta = parse!(f64),
            "k_max" => self.k_max = parse!(u32),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "alpha" => self.alpha = parse!(f64),
            "gamma" => self.gamma = parse!(f64),
            "eps_initial" => self.eps_initial = parse!(f64),
            "eps_final" => self.eps_final = parse!(f64),
            "eps_anneal_steps" => self.eps_anneal_steps = parse!(u64),
            "eval_every" => self.eval_every = parse!(usize),
            "target_return" => self.target_return = Some(parse!(f64)),
            "step_budget" => self.step_budget = parse!(u32),
            "nfq_train_every" => self.nfq_train_every = parse!(usize),
            "nfq_epochs" => self.nfq_epochs = parse!(usize),
            "mlp_hidden" => {
                self.mlp_hidden = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(format!("mlp_hidden: {e}")))?;
            }
            "minibatch" => self.hyper.minibatch = parse!(usize),
            "replay_capacity" => self.hyper.replay_capacity = parse!(usize),
            "target_sync" => self.hyper.target_sync = parse!(u64),
            "learning_rate" => self.hyper.learning_rate = parse!(f64),
            "replay_start" => self.hyper.replay_start = parse!(usize),
            other => {
                return Err(ExperimentError::BadConfig(format!(
                    "unknown configuration key '{other}'"
                )))
            }
        }
        Ok(())
    }
}

/// Flat `key = value` lines, `#` comments.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, ExperimentError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            ExperimentError::BadConfig(format!("line {}: expected key = value", i + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub task: u32,
    pub backend: &'static str,
    pub seed: u64,
    pub episodes_run: usize,
    pub completions: usize,
    pub automaton_states: u32,
    pub vocabulary: Vec<String>,
    pub oracle_return: f64,
    pub final_greedy_return: f64,
    pub early_stopped: bool,
}

/// The deterministic artifacts of one run.
#[derive(Debug)]
pub struct Artifacts {
    pub dfa: Option<Dfa>,
    pub curve: Vec<EpisodeRecord>,
    pub eval_curve: Vec<(usize, f64)>,
    pub summary: Summary,
}

struct DqnState {
    targets: Vec<Estimator>,
    optim: Vec<Option<crate::rl::mlp::Adam>>,
    stored: usize,
    updates: u64,
}

/// Placeholder single-state automaton used before the first behaviour is
/// synthesized; every label keeps the state unchanged.
fn placeholder_dfa() -> Dfa {
    Dfa::new(1)
}

pub fn run_deepsynth(cfg: &ExperimentConfig) -> Result<Artifacts, ExperimentError> {
    cfg.validate()?;
    let mut world = match &cfg.map_path {
        Some(p) => load_map(&std::fs::read_to_string(p)?)?,
        None => GridWorld::default_map(),
    };
    if cfg.step_budget > 0 {
        world.step_budget = cfg.step_budget;
    }
    let task = TaskSpec::standard(cfg.task)?;
    std::fs::create_dir_all(&cfg.out_dir)?;

    let backend = match cfg.backend {
        BackendKind::Tabular => Backend::Tabular,
        BackendKind::Nfq | BackendKind::Dqn => Backend::Mlp {
            hidden: cfg.mlp_hidden.clone(),
        },
    };
    let capacity = match cfg.backend {
        BackendKind::Tabular => 1,
        BackendKind::Nfq => 50_000,
        BackendKind::Dqn => cfg.hyper.replay_capacity,
    };

    let mut store = TraceStore::new();
    let mut dfa: Option<Dfa> = None;
    let working = placeholder_dfa();
    let mut modules = make_modules(&world, &working, &backend, capacity, cfg.seed);
    let mut dqn = DqnState {
        targets: modules.iter().map(|m| m.estimator.clone()).collect(),
        optim: new_optimizers(&modules, cfg.hyper.learning_rate),
        stored: 0,
        updates: 0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve: Vec<EpisodeRecord> = Vec::with_capacity(cfg.episodes);
    let mut eval_curve = Vec::new();
    let mut completions = 0usize;
    let mut global_step: u64 = 0;
    let mut early_stopped = false;
    let mut episodes_run = 0usize;

    for episode in 0..cfg.episodes {
        episodes_run = episode + 1;
        let current = dfa.clone().unwrap_or_else(placeholder_dfa);
        let mut state = EpisodeState::start(&world);
        let mut q = Dfa::INITIAL;
        let mut visited = vec![false; current.num_states as usize + 1];
        visited[q as usize] = true;
        let mut visits = vec![0u64; current.num_states as usize];
        let mut raw: Vec<Option<Label>> = Vec::new();
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut eps = epsilon(cfg, global_step);

        while !state.done {
            visits[(q - 1) as usize] += 1;
            eps = epsilon(cfg, global_step);
            let a = if rng.gen::<f64>() < eps {
                rng.gen_range(0..NUM_ACTIONS)
            } else {
                modules[(q - 1) as usize]
                    .estimator
                    .greedy_action(&world, state.position)
            };
            let (next, label, extrinsic) =
                step(&world, &task, &state, Action::from_index(a)).expect("episode in progress");
            raw.push(label.clone());
            let q_next = advance(&current, q, label.as_ref());
            let mut total = extrinsic;
            if q_next != q && !visited[q_next as usize] {
                visited[q_next as usize] = true;
                total += cfg.eta;
            }
            let transition = Transition {
                state: state.position,
                action: a,
                next_state: next.position,
                reward: total,
                next_label: label,
                terminal: next.done,
            };
            match cfg.backend {
                BackendKind::Tabular => {
                    let bootstrap = if next.done {
                        0.0
                    } else {
                        modules[(q_next - 1) as usize]
                            .estimator
                            .max_value(&world, next.position)
                    };
                    if let Estimator::Table(t) = &mut modules[(q - 1) as usize].estimator {
                        let c = crate::rl::QLConfig {
                            alpha: cfg.alpha,
                            gamma: cfg.gamma,
                            epsilon: crate::rl::EpsilonSchedule {
                                initial: cfg.eps_initial,
                                final_value: cfg.eps_final,
                                anneal_steps: cfg.eps_anneal_steps,
                            },
                        };
                        td_update(t, transition.state, a, total, bootstrap, &c);
                    }
                }
                BackendKind::Nfq => {
                    modules[(q - 1) as usize].buffer.push(transition);
                }
                BackendKind::Dqn => {
                    modules[(q - 1) as usize].buffer.push(transition);
                    dqn.stored += 1;
                    if dqn.stored >= cfg.hyper.replay_start {
                        crate::rl::dqn::minibatch_update_shared(
                            &world,
                            &current,
                            &mut modules,
                            &dqn.targets,
                            &mut dqn.optim,
                            (q - 1) as usize,
                            &cfg.hyper,
                            &mut rng,
                        );
                        dqn.updates += 1;
                        if dqn.updates % cfg.hyper.target_sync == 0 {
                            dqn.targets = modules.iter().map(|m| m.estimator.clone()).collect();
                        }
                    }
                }
            }
            if extrinsic > 0.0 {
                completions += 1;
            }
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

        // trace ingestion: completed episodes enter as positive behaviour
        // (label-change view); everything else is stored negative, which
        // still grows the vocabulary on label discovery
        let completed = task.matches(&state.history);
        let ingested: Option<Trace> = if completed {
            let compressed = compress_episode(&raw, true)?;
            Some(Trace::new(collapse_consecutive(&compressed.labels), true)?)
        } else {
            let t = compress_episode(&raw, false)?;
            store.add_trace(t);
            None
        };
        if let Some(positive) = ingested {
            let word = positive.labels.clone();
            let delta = store.add_trace(positive);
            let needs = delta.new_behaviour
                && !dfa.as_ref().map(|d| d.captures(&word)).unwrap_or(false);
            if needs {
                let tree = build_prefix_tree(&store)?;
                let k_max = if cfg.k_max > 0 {
                    cfg.k_max
                } else {
                    tree.len() as u32 + dfa.as_ref().map_or(0, |d| d.num_states)
                };
                let next_dfa = match &dfa {
                    None => synthesize(&tree, k_max)?,
                    Some(old) => extend(old, &tree, k_max)?,
                };
                match &dfa {
                    None => {
                        // first behaviour: fresh modules for the real automaton
                        modules = make_modules(&world, &next_dfa, &backend, capacity, cfg.seed);
                        dqn.targets = modules.iter().map(|m| m.estimator.clone()).collect();
                        dqn.optim = new_optimizers(&modules, cfg.hyper.learning_rate);
                    }
                    Some(old) => {
                        // superset update: existing modules stay valid, new
                        // states get fresh modules
                        for s in (old.num_states + 1)..=next_dfa.num_states {
                            let fresh =
                                make_modules(&world, &next_dfa, &backend, capacity, cfg.seed ^ s as u64);
                            let m = fresh.into_iter().nth((s - 1) as usize).expect("state exists");
                            modules.push(m);
                            dqn.targets.push(modules.last().unwrap().estimator.clone());
                            dqn.optim.push(match &modules.last().unwrap().estimator {
                                Estimator::Net(n) => Some(crate::rl::mlp::Adam::new(
                                    n,
                                    cfg.hyper.learning_rate,
                                )),
                                Estimator::Table(_) => None,
                            });
                        }
                    }
                }
                dfa = Some(next_dfa);
            }
        }

        // periodic NFQ batch training
        if cfg.backend == BackendKind::Nfq
            && cfg.nfq_train_every > 0
            && (episode + 1) % cfg.nfq_train_every == 0
        {
            if let Some(d) = &dfa {
                if !d.accepting.is_empty() {
                    let fit = FitConfig {
                        seed: cfg.seed ^ 0xF17,
                        ..FitConfig::default()
                    };
                    train_temporal_nfq(&world, d, &mut modules, cfg.nfq_epochs, &fit, cfg.gamma)?;
                }
            }
        }

        if cfg.eval_every > 0 && (episode + 1) % cfg.eval_every == 0 {
            let g = match &dfa {
                Some(d) => evaluate_policy(&world, &task, d, &modules, 1, cfg.gamma),
                None => 0.0,
            };
            eval_curve.push((episode + 1, g));
            if let Some(target) = cfg.target_return {
                if g >= target {
                    early_stopped = true;
                    break;
                }
            }
        }
    }

    let final_greedy = match &dfa {
        Some(d) => evaluate_policy(&world, &task, d, &modules, 1, cfg.gamma),
        None => 0.0,
    };
    let mdp = ProductMdp::new(world.clone(), task.clone());
    let oracle = value_iteration(&mdp, cfg.gamma, 1e-10).optimal_return(&mdp);

    let summary = Summary {
        task: cfg.task,
        backend: cfg.backend.name(),
        seed: cfg.seed,
        episodes_run,
        completions,
        automaton_states: dfa.as_ref().map_or(0, |d| d.num_states),
        vocabulary: store.vocabulary().iter().map(|l| l.as_str().to_string()).collect(),
        oracle_return: oracle,
        final_greedy_return: final_greedy,
        early_stopped,
    };

    write_artifacts(cfg, &world, &store, &dfa, &modules, &curve, &eval_curve, &summary)?;

    Ok(Artifacts {
        dfa,
        curve,
        eval_curve,
        summary,
    })
}

fn epsilon(cfg: &ExperimentConfig, step: u64) -> f64 {
    crate::rl::EpsilonSchedule {
        initial: cfg.eps_initial,
        final_value: cfg.eps_final,
        anneal_steps: cfg.eps_anneal_steps,
    }
    .value(step)
}

fn new_optimizers(
    modules: &[QModule],
    learning_rate: f64,
) -> Vec<Option<crate::rl::mlp::Adam>> {
    modules
        .iter()
        .map(|m| match &m.estimator {
            Estimator::Net(n) => Some(crate::rl::mlp::Adam::new(n, learning_rate)),
            Estimator::Table(_) => None,
        })
        .collect()
}

pub fn curves_to_csv(curve: &[EpisodeRecord], num_states: u32) -> String {
    let k = num_states.max(1) as usize;
    let mut out = String::from("episode,return,epsilon");
    for i in 1..=k {
        let _ = write!(out, ",visits_q{i}");
    }
    out.push('\n');
    for r in curve {
        let _ = write!(out, "{},{:.9},{:.6}", r.episode, r.ret, r.epsilon);
        for i in 0..k {
            let v = r.visits.get(i).copied().unwrap_or(0);
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn eval_to_csv(eval: &[(usize, f64)]) -> String {
    let mut out = String::from("episode,greedy_return\n");
    for (e, g) in eval {
        let _ = writeln!(out, "{e},{g:.9}");
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    cfg: &ExperimentConfig,
    _world: &GridWorld,
    store: &TraceStore,
    dfa: &Option<Dfa>,
    modules: &[QModule],
    curve: &[EpisodeRecord],
    eval_curve: &[(usize, f64)],
    summary: &Summary,
) -> Result<(), ExperimentError> {
    let dir = &cfg.out_dir;
    let k = dfa.as_ref().map_or(1, |d| d.num_states);
    std::fs::write(dir.join("curves.csv"), curves_to_csv(curve, k))?;
    std::fs::write(dir.join("eval.csv"), eval_to_csv(eval_curve))?;
    let mut traces = Vec::new();
    store.write_jsonl(&mut traces)?;
    std::fs::write(dir.join("traces.jsonl"), traces)?;
    if let Some(d) = dfa {
        std::fs::write(dir.join("dfa.dot"), to_dot(d))?;
        checkpoint::save(&dir.join("checkpoint.bin"), d, modules, cfg.gamma)?;
    }
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| ExperimentError::BadConfig(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), json)?;
    Ok(())
}

/// Keys understood by [`ExperimentConfig::apply_file`], for help text.
pub const CONFIG_KEYS: &[&str] = &[
    "map", "task", "backend", "seed", "episodes", "eta", "k_max", "out_dir", "alpha", "gamma",
    "eps_initial", "eps_final", "eps_anneal_steps", "eval_every", "target_return", "step_budget",
    "nfq_train_every", "nfq_epochs", "mlp_hidden", "minibatch", "replay_capacity", "target_sync",
    "learning_rate", "replay_start",
];
