//! Command-line interface. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure. `SYNTHRL_SEED` provides the seed when no flag or config value
//! gives one.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::bench::{pearson, rows_to_csv, run_bench, saturation_ratio, Learner};
use crate::dfa::{from_fixture, to_dot};
use crate::experiment::{run_deepsynth, BackendKind, ExperimentConfig};
use crate::ktails::{ktails, KTailsConfig};
use crate::rl::checkpoint;
use crate::rl::vi::evaluate_policy;
use crate::synth::synthesize;
use crate::tabu::{tabu_learn, TabuConfig};
use crate::trace::{build_prefix_tree, TraceStore};

#[derive(Parser)]
#[command(
    name = "synthrl",
    about = "Synthesize task automata from traces and train automaton-guided Q-learners",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize the minimal automaton from a JSONL trace file
    Synth(SynthArgs),
    /// kTails state merging over the same traces
    Merge(MergeArgs),
    /// Tabu-search automaton learning over the same traces
    Tabu(TabuArgs),
    /// Run the full explore/synthesize/train loop
    Train(TrainArgs),
    /// Evaluate a trained checkpoint greedily
    Eval(EvalArgs),
    /// Runtime benchmark of synth vs tabu vs ktails on growing corpora
    Bench(BenchArgs),
    /// Convert an automaton fixture file to DOT
    ExportDot(ExportDotArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSONL trace file: {"labels":[...],"positive":bool} per line
    #[arg(long)]
    traces: PathBuf,
    /// State bound; 0 derives it from the prefix tree
    #[arg(long, default_value_t = 0)]
    k_max: u32,
    /// DOT output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the automaton in the plain-text fixture format
    #[arg(long)]
    fixture_out: Option<PathBuf>,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(long)]
    traces: PathBuf,
    /// Tail depth
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TabuArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value_t = 8)]
    max_states: u32,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[arg(long, default_value_t = 12)]
    tabu_len: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of the best-so-far cost history
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Task id 1..=7
    #[arg(long)]
    task: Option<u32>,
    /// ASCII map file (bundled 10x10 map when omitted)
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    k_max: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eps_initial: Option<f64>,
    #[arg(long)]
    eps_final: Option<f64>,
    #[arg(long)]
    eps_anneal_steps: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    target_return: Option<f64>,
    #[arg(long)]
    step_budget: Option<u32>,
    /// Flat key = value configuration file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    task: u32,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    episodes: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated cumulative trace lengths
    #[arg(long, default_value = "500,1000,1500,2000,2500,3000,3500,4000,4500,5000,5500,6000,6500,7000,7500,8000")]
    lengths: String,
    /// Comma-separated learners among synth, tabu, ktails
    #[arg(long, default_value = "synth,tabu,ktails")]
    learners: String,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportDotArgs {
    /// Automaton in the plain-text fixture format
    #[arg(long)]
    fixture: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl clap::ValueEnum for BackendKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[BackendKind::Tabular, BackendKind::Nfq, BackendKind::Dqn]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("SYNTHRL_SEED").ok()?.parse().ok()
}

fn write_or_print(path: &Option<PathBuf>, contents: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, contents).map_err(|e| format!("write {}: {e}", p.display())),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn load_traces(path: &PathBuf) -> Result<TraceStore, String> {
    let file = std::fs::File::open(path).map_err(|e| format!("open {}: {e}", path.display()))?;
    TraceStore::read_jsonl(std::io::BufReader::new(file)).map_err(|e| e.to_string())
}

pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(msg) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Synth(args) => {
            let store = load_traces(&args.traces)?;
            let tree = build_prefix_tree(&store).map_err(|e| e.to_string())?;
            let k_max = if args.k_max > 0 {
                args.k_max
            } else {
                tree.len() as u32
            };
            let dfa = synthesize(&tree, k_max).map_err(|e| e.to_string())?;
            eprintln!(
                "synthesized {} states over {} labels from {} positive words",
                dfa.num_states,
                dfa.alphabet.len(),
                tree.accept_words().len()
            );
            if let Some(p) = &args.fixture_out {
                std::fs::write(p, crate::dfa::to_fixture(&dfa))
                    .map_err(|e| format!("write {}: {e}", p.display()))?;
            }
            write_or_print(&args.out, &to_dot(&dfa))
        }
        Cmd::Merge(args) => {
            let store = load_traces(&args.traces)?;
            let tree = build_prefix_tree(&store).map_err(|e| e.to_string())?;
            let dfa = ktails(&tree, KTailsConfig { k: args.k });
            eprintln!("merged into {} states (k = {})", dfa.num_states, args.k);
            write_or_print(&args.out, &to_dot(&dfa))
        }
        Cmd::Tabu(args) => {
            let store = load_traces(&args.traces)?;
            let cfg = TabuConfig {
                max_states: args.max_states,
                iterations: args.iterations,
                tabu_len: args.tabu_len,
                seed: args.seed.or_else(env_seed).unwrap_or(0),
                ..Default::default()
            };
            let (dfa, history) = tabu_learn(&store, cfg).map_err(|e| e.to_string())?;
            eprintln!(
                "tabu finished with cost {} using {} states",
                history.last().unwrap(),
                dfa.num_states
            );
            if let Some(p) = &args.history {
                let mut csv = String::from("iteration,best_cost\n");
                for (i, c) in history.iter().enumerate() {
                    csv.push_str(&format!("{i},{c}\n"));
                }
                std::fs::write(p, csv).map_err(|e| format!("write {}: {e}", p.display()))?;
            }
            write_or_print(&args.out, &to_dot(&dfa))
        }
        Cmd::Train(args) => {
            let mut cfg = ExperimentConfig::default();
            if let Some(path) = &args.config {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("read {}: {e}", path.display()))?;
                cfg.apply_file(&text).map_err(|e| e.to_string())?;
            }
            if let Some(v) = args.task {
                cfg.task = v;
            }
            if let Some(v) = args.map {
                cfg.map_path = Some(v);
            }
            if let Some(v) = args.backend {
                cfg.backend = v;
            }
            if let Some(v) = args.seed.or_else(env_seed) {
                cfg.seed = v;
            }
            if let Some(v) = args.episodes {
                cfg.episodes = v;
            }
            if let Some(v) = args.eta {
                cfg.eta = v;
            }
            if let Some(v) = args.k_max {
                cfg.k_max = v;
            }
            if let Some(v) = args.alpha {
                cfg.alpha = v;
            }
            if let Some(v) = args.gamma {
                cfg.gamma = v;
            }
            if let Some(v) = args.eps_initial {
                cfg.eps_initial = v;
            }
            if let Some(v) = args.eps_final {
                cfg.eps_final = v;
            }
            if let Some(v) = args.eps_anneal_steps {
                cfg.eps_anneal_steps = v;
            }
            if let Some(v) = args.eval_every {
                cfg.eval_every = v;
            }
            if let Some(v) = args.target_return {
                cfg.target_return = Some(v);
            }
            if let Some(v) = args.step_budget {
                cfg.step_budget = v;
            }
            cfg.out_dir = args.out_dir;
            let artifacts = run_deepsynth(&cfg).map_err(|e| e.to_string())?;
            eprintln!(
                "trained task {} for {} episodes: {} completions, {} automaton states, greedy return {:.4} (oracle {:.4})",
                artifacts.summary.task,
                artifacts.summary.episodes_run,
                artifacts.summary.completions,
                artifacts.summary.automaton_states,
                artifacts.summary.final_greedy_return,
                artifacts.summary.oracle_return,
            );
            Ok(())
        }
        Cmd::Eval(args) => {
            let (dfa, modules, gamma) =
                checkpoint::load(&args.checkpoint).map_err(|e| e.to_string())?;
            let world = match &args.map {
                Some(p) => crate::grid::load_map(
                    &std::fs::read_to_string(p).map_err(|e| format!("read {}: {e}", p.display()))?,
                )
                .map_err(|e| e.to_string())?,
                None => crate::grid::GridWorld::default_map(),
            };
            checkpoint::check_world(&modules, &world).map_err(|e| e.to_string())?;
            let task = crate::grid::TaskSpec::standard(args.task).map_err(|e| e.to_string())?;
            let ret = evaluate_policy(&world, &task, &dfa, &modules, args.episodes, gamma);
            println!("{ret:.9}");
            Ok(())
        }
        Cmd::Bench(args) => {
            let lengths: Vec<usize> = args
                .lengths
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| format!("bad lengths: {e}"))?;
            let learners: Vec<Learner> = args
                .learners
                .split(',')
                .map(|s| Learner::parse(s.trim()))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let seed = args.seed.or_else(env_seed).unwrap_or(0);
            let rows = run_bench(&lengths, &learners, args.repeats, seed).map_err(|e| e.to_string())?;
            for &learner in &learners {
                let series: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.learner == learner.name())
                    .map(|r| r.ms)
                    .collect();
                let xs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.learner == learner.name())
                    .map(|r| r.cum_trace_len as f64)
                    .collect();
                if series.len() >= 4 {
                    eprintln!(
                        "{}: saturation ratio {:.3}, pearson vs length {:.3}",
                        learner.name(),
                        saturation_ratio(&series),
                        pearson(&xs, &series)
                    );
                }
            }
            std::fs::write(&args.out, rows_to_csv(&rows))
                .map_err(|e| format!("write {}: {e}", args.out.display()))?;
            Ok(())
        }
        Cmd::ExportDot(args) => {
            let text = std::fs::read_to_string(&args.fixture)
                .map_err(|e| format!("read {}: {e}", args.fixture.display()))?;
            let dfa = from_fixture(&text).map_err(|e| e.to_string())?;
            write_or_print(&args.out, &to_dot(&dfa))
        }
    }
}
