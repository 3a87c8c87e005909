//! Command line for the benchmark: generate oracle data, train policies,
//! run closed-loop evaluation, render episodes, inspect artifacts.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use padbench_core::config::RunConfig;
use padbench_core::dataset::{read_trajectories, write_trajectories};
use padbench_core::eval::{aliasing_bound, evaluate, EvalOptions, Policy};
use padbench_core::model::StatelessMlp;
use padbench_core::oracle::{demonstrate, solve, Trajectory};
use padbench_core::recurrent::{GruCfg, GruPolicy};
use padbench_core::sim::{render_text, SimConfig};
use padbench_core::task::{sample_task, TaskKind, Tolerances};
use padbench_core::train::{load_checkpoint, save_checkpoint, train_gru, train_mlp, train_transformer, TrainLog};
use padbench_core::transformer::{Transformer, TransformerCfg};
use padbench_core::vocab::Vocab;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "padbench", version, about = "Memory-dependent manipulation benchmark")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum PolicyArg {
    Oracle,
    Stateless,
    ArScratchpad,
    Recurrent,
    RecurrentScratchpad,
}

impl PolicyArg {
    fn label(self) -> &'static str {
        match self {
            PolicyArg::Oracle => "oracle",
            PolicyArg::Stateless => "stateless",
            PolicyArg::ArScratchpad => "ar-scratchpad",
            PolicyArg::Recurrent => "recurrent",
            PolicyArg::RecurrentScratchpad => "recurrent-scratchpad",
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate oracle trajectories per task kind.
    Gen {
        /// Task kind slug, or "all".
        #[arg(long, default_value = "all")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Behavior-clone a policy from generated trajectories.
    Train {
        #[arg(long, value_enum)]
        policy: PolicyArg,
        /// Directory produced by gen.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Restrict training to one task kind slug.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Closed-loop evaluation on held-out episode seeds.
    Eval {
        #[arg(long, value_enum)]
        policy: PolicyArg,
        /// Checkpoint path; not needed for the oracle.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "all")]
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print a text rendering of an episode.
    Render {
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Render every nth oracle step instead of just the initial state.
        #[arg(long)]
        every: Option<usize>,
    },
    /// Describe an artifact: dataset, checkpoint, or the aliasing bound of
    /// a task kind.
    Inspect {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Task kind slug to compute the observation-aliasing bound for.
        #[arg(long)]
        aliasing: Option<String>,
        /// Oracle episodes behind the aliasing estimate.
        #[arg(long, default_value_t = 200)]
        n: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.cmd) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn kinds_from(arg: &str) -> Result<Vec<TaskKind>> {
    if arg == "all" {
        return Ok(TaskKind::ALL.to_vec());
    }
    TaskKind::from_slug(arg)
        .map(|k| vec![k])
        .ok_or_else(|| anyhow!("unknown task kind {arg:?}"))
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(RunConfig::parse(&text)?)
        }
    }
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.echo"), cfg.render())?;
    Ok(())
}

fn data_path(dir: &Path, kind: TaskKind) -> PathBuf {
    dir.join(format!("{}.jsonl", kind.slug()))
}

fn run(cmd: Cmd) -> Result<()> {
    let sim_cfg = SimConfig::default();
    let tol = Tolerances::default();
    let v = Vocab::builtin();
    match cmd {
        Cmd::Gen { kind, out, config, seed } => {
            let cfg = load_config(&config)?;
            echo_config(&out, &cfg)?;
            for k in kinds_from(&kind)? {
                let mut trajs = Vec::with_capacity(cfg.n_trajs);
                for i in 0..cfg.n_trajs as u64 {
                    let (spec, initial) = sample_task(k, seed + i, &sim_cfg)?;
                    trajs.push(demonstrate(
                        &spec, &initial, seed + i, &sim_cfg, &tol, cfg.noise,
                    )?);
                }
                let steps: usize = trajs.iter().map(|t| t.steps.len()).sum();
                let path = data_path(&out, k);
                write_trajectories(&path, &trajs, v)?;
                println!(
                    "{}: {} trajectories, mean length {:.1} -> {}",
                    k.slug(),
                    trajs.len(),
                    steps as f64 / trajs.len().max(1) as f64,
                    path.display()
                );
            }
        }
        Cmd::Train { policy, data, out, kind, config, seed } => {
            let mut cfg = load_config(&config)?;
            cfg.train.seed = seed;
            echo_config(&out, &cfg)?;
            let kinds = match &kind {
                Some(k) => kinds_from(k)?,
                None => TaskKind::ALL.to_vec(),
            };
            let mut trajs: Vec<Trajectory> = Vec::new();
            for k in kinds {
                let path = data_path(&data, k);
                if path.exists() {
                    trajs.extend(read_trajectories(&path, v)?);
                }
            }
            if trajs.is_empty() {
                bail!("no trajectories found under {}", data.display());
            }
            println!("training {} on {} trajectories", policy.label(), trajs.len());
            let (params, log): (Vec<f64>, TrainLog) = match policy {
                PolicyArg::Oracle => bail!("the oracle has no parameters to train"),
                PolicyArg::Stateless => {
                    let (m, log) = train_mlp(&trajs, &cfg.train, &sim_cfg)?;
                    (m.ps.data, log)
                }
                PolicyArg::ArScratchpad => {
                    let (m, log) = train_transformer(&trajs, &cfg.train, &sim_cfg)?;
                    (m.ps.data, log)
                }
                PolicyArg::Recurrent => {
                    let (m, log) = train_gru(&trajs, &cfg.train, &sim_cfg, false)?;
                    (m.ps.data, log)
                }
                PolicyArg::RecurrentScratchpad => {
                    let (m, log) = train_gru(&trajs, &cfg.train, &sim_cfg, true)?;
                    (m.ps.data, log)
                }
            };
            save_checkpoint(&out.join("model.ckpt"), policy.label(), &params, None)?;
            log.write(&out.join("metrics.jsonl"))?;
            println!(
                "stopped at step {} ({}); checkpoint and metrics in {}",
                log.stopped_at,
                log.stop_reason,
                out.display()
            );
        }
        Cmd::Eval { policy, ckpt, out, kind, config } => {
            let cfg = load_config(&config)?;
            echo_config(&out, &cfg)?;
            let kinds = kinds_from(&kind)?;
            let opts = EvalOptions { max_steps: cfg.max_steps, sim_eval: cfg.sim_eval };
            // Model storage must outlive the borrowed policy.
            let mut mlp = None;
            let mut ar = None;
            let mut gru = None;
            let pol: Policy = match policy {
                PolicyArg::Oracle => Policy::Oracle,
                _ => {
                    let path = ckpt.ok_or_else(|| anyhow!("--ckpt required for {}", policy.label()))?;
                    let ck = load_checkpoint(&path)?;
                    if ck.kind != policy.label() {
                        bail!("checkpoint holds {:?}, asked to evaluate {:?}", ck.kind, policy.label());
                    }
                    match policy {
                        PolicyArg::Stateless => {
                            let mut m = StatelessMlp::new(128, 0);
                            anyhow::ensure!(m.ps.len() == ck.params.len(), "parameter count mismatch");
                            m.ps.data = ck.params;
                            Policy::Mlp(mlp.insert(m))
                        }
                        PolicyArg::ArScratchpad => {
                            let mut m = Transformer::new(TransformerCfg::standard(v.len()), v, 0);
                            anyhow::ensure!(m.ps.len() == ck.params.len(), "parameter count mismatch");
                            m.ps.data = ck.params;
                            Policy::ArScratchpad(ar.insert(m))
                        }
                        PolicyArg::Recurrent | PolicyArg::RecurrentScratchpad => {
                            let mut m = GruPolicy::new(GruCfg::standard(v.len()), 0);
                            anyhow::ensure!(m.ps.len() == ck.params.len(), "parameter count mismatch");
                            m.ps.data = ck.params;
                            Policy::Gru {
                                model: gru.insert(m),
                                scratchpad: policy == PolicyArg::RecurrentScratchpad,
                            }
                        }
                        PolicyArg::Oracle => unreachable!(),
                    }
                }
            };
            let report = evaluate(&pol, &kinds, cfg.n_rollouts, &sim_cfg, &tol, &opts)?;
            report.write_tsv(&out.join("eval.tsv"))?;
            report.write_jsonl(&out.join("eval.jsonl"))?;
            for r in &report.rows {
                println!(
                    "{:<22} {:<22} {:>3}/{:<3} rate {:.2} [{:.2}, {:.2}] steps {:.0}",
                    r.policy, r.kind, r.successes, r.n, r.success_rate, r.wilson_low, r.wilson_high, r.mean_steps
                );
            }
        }
        Cmd::Render { kind, seed, every } => {
            let k = TaskKind::from_slug(&kind).ok_or_else(|| anyhow!("unknown task kind {kind:?}"))?;
            let (spec, initial) = sample_task(k, seed, &sim_cfg)?;
            println!("instruction: {}", spec.instruction);
            println!("{}", render_text(&initial));
            if let Some(every) = every {
                let traj = solve(&spec, &initial, seed, &sim_cfg, &tol)?;
                let trace = traj.replay(&sim_cfg);
                for (i, s) in trace.states.iter().enumerate().skip(1) {
                    if i % every.max(1) == 0 || i == trace.states.len() - 1 {
                        println!("step {} ({})", i, traj.steps[i - 1].desc.render(v));
                        println!("{}", render_text(s));
                    }
                }
            }
        }
        Cmd::Inspect { data, ckpt, aliasing, n } => {
            let mut did = false;
            if let Some(path) = data {
                let trajs = read_trajectories(&path, v)?;
                let steps: usize = trajs.iter().map(|t| t.steps.len()).sum();
                let dones: usize = trajs.iter().map(|t| t.done_count()).sum();
                println!(
                    "{}: {} trajectories, {} steps (mean {:.1}), {} sub-task completions, vocab {}",
                    path.display(),
                    trajs.len(),
                    steps,
                    steps as f64 / trajs.len().max(1) as f64,
                    dones,
                    v.hash_hex()
                );
                did = true;
            }
            if let Some(path) = ckpt {
                let ck = load_checkpoint(&path)?;
                println!(
                    "{}: {} checkpoint, {} parameters{}",
                    path.display(),
                    ck.kind,
                    ck.params.len(),
                    if ck.adam.is_some() { ", with optimizer state" } else { "" }
                );
                did = true;
            }
            if let Some(kind) = aliasing {
                let k = TaskKind::from_slug(&kind).ok_or_else(|| anyhow!("unknown task kind {kind:?}"))?;
                let bound = aliasing_bound(k, n, &sim_cfg, &tol)?;
                println!("{}: aliasing bound {:.4} over {} oracle episodes", k.slug(), bound, n);
                did = true;
            }
            if !did {
                bail!("nothing to inspect; pass --data, --ckpt, or --aliasing");
            }
        }
    }
    Ok(())
}
