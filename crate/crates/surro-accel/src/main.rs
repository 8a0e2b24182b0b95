use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use surro_accel_core::callcenter::{run_replication, ActionVector, CallCenterEnv, Trajectory};
use surro_accel_core::dqn::{argmax, DqnAgent, LearningCurve, Phase};
use surro_accel_core::neural::Mlp;
use surro_accel_core::pipeline::{collect, describe, fit_surrogate, run_direct, run_pretrain_finetune};
use surro_accel_core::stochastic::RngStream;

use surro_accel::config::{ConfigDocument, Resolved};
use surro_accel::files::{
    read_surrogate, read_trajectories, read_weights, write_curve, write_json, write_surrogate, write_trajectories,
    write_weights,
};
use surro_accel::runner::{rebuild_report, run_experiment, thread_limit};
use surro_accel::{AppError, Result};

/// Call-center DQN training with surrogate pretraining.
#[derive(Parser)]
#[command(name = "surro-accel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Only errors are printed.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run replications and write their trajectories.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        replications: usize,
        /// Q-network weights for a greedy policy; without them every expert
        /// stays in front office.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Train the agent against the simulation only.
    TrainDirect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Record replications under an ε-greedy policy for surrogate fitting.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replications: Option<usize>,
        /// Q-network weights; without them actions are uniformly random.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Fit the surrogate to a trajectory file.
    FitSurrogate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectories: PathBuf,
    },
    /// Pretrain on a surrogate, then fine-tune on the simulation.
    PretrainFinetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        surrogate: PathBuf,
        /// Simulation episodes of the fine-tuning phase.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        pretrain_episodes: Option<usize>,
    },
    /// Full comparison over several seeds under both rewards.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Simulation episode budget per training run.
        #[arg(long)]
        episodes: Option<usize>,
        /// Replications collected for the surrogate.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Recompute an experiment's report from its curve files.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory written by `experiment`.
        #[arg(long)]
        experiment: PathBuf,
    },
}

struct Ctx<'a> {
    cfg: Resolved,
    out: &'a Path,
    quiet: bool,
}

impl Ctx<'_> {
    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

/// Loads the document, applies command-line overrides, validates, and
/// echoes the resolved configuration into the output directory.
fn prepare<'a>(common: &'a Common, edit: impl FnOnce(&mut ConfigDocument)) -> Result<Ctx<'a>> {
    let mut doc = match &common.config {
        Some(p) => ConfigDocument::load(p)?,
        None => ConfigDocument::default(),
    };
    if let Some(seed) = common.seed {
        doc.seed = seed;
    }
    edit(&mut doc);
    let cfg = doc.resolve()?;
    write_json(&common.out.join("resolved_config.json"), &cfg.to_document())?;
    Ok(Ctx {
        cfg,
        out: &common.out,
        quiet: common.quiet,
    })
}

fn greedy(net: &Mlp, experts: usize) -> impl FnMut(&[f64]) -> ActionVector + '_ {
    move |obs| {
        let q = net.predict(obs).unwrap_or_default();
        ActionVector::from_index(argmax(&q), experts).unwrap_or_else(|| ActionVector::all_front_office(experts))
    }
}

fn check_policy(net: &Mlp, ctx: &Ctx) -> Result<()> {
    let cc = &ctx.cfg.call_center;
    if net.input_dim() != cc.observation_dim() || net.output_dim() != 1 << cc.num_experts() {
        return Err(AppError::Validation(format!(
            "weights have shape {:?}; this configuration needs {} inputs and {} outputs",
            net.layer_dims(),
            cc.observation_dim(),
            1 << cc.num_experts()
        )));
    }
    Ok(())
}

fn summarize_curve(ctx: &Ctx, curve: &LearningCurve) {
    let r = curve.rewards();
    if r.is_empty() {
        return;
    }
    let tail = &r[r.len().saturating_sub(10)..];
    ctx.say(&format!(
        "{} episodes; mean reward of the last {}: {:.1}",
        r.len(),
        tail.len(),
        tail.iter().sum::<f64>() / tail.len() as f64
    ));
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { common, replications, weights } => {
            let ctx = prepare(common, |_| {})?;
            let cc = &ctx.cfg.call_center;
            let net = weights.as_deref().map(read_weights).transpose()?;
            if let Some(net) = &net {
                check_policy(net, &ctx)?;
            }
            let mut out: Vec<Trajectory> = Vec::with_capacity(*replications);
            for k in 0..*replications as u64 {
                let mut stream = RngStream::new(ctx.cfg.seed, k);
                let (t, _) = match &net {
                    Some(net) => run_replication(cc, &ctx.cfg.reward, greedy(net, cc.num_experts()), &mut stream),
                    None => run_replication(cc, &ctx.cfg.reward, |_| ActionVector::all_front_office(cc.num_experts()), &mut stream),
                }
                .map_err(AppError::runtime)?;
                ctx.say(&format!("replication {k}: total reward {}", t.total_reward));
                out.push(t);
            }
            write_trajectories(&ctx.out.join("trajectories.jsonl"), &out)
        }
        Command::TrainDirect { common, episodes } => {
            let ctx = prepare(common, |d| {
                if let Some(n) = episodes {
                    d.dqn.episodes = *n;
                }
            })?;
            let c = &ctx.cfg;
            let (agent, curve) = run_direct(&c.call_center, &c.reward, &c.dqn, c.seed).map_err(AppError::runtime)?;
            write_curve(&ctx.out.join("curve.csv"), &curve)?;
            write_weights(&ctx.out.join("qnet.json"), agent.qnet())?;
            summarize_curve(&ctx, &curve);
            Ok(())
        }
        Command::Collect { common, replications, weights } => {
            let ctx = prepare(common, |d| {
                if let Some(n) = replications {
                    d.experiment.collect_replications = *n;
                }
            })?;
            let c = &ctx.cfg;
            let (net, epsilon) = match weights {
                Some(p) => {
                    let net = read_weights(p)?;
                    check_policy(&net, &ctx)?;
                    (net, c.dqn.epsilon)
                }
                None => {
                    let agent = DqnAgent::new(c.dqn.clone(), c.call_center.observation_dim(), 1 << c.call_center.num_experts(), c.seed)
                        .map_err(AppError::runtime)?;
                    (agent.into_qnet(), 1.0)
                }
            };
            let t = collect(&c.call_center, &c.reward, &net, epsilon, c.experiment.collect_replications, c.seed)
                .map_err(AppError::runtime)?;
            write_trajectories(&ctx.out.join("trajectories.jsonl"), &t)?;
            ctx.say(&format!("{} replications, {} epochs recorded", t.len(), t.iter().map(|t| t.records.len()).sum::<usize>()));
            Ok(())
        }
        Command::FitSurrogate { common, trajectories } => {
            let ctx = prepare(common, |_| {})?;
            let c = &ctx.cfg;
            let t = read_trajectories(trajectories)?;
            let (model, rmse) =
                fit_surrogate(&c.call_center, &t, &c.experiment.surrogate, c.seed).map_err(AppError::runtime)?;
            write_surrogate(&ctx.out.join("surrogate.json"), &model)?;
            write_json(&ctx.out.join("rmse.json"), &rmse)?;
            ctx.say(&format!(
                "holdout RMSE over {} rows: waiting {:?}, abandonment {:?}, utilization {:?}, backoffice {:?}, next state {:?}",
                rmse.holdout_rows, rmse.waiting, rmse.abandonment, rmse.utilization, rmse.backoffice, rmse.next_state
            ));
            Ok(())
        }
        Command::PretrainFinetune { common, surrogate, episodes, pretrain_episodes } => {
            let ctx = prepare(common, |d| {
                if let Some(n) = episodes {
                    d.dqn.episodes = *n;
                }
                if let Some(n) = pretrain_episodes {
                    d.experiment.pretrain_surrogate_episodes = *n;
                }
            })?;
            let c = &ctx.cfg;
            let model = read_surrogate(surrogate)?;
            if model.layout != surro_accel_core::surrogate::Layout::of(&c.call_center) {
                return Err(AppError::Validation("surrogate was fitted to a different call-center layout".into()));
            }
            // validates the reward against the layout before any work
            CallCenterEnv::new(c.call_center.clone(), c.reward.clone())?;
            let (agent, curve) =
                run_pretrain_finetune(&c.call_center, &c.reward, Arc::new(model), &c.dqn, &c.experiment, c.seed)
                    .map_err(AppError::runtime)?;
            write_curve(&ctx.out.join("curve.csv"), &curve)?;
            write_weights(&ctx.out.join("qnet.json"), agent.qnet())?;
            let pre = curve.phase_rewards(Phase::Pretrain).len();
            ctx.say(&format!("{pre} surrogate episodes, then fine-tuning:"));
            summarize_curve(&ctx, &curve);
            Ok(())
        }
        Command::Experiment { common, episodes, replications } => {
            let ctx = prepare(common, |d| {
                if let Some(n) = episodes {
                    d.dqn.episodes = *n;
                }
                if let Some(n) = replications {
                    d.experiment.collect_replications = *n;
                }
            })?;
            let quiet = ctx.quiet;
            let progress = move |msg: &str| {
                if !quiet {
                    eprintln!("{msg}");
                }
            };
            let report = run_experiment(&ctx.cfg, ctx.out, thread_limit(), &progress)?;
            ctx.say(&describe("original reward", &report.original));
            ctx.say(&describe("modified reward", &report.modified));
            Ok(())
        }
        Command::Report { common, experiment } => {
            let ctx = prepare(common, |_| {})?;
            let crit = common.config.as_ref().map(|_| ctx.cfg.experiment.stabilization);
            let report = rebuild_report(experiment, crit)?;
            write_json(&ctx.out.join("report.json"), &report)?;
            ctx.say(&describe("original reward", &report.original));
            ctx.say(&describe("modified reward", &report.modified));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
