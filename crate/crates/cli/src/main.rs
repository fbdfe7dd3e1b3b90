//! Command line for training, evaluating, ablating and analysing agents.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metods::metatrain::UpdateStats;
use metods::run::{cmd_ablate, cmd_analyze, cmd_eval, cmd_train, AblateOptions, EvalOptions, RunError, TrainOptions};

#[derive(Parser)]
#[command(name = "metods", version, about = "Meta-learned synaptic plasticity agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Override a config key, e.g. `train.learning_rate=1e-3` (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Experiment seed (shortcut for `--override experiment.seed=N`).
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Output root; defaults to $METODS_OUT, then `experiment.out_dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train an agent.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print a progress line every this many updates.
        #[arg(long, default_value_t = 10)]
        log_every: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint (and/or the random policy) on held-out episodes.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Config for a checkpoint-free random baseline.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        maze_size: Option<usize>,
        #[arg(long)]
        random_baseline: bool,
        /// Record activations and weight snapshots for `analyze`.
        #[arg(long)]
        record_weights: bool,
        /// Act greedily instead of sampling.
        #[arg(long)]
        greedy: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train the base config and its ablations over shared seeds.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Export the analysis CSV bundle of a recorded run directory.
    Analyze {
        run_dir: PathBuf,
    },
}

fn progress_line(prefix: &str, s: &UpdateStats) {
    eprintln!(
        "{prefix}update {:>6}  steps {:>9}  reward {:>7.3}  success {:.3}  first {:>6.1}  grad {:.3}{}",
        s.update,
        s.env_steps,
        s.mean_reward,
        s.success_rate,
        s.first_reward_step,
        s.grad_norm,
        if s.skipped { "  (skipped)" } else { "" }
    );
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Train { config, resume, log_every, common } => {
            let opts = TrainOptions { config, overrides: common.overrides, seed: common.seed, out: common.out, resume };
            let out = cmd_train(&opts, &mut |s| {
                if log_every > 0 && s.update % log_every == 0 {
                    progress_line("", s);
                }
            })?;
            println!("{}", out.run_dir.display());
        }
        Command::Eval { checkpoint, config, episodes, maze_size, random_baseline, record_weights, greedy, common } => {
            let opts = EvalOptions {
                checkpoint,
                config,
                overrides: common.overrides,
                seed: common.seed,
                episodes,
                maze_size,
                random_baseline,
                record_weights,
                greedy,
                out: common.out,
            };
            let out = cmd_eval(&opts)?;
            for (label, r) in [("agent", &out.agent), ("random", &out.random)] {
                if let Some(r) = r {
                    println!(
                        "{label}: reward {:.3} ± {:.3}  success {:.3}  task success {:.3}  first reward {:.1}",
                        r.mean_reward, r.std_reward, r.success_rate, r.task_success, r.first_reward_mean
                    );
                }
            }
            println!("{}", out.dir.display());
        }
        Command::Ablate { config, common } => {
            let opts = AblateOptions { config, overrides: common.overrides, seed: common.seed, out: common.out };
            let (dir, rows) = cmd_ablate(&opts, &mut |variant, s| {
                if s.update % 50 == 0 {
                    progress_line(&format!("[{variant}] "), s);
                }
            })?;
            for r in &rows {
                println!("{:<10} seed {:<4} reward {:.3}  task success {:.3}", r.variant, r.seed, r.eval_mean_reward, r.eval_task_success);
            }
            println!("{}", dir.display());
        }
        Command::Analyze { run_dir } => {
            let out = cmd_analyze(&run_dir)?;
            for note in &out.notes {
                eprintln!("note: {note}");
            }
            for f in &out.files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
