//! `eval`: held-out episodes of a checkpoint and/or the random baseline.

use std::path::{Path, PathBuf};

use crate::envs::{harlow, TaskKind};
use crate::metatrain::{evaluate, evaluate_random, EvalReport, Record, Recording};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::{create_run_dir, csv_err, out_root, with_workers, write_text, Manifest, RunError};

/// Plastic layers larger than this record activations only; a full weight
/// trajectory of a 200-neuron layer runs to hundreds of megabytes.
pub const MAX_WEIGHT_RECORD_SIZE: usize = 64;

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub checkpoint: Option<PathBuf>,
    /// Used when no checkpoint is given (random baseline only).
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub episodes: Option<usize>,
    pub maze_size: Option<usize>,
    pub random_baseline: bool,
    pub record_weights: bool,
    pub greedy: bool,
    /// Output directory; defaults to the checkpoint's run directory.
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub agent: Option<EvalReport>,
    pub random: Option<EvalReport>,
}

/// Run directory holding a checkpoint (`<run>/final.ckpt` or
/// `<run>/checkpoints/<name>.ckpt`).
fn run_dir_of(checkpoint: &Path) -> PathBuf {
    let parent = checkpoint.parent().unwrap_or(Path::new("."));
    if parent.file_name().is_some_and(|n| n == "checkpoints") {
        parent.parent().unwrap_or(Path::new(".")).to_path_buf()
    } else {
        parent.to_path_buf()
    }
}

pub fn cmd_eval(opts: &EvalOptions) -> Result<EvalOutcome, RunError> {
    let mut overrides = opts.overrides.clone();
    if let Some(seed) = opts.seed {
        overrides.push(format!("experiment.seed={seed}"));
    }
    if let Some(n) = opts.episodes {
        overrides.push(format!("eval.episodes={n}"));
    }
    if opts.greedy {
        overrides.push("eval.policy=\"greedy\"".into());
    }
    if let Some(size) = opts.maze_size {
        overrides.push(format!("env.maze_size={size}"));
    }
    let checkpoint = opts.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let config = match (&checkpoint, &opts.config) {
        (Some(ck), _) => {
            let c = RunConfig::from_toml(&ck.config.to_toml(), &overrides)?;
            if c.agent != ck.config.agent || c.task != ck.config.task {
                return Err(RunError::Config("eval overrides may not change the agent or the task".into()));
            }
            c
        }
        (None, Some(path)) if opts.random_baseline => RunConfig::load(path, &overrides)?,
        (None, _) if opts.random_baseline => return Err(RunError::Config("--random-baseline without --checkpoint needs --config".into())),
        (None, _) => return Err(RunError::Config("eval needs --checkpoint (or --random-baseline with --config)".into())),
    };
    if opts.record_weights && checkpoint.is_none() {
        return Err(RunError::Config("--record-weights needs --checkpoint".into()));
    }

    let dir = match (&opts.out, &opts.checkpoint) {
        (Some(out), _) => {
            std::fs::create_dir_all(out).map_err(|e| RunError::io(out, e))?;
            out.clone()
        }
        (None, Some(ck)) => run_dir_of(ck),
        (None, None) => {
            let root = out_root(None, &config);
            let (dir, run_id) = create_run_dir(&root, &config, "random-")?;
            Manifest::new("eval", &run_id, &config).write(&dir.join("manifest.toml"))?;
            dir
        }
    };
    write_text(&dir.join("eval_config.toml"), &config.to_toml())?;

    let spec = config.task_spec();
    let episodes = config.eval.episodes;
    let record = match opts.record_weights {
        false => Record::Off,
        true if config.agent.size <= MAX_WEIGHT_RECORD_SIZE => Record::Full,
        true => {
            eprintln!(
                "note: N = {} exceeds {MAX_WEIGHT_RECORD_SIZE}; recording activations without weight snapshots",
                config.agent.size
            );
            Record::Activations
        }
    };
    let record_episodes = config.eval.record_episodes.min(episodes);
    let agent = match &checkpoint {
        Some(ck) => Some(with_workers(config.workers, || {
            evaluate(&ck.params, &spec, episodes, config.seed, config.eval.policy.mode(), record, record_episodes)
        })??),
        None => None,
    };
    let random = if opts.random_baseline { Some(evaluate_random(&spec, episodes, config.seed)?) } else { None };

    let reports: Vec<(&str, &EvalReport)> =
        [("agent", agent.as_ref()), ("random", random.as_ref())].into_iter().filter_map(|(k, r)| r.map(|r| (k, r))).collect();
    write_episodes(&dir.join("eval_episodes.csv"), &reports)?;
    write_summary(&dir.join("eval_summary.csv"), &config, &reports)?;
    if let Some(r) = &agent {
        if !r.recordings.is_empty() {
            write_recordings(&dir, &r.recordings)?;
        }
    }
    Ok(EvalOutcome { dir, config, agent, random })
}

fn trial_cell(t: Option<bool>) -> String {
    match t {
        Some(true) => "1".into(),
        Some(false) => "0".into(),
        None => String::new(),
    }
}

fn write_episodes(path: &Path, reports: &[(&str, &EvalReport)]) -> Result<(), RunError> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    let mut header: Vec<String> =
        ["policy", "episode", "task_seed", "total_reward", "success", "first_reward_step", "goals"].map(String::from).to_vec();
    header.extend((1..=harlow::NUM_TRIALS).map(|k| format!("trial_{k}")));
    w.write_record(&header).map_err(&err)?;
    for (label, report) in reports {
        for row in &report.rows {
            let mut rec = vec![
                label.to_string(),
                row.episode.to_string(),
                row.task_seed.to_string(),
                row.total_reward.to_string(),
                u8::from(row.success).to_string(),
                row.first_reward_step.to_string(),
                row.goals.to_string(),
            ];
            rec.extend((0..harlow::NUM_TRIALS).map(|k| trial_cell(row.trials.get(k).copied().flatten())));
            w.write_record(&rec).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| RunError::io(path, e))
}

fn write_summary(path: &Path, config: &RunConfig, reports: &[(&str, &EvalReport)]) -> Result<(), RunError> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    let mut header: Vec<String> = [
        "policy",
        "task",
        "maze_size",
        "episodes",
        "mean_reward",
        "std_reward",
        "success_rate",
        "task_success",
        "first_reward_step",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=harlow::NUM_TRIALS).map(|k| format!("trial_{k}_accuracy")));
    w.write_record(&header).map_err(&err)?;
    for (label, r) in reports {
        let mut rec = vec![
            label.to_string(),
            config.task.as_str().to_string(),
            if config.task == TaskKind::Maze { config.env.maze_size.to_string() } else { String::new() },
            r.rows.len().to_string(),
            r.mean_reward.to_string(),
            r.std_reward.to_string(),
            r.success_rate.to_string(),
            r.task_success.to_string(),
            r.first_reward_mean.to_string(),
        ];
        rec.extend((0..harlow::NUM_TRIALS).map(|k| r.trial_accuracy.get(k).map(f64::to_string).unwrap_or_default()));
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(|e| RunError::io(path, e))
}

/// `recording.csv` (activations) and, when captured, `weights.csv`.
fn write_recordings(dir: &Path, recordings: &[Recording]) -> Result<(), RunError> {
    let path = dir.join("recording.csv");
    let err = csv_err(&path);
    let mut w = csv::Writer::from_path(&path).map_err(&err)?;
    let n = recordings.iter().find_map(|r| r.activations.first()).map_or(0, Vec::len);
    let mut header: Vec<String> = ["episode", "step", "row", "col", "trial", "action", "reward"].map(String::from).to_vec();
    header.extend((0..n).map(|i| format!("v_{i}")));
    w.write_record(&header).map_err(&err)?;
    for (e, rec) in recordings.iter().enumerate() {
        for t in 0..rec.activations.len() {
            let (r, c) = rec.positions[t];
            let mut row = vec![
                e.to_string(),
                t.to_string(),
                r.to_string(),
                c.to_string(),
                rec.trials[t].to_string(),
                rec.actions[t].to_string(),
                rec.rewards[t].to_string(),
            ];
            row.extend(rec.activations[t].iter().map(f64::to_string));
            w.write_record(&row).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| RunError::io(&path, e))?;

    let wpath = dir.join("weights.csv");
    if recordings.iter().all(|r| r.weights.is_empty()) {
        // A stale file from an earlier full recording would not match.
        if wpath.exists() {
            std::fs::remove_file(&wpath).map_err(|e| RunError::io(&wpath, e))?;
        }
        return Ok(());
    }
    let err = csv_err(&wpath);
    let mut w = csv::Writer::from_path(&wpath).map_err(&err)?;
    let len = recordings[0].weights[0].len();
    let mut header: Vec<String> = ["episode", "step"].map(String::from).to_vec();
    header.extend((0..len).map(|i| format!("w_{i}")));
    w.write_record(&header).map_err(&err)?;
    for (e, rec) in recordings.iter().enumerate() {
        for (t, weights) in rec.weights.iter().enumerate() {
            let mut row = vec![e.to_string(), t.to_string()];
            row.extend(weights.iter().map(f64::to_string));
            w.write_record(&row).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| RunError::io(&wpath, e))
}
