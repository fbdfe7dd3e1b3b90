//! `train`: meta-training with metrics, periodic evaluation and checkpoints.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::metatrain::{evaluate, Record, Trainer, UpdateStats};
use crate::plastic::init_agent;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::{create_run_dir, csv_err, out_root, with_workers, write_text, Manifest, RunError};

/// Column names of `metrics.csv`, one row per update.
pub const METRICS_HEADER: [&str; 10] = [
    "step",
    "update",
    "mean_reward",
    "success_rate",
    "first_reward_step",
    "policy_loss",
    "value_loss",
    "entropy",
    "grad_norm",
    "wall_time",
];

const EVAL_CURVE_HEADER: [&str; 7] =
    ["update", "step", "mean_reward", "std_reward", "success_rate", "task_success", "first_reward_step"];

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Required unless resuming.
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Continue from this checkpoint; the agent shape must be unchanged.
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub run_id: String,
    pub config: RunConfig,
    pub last: Option<UpdateStats>,
    pub final_checkpoint: PathBuf,
}

/// Config from the file (or the resumed checkpoint) with overrides and the
/// `--seed` shortcut applied.
fn resolve_config(opts: &TrainOptions, resumed: Option<&Checkpoint>) -> Result<RunConfig, RunError> {
    let mut overrides = opts.overrides.clone();
    if let Some(seed) = opts.seed {
        overrides.push(format!("experiment.seed={seed}"));
    }
    match (&opts.config, resumed) {
        (Some(path), _) => RunConfig::load(path, &overrides),
        (None, Some(ck)) => RunConfig::from_toml(&ck.config.to_toml(), &overrides),
        (None, None) => Err(RunError::Config("train needs --config (or --resume)".into())),
    }
}

pub fn cmd_train(opts: &TrainOptions, progress: &mut (dyn FnMut(&UpdateStats) + Send)) -> Result<TrainOutcome, RunError> {
    let resumed = opts.resume.as_deref().map(Checkpoint::load).transpose()?;
    let config = resolve_config(opts, resumed.as_ref())?;
    if let Some(ck) = &resumed {
        if ck.config.agent != config.agent || ck.config.task != config.task {
            return Err(RunError::Config("resumed checkpoint was trained with a different agent or task".into()));
        }
    }
    let root = out_root(opts.out.as_deref(), &config);
    let (dir, run_id) = create_run_dir(&root, &config, "")?;
    let mut manifest = Manifest::new("train", &run_id, &config);
    manifest.source_checkpoint = opts.resume.as_ref().map(|p| p.display().to_string());
    manifest.write(&dir.join("manifest.toml"))?;
    write_text(&dir.join("config.toml"), &config.to_toml())?;
    let (last, final_checkpoint) = train_into(&config, &dir, resumed, progress)?;
    Ok(TrainOutcome { run_dir: dir, run_id, config, last, final_checkpoint })
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>, RunError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    w.flush().map_err(|e| RunError::io(path, e))?;
    Ok(w)
}

fn fmt(x: f64) -> String {
    x.to_string()
}

/// Trains `config` writing artifacts into an existing `dir`. Returns the
/// last update's stats and the final checkpoint path.
pub(crate) fn train_into(
    config: &RunConfig,
    dir: &Path,
    resumed: Option<Checkpoint>,
    progress: &mut (dyn FnMut(&UpdateStats) + Send),
) -> Result<(Option<UpdateStats>, PathBuf), RunError> {
    let metrics_path = dir.join("metrics.csv");
    let curve_path = dir.join("eval_curve.csv");
    let ckpt_dir = dir.join("checkpoints");
    let mut metrics = csv_writer(&metrics_path, &METRICS_HEADER)?;
    let mut curve = if config.train.eval_every > 0 { Some(csv_writer(&curve_path, &EVAL_CURVE_HEADER)?) } else { None };
    if config.train.checkpoint_every > 0 {
        std::fs::create_dir_all(&ckpt_dir).map_err(|e| RunError::io(&ckpt_dir, e))?;
    }

    let spec = config.task_spec();
    let mut trainer = match resumed {
        Some(ck) => {
            let mut t = Trainer::new(ck.params, config.train.clone(), spec)?;
            t.adam.m = ck.adam.m;
            t.adam.v = ck.adam.v;
            t.adam.t = ck.adam.t;
            t.update = ck.update;
            t.env_steps = ck.env_steps;
            t
        }
        None => Trainer::new(init_agent(&config.agent), config.train.clone(), spec)?,
    };
    let snapshot = |t: &Trainer| Checkpoint {
        config: config.clone(),
        params: t.params.clone(),
        adam: t.adam.clone(),
        update: t.update,
        env_steps: t.env_steps,
    };

    let start = Instant::now();
    let mut last = None;
    with_workers(config.workers, || -> Result<(), RunError> {
        while !trainer.finished() {
            let s = match trainer.train_step() {
                Ok(s) => s,
                Err(e) => {
                    let e = RunError::from(e);
                    if e.exit_code() == 4 {
                        // Keep the last finite parameters for inspection.
                        snapshot(&trainer).save(&dir.join("aborted.ckpt"))?;
                    }
                    return Err(e);
                }
            };
            let row = [
                s.env_steps.to_string(),
                s.update.to_string(),
                fmt(s.mean_reward),
                fmt(s.success_rate),
                fmt(s.first_reward_step),
                fmt(s.policy_loss),
                fmt(s.value_loss),
                fmt(s.entropy),
                fmt(s.grad_norm),
                format!("{:.3}", start.elapsed().as_secs_f64()),
            ];
            metrics.write_record(&row).map_err(csv_err(&metrics_path))?;
            metrics.flush().map_err(|e| RunError::io(&metrics_path, e))?;
            if let Some(curve) = curve.as_mut().filter(|_| s.update % config.train.eval_every == 0) {
                let r = evaluate(&trainer.params, &trainer.task, config.train.eval_episodes, config.seed, config.eval.policy.mode(), Record::Off, 0)?;
                let row = [
                    s.update.to_string(),
                    s.env_steps.to_string(),
                    fmt(r.mean_reward),
                    fmt(r.std_reward),
                    fmt(r.success_rate),
                    fmt(r.task_success),
                    fmt(r.first_reward_mean),
                ];
                curve.write_record(&row).map_err(csv_err(&curve_path))?;
                curve.flush().map_err(|e| RunError::io(&curve_path, e))?;
            }
            if config.train.checkpoint_every > 0 && s.update % config.train.checkpoint_every == 0 {
                snapshot(&trainer).save(&ckpt_dir.join(format!("update_{:06}.ckpt", s.update)))?;
            }
            progress(&s);
            last = Some(s);
        }
        Ok(())
    })??;
    let final_path = dir.join("final.ckpt");
    snapshot(&trainer).save(&final_path)?;
    Ok((last, final_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> PathBuf {
        let path = dir.join("tiny.toml");
        std::fs::write(
            &path,
            "[experiment]\nname = \"tiny\"\ntask = \"harlow\"\nseed = 3\n[agent]\nsize = 6\nembed_hidden = 8\nreadout_hidden = 8\n[train]\nmeta_batch_size = 4\nmax_updates = 3\neval_every = 2\neval_episodes = 4\ncheckpoint_every = 2\n",
        )
        .unwrap();
        path
    }

    #[test]
    fn writes_metrics_and_checkpoints() {
        let tmp = tempfile::tempdir().unwrap();
        let opts = TrainOptions { config: Some(tiny(tmp.path())), out: Some(tmp.path().join("out")), ..Default::default() };
        let mut seen = 0;
        let out = cmd_train(&opts, &mut |_| seen += 1).unwrap();
        assert_eq!(seen, 3);
        let text = std::fs::read_to_string(out.run_dir.join("metrics.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER.join(","));
        assert_eq!(text.lines().count(), 4);
        assert!(out.run_dir.join("checkpoints/update_000002.ckpt").is_file());
        assert_eq!(std::fs::read_to_string(out.run_dir.join("eval_curve.csv")).unwrap().lines().count(), 2);
        let ck = Checkpoint::load(&out.final_checkpoint).unwrap();
        assert_eq!(ck.update, 3);
        let echoed = RunConfig::load(&out.run_dir.join("config.toml"), &[]).unwrap();
        assert_eq!(echoed, out.config);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny(tmp.path());
        let out = Some(tmp.path().join("out"));
        let full = cmd_train(&TrainOptions { config: Some(cfg.clone()), out: out.clone(), ..Default::default() }, &mut |_| {}).unwrap();
        let resumed = cmd_train(
            &TrainOptions {
                config: Some(cfg),
                out,
                resume: Some(full.run_dir.join("checkpoints/update_000002.ckpt")),
                ..Default::default()
            },
            &mut |_| {},
        )
        .unwrap();
        let a = Checkpoint::load(&full.final_checkpoint).unwrap();
        let b = Checkpoint::load(&resumed.final_checkpoint).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.adam, b.adam);
    }
}
