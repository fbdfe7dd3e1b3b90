//! `ablate`: the base configuration and its single-factor variants trained
//! over a shared list of seeds, then compared on held-out episodes.

use std::path::PathBuf;

use serde::Serialize;

use crate::metatrain::{evaluate, Record, UpdateStats};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::train::train_into;
use super::{create_run_dir, csv_err, out_root, with_workers, write_text, Manifest, RunError};

#[derive(Clone, Debug, Default)]
pub struct AblateOptions {
    pub config: PathBuf,
    pub overrides: Vec<String>,
    /// Replaces `ablation.seeds` with this single seed.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub updates: u64,
    pub env_steps: u64,
    pub eval_mean_reward: f64,
    pub eval_std_reward: f64,
    pub eval_task_success: f64,
    pub run_dir: PathBuf,
}

/// Overrides turning the base configuration into `variant`.
pub(crate) fn variant_overrides(variant: &str) -> &'static [&'static str] {
    match variant {
        "s1" => &["agent.depth=1"],
        "alpha_off" => &["agent.alpha_trainable=false"],
        "linear" => &["agent.write_rule=\"linear_projected\""],
        "mlp" => &["agent.write_rule=\"mlp_projected\""],
        _ => &[],
    }
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    base: Manifest<'a>,
    variants: &'a [String],
    seeds: &'a [u64],
    runs: Vec<String>,
}

/// Trains every variant for every seed and writes `ablation.csv` (one row
/// per run) and `ablation_summary.csv` (one row per variant).
pub fn cmd_ablate(opts: &AblateOptions, progress: &mut (dyn FnMut(&str, &UpdateStats) + Send)) -> Result<(PathBuf, Vec<AblationRow>), RunError> {
    let mut overrides = opts.overrides.clone();
    if let Some(seed) = opts.seed {
        overrides.push(format!("ablation.seeds=[{seed}]"));
    }
    let base = RunConfig::load(&opts.config, &overrides)?;
    let root = out_root(opts.out.as_deref(), &base);
    let (sweep_dir, sweep_id) = create_run_dir(&root, &base, "ablation-")?;
    write_text(&sweep_dir.join("config.toml"), &base.to_toml())?;

    let base_text = base.to_toml();
    let mut rows = Vec::new();
    for variant in &base.ablation.variants {
        for &seed in &base.ablation.seeds {
            let mut ov: Vec<String> = variant_overrides(variant).iter().map(|s| s.to_string()).collect();
            ov.push(format!("experiment.seed={seed}"));
            let config = RunConfig::from_toml(&base_text, &ov)?;
            let dir = sweep_dir.join(format!("{variant}-seed{seed}"));
            std::fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
            write_text(&dir.join("config.toml"), &config.to_toml())?;
            let (last, ckpt) = train_into(&config, &dir, None, &mut |s| progress(variant, s))?;
            let ck = Checkpoint::load(&ckpt)?;
            let report = with_workers(config.workers, || {
                evaluate(&ck.params, &config.task_spec(), config.eval.episodes, seed, config.eval.policy.mode(), Record::Off, 0)
            })??;
            rows.push(AblationRow {
                variant: variant.clone(),
                seed,
                updates: last.as_ref().map_or(0, |s| s.update),
                env_steps: last.as_ref().map_or(0, |s| s.env_steps),
                eval_mean_reward: report.mean_reward,
                eval_std_reward: report.std_reward,
                eval_task_success: report.task_success,
                run_dir: dir,
            });
        }
    }

    let path = sweep_dir.join("ablation.csv");
    let err = csv_err(&path);
    let mut w = csv::Writer::from_path(&path).map_err(&err)?;
    w.write_record(["variant", "seed", "updates", "env_steps", "eval_mean_reward", "eval_std_reward", "eval_task_success", "run_dir"])
        .map_err(&err)?;
    for r in &rows {
        w.write_record([
            r.variant.clone(),
            r.seed.to_string(),
            r.updates.to_string(),
            r.env_steps.to_string(),
            r.eval_mean_reward.to_string(),
            r.eval_std_reward.to_string(),
            r.eval_task_success.to_string(),
            r.run_dir.display().to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| RunError::io(&path, e))?;

    let path = sweep_dir.join("ablation_summary.csv");
    let err = csv_err(&path);
    let mut w = csv::Writer::from_path(&path).map_err(&err)?;
    w.write_record(["variant", "seeds", "mean_eval_reward", "std_eval_reward", "mean_task_success"]).map_err(&err)?;
    for variant in &base.ablation.variants {
        let rs: Vec<&AblationRow> = rows.iter().filter(|r| &r.variant == variant).collect();
        let n = rs.len() as f64;
        let mean = rs.iter().map(|r| r.eval_mean_reward).sum::<f64>() / n;
        let std = (rs.iter().map(|r| (r.eval_mean_reward - mean).powi(2)).sum::<f64>() / n).sqrt();
        let success = rs.iter().map(|r| r.eval_task_success).sum::<f64>() / n;
        w.write_record([variant.clone(), rs.len().to_string(), mean.to_string(), std.to_string(), success.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(|e| RunError::io(&path, e))?;

    let manifest = SweepManifest {
        base: Manifest::new("ablate", &sweep_id, &base),
        variants: &base.ablation.variants,
        seeds: &base.ablation.seeds,
        runs: rows.iter().map(|r| r.run_dir.display().to_string()).collect(),
    };
    write_text(&sweep_dir.join("manifest.toml"), &toml::to_string(&manifest).expect("manifest serializes"))?;
    Ok((sweep_dir, rows))
}
