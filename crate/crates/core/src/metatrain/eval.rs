//! Held-out evaluation of a trained agent or of the random baseline.

use rayon::prelude::*;

use crate::envs::{harlow, EpisodeOutcome, TaskKind, TaskSpec};
use crate::plastic::AgentParams;

use super::rollout::{random_policy_rollout, rollout, ActionMode, EpisodeSeeds, Record, Recording};
use super::train::{success_metric, EVAL_STREAM};
use super::MetaError;

/// Per-episode evaluation record.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    pub episode: usize,
    pub task_seed: u64,
    pub total_reward: f64,
    pub success: bool,
    /// First positive reward step, horizon when none.
    pub first_reward_step: usize,
    pub goals: usize,
    /// Harlow trial outcomes, `None` for trials never completed.
    pub trials: Vec<Option<bool>>,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub kind: TaskKind,
    pub rows: Vec<EpisodeRow>,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub success_rate: f64,
    pub first_reward_mean: f64,
    /// Harlow: fraction correct per trial position (missing counts as wrong).
    pub trial_accuracy: Vec<f64>,
    /// Harlow: accuracy on trials 2-5; maze: same as `success_rate`.
    pub task_success: f64,
    pub recordings: Vec<Recording>,
}

fn summarize(kind: TaskKind, horizon: usize, seeds: &[EpisodeSeeds], outcomes: Vec<EpisodeOutcome>, recordings: Vec<Recording>) -> EvalReport {
    let n = outcomes.len().max(1) as f64;
    let trials_len = if kind == TaskKind::Harlow { harlow::NUM_TRIALS } else { 0 };
    let rows: Vec<EpisodeRow> = outcomes
        .iter()
        .zip(seeds)
        .enumerate()
        .map(|(i, (o, s))| EpisodeRow {
            episode: i,
            task_seed: s.task,
            total_reward: o.total_reward,
            success: o.success(),
            first_reward_step: o.first_goal_step.unwrap_or(horizon),
            goals: o.goals,
            trials: (0..trials_len).map(|k| o.choices.get(k).copied()).collect(),
        })
        .collect();
    let mean_reward = rows.iter().map(|r| r.total_reward).sum::<f64>() / n;
    let std_reward = (rows.iter().map(|r| (r.total_reward - mean_reward).powi(2)).sum::<f64>() / n).sqrt();
    let success_rate = rows.iter().filter(|r| r.success).count() as f64 / n;
    let first_reward_mean = rows.iter().map(|r| r.first_reward_step as f64).sum::<f64>() / n;
    let trial_accuracy = (0..trials_len)
        .map(|k| rows.iter().filter(|r| r.trials[k] == Some(true)).count() as f64 / n)
        .collect();
    let refs: Vec<&EpisodeOutcome> = outcomes.iter().collect();
    let task_success = success_metric(kind, &refs);
    EvalReport { kind, rows, mean_reward, std_reward, success_rate, first_reward_mean, trial_accuracy, task_success, recordings }
}

fn eval_seeds(seed: u64, episodes: usize) -> Vec<EpisodeSeeds> {
    (0..episodes as u64).map(|i| EpisodeSeeds::derive(seed, EVAL_STREAM, 0, i)).collect()
}

/// Runs `episodes` held-out episodes of the agent, recording the first
/// `record_episodes` of them at level `record`.
pub fn evaluate(
    params: &AgentParams<f64>,
    spec: &TaskSpec,
    episodes: usize,
    seed: u64,
    mode: ActionMode,
    record: Record,
    record_episodes: usize,
) -> Result<EvalReport, MetaError> {
    let seeds = eval_seeds(seed, episodes);
    let results: Vec<Result<_, MetaError>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| rollout(params, spec, s, mode, if i < record_episodes { record } else { Record::Off }))
        .collect();
    let mut outcomes = Vec::with_capacity(episodes);
    let mut recordings = Vec::new();
    for r in results {
        let t = r?;
        outcomes.push(t.outcome);
        if let Some(rec) = t.recording {
            recordings.push(rec);
        }
    }
    Ok(summarize(spec.kind, spec.horizon, &seeds, outcomes, recordings))
}

/// Same held-out episodes under uniformly random actions.
pub fn evaluate_random(spec: &TaskSpec, episodes: usize, seed: u64) -> Result<EvalReport, MetaError> {
    let seeds = eval_seeds(seed, episodes);
    let outcomes = seeds
        .iter()
        .map(|&s| random_policy_rollout(spec, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(spec.kind, spec.horizon, &seeds, outcomes, Vec::new()))
}
