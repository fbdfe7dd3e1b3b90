//! The meta-training loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint::{adjoint_gradient, default_budget, make_schedule};
use crate::envs::{harlow, TaskKind, TaskSpec};
use crate::plastic::AgentParams;

use super::gae::{compute_gae, normalize};
use super::loss::{bptt_gradient, EpisodeLoss, LossCoeffs, LossParts, StepTarget};
use super::optim::{Adam, AdamConfig};
use super::rollout::{rollout, ActionMode, EpisodeSeeds, Record, Trajectory};
use super::MetaError;

/// Seed stream of training episodes.
pub const TRAIN_STREAM: u64 = 1;
/// Seed stream of held-out evaluation episodes.
pub const EVAL_STREAM: u64 = 2;

/// How the per-episode gradient is computed. Both give the same gradient;
/// the adjoint sweep keeps far fewer matrices alive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientBackend {
    Bptt,
    Adjoint,
}

impl GradientBackend {
    pub fn as_str(self) -> &'static str {
        match self {
            GradientBackend::Bptt => "bptt",
            GradientBackend::Adjoint => "adjoint",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub meta_batch_size: usize,
    pub discount: f64,
    pub gae_lambda: f64,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
    pub total_env_steps: u64,
    /// Updates between evaluations; 0 disables periodic evaluation.
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Updates between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    pub seed: u64,
    pub normalize_advantages: bool,
    pub max_grad_norm: f64,
    pub gradient: GradientBackend,
    /// Stored-matrix budget of the adjoint sweep; `None` means `ceil(sqrt(T))`.
    pub checkpoint_budget: Option<usize>,
    /// Hard cap on updates regardless of the step budget.
    pub max_updates: Option<u64>,
}

impl TrainConfig {
    pub fn harlow() -> Self {
        Self {
            learning_rate: 5e-4,
            meta_batch_size: 50,
            discount: 0.9,
            gae_lambda: 1.0,
            value_coeff: 0.4,
            entropy_coeff: 3e-2,
            total_env_steps: 3_000_000,
            eval_every: 50,
            eval_episodes: 100,
            checkpoint_every: 100,
            seed: 0,
            normalize_advantages: true,
            max_grad_norm: 0.5,
            gradient: GradientBackend::Adjoint,
            checkpoint_budget: None,
            max_updates: None,
        }
    }

    pub fn maze() -> Self {
        Self {
            learning_rate: 5e-4,
            meta_batch_size: 20,
            discount: 0.99,
            gae_lambda: 0.95,
            value_coeff: 0.4,
            entropy_coeff: 1e-2,
            total_env_steps: 2_000_000,
            eval_episodes: 50,
            ..Self::harlow()
        }
    }

    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Harlow => Self::harlow(),
            TaskKind::Maze => Self::maze(),
        }
    }

    pub fn validate(&self) -> Result<(), MetaError> {
        let unit = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(MetaError::Config(format!("{name} must lie in [0, 1], got {x}")))
            }
        };
        unit("discount", self.discount)?;
        unit("gae_lambda", self.gae_lambda)?;
        if self.meta_batch_size == 0 {
            return Err(MetaError::Config("meta_batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MetaError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_grad_norm.is_nan() || self.max_grad_norm <= 0.0 {
            return Err(MetaError::Config(format!("max_grad_norm must be positive, got {}", self.max_grad_norm)));
        }
        if matches!(self.checkpoint_budget, Some(b) if b < 2) {
            return Err(MetaError::Config("checkpoint_budget must be at least 2".into()));
        }
        Ok(())
    }

    pub fn coeffs(&self) -> LossCoeffs {
        LossCoeffs { value: self.value_coeff, entropy: self.entropy_coeff }
    }
}

/// Diagnostics of one update.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateStats {
    pub update: u64,
    pub env_steps: u64,
    pub mean_reward: f64,
    /// Harlow: accuracy on trials 2-5 (missing trials count as wrong).
    /// Maze: fraction of episodes with at least one target hit.
    pub success_rate: f64,
    /// Mean step of the first positive reward, horizon when none.
    pub first_reward_step: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub trajectories: usize,
    /// The update was skipped because the loss or gradient was not finite.
    pub skipped: bool,
}

/// Batch-level success metric shared by training and evaluation.
pub(crate) fn success_metric(kind: TaskKind, outcomes: &[&crate::envs::EpisodeOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    match kind {
        TaskKind::Harlow => {
            let later = harlow::NUM_TRIALS - 1;
            let correct: usize = outcomes.iter().map(|o| o.choices.iter().skip(1).filter(|&&c| c).count()).sum();
            correct as f64 / (later * outcomes.len()) as f64
        }
        TaskKind::Maze => outcomes.iter().filter(|o| o.success()).count() as f64 / outcomes.len() as f64,
    }
}

/// Gradient of the batch loss, summed over trajectories in index order.
pub fn batch_gradient(
    params: &AgentParams<f64>,
    trajectories: &[Trajectory],
    config: &TrainConfig,
) -> Result<(AgentParams<f64>, LossParts), MetaError> {
    let mut targets: Vec<Vec<StepTarget>> = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let (adv, ret) = compute_gae(&t.rewards(), &t.values(), t.bootstrap, config.discount, config.gae_lambda);
        targets.push(adv.into_iter().zip(ret).map(|(advantage, ret)| StepTarget { advantage, ret }).collect());
    }
    if config.normalize_advantages {
        let mut flat: Vec<f64> = targets.iter().flatten().map(|s| s.advantage).collect();
        normalize(&mut flat);
        for (s, a) in targets.iter_mut().flatten().zip(flat) {
            s.advantage = a;
        }
    }
    let total: usize = trajectories.iter().map(Trajectory::len).sum();
    let scale = 1.0 / total.max(1) as f64;
    let coeffs = config.coeffs();
    let per_traj: Vec<Result<(AgentParams<f64>, LossParts), MetaError>> = trajectories
        .par_iter()
        .zip(targets.par_iter())
        .map(|(traj, tg)| {
            let inputs = traj.inputs();
            let actions = traj.actions();
            let ep = EpisodeLoss { inputs: &inputs, actions: &actions, targets: tg, w_init: &traj.w_init, coeffs, scale };
            match config.gradient {
                GradientBackend::Bptt => bptt_gradient(params, &ep),
                GradientBackend::Adjoint => {
                    let budget = config.checkpoint_budget.unwrap_or_else(|| default_budget(ep.len()));
                    let schedule = make_schedule(ep.len(), budget)?;
                    let r = adjoint_gradient(params, &ep, &schedule)?;
                    Ok((r.grad, r.parts))
                }
            }
        })
        .collect();
    let mut grad = params.zeros_like();
    let mut parts = LossParts::default();
    for r in per_traj {
        let (g, p) = r?;
        grad.axpy(1.0, &g);
        parts.add(&p);
    }
    Ok((grad, parts))
}

/// Optimiser state plus progress counters; everything needed to resume.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub params: AgentParams<f64>,
    pub adam: Adam,
    pub config: TrainConfig,
    pub task: TaskSpec,
    pub update: u64,
    pub env_steps: u64,
}

impl Trainer {
    pub fn new(params: AgentParams<f64>, config: TrainConfig, task: TaskSpec) -> Result<Self, MetaError> {
        config.validate()?;
        let mut adam_cfg = AdamConfig::with_lr(config.learning_rate);
        adam_cfg.max_grad_norm = Some(config.max_grad_norm);
        let adam = Adam::new(adam_cfg, params.num_scalars());
        Ok(Self { params, adam, config, task, update: 0, env_steps: 0 })
    }

    pub fn finished(&self) -> bool {
        self.env_steps >= self.config.total_env_steps || self.config.max_updates.is_some_and(|m| self.update >= m)
    }

    /// Rollouts of the current update, in task-index order. Numeric
    /// failures drop the episode as long as at least half survive.
    pub fn collect_meta_batch(&self) -> Result<Vec<Trajectory>, MetaError> {
        let m = self.config.meta_batch_size;
        let results: Vec<Result<Trajectory, MetaError>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let seeds = EpisodeSeeds::derive(self.config.seed, TRAIN_STREAM, self.update, i as u64);
                rollout(&self.params, &self.task, seeds, ActionMode::Sample, Record::Off)
            })
            .collect();
        let mut out = Vec::with_capacity(m);
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(t) => out.push(t),
                Err(e) if e.is_numeric() => log::warn!("update {}: dropping rollout {i}: {e}", self.update),
                Err(e) => return Err(e),
            }
        }
        if out.len() * 2 < m {
            return Err(MetaError::TooManyAborted { survived: out.len(), requested: m });
        }
        Ok(out)
    }

    /// One collect, advantage, gradient and optimiser step.
    pub fn train_step(&mut self) -> Result<UpdateStats, MetaError> {
        let batch = self.collect_meta_batch()?;
        let steps: usize = batch.iter().map(Trajectory::len).sum();
        let outcomes: Vec<_> = batch.iter().map(|t| &t.outcome).collect();
        let n = batch.len() as f64;
        let mean_reward = outcomes.iter().map(|o| o.total_reward).sum::<f64>() / n;
        let horizon = self.task.horizon;
        let first_reward_step = outcomes.iter().map(|o| o.first_goal_step.unwrap_or(horizon) as f64).sum::<f64>() / n;
        let success_rate = success_metric(self.task.kind, &outcomes);

        let (grad, parts) = batch_gradient(&self.params, &batch, &self.config)?;
        let loss = parts.total(self.config.coeffs());
        let finite = loss.is_finite() && grad.is_finite();
        let grad_norm = if finite {
            self.adam.step(&mut self.params, &grad)
        } else {
            log::warn!("update {}: non-finite loss or gradient, keeping previous parameters", self.update);
            f64::NAN
        };
        self.update += 1;
        self.env_steps += steps as u64;
        Ok(UpdateStats {
            update: self.update,
            env_steps: self.env_steps,
            mean_reward,
            success_rate,
            first_reward_step,
            policy_loss: parts.policy,
            value_loss: parts.value,
            entropy: parts.entropy,
            grad_norm,
            trajectories: batch.len(),
            skipped: !finite,
        })
    }

    /// Trains until the step budget (or update cap) is reached, calling
    /// `on_update` after every update.
    pub fn run(&mut self, mut on_update: impl FnMut(&Trainer, &UpdateStats) -> Result<(), MetaError>) -> Result<(), MetaError> {
        while !self.finished() {
            let stats = self.train_step()?;
            on_update(self, &stats)?;
        }
        Ok(())
    }
}
