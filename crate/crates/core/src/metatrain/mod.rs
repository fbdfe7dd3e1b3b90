//! Meta-training: rollouts over sampled tasks, advantages, the A2C loss,
//! gradient computation and the optimiser loop.

mod eval;
mod gae;
mod loss;
mod optim;
mod rollout;
mod train;

use thiserror::Error;

use crate::adjoint::AdjointError;
use crate::envs::EnvError;
use crate::numcore::NumError;
use crate::plastic::PlasticError;

pub use eval::{evaluate, evaluate_random, EpisodeRow, EvalReport};
pub use gae::{compute_gae, normalize};
pub use loss::{bptt_gradient, step_cost, EpisodeLoss, LossCoeffs, LossParts, StepTarget};
pub use optim::{clip_factor, Adam, AdamConfig};
pub use rollout::{random_policy_rollout, rollout, rollout_task, ActionMode, EpisodeSeeds, Record, Recording, Trajectory, Transition};
pub use train::{batch_gradient, GradientBackend, TrainConfig, Trainer, UpdateStats, EVAL_STREAM, TRAIN_STREAM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetaError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Plastic(#[from] PlasticError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Adjoint(#[from] AdjointError),
    #[error("{0}")]
    Mismatch(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("only {survived} of {requested} rollouts finished without numeric failure")]
    TooManyAborted { survived: usize, requested: usize },
}

impl MetaError {
    /// Non-finite values rather than a usage or data problem.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            MetaError::Plastic(PlasticError::NonFinite { .. })
                | MetaError::Num(NumError::NonFinite { .. } | NumError::NonFiniteGradient { .. })
                | MetaError::Adjoint(AdjointError::Forward(PlasticError::NonFinite { .. }))
                | MetaError::TooManyAborted { .. }
        )
    }
}
