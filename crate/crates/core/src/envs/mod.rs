//! Task distributions the agent is meta-trained on.

pub mod harlow;
pub mod maze;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::rng::{uniform_index, Rng};

pub use harlow::{HarlowInstance, HarlowRecord};
pub use maze::MazeInstance;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("action {action} out of range for {num_actions} actions")]
    InvalidAction { action: usize, num_actions: usize },
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("maze size {size} is below the minimum of {min}")]
    MazeTooSmall { size: usize, min: usize },
    #[error("maze generation for seed {seed}, size {size} failed after {attempts} attempts")]
    DegenerateMaze { seed: u64, size: usize, attempts: u64 },
    #[error("parse error: {0}")]
    Parse(String),
}

/// Diagnostics attached to every step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepInfo {
    /// Harlow: index of the trial the step belonged to.
    pub trial_index: Option<usize>,
    /// Harlow: set when a value was chosen, `true` for the rewarded one.
    pub choice: Option<bool>,
    /// The positive task reward was collected on this step.
    pub goal: bool,
    /// Maze: the agent was moved to a fresh spawn cell.
    pub respawned: bool,
    /// Agent position after the step, `(row, col)`; Harlow uses row 0.
    pub position: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// The episode ended because of the step cap rather than the task.
    pub truncated: bool,
    pub info: StepInfo,
}

/// Which task family to sample from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Harlow,
    Maze,
}

impl TaskKind {
    pub fn obs_dim(self) -> usize {
        match self {
            TaskKind::Harlow => harlow::FIELD_OFFSETS.len(),
            TaskKind::Maze => 9,
        }
    }

    pub fn num_actions(self) -> usize {
        match self {
            TaskKind::Harlow => 2,
            TaskKind::Maze => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Harlow => "harlow",
            TaskKind::Maze => "maze",
        }
    }
}

/// Task distribution parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub maze_size: usize,
    pub horizon: usize,
}

impl TaskSpec {
    pub fn harlow() -> Self {
        Self { kind: TaskKind::Harlow, maze_size: 0, horizon: harlow::MAX_STEPS }
    }

    pub fn maze(size: usize) -> Self {
        Self { kind: TaskKind::Maze, maze_size: size, horizon: maze::DEFAULT_HORIZON }
    }

    /// Fresh episode of the task identified by `seed`.
    pub fn instantiate(&self, seed: u64) -> Result<Task, EnvError> {
        Ok(match self.kind {
            TaskKind::Harlow => Task::Harlow(HarlowInstance::reset(seed)),
            TaskKind::Maze => Task::Maze(MazeInstance::generate(seed, self.maze_size, self.horizon)?),
        })
    }
}

/// A running episode of either task.
#[derive(Clone, Debug)]
pub enum Task {
    Harlow(HarlowInstance),
    Maze(MazeInstance),
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Harlow(_) => TaskKind::Harlow,
            Task::Maze(_) => TaskKind::Maze,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        match self {
            Task::Harlow(h) => h.observation(),
            Task::Maze(m) => m.observation(),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        match self {
            Task::Harlow(h) => h.step(harlow::Move::from_index(action)?),
            Task::Maze(m) => m.step(maze::Direction::from_index(action)?),
        }
    }

    pub fn is_done(&self) -> bool {
        match self {
            Task::Harlow(h) => h.done,
            Task::Maze(m) => m.done,
        }
    }

    /// Agent position, `(row, col)`.
    pub fn position(&self) -> (usize, usize) {
        match self {
            Task::Harlow(h) => (0, h.agent_pos),
            Task::Maze(m) => m.agent,
        }
    }
}

/// Summary of one episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeOutcome {
    pub total_reward: f64,
    pub steps: usize,
    /// Step index (1-based) of the first positive task reward.
    pub first_goal_step: Option<usize>,
    pub goals: usize,
    /// Harlow: correctness of each completed trial in order.
    pub choices: Vec<bool>,
}

impl EpisodeOutcome {
    pub fn record(&mut self, r: &StepResult) {
        self.steps += 1;
        self.total_reward += r.reward;
        if r.info.goal {
            self.goals += 1;
            self.first_goal_step.get_or_insert(self.steps);
        }
        if let Some(c) = r.info.choice {
            self.choices.push(c);
        }
    }

    /// Task success: any rewarded choice (Harlow) or any target hit (maze).
    pub fn success(&self) -> bool {
        self.goals > 0
    }
}

/// Runs one episode with uniformly random actions.
pub fn random_rollout(task: &mut Task, rng: &mut Rng) -> Result<EpisodeOutcome, EnvError> {
    let n = task.kind().num_actions();
    let mut out = EpisodeOutcome::default();
    while !task.is_done() {
        let r = task.step(uniform_index(rng, n))?;
        out.record(&r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rng::rng_from_seed;

    #[test]
    fn invalid_actions_are_rejected() {
        let mut t = TaskSpec::harlow().instantiate(0).unwrap();
        assert!(matches!(t.step(2), Err(EnvError::InvalidAction { .. })));
        let mut m = TaskSpec::maze(8).instantiate(0).unwrap();
        assert!(matches!(m.step(4), Err(EnvError::InvalidAction { .. })));
    }

    #[test]
    fn random_rollout_lengths() {
        let mut rng = rng_from_seed(0);
        let mut m = TaskSpec::maze(8).instantiate(1).unwrap();
        assert_eq!(random_rollout(&mut m, &mut rng).unwrap().steps, 100);
        let mut h = TaskSpec::harlow().instantiate(1).unwrap();
        let o = random_rollout(&mut h, &mut rng).unwrap();
        assert!(o.steps <= 250);
        assert!(o.choices.len() <= 5);
    }

    #[test]
    fn first_goal_step_is_recorded_once() {
        let mut out = EpisodeOutcome::default();
        let mut r = StepResult { observation: vec![], reward: 0.0, done: false, truncated: false, info: StepInfo::default() };
        out.record(&r);
        r.info.goal = true;
        r.reward = 10.0;
        out.record(&r);
        out.record(&r);
        assert_eq!(out.first_goal_step, Some(2));
        assert_eq!(out.goals, 2);
        assert_eq!(out.total_reward, 20.0);
    }
}
