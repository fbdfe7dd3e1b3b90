//! Episode rollouts of the plastic agent.

use crate::envs::{EnvError, EpisodeOutcome, Task, TaskSpec};
use crate::numcore::rng::{derive_seed, rng_from_seed, Rng};
use crate::numcore::{Matrix, Vector};
use crate::plastic::{agent_step_encoded, encode_input, AgentParams, SynapticState};

use super::MetaError;

/// How actions are chosen from the policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Greedy,
}

/// One agent/environment interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Encoded agent input `[obs, one_hot(prev_action), prev_reward]`.
    pub input: Vector<f64>,
    pub action: usize,
    pub reward: f64,
    pub log_prob: f64,
    pub value: f64,
    pub entropy: f64,
    pub done: bool,
}

/// How much per-step state a rollout keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Record {
    Off,
    /// Activations, positions, actions and rewards.
    Activations,
    /// Everything above plus every plastic matrix.
    Full,
}

/// Optional per-step diagnostics for the analysis tools.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Recording {
    /// Flattened `W_t` after each step, preceded by `W_0`; empty unless
    /// recorded with [`Record::Full`].
    pub weights: Vec<Vec<f64>>,
    /// Final plastic activation `v^(S)` at each step.
    pub activations: Vec<Vec<f64>>,
    /// Agent position at the time of each observation.
    pub positions: Vec<(usize, usize)>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Harlow trial index at each step (0 for the maze).
    pub trials: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub task_seed: u64,
    pub steps: Vec<Transition>,
    /// Initial plastic matrix the episode started from.
    pub w_init: Matrix<f64>,
    /// The episode was cut by the step cap.
    pub truncated: bool,
    /// Value estimate after the last step when truncated, else 0.
    pub bootstrap: f64,
    pub outcome: EpisodeOutcome,
    pub recording: Option<Recording>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.value).collect()
    }

    pub fn inputs(&self) -> Vec<Vector<f64>> {
        self.steps.iter().map(|s| s.input.clone()).collect()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

/// Seeds of one episode: the task draw and the agent's private stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeSeeds {
    pub task: u64,
    pub agent: u64,
}

impl EpisodeSeeds {
    /// Seeds for episode `index` of stream `stream` under master seed `seed`.
    pub fn derive(seed: u64, stream: u64, round: u64, index: u64) -> Self {
        Self { task: derive_seed(seed, &[stream, round, index, 0]), agent: derive_seed(seed, &[stream, round, index, 1]) }
    }
}

/// Runs one full episode: `W` starts from `W_0` and is carried across steps.
pub fn rollout(
    params: &AgentParams<f64>,
    spec: &TaskSpec,
    seeds: EpisodeSeeds,
    mode: ActionMode,
    record: Record,
) -> Result<Trajectory, MetaError> {
    let mut task = spec.instantiate(seeds.task)?;
    let mut rng = rng_from_seed(seeds.agent);
    rollout_task(params, &mut task, seeds.task, &mut rng, mode, record)
}

pub fn rollout_task(
    params: &AgentParams<f64>,
    task: &mut Task,
    task_seed: u64,
    rng: &mut Rng,
    mode: ActionMode,
    record: Record,
) -> Result<Trajectory, MetaError> {
    let num_actions = params.num_actions();
    if task.kind().num_actions() != num_actions {
        return Err(MetaError::Mismatch(format!(
            "agent has {num_actions} actions, task {} has {}",
            task.kind().as_str(),
            task.kind().num_actions()
        )));
    }
    let w_init = params.initial_weights(rng);
    let mut state = SynapticState::new(w_init.clone());
    let mut recording = match record {
        Record::Off => None,
        Record::Activations => Some(Recording::default()),
        Record::Full => Some(Recording { weights: vec![w_init.as_slice().to_vec()], ..Recording::default() }),
    };
    let mut obs = task.observation();
    let (mut prev_action, mut prev_reward) = (None, 0.0);
    let mut steps = Vec::new();
    let mut outcome = EpisodeOutcome::default();
    let mut truncated = false;
    while !task.is_done() {
        let x: Vector<f64> = encode_input(&obs, prev_action, prev_reward, num_actions);
        let position = task.position();
        let out = agent_step_encoded(params, &state, &x)?;
        let action = match mode {
            ActionMode::Sample => out.policy.sample(rng),
            ActionMode::Greedy => out.policy.greedy(),
        };
        let result = task.step(action)?;
        outcome.record(&result);
        if let Some(rec) = recording.as_mut() {
            if record == Record::Full {
                rec.weights.push(out.state.w.as_slice().to_vec());
            }
            rec.actions.push(action);
            rec.rewards.push(result.reward);
            rec.trials.push(result.info.trial_index.unwrap_or(0));
            rec.activations.push(out.trace.activation().as_slice().to_vec());
            rec.positions.push(position);
        }
        steps.push(Transition {
            input: x,
            action,
            reward: result.reward,
            log_prob: out.policy.log_prob(action),
            value: out.value,
            entropy: out.policy.entropy(),
            done: result.done,
        });
        truncated = result.truncated;
        obs = result.observation;
        prev_action = Some(action);
        prev_reward = result.reward;
        state = out.state;
    }
    let bootstrap = if truncated {
        let x = encode_input(&obs, prev_action, prev_reward, num_actions);
        agent_step_encoded(params, &state, &x)?.value
    } else {
        0.0
    };
    Ok(Trajectory { task_seed, steps, w_init, truncated, bootstrap, outcome, recording })
}

/// Same episode with uniformly random actions and no agent.
pub fn random_policy_rollout(spec: &TaskSpec, seeds: EpisodeSeeds) -> Result<EpisodeOutcome, EnvError> {
    let mut task = spec.instantiate(seeds.task)?;
    let mut rng = rng_from_seed(seeds.agent);
    crate::envs::random_rollout(&mut task, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plastic::{init_agent, AgentConfig, TriTable};

    fn tiny_harlow() -> AgentParams<f64> {
        let mut cfg = AgentConfig::harlow();
        cfg.size = 6;
        cfg.embed_hidden = 5;
        cfg.readout_hidden = 5;
        init_agent(&cfg)
    }

    #[test]
    fn rollout_is_deterministic() {
        let p = tiny_harlow();
        let seeds = EpisodeSeeds::derive(3, 0, 0, 1);
        let a = rollout(&p, &TaskSpec::harlow(), seeds, ActionMode::Sample, Record::Off).unwrap();
        let b = rollout(&p, &TaskSpec::harlow(), seeds, ActionMode::Sample, Record::Off).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.w_init, b.w_init);
    }

    #[test]
    fn exactly_one_terminal_flag() {
        let p = tiny_harlow();
        for i in 0..5 {
            let t = rollout(&p, &TaskSpec::harlow(), EpisodeSeeds::derive(1, 0, 0, i), ActionMode::Sample, Record::Off).unwrap();
            assert_eq!(t.steps.iter().filter(|s| s.done).count(), 1);
            assert!(t.steps.last().unwrap().done);
            assert!(t.len() <= 250);
            assert!(t.steps.iter().all(|s| s.log_prob.is_finite()));
            if !t.truncated {
                assert_eq!(t.bootstrap, 0.0);
            }
        }
    }

    #[test]
    fn maze_episodes_are_truncations_with_bootstrap() {
        let mut cfg = AgentConfig::maze();
        cfg.size = 6;
        let p: AgentParams<f64> = init_agent(&cfg);
        let t = rollout(&p, &TaskSpec::maze(8), EpisodeSeeds::derive(1, 0, 0, 0), ActionMode::Sample, Record::Full).unwrap();
        assert_eq!(t.len(), 100);
        assert!(t.truncated);
        assert_ne!(t.bootstrap, 0.0);
        let rec = t.recording.unwrap();
        assert_eq!(rec.weights.len(), 101);
        assert_eq!(rec.activations.len(), 100);
    }

    #[test]
    fn frozen_weights_constant_policy_for_constant_input() {
        let mut p = tiny_harlow();
        let mut beta = TriTable::zeros(p.depth());
        for s in 1..=p.depth() {
            beta.set(s, s - 1, 1.0);
        }
        p.plasticity.beta = beta;
        let t = rollout(&p, &TaskSpec::harlow(), EpisodeSeeds::derive(0, 0, 0, 0), ActionMode::Sample, Record::Full).unwrap();
        let w = &t.recording.unwrap().weights;
        assert!(w.iter().all(|x| x == &w[0]));
        // Equal inputs give equal log-probabilities for equal actions.
        for a in &t.steps {
            for b in &t.steps {
                if a.input == b.input && a.action == b.action {
                    assert_eq!(a.log_prob, b.log_prob);
                }
            }
        }
    }
}
