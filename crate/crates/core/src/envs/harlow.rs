//! One-dimensional Harlow association task.
//!
//! Conventions used here:
//! - the line has 17 cells, fixation at the centre (cell 8), the two value
//!   cells at cells 5 and 11;
//! - an episode starts in the choice phase with the agent on the fixation
//!   cell; arriving on either value cell ends the trial with that value's
//!   reward and starts the fixation phase;
//! - arriving on the fixation cell during the fixation phase pays +0.2 and
//!   starts the next trial with a fresh left/right permutation;
//! - the episode ends after the fifth trial or after 250 steps.
//!
//! Observation: the 8 cells around the agent (offsets -4..=-1, 1..=4).
//! During the choice phase value cells read `(id + 1) / 11`; during the
//! fixation phase the fixation cell reads -1; everything else reads 0.

use std::fmt;
use std::str::FromStr;

use crate::numcore::rng::{rng_from_seed, uniform_index, Rng};

use super::{EnvError, StepInfo, StepResult};

pub const LINE_LEN: usize = 17;
pub const FIXATION_CELL: usize = 8;
pub const VALUE_OFFSET: usize = 3;
pub const NUM_TRIALS: usize = 5;
pub const MAX_STEPS: usize = 250;
pub const FIXATION_REWARD: f64 = 0.2;
pub const MAX_VALUE_ID: usize = 10;
pub const FIELD_OFFSETS: [isize; 8] = [-4, -3, -2, -1, 1, 2, 3, 4];
pub const FIXATION_MARKER: f64 = -1.0;

pub const LEFT_CELL: usize = FIXATION_CELL - VALUE_OFFSET;
pub const RIGHT_CELL: usize = FIXATION_CELL + VALUE_OFFSET;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Choice,
    Fixation,
}

/// Movement on the line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Left,
    Right,
}

impl Move {
    pub fn from_index(action: usize) -> Result<Self, EnvError> {
        match action {
            0 => Ok(Move::Left),
            1 => Ok(Move::Right),
            a => Err(EnvError::InvalidAction { action: a, num_actions: 2 }),
        }
    }

    /// `-1` or `+1`
    pub fn delta(self) -> i8 {
        match self {
            Move::Left => -1,
            Move::Right => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HarlowInstance {
    /// The two distinct value identifiers in `0..=10`.
    pub value_ids: [usize; 2],
    /// Index into `value_ids` of the +1 value.
    pub rewarded: usize,
    /// Index into `value_ids` of the value on the left cell this trial.
    pub left: usize,
    pub phase: Phase,
    /// Completed trials.
    pub trial_index: usize,
    pub agent_pos: usize,
    pub steps_elapsed: usize,
    pub done: bool,
    rng: Rng,
}

impl HarlowInstance {
    /// Fresh episode: value draw, reward assignment and first permutation.
    pub fn reset(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let a = uniform_index(&mut rng, MAX_VALUE_ID + 1);
        let mut b = uniform_index(&mut rng, MAX_VALUE_ID);
        if b >= a {
            b += 1;
        }
        let rewarded = uniform_index(&mut rng, 2);
        let left = uniform_index(&mut rng, 2);
        Self {
            value_ids: [a, b],
            rewarded,
            left,
            phase: Phase::Choice,
            trial_index: 0,
            agent_pos: FIXATION_CELL,
            steps_elapsed: 0,
            done: false,
            rng,
        }
    }

    pub fn rewarded_id(&self) -> usize {
        self.value_ids[self.rewarded]
    }

    /// Cell currently holding the +1 value.
    pub fn rewarded_cell(&self) -> usize {
        if self.left == self.rewarded {
            LEFT_CELL
        } else {
            RIGHT_CELL
        }
    }

    fn value_at(&self, cell: usize) -> Option<usize> {
        match cell {
            LEFT_CELL => Some(self.left),
            RIGHT_CELL => Some(1 - self.left),
            _ => None,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        FIELD_OFFSETS
            .iter()
            .map(|&off| {
                let cell = self.agent_pos as isize + off;
                if !(0..LINE_LEN as isize).contains(&cell) {
                    return 0.0;
                }
                let cell = cell as usize;
                match self.phase {
                    Phase::Choice => self
                        .value_at(cell)
                        .map_or(0.0, |k| (self.value_ids[k] + 1) as f64 / (MAX_VALUE_ID + 1) as f64),
                    Phase::Fixation if cell == FIXATION_CELL => FIXATION_MARKER,
                    Phase::Fixation => 0.0,
                }
            })
            .collect()
    }

    pub fn step(&mut self, mv: Move) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let pos = self.agent_pos as isize + mv.delta() as isize;
        self.agent_pos = pos.clamp(0, LINE_LEN as isize - 1) as usize;
        self.steps_elapsed += 1;

        let mut info = StepInfo { trial_index: Some(self.trial_index), ..StepInfo::default() };
        let mut reward = 0.0;
        match self.phase {
            Phase::Choice => {
                if let Some(k) = self.value_at(self.agent_pos) {
                    let correct = k == self.rewarded;
                    reward = if correct { 1.0 } else { -1.0 };
                    info.choice = Some(correct);
                    info.goal = correct;
                    self.trial_index += 1;
                    if self.trial_index == NUM_TRIALS {
                        self.done = true;
                    } else {
                        self.phase = Phase::Fixation;
                    }
                }
            }
            Phase::Fixation => {
                if self.agent_pos == FIXATION_CELL {
                    reward = FIXATION_REWARD;
                    self.phase = Phase::Choice;
                    self.left = uniform_index(&mut self.rng, 2);
                }
            }
        }
        let truncated = !self.done && self.steps_elapsed >= MAX_STEPS;
        if truncated {
            self.done = true;
        }
        info.position = (0, self.agent_pos);
        Ok(StepResult { observation: self.observation(), reward, done: self.done, truncated, info })
    }
}

impl fmt::Display for HarlowInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "harlow values={},{} rewarded={} left={} phase={} trial={} pos={} steps={} done={}",
            self.value_ids[0],
            self.value_ids[1],
            self.rewarded,
            self.left,
            match self.phase {
                Phase::Choice => "choice",
                Phase::Fixation => "fixation",
            },
            self.trial_index,
            self.agent_pos,
            self.steps_elapsed,
            self.done
        )
    }
}

/// Parsed one-line record. The generator state is not part of the record,
/// so parsing yields the observable fields only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HarlowRecord {
    pub value_ids: [usize; 2],
    pub rewarded: usize,
    pub left: usize,
    pub phase: Phase,
    pub trial_index: usize,
    pub agent_pos: usize,
    pub steps_elapsed: usize,
    pub done: bool,
}

impl From<&HarlowInstance> for HarlowRecord {
    fn from(h: &HarlowInstance) -> Self {
        Self {
            value_ids: h.value_ids,
            rewarded: h.rewarded,
            left: h.left,
            phase: h.phase,
            trial_index: h.trial_index,
            agent_pos: h.agent_pos,
            steps_elapsed: h.steps_elapsed,
            done: h.done,
        }
    }
}

impl FromStr for HarlowRecord {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |what: &str| EnvError::Parse(format!("harlow record: {what}"));
        let mut parts = s.split_whitespace();
        if parts.next() != Some("harlow") {
            return Err(bad("missing 'harlow' tag"));
        }
        let mut fields = std::collections::HashMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| bad(p))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(&format!("missing field {k}")));
        let num = |k: &str| -> Result<usize, EnvError> { get(k)?.parse().map_err(|_| bad(k)) };
        let (a, b) = get("values")?.split_once(',').ok_or_else(|| bad("values"))?;
        Ok(Self {
            value_ids: [a.parse().map_err(|_| bad("values"))?, b.parse().map_err(|_| bad("values"))?],
            rewarded: num("rewarded")?,
            left: num("left")?,
            phase: match get("phase")? {
                "choice" => Phase::Choice,
                "fixation" => Phase::Fixation,
                _ => return Err(bad("phase")),
            },
            trial_index: num("trial")?,
            agent_pos: num("pos")?,
            steps_elapsed: num("steps")?,
            done: get("done")?.parse().map_err(|_| bad("done"))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walk_to(h: &mut HarlowInstance, cell: usize) -> Vec<StepResult> {
        let mut out = Vec::new();
        while h.agent_pos != cell && !h.done {
            let mv = if cell < h.agent_pos { Move::Left } else { Move::Right };
            out.push(h.step(mv).unwrap());
        }
        out
    }

    #[test]
    fn equal_seeds_equal_instances() {
        let a = HarlowInstance::reset(17);
        let b = HarlowInstance::reset(17);
        assert_eq!(a.to_string(), b.to_string());
    }

    #[test]
    fn values_are_distinct_and_in_range() {
        for seed in 0..5000 {
            let h = HarlowInstance::reset(seed);
            assert_ne!(h.value_ids[0], h.value_ids[1]);
            assert!(h.value_ids.iter().all(|&v| v <= MAX_VALUE_ID));
        }
    }

    #[test]
    fn rewarded_side_is_balanced() {
        let n = 10_000;
        let left = (0..n).filter(|&s| HarlowInstance::reset(s).rewarded_cell() == LEFT_CELL).count();
        let f = left as f64 / n as f64;
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn correct_choice_pays_one_and_advances_trial() {
        let mut h = HarlowInstance::reset(3);
        let target = h.rewarded_cell();
        let steps = walk_to(&mut h, target);
        let last = steps.last().unwrap();
        assert_eq!(last.reward, 1.0);
        assert_eq!(last.info.choice, Some(true));
        assert_eq!(h.trial_index, 1);
        assert_eq!(h.phase, Phase::Fixation);
        assert!(steps[..steps.len() - 1].iter().all(|s| s.reward == 0.0));
    }

    #[test]
    fn wrong_choice_pays_minus_one() {
        let mut h = HarlowInstance::reset(4);
        let wrong = if h.rewarded_cell() == LEFT_CELL { RIGHT_CELL } else { LEFT_CELL };
        let steps = walk_to(&mut h, wrong);
        assert_eq!(steps.last().unwrap().reward, -1.0);
        assert_eq!(steps.last().unwrap().info.choice, Some(false));
    }

    #[test]
    fn fixation_reward_paid_once_then_next_trial() {
        let mut h = HarlowInstance::reset(5);
        let target = h.rewarded_cell();
        walk_to(&mut h, target);
        let back = walk_to(&mut h, FIXATION_CELL);
        assert_eq!(back.last().unwrap().reward, FIXATION_REWARD);
        assert_eq!(h.phase, Phase::Choice);
        // Stepping off and back onto fixation in the choice phase pays nothing.
        let away = h.step(Move::Left).unwrap();
        let again = h.step(Move::Right).unwrap();
        assert_eq!(away.reward + again.reward, 0.0);
    }

    #[test]
    fn perfect_play_completes_five_trials() {
        let mut h = HarlowInstance::reset(6);
        let mut value_rewards = 0;
        let mut fixation_rewards = 0;
        while !h.done {
            let target = if h.phase == Phase::Choice { h.rewarded_cell() } else { FIXATION_CELL };
            for s in walk_to(&mut h, target) {
                if s.reward == 1.0 {
                    value_rewards += 1;
                } else if s.reward == FIXATION_REWARD {
                    fixation_rewards += 1;
                }
            }
        }
        assert_eq!(value_rewards, 5);
        assert_eq!(fixation_rewards, 4);
        assert_eq!(h.trial_index, 5);
        assert_eq!(h.steps_elapsed, 3 + 4 * 6);
    }

    #[test]
    fn step_cap_ends_episode_as_truncation() {
        let mut h = HarlowInstance::reset(7);
        let mut last = None;
        for _ in 0..MAX_STEPS {
            // Bounce between fixation and its left neighbour: never reaches a value.
            let mv = if h.agent_pos == FIXATION_CELL { Move::Left } else { Move::Right };
            last = Some(h.step(mv).unwrap());
        }
        let last = last.unwrap();
        assert!(last.done && last.truncated);
        assert_eq!(h.trial_index, 0);
        assert_eq!(h.step(Move::Left).unwrap_err(), EnvError::EpisodeDone);
    }

    #[test]
    fn movement_clamps_at_line_ends() {
        let mut h = HarlowInstance::reset(8);
        h.phase = Phase::Fixation;
        h.agent_pos = 0;
        h.step(Move::Left).unwrap();
        assert_eq!(h.agent_pos, 0);
    }

    #[test]
    fn observation_layout() {
        let h = HarlowInstance::reset(9);
        let obs = h.observation();
        assert_eq!(obs.len(), 8);
        // Agent on fixation: left value at offset -3 (index 1), right at +3 (index 6).
        let left_id = h.value_ids[h.left];
        let right_id = h.value_ids[1 - h.left];
        assert_eq!(obs[1], (left_id + 1) as f64 / 11.0);
        assert_eq!(obs[6], (right_id + 1) as f64 / 11.0);
        assert_eq!(obs.iter().filter(|&&x| x != 0.0).count(), 2);
    }

    #[test]
    fn record_roundtrip() {
        let mut h = HarlowInstance::reset(10);
        h.step(Move::Left).unwrap();
        let line = h.to_string();
        let rec: HarlowRecord = line.parse().unwrap();
        assert_eq!(rec, HarlowRecord::from(&h));
        assert!("maze x=1".parse::<HarlowRecord>().is_err());
    }
}
