//! Episode-loss gradient by a backward adjoint sweep over the plastic
//! matrix sequence.
//!
//! The sweep carries `ν_t = ∂L/∂W_t` from `ν_T = 0` down to `ν_0`, pushing
//! it through the full Jacobian of the update map at every step and
//! accumulating parameter gradients on the way. States `W_t` needed by the
//! sweep are either stored or recomputed from the nearest checkpoint, so
//! memory for the matrix trajectory is bounded by the schedule rather than
//! by the episode length. Per-step workspace (the `S + 1` inner matrices of
//! one recursion) is not part of that count.

mod schedule;
mod vjp;

use thiserror::Error;

use crate::metatrain::{step_cost, EpisodeLoss, LossParts, MetaError};
use crate::numcore::Matrix;
use crate::plastic::{agent_step_encoded, AgentParams, PlasticError, SynapticState};

pub use schedule::{default_budget, make_schedule, CheckpointSchedule};
pub use vjp::{accumulate_initial, step_backward};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjointError {
    #[error("checkpoint budget must be at least 2, got {0}")]
    Budget(usize),
    #[error("cannot schedule an empty episode")]
    EmptyEpisode,
    #[error("schedule covers {schedule} steps but the episode has {episode}")]
    LengthMismatch { schedule: usize, episode: usize },
    #[error(transparent)]
    Forward(#[from] PlasticError),
}

/// Counts trajectory matrices held by the sweep.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct StoreCounter {
    pub live: usize,
    pub peak: usize,
}

/// Matrix store indexed by step that keeps [`StoreCounter`] up to date.
struct TrackedStore {
    slots: Vec<Option<Matrix<f64>>>,
    counter: StoreCounter,
}

impl TrackedStore {
    fn new(len: usize) -> Self {
        Self { slots: vec![None; len + 1], counter: StoreCounter::default() }
    }

    fn put(&mut self, t: usize, w: Matrix<f64>) {
        if self.slots[t].replace(w).is_none() {
            self.counter.live += 1;
            self.counter.peak = self.counter.peak.max(self.counter.live);
        }
    }

    fn get(&self, t: usize) -> &Matrix<f64> {
        self.slots[t].as_ref().expect("state scheduled for this step")
    }

    fn take(&mut self, t: usize) -> Option<Matrix<f64>> {
        let w = self.slots[t].take();
        if w.is_some() {
            self.counter.live -= 1;
        }
        w
    }
}

#[derive(Clone, Debug)]
pub struct AdjointResult {
    pub grad: AgentParams<f64>,
    pub parts: LossParts,
    pub counter: StoreCounter,
}

fn forward_w(params: &AgentParams<f64>, w: &Matrix<f64>, ep: &EpisodeLoss<'_>, t: usize) -> Result<Matrix<f64>, PlasticError> {
    let state = SynapticState { w: w.clone(), step: t };
    Ok(agent_step_encoded(params, &state, &ep.inputs[t])?.state.w)
}

/// Gradient of the episode loss with checkpointed recomputation.
pub fn adjoint_gradient(
    params: &AgentParams<f64>,
    ep: &EpisodeLoss<'_>,
    schedule: &CheckpointSchedule,
) -> Result<AdjointResult, MetaError> {
    ep.check()?;
    let len = ep.len();
    if schedule.len != len {
        return Err(AdjointError::LengthMismatch { schedule: schedule.len, episode: len }.into());
    }

    // Forward pass keeping only the checkpoints.
    let mut store = TrackedStore::new(len);
    let mut w = ep.w_init.clone();
    let mut next_ck = schedule.checkpoints.iter().peekable();
    for t in 0..len {
        if next_ck.peek() == Some(&&t) {
            next_ck.next();
            store.put(t, w.clone());
        }
        if t + 1 < len {
            w = forward_w(params, &w, ep, t).map_err(AdjointError::from)?;
        }
    }
    drop(w);

    let mut grad = params.zeros_like();
    let mut parts = LossParts::default();
    let mut nu = Matrix::zeros(params.size(), params.size());
    for (a, b) in schedule.segments().into_iter().rev() {
        for t in a + 1..b {
            let w_next = forward_w(params, store.get(t - 1), ep, t - 1).map_err(AdjointError::from)?;
            store.put(t, w_next);
        }
        for t in (a..b).rev() {
            let state = SynapticState { w: store.get(t).clone(), step: t };
            let out = agent_step_encoded(params, &state, &ep.inputs[t]).map_err(AdjointError::from)?;
            let (p, dlogits, dvalue) =
                step_cost(out.policy.logits.as_slice(), out.value, ep.actions[t], ep.targets[t], ep.coeffs, ep.scale);
            parts.add(&p);
            nu = step_backward(params, &out.trace, &dlogits, dvalue, &nu, &mut grad);
            store.take(t);
        }
    }
    accumulate_initial(params, &mut grad, &nu);
    Ok(AdjointResult { grad, parts, counter: store.counter })
}
