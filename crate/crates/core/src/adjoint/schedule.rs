//! Checkpoint placement for the backward sweep.

use super::AdjointError;

/// Stored forward states and the recomputation segments between them.
///
/// `checkpoints[i]` is the index `t` of a stored `W_t` (the state before step
/// `t + 1`). Segment `i` covers steps `checkpoints[i] .. checkpoints[i + 1]`
/// (the last one ends at `len`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointSchedule {
    pub len: usize,
    pub checkpoints: Vec<usize>,
    pub segment_len: usize,
}

impl CheckpointSchedule {
    /// `(start, end)` step ranges in forward order.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        self.checkpoints
            .iter()
            .enumerate()
            .map(|(i, &a)| (a, self.checkpoints.get(i + 1).copied().unwrap_or(self.len)))
            .collect()
    }

    /// Upper bound on simultaneously stored trajectory matrices.
    pub fn peak_bound(&self) -> usize {
        self.checkpoints.len() + self.segment_len
    }

    /// Every state stored, nothing recomputed.
    pub fn stores_everything(&self) -> bool {
        self.segment_len <= 1
    }
}

/// Default memory budget for an episode of length `len`: `ceil(sqrt(len))`.
pub fn default_budget(len: usize) -> usize {
    ((len as f64).sqrt().ceil() as usize).max(2)
}

/// Spreads at most `min(budget, ceil(sqrt(len)))` checkpoints evenly over
/// the episode. A budget of `len + 1` or more stores every state.
pub fn make_schedule(len: usize, budget: usize) -> Result<CheckpointSchedule, AdjointError> {
    if budget < 2 {
        return Err(AdjointError::Budget(budget));
    }
    if len == 0 {
        return Err(AdjointError::EmptyEpisode);
    }
    if budget > len {
        return Ok(CheckpointSchedule { len, checkpoints: (0..len).collect(), segment_len: 1 });
    }
    let k = budget.min(default_budget(len));
    let segment_len = len.div_ceil(k);
    let checkpoints = (0..len).step_by(segment_len).collect();
    Ok(CheckpointSchedule { len, checkpoints, segment_len })
}
