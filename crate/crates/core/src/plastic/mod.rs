//! The plastic agent: an embedding `f`, one self-modifying weight matrix
//! updated by a recursive read/write rule, and a read-out `g` producing a
//! categorical policy and a value estimate.

mod agent;
mod graph;
mod layer;
mod params;

use thiserror::Error;

use crate::numcore::NumError;

pub use agent::{agent_step, agent_step_encoded, encode_input, AgentStep, Policy, StepTrace, SynapticState};
pub use graph::{constant_weights, register_params, ParamNodes, StepNodes};
pub use layer::{read, recursive_step, recursive_trace, write, RecursionTrace};
pub use params::{
    init_agent, AgentConfig, AgentParams, Dense, ParamShape, PlasticityParams, TriTable, W0Mode, WriteRule,
    WriteRuleKind,
};


#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlasticError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("recursion depth must be at least 1, got {0}")]
    Depth(usize),
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: usize, what: &'static str },
}
