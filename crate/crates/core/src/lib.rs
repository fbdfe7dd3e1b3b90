//! Meta-learned synaptic plasticity for reinforcement learning.
//!
//! An agent whose only memory is a single plastic weight matrix `W_t`.
//! At every environment step the matrix is rewritten by a learned
//! recursive read/write rule; the rule's parameters are trained across a
//! distribution of tasks by policy gradients.
//!
//! Modules:
//! - [`numcore`]: dense tensors, initialisers, seeded RNG and a reverse-mode tape.
//! - [`plastic`]: the plastic layer and the full agent.
//! - [`envs`]: Harlow association task and procedural mazes.
//! - [`metatrain`]: rollouts, GAE, the A2C loss, Adam and the training loop.
//! - [`adjoint`]: gradient of the episode loss via a backward adjoint sweep
//!   with checkpointed recomputation.
//! - [`analysis`]: Hopfield energy, PCA, synaptic variation, spatial selectivity.
//! - [`run`]: configuration files, checkpoints and the command implementations.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); training and
//! the command line run at `f64` through the aliases below.

pub mod adjoint;
pub mod analysis;
pub mod envs;
pub mod metatrain;
pub mod numcore;
pub mod plastic;
pub mod run;

pub use numcore::Real;

pub type Vector64 = numcore::Vector<f64>;
pub type Matrix64 = numcore::Matrix<f64>;
pub type Tape64 = numcore::Tape<f64>;
pub type Vector32 = numcore::Vector<f32>;
pub type Matrix32 = numcore::Matrix<f32>;

pub type AgentParams64 = plastic::AgentParams<f64>;
pub type AgentParams32 = plastic::AgentParams<f32>;
pub type PlasticityParams64 = plastic::PlasticityParams<f64>;
pub type SynapticState64 = plastic::SynapticState<f64>;
