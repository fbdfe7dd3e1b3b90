//! Full agent step: embedding, plastic recursion, policy and value read-out.

use crate::numcore::rng::{categorical, Rng};
use crate::numcore::tape::{entropy, log_softmax, softmax};
use crate::numcore::{Matrix, NumError, Real, Vector};

use super::layer::{recursive_trace, RecursionTrace};
use super::params::AgentParams;
use super::PlasticError;

/// Plastic matrix carried across the steps of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct SynapticState<T: Real = f64> {
    pub w: Matrix<T>,
    pub step: usize,
}

impl<T: Real> SynapticState<T> {
    pub fn new(w: Matrix<T>) -> Self {
        Self { w, step: 0 }
    }
}

/// Embedding input `[obs, one_hot(prev_action), prev_reward]`. No previous
/// action (episode start) encodes as an all-zero one-hot block.
pub fn encode_input<T: Real>(obs: &[f64], prev_action: Option<usize>, prev_reward: f64, num_actions: usize) -> Vector<T> {
    let mut x = Vec::with_capacity(obs.len() + num_actions + 1);
    x.extend(obs.iter().map(|&o| T::lit(o)));
    x.extend((0..num_actions).map(|a| if Some(a) == prev_action { T::one() } else { T::zero() }));
    x.push(T::lit(prev_reward));
    Vector::from_vec(x)
}

/// Categorical policy over discrete actions, parameterised by logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy<T: Real = f64> {
    pub logits: Vector<T>,
}

impl<T: Real> Policy<T> {
    pub fn probs(&self) -> Vec<T> {
        softmax(self.logits.as_slice())
    }

    pub fn log_prob(&self, action: usize) -> T {
        log_softmax(self.logits.as_slice())[action]
    }

    pub fn entropy(&self) -> T {
        entropy(self.logits.as_slice())
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let p: Vec<f64> = self.probs().into_iter().map(Real::to_f64_lossy).collect();
        categorical(rng, &p)
    }

    /// Most likely action, lowest index on ties.
    pub fn greedy(&self) -> usize {
        let z = self.logits.as_slice();
        (1..z.len()).fold(0, |best, i| if z[i] > z[best] { i } else { best })
    }
}

/// Intermediate activations of one agent step.
#[derive(Clone, Debug)]
pub struct StepTrace<T: Real> {
    pub input: Vector<T>,
    /// `tanh` output of the embedding hidden layer
    pub embed_hidden: Vector<T>,
    pub recursion: RecursionTrace<T>,
    /// `tanh` output of the read-out hidden layer
    pub readout_hidden: Vector<T>,
}

impl<T: Real> StepTrace<T> {
    /// Final activation `v^(S)` fed to the read-out.
    pub fn activation(&self) -> &Vector<T> {
        self.recursion.output()
    }
}

#[derive(Clone, Debug)]
pub struct AgentStep<T: Real> {
    pub policy: Policy<T>,
    pub value: T,
    pub state: SynapticState<T>,
    pub trace: StepTrace<T>,
}

/// One environment step of the agent from raw observation parts.
pub fn agent_step<T: Real>(
    params: &AgentParams<T>,
    state: &SynapticState<T>,
    obs: &[f64],
    prev_action: Option<usize>,
    prev_reward: f64,
) -> Result<AgentStep<T>, PlasticError> {
    let x = encode_input(obs, prev_action, prev_reward, params.num_actions());
    agent_step_encoded(params, state, &x)
}

/// One environment step of the agent from an already encoded input.
pub fn agent_step_encoded<T: Real>(
    params: &AgentParams<T>,
    state: &SynapticState<T>,
    x: &Vector<T>,
) -> Result<AgentStep<T>, PlasticError> {
    if x.dim() != params.input_dim() {
        return Err(NumError::Shape {
            op: "agent input",
            left: params.embed_hidden.weight.shape(),
            right: (x.dim(), 1),
        }
        .into());
    }
    let embed_hidden = Vector::from_vec(params.embed_hidden.forward(x.as_slice())).map(T::tanh);
    let v0 = Vector::from_vec(params.embed_out.forward(embed_hidden.as_slice()));
    let recursion = recursive_trace(&state.w, &v0, &params.plasticity, &params.write_rule)?;
    let v_out = recursion.output();
    if !v_out.is_finite() {
        return Err(PlasticError::NonFinite { step: state.step, what: "plastic activation" });
    }
    if !recursion.weights().is_finite() {
        return Err(PlasticError::NonFinite { step: state.step, what: "plastic weights" });
    }
    let readout_hidden = Vector::from_vec(params.readout_hidden.forward(v_out.as_slice())).map(T::tanh);
    let logits = Vector::from_vec(params.policy_head.forward(readout_hidden.as_slice()));
    let value = params.value_head.forward(readout_hidden.as_slice())[0];
    if !logits.is_finite() || !value.is_finite() {
        return Err(PlasticError::NonFinite { step: state.step, what: "read-out" });
    }
    let new_state = SynapticState { w: recursion.weights().clone(), step: state.step + 1 };
    Ok(AgentStep {
        policy: Policy { logits },
        value,
        state: new_state,
        trace: StepTrace { input: x.clone(), embed_hidden, recursion, readout_hidden },
    })
}
