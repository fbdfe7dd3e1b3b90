//! Recording the agent's computation on a [`Tape`] for backpropagation
//! through whole episodes.

use crate::numcore::{Gradients, NodeId, NumError, Real, Tape, Tensor, Vector};

use super::params::{AgentParams, Dense, W0Mode, WriteRule};

#[derive(Clone, Copy, Debug)]
struct DenseNodes {
    weight: NodeId,
    bias: NodeId,
}

#[derive(Clone, Debug)]
enum WriteNodes {
    Hebbian,
    Linear(NodeId),
    Mlp(NodeId, NodeId),
}

/// Tape leaves for every agent parameter. Non-trainable tensors are
/// recorded as constants.
#[derive(Clone, Debug)]
pub struct ParamNodes {
    embed_hidden: DenseNodes,
    embed_out: DenseNodes,
    readout_hidden: DenseNodes,
    policy_head: DenseNodes,
    value_head: DenseNodes,
    alpha: NodeId,
    kappa: Vec<NodeId>,
    beta: Vec<NodeId>,
    write: WriteNodes,
    w0: Option<NodeId>,
    depth: usize,
}

/// Outputs of one recorded agent step.
#[derive(Clone, Copy, Debug)]
pub struct StepNodes {
    pub logits: NodeId,
    pub value: NodeId,
    pub weights: NodeId,
    pub activation: NodeId,
}

fn dense_nodes<T: Real>(tape: &mut Tape<T>, d: &Dense<T>) -> DenseNodes {
    DenseNodes { weight: tape.param_matrix(&d.weight), bias: tape.param_vector(&d.bias) }
}

pub fn register_params<T: Real>(tape: &mut Tape<T>, params: &AgentParams<T>) -> ParamNodes {
    let embed_hidden = dense_nodes(tape, &params.embed_hidden);
    let embed_out = dense_nodes(tape, &params.embed_out);
    let readout_hidden = dense_nodes(tape, &params.readout_hidden);
    let policy_head = dense_nodes(tape, &params.policy_head);
    let value_head = dense_nodes(tape, &params.value_head);
    let p = &params.plasticity;
    let alpha = if params.alpha_trainable {
        tape.param_matrix(&p.alpha)
    } else {
        tape.constant((&p.alpha).into())
    };
    let kappa = p.kappa.as_slice().iter().map(|&k| tape.param_scalar(k)).collect();
    let beta = p.beta.as_slice().iter().map(|&b| tape.param_scalar(b)).collect();
    let write = match &params.write_rule {
        WriteRule::Hebbian => WriteNodes::Hebbian,
        WriteRule::LinearProjected { proj } => WriteNodes::Linear(tape.param_matrix(proj)),
        WriteRule::MlpProjected { proj1, proj2 } => WriteNodes::Mlp(tape.param_matrix(proj1), tape.param_matrix(proj2)),
    };
    let w0 = params.w0.as_ref().map(|w| match params.w0_mode {
        W0Mode::Learned => tape.param_matrix(w),
        _ => tape.constant(w.into()),
    });
    ParamNodes {
        embed_hidden,
        embed_out,
        readout_hidden,
        policy_head,
        value_head,
        alpha,
        kappa,
        beta,
        write,
        w0,
        depth: p.depth(),
    }
}

fn tri_index(s: usize, l: usize) -> usize {
    (s - 1) * (s + 2) / 2 + l
}

fn affine<T: Real>(tape: &mut Tape<T>, d: DenseNodes, x: NodeId) -> Result<NodeId, NumError> {
    let wx = tape.matvec(d.weight, x)?;
    tape.add(wx, d.bias)
}

impl ParamNodes {
    /// Leaf holding the learned or fixed initial matrix, if any.
    pub fn w0(&self) -> Option<NodeId> {
        self.w0
    }

    /// Records one agent step on `tape` given the encoded input and the
    /// node of the previous plastic matrix.
    pub fn record_step<T: Real>(&self, tape: &mut Tape<T>, x: &Vector<T>, w_prev: NodeId) -> Result<StepNodes, NumError> {
        let xn = tape.constant_vector(x);
        let h_pre = affine(tape, self.embed_hidden, xn)?;
        let h = tape.tanh(h_pre)?;
        let v0 = affine(tape, self.embed_out, h)?;

        let mut vs = vec![v0];
        let mut ws = vec![w_prev];
        for s in 1..=self.depth {
            let v_prev = vs[s - 1];
            let wv = tape.matvec(ws[s - 1], v_prev)?;
            let r = tape.tanh(wv)?;
            let mut terms = Vec::with_capacity(s + 1);
            for (l, &vl) in vs.iter().enumerate() {
                terms.push(tape.scale(vl, self.kappa[tri_index(s, l)])?);
            }
            terms.push(tape.scale(r, self.kappa[tri_index(s, s)])?);
            let v_next = tape.add_all(&terms)?.expect("non-empty");

            let u = match self.write {
                WriteNodes::Hebbian => v_prev,
                WriteNodes::Linear(p) => tape.matvec(p, v_prev)?,
                WriteNodes::Mlp(p1, p2) => {
                    let a = tape.matvec(p1, v_prev)?;
                    let hid = tape.tanh(a)?;
                    let b = tape.matvec(p2, hid)?;
                    tape.tanh(b)?
                }
            };
            let vu = tape.outer(v_prev, u)?;
            let psi = tape.mul(self.alpha, vu)?;
            let mut wterms = Vec::with_capacity(s + 1);
            for (l, &wl) in ws.iter().enumerate() {
                wterms.push(tape.scale(wl, self.beta[tri_index(s, l)])?);
            }
            wterms.push(tape.scale(psi, self.beta[tri_index(s, s)])?);
            let w_next = tape.add_all(&wterms)?.expect("non-empty");
            vs.push(v_next);
            ws.push(w_next);
        }
        let activation = *vs.last().expect("depth >= 1");
        let g_pre = affine(tape, self.readout_hidden, activation)?;
        let g = tape.tanh(g_pre)?;
        let logits = affine(tape, self.policy_head, g)?;
        let value_vec = affine(tape, self.value_head, g)?;
        let value = tape.sum(value_vec)?;
        Ok(StepNodes { logits, value, weights: *ws.last().expect("depth >= 1"), activation })
    }

    /// Gathers tape gradients into a parameter-shaped container. Entries of
    /// non-trainable tensors are zero.
    pub fn collect<T: Real>(&self, grads: &Gradients<T>, like: &AgentParams<T>) -> AgentParams<T> {
        let mut out = like.zeros_like();
        let copy = |dst: &mut [T], id: NodeId| {
            if let Some(t) = grads.get(id) {
                dst.copy_from_slice(&t.data);
            }
        };
        let dense = |dst: &mut Dense<T>, n: DenseNodes| {
            copy(dst.weight.as_mut_slice(), n.weight);
            copy(dst.bias.as_mut_slice(), n.bias);
        };
        dense(&mut out.embed_hidden, self.embed_hidden);
        dense(&mut out.embed_out, self.embed_out);
        dense(&mut out.readout_hidden, self.readout_hidden);
        dense(&mut out.policy_head, self.policy_head);
        dense(&mut out.value_head, self.value_head);
        if like.alpha_trainable {
            copy(out.plasticity.alpha.as_mut_slice(), self.alpha);
        }
        for (dst, &id) in out.plasticity.kappa.as_mut_slice().iter_mut().zip(&self.kappa) {
            *dst = grads.scalar(id);
        }
        for (dst, &id) in out.plasticity.beta.as_mut_slice().iter_mut().zip(&self.beta) {
            *dst = grads.scalar(id);
        }
        match (&mut out.write_rule, &self.write) {
            (WriteRule::LinearProjected { proj }, WriteNodes::Linear(p)) => copy(proj.as_mut_slice(), *p),
            (WriteRule::MlpProjected { proj1, proj2 }, WriteNodes::Mlp(p1, p2)) => {
                copy(proj1.as_mut_slice(), *p1);
                copy(proj2.as_mut_slice(), *p2);
            }
            _ => {}
        }
        if let (Some(w0), Some(id), W0Mode::Learned) = (out.w0.as_mut(), self.w0, like.w0_mode) {
            copy(w0.as_mut_slice(), id);
        }
        out
    }
}

/// Convenience for a sampled or externally supplied initial matrix.
pub fn constant_weights<T: Real>(tape: &mut Tape<T>, w: &crate::numcore::Matrix<T>) -> NodeId {
    tape.constant(Tensor::from(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plastic::agent::{agent_step_encoded, encode_input, SynapticState};
    use crate::plastic::params::{init_agent, AgentConfig, WriteRuleKind};

    #[test]
    fn recorded_step_matches_plain_forward() {
        for rule in [WriteRuleKind::Hebbian, WriteRuleKind::LinearProjected, WriteRuleKind::MlpProjected] {
            let cfg = AgentConfig {
                input_dim: AgentConfig::input_dim_for(3, 2),
                size: 5,
                num_actions: 2,
                embed_hidden: 4,
                readout_hidden: 4,
                depth: 3,
                write_rule: rule,
                w0: W0Mode::Learned,
                alpha_trainable: true,
                alpha_init_std: 0.4,
                coeff_init_std: 0.4,
                w0_init_std: 0.4,
                seed: 9,
            };
            let p: AgentParams<f64> = init_agent(&cfg);
            let mut tape = Tape::new();
            let nodes = register_params(&mut tape, &p);
            let mut w_node = nodes.w0().unwrap();
            let mut state = SynapticState::new(p.w0.clone().unwrap());
            for t in 0..3 {
                let x: Vector<f64> = encode_input(&[0.1 * t as f64, -0.3, 0.7], Some(t % 2), 0.5, 2);
                let plain = agent_step_encoded(&p, &state, &x).unwrap();
                let rec = nodes.record_step(&mut tape, &x, w_node).unwrap();
                assert_eq!(tape.value(rec.logits).data, plain.policy.logits.as_slice());
                assert_eq!(tape.scalar_value(rec.value), plain.value);
                assert_eq!(tape.value(rec.weights).data, plain.state.w.as_slice());
                w_node = rec.weights;
                state = plain.state;
            }
            assert!(tape.replay_matches());
        }
    }
}
