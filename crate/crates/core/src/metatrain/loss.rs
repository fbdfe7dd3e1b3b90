//! The A2C episode loss and its gradient by backpropagation through time.
//!
//! For one step with logits `z`, value `V`, action `a`, advantage `A` and
//! value target `R` the cost is
//!
//! ```text
//! c_t = scale * ( -A log π(a) + c_v (R - V)² - c_e H(π) )
//! ```
//!
//! where `scale = 1 / (total steps in the batch)`, so that summing over all
//! trajectories gives batch means.

use crate::numcore::tape::{entropy, log_softmax, softmax};
use crate::numcore::{Matrix, Tape, Vector};
use crate::plastic::{constant_weights, register_params, AgentParams, W0Mode};

use super::MetaError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossCoeffs {
    pub value: f64,
    pub entropy: f64,
}

/// Scaled loss components. `value` is the squared error before `c_v`,
/// `entropy` the policy entropy before `c_e`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
}

impl LossParts {
    pub fn total(&self, c: LossCoeffs) -> f64 {
        self.policy + c.value * self.value - c.entropy * self.entropy
    }

    pub fn add(&mut self, other: &LossParts) {
        self.policy += other.policy;
        self.value += other.value;
        self.entropy += other.entropy;
    }
}

/// Advantage and value target of one step. Both are constants of the loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepTarget {
    pub advantage: f64,
    pub ret: f64,
}

/// Everything needed to evaluate and differentiate the loss of one episode.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeLoss<'a> {
    pub inputs: &'a [Vector<f64>],
    pub actions: &'a [usize],
    pub targets: &'a [StepTarget],
    pub w_init: &'a Matrix<f64>,
    pub coeffs: LossCoeffs,
    pub scale: f64,
}

impl EpisodeLoss<'_> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub(crate) fn check(&self) -> Result<(), MetaError> {
        if self.actions.len() != self.len() || self.targets.len() != self.len() {
            return Err(MetaError::Mismatch(format!(
                "episode has {} inputs, {} actions, {} targets",
                self.len(),
                self.actions.len(),
                self.targets.len()
            )));
        }
        Ok(())
    }
}

/// Cost of one step and its cotangents with respect to logits and value.
pub fn step_cost(
    logits: &[f64],
    value: f64,
    action: usize,
    target: StepTarget,
    coeffs: LossCoeffs,
    scale: f64,
) -> (LossParts, Vec<f64>, f64) {
    let logp = log_softmax(logits);
    let p = softmax(logits);
    let h = entropy(logits);
    let err = target.ret - value;
    let parts = LossParts { policy: -target.advantage * logp[action] * scale, value: err * err * scale, entropy: h * scale };
    // d(-A log p_a)/dz_j = -A (1[j=a] - p_j);  dH/dz_j = -p_j (log p_j + H)
    let dlogits = (0..logits.len())
        .map(|j| {
            let onehot = if j == action { 1.0 } else { 0.0 };
            let dpol = -target.advantage * (onehot - p[j]);
            let dent = -p[j] * (logp[j] + h);
            scale * (dpol - coeffs.entropy * dent)
        })
        .collect();
    let dvalue = -2.0 * coeffs.value * err * scale;
    (parts, dlogits, dvalue)
}

/// Gradient of the episode loss by recording the whole unrolled episode on
/// a tape and running reverse mode over it.
pub fn bptt_gradient(params: &AgentParams<f64>, ep: &EpisodeLoss<'_>) -> Result<(AgentParams<f64>, LossParts), MetaError> {
    ep.check()?;
    let mut tape = Tape::new();
    let nodes = register_params(&mut tape, params);
    let mut w = match (params.w0_mode, nodes.w0()) {
        (W0Mode::Learned | W0Mode::Fixed, Some(id)) => id,
        _ => constant_weights(&mut tape, ep.w_init),
    };
    let mut terms = Vec::with_capacity(3 * ep.len());
    let mut parts = LossParts::default();
    for t in 0..ep.len() {
        let rec = nodes.record_step(&mut tape, &ep.inputs[t], w)?;
        let target = ep.targets[t];
        let logp = tape.log_prob(rec.logits, ep.actions[t])?;
        terms.push(tape.scale_const(logp, -target.advantage * ep.scale)?);
        let ent = tape.entropy(rec.logits)?;
        terms.push(tape.scale_const(ent, -ep.coeffs.entropy * ep.scale)?);
        let ret = tape.constant_scalar(target.ret);
        let err = tape.sub(ret, rec.value)?;
        let sq = tape.mul(err, err)?;
        terms.push(tape.scale_const(sq, ep.coeffs.value * ep.scale)?);

        let lp = tape.scalar_value(logp);
        let e = tape.scalar_value(err);
        parts.add(&LossParts {
            policy: -target.advantage * lp * ep.scale,
            value: e * e * ep.scale,
            entropy: tape.scalar_value(ent) * ep.scale,
        });
        w = rec.weights;
    }
    let Some(loss) = tape.add_all(&terms)? else {
        return Ok((params.zeros_like(), parts));
    };
    let grads = tape.backward(loss)?;
    Ok((nodes.collect(&grads, params), parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plastic::{init_agent, AgentConfig};

    #[test]
    fn uniform_policy_zero_advantage_loss_is_entropy_term() {
        let coeffs = LossCoeffs { value: 0.4, entropy: 0.03 };
        let (parts, _, dv) = step_cost(&[0.0, 0.0], 0.7, 1, StepTarget { advantage: 0.0, ret: 0.7 }, coeffs, 1.0);
        assert!((parts.total(coeffs) + 0.03 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(dv, 0.0);
    }

    #[test]
    fn doubling_value_coeff_doubles_value_term() {
        let c1 = LossCoeffs { value: 0.4, entropy: 0.01 };
        let c2 = LossCoeffs { value: 0.8, entropy: 0.01 };
        let tgt = StepTarget { advantage: 0.3, ret: 1.5 };
        let (p1, _, _) = step_cost(&[0.2, -0.1, 0.4], 0.2, 2, tgt, c1, 0.5);
        let (p2, _, _) = step_cost(&[0.2, -0.1, 0.4], 0.2, 2, tgt, c2, 0.5);
        assert_eq!(p1, p2);
        assert!(((p2.total(c2) - p1.total(c1)) - 0.4 * p1.value).abs() < 1e-15);
    }

    #[test]
    fn step_cost_gradient_matches_fd() {
        let coeffs = LossCoeffs { value: 0.4, entropy: 0.05 };
        let tgt = StepTarget { advantage: -0.7, ret: 0.3 };
        let z = [0.3, -0.2, 0.9, 0.1];
        let (_, dz, dv) = step_cost(&z, 0.1, 2, tgt, coeffs, 0.25);
        let f = |z: &[f64], v: f64| step_cost(z, v, 2, tgt, coeffs, 0.25).0.total(coeffs);
        let h = 1e-6;
        for j in 0..4 {
            let (mut a, mut b) = (z, z);
            a[j] += h;
            b[j] -= h;
            let fd = (f(&a, 0.1) - f(&b, 0.1)) / (2.0 * h);
            assert!((fd - dz[j]).abs() < 1e-8, "{j}: {fd} vs {}", dz[j]);
        }
        let fd = (f(&z, 0.1 + h) - f(&z, 0.1 - h)) / (2.0 * h);
        assert!((fd - dv).abs() < 1e-8);
    }

    #[test]
    fn alpha_gradient_matches_fd_on_short_episode() {
        let mut cfg = AgentConfig::harlow();
        cfg.size = 6;
        cfg.embed_hidden = 4;
        cfg.readout_hidden = 4;
        cfg.alpha_init_std = 0.5;
        cfg.coeff_init_std = 0.5;
        cfg.w0 = W0Mode::Learned;
        cfg.w0_init_std = 0.3;
        let p: AgentParams<f64> = init_agent(&cfg);
        let inputs: Vec<Vector<f64>> = (0..3)
            .map(|t| crate::plastic::encode_input(&[0.1 * t as f64; 8], Some(t % 2), 0.2 * t as f64, 2))
            .collect();
        let actions = [0, 1, 1];
        let targets = [
            StepTarget { advantage: 0.5, ret: 1.0 },
            StepTarget { advantage: -0.2, ret: 0.0 },
            StepTarget { advantage: 1.0, ret: -1.0 },
        ];
        let w0 = p.w0.clone().unwrap();
        let coeffs = LossCoeffs { value: 0.4, entropy: 0.03 };
        let ep = EpisodeLoss { inputs: &inputs, actions: &actions, targets: &targets, w_init: &w0, coeffs, scale: 1.0 / 3.0 };
        let (g, _) = bptt_gradient(&p, &ep).unwrap();
        let loss = |q: &AgentParams<f64>| {
            let w0 = q.w0.clone().unwrap();
            let ep = EpisodeLoss { w_init: &w0, ..ep };
            bptt_gradient(q, &ep).unwrap().1.total(coeffs)
        };
        let h = 1e-6;
        for idx in [0, 7, 20, 35] {
            let mut a = p.clone();
            let mut b = p.clone();
            a.plasticity.alpha.as_mut_slice()[idx] += h;
            b.plasticity.alpha.as_mut_slice()[idx] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            let an = g.plasticity.alpha.as_slice()[idx];
            assert!((fd - an).abs() <= 1e-5 * fd.abs().max(an.abs()).max(1e-6), "{idx}: {fd} vs {an}");
        }
    }
}
