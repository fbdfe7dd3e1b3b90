//! Adam with global gradient-norm clipping over the trainable entries.

use crate::plastic::AgentParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, max_grad_norm: Some(0.5) }
    }
}

/// Moment estimates, flattened in [`AgentParams::visit`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self { config, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    /// Applies one update and returns the gradient norm before clipping.
    /// Entries of non-trainable tensors are left untouched.
    pub fn step(&mut self, params: &mut AgentParams<f64>, grad: &AgentParams<f64>) -> f64 {
        let mask = params.trainable_mask();
        let mut g = grad.flatten();
        assert_eq!(g.len(), self.m.len(), "gradient size does not match optimizer state");
        for (gi, &keep) in g.iter_mut().zip(&mask) {
            if !keep {
                *gi = 0.0;
            }
        }
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if let Some(max) = self.config.max_grad_norm {
            if norm > max {
                let s = max / norm;
                g.iter_mut().for_each(|x| *x *= s);
            }
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let mut flat = params.flatten();
        for i in 0..flat.len() {
            if !mask[i] {
                continue;
            }
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            flat[i] -= c.learning_rate * mh / (vh.sqrt() + c.eps);
        }
        params.assign_flat(&flat);
        norm
    }
}

/// Rescaling factor applied by the clip for a gradient of norm `norm`.
pub fn clip_factor(norm: f64, max: f64) -> f64 {
    if norm > max {
        max / norm
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plastic::{init_agent, AgentConfig, W0Mode};

    fn small() -> AgentParams<f64> {
        let mut cfg = AgentConfig::harlow();
        cfg.size = 4;
        cfg.embed_hidden = 3;
        cfg.readout_hidden = 3;
        cfg.depth = 1;
        cfg.w0 = W0Mode::Learned;
        init_agent(&cfg)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = small();
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::with_lr(1e-2), p.num_scalars());
        let zero = p.zeros_like();
        adam.step(&mut p, &zero);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_sign() {
        let mut p = small();
        let before = p.flatten();
        let mut g = p.zeros_like();
        g.visit_mut(|_, xs, _| {
            for (i, x) in xs.iter_mut().enumerate() {
                *x = if i % 2 == 0 { 1e-3 } else { -2e-3 };
            }
        });
        let mut cfg = AdamConfig::with_lr(1e-2);
        cfg.max_grad_norm = None;
        let mut adam = Adam::new(cfg, p.num_scalars());
        adam.step(&mut p, &g);
        let gf = g.flatten();
        for ((a, b), gi) in p.flatten().iter().zip(&before).zip(&gf) {
            let expected = -1e-2 * gi.signum();
            assert!((a - b - expected).abs() < 1e-6, "{a} {b} {gi}");
        }
    }

    #[test]
    fn clipping_rescales_to_max_norm() {
        assert_eq!(clip_factor(5.0, 0.5), 0.1);
        assert_eq!(clip_factor(0.3, 0.5), 1.0);
        let mut p = small();
        let mut g = p.zeros_like();
        g.plasticity.kappa.as_mut_slice()[0] = 3.0;
        g.plasticity.beta.as_mut_slice()[0] = 4.0;
        let mut adam = Adam::new(AdamConfig::with_lr(1e-3), p.num_scalars());
        let norm = adam.step(&mut p, &g);
        assert_eq!(norm, 5.0);
        // First moment holds (1 - beta1) * clipped gradient.
        let m: f64 = adam.m.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((m - 0.1 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn frozen_entries_do_not_move() {
        let mut cfg = AgentConfig::harlow();
        cfg.size = 3;
        cfg.alpha_trainable = false;
        let mut p: AgentParams<f64> = init_agent(&cfg);
        let mut g = p.zeros_like();
        g.visit_mut(|_, xs, _| xs.iter_mut().for_each(|x| *x = 1.0));
        let mut adam = Adam::new(AdamConfig::with_lr(1e-2), p.num_scalars());
        adam.step(&mut p, &g);
        assert!(p.plasticity.alpha.as_slice().iter().all(|&a| a == 1.0));
    }
}
