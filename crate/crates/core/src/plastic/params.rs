//! Agent parameter containers and their initialisation.

use serde::{Deserialize, Serialize};

use crate::numcore::rng::{rng_from_seed, Rng};
use crate::numcore::{normal_from, orthogonal_from, Matrix, Real, Vector};

/// Lower-triangular table of mixing coefficients `c[s][l]` for
/// `1 <= s <= depth` and `0 <= l <= s`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriTable<T: Real = f64> {
    depth: usize,
    data: Vec<T>,
}

impl<T: Real> TriTable<T> {
    pub fn entries_for(depth: usize) -> usize {
        depth * (depth + 3) / 2
    }

    pub fn zeros(depth: usize) -> Self {
        Self { depth, data: vec![T::zero(); Self::entries_for(depth)] }
    }

    pub fn from_vec(depth: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == Self::entries_for(depth)).then_some(Self { depth, data })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn offset(s: usize) -> usize {
        // rows 1..s-1 hold 2, 3, ..., s entries
        (s - 1) * (s + 2) / 2
    }

    pub fn index_of(&self, s: usize, l: usize) -> usize {
        assert!((1..=self.depth).contains(&s) && l <= s, "table index ({s}, {l}) out of range");
        Self::offset(s) + l
    }

    pub fn get(&self, s: usize, l: usize) -> T {
        self.data[self.index_of(s, l)]
    }

    pub fn set(&mut self, s: usize, l: usize, value: T) {
        let i = self.index_of(s, l);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }
}

/// Plasticity gains and recursion coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct PlasticityParams<T: Real = f64> {
    pub alpha: Matrix<T>,
    pub kappa: TriTable<T>,
    pub beta: TriTable<T>,
}

impl<T: Real> PlasticityParams<T> {
    pub fn depth(&self) -> usize {
        self.kappa.depth()
    }

    pub fn size(&self) -> usize {
        self.alpha.rows()
    }

    /// Coefficients that make one recursion step a plain Hebbian update
    /// `W + eta (alpha ⊙ v ⊗ v)` with read-out `tanh(W v)`.
    pub fn hebbian(alpha: Matrix<T>, eta: T) -> Self {
        let mut kappa = TriTable::zeros(1);
        let mut beta = TriTable::zeros(1);
        kappa.set(1, 1, T::one());
        beta.set(1, 0, T::one());
        beta.set(1, 1, eta);
        Self { alpha, kappa, beta }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteRuleKind {
    Hebbian,
    LinearProjected,
    MlpProjected,
}

impl WriteRuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WriteRuleKind::Hebbian => "hebbian",
            WriteRuleKind::LinearProjected => "linear_projected",
            WriteRuleKind::MlpProjected => "mlp_projected",
        }
    }
}

/// Right-hand factor of the write outer product.
#[derive(Clone, Debug, PartialEq)]
pub enum WriteRule<T: Real = f64> {
    /// `v ⊗ v`
    Hebbian,
    /// `v ⊗ (P v)`
    LinearProjected { proj: Matrix<T> },
    /// `v ⊗ tanh(P2 tanh(P1 v))`
    MlpProjected { proj1: Matrix<T>, proj2: Matrix<T> },
}

impl<T: Real> WriteRule<T> {
    pub fn kind(&self) -> WriteRuleKind {
        match self {
            WriteRule::Hebbian => WriteRuleKind::Hebbian,
            WriteRule::LinearProjected { .. } => WriteRuleKind::LinearProjected,
            WriteRule::MlpProjected { .. } => WriteRuleKind::MlpProjected,
        }
    }
}

/// How the plastic matrix is initialised at the start of every episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum W0Mode {
    /// Meta-trained initial matrix.
    Learned,
    /// Fresh `N(mean, std²)` draw per episode.
    Sampled { mean: f64, std: f64 },
    /// Stored initial matrix excluded from training.
    Fixed,
}

/// Affine layer `y = W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T: Real = f64> {
    pub weight: Matrix<T>,
    pub bias: Vector<T>,
}

impl<T: Real> Dense<T> {
    pub fn orthogonal(rng: &mut Rng, inputs: usize, outputs: usize) -> Self {
        Self { weight: orthogonal_from(rng, outputs, inputs), bias: Vector::zeros(outputs) }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut y = self.weight.matvec_slice(x);
        for (yi, &b) in y.iter_mut().zip(self.bias.as_slice()) {
            *yi += b;
        }
        y
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }
}

/// Dimensions and initialisation settings of an agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub input_dim: usize,
    pub size: usize,
    pub num_actions: usize,
    pub embed_hidden: usize,
    pub readout_hidden: usize,
    pub depth: usize,
    pub write_rule: WriteRuleKind,
    pub w0: W0Mode,
    pub alpha_trainable: bool,
    pub alpha_init_std: f64,
    pub coeff_init_std: f64,
    pub w0_init_std: f64,
    pub seed: u64,
}

impl AgentConfig {
    /// Layout for a task with `obs_dim` observations and `num_actions` actions:
    /// the embedding sees `[obs, one_hot(prev_action), prev_reward]`.
    pub fn input_dim_for(obs_dim: usize, num_actions: usize) -> usize {
        obs_dim + num_actions + 1
    }

    /// Harlow preset: N = 20, 32-unit hidden layers, sampled `W_0 ~ N(0, 1e-3)`.
    pub fn harlow() -> Self {
        Self {
            input_dim: Self::input_dim_for(8, 2),
            size: 20,
            num_actions: 2,
            embed_hidden: 32,
            readout_hidden: 32,
            depth: 3,
            write_rule: WriteRuleKind::Hebbian,
            w0: W0Mode::Sampled { mean: 0.0, std: 1e-3 },
            alpha_trainable: true,
            alpha_init_std: 1e-3,
            coeff_init_std: 1e-2,
            w0_init_std: 1e-3,
            seed: 0,
        }
    }

    /// Maze preset: N = 200, 32-unit hidden layers, learned `W_0`.
    pub fn maze() -> Self {
        Self {
            input_dim: Self::input_dim_for(9, 4),
            size: 200,
            num_actions: 4,
            embed_hidden: 32,
            readout_hidden: 32,
            depth: 2,
            write_rule: WriteRuleKind::Hebbian,
            w0: W0Mode::Learned,
            alpha_trainable: true,
            alpha_init_std: 1e-3,
            coeff_init_std: 1e-2,
            w0_init_std: 1e-3,
            seed: 0,
        }
    }
}

/// Everything the meta-optimiser updates.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentParams<T: Real = f64> {
    pub embed_hidden: Dense<T>,
    pub embed_out: Dense<T>,
    pub readout_hidden: Dense<T>,
    pub policy_head: Dense<T>,
    /// Single-output value head on the readout hidden layer.
    pub value_head: Dense<T>,
    pub plasticity: PlasticityParams<T>,
    pub write_rule: WriteRule<T>,
    pub w0_mode: W0Mode,
    /// Present for learned and fixed modes.
    pub w0: Option<Matrix<T>>,
    pub alpha_trainable: bool,
}

/// Initialises an agent from its configuration.
pub fn init_agent<T: Real>(config: &AgentConfig) -> AgentParams<T> {
    let mut rng = rng_from_seed(config.seed);
    let n = config.size;
    let embed_hidden = Dense::orthogonal(&mut rng, config.input_dim, config.embed_hidden);
    let embed_out = Dense::orthogonal(&mut rng, config.embed_hidden, n);
    let readout_hidden = Dense::orthogonal(&mut rng, n, config.readout_hidden);
    let policy_head = Dense::orthogonal(&mut rng, config.readout_hidden, config.num_actions);
    let value_head = Dense::orthogonal(&mut rng, config.readout_hidden, 1);

    let alpha = if config.alpha_trainable {
        normal_from(&mut rng, n, n, 0.0, config.alpha_init_std)
    } else {
        Matrix::filled(n, n, T::one())
    };
    let mut kappa = TriTable::zeros(config.depth);
    let mut beta = TriTable::zeros(config.depth);
    let k: Matrix<T> = normal_from(&mut rng, 1, kappa.as_slice().len(), 0.0, config.coeff_init_std);
    let b: Matrix<T> = normal_from(&mut rng, 1, beta.as_slice().len(), 0.0, config.coeff_init_std);
    kappa.as_mut_slice().copy_from_slice(k.as_slice());
    beta.as_mut_slice().copy_from_slice(b.as_slice());

    let write_rule = match config.write_rule {
        WriteRuleKind::Hebbian => WriteRule::Hebbian,
        WriteRuleKind::LinearProjected => WriteRule::LinearProjected { proj: orthogonal_from(&mut rng, n, n) },
        WriteRuleKind::MlpProjected => WriteRule::MlpProjected {
            proj1: orthogonal_from(&mut rng, n, n),
            proj2: orthogonal_from(&mut rng, n, n),
        },
    };
    let w0 = match config.w0 {
        W0Mode::Learned | W0Mode::Fixed => Some(normal_from(&mut rng, n, n, 0.0, config.w0_init_std)),
        W0Mode::Sampled { .. } => None,
    };
    AgentParams {
        embed_hidden,
        embed_out,
        readout_hidden,
        policy_head,
        value_head,
        plasticity: PlasticityParams { alpha, kappa, beta },
        write_rule,
        w0_mode: config.w0,
        w0,
        alpha_trainable: config.alpha_trainable,
    }
}

/// Shape of a named parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamShape {
    pub rows: usize,
    pub cols: usize,
}

impl<T: Real> AgentParams<T> {
    pub fn size(&self) -> usize {
        self.plasticity.size()
    }

    pub fn depth(&self) -> usize {
        self.plasticity.depth()
    }

    pub fn input_dim(&self) -> usize {
        self.embed_hidden.inputs()
    }

    pub fn num_actions(&self) -> usize {
        self.policy_head.outputs()
    }

    /// Visits every parameter tensor in a fixed order:
    /// `(name, shape, data, trainable)`.
    pub fn visit(&self, mut f: impl FnMut(&str, ParamShape, &[T], bool)) {
        let mut dense = |prefix: &str, d: &Dense<T>| {
            let (r, c) = d.weight.shape();
            f(&format!("{prefix}.weight"), ParamShape { rows: r, cols: c }, d.weight.as_slice(), true);
            f(&format!("{prefix}.bias"), ParamShape { rows: r, cols: 1 }, d.bias.as_slice(), true);
        };
        dense("embed.hidden", &self.embed_hidden);
        dense("embed.out", &self.embed_out);
        dense("readout.hidden", &self.readout_hidden);
        dense("readout.policy", &self.policy_head);
        dense("readout.value", &self.value_head);
        let n = self.size();
        let sq = ParamShape { rows: n, cols: n };
        let tri = ParamShape { rows: self.plasticity.kappa.as_slice().len(), cols: 1 };
        f("plastic.alpha", sq, self.plasticity.alpha.as_slice(), self.alpha_trainable);
        f("plastic.kappa", tri, self.plasticity.kappa.as_slice(), true);
        f("plastic.beta", tri, self.plasticity.beta.as_slice(), true);
        match &self.write_rule {
            WriteRule::Hebbian => {}
            WriteRule::LinearProjected { proj } => f("write.proj", sq, proj.as_slice(), true),
            WriteRule::MlpProjected { proj1, proj2 } => {
                f("write.proj1", sq, proj1.as_slice(), true);
                f("write.proj2", sq, proj2.as_slice(), true);
            }
        }
        if let Some(w0) = &self.w0 {
            f("plastic.w0", sq, w0.as_slice(), self.w0_mode == W0Mode::Learned);
        }
    }

    /// Mutable counterpart of [`visit`](Self::visit), same order.
    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut [T], bool)) {
        let mut dense = |prefix: &str, d: &mut Dense<T>| {
            f(&format!("{prefix}.weight"), d.weight.as_mut_slice(), true);
            f(&format!("{prefix}.bias"), d.bias.as_mut_slice(), true);
        };
        dense("embed.hidden", &mut self.embed_hidden);
        dense("embed.out", &mut self.embed_out);
        dense("readout.hidden", &mut self.readout_hidden);
        dense("readout.policy", &mut self.policy_head);
        dense("readout.value", &mut self.value_head);
        f("plastic.alpha", self.plasticity.alpha.as_mut_slice(), self.alpha_trainable);
        f("plastic.kappa", self.plasticity.kappa.as_mut_slice(), true);
        f("plastic.beta", self.plasticity.beta.as_mut_slice(), true);
        match &mut self.write_rule {
            WriteRule::Hebbian => {}
            WriteRule::LinearProjected { proj } => f("write.proj", proj.as_mut_slice(), true),
            WriteRule::MlpProjected { proj1, proj2 } => {
                f("write.proj1", proj1.as_mut_slice(), true);
                f("write.proj2", proj2.as_mut_slice(), true);
            }
        }
        let learned = self.w0_mode == W0Mode::Learned;
        if let Some(w0) = &mut self.w0 {
            f("plastic.w0", w0.as_mut_slice(), learned);
        }
    }

    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _, d, _| n += d.len());
        n
    }

    /// All entries concatenated in visiting order.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_scalars());
        self.visit(|_, _, d, _| out.extend_from_slice(d));
        out
    }

    /// Per-entry trainability mask aligned with [`flatten`](Self::flatten).
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.num_scalars());
        self.visit(|_, _, d, t| out.extend(std::iter::repeat_n(t, d.len())));
        out
    }

    /// Overwrites all entries from a flat slice produced by `flatten`.
    pub fn assign_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.num_scalars(), "flat parameter length");
        let mut at = 0;
        self.visit_mut(|_, d, _| {
            d.copy_from_slice(&flat[at..at + d.len()]);
            at += d.len();
        });
    }

    /// Same structure with every entry zero; used as a gradient container.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, d, _| d.iter_mut().for_each(|x| *x = T::zero()));
        z
    }

    /// `self += c * other` over every tensor.
    pub fn axpy(&mut self, c: T, other: &Self) {
        let flat = other.flatten();
        let mut at = 0;
        self.visit_mut(|_, d, _| {
            for x in d.iter_mut() {
                *x += c * flat[at];
                at += 1;
            }
        });
    }

    pub fn l2_norm(&self) -> T {
        self.flatten().iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> AgentParams<U> {
        let dense = |d: &Dense<T>| Dense { weight: d.weight.cast(), bias: d.bias.cast() };
        let tri = |t: &TriTable<T>| {
            TriTable::from_vec(t.depth(), t.as_slice().iter().map(|x| U::lit(x.to_f64_lossy())).collect())
                .expect("same depth")
        };
        AgentParams {
            embed_hidden: dense(&self.embed_hidden),
            embed_out: dense(&self.embed_out),
            readout_hidden: dense(&self.readout_hidden),
            policy_head: dense(&self.policy_head),
            value_head: dense(&self.value_head),
            plasticity: PlasticityParams {
                alpha: self.plasticity.alpha.cast(),
                kappa: tri(&self.plasticity.kappa),
                beta: tri(&self.plasticity.beta),
            },
            write_rule: match &self.write_rule {
                WriteRule::Hebbian => WriteRule::Hebbian,
                WriteRule::LinearProjected { proj } => WriteRule::LinearProjected { proj: proj.cast() },
                WriteRule::MlpProjected { proj1, proj2 } => {
                    WriteRule::MlpProjected { proj1: proj1.cast(), proj2: proj2.cast() }
                }
            },
            w0_mode: self.w0_mode,
            w0: self.w0.as_ref().map(Matrix::cast),
            alpha_trainable: self.alpha_trainable,
        }
    }

    /// Initial plastic matrix for an episode. Sampled mode draws from `rng`.
    pub fn initial_weights(&self, rng: &mut Rng) -> Matrix<T> {
        match (self.w0_mode, &self.w0) {
            (W0Mode::Sampled { mean, std }, _) => normal_from(rng, self.size(), self.size(), mean, std),
            (_, Some(w0)) => w0.clone(),
            (_, None) => Matrix::zeros(self.size(), self.size()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tri_table_indexing_covers_range() {
        let t = TriTable::<f64>::zeros(3);
        let mut seen = Vec::new();
        for s in 1..=3 {
            for l in 0..=s {
                seen.push(t.index_of(s, l));
            }
        }
        assert_eq!(seen, (0..9).collect::<Vec<_>>());
        assert_eq!(TriTable::<f64>::entries_for(3), 9);
    }

    #[test]
    #[should_panic]
    fn tri_table_rejects_l_above_s() {
        TriTable::<f64>::zeros(2).get(1, 2);
    }

    #[test]
    fn harlow_preset_shapes() {
        let cfg = AgentConfig::harlow();
        let p: AgentParams<f64> = init_agent(&cfg);
        assert_eq!(p.size(), 20);
        assert_eq!(p.num_actions(), 2);
        assert_eq!(p.embed_hidden.weight.shape(), (32, cfg.input_dim));
        assert_eq!(p.embed_out.weight.shape(), (20, 32));
        assert_eq!(p.readout_hidden.weight.shape(), (32, 20));
        assert_eq!(p.policy_head.weight.shape(), (2, 32));
        assert!(p.w0.is_none());
        assert!(matches!(p.w0_mode, W0Mode::Sampled { std, .. } if std == 1e-3));
    }

    #[test]
    fn maze_preset_shapes() {
        let cfg = AgentConfig::maze();
        let p: AgentParams<f64> = init_agent(&cfg);
        assert_eq!(p.size(), 200);
        assert_eq!(p.num_actions(), 4);
        assert_eq!(p.w0.as_ref().unwrap().shape(), (200, 200));
        assert_eq!(p.w0_mode, W0Mode::Learned);
    }

    #[test]
    fn zero_std_override_gives_zero_alpha() {
        let mut cfg = AgentConfig::harlow();
        cfg.alpha_init_std = 0.0;
        let p: AgentParams<f64> = init_agent(&cfg);
        assert!(p.plasticity.alpha.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_stds_follow_config() {
        let mut cfg = AgentConfig::harlow();
        cfg.size = 60;
        let p: AgentParams<f64> = init_agent(&cfg);
        let a = p.plasticity.alpha.as_slice();
        let std = (a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64).sqrt();
        assert!((0.8e-3..1.2e-3).contains(&std), "{std}");
    }

    #[test]
    fn flatten_roundtrip_and_mask() {
        let mut cfg = AgentConfig::harlow();
        cfg.alpha_trainable = false;
        let p: AgentParams<f64> = init_agent(&cfg);
        let flat = p.flatten();
        let mut q = p.zeros_like();
        q.assign_flat(&flat);
        assert_eq!(p, q);
        let mask = p.trainable_mask();
        assert_eq!(mask.len(), flat.len());
        assert_eq!(mask.iter().filter(|m| !**m).count(), 400);
        assert!(p.plasticity.alpha.as_slice().iter().all(|&x| x == 1.0));
    }
}
