//! Run configuration files.
//!
//! TOML with fixed sections (`experiment`, `agent`, `env`, `train`, `eval`,
//! `ablation`). Unknown sections and keys are rejected, `experiment.name` is
//! required, and every other key falls back to the preset of the task.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{harlow, maze, TaskKind, TaskSpec};
use crate::metatrain::{ActionMode, GradientBackend, TrainConfig};
use crate::plastic::{AgentConfig, W0Mode, WriteRuleKind};

use super::RunError;

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: Option<String>,
    task: Option<TaskKind>,
    seed: Option<u64>,
    out_dir: Option<String>,
    workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum W0Kind {
    Learned,
    Sampled,
    Fixed,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    size: Option<usize>,
    depth: Option<usize>,
    input_dim: Option<usize>,
    embed_hidden: Option<usize>,
    readout_hidden: Option<usize>,
    write_rule: Option<WriteRuleKind>,
    w0: Option<W0Kind>,
    w0_mean: Option<f64>,
    w0_std: Option<f64>,
    w0_init_std: Option<f64>,
    alpha_trainable: Option<bool>,
    alpha_init_std: Option<f64>,
    coeff_init_std: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    maze_size: Option<usize>,
    horizon: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    learning_rate: Option<f64>,
    meta_batch_size: Option<usize>,
    discount: Option<f64>,
    gae_lambda: Option<f64>,
    value_coeff: Option<f64>,
    entropy_coeff: Option<f64>,
    total_env_steps: Option<u64>,
    eval_every: Option<u64>,
    eval_episodes: Option<usize>,
    checkpoint_every: Option<u64>,
    normalize_advantages: Option<bool>,
    max_grad_norm: Option<f64>,
    gradient: Option<GradientBackend>,
    checkpoint_budget: Option<usize>,
    max_updates: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPolicy {
    Sample,
    Greedy,
}

impl EvalPolicy {
    pub fn mode(self) -> ActionMode {
        match self {
            EvalPolicy::Sample => ActionMode::Sample,
            EvalPolicy::Greedy => ActionMode::Greedy,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RawEval {
    episodes: Option<usize>,
    policy: Option<EvalPolicy>,
    record_episodes: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RawAblation {
    variants: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
struct RawConfig {
    experiment: Option<RawExperiment>,
    agent: Option<RawAgent>,
    env: Option<RawEnv>,
    train: Option<RawTrain>,
    eval: Option<RawEval>,
    ablation: Option<RawAblation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub maze_size: usize,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub episodes: usize,
    pub policy: EvalPolicy,
    /// Episodes whose activations (and weights) are written by a recording eval.
    pub record_episodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
}

pub const ABLATION_VARIANTS: [&str; 5] = ["full", "s1", "alpha_off", "linear", "mlp"];

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub task: TaskKind,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Rayon worker threads; 0 uses every available core.
    pub workers: usize,
    pub agent: AgentConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablation: AblationConfig,
}

fn config_err(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

/// Parses a `--override` value as a TOML literal, falling back to a bare string.
fn parse_value(text: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}

/// Applies `section.key=value` overrides; a bare `seed` or `name` targets
/// the experiment section.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<(), RunError> {
    for ov in overrides {
        let (key, value) = ov
            .split_once('=')
            .ok_or_else(|| config_err(format!("override `{ov}` is not of the form key=value")))?;
        let key = key.trim();
        let (section, field) = match key.split_once('.') {
            Some((s, f)) => (s, f),
            None if ["seed", "name", "task"].contains(&key) => ("experiment", key),
            None => return Err(config_err(format!("override key `{key}` needs a section, e.g. train.{key}"))),
        };
        let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(sec) = entry else {
            return Err(config_err(format!("`{section}` is not a section")));
        };
        sec.insert(field.to_string(), parse_value(value.trim()));
    }
    Ok(())
}

impl RunConfig {
    /// Parses configuration text with overrides applied on top.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, RunError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| config_err(format!("invalid config syntax: {e}")))?;
        apply_overrides(&mut table, overrides)?;
        let mut raw = RawConfig::default();
        for (section, value) in table {
            fn parse<T: serde::de::DeserializeOwned>(section: &str, value: toml::Value) -> Result<Option<T>, RunError> {
                if !value.is_table() {
                    return Err(config_err(format!("`{section}` must be a section, not a value")));
                }
                value.try_into().map(Some).map_err(|e: toml::de::Error| config_err(format!("[{section}]: {}", e.message().trim())))
            }
            match section.as_str() {
                "experiment" => raw.experiment = parse(&section, value)?,
                "agent" => raw.agent = parse(&section, value)?,
                "env" => raw.env = parse(&section, value)?,
                "train" => raw.train = parse(&section, value)?,
                "eval" => raw.eval = parse(&section, value)?,
                "ablation" => raw.ablation = parse(&section, value)?,
                other => {
                    return Err(config_err(format!(
                        "unknown section `[{other}]` (expected experiment, agent, env, train, eval or ablation)"
                    )))
                }
            }
        }
        Self::resolve(raw)
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    /// Preset configuration for a task, as if only the name and task were given.
    pub fn preset(name: &str, task: TaskKind) -> Self {
        let raw = RawConfig {
            experiment: Some(RawExperiment { name: Some(name.into()), task: Some(task), ..Default::default() }),
            ..Default::default()
        };
        Self::resolve(raw).expect("presets are valid")
    }

    fn resolve(raw: RawConfig) -> Result<Self, RunError> {
        let exp = raw.experiment.unwrap_or_default();
        let name = exp.name.ok_or_else(|| config_err("missing required key `experiment.name`"))?;
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(config_err(format!("experiment.name `{name}` must be a non-empty plain name")));
        }
        let task = match exp.task {
            Some(t) => t,
            None if name.starts_with("harlow") => TaskKind::Harlow,
            None if name.starts_with("maze") => TaskKind::Maze,
            None => return Err(config_err("missing required key `experiment.task` (harlow or maze)")),
        };
        let seed = exp.seed.unwrap_or(0);

        let mut agent = match task {
            TaskKind::Harlow => AgentConfig::harlow(),
            TaskKind::Maze => AgentConfig::maze(),
        };
        let ra = raw.agent.unwrap_or_default();
        agent.size = ra.size.unwrap_or(agent.size);
        agent.depth = ra.depth.unwrap_or(agent.depth);
        agent.embed_hidden = ra.embed_hidden.unwrap_or(agent.embed_hidden);
        agent.readout_hidden = ra.readout_hidden.unwrap_or(agent.readout_hidden);
        agent.write_rule = ra.write_rule.unwrap_or(agent.write_rule);
        agent.alpha_trainable = ra.alpha_trainable.unwrap_or(agent.alpha_trainable);
        agent.alpha_init_std = ra.alpha_init_std.unwrap_or(agent.alpha_init_std);
        agent.coeff_init_std = ra.coeff_init_std.unwrap_or(agent.coeff_init_std);
        agent.w0_init_std = ra.w0_init_std.unwrap_or(agent.w0_init_std);
        let (default_mean, default_std) = match agent.w0 {
            W0Mode::Sampled { mean, std } => (mean, std),
            _ => (0.0, 1e-3),
        };
        let w0_kind = ra.w0.unwrap_or(match agent.w0 {
            W0Mode::Learned => W0Kind::Learned,
            W0Mode::Sampled { .. } => W0Kind::Sampled,
            W0Mode::Fixed => W0Kind::Fixed,
        });
        if w0_kind != W0Kind::Sampled && (ra.w0_mean.is_some() || ra.w0_std.is_some()) {
            return Err(config_err("agent.w0_mean and agent.w0_std only apply when agent.w0 = \"sampled\""));
        }
        agent.w0 = match w0_kind {
            W0Kind::Learned => W0Mode::Learned,
            W0Kind::Fixed => W0Mode::Fixed,
            W0Kind::Sampled => W0Mode::Sampled {
                mean: ra.w0_mean.unwrap_or(default_mean),
                std: ra.w0_std.unwrap_or(default_std),
            },
        };
        agent.num_actions = task.num_actions();
        let derived = AgentConfig::input_dim_for(task.obs_dim(), task.num_actions());
        if let Some(i) = ra.input_dim {
            if i != derived {
                return Err(config_err(format!(
                    "agent.input_dim = {i} does not match the {} input layout [obs {}, one-hot action {}, reward 1] = {derived}",
                    task.as_str(),
                    task.obs_dim(),
                    task.num_actions()
                )));
            }
        }
        agent.input_dim = derived;
        agent.seed = seed;
        for (key, v) in [("agent.size", agent.size), ("agent.depth", agent.depth), ("agent.embed_hidden", agent.embed_hidden), ("agent.readout_hidden", agent.readout_hidden)] {
            if v == 0 {
                return Err(config_err(format!("{key} must be at least 1")));
            }
        }
        for (key, v) in [("agent.alpha_init_std", agent.alpha_init_std), ("agent.coeff_init_std", agent.coeff_init_std), ("agent.w0_init_std", agent.w0_init_std)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err(format!("{key} must be a finite non-negative number")));
            }
        }

        let re = raw.env.unwrap_or_default();
        let env = match task {
            TaskKind::Harlow => {
                if re.maze_size.is_some() {
                    return Err(config_err("env.maze_size does not apply to the harlow task"));
                }
                if matches!(re.horizon, Some(h) if h != harlow::MAX_STEPS) {
                    return Err(config_err(format!("env.horizon is fixed at {} for harlow", harlow::MAX_STEPS)));
                }
                EnvConfig { maze_size: 0, horizon: harlow::MAX_STEPS }
            }
            TaskKind::Maze => {
                let env = EnvConfig {
                    maze_size: re.maze_size.unwrap_or(maze::DEFAULT_SIZE),
                    horizon: re.horizon.unwrap_or(maze::DEFAULT_HORIZON),
                };
                if env.maze_size < maze::MIN_SIZE {
                    return Err(config_err(format!("env.maze_size must be at least {}", maze::MIN_SIZE)));
                }
                if env.horizon == 0 {
                    return Err(config_err("env.horizon must be at least 1"));
                }
                env
            }
        };

        let mut train = TrainConfig::for_task(task);
        let rt = raw.train.unwrap_or_default();
        train.learning_rate = rt.learning_rate.unwrap_or(train.learning_rate);
        train.meta_batch_size = rt.meta_batch_size.unwrap_or(train.meta_batch_size);
        train.discount = rt.discount.unwrap_or(train.discount);
        train.gae_lambda = rt.gae_lambda.unwrap_or(train.gae_lambda);
        train.value_coeff = rt.value_coeff.unwrap_or(train.value_coeff);
        train.entropy_coeff = rt.entropy_coeff.unwrap_or(train.entropy_coeff);
        train.total_env_steps = rt.total_env_steps.unwrap_or(train.total_env_steps);
        train.eval_every = rt.eval_every.unwrap_or(train.eval_every);
        train.eval_episodes = rt.eval_episodes.unwrap_or(train.eval_episodes);
        train.checkpoint_every = rt.checkpoint_every.unwrap_or(train.checkpoint_every);
        train.normalize_advantages = rt.normalize_advantages.unwrap_or(train.normalize_advantages);
        train.max_grad_norm = rt.max_grad_norm.unwrap_or(train.max_grad_norm);
        train.gradient = rt.gradient.unwrap_or(train.gradient);
        train.checkpoint_budget = rt.checkpoint_budget.or(train.checkpoint_budget);
        train.max_updates = rt.max_updates.or(train.max_updates);
        train.seed = seed;
        train.validate().map_err(|e| config_err(e.to_string().replace("invalid training configuration: ", "train.")))?;

        let rv = raw.eval.unwrap_or_default();
        let eval = EvalConfig {
            episodes: rv.episodes.unwrap_or(500),
            policy: rv.policy.unwrap_or(EvalPolicy::Sample),
            record_episodes: rv.record_episodes.unwrap_or(20),
        };
        if eval.episodes == 0 {
            return Err(config_err("eval.episodes must be at least 1"));
        }

        let rb = raw.ablation.unwrap_or_default();
        let ablation = AblationConfig {
            variants: rb.variants.unwrap_or_else(|| ABLATION_VARIANTS.iter().map(|s| s.to_string()).collect()),
            seeds: rb.seeds.unwrap_or_else(|| vec![0, 1, 2]),
        };
        if let Some(v) = ablation.variants.iter().find(|v| !ABLATION_VARIANTS.contains(&v.as_str())) {
            return Err(config_err(format!("ablation.variants: unknown variant `{v}` (expected one of {ABLATION_VARIANTS:?})")));
        }
        if ablation.seeds.is_empty() {
            return Err(config_err("ablation.seeds must not be empty"));
        }

        Ok(Self {
            name,
            task,
            seed,
            out_dir: exp.out_dir.map(PathBuf::from),
            workers: exp.workers.unwrap_or(0),
            agent,
            env,
            train,
            eval,
            ablation,
        })
    }

    fn to_raw(&self) -> RawConfig {
        let a = &self.agent;
        let (w0, w0_mean, w0_std) = match a.w0 {
            W0Mode::Learned => (W0Kind::Learned, None, None),
            W0Mode::Fixed => (W0Kind::Fixed, None, None),
            W0Mode::Sampled { mean, std } => (W0Kind::Sampled, Some(mean), Some(std)),
        };
        let t = &self.train;
        RawConfig {
            experiment: Some(RawExperiment {
                name: Some(self.name.clone()),
                task: Some(self.task),
                seed: Some(self.seed),
                out_dir: self.out_dir.as_ref().map(|p| p.display().to_string()),
                workers: Some(self.workers),
            }),
            agent: Some(RawAgent {
                size: Some(a.size),
                depth: Some(a.depth),
                input_dim: Some(a.input_dim),
                embed_hidden: Some(a.embed_hidden),
                readout_hidden: Some(a.readout_hidden),
                write_rule: Some(a.write_rule),
                w0: Some(w0),
                w0_mean,
                w0_std,
                w0_init_std: Some(a.w0_init_std),
                alpha_trainable: Some(a.alpha_trainable),
                alpha_init_std: Some(a.alpha_init_std),
                coeff_init_std: Some(a.coeff_init_std),
            }),
            env: Some(match self.task {
                TaskKind::Harlow => RawEnv { maze_size: None, horizon: Some(self.env.horizon) },
                TaskKind::Maze => RawEnv { maze_size: Some(self.env.maze_size), horizon: Some(self.env.horizon) },
            }),
            train: Some(RawTrain {
                learning_rate: Some(t.learning_rate),
                meta_batch_size: Some(t.meta_batch_size),
                discount: Some(t.discount),
                gae_lambda: Some(t.gae_lambda),
                value_coeff: Some(t.value_coeff),
                entropy_coeff: Some(t.entropy_coeff),
                total_env_steps: Some(t.total_env_steps),
                eval_every: Some(t.eval_every),
                eval_episodes: Some(t.eval_episodes),
                checkpoint_every: Some(t.checkpoint_every),
                normalize_advantages: Some(t.normalize_advantages),
                max_grad_norm: Some(t.max_grad_norm),
                gradient: Some(t.gradient),
                checkpoint_budget: t.checkpoint_budget,
                max_updates: t.max_updates,
            }),
            eval: Some(RawEval {
                episodes: Some(self.eval.episodes),
                policy: Some(self.eval.policy),
                record_episodes: Some(self.eval.record_episodes),
            }),
            ablation: Some(RawAblation { variants: Some(self.ablation.variants.clone()), seeds: Some(self.ablation.seeds.clone()) }),
        }
    }

    /// Canonical TOML with every key spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..4].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn task_spec(&self) -> TaskSpec {
        match self.task {
            TaskKind::Harlow => TaskSpec::harlow(),
            TaskKind::Maze => TaskSpec { kind: TaskKind::Maze, maze_size: self.env.maze_size, horizon: self.env.horizon },
        }
    }
}
