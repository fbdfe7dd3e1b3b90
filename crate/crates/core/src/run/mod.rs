//! Experiment runs: configuration files, checkpoints, run directories and
//! the train, eval, ablate and analyze commands behind the CLI.
//!
//! Every command writes into a run directory `<out>/<name>/<run_id>/`
//! where `run_id` is the start time in unix seconds followed by a short
//! config hash. The output root is `--out`, else `$METODS_OUT`, else
//! `experiment.out_dir`, else `out`.

mod ablate;
mod analyze;
pub mod checkpoint;
pub mod config;
mod eval;
mod train;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

use crate::metatrain::MetaError;

pub use ablate::{cmd_ablate, AblateOptions, AblationRow};
pub use analyze::{cmd_analyze, AnalyzeOutcome};
pub use checkpoint::Checkpoint;
pub use config::{EvalPolicy, RunConfig, ABLATION_VARIANTS};
pub use eval::{cmd_eval, EvalOptions, EvalOutcome, MAX_WEIGHT_RECORD_SIZE};
pub use train::{cmd_train, TrainOptions, TrainOutcome, METRICS_HEADER};

/// Environment variable overriding the default output root.
pub const OUT_ENV: &str = "METODS_OUT";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("numeric instability: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    /// Process exit code: 2 configuration, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Data(_) | RunError::Io { .. } => 3,
            RunError::Numeric(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.to_path_buf(), source }
    }
}

impl From<MetaError> for RunError {
    fn from(e: MetaError) -> Self {
        match e {
            MetaError::Config(msg) => RunError::Config(msg),
            e if e.is_numeric() || matches!(e, MetaError::TooManyAborted { .. }) => RunError::Numeric(e.to_string()),
            e => RunError::Data(e.to_string()),
        }
    }
}

pub(crate) fn csv_err(path: &Path) -> impl Fn(csv::Error) -> RunError + '_ {
    move |e| RunError::Data(format!("{}: {e}", path.display()))
}

/// Output root from the command line, the environment or the config.
pub fn out_root(cli: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    config.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Creates `<root>/<name>/<prefix><run_id>`, suffixing `-2`, `-3`, ... on
/// collisions within the same second.
pub(crate) fn create_run_dir(root: &Path, config: &RunConfig, prefix: &str) -> Result<(PathBuf, String), RunError> {
    let base = format!("{prefix}{}-{}", unix_seconds(), config.short_hash());
    let parent = root.join(&config.name);
    std::fs::create_dir_all(&parent).map_err(|e| RunError::io(&parent, e))?;
    for k in 1.. {
        let id = if k == 1 { base.clone() } else { format!("{base}-{k}") };
        let dir = parent.join(&id);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok((dir, id)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(RunError::io(&dir, e)),
        }
    }
    unreachable!("unbounded suffix search")
}

#[derive(Serialize)]
pub(crate) struct Manifest<'a> {
    pub command: &'a str,
    pub run_id: &'a str,
    pub name: &'a str,
    pub task: &'a str,
    pub seed: u64,
    pub config_hash: String,
    pub version: &'a str,
    pub checkpoint_format: u32,
    pub created_unix: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_checkpoint: Option<String>,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, run_id: &'a str, config: &'a RunConfig) -> Self {
        Self {
            command,
            run_id,
            name: &config.name,
            task: config.task.as_str(),
            seed: config.seed,
            config_hash: config.hash().iter().map(|b| format!("{b:02x}")).collect(),
            version: env!("CARGO_PKG_VERSION"),
            checkpoint_format: checkpoint::FORMAT_VERSION,
            created_unix: unix_seconds(),
            source_checkpoint: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), RunError> {
        let text = toml::to_string(self).expect("manifest serializes");
        write_text(path, &text)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|e| RunError::io(path, e))
}

/// Runs `f` on a pool of `workers` threads, or the global pool when 0.
pub(crate) fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, RunError> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Config(format!("experiment.workers: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::TaskKind;

    #[test]
    fn exit_codes() {
        assert_eq!(RunError::Config("x".into()).exit_code(), 2);
        assert_eq!(RunError::Data("x".into()).exit_code(), 3);
        assert_eq!(RunError::Numeric("x".into()).exit_code(), 4);
        let e: RunError = MetaError::TooManyAborted { survived: 1, requested: 4 }.into();
        assert_eq!(e.exit_code(), 4);
        let e: RunError = MetaError::Config("bad".into()).into();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn run_dirs_do_not_collide() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig::preset("harlow", TaskKind::Harlow);
        let (a, ida) = create_run_dir(tmp.path(), &cfg, "").unwrap();
        let (b, _) = create_run_dir(tmp.path(), &cfg, "").unwrap();
        assert_ne!(a, b);
        assert!(a.is_dir() && b.is_dir());
        assert!(ida.ends_with(&cfg.short_hash()));
    }
}
