use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn metods(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_metods"));
    cmd.args(args).env_remove("METODS_OUT");
    if let Some(p) = out_env {
        cmd.env("METODS_OUT", p);
    }
    cmd.output().expect("binary runs")
}

fn stdout_last_line(o: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8_lossy(&o.stdout).lines().last().expect("prints a path").trim())
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY_HARLOW: &str = "[experiment]\nname = \"tiny\"\ntask = \"harlow\"\n[agent]\nsize = 6\nembed_hidden = 8\nreadout_hidden = 8\n[train]\nmeta_batch_size = 4\nmax_updates = 4\neval_every = 0\ncheckpoint_every = 2\n[eval]\nepisodes = 6\nrecord_episodes = 2\n";

const TINY_MAZE: &str = "[experiment]\nname = \"tinymaze\"\ntask = \"maze\"\n[agent]\nsize = 8\nembed_hidden = 8\nreadout_hidden = 8\n[env]\nmaze_size = 5\nhorizon = 20\n[train]\nmeta_batch_size = 3\nmax_updates = 2\neval_every = 0\ncheckpoint_every = 0\n[eval]\nepisodes = 4\n";

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn train(dir: &Path, config: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("out");
    let mut args = vec!["train", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = metods(&args, None);
    assert!(o.status.success(), "{}", stderr(&o));
    stdout_last_line(&o)
}

fn metrics_without_wall_time(run: &Path) -> Vec<String> {
    std::fs::read_to_string(run.join("metrics.csv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn train_writes_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY_HARLOW);
    let run = train(tmp.path(), &cfg, &[]);
    assert_eq!(run.parent().unwrap(), tmp.path().join("out/tiny"));
    for f in ["metrics.csv", "config.toml", "manifest.toml", "final.ckpt", "checkpoints/update_000004.ckpt"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let manifest: toml::Table = std::fs::read_to_string(run.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["seed"].as_integer(), Some(0));
    assert_eq!(manifest["version"].as_str(), Some(env!("CARGO_PKG_VERSION")));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(std::fs::read_to_string(run.join("metrics.csv")).unwrap().lines().count(), 5);
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[experiment]\ntask = \"harlow\"\n");
    let o = metods(&["train", "--config", cfg.to_str().unwrap()], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment.name"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "typo.toml", "[experiment]\nname = \"x\"\ntask = \"harlow\"\n[agent]\nsise = 3\n");
    let o = metods(&["train", "--config", cfg.to_str().unwrap()], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sise"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "ok.toml", TINY_HARLOW);
    let o = metods(&["train", "--config", cfg.to_str().unwrap(), "--override", "train.discount=2"], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("discount"), "{}", stderr(&o));
}

#[test]
fn seed_override_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY_HARLOW);
    let a = train(tmp.path(), &cfg, &["--override", "seed=7"]);
    let b = train(tmp.path(), &cfg, &["--seed", "7"]);
    let c = train(tmp.path(), &cfg, &[]);
    assert_ne!(a, b);
    assert_eq!(metrics_without_wall_time(&a), metrics_without_wall_time(&b));
    assert_ne!(metrics_without_wall_time(&a), metrics_without_wall_time(&c));
    assert_eq!(std::fs::read(a.join("final.ckpt")).unwrap(), std::fs::read(b.join("final.ckpt")).unwrap());
}

#[test]
fn out_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY_HARLOW);
    let root = tmp.path().join("envroot");
    let o = metods(&["train", "--config", cfg.to_str().unwrap(), "--override", "train.max_updates=1"], Some(&root));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout_last_line(&o).starts_with(root.join("tiny")));
}

#[test]
fn harlow_eval_record_and_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY_HARLOW);
    let run = train(tmp.path(), &cfg, &[]);

    let o = metods(&["analyze", run.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("--record-weights"), "{}", stderr(&o));

    let ckpt = run.join("final.ckpt");
    let o = metods(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--record-weights", "--random-baseline"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(run.join("eval_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().nth(1).unwrap().starts_with("agent,harlow,,6,"));
    assert_eq!(std::fs::read_to_string(run.join("eval_episodes.csv")).unwrap().lines().count(), 13);
    assert!(run.join("weights.csv").is_file());

    let o = metods(&["analyze", run.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["pca.csv", "pca_variance.csv", "energy_grid.csv", "synaptic_variation.csv", "selectivity_0.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let grid = std::fs::read_to_string(run.join("energy_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 41 * 41 + 1);
    let var = std::fs::read_to_string(run.join("synaptic_variation.csv")).unwrap();
    assert_eq!(var.lines().next().unwrap().split(',').count(), 2 + 6);
}

#[test]
fn maze_eval_size_override_and_selectivity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "maze.toml", TINY_MAZE);
    let run = train(tmp.path(), &cfg, &[]);
    let ckpt = run.join("final.ckpt");
    let o = metods(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--maze-size", "6", "--episodes", "3", "--record-weights"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(run.join("eval_summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("agent,maze,6,3,"), "{summary}");
    let o = metods(&["analyze", run.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    for i in 0..8 {
        let sel = std::fs::read_to_string(run.join(format!("selectivity_{i}.csv"))).unwrap();
        assert_eq!(sel.lines().count(), 36 + 1);
    }
}

#[test]
fn eval_rejects_agent_changes_and_bad_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY_HARLOW);
    let run = train(tmp.path(), &cfg, &["--override", "train.max_updates=1"]);
    let ckpt = run.join("final.ckpt");
    let o = metods(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--override", "agent.size=7"], None);
    assert_eq!(o.status.code(), Some(2));

    let bad = tmp.path().join("bad.ckpt");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let o = metods(&["eval", "--checkpoint", bad.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    let o = metods(&["eval", "--checkpoint", tmp.path().join("missing.ckpt").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn random_baseline_without_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "maze.toml", TINY_MAZE);
    let out = tmp.path().join("o");
    let o = metods(&["eval", "--config", cfg.to_str().unwrap(), "--random-baseline", "--episodes", "20", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out.join("eval_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("random,maze,5,20,"));
}

#[test]
fn analyze_empty_dir_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let o = metods(&["analyze", tmp.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn ablate_runs_variants_with_shared_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{TINY_HARLOW}[ablation]\nvariants = [\"full\", \"s1\", \"alpha_off\", \"linear\", \"mlp\"]\nseeds = [1, 2]\n")
        .replace("max_updates = 4", "max_updates = 1")
        .replace("checkpoint_every = 2", "checkpoint_every = 0");
    let cfg = write_config(tmp.path(), "abl.toml", &text);
    let o = metods(&["ablate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("out").to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = stdout_last_line(&o);
    let rows = std::fs::read_to_string(dir.join("ablation.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 5 * 2);
    let summary = std::fs::read_to_string(dir.join("ablation_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 5);
    let manifest: toml::Table = std::fs::read_to_string(dir.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["variants"].as_array().unwrap().len(), 5);
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 2);
    let s1: toml::Table = std::fs::read_to_string(dir.join("s1-seed2/config.toml")).unwrap().parse().unwrap();
    assert_eq!(s1["agent"]["depth"].as_integer(), Some(1));
    assert_eq!(s1["experiment"]["seed"].as_integer(), Some(2));
}
