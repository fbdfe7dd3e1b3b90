//! `analyze`: PCA, energy landscape, synaptic variation and selectivity
//! maps computed from the recordings of a recording eval.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::analysis::{energy_grid, pca, selectivity, synaptic_variation, GRID_EXTENT_SIGMAS, GRID_POINTS};
use crate::envs::{harlow, TaskKind};
use crate::numcore::Matrix;

use super::config::RunConfig;
use super::{csv_err, RunError};

const PCA_COMPONENTS: usize = 3;

#[derive(Clone, Debug)]
pub struct AnalyzeOutcome {
    pub files: Vec<PathBuf>,
    /// Analyses skipped or degraded, with the reason.
    pub notes: Vec<String>,
}

#[derive(Default)]
struct EpisodeRecord {
    positions: Vec<(usize, usize)>,
    trials: Vec<usize>,
    /// Harlow: sign of the first value reward (the initial guess).
    good_guess: Option<bool>,
    activations: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

fn parse_err(path: &Path, line: usize, what: &str) -> RunError {
    RunError::Data(format!("{}: line {line}: {what}", path.display()))
}

/// Key columns and value columns of one CSV row.
type TableRow = (Vec<f64>, Vec<f64>);

/// Reads a recording CSV row by row, checking the header.
fn read_table(path: &Path, prefix: &[&str], value_prefix: &str) -> Result<Vec<TableRow>, RunError> {
    let err = csv_err(path);
    let mut r = csv::Reader::from_path(path).map_err(&err)?;
    let header = r.headers().map_err(&err)?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < prefix.len() || names[..prefix.len()] != *prefix || !names[prefix.len()..].iter().all(|n| n.starts_with(value_prefix)) {
        return Err(RunError::Data(format!("{}: unexpected header {names:?}", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(&err)?;
        let line = i + 2;
        let keys = rec
            .iter()
            .take(prefix.len())
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| parse_err(path, line, "malformed key column"))?;
        let vals = rec
            .iter()
            .skip(prefix.len())
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| parse_err(path, line, "malformed value"))?;
        rows.push((keys, vals));
    }
    Ok(rows)
}

fn load_records(dir: &Path) -> Result<(BTreeMap<usize, EpisodeRecord>, bool), RunError> {
    let rec_path = dir.join("recording.csv");
    let mut episodes: BTreeMap<usize, EpisodeRecord> = BTreeMap::new();
    for (keys, vals) in read_table(&rec_path, &["episode", "step", "row", "col", "trial", "action", "reward"], "v_")? {
        let e = episodes.entry(keys[0] as usize).or_default();
        e.positions.push((keys[2] as usize, keys[3] as usize));
        e.trials.push(keys[4] as usize);
        if e.good_guess.is_none() && keys[6].abs() == 1.0 {
            e.good_guess = Some(keys[6] > 0.0);
        }
        e.activations.push(vals);
    }
    let w_path = dir.join("weights.csv");
    let has_weights = w_path.is_file();
    if has_weights {
        for (keys, vals) in read_table(&w_path, &["episode", "step"], "w_")? {
            let episode = keys[0] as usize;
            let e = episodes
                .get_mut(&episode)
                .ok_or_else(|| RunError::Data(format!("{}: episode {episode} has no activations", w_path.display())))?;
            e.weights.push(vals);
        }
    }
    Ok((episodes, has_weights))
}

fn square(flat: &[f64], path: &Path) -> Result<Matrix<f64>, RunError> {
    let n = (flat.len() as f64).sqrt().round() as usize;
    if n * n != flat.len() {
        return Err(RunError::Data(format!("{}: {} weights do not form a square matrix", path.display(), flat.len())));
    }
    Matrix::new(n, n, flat.to_vec()).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))
}

struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn write(&mut self, name: &str, header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let err = csv_err(&path);
        let mut w = csv::Writer::from_path(&path).map_err(&err)?;
        w.write_record(&header).map_err(&err)?;
        for row in rows {
            w.write_record(&row).map_err(&err)?;
        }
        w.flush().map_err(|e| RunError::io(&path, e))?;
        self.files.push(path.clone());
        Ok(())
    }
}

fn analysis_err(e: crate::analysis::AnalysisError) -> RunError {
    RunError::Data(format!("analysis failed: {e}"))
}

pub fn cmd_analyze(run_dir: &Path) -> Result<AnalyzeOutcome, RunError> {
    let listing = std::fs::read_dir(run_dir)
        .map_err(|e| RunError::Data(format!("cannot read run directory {}: {e}", run_dir.display())))?;
    if listing.count() == 0 {
        return Err(RunError::Data(format!("run directory {} is empty", run_dir.display())));
    }
    if !run_dir.join("recording.csv").is_file() {
        return Err(RunError::Data(format!(
            "no recorded trajectories in {}; rerun eval with --record-weights",
            run_dir.display()
        )));
    }
    let config_path = ["eval_config.toml", "config.toml"].iter().map(|n| run_dir.join(n)).find(|p| p.is_file()).ok_or_else(|| {
        RunError::Data(format!("{} has a recording but no eval_config.toml", run_dir.display()))
    })?;
    let config = RunConfig::load(&config_path, &[]).map_err(|e| RunError::Data(e.to_string()))?;
    let (episodes, has_weights) = load_records(run_dir)?;
    if episodes.is_empty() {
        return Err(RunError::Data(format!("{} holds no recorded steps", run_dir.join("recording.csv").display())));
    }
    let mut out = Out { dir: run_dir.to_path_buf(), files: Vec::new() };
    let mut notes = Vec::new();
    let w_path = run_dir.join("weights.csv");

    // Principal components, pooled over every recorded step.
    let source = if has_weights { "weights" } else { "activations" };
    if !has_weights {
        notes.push("no weights.csv: PCA uses activations; energy_grid and synaptic_variation skipped".into());
    }
    let mut samples = Vec::new();
    let mut keys = Vec::new();
    for (&e, rec) in &episodes {
        if has_weights {
            for (t, w) in rec.weights.iter().enumerate() {
                let trial = if t == 0 { 0 } else { rec.trials.get(t - 1).copied().unwrap_or(0) };
                samples.push(w.clone());
                keys.push((e, t, trial, rec.good_guess));
            }
        } else {
            for (t, v) in rec.activations.iter().enumerate() {
                samples.push(v.clone());
                keys.push((e, t, rec.trials[t], rec.good_guess));
            }
        }
    }
    let dim = samples.first().map_or(0, Vec::len);
    let p = pca(&samples, PCA_COMPONENTS.min(dim)).map_err(analysis_err)?;
    if let Some(n) = &p.note {
        notes.push(n.clone());
    }
    let k = p.components.len();
    let mut header: Vec<String> = ["episode", "step", "trial", "good_guess"].map(String::from).to_vec();
    header.extend((1..=k).map(|i| format!("pc{i}")));
    let rows = samples.iter().zip(&keys).map(|(x, (e, t, trial, guess))| {
        let guess = guess.map(|g| u8::from(g).to_string()).unwrap_or_default();
        let mut row = vec![e.to_string(), t.to_string(), trial.to_string(), guess];
        row.extend(p.project(x).iter().map(f64::to_string));
        row
    });
    out.write("pca.csv", header, rows)?;
    out.write(
        "pca_variance.csv",
        ["component", "source", "explained_variance", "explained_ratio"].map(String::from).to_vec(),
        (0..k).map(|i| vec![(i + 1).to_string(), source.into(), p.explained_variance[i].to_string(), p.explained_ratio[i].to_string()]),
    )?;

    if has_weights {
        let (&first, rec) = episodes.iter().next().expect("recording has rows");
        let last_w = square(rec.weights.last().ok_or_else(|| RunError::Data(format!("episode {first} has no weights")))?, &w_path)?;
        let grid = energy_grid(&last_w, &rec.activations, GRID_POINTS, GRID_EXTENT_SIGMAS).map_err(analysis_err)?;
        let mut rows = Vec::with_capacity(GRID_POINTS * GRID_POINTS);
        for (i, &a) in grid.axis1.iter().enumerate() {
            for (j, &b) in grid.axis2.iter().enumerate() {
                rows.push(vec![i.to_string(), j.to_string(), a.to_string(), b.to_string(), grid.energy[i][j].to_string()]);
            }
        }
        out.write("energy_grid.csv", ["i", "j", "pc1", "pc2", "energy"].map(String::from).to_vec(), rows)?;

        let mut rows = Vec::new();
        let mut n = 0;
        for (&e, rec) in &episodes {
            let mats = rec.weights.iter().map(|w| square(w, &w_path)).collect::<Result<Vec<_>, _>>()?;
            for (t, v) in synaptic_variation(&mats).map_err(analysis_err)?.into_iter().enumerate() {
                n = v.len();
                let mut row = vec![e.to_string(), (t + 1).to_string()];
                row.extend(v.iter().map(f64::to_string));
                rows.push(row);
            }
        }
        let mut header: Vec<String> = ["episode", "step"].map(String::from).to_vec();
        header.extend((0..n).map(|i| format!("n_{i}")));
        out.write("synaptic_variation.csv", header, rows)?;
    }

    let (rows, cols) = match config.task {
        TaskKind::Maze => (config.env.maze_size, config.env.maze_size),
        TaskKind::Harlow => (1, harlow::LINE_LEN),
    };
    let pairs: Vec<((usize, usize), Vec<f64>)> =
        episodes.values().flat_map(|r| r.positions.iter().copied().zip(r.activations.iter().cloned())).collect();
    for (i, map) in selectivity(&pairs, rows, cols).map_err(analysis_err)?.iter().enumerate() {
        let cells = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).map(|(r, c)| {
            vec![r.to_string(), c.to_string(), map.get(r, c).map(|x| x.to_string()).unwrap_or_default(), map.visits[r * cols + c].to_string()]
        });
        out.write(&format!("selectivity_{i}.csv"), ["row", "col", "mean_activation", "visits"].map(String::from).to_vec(), cells)?;
    }
    Ok(AnalyzeOutcome { files: out.files, notes })
}
