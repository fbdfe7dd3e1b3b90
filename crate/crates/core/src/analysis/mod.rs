//! Diagnostics over recorded episodes: Hopfield energy of the plastic
//! matrix, principal components of weight and activation trajectories,
//! per-neuron synaptic variation and spatial selectivity.

mod pca;

use thiserror::Error;

use crate::numcore::{Matrix, NumError, Vector};

pub use pca::{pca, Pca};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },
    #[error("snapshot {index} has dimension {got}, expected {expected}")]
    Ragged { index: usize, expected: usize, got: usize },
    #[error("requested {requested} components from {dim}-dimensional data")]
    TooManyComponents { requested: usize, dim: usize },
    #[error("position ({row}, {col}) outside the {rows}x{cols} grid")]
    OutOfBounds { row: usize, col: usize, rows: usize, cols: usize },
}

/// `E_W(v1, v2) = -v1ᵀ W v2`.
pub fn hopfield_energy(w: &Matrix<f64>, v1: &Vector<f64>, v2: &Vector<f64>) -> Result<f64, AnalysisError> {
    if w.rows() != v1.dim() {
        return Err(NumError::Shape { op: "hopfield energy", left: w.shape(), right: (v1.dim(), 1) }.into());
    }
    Ok(-v1.dot(&w.matvec(v2)?))
}

/// Energy sampled on a square grid in the plane of the top two principal
/// components of an activation trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyGrid {
    /// Grid coordinates along the first and second component.
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// `energy[i][j]` at `mean + axis1[i] c1 + axis2[j] c2`.
    pub energy: Vec<Vec<f64>>,
}

pub const GRID_POINTS: usize = 41;
pub const GRID_EXTENT_SIGMAS: f64 = 3.0;

/// Evaluates `E_W(v, v)` over a `points x points` grid spanning
/// `±extent` standard deviations along the top-2 components of `activations`.
pub fn energy_grid(w: &Matrix<f64>, activations: &[Vec<f64>], points: usize, extent: f64) -> Result<EnergyGrid, AnalysisError> {
    let p = pca(activations, 2)?;
    if p.components.len() < 2 {
        return Err(AnalysisError::TooManyComponents { requested: 2, dim: p.components.len() });
    }
    let axis = |var: f64| -> Vec<f64> {
        let s = var.max(0.0).sqrt();
        (0..points)
            .map(|i| if points == 1 { 0.0 } else { -extent * s + 2.0 * extent * s * i as f64 / (points - 1) as f64 })
            .collect()
    };
    let axis1 = axis(p.explained_variance[0]);
    let axis2 = axis(p.explained_variance[1]);
    let (c1, c2) = (&p.components[0], &p.components[1]);
    let mut energy = Vec::with_capacity(points);
    for &a in &axis1 {
        let mut row = Vec::with_capacity(points);
        for &b in &axis2 {
            let v: Vec<f64> = p.mean.iter().zip(c1).zip(c2).map(|((m, x), y)| m + a * x + b * y).collect();
            let v = Vector::from_vec(v);
            row.push(hopfield_energy(w, &v, &v)?);
        }
        energy.push(row);
    }
    Ok(EnergyGrid { axis1, axis2, energy })
}

/// `out[t][i] = Σ_j |W_{t+1}[i][j] - W_t[i][j]|` for consecutive snapshots.
pub fn synaptic_variation(seq: &[Matrix<f64>]) -> Result<Vec<Vec<f64>>, AnalysisError> {
    if seq.len() < 2 {
        return Err(AnalysisError::TooFewSnapshots { needed: 2, got: seq.len() });
    }
    let shape = seq[0].shape();
    if let Some(w) = seq.iter().find(|w| w.shape() != shape) {
        return Err(NumError::Shape { op: "synaptic variation", left: shape, right: w.shape() }.into());
    }
    Ok(seq
        .windows(2)
        .map(|pair| {
            (0..shape.0)
                .map(|i| pair[1].row(i).iter().zip(pair[0].row(i)).map(|(a, b)| (a - b).abs()).sum())
                .collect()
        })
        .collect())
}

/// Per-cell mean activation of one neuron and visit counts.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectivityMap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major; `None` where the cell was never visited.
    pub mean: Vec<Option<f64>>,
    pub visits: Vec<usize>,
}

impl SelectivityMap {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.mean[row * self.cols + col]
    }
}

/// One map per neuron from `(position, activation)` samples.
pub fn selectivity(
    samples: &[((usize, usize), Vec<f64>)],
    rows: usize,
    cols: usize,
) -> Result<Vec<SelectivityMap>, AnalysisError> {
    let Some((_, first)) = samples.first() else {
        return Ok(Vec::new());
    };
    let n = first.len();
    let mut sums = vec![vec![0.0; rows * cols]; n];
    let mut visits = vec![0usize; rows * cols];
    for (index, ((r, c), act)) in samples.iter().enumerate() {
        if *r >= rows || *c >= cols {
            return Err(AnalysisError::OutOfBounds { row: *r, col: *c, rows, cols });
        }
        if act.len() != n {
            return Err(AnalysisError::Ragged { index, expected: n, got: act.len() });
        }
        let cell = r * cols + c;
        visits[cell] += 1;
        for (s, &a) in sums.iter_mut().zip(act) {
            s[cell] += a;
        }
    }
    Ok(sums
        .into_iter()
        .map(|s| SelectivityMap {
            rows,
            cols,
            mean: s.iter().zip(&visits).map(|(&x, &k)| (k > 0).then(|| x / k as f64)).collect(),
            visits: visits.clone(),
        })
        .collect())
}
