//! Principal components by power iteration with deflation on the implicit
//! sample covariance (the covariance matrix itself is never formed, so
//! 40000-dimensional weight snapshots stay cheap).

use crate::numcore::rng::{normal_samples, rng_from_seed};

use super::AnalysisError;

const MAX_ITERS: usize = 2000;
const TOL: f64 = 1e-13;
/// Components whose variance falls below this fraction of the total are
/// treated as beyond the data rank.
const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Orthonormal components, descending by explained variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Fractions of the total variance.
    pub explained_ratio: Vec<f64>,
    /// Set when fewer than the requested components exist.
    pub note: Option<String>,
}

impl Pca {
    /// Coordinates of `x` in the component basis.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect()
    }

    /// Point in data space with the given component coordinates.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &a) in self.components.iter().zip(coords) {
            for (o, x) in out.iter_mut().zip(c) {
                *o += a * x;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
}

/// `C x` with `C = Xcᵀ Xc / (n - 1)`.
fn cov_apply(centered: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for row in centered {
        let s = dot(row, x);
        y.iter_mut().zip(row).for_each(|(yi, r)| *yi += s * r);
    }
    let denom = (centered.len() - 1) as f64;
    y.iter_mut().for_each(|v| *v /= denom);
    y
}

/// Top-`k` principal components of the rows of `data`.
pub fn pca(data: &[Vec<f64>], k: usize) -> Result<Pca, AnalysisError> {
    if data.len() < 2 {
        return Err(AnalysisError::TooFewSnapshots { needed: 2, got: data.len() });
    }
    let dim = data[0].len();
    if let Some((index, row)) = data.iter().enumerate().find(|(_, r)| r.len() != dim) {
        return Err(AnalysisError::Ragged { index, expected: dim, got: row.len() });
    }
    if k > dim {
        return Err(AnalysisError::TooManyComponents { requested: k, dim });
    }
    let n = data.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in data {
        mean.iter_mut().zip(row).for_each(|(m, x)| *m += x / n);
    }
    let centered: Vec<Vec<f64>> = data.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let total: f64 = centered.iter().map(|r| dot(r, r)).sum::<f64>() / (n - 1.0);

    let mut rng = rng_from_seed(0x5ca1ab1e);
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    let mut note = None;
    for i in 0..k {
        let mut v = normal_samples(&mut rng, dim, 0.0, 1.0);
        orthogonalize(&mut v, &components);
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..MAX_ITERS {
            let mut w = cov_apply(&centered, &v);
            orthogonalize(&mut w, &components);
            let norm = normalize(&mut w);
            if norm == 0.0 {
                lambda = 0.0;
                break;
            }
            let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            lambda = norm;
            if delta < TOL {
                break;
            }
        }
        if lambda <= RANK_TOL * total.max(f64::MIN_POSITIVE) {
            note = Some(format!("data rank {i} is below the {k} requested components"));
            break;
        }
        lambda = dot(&v, &cov_apply(&centered, &v));
        components.push(v);
        variances.push(lambda);
    }
    // Power iteration can leave near-degenerate pairs out of order.
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]));
    let components: Vec<Vec<f64>> = order.iter().map(|&i| components[i].clone()).collect();
    let explained_variance: Vec<f64> = order.iter().map(|&i| variances[i]).collect();
    let explained_ratio = explained_variance.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
    Ok(Pca { mean, components, explained_variance, explained_ratio, note })
}
