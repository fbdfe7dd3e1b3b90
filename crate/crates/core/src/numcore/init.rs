//! Parameter initialisers.

use super::rng::{normal_samples, rng_from_seed, Rng};
use super::tensor::{axpy, dot};
use super::{Matrix, Real};

/// Orthogonal matrix: orthonormal columns when `rows >= cols`, orthonormal
/// rows otherwise.
pub fn orthogonal_init<T: Real>(rows: usize, cols: usize, seed: u64) -> Matrix<T> {
    orthogonal_from(&mut rng_from_seed(seed), rows, cols)
}

/// Matrix with i.i.d. `N(mean, std²)` entries.
pub fn normal_init<T: Real>(rows: usize, cols: usize, mean: f64, std: f64, seed: u64) -> Matrix<T> {
    normal_from(&mut rng_from_seed(seed), rows, cols, mean, std)
}

pub fn normal_from<T: Real>(rng: &mut Rng, rows: usize, cols: usize, mean: f64, std: f64) -> Matrix<T> {
    let data = normal_samples(rng, rows * cols, mean, std);
    Matrix::from_vec(rows, cols, data.into_iter().map(T::lit).collect())
}

pub fn orthogonal_from<T: Real>(rng: &mut Rng, rows: usize, cols: usize) -> Matrix<T> {
    let tall = rows.max(cols);
    let narrow = rows.min(cols);
    // Column-major storage of a tall×narrow Gaussian matrix.
    let mut columns: Vec<Vec<f64>> = (0..narrow)
        .map(|_| normal_samples(rng, tall, 0.0, 1.0))
        .collect();
    for j in 0..narrow {
        // Two passes of modified Gram-Schmidt keep the loss of
        // orthogonality at machine precision.
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = columns.split_at_mut(j);
                let proj = dot(&done[k], &rest[0]);
                axpy(&mut rest[0], -proj, &done[k]);
            }
        }
        let norm = dot(&columns[j], &columns[j]).sqrt();
        if norm < 1e-12 {
            // Measure-zero degenerate draw.
            return orthogonal_from(rng, rows, cols);
        }
        columns[j].iter_mut().for_each(|x| *x /= norm);
    }
    let mut out = Matrix::zeros(rows, cols);
    for (j, col) in columns.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            if rows >= cols {
                out[(i, j)] = T::lit(x);
            } else {
                out[(j, i)] = T::lit(x);
            }
        }
    }
    out
}
