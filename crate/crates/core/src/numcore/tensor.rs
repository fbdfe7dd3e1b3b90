//! Dense vectors and row-major matrices.

use std::ops::{Index, IndexMut};

use super::{NumError, Real};

/// Dense column vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector<T: Real = f64> {
    data: Vec<T>,
}

impl<T: Real> Vector<T> {
    /// Builds a vector, rejecting empty or non-finite input.
    pub fn new(data: Vec<T>) -> Result<Self, NumError> {
        if data.is_empty() {
            return Err(NumError::Empty);
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(NumError::NonFinite {
                what: "vector entry".into(),
                index: i,
            });
        }
        Ok(Self { data })
    }

    /// Wraps storage without validation. Used on hot paths where the
    /// producer already guarantees the invariants.
    pub fn from_vec(data: Vec<T>) -> Self {
        debug_assert!(!data.is_empty());
        Self { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_vec(vec![T::zero(); dim])
    }

    pub fn filled(dim: usize, value: T) -> Self {
        Self::from_vec(vec![value; dim])
    }

    /// Unit basis vector `e_k`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[k] = T::one();
        v
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_vec(self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: T, other: &Self) {
        axpy(&mut self.data, c, &other.data);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Vector<U> {
        Vector::from_vec(self.data.iter().map(|x| U::lit(x.to_f64_lossy())).collect())
    }
}

impl<T: Real> Index<usize> for Vector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T: Real> IndexMut<usize> for Vector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

impl<T: Real> From<Vec<T>> for Vector<T> {
    fn from(data: Vec<T>) -> Self {
        Self::from_vec(data)
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T: Real = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, NumError> {
        if rows == 0 || cols == 0 {
            return Err(NumError::Empty);
        }
        if data.len() != rows * cols {
            return Err(NumError::Shape {
                op: "matrix construction",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(NumError::NonFinite {
                what: "matrix entry".into(),
                index: i,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[T]]) -> Result<Self, NumError> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumError::Ragged);
        }
        Self::new(rows.len(), cols, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self::from_vec(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector<T> {
        Vector::from_vec((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_vec(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: T, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        axpy(&mut self.data, c, &other.data);
    }

    /// Frobenius inner product `<self, other>`.
    pub fn frobenius_dot(&self, other: &Self) -> T {
        dot(&self.data, &other.data)
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_dot(self).sqrt()
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self, NumError> {
        self.check_same(other, "hadamard")?;
        Ok(Self::from_vec(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self, NumError> {
        self.check_same(other, "add")?;
        Ok(Self::from_vec(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        ))
    }

    /// `W · v` with shape validation.
    pub fn matvec(&self, v: &Vector<T>) -> Result<Vector<T>, NumError> {
        if self.cols != v.dim() {
            return Err(NumError::Shape {
                op: "matvec",
                left: self.shape(),
                right: (v.dim(), 1),
            });
        }
        Ok(Vector::from_vec(self.matvec_slice(v.as_slice())))
    }

    /// `Wᵀ · v` with shape validation.
    pub fn tr_matvec(&self, v: &Vector<T>) -> Result<Vector<T>, NumError> {
        if self.rows != v.dim() {
            return Err(NumError::Shape {
                op: "transposed matvec",
                left: (self.cols, self.rows),
                right: (v.dim(), 1),
            });
        }
        Ok(Vector::from_vec(self.tr_matvec_slice(v.as_slice())))
    }

    pub(crate) fn matvec_slice(&self, v: &[T]) -> Vec<T> {
        matvec_raw(&self.data, self.cols, v)
    }

    pub(crate) fn tr_matvec_slice(&self, v: &[T]) -> Vec<T> {
        tr_matvec_raw(&self.data, self.cols, v)
    }

    /// Relabels rows by `row_perm` and columns by `col_perm`:
    /// `out[i][j] = self[row_perm[i]][col_perm[j]]`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, self.cols);
        for (i, &pi) in row_perm.iter().enumerate() {
            for (j, &pj) in col_perm.iter().enumerate() {
                out.data[i * self.cols + j] = self.data[pi * self.cols + pj];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|x| U::lit(x.to_f64_lossy())).collect(),
        )
    }

    fn check_same(&self, other: &Self, op: &'static str) -> Result<(), NumError> {
        if self.shape() != other.shape() {
            return Err(NumError::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

impl<T: Real> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Matrix-vector product `W · v`.
pub fn matvec<T: Real>(w: &Matrix<T>, v: &Vector<T>) -> Result<Vector<T>, NumError> {
    w.matvec(v)
}

/// Outer product `u ⊗ v`, i.e. `out[i][j] = u[i]·v[j]`.
pub fn outer<T: Real>(u: &Vector<T>, v: &Vector<T>) -> Matrix<T> {
    Matrix::from_vec(u.dim(), v.dim(), outer_slice(u.as_slice(), v.as_slice()))
}

pub(crate) fn outer_slice<T: Real>(u: &[T], v: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(u.len() * v.len());
    for &ui in u {
        out.extend(v.iter().map(|&vj| ui * vj));
    }
    out
}

/// Row-major `data` (with `cols` columns) times `v`.
pub(crate) fn matvec_raw<T: Real>(data: &[T], cols: usize, v: &[T]) -> Vec<T> {
    debug_assert_eq!(cols, v.len());
    data.chunks_exact(cols).map(|row| dot(row, v)).collect()
}

/// Transpose of row-major `data` (with `cols` columns) times `v`.
pub(crate) fn tr_matvec_raw<T: Real>(data: &[T], cols: usize, v: &[T]) -> Vec<T> {
    debug_assert_eq!(data.len(), cols * v.len());
    let mut out = vec![T::zero(); cols];
    for (row, &vi) in data.chunks_exact(cols).zip(v) {
        axpy(&mut out, vi, row);
    }
    out
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn axpy<T: Real>(y: &mut [T], c: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity_zero_and_permutation() {
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(matvec(&Matrix::identity(3), &v).unwrap(), v);

        let z = matvec(&Matrix::<f64>::zeros(2, 2), &Vector::from_vec(vec![5.0, 7.0])).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 0.0]);

        let p = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let out = matvec(&p, &Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn matvec_rejects_mismatch_with_shapes() {
        let err = matvec(&Matrix::<f64>::zeros(2, 3), &Vector::zeros(2)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("2x1"), "{msg}");
    }

    #[test]
    fn outer_small_cases() {
        let e1 = Vector::<f64>::basis(2, 0);
        assert_eq!(outer(&e1, &e1).as_slice(), &[1.0, 0.0, 0.0, 0.0]);

        let u = Vector::from_vec(vec![1.0, 2.0]);
        assert_eq!(outer(&u, &u).as_slice(), &[1.0, 2.0, 2.0, 4.0]);

        let z = outer(&Vector::<f64>::zeros(3), &Vector::from_vec(vec![1.0, -2.0]));
        assert!(z.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constructors_validate() {
        assert!(Vector::<f64>::new(vec![]).is_err());
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_rows(&[&[1.0, 2.0], &[1.0]]).is_err());
    }

    #[test]
    fn transpose_and_tr_matvec_agree() {
        let m = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let v = Vector::from_vec(vec![1.0, -1.0]);
        let a = m.tr_matvec(&v).unwrap();
        let b = m.transpose().matvec(&v).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn f32_instantiation() {
        let v = Vector::<f32>::from_vec(vec![1.0, 2.0]);
        let m = outer(&v, &v);
        assert_eq!(m.matvec(&v).unwrap().as_slice(), &[5.0f32, 10.0]);
    }
}
