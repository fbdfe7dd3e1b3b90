//! Define-by-run reverse-mode differentiation over small dense tensors.
//!
//! Each forward operation is evaluated eagerly and appended to the tape.
//! Node ids are handed out in recording order, so the tape is acyclic by
//! construction and the backward sweep is a single reverse pass.

use std::collections::HashMap;
use std::fmt;

use super::tensor::{axpy, dot, matvec_raw, outer_slice, tr_matvec_raw};
use super::{Matrix, NumError, Real, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(self) -> usize {
        let (r, c) = self.dims();
        r * c
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    /// `(rows, cols)`, with vectors as columns and scalars as 1x1.
    pub fn dims(self) -> (usize, usize) {
        match self {
            Shape::Scalar => (1, 1),
            Shape::Vector(n) => (n, 1),
            Shape::Matrix(r, c) => (r, c),
        }
    }
}

/// Value stored at a tape node.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Real = f64> {
    pub shape: Shape,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn scalar(x: T) -> Self {
        Self { shape: Shape::Scalar, data: vec![x] }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![T::zero(); shape.len()] }
    }

    pub fn as_scalar(&self) -> T {
        self.data[0]
    }

    pub fn to_vector(&self) -> Vector<T> {
        Vector::from_vec(self.data.clone())
    }

    pub fn to_matrix(&self) -> Matrix<T> {
        let (r, c) = self.shape.dims();
        Matrix::from_vec(r, c, self.data.clone())
    }
}

impl<T: Real> From<&Vector<T>> for Tensor<T> {
    fn from(v: &Vector<T>) -> Self {
        Self { shape: Shape::Vector(v.dim()), data: v.as_slice().to_vec() }
    }
}

impl<T: Real> From<&Matrix<T>> for Tensor<T> {
    fn from(m: &Matrix<T>) -> Self {
        Self { shape: Shape::Matrix(m.rows(), m.cols()), data: m.as_slice().to_vec() }
    }
}

#[derive(Clone, Debug)]
enum Op<T: Real> {
    Leaf { param: bool },
    MatVec(NodeId, NodeId),
    Outer(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// tensor scaled by a scalar node
    Scale(NodeId, NodeId),
    ScaleConst(NodeId, T),
    Tanh(NodeId),
    Sum(NodeId),
    Dot(NodeId, NodeId),
    /// log softmax(logits)[action]
    LogProb(NodeId, usize),
    /// entropy of softmax(logits)
    Entropy(NodeId),
}

impl<T: Real> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { param: true } => "param",
            Op::Leaf { param: false } => "constant",
            Op::MatVec(..) => "matvec",
            Op::Outer(..) => "outer",
            Op::Mul(..) => "mul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::ScaleConst(..) => "scale_const",
            Op::Tanh(..) => "tanh",
            Op::Sum(..) => "sum",
            Op::Dot(..) => "dot",
            Op::LogProb(..) => "log_prob",
            Op::Entropy(..) => "entropy",
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T: Real> {
    op: Op<T>,
    value: Tensor<T>,
}

/// Gradients of a scalar loss with respect to every parameter leaf.
#[derive(Clone, Debug)]
pub struct Gradients<T: Real> {
    by_param: HashMap<NodeId, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.by_param.get(&id)
    }

    pub fn scalar(&self, id: NodeId) -> T {
        self.by_param.get(&id).map_or(T::zero(), |t| t.as_scalar())
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape<T: Real = f64> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> T {
        self.nodes[id.0].value.as_scalar()
    }

    pub fn is_param(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf { param: true })
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf { param: false }, value)
    }

    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf { param: true }, value)
    }

    pub fn constant_vector(&mut self, v: &Vector<T>) -> NodeId {
        self.constant(v.into())
    }

    pub fn constant_scalar(&mut self, x: T) -> NodeId {
        self.constant(Tensor::scalar(x))
    }

    pub fn param_matrix(&mut self, m: &Matrix<T>) -> NodeId {
        self.param(m.into())
    }

    pub fn param_vector(&mut self, v: &Vector<T>) -> NodeId {
        self.param(v.into())
    }

    pub fn param_scalar(&mut self, x: T) -> NodeId {
        self.param(Tensor::scalar(x))
    }

    pub fn matvec(&mut self, w: NodeId, v: NodeId) -> Result<NodeId, NumError> {
        self.record(Op::MatVec(w, v))
    }

    pub fn outer(&mut self, u: NodeId, v: NodeId) -> Result<NodeId, NumError> {
        self.record(Op::Outer(u, v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        self.record(Op::Mul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        self.record(Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, NumError> {
        self.record(Op::Scale(a, s))
    }

    pub fn scale_const(&mut self, a: NodeId, c: T) -> Result<NodeId, NumError> {
        self.record(Op::ScaleConst(a, c))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        self.record(Op::Tanh(a))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, NumError> {
        self.record(Op::Sum(a))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        self.record(Op::Dot(a, b))
    }

    pub fn log_prob(&mut self, logits: NodeId, action: usize) -> Result<NodeId, NumError> {
        self.record(Op::LogProb(logits, action))
    }

    pub fn entropy(&mut self, logits: NodeId) -> Result<NodeId, NumError> {
        self.record(Op::Entropy(logits))
    }

    /// Sums a list of nodes of equal shape; `None` for an empty list.
    pub fn add_all(&mut self, ids: &[NodeId]) -> Result<Option<NodeId>, NumError> {
        let mut iter = ids.iter().copied();
        let Some(mut acc) = iter.next() else {
            return Ok(None);
        };
        for id in iter {
            acc = self.add(acc, id)?;
        }
        Ok(Some(acc))
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op<T>) -> Result<NodeId, NumError> {
        let value = evaluate(&op, |id| &self.nodes[id.0].value)?;
        Ok(self.push(op, value))
    }

    /// Re-runs every recorded operation, substituting `overrides` for the
    /// listed leaves. Returns all node values in recording order.
    pub fn replay(&self, overrides: &HashMap<NodeId, Tensor<T>>) -> Result<Vec<Tensor<T>>, NumError> {
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let v = match &node.op {
                Op::Leaf { .. } => overrides
                    .get(&NodeId(i))
                    .cloned()
                    .unwrap_or_else(|| node.value.clone()),
                op => evaluate(op, |id| &values[id.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// True when replaying the tape reproduces every stored value bit for bit.
    pub fn replay_matches(&self) -> bool {
        match self.replay(&HashMap::new()) {
            Ok(values) => values
                .iter()
                .zip(&self.nodes)
                .all(|(v, n)| v.data.iter().zip(&n.value.data).all(|(a, b)| a.to_bits_eq(*b))),
            Err(_) => false,
        }
    }

    /// Reverse sweep from a scalar `loss` node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>, NumError> {
        let grads = self.backward_all(loss)?;
        let by_param = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf { param: true }))
            .map(|(i, n)| {
                let g = grads[i].clone().unwrap_or_else(|| Tensor::zeros(n.value.shape));
                (NodeId(i), g)
            })
            .collect();
        Ok(Gradients { by_param })
    }

    /// Gradient of `loss` for every node up to `loss`; nodes that do not
    /// influence the loss get `None`.
    pub fn backward_all(&self, loss: NodeId) -> Result<Vec<Option<Tensor<T>>>, NumError> {
        if self.nodes[loss.0].value.shape != Shape::Scalar {
            return Err(NumError::NotScalar { node: loss.index() });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].as_ref() else { continue };
            if let Some(j) = g.data.iter().position(|x| !x.is_finite()) {
                return Err(NumError::NonFiniteGradient {
                    node: i,
                    op: self.nodes[i].op.name(),
                    index: j,
                });
            }
            let g = g.data.clone();
            self.propagate(i, &g, &mut grads);
        }
        Ok(grads)
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let val = |id: NodeId| &self.nodes[id.0].value;
        match &node.op {
            Op::Leaf { .. } => {}
            Op::MatVec(w, v) => {
                let wv = val(*w);
                let vv = val(*v);
                let (_, cols) = wv.shape.dims();
                accumulate(grads, *w, wv.shape, |acc| {
                    for (r, &gi) in g.iter().enumerate() {
                        axpy(&mut acc[r * cols..(r + 1) * cols], gi, &vv.data);
                    }
                });
                let back = tr_matvec_raw(&wv.data, cols, g);
                accumulate(grads, *v, vv.shape, |acc| axpy(acc, T::one(), &back));
            }
            Op::Outer(u, v) => {
                let uv = val(*u);
                let vv = val(*v);
                let cols = vv.data.len();
                let du: Vec<T> = g.chunks_exact(cols).map(|row| dot(row, &vv.data)).collect();
                let mut dv = vec![T::zero(); cols];
                for (row, &ui) in g.chunks_exact(cols).zip(&uv.data) {
                    axpy(&mut dv, ui, row);
                }
                accumulate(grads, *u, uv.shape, |acc| axpy(acc, T::one(), &du));
                accumulate(grads, *v, vv.shape, |acc| axpy(acc, T::one(), &dv));
            }
            Op::Mul(a, b) => {
                let av = val(*a);
                let bv = val(*b);
                accumulate(grads, *a, av.shape, |acc| {
                    for ((x, &gi), &bi) in acc.iter_mut().zip(g).zip(&bv.data) {
                        *x += gi * bi;
                    }
                });
                accumulate(grads, *b, bv.shape, |acc| {
                    for ((x, &gi), &ai) in acc.iter_mut().zip(g).zip(&av.data) {
                        *x += gi * ai;
                    }
                });
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, val(*a).shape, |acc| axpy(acc, T::one(), g));
                accumulate(grads, *b, val(*b).shape, |acc| axpy(acc, T::one(), g));
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, val(*a).shape, |acc| axpy(acc, T::one(), g));
                accumulate(grads, *b, val(*b).shape, |acc| axpy(acc, -T::one(), g));
            }
            Op::Scale(a, s) => {
                let av = val(*a);
                let sv = val(*s).as_scalar();
                accumulate(grads, *a, av.shape, |acc| axpy(acc, sv, g));
                let ds = dot(g, &av.data);
                accumulate(grads, *s, Shape::Scalar, |acc| acc[0] += ds);
            }
            Op::ScaleConst(a, c) => {
                accumulate(grads, *a, val(*a).shape, |acc| axpy(acc, *c, g));
            }
            Op::Tanh(a) => {
                let y = &node.value.data;
                accumulate(grads, *a, val(*a).shape, |acc| {
                    for ((x, &gi), &yi) in acc.iter_mut().zip(g).zip(y) {
                        *x += gi * (T::one() - yi * yi);
                    }
                });
            }
            Op::Sum(a) => {
                let g0 = g[0];
                accumulate(grads, *a, val(*a).shape, |acc| acc.iter_mut().for_each(|x| *x += g0));
            }
            Op::Dot(a, b) => {
                let g0 = g[0];
                let av = val(*a);
                let bv = val(*b);
                accumulate(grads, *a, av.shape, |acc| axpy(acc, g0, &bv.data));
                accumulate(grads, *b, bv.shape, |acc| axpy(acc, g0, &av.data));
            }
            Op::LogProb(z, k) => {
                let g0 = g[0];
                let zv = val(*z);
                let p = softmax(&zv.data);
                accumulate(grads, *z, zv.shape, |acc| {
                    for (j, (x, &pj)) in acc.iter_mut().zip(&p).enumerate() {
                        let ind = if j == *k { T::one() } else { T::zero() };
                        *x += g0 * (ind - pj);
                    }
                });
            }
            Op::Entropy(z) => {
                let g0 = g[0];
                let zv = val(*z);
                let logp = log_softmax(&zv.data);
                let h = node.value.as_scalar();
                accumulate(grads, *z, zv.shape, |acc| {
                    for (x, &lp) in acc.iter_mut().zip(&logp) {
                        *x -= g0 * lp.exp() * (lp + h);
                    }
                });
            }
        }
    }
}

fn accumulate<T: Real>(
    grads: &mut [Option<Tensor<T>>],
    id: NodeId,
    shape: Shape,
    f: impl FnOnce(&mut [T]),
) {
    let slot = grads[id.0].get_or_insert_with(|| Tensor::zeros(shape));
    f(&mut slot.data);
}

fn evaluate<'a, T: Real>(
    op: &Op<T>,
    val: impl Fn(NodeId) -> &'a Tensor<T>,
) -> Result<Tensor<T>, NumError> {
    let shape_err = |name: &'static str, a: Shape, b: Shape| NumError::Shape {
        op: name,
        left: a.dims(),
        right: b.dims(),
    };
    let same = |name: &'static str, a: &Tensor<T>, b: &Tensor<T>| {
        if a.shape == b.shape {
            Ok(())
        } else {
            Err(shape_err(name, a.shape, b.shape))
        }
    };
    Ok(match op {
        Op::Leaf { .. } => unreachable!("leaves are never re-evaluated"),
        Op::MatVec(w, v) => {
            let (wv, vv) = (val(*w), val(*v));
            match (wv.shape, vv.shape) {
                (Shape::Matrix(r, c), Shape::Vector(n)) if c == n => {
                    Tensor { shape: Shape::Vector(r), data: matvec_raw(&wv.data, c, &vv.data) }
                }
                (a, b) => return Err(shape_err("matvec", a, b)),
            }
        }
        Op::Outer(u, v) => {
            let (uv, vv) = (val(*u), val(*v));
            match (uv.shape, vv.shape) {
                (Shape::Vector(m), Shape::Vector(n)) => Tensor {
                    shape: Shape::Matrix(m, n),
                    data: outer_slice(&uv.data, &vv.data),
                },
                (a, b) => return Err(shape_err("outer", a, b)),
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            same("mul", av, bv)?;
            Tensor { shape: av.shape, data: av.data.iter().zip(&bv.data).map(|(&x, &y)| x * y).collect() }
        }
        Op::Add(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            same("add", av, bv)?;
            Tensor { shape: av.shape, data: av.data.iter().zip(&bv.data).map(|(&x, &y)| x + y).collect() }
        }
        Op::Sub(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            same("sub", av, bv)?;
            Tensor { shape: av.shape, data: av.data.iter().zip(&bv.data).map(|(&x, &y)| x - y).collect() }
        }
        Op::Scale(a, s) => {
            let (av, sv) = (val(*a), val(*s));
            if sv.shape != Shape::Scalar {
                return Err(shape_err("scale", av.shape, sv.shape));
            }
            let c = sv.as_scalar();
            Tensor { shape: av.shape, data: av.data.iter().map(|&x| c * x).collect() }
        }
        Op::ScaleConst(a, c) => {
            let av = val(*a);
            Tensor { shape: av.shape, data: av.data.iter().map(|&x| *c * x).collect() }
        }
        Op::Tanh(a) => {
            let av = val(*a);
            Tensor { shape: av.shape, data: av.data.iter().map(|x| x.tanh()).collect() }
        }
        Op::Sum(a) => Tensor::scalar(val(*a).data.iter().copied().sum()),
        Op::Dot(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            same("dot", av, bv)?;
            Tensor::scalar(dot(&av.data, &bv.data))
        }
        Op::LogProb(z, k) => {
            let zv = val(*z);
            match zv.shape {
                Shape::Vector(n) if *k < n => Tensor::scalar(log_softmax(&zv.data)[*k]),
                s => return Err(shape_err("log_prob", s, Shape::Vector(*k + 1))),
            }
        }
        Op::Entropy(z) => {
            let zv = val(*z);
            if !matches!(zv.shape, Shape::Vector(_)) {
                return Err(shape_err("entropy", zv.shape, Shape::Vector(0)));
            }
            Tensor::scalar(entropy(&zv.data))
        }
    })
}

/// Numerically stable `log softmax`.
pub fn log_softmax<T: Real>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + z.iter().map(|&x| (x - m).exp()).sum::<T>().ln();
    z.iter().map(|&x| x - lse).collect()
}

pub fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    log_softmax(z).into_iter().map(T::exp).collect()
}

/// Entropy of the categorical distribution `softmax(z)`.
pub fn entropy<T: Real>(z: &[T]) -> T {
    -log_softmax(z).into_iter().map(|lp| lp.exp() * lp).sum::<T>()
}

trait BitsEq {
    fn to_bits_eq(self, other: Self) -> bool;
}

impl<T: Real> BitsEq for T {
    fn to_bits_eq(self, other: Self) -> bool {
        // Same value, or both NaN; signed zeros are compared via the
        // reciprocal to keep -0.0 and 0.0 apart.
        (self == other && (self != T::zero() || self.recip() == other.recip()))
            || (self.is_nan() && other.is_nan())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rng::{normal_samples, rng_from_seed};

    /// Central finite differences of the loss w.r.t. every entry of `leaf`,
    /// evaluated by replaying the tape with perturbed leaf values.
    fn fd_gradient(tape: &Tape<f64>, leaf: NodeId, loss: NodeId, h: f64) -> Vec<f64> {
        let base = tape.value(leaf).clone();
        (0..base.data.len())
            .map(|k| {
                let eval = |delta: f64| {
                    let mut t = base.clone();
                    t.data[k] += delta;
                    let over = HashMap::from([(leaf, t)]);
                    tape.replay(&over).unwrap()[loss.index()].as_scalar()
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        if den == 0.0 { num } else { num / den }
    }

    fn random_tensor(seed: u64, shape: Shape) -> Tensor<f64> {
        Tensor { shape, data: normal_samples(&mut rng_from_seed(seed), shape.len(), 0.0, 1.0) }
    }

    #[test]
    fn tanh_sum_at_zero_weight_gives_broadcast_input() {
        let mut tape = Tape::new();
        let w = tape.param_matrix(&Matrix::zeros(3, 2));
        let v = tape.constant_vector(&Vector::from_vec(vec![0.5, -2.0]));
        let wv = tape.matvec(w, v).unwrap();
        let t = tape.tanh(wv).unwrap();
        let loss = tape.sum(t).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data, vec![0.5, -2.0, 0.5, -2.0, 0.5, -2.0]);
    }

    #[test]
    fn gated_outer_product_gradient_matches_hand_and_fd() {
        // L = uᵀ (α ⊙ (v ⊗ v)) u, so dL/dα = (u ⊗ u) ⊙ (v ⊗ v).
        let u = Vector::from_vec(vec![0.3, -1.2]);
        let v = Vector::from_vec(vec![0.7, 0.4]);
        let alpha = Matrix::from_rows(&[&[0.5, -0.1], &[0.2, 1.5]]).unwrap();
        let mut tape = Tape::new();
        let a = tape.param_matrix(&alpha);
        let vn = tape.constant_vector(&v);
        let un = tape.constant_vector(&u);
        let vv = tape.outer(vn, vn).unwrap();
        let m = tape.mul(a, vv).unwrap();
        let mu = tape.matvec(m, un).unwrap();
        let loss = tape.dot(un, mu).unwrap();
        let g = tape.backward(loss).unwrap().get(a).unwrap().data.clone();
        let hand: Vec<f64> = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| u[i] * u[j] * v[i] * v[j])
            .collect();
        for (x, y) in g.iter().zip(&hand) {
            assert!((x - y).abs() < 1e-15);
        }
        let fd = fd_gradient(&tape, a, loss, 1e-6);
        assert!(rel_err(&g, &fd) < 1e-5);
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        for seed in 0..10u64 {
            let mut tape = Tape::new();
            let w = tape.param(random_tensor(seed * 7 + 1, Shape::Matrix(4, 3)));
            let x = tape.param(random_tensor(seed * 7 + 2, Shape::Vector(3)));
            let y = tape.param(random_tensor(seed * 7 + 3, Shape::Vector(4)));
            let s = tape.param(random_tensor(seed * 7 + 4, Shape::Scalar));
            let h1 = tape.matvec(w, x).unwrap();
            let h2 = tape.tanh(h1).unwrap();
            let h3 = tape.mul(h2, y).unwrap();
            let h4 = tape.add(h3, y).unwrap();
            let h5 = tape.sub(h4, h2).unwrap();
            let o = tape.outer(h5, x).unwrap();
            let o2 = tape.scale(o, s).unwrap();
            let o3 = tape.scale_const(o2, 0.7).unwrap();
            let back = tape.matvec(o3, x).unwrap();
            let lp = tape.log_prob(back, (seed % 4) as usize).unwrap();
            let ent = tape.entropy(h5).unwrap();
            let d = tape.dot(back, y).unwrap();
            let ssum = tape.sum(o3).unwrap();
            let loss = tape.add_all(&[lp, ent, d, ssum]).unwrap().unwrap();
            let grads = tape.backward(loss).unwrap();
            for leaf in [w, x, y, s] {
                let g = &grads.get(leaf).unwrap().data;
                let fd = fd_gradient(&tape, leaf, loss, 1e-6);
                let e = rel_err(g, &fd);
                assert!(e < 1e-5, "seed {seed}, leaf {leaf}: rel err {e}");
            }
        }
    }

    #[test]
    fn replay_is_bit_exact() {
        let mut tape = Tape::new();
        let w = tape.param(random_tensor(1, Shape::Matrix(3, 3)));
        let v = tape.param(random_tensor(2, Shape::Vector(3)));
        let a = tape.matvec(w, v).unwrap();
        let b = tape.tanh(a).unwrap();
        let c = tape.entropy(b).unwrap();
        let _ = tape.sum(c).unwrap();
        assert!(tape.replay_matches());
    }

    #[test]
    fn unreachable_params_get_zero_gradient() {
        let mut tape = Tape::new();
        let unused = tape.param_vector(&Vector::from_vec(vec![1.0, 2.0]));
        let x = tape.param_scalar(3.0);
        let loss = tape.scale_const(x, 2.0).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(unused).unwrap().data, vec![0.0, 0.0]);
        assert_eq!(g.scalar(x), 2.0);
    }

    #[test]
    fn non_finite_gradient_names_node() {
        let mut tape = Tape::new();
        let x = tape.param_vector(&Vector::from_vec(vec![1.0, 2.0]));
        let big = tape.scale_const(x, f64::INFINITY).unwrap();
        let loss = tape.sum(big).unwrap();
        // d loss / d big is finite, d/dx is inf.
        match tape.backward(loss) {
            Err(NumError::NonFiniteGradient { node, .. }) => assert_eq!(node, x.index()),
            other => panic!("expected non-finite gradient, got {other:?}"),
        }
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param_vector(&Vector::from_vec(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(NumError::NotScalar { .. })));
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param_matrix(&Matrix::zeros(2, 3));
        let v = tape.constant_vector(&Vector::zeros(2));
        assert!(matches!(tape.matvec(w, v), Err(NumError::Shape { .. })));
    }

    #[test]
    fn entropy_of_uniform_is_log_k() {
        let h = entropy(&[0.3f64; 4]);
        assert!((h - 4f64.ln()).abs() < 1e-15);
    }
}
