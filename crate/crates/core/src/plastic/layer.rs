//! Read/write operations of the plastic layer and their recursive composition.

use crate::numcore::{Matrix, NumError, Real, Vector};

use super::params::{PlasticityParams, WriteRule};
use super::PlasticError;

/// `tanh(W v)`.
pub fn read<T: Real>(w: &Matrix<T>, v: &Vector<T>) -> Result<Vector<T>, NumError> {
    Ok(w.matvec(v)?.map(T::tanh))
}

/// Right-hand factor `u` of the write `alpha ⊙ (v ⊗ u)`; `hidden` is the
/// first MLP layer when the rule has one.
pub(crate) fn write_target<T: Real>(v: &Vector<T>, rule: &WriteRule<T>) -> (Vector<T>, Option<Vector<T>>) {
    match rule {
        WriteRule::Hebbian => (v.clone(), None),
        WriteRule::LinearProjected { proj } => (Vector::from_vec(proj.matvec_slice(v.as_slice())), None),
        WriteRule::MlpProjected { proj1, proj2 } => {
            let h = Vector::from_vec(proj1.matvec_slice(v.as_slice())).map(T::tanh);
            let u = Vector::from_vec(proj2.matvec_slice(h.as_slice())).map(T::tanh);
            (u, Some(h))
        }
    }
}

/// `alpha ⊙ (v ⊗ u)` with `u` given by the write rule.
pub fn write<T: Real>(v: &Vector<T>, alpha: &Matrix<T>, rule: &WriteRule<T>) -> Result<Matrix<T>, NumError> {
    check_write_shapes(v, alpha, rule)?;
    let (u, _) = write_target(v, rule);
    Ok(gated_outer(alpha, v, &u))
}

pub(crate) fn gated_outer<T: Real>(alpha: &Matrix<T>, v: &Vector<T>, u: &Vector<T>) -> Matrix<T> {
    let n = u.dim();
    let mut out = Vec::with_capacity(alpha.len());
    for (i, &vi) in v.iter().enumerate() {
        let a_row = &alpha.as_slice()[i * n..(i + 1) * n];
        out.extend(a_row.iter().zip(u.iter()).map(|(&a, &uj)| a * (vi * uj)));
    }
    Matrix::from_vec(v.dim(), n, out)
}

fn check_write_shapes<T: Real>(v: &Vector<T>, alpha: &Matrix<T>, rule: &WriteRule<T>) -> Result<(), NumError> {
    let n = v.dim();
    let mismatch = |op, m: &Matrix<T>| NumError::Shape { op, left: m.shape(), right: (n, 1) };
    if alpha.shape() != (n, n) {
        return Err(mismatch("write gain", alpha));
    }
    match rule {
        WriteRule::Hebbian => {}
        WriteRule::LinearProjected { proj } => {
            if proj.shape() != (n, n) {
                return Err(mismatch("write projection", proj));
            }
        }
        WriteRule::MlpProjected { proj1, proj2 } => {
            for p in [proj1, proj2] {
                if p.shape() != (n, n) {
                    return Err(mismatch("write projection", p));
                }
            }
        }
    }
    Ok(())
}

/// Intermediate values of one recursive update, kept for backward passes
/// and diagnostics.
#[derive(Clone, Debug)]
pub struct RecursionTrace<T: Real> {
    /// `v^(0) .. v^(S)`
    pub v: Vec<Vector<T>>,
    /// `W^(0) .. W^(S)`
    pub w: Vec<Matrix<T>>,
    /// `tanh(W^(s-1) v^(s-1))` for `s = 1..S`
    pub reads: Vec<Vector<T>>,
    /// write factors `u_s` for `s = 1..S`
    pub targets: Vec<Vector<T>>,
    /// MLP hidden layers of the write rule, when present
    pub target_hidden: Vec<Option<Vector<T>>>,
}

impl<T: Real> RecursionTrace<T> {
    pub fn output(&self) -> &Vector<T> {
        self.v.last().expect("depth >= 1")
    }

    pub fn weights(&self) -> &Matrix<T> {
        self.w.last().expect("depth >= 1")
    }

    pub fn into_outputs(mut self) -> (Vector<T>, Matrix<T>) {
        let w = self.w.pop().expect("depth >= 1");
        let v = self.v.pop().expect("depth >= 1");
        (v, w)
    }
}

/// Applies `S` interleaved read/write iterations starting from
/// `(v0, W_prev)`:
///
/// ```text
/// v^(s) = Σ_{l<s} κ[s][l] v^(l) + κ[s][s] tanh(W^(s-1) v^(s-1))
/// W^(s) = Σ_{l<s} β[s][l] W^(l) + β[s][s] α ⊙ (v^(s-1) ⊗ u(v^(s-1)))
/// ```
pub fn recursive_step<T: Real>(
    w_prev: &Matrix<T>,
    v0: &Vector<T>,
    params: &PlasticityParams<T>,
    rule: &WriteRule<T>,
) -> Result<(Vector<T>, Matrix<T>), PlasticError> {
    Ok(recursive_trace(w_prev, v0, params, rule)?.into_outputs())
}

pub fn recursive_trace<T: Real>(
    w_prev: &Matrix<T>,
    v0: &Vector<T>,
    params: &PlasticityParams<T>,
    rule: &WriteRule<T>,
) -> Result<RecursionTrace<T>, PlasticError> {
    let depth = params.depth();
    if depth < 1 {
        return Err(PlasticError::Depth(depth));
    }
    let n = v0.dim();
    if w_prev.shape() != (n, n) {
        return Err(NumError::Shape { op: "recursive step", left: w_prev.shape(), right: (n, 1) }.into());
    }
    check_write_shapes(v0, &params.alpha, rule)?;

    let (kappa, beta) = (&params.kappa, &params.beta);
    let mut trace = RecursionTrace {
        v: Vec::with_capacity(depth + 1),
        w: Vec::with_capacity(depth + 1),
        reads: Vec::with_capacity(depth),
        targets: Vec::with_capacity(depth),
        target_hidden: Vec::with_capacity(depth),
    };
    trace.v.push(v0.clone());
    trace.w.push(w_prev.clone());
    for s in 1..=depth {
        let v_prev = &trace.v[s - 1];
        let w_last = &trace.w[s - 1];
        let r = Vector::from_vec(w_last.matvec_slice(v_prev.as_slice())).map(T::tanh);

        let mut v_next = trace.v[0].scaled(kappa.get(s, 0));
        for l in 1..s {
            v_next.axpy(kappa.get(s, l), &trace.v[l]);
        }
        v_next.axpy(kappa.get(s, s), &r);

        let (u, hidden) = write_target(v_prev, rule);
        let psi = gated_outer(&params.alpha, v_prev, &u);
        let mut w_next = trace.w[0].scaled(beta.get(s, 0));
        for l in 1..s {
            w_next.axpy(beta.get(s, l), &trace.w[l]);
        }
        w_next.axpy(beta.get(s, s), &psi);

        trace.reads.push(r);
        trace.targets.push(u);
        trace.target_hidden.push(hidden);
        trace.v.push(v_next);
        trace.w.push(w_next);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rng::{normal_samples, rng_from_seed};
    use crate::numcore::{normal_init, orthogonal_init};
    use crate::plastic::params::TriTable;

    fn rand_vec(seed: u64, n: usize) -> Vector<f64> {
        Vector::from_vec(normal_samples(&mut rng_from_seed(seed), n, 0.0, 1.0))
    }

    #[test]
    fn read_zero_and_identity() {
        let v = Vector::from_vec(vec![0.1f64, -0.1]);
        assert_eq!(read(&Matrix::zeros(2, 2), &v).unwrap().as_slice(), &[0.0, 0.0]);
        let r = read(&Matrix::identity(2), &v).unwrap();
        assert!((r[0] - 0.0997).abs() < 1e-4 && (r[1] + 0.0997).abs() < 1e-4);
        assert_eq!(r[0], 0.1f64.tanh());
    }

    #[test]
    fn read_matches_scalar_loop() {
        let w: Matrix<f64> = normal_init(4, 4, 0.0, 1.0, 3);
        let v = rand_vec(4, 4);
        let r = read(&w, &v).unwrap();
        for i in 0..4 {
            let mut acc = 0.0;
            for j in 0..4 {
                acc += w[(i, j)] * v[j];
            }
            assert!((r[i] - acc.tanh()).abs() < 1e-15);
            assert!(r[i].abs() < 1.0);
        }
    }

    #[test]
    fn read_rejects_shape_mismatch() {
        assert!(read(&Matrix::<f64>::zeros(3, 3), &Vector::zeros(2)).is_err());
    }

    #[test]
    fn write_basic_cases() {
        let e1 = Vector::<f64>::basis(3, 0);
        let w = write(&e1, &Matrix::filled(3, 3, 1.0), &WriteRule::Hebbian).unwrap();
        assert_eq!(w, crate::numcore::outer(&e1, &e1));
        let z = write(&rand_vec(1, 3), &Matrix::zeros(3, 3), &WriteRule::Hebbian).unwrap();
        assert!(z.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hebbian_write_symmetry_follows_alpha() {
        let v = rand_vec(9, 4);
        let a: Matrix<f64> = normal_init(4, 4, 0.0, 1.0, 10);
        let sym = a.add(&a.transpose()).unwrap();
        let ws = write(&v, &sym, &WriteRule::Hebbian).unwrap();
        assert_eq!(ws, ws.transpose());
        let wa = write(&v, &a, &WriteRule::Hebbian).unwrap();
        assert_ne!(wa, wa.transpose());
    }

    #[test]
    fn projected_writes() {
        let v = rand_vec(2, 3);
        let alpha: Matrix<f64> = normal_init(3, 3, 0.0, 1.0, 5);
        let p: Matrix<f64> = orthogonal_init(3, 3, 6);
        let lin = write(&v, &alpha, &WriteRule::LinearProjected { proj: p.clone() }).unwrap();
        let pv = p.matvec(&v).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((lin[(i, j)] - alpha[(i, j)] * v[i] * pv[j]).abs() < 1e-14);
            }
        }
        let p2: Matrix<f64> = orthogonal_init(3, 3, 7);
        let mlp = write(&v, &alpha, &WriteRule::MlpProjected { proj1: p.clone(), proj2: p2.clone() }).unwrap();
        let u = p2.matvec(&p.matvec(&v).unwrap().map(f64::tanh)).unwrap().map(f64::tanh);
        for i in 0..3 {
            for j in 0..3 {
                assert!((mlp[(i, j)] - alpha[(i, j)] * v[i] * u[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hebbian_reduction_is_exact() {
        for seed in 0..20u64 {
            let n = 5;
            let w: Matrix<f64> = normal_init(n, n, 0.0, 0.5, seed);
            let alpha: Matrix<f64> = normal_init(n, n, 0.0, 1.0, seed + 100);
            let v = rand_vec(seed + 200, n);
            let eta = 0.37;
            let p = PlasticityParams::hebbian(alpha.clone(), eta);
            let (v1, w1) = recursive_step(&w, &v, &p, &WriteRule::Hebbian).unwrap();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(w1[(i, j)], w[(i, j)] + eta * (alpha[(i, j)] * (v[i] * v[j])));
                }
            }
            assert_eq!(v1, read(&w, &v).unwrap());
        }
    }

    #[test]
    fn zero_coefficients_zero_everything() {
        let p = PlasticityParams {
            alpha: normal_init(3, 3, 0.0, 1.0, 1),
            kappa: TriTable::zeros(3),
            beta: TriTable::zeros(3),
        };
        let (v, w) = recursive_step(&normal_init(3, 3, 0.0, 1.0, 2), &rand_vec(3, 3), &p, &WriteRule::Hebbian).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
        assert!(w.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn depth_two_matches_hand_unrolled() {
        let n = 3;
        let w0: Matrix<f64> = normal_init(n, n, 0.0, 0.7, 11);
        let alpha: Matrix<f64> = normal_init(n, n, 0.0, 1.0, 12);
        let v0 = rand_vec(13, n);
        let coeffs = normal_samples(&mut rng_from_seed(14), 5, 0.0, 1.0);
        let kappa = TriTable::from_vec(2, coeffs.clone()).unwrap();
        let bcoeffs = normal_samples(&mut rng_from_seed(15), 5, 0.0, 1.0);
        let beta = TriTable::from_vec(2, bcoeffs.clone()).unwrap();
        let p = PlasticityParams { alpha: alpha.clone(), kappa, beta };
        let (v2, w2) = recursive_step(&w0, &v0, &p, &WriteRule::Hebbian).unwrap();

        // Table layout: [k10, k11, k20, k21, k22].
        let (k10, k11, k20, k21, k22) = (coeffs[0], coeffs[1], coeffs[2], coeffs[3], coeffs[4]);
        let (b10, b11, b20, b21, b22) = (bcoeffs[0], bcoeffs[1], bcoeffs[2], bcoeffs[3], bcoeffs[4]);
        let mut r1 = [0.0; 3];
        let mut v1 = [0.0; 3];
        let mut w1 = [[0.0; 3]; 3];
        for i in 0..n {
            let dotp: f64 = (0..n).map(|j| w0[(i, j)] * v0[j]).sum();
            r1[i] = dotp.tanh();
            v1[i] = k10 * v0[i] + k11 * r1[i];
            for j in 0..n {
                w1[i][j] = b10 * w0[(i, j)] + b11 * alpha[(i, j)] * v0[i] * v0[j];
            }
        }
        for i in 0..n {
            let dotp: f64 = (0..n).map(|j| w1[i][j] * v1[j]).sum();
            let r2 = dotp.tanh();
            let want_v = k20 * v0[i] + k21 * v1[i] + k22 * r2;
            assert!((v2[i] - want_v).abs() < 1e-13);
            for j in 0..n {
                let want_w = b20 * w0[(i, j)] + b21 * w1[i][j] + b22 * alpha[(i, j)] * v1[i] * v1[j];
                assert!((w2[(i, j)] - want_w).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn depth_zero_rejected() {
        let p = PlasticityParams::<f64> {
            alpha: Matrix::zeros(2, 2),
            kappa: TriTable::zeros(0),
            beta: TriTable::zeros(0),
        };
        let r = recursive_step(&Matrix::zeros(2, 2), &Vector::zeros(2), &p, &WriteRule::Hebbian);
        assert!(matches!(r, Err(PlasticError::Depth(0))));
    }

    #[test]
    fn f32_recursion_runs() {
        let w: Matrix<f32> = normal_init(4, 4, 0.0, 0.5, 1);
        let alpha: Matrix<f32> = normal_init(4, 4, 0.0, 0.5, 2);
        let v = Vector::<f32>::from_vec(vec![0.1, 0.2, -0.3, 0.4]);
        let p = PlasticityParams::hebbian(alpha, 0.5f32);
        let (out, w1) = recursive_step(&w, &v, &p, &WriteRule::Hebbian).unwrap();
        assert!(out.is_finite() && w1.is_finite());
    }
}
