//! Hand-derived vector-Jacobian product of one agent step.
//!
//! Given cotangents of the step outputs (logits, value and the outgoing
//! plastic matrix `W_t`), accumulates parameter gradients and returns the
//! cotangent of the incoming matrix `W_{t-1}`.

use crate::numcore::{Matrix, Real, Vector};
use crate::plastic::{AgentParams, Dense, StepTrace, W0Mode, WriteRule};

fn add_outer<T: Real>(m: &mut Matrix<T>, a: &[T], b: &[T]) {
    let cols = b.len();
    let data = m.as_mut_slice();
    for (i, &ai) in a.iter().enumerate() {
        if ai == T::zero() {
            continue;
        }
        for (d, &bj) in data[i * cols..(i + 1) * cols].iter_mut().zip(b) {
            *d += ai * bj;
        }
    }
}

fn add_slice<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Backward through an affine layer; returns the input cotangent.
fn dense_backward<T: Real>(layer: &Dense<T>, grad: &mut Dense<T>, x: &[T], dy: &[T]) -> Vec<T> {
    add_outer(&mut grad.weight, dy, x);
    add_slice(grad.bias.as_mut_slice(), dy);
    layer.weight.tr_matvec_slice(dy)
}

fn tanh_backward<T: Real>(y: &[T], dy: &[T]) -> Vec<T> {
    y.iter().zip(dy).map(|(&y, &d)| d * (T::one() - y * y)).collect()
}

/// Cotangent `ν_{t-1}` of the incoming plastic matrix.
pub fn step_backward<T: Real>(
    params: &AgentParams<T>,
    trace: &StepTrace<T>,
    dlogits: &[T],
    dvalue: T,
    dw_out: &Matrix<T>,
    grad: &mut AgentParams<T>,
) -> Matrix<T> {
    let rec = &trace.recursion;
    let depth = params.depth();
    let n = params.size();
    let g = trace.readout_hidden.as_slice();

    // Read-out.
    let mut dg = dense_backward(&params.policy_head, &mut grad.policy_head, g, dlogits);
    add_slice(&mut dg, &dense_backward(&params.value_head, &mut grad.value_head, g, &[dvalue]));
    let dz = tanh_backward(g, &dg);
    let dvs = dense_backward(&params.readout_hidden, &mut grad.readout_hidden, rec.v[depth].as_slice(), &dz);

    let mut dv: Vec<Vec<T>> = vec![vec![T::zero(); n]; depth + 1];
    dv[depth] = dvs;
    let mut dw: Vec<Matrix<T>> = (0..depth).map(|_| Matrix::zeros(n, n)).collect();
    dw.push(dw_out.clone());

    let kappa = &params.plasticity.kappa;
    let beta = &params.plasticity.beta;
    let alpha = params.plasticity.alpha.as_slice();
    let (kidx, bidx) = (|s, l| kappa.index_of(s, l), |s, l| beta.index_of(s, l));

    for s in (1..=depth).rev() {
        let v_prev = rec.v[s - 1].as_slice();
        let u = rec.targets[s - 1].as_slice();

        // W^(s) = Σ_{l<s} β[s][l] W^(l) + β[s][s] ψ_s,  ψ_s = α ⊙ (v ⊗ u)
        let (lower, upper) = dw.split_at_mut(s);
        let dws = &upper[0];
        for (l, dwl) in lower.iter_mut().enumerate() {
            grad.plasticity.beta.as_mut_slice()[bidx(s, l)] += dws.frobenius_dot(&rec.w[l]);
            dwl.axpy(beta.get(s, l), dws);
        }
        let bss = beta.get(s, s);
        let mut dbss = T::zero();
        let mut du = vec![T::zero(); n];
        {
            let dvp = &mut dv[s - 1];
            let dalpha = grad.plasticity.alpha.as_mut_slice();
            let d = dws.as_slice();
            for i in 0..n {
                let vi = v_prev[i];
                let mut acc = T::zero();
                for j in 0..n {
                    let k = i * n + j;
                    let gij = d[k];
                    if gij == T::zero() {
                        continue;
                    }
                    let vu = vi * u[j];
                    dbss += gij * alpha[k] * vu;
                    if params.alpha_trainable {
                        dalpha[k] += bss * gij * vu;
                    }
                    let dij = bss * gij * alpha[k];
                    acc += dij * u[j];
                    du[j] += dij * vi;
                }
                dvp[i] += acc;
            }
        }
        grad.plasticity.beta.as_mut_slice()[bidx(s, s)] += dbss;

        // Write factor u(v^(s-1)).
        match (&params.write_rule, &mut grad.write_rule) {
            (WriteRule::Hebbian, _) => add_slice(&mut dv[s - 1], &du),
            (WriteRule::LinearProjected { proj }, WriteRule::LinearProjected { proj: gp }) => {
                add_outer(gp, &du, v_prev);
                add_slice(&mut dv[s - 1], &proj.tr_matvec_slice(&du));
            }
            (WriteRule::MlpProjected { proj1, proj2 }, WriteRule::MlpProjected { proj1: g1, proj2: g2 }) => {
                let h = rec.target_hidden[s - 1].as_ref().expect("mlp write keeps its hidden layer");
                let dzu = tanh_backward(u, &du);
                add_outer(g2, &dzu, h.as_slice());
                let dh = proj2.tr_matvec_slice(&dzu);
                let dzh = tanh_backward(h.as_slice(), &dh);
                add_outer(g1, &dzh, v_prev);
                add_slice(&mut dv[s - 1], &proj1.tr_matvec_slice(&dzh));
            }
            _ => unreachable!("gradient container mirrors the parameter write rule"),
        }

        // v^(s) = Σ_{l<s} κ[s][l] v^(l) + κ[s][s] tanh(W^(s-1) v^(s-1))
        let dvs = dv[s].clone();
        let dvs_vec = Vector::from_vec(dvs.clone());
        for (l, dvl) in dv[..s].iter_mut().enumerate() {
            grad.plasticity.kappa.as_mut_slice()[kidx(s, l)] += dvs_vec.dot(&rec.v[l]);
            let k = kappa.get(s, l);
            for (d, &x) in dvl.iter_mut().zip(&dvs) {
                *d += k * x;
            }
        }
        let r = rec.reads[s - 1].as_slice();
        grad.plasticity.kappa.as_mut_slice()[kidx(s, s)] += dvs_vec.dot(&rec.reads[s - 1]);
        let kss = kappa.get(s, s);
        let dr: Vec<T> = dvs.iter().map(|&x| kss * x).collect();
        let dzr = tanh_backward(r, &dr);
        add_outer(&mut dw[s - 1], &dzr, v_prev);
        add_slice(&mut dv[s - 1], &rec.w[s - 1].tr_matvec_slice(&dzr));
    }

    // Embedding.
    let h = trace.embed_hidden.as_slice();
    let dh = dense_backward(&params.embed_out, &mut grad.embed_out, h, &dv[0]);
    let dzh = tanh_backward(h, &dh);
    dense_backward(&params.embed_hidden, &mut grad.embed_hidden, trace.input.as_slice(), &dzh);

    dw.swap_remove(0)
}

/// Adds the cotangent of `W_0` to the gradient when `W_0` is trained.
pub fn accumulate_initial<T: Real>(params: &AgentParams<T>, grad: &mut AgentParams<T>, nu0: &Matrix<T>) {
    if params.w0_mode == W0Mode::Learned {
        if let Some(g) = grad.w0.as_mut() {
            g.axpy(T::one(), nu0);
        }
    }
}
