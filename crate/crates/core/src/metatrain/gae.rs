//! Generalized advantage estimation.

/// Advantages and value targets for one episode.
///
/// `values[t]` is the estimate at the state where action `t` was taken;
/// `bootstrap` is the estimate after the last step (0 for a true terminal).
/// `δ_t = r_t + γ v_{t+1} − v_t`, `A_t = Σ_k (γλ)^k δ_{t+k}`, `R_t = A_t + v_t`.
pub fn compute_gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len(), "rewards and values differ in length");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Rescales to zero mean and unit standard deviation in place.
pub fn normalize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for x in xs {
        *x = (*x - mean) * scale;
    }
}
