/// Generalized advantage estimation over one trajectory segment.
///
/// `dones[t]` marks that the episode ended after step `t`, so the value of
/// the following state is not bootstrapped. Returns `(advantages, returns)`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(
        rewards.len() == values.len() && values.len() == dones.len(),
        "gae inputs must have equal lengths"
    );
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// GAE for a `horizon × num_envs` buffer stored step-major.
pub fn gae_batched(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: &[f64],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = bootstrap.len();
    let horizon = rewards.len() / n.max(1);
    let mut adv = vec![0.0; rewards.len()];
    let mut ret = vec![0.0; rewards.len()];
    for e in 0..n {
        let col = |v: &[f64]| (0..horizon).map(|t| v[t * n + e]).collect::<Vec<_>>();
        let d: Vec<bool> = (0..horizon).map(|t| dones[t * n + e]).collect();
        let (a, r) = gae(&col(rewards), &col(values), &d, bootstrap[e], gamma, lambda);
        for t in 0..horizon {
            adv[t * n + e] = a[t];
            ret[t * n + e] = r[t];
        }
    }
    (adv, ret)
}

/// Shifts and scales in place to zero mean and unit standard deviation.
pub fn normalize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt() + 1e-8;
    for x in xs {
        *x = (*x - mean) / sd;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, r) = gae(&[1.5], &[0.4], &[true], 9.0, 0.99, 0.95);
        assert!((a[0] - 1.1).abs() < 1e-12);
        assert!((r[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn telescoping() {
        let (a, _) = gae(&[1.0, 2.0], &[0.5, 0.7], &[false, false], 3.0, 1.0, 1.0);
        assert!((a[0] - (1.0 + 2.0 + 3.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn normalized_moments() {
        let mut x: Vec<f64> = (0..100).map(|k| (k as f64).sin() * 3.0 + 1.0).collect();
        normalize(&mut x);
        let m = x.iter().sum::<f64>() / 100.0;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 99.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-6);
    }
}
