//! Independent float64 reference implementations shared by the test targets.
#![allow(dead_code)]

use quadfault::dynamics::{RobotModel, RobotState};
use quadfault::eval::EpisodeRecord;
use quadfault::fault::FaultSpec;
use quadfault::nn::{ConvStackSpec, ParamStore};
use quadfault::terrain::TerrainKind;
use rand::Rng;

/// Advantages as the truncated sum `Σ_l (γλ)^l δ_{t+l}` stopping after the
/// first terminal step, and returns `A + V`.
pub fn gae_oracle(r: &[f64], v: &[f64], d: &[bool], last: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = r.len();
    let next = |t: usize| if t + 1 < n { v[t + 1] } else { last };
    let delta: Vec<f64> = (0..n)
        .map(|t| r[t] + if d[t] { 0.0 } else { gamma * next(t) } - v[t])
        .collect();
    let mut adv = vec![0.0; n];
    for t in 0..n {
        let mut w = 1.0;
        for k in t..n {
            adv[t] += w * delta[k];
            if d[k] {
                break;
            }
            w *= gamma * lambda;
        }
    }
    let ret = adv.iter().zip(v).map(|(a, b)| a + b).collect();
    (adv, ret)
}

/// Rotates a world vector into the body frame of quaternion `(w, x, y, z)`
/// via `q* v q`, spelled out with Hamilton products.
pub fn world_to_body(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    let q = q.map(|c| c / n);
    let mul = |a: [f64; 4], b: [f64; 4]| {
        [
            a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
        ]
    };
    let conj = [q[0], -q[1], -q[2], -q[3]];
    let r = mul(mul(conj, [0.0, v[0], v[1], v[2]]), q);
    [r[1], r[2], r[3]]
}

/// Per-tick reward with the default weights written out.
pub fn reward_oracle(
    prev: &RobotState,
    cur: &RobotState,
    a: &[f64; 12],
    a_prev: &[f64; 12],
    tau: &[f64; 12],
    terminated: bool,
    target: f64,
    dt: f64,
) -> f64 {
    let v = world_to_body(cur.base_quat, cur.base_lin_vel);
    let w = world_to_body(cur.base_quat, cur.base_ang_vel);
    let mut r = (-4.0 * (v[0] - target).powi(2)).exp();
    r -= v[1] * v[1] + v[2] * v[2];
    r -= 0.05 * (w[0] * w[0] + w[1] * w[1]);
    for j in 0..12 {
        r -= 0.0002 * (tau[j] * cur.dq[j]).abs();
        r -= 0.01 * (a[j] - a_prev[j]).powi(2);
        r -= 2.5e-7 * ((cur.dq[j] - prev.dq[j]) / dt).powi(2);
    }
    if terminated {
        r -= 10.0;
    }
    r
}

/// Lower-value percentile by sorting a copy: the largest sample whose rank
/// does not exceed `p·(n−1)`.
pub fn percentile_oracle(xs: &[f64], p: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = p * (s.len() as f64 - 1.0);
    let mut best = s[0];
    for (i, &x) in s.iter().enumerate() {
        if i as f64 <= rank {
            best = x;
        }
    }
    best
}

/// Foot position by chaining 4×4 homogeneous transforms.
pub fn fk_oracle(m: &RobotModel, leg: usize, q: [f64; 3]) -> [f64; 3] {
    type M = [[f64; 4]; 4];
    let mul = |a: M, b: M| {
        let mut c = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        c
    };
    let tr = |x: f64, y: f64, z: f64| -> M { [[1., 0., 0., x], [0., 1., 0., y], [0., 0., 1., z], [0., 0., 0., 1.]] };
    let rx = |a: f64| -> M {
        let (s, c) = a.sin_cos();
        [[1., 0., 0., 0.], [0., c, -s, 0.], [0., s, c, 0.], [0., 0., 0., 1.]]
    };
    let ry = |a: f64| -> M {
        let (s, c) = a.sin_cos();
        [[c, 0., s, 0.], [0., 1., 0., 0.], [-s, 0., c, 0.], [0., 0., 0., 1.]]
    };
    let h = m.hip_offset(leg);
    let t = [
        rx(q[0]),
        ry(q[1]),
        tr(0.0, 0.0, -m.thigh_length),
        ry(q[2]),
        tr(0.0, 0.0, -m.calf_length),
    ]
    .into_iter()
    .fold(tr(h[0], h[1], h[2]), mul);
    [t[0][3], t[1][3], t[2][3]]
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn param(s: &ParamStore, name: &str) -> Vec<f64> {
    s.get(name).unwrap().data().iter().map(|&v| v as f64).collect()
}

/// Conv stack on a channel-major `[channels, time]` input: valid strided
/// cross-correlation + ELU per layer, flatten time-major, linear projection.
pub fn conv_stack_oracle(s: &ParamStore, spec: &ConvStackSpec, x_ct: &[f64]) -> Vec<f64> {
    let mut c_in = spec.in_channels;
    let mut t_in = spec.time_len;
    // h[c][t]
    let mut h: Vec<Vec<f64>> = (0..c_in).map(|c| x_ct[c * t_in..(c + 1) * t_in].to_vec()).collect();
    for (l, layer) in spec.layers.iter().enumerate() {
        let w = param(s, &spec.conv_weight_name(l));
        let b = param(s, &spec.conv_bias_name(l));
        let t_out = (t_in - layer.kernel) / layer.stride + 1;
        let mut out = vec![vec![0.0; t_out]; layer.out_channels];
        for (o, row) in out.iter_mut().enumerate() {
            for (t, y) in row.iter_mut().enumerate() {
                let mut acc = b[o];
                for c in 0..c_in {
                    for k in 0..layer.kernel {
                        acc += w[o * layer.kernel * c_in + k * c_in + c] * h[c][t * layer.stride + k];
                    }
                }
                *y = elu(acc);
            }
        }
        h = out;
        c_in = layer.out_channels;
        t_in = t_out;
    }
    let flat: Vec<f64> = (0..t_in).flat_map(|t| h.iter().map(move |ch| ch[t])).collect();
    let w = param(s, &format!("{}.proj.0.weight", spec.prefix));
    let b = param(s, &format!("{}.proj.0.bias", spec.prefix));
    (0..spec.latent_dim)
        .map(|j| b[j] + flat.iter().enumerate().map(|(i, x)| x * w[i * spec.latent_dim + j]).sum::<f64>())
        .collect()
}

/// A random deployment record.
pub fn synthetic_record<R: Rng>(rng: &mut R, episode: usize, terrain: TerrainKind) -> EpisodeRecord {
    let fault_tick = rng.random_range(100..500);
    let ticks_after = rng.random_range(0..=1000u32);
    let terminated = ticks_after < 1000 || rng.random_bool(0.1);
    EpisodeRecord {
        episode,
        terrain,
        level: episode % 5,
        fault: FaultSpec::none(),
        fault_tick,
        ticks: fault_tick + ticks_after,
        ticks_after,
        terminated,
        velocity_before: Some(rng.random_range(-0.2..0.8)),
        velocity_after: (ticks_after > 0).then(|| rng.random_range(-0.2..0.8)),
        episode_return: rng.random_range(-50.0..300.0),
        trace: None,
    }
}
