//! Central finite-difference checks of every graph op's backward pass.
//!
//! The analytic side is the f32 graph. The numeric side re-evaluates the op
//! in f64 at the perturbed f32 parameters, so rounding of the forward pass
//! does not swamp the difference quotient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gaussian::{LOG_STD_MAX, LOG_STD_MIN};
use super::{ConvLayerSpec, ConvStackSpec, Graph, MlpSpec, ParamStore, Result, Tensor, Var};

/// Ops covered by [`check_op`].
pub const OPS: [&str; 19] = [
    "linear",
    "conv1d",
    "elu",
    "add",
    "sub",
    "mul",
    "min",
    "scale",
    "exp",
    "square",
    "clamp",
    "sum",
    "mean",
    "row_sum",
    "concat",
    "gaussian_log_prob",
    "gaussian_entropy",
    "mlp",
    "conv_stack",
];

/// Worst disagreement found for one op and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub op: &'static str,
    pub seed: u64,
    pub max_rel_err: f64,
    pub checked: usize,
}

/// `|a − n| / max(|a| + |n|, 1e-2)`
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-2)
}

type Build = Box<dyn Fn(&mut Graph) -> Result<Var>>;
type Reference = Box<dyn Fn(&ParamStore) -> Vec<f64>>;

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Uniform values kept at least `gap` away from each point in `kinks`.
fn away_from(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32, kinks: &[f32], gap: f32) -> Vec<f32> {
    (0..n)
        .map(|_| loop {
            let v = rng.random_range(lo..hi);
            if kinks.iter().all(|k| (v - k).abs() > gap) {
                break v;
            }
        })
        .collect()
}

fn param(store: &mut ParamStore, name: &str, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
    store.insert(name, Tensor::new(shape, data)?).map(|_| ())
}

fn p64(s: &ParamStore, name: &str) -> Vec<f64> {
    s.get(name)
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .unwrap_or_default()
}

fn elu64(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// `x: [B, k]`, `w: [k, n]`.
fn linear64(x: &[f64], w: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let n = b.len();
    x.chunks(k)
        .flat_map(|row| (0..n).map(move |j| b[j] + (0..k).map(|i| row[i] * w[i * n + j]).sum::<f64>()))
        .collect()
}

/// Time-major `x: [B, t·c_in]`, `w: [c_out, kernel, c_in]`.
fn conv64(x: &[f64], batch: usize, w: &[f64], b: &[f64], c_in: usize, kernel: usize, stride: usize) -> Vec<f64> {
    let c_out = b.len();
    let t_in = x.len() / batch / c_in;
    let t_out = (t_in - kernel) / stride + 1;
    let mut out = Vec::with_capacity(batch * t_out * c_out);
    for bi in 0..batch {
        let xb = &x[bi * t_in * c_in..(bi + 1) * t_in * c_in];
        for t in 0..t_out {
            for o in 0..c_out {
                let mut acc = b[o];
                for k in 0..kernel {
                    for c in 0..c_in {
                        acc += w[(o * kernel + k) * c_in + c] * xb[(t * stride + k) * c_in + c];
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

fn mlp64(s: &ParamStore, spec: &MlpSpec, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for l in 0..spec.num_layers() {
        h = linear64(&h, &p64(s, &spec.weight_name(l)), &p64(s, &spec.bias_name(l)), spec.sizes[l]);
        if l + 1 < spec.num_layers() || spec.activate_output {
            h.iter_mut().for_each(|v| *v = elu64(*v));
        }
    }
    h
}

fn conv_stack64(s: &ParamStore, spec: &ConvStackSpec, x: &[f64], batch: usize) -> Vec<f64> {
    let mut h = x.to_vec();
    let mut c_in = spec.in_channels;
    for (l, layer) in spec.layers.iter().enumerate() {
        let w = p64(s, &spec.conv_weight_name(l));
        let b = p64(s, &spec.conv_bias_name(l));
        h = conv64(&h, batch, &w, &b, c_in, layer.kernel, layer.stride);
        h.iter_mut().for_each(|v| *v = elu64(*v));
        c_in = layer.out_channels;
    }
    let proj = MlpSpec::new(format!("{}.proj", spec.prefix), vec![spec.flat_dim(), spec.latent_dim]);
    mlp64(s, &proj, &h)
}

fn clamp_ls(v: f64) -> f64 {
    v.clamp(LOG_STD_MIN as f64, LOG_STD_MAX as f64)
}

fn setup(op: &'static str, rng: &mut ChaCha8Rng) -> Result<(ParamStore, Build, Reference)> {
    let mut s = ParamStore::new();
    let (build, reference): (Build, Reference) = match op {
        "linear" => {
            param(&mut s, "x", vec![3, 4], uniform(rng, 12, -1.0, 1.0))?;
            param(&mut s, "w", vec![4, 5], uniform(rng, 20, -1.0, 1.0))?;
            param(&mut s, "b", vec![5], uniform(rng, 5, -1.0, 1.0))?;
            (
                Box::new(|g| {
                    let (x, w, b) = (g.param("x")?, g.param("w")?, g.param("b")?);
                    g.linear(x, w, b)
                }),
                Box::new(|s| linear64(&p64(s, "x"), &p64(s, "w"), &p64(s, "b"), 4)),
            )
        }
        "conv1d" => {
            param(&mut s, "x", vec![2, 7 * 3], uniform(rng, 42, -1.0, 1.0))?;
            param(&mut s, "w", vec![4, 3, 3], uniform(rng, 36, -1.0, 1.0))?;
            param(&mut s, "b", vec![4], uniform(rng, 4, -1.0, 1.0))?;
            (
                Box::new(|g| {
                    let (x, w, b) = (g.param("x")?, g.param("w")?, g.param("b")?);
                    g.conv1d(x, w, b, 3, 2)
                }),
                Box::new(|s| conv64(&p64(s, "x"), 2, &p64(s, "w"), &p64(s, "b"), 3, 3, 2)),
            )
        }
        "elu" | "exp" | "square" | "scale" | "row_sum" => {
            param(&mut s, "x", vec![3, 5], uniform(rng, 15, -1.5, 1.5))?;
            let k: f32 = rng.random_range(-2.0..2.0);
            (
                Box::new(move |g| {
                    let x = g.param("x")?;
                    Ok(match op {
                        "elu" => g.elu(x),
                        "exp" => g.exp(x),
                        "square" => g.square(x),
                        "scale" => g.scale(x, k),
                        _ => g.row_sum(x),
                    })
                }),
                Box::new(move |s| {
                    let x = p64(s, "x");
                    match op {
                        "elu" => x.into_iter().map(elu64).collect(),
                        "exp" => x.into_iter().map(f64::exp).collect(),
                        "square" => x.into_iter().map(|v| v * v).collect(),
                        "scale" => x.into_iter().map(|v| v * k as f64).collect(),
                        _ => x.chunks(5).map(|r| r.iter().sum()).collect(),
                    }
                }),
            )
        }
        "add" | "sub" | "mul" | "min" => {
            let a = uniform(rng, 12, -1.0, 1.0);
            let b: Vec<f32> = if op == "min" {
                a.iter()
                    .map(|&v| v + away_from(rng, 1, -1.0, 1.0, &[0.0], 0.05)[0])
                    .collect()
            } else {
                uniform(rng, 12, -1.0, 1.0)
            };
            param(&mut s, "a", vec![3, 4], a)?;
            param(&mut s, "b", vec![3, 4], b)?;
            (
                Box::new(move |g| {
                    let (a, b) = (g.param("a")?, g.param("b")?);
                    match op {
                        "add" => g.add(a, b),
                        "sub" => g.sub(a, b),
                        "mul" => g.mul(a, b),
                        _ => g.min(a, b),
                    }
                }),
                Box::new(move |s| {
                    let f = match op {
                        "add" => |x: f64, y: f64| x + y,
                        "sub" => |x: f64, y: f64| x - y,
                        "mul" => |x: f64, y: f64| x * y,
                        _ => f64::min,
                    };
                    p64(s, "a").into_iter().zip(p64(s, "b")).map(|(x, y)| f(x, y)).collect()
                }),
            )
        }
        "clamp" => {
            param(&mut s, "x", vec![3, 5], away_from(rng, 15, -1.0, 1.0, &[-0.5, 0.5], 0.02))?;
            (
                Box::new(|g| {
                    let x = g.param("x")?;
                    Ok(g.clamp(x, -0.5, 0.5))
                }),
                Box::new(|s| p64(s, "x").into_iter().map(|v| v.clamp(-0.5, 0.5)).collect()),
            )
        }
        "sum" | "mean" => {
            param(&mut s, "x", vec![3, 5], uniform(rng, 15, -1.0, 1.0))?;
            (
                Box::new(move |g| {
                    let x = g.param("x")?;
                    Ok(if op == "sum" { g.sum(x) } else { g.mean(x) })
                }),
                Box::new(move |s| {
                    let x = p64(s, "x");
                    let total: f64 = x.iter().sum();
                    vec![if op == "sum" { total } else { total / x.len() as f64 }]
                }),
            )
        }
        "concat" => {
            param(&mut s, "a", vec![3, 2], uniform(rng, 6, -1.0, 1.0))?;
            param(&mut s, "b", vec![3, 4], uniform(rng, 12, -1.0, 1.0))?;
            (
                Box::new(|g| {
                    let (a, b) = (g.param("a")?, g.param("b")?);
                    g.concat(a, b)
                }),
                Box::new(|s| {
                    let (a, b) = (p64(s, "a"), p64(s, "b"));
                    (0..3).flat_map(|r| [&a[r * 2..r * 2 + 2], &b[r * 4..r * 4 + 4]].concat()).collect()
                }),
            )
        }
        "gaussian_log_prob" => {
            param(&mut s, "mean", vec![3, 4], uniform(rng, 12, -1.0, 1.0))?;
            param(&mut s, "log_std", vec![4], uniform(rng, 4, -1.0, 0.5))?;
            let action = uniform(rng, 12, -1.5, 1.5);
            let act64: Vec<f64> = action.iter().map(|&v| v as f64).collect();
            (
                Box::new(move |g| {
                    let (m, ls) = (g.param("mean")?, g.param("log_std")?);
                    g.gaussian_log_prob(m, ls, action.clone())
                }),
                Box::new(move |s| {
                    let (m, ls) = (p64(s, "mean"), p64(s, "log_std"));
                    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
                    (0..3)
                        .map(|r| {
                            (0..4)
                                .map(|j| {
                                    let l = clamp_ls(ls[j]);
                                    let z = (act64[r * 4 + j] - m[r * 4 + j]) / l.exp();
                                    -0.5 * z * z - l - half_ln_2pi
                                })
                                .sum()
                        })
                        .collect()
                }),
            )
        }
        "gaussian_entropy" => {
            param(&mut s, "log_std", vec![4], uniform(rng, 4, -1.0, 0.5))?;
            (
                Box::new(|g| {
                    let ls = g.param("log_std")?;
                    Ok(g.gaussian_entropy(ls))
                }),
                Box::new(|s| {
                    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
                    vec![p64(s, "log_std").into_iter().map(|l| clamp_ls(l) + 0.5 + half_ln_2pi).sum()]
                }),
            )
        }
        "mlp" => {
            let spec = MlpSpec::new("m", vec![4, 6, 3]);
            spec.register(&mut s, rng, 1.0, 1.0)?;
            for name in ["m.0.bias", "m.1.bias"] {
                if let Some(t) = s.get_mut(name) {
                    for v in t.data_mut() {
                        *v = rng.random_range(-0.5..0.5);
                    }
                }
            }
            let x = uniform(rng, 8, -1.0, 1.0);
            let x64: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            let spec64 = spec.clone();
            (
                Box::new(move |g| {
                    let xi = g.input(2, 4, x.clone())?;
                    spec.forward(g, xi)
                }),
                Box::new(move |s| mlp64(s, &spec64, &x64)),
            )
        }
        "conv_stack" => {
            let spec = ConvStackSpec {
                prefix: "c".into(),
                in_channels: 3,
                time_len: 10,
                layers: vec![
                    ConvLayerSpec {
                        out_channels: 4,
                        kernel: 4,
                        stride: 2,
                    },
                    ConvLayerSpec {
                        out_channels: 3,
                        kernel: 2,
                        stride: 1,
                    },
                ],
                latent_dim: 2,
            };
            spec.register(&mut s, rng, 1.0, 1.0)?;
            let x = uniform(rng, 60, -1.0, 1.0);
            let x64: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            let spec64 = spec.clone();
            (
                Box::new(move |g| {
                    let xi = g.input(2, 30, x.clone())?;
                    spec.forward(g, xi)
                }),
                Box::new(move |s| conv_stack64(s, &spec64, &x64, 2)),
            )
        }
        other => return Err(super::NnError::State(format!("no gradient check for op `{other}`"))),
    };
    Ok((s, build, reference))
}

/// Compares the analytic gradient of `Σ op(θ) ⊙ R` (fixed random `R`) with
/// central differences of step `eps` on every parameter entry.
pub fn check_op(op: &'static str, seed: u64, eps: f32) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = uniform(&mut rng, 256, -1.0, 1.0);
    let (mut store, build, reference) = setup(op, &mut rng)?;
    let grads = {
        let mut g = Graph::new(&store);
        let y = build(&mut g)?;
        let (rows, cols) = g.shape(y);
        let w = g.input(rows, cols, r[..rows * cols].to_vec())?;
        let p = g.mul(y, w)?;
        let l = g.sum(p);
        g.backward(l)?
    };
    let loss = |s: &ParamStore| -> f64 { reference(s).iter().zip(&r).map(|(&y, &w)| y * w as f64).sum() };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for p in 0..store.len() {
        let analytic: Vec<f32> = grads
            .get(p)
            .map(<[f32]>::to_vec)
            .unwrap_or_else(|| vec![0.0; store.at(p).numel()]);
        for k in 0..store.at(p).numel() {
            let orig = store.at(p).data()[k];
            let (hi, lo) = (orig + eps, orig - eps);
            store.at_mut(p).data_mut()[k] = hi;
            let up = loss(&store);
            store.at_mut(p).data_mut()[k] = lo;
            let down = loss(&store);
            store.at_mut(p).data_mut()[k] = orig;
            let numeric = (up - down) / (hi as f64 - lo as f64);
            worst = worst.max(rel_err(analytic[k] as f64, numeric));
            checked += 1;
        }
    }
    Ok(GradCheck {
        op,
        seed,
        max_rel_err: worst,
        checked,
    })
}
