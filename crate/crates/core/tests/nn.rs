mod common;

use proptest::prelude::*;
use quadfault::nn::gradcheck::{check_op, OPS};
use quadfault::nn::{conv1d_forward, gaussian_log_prob, Adam, ConvLayerSpec, ConvStackSpec, GaussianPolicyHead, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spec(rng: &mut ChaCha8Rng) -> ConvStackSpec {
    let in_channels = rng.random_range(1..6);
    let n_layers = rng.random_range(1..3);
    let layers: Vec<ConvLayerSpec> = (0..n_layers)
        .map(|_| ConvLayerSpec {
            out_channels: rng.random_range(1..6),
            kernel: rng.random_range(1..5),
            stride: rng.random_range(1..4),
        })
        .collect();
    let t_min = layers.iter().rev().fold(1, |need, l| (need - 1) * l.stride + l.kernel);
    ConvStackSpec {
        prefix: "enc".into(),
        in_channels,
        time_len: t_min + rng.random_range(0..12),
        layers,
        latent_dim: rng.random_range(1..6),
    }
}

#[test]
fn every_op_passes_gradient_check() {
    for op in OPS {
        for seed in 0..20 {
            let r = check_op(op, seed, 1e-3).unwrap();
            assert!(r.checked > 0, "{op} checked nothing");
            assert!(r.max_rel_err < 1e-3, "{op} seed {seed}: rel err {}", r.max_rel_err);
        }
    }
}

#[test]
fn conv_stack_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let spec = random_spec(&mut rng);
        let mut store = ParamStore::new();
        spec.register(&mut store, &mut rng, 1.4, 1.0).unwrap();
        for i in 0..store.len() {
            for v in store.at_mut(i).data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let n = spec.in_channels * spec.time_len;
        let x: Vec<f32> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = conv1d_forward(&store, &Tensor::new(vec![spec.in_channels, spec.time_len], x.clone()).unwrap(), &spec).unwrap();
        let want = common::conv_stack_oracle(&store, &spec, &x.iter().map(|&v| v as f64).collect::<Vec<_>>());
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert!((*g as f64 - w).abs() <= 1e-4 * (1.0 + w.abs()), "{g} vs {w} for {spec:?}");
        }
    }
}

#[test]
fn conv_rejects_wrong_time_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = ConvStackSpec {
        prefix: "enc".into(),
        in_channels: 2,
        time_len: 10,
        layers: vec![ConvLayerSpec {
            out_channels: 3,
            kernel: 3,
            stride: 2,
        }],
        latent_dim: 4,
    };
    let mut store = ParamStore::new();
    spec.register(&mut store, &mut rng, 1.0, 1.0).unwrap();
    let x = Tensor::zeros(vec![2, 9]);
    assert!(conv1d_forward(&store, &x, &spec).is_err());
}

#[test]
fn adam_first_steps_match_formula() {
    let mut store = ParamStore::new();
    store.insert("w", Tensor::vector(vec![0.5, -1.0, 2.0])).unwrap();
    let mut opt = Adam::new(&store, 0.01);
    let grads = [[0.3f64, -0.2, 1.5], [0.1, 0.4, -0.5]];
    let mut p = [0.5f64, -1.0, 2.0];
    let (mut m, mut v) = ([0.0f64; 3], [0.0f64; 3]);
    for (k, g) in grads.iter().enumerate() {
        store.at_mut(0).set_grad(Some(g.iter().map(|&x| x as f32).collect())).unwrap();
        opt.step(&mut store, None);
        let t = (k + 1) as i32;
        for j in 0..3 {
            m[j] = 0.9 * m[j] + 0.1 * g[j];
            v[j] = 0.999 * v[j] + 0.001 * g[j] * g[j];
            let mh = m[j] / (1.0 - 0.9f64.powi(t));
            let vh = v[j] / (1.0 - 0.999f64.powi(t));
            p[j] -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
    }
    for (a, b) in store.at(0).data().iter().zip(p) {
        assert!((*a as f64 - b).abs() < 1e-6);
    }
}

#[test]
fn frozen_parameters_do_not_move() {
    let mut store = ParamStore::new();
    store.insert("a", Tensor::vector(vec![1.0])).unwrap();
    store.insert("b", Tensor::vector(vec![1.0])).unwrap();
    let mut opt = Adam::new(&store, 0.1);
    store.at_mut(0).set_grad(Some(vec![1.0])).unwrap();
    store.at_mut(1).set_grad(Some(vec![1.0])).unwrap();
    opt.step(&mut store, Some(&[false, true]));
    assert_eq!(store.at(0).data(), &[1.0]);
    assert!(store.at(1).data()[0] < 1.0);
}

proptest! {
    #[test]
    fn gaussian_log_prob_matches_density(
        mean in prop::collection::vec(-2.0f32..2.0, 1..8),
        ls in -1.5f32..0.5,
        shift in -1.0f32..1.0,
    ) {
        let n = mean.len();
        let head = GaussianPolicyHead::new(Tensor::vector(mean.clone()), Tensor::vector(vec![ls; n])).unwrap();
        let a: Vec<f32> = mean.iter().map(|m| m + shift).collect();
        let got = gaussian_log_prob(&head, &a).unwrap() as f64;
        let sigma = (ls as f64).exp();
        let want: f64 = (0..n)
            .map(|_| {
                let z = shift as f64 / sigma;
                (-(z * z) / 2.0).exp().ln() - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
            })
            .sum();
        prop_assert!((got - want).abs() < 1e-4 * (1.0 + want.abs()));
    }

    #[test]
    fn conv_output_is_finite(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng);
        let mut store = ParamStore::new();
        spec.register(&mut store, &mut rng, 1.0, 1.0).unwrap();
        let x = Tensor::new(
            vec![spec.in_channels, spec.time_len],
            (0..spec.in_channels * spec.time_len).map(|_| rng.random_range(-5.0..5.0)).collect(),
        ).unwrap();
        let y = conv1d_forward(&store, &x, &spec).unwrap();
        prop_assert_eq!(y.len(), spec.latent_dim);
        prop_assert!(y.iter().all(|v| v.is_finite()));
    }
}
