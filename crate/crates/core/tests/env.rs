mod common;

use std::sync::Arc;

use proptest::prelude::*;
use quadfault::config::RunConfig;
use quadfault::dynamics::{leg_forward_kinematics, leg_jacobian, RobotModel, RobotState};
use quadfault::env::{compute_reward, Env, EnvSettings, RewardWeights, VecEnv, OBS_DIM, PRIV_DIM_FF, PRIV_DIM_NO_FF};
use quadfault::fault::{sample_fault, FaultConfig, FaultMode};
use quadfault::terrain::{TerrainField, TerrainSelect};
use quadfault::ExecMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn settings(mode: FaultMode, t_min: f64, t_max: f64, trace: bool) -> Arc<EnvSettings> {
    let run = RunConfig::default();
    Arc::new(EnvSettings {
        env: run.env.clone(),
        robot: run.robot.clone(),
        contact: run.contact.clone(),
        fault: FaultConfig {
            t_min,
            t_max,
            ..FaultConfig::default()
        },
        fault_mode: mode,
        with_flag: true,
        run_seed: 17,
        post_fault_horizon: None,
        trace,
    })
}

fn random_state(rng: &mut ChaCha8Rng) -> RobotState {
    let mut s = RobotState::standing(&RobotModel::default(), 0.0, 0.0, 0.3);
    let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    s.base_quat = q.map(|v| v / n);
    s.base_lin_vel = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
    s.base_ang_vel = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
    s.q = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
    s.dq = std::array::from_fn(|_| rng.random_range(-20.0..20.0));
    s
}

#[test]
fn reward_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = RewardWeights::default();
    for _ in 0..1000 {
        let prev = random_state(&mut rng);
        let cur = random_state(&mut rng);
        let a: [f64; 12] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let ap: [f64; 12] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let tau: [f64; 12] = std::array::from_fn(|_| rng.random_range(-33.5..33.5));
        let term = rng.random_bool(0.2);
        let (got, terms) = compute_reward(&prev, &cur, &a, &ap, &tau, term, &w, 0.5, 0.02);
        let want = common::reward_oracle(&prev, &cur, &a, &ap, &tau, term, 0.5, 0.02);
        assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
        assert!((terms.total() - got).abs() < 1e-12);
    }
}

#[test]
fn reward_examples() {
    let m = RobotModel::default();
    let mut s = RobotState::standing(&m, 0.0, 0.0, 0.3);
    s.base_lin_vel = [0.5, 0.0, 0.0];
    let z = [0.0; 12];
    let (r, _) = compute_reward(&s, &s, &z, &z, &z, false, &RewardWeights::default(), 0.5, 0.02);
    assert!((r - 1.0).abs() < 1e-12);
    s.base_lin_vel = [0.0; 3];
    let (r, _) = compute_reward(&s, &s, &z, &z, &z, true, &RewardWeights::default(), 0.5, 0.02);
    assert!((r - ((-1.0f64).exp() - 10.0)).abs() < 1e-12);
}

#[test]
fn forward_kinematics_and_jacobian_match_oracle() {
    let m = RobotModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let leg = rng.random_range(0..4);
        let q: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.5..2.5));
        let p = leg_forward_kinematics(&m, leg, q);
        let o = common::fk_oracle(&m, leg, q);
        for k in 0..3 {
            assert!((p[k] - o[k]).abs() < 1e-12);
        }
        let j = leg_jacobian(&m, leg, q);
        let h = 1e-6;
        for c in 0..3 {
            let (mut qp, mut qm) = (q, q);
            qp[c] += h;
            qm[c] -= h;
            let (fp, fm) = (common::fk_oracle(&m, leg, qp), common::fk_oracle(&m, leg, qm));
            for r in 0..3 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((j[(r, c)] - fd).abs() < 1e-7, "leg {leg} q {q:?} ({r},{c})");
            }
        }
    }
}

#[test]
fn hardlock_keeps_joint_in_range() {
    let s = settings(FaultMode::Hardlock, 0.02, 0.2, false);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut triggered = 0;
    for e in 0..200 {
        let mut env = Env::new(e, Arc::clone(&s), TerrainField::flat());
        for _ in 0..40 {
            let a: [f64; 12] = std::array::from_fn(|_| rng.random_range(-4.0..4.0));
            let r = env.step(&a).unwrap();
            if let Some(allowed) = env.fault().theta_allowed() {
                let j = env.fault().j_f().unwrap() - 1;
                let q = env.state().q[j];
                assert!(q >= allowed.lo - 1e-9 && q <= allowed.hi + 1e-9);
            }
            if r.done() {
                break;
            }
        }
        triggered += env.fault().triggered() as usize;
    }
    assert!(triggered > 150);
}

#[test]
fn observation_shapes() {
    let s = settings(FaultMode::Hardlock, 2.0, 10.0, false);
    let env = Env::new(0, s, TerrainField::flat());
    assert_eq!(env.observation().len(), OBS_DIM);
    assert_eq!(env.privileged().len(), PRIV_DIM_FF);
    assert_eq!(PRIV_DIM_FF, PRIV_DIM_NO_FF + 13);
}

#[test]
fn flag_switches_on_at_fault_time() {
    let s = settings(FaultMode::Hardlock, 0.3, 0.3, false);
    let mut env = Env::new(3, s, TerrainField::flat());
    let mut first = None;
    for _ in 0..30 {
        let r = env.step(&[0.0; 12]).unwrap();
        if r.info.f_t != 0 && first.is_none() {
            first = Some(r.info.tick);
            assert_eq!(Some(r.info.f_t), env.fault().j_f());
        }
    }
    // Trigger is checked before the step at t = 0.3 s, tick 15.
    assert_eq!(first, Some(16));
}

#[test]
fn vec_env_sequential_equals_parallel() {
    let run = RunConfig::default();
    let s = Arc::new(quadfault::trainer::env_settings(&run));
    let mut a = VecEnv::new(Arc::clone(&s), 8, TerrainSelect::All, &run.terrain_params, ExecMode::Sequential);
    let mut b = VecEnv::new(s, 8, TerrainSelect::All, &run.terrain_params, ExecMode::Parallel);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..120 {
        let acts: Vec<[f64; 12]> = (0..8).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let ra = a.step(&acts).unwrap();
        let rb = b.step(&acts).unwrap();
        assert_eq!(ra, rb);
    }
}

#[test]
fn trace_records_every_tick() {
    let s = settings(FaultMode::Hardlock, 0.1, 0.1, true);
    let mut env = Env::new(0, s, TerrainField::flat());
    for _ in 0..20 {
        env.step(&[0.0; 12]).unwrap();
    }
    let tr = env.trace();
    assert_eq!(tr.len(), 20);
    assert!(tr.windows(2).all(|w| w[1].tick == w[0].tick + 1));
    assert!(tr.last().unwrap().locked_joint.is_some());
    assert!(tr[0].locked_joint.is_none());
}

#[test]
fn nonfinite_action_is_rejected() {
    let s = settings(FaultMode::Hardlock, 2.0, 10.0, false);
    let mut env = Env::new(0, s, TerrainField::flat());
    let mut a = [0.0; 12];
    a[4] = f64::NAN;
    assert!(env.step(&a).is_err());
}

proptest! {
    #[test]
    fn softlock_clip_stays_in_allowed(seed in 0u64..10_000, scale in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = RobotModel::default();
        let mut f = sample_fault(&mut rng, &FaultConfig::default());
        let lim = m.joint_limits();
        let q: [f64; 12] = std::array::from_fn(|j| rng.random_range(lim[j].lo..=lim[j].hi));
        f.maybe_trigger(&q, 20.0, &m);
        let target: [f64; 12] = std::array::from_fn(|_| rng.random_range(-scale..scale));
        let out = f.softlock_clip(&target);
        let j = f.j_f().unwrap() - 1;
        let a = f.theta_allowed().unwrap();
        prop_assert!(out[j] >= a.lo && out[j] <= a.hi);
        for k in (0..12).filter(|&k| k != j) {
            prop_assert_eq!(out[k], target[k]);
        }
    }

    #[test]
    fn env_replay_is_identical(index in 0usize..64, ticks in 1usize..80) {
        let s = settings(FaultMode::Hardlock, 0.2, 1.0, false);
        let run = |s: Arc<EnvSettings>| {
            let mut env = Env::new(index, s, TerrainField::flat());
            let mut out = Vec::new();
            for k in 0..ticks {
                let a = [((k as f64) * 0.3).sin(); 12];
                out.push(env.step(&a).unwrap());
            }
            out
        };
        prop_assert_eq!(run(Arc::clone(&s)), run(s));
    }
}
