//! Quick invariant suite behind `quadfault selftest`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dynamics::{pd_torque, step, PdGains, RobotModel, RobotState, StepContext};
use crate::env::{Env, EnvSettings, HISTORY_LEN, OBS_DIM, PRIV_DIM_FF};
use crate::fault::{sample_fault, FaultConfig, FaultMode};
use crate::nn::gradcheck::{check_op, OPS};
use crate::terrain::TerrainField;
use crate::trainer::{Agent, AgentInputs, AgentShape, ScheduleConfig, STUDENT_PREFIX, TEACHER_PREFIX};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn gradients() -> CheckResult {
    let mut worst = (0.0f64, "");
    for op in OPS {
        for seed in 0..20 {
            match check_op(op, seed, 1e-3) {
                Ok(r) if r.max_rel_err > worst.0 => worst = (r.max_rel_err, op),
                Ok(_) => {}
                Err(e) => return result("gradients", false, format!("{op}: {e}")),
            }
        }
    }
    result(
        "gradients",
        worst.0 < 1e-3,
        format!("{} ops x 20 seeds, worst rel err {:.2e} ({})", OPS.len(), worst.0, worst.1),
    )
}

fn fusion_gating() -> CheckResult {
    let model = RobotModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shape = AgentShape {
        priv_dim: PRIV_DIM_FF,
        with_student: true,
    };
    let agent = match Agent::new(shape, &model, -1.0, &mut rng) {
        Ok(a) => a,
        Err(e) => return result("fusion_gating", false, e.to_string()),
    };
    let mut x = AgentInputs::with_capacity(4, PRIV_DIM_FF, true);
    for _ in 0..4 {
        let obs: Vec<f32> = (0..OBS_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e: Vec<f32> = (0..PRIV_DIM_FF).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f32> = (0..HISTORY_LEN * OBS_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        x.push(&obs, &e, Some(&h));
    }
    let mut ok = true;
    for (alpha, prefix) in [(0.0, STUDENT_PREFIX), (1.0, TEACHER_PREFIX)] {
        let mut other = agent.clone();
        other.perturb(prefix, &mut rng);
        let a = agent.act(&x, alpha, Default::default());
        let b = other.act(&x, alpha, Default::default());
        ok &= matches!((a, b), (Ok(a), Ok(b)) if a.0.iter().zip(&b.0).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    result("fusion_gating", ok, "alpha=0 ignores student, alpha=1 ignores teacher".into())
}

fn schedule() -> CheckResult {
    let s = ScheduleConfig::default();
    let ok = s.alpha(0.0) == 0.0
        && s.beta(0.0) == 0.0
        && s.alpha(0.5) == 1.0
        && (s.alpha(0.3) - 0.5).abs() < 1e-12
        && (s.beta(0.3) - 0.55).abs() < 1e-12;
    result("schedule", ok, "alpha/beta endpoints and midpoint".into())
}

fn fault_sampling() -> CheckResult {
    let cfg = FaultConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let mut counts = [0usize; 12];
    let mut tol_sum = 0.0;
    for _ in 0..n {
        let f = sample_fault(&mut rng, &cfg);
        counts[f.j_f().unwrap_or(1) - 1] += 1;
        tol_sum += f.theta_tol().unwrap_or(0.0);
    }
    let max_dev = counts
        .iter()
        .map(|&c| (c as f64 / n as f64 - 1.0 / 12.0).abs())
        .fold(0.0, f64::max);
    let expected = cfg.theta_max * (2.0 / std::f64::consts::PI).sqrt();
    let mean_err = (tol_sum / n as f64 - expected).abs() / expected;
    result(
        "fault_sampling",
        max_dev < 0.01 && mean_err < 0.02,
        format!("joint freq dev {max_dev:.4}, tolerance mean rel err {mean_err:.4}"),
    )
}

fn lock_containment() -> CheckResult {
    let run = RunConfig::default();
    let settings = Arc::new(EnvSettings {
        env: run.env.clone(),
        robot: run.robot.clone(),
        contact: run.contact.clone(),
        fault: FaultConfig {
            t_min: 0.05,
            t_max: 0.5,
            ..FaultConfig::default()
        },
        fault_mode: FaultMode::Hardlock,
        with_flag: true,
        run_seed: 3,
        post_fault_horizon: None,
        trace: false,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for e in 0..20 {
        let mut env = Env::new(e, Arc::clone(&settings), TerrainField::flat());
        for _ in 0..60 {
            let a: [f64; 12] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
            match env.step(&a) {
                Ok(r) if r.done() => break,
                Ok(_) => {}
                Err(err) => return result("lock_containment", false, err.to_string()),
            }
            if let (Some(j), Some(allowed)) = (env.fault().j_f(), env.fault().theta_allowed()) {
                let q = env.state().q[j - 1];
                worst = worst.max(allowed.lo - q).max(q - allowed.hi);
            }
        }
    }
    result(
        "lock_containment",
        worst <= 1e-9,
        format!("worst excursion {worst:.3e} rad over 20 episodes"),
    )
}

fn dynamics() -> CheckResult {
    let model = RobotModel::default();
    let limits = model.joint_limits();
    let ctx = StepContext {
        dt: 0.005,
        contact: Default::default(),
        limits: &limits,
        payload: 0.0,
        env_id: 0,
    };
    let gains = PdGains::uniform(20.0, 0.5);
    let mut s = RobotState::standing(&model, 0.0, 0.0, 0.3);
    let mut replay = s.clone();
    let mut norm_err = 0.0f64;
    for _ in 0..400 {
        let tau = pd_torque(&model.q_default(), &s, &gains, &[1.0; 12], model.torque_limit);
        s = match step(&s, &model, &tau, &TerrainField::flat(), &ctx) {
            Ok(s) => s,
            Err(e) => return result("dynamics", false, e.to_string()),
        };
        norm_err = norm_err.max((s.quat_norm() - 1.0).abs());
    }
    for _ in 0..400 {
        let tau = pd_torque(&model.q_default(), &replay, &gains, &[1.0; 12], model.torque_limit);
        replay = match step(&replay, &model, &tau, &TerrainField::flat(), &ctx) {
            Ok(s) => s,
            Err(e) => return result("dynamics", false, e.to_string()),
        };
    }
    result(
        "dynamics",
        norm_err < 1e-6 && s == replay && s.is_finite(),
        format!("quaternion norm err {norm_err:.1e}, replay identical: {}", s == replay),
    )
}

fn checkpoint_round_trip() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shape = AgentShape {
        priv_dim: PRIV_DIM_FF,
        with_student: false,
    };
    let agent = match Agent::new(shape, &RobotModel::default(), -1.0, &mut rng) {
        Ok(a) => a,
        Err(e) => return result("checkpoint", false, e.to_string()),
    };
    let ck = Checkpoint {
        config_hash: [3; 32],
        progress: 0.25,
        header: serde_json::json!({"iteration": 1}),
        params: agent.store,
        moments: None,
    };
    let ok = ck
        .encode()
        .and_then(|b| Ok((Checkpoint::<serde_json::Value>::decode(&b)?.encode()?, b)))
        .map(|(again, first)| again == first)
        .unwrap_or(false);
    result("checkpoint", ok, "encode -> decode -> encode is byte-identical".into())
}

/// Runs every check; the suite passes when all results pass.
pub fn run_selftest() -> Vec<CheckResult> {
    vec![
        gradients(),
        fusion_gating(),
        schedule(),
        fault_sampling(),
        lock_containment(),
        dynamics(),
        checkpoint_round_trip(),
    ]
}
