mod common;

use std::io::BufReader;

use quadfault::config::{AgentVariant, RunConfig};
use quadfault::eval::{
    export_trace, lower_percentile, read_records, read_report, read_trace_jsonl, run_eval, survival_stats, velocity_stats,
    worst_case_joint_distribution, write_eval_dir, write_trace_jsonl, EvalConfig, POST_FAULT_TICKS,
};
use quadfault::fault::{FaultMode, FaultSpec, JointLock};
use quadfault::rng::rng_for;
use quadfault::terrain::{TerrainKind, TerrainSelect};
use quadfault::trainer::{agent_shape, Agent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [TerrainKind; 3] = [
    TerrainKind::SmoothSlope,
    TerrainKind::RoughSlope,
    TerrainKind::DiscreteObstacles,
];

fn agent_for(variant: AgentVariant, seed: u64) -> (Agent, RunConfig) {
    let mut run = RunConfig::default();
    run.variant = variant;
    let mut rng = rng_for(&[seed]);
    let agent = Agent::new(agent_shape(&run), &run.robot, -1.0, &mut rng).unwrap();
    (agent, run)
}

fn small_eval(trace: bool) -> EvalConfig {
    EvalConfig {
        episodes_per_terrain: 5,
        terrain: TerrainSelect::All,
        seed: 3,
        trace,
        batch: 3,
        ..EvalConfig::default()
    }
}

#[test]
fn percentiles_match_sorting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let recs: Vec<_> = (0..n).map(|i| common::synthetic_record(&mut rng, i, KINDS[i % 3])).collect();
        let s = survival_stats(&recs).unwrap();
        let fr: Vec<f64> = recs.iter().map(|r| (r.ticks_after as f64 / 1000.0).min(1.0)).collect();
        assert_eq!(s.p25, common::percentile_oracle(&fr, 0.25) * 100.0);
        assert_eq!(s.p50, common::percentile_oracle(&fr, 0.5) * 100.0);
        let avg = fr.iter().sum::<f64>() / n as f64 * 100.0;
        assert!((s.average - avg).abs() < 1e-9);
        assert_eq!(s.episodes, n);
    }
}

#[test]
fn lower_percentile_examples() {
    assert_eq!(lower_percentile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.0);
    assert_eq!(lower_percentile(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.0);
    assert_eq!(lower_percentile(&[5.0], 0.25), 5.0);
    assert_eq!(lower_percentile(&[0.0, 10.0, 20.0, 30.0, 40.0], 0.5), 20.0);
}

#[test]
fn velocity_means_skip_missing() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let mut a = common::synthetic_record(&mut rng, 0, TerrainKind::RoughSlope);
    let mut b = a.clone();
    a.velocity_before = Some(0.2);
    a.velocity_after = None;
    b.velocity_before = Some(0.4);
    b.velocity_after = Some(0.1);
    let v = velocity_stats(&[a, b]).unwrap();
    assert!((v.before.unwrap() - 0.3).abs() < 1e-15);
    assert_eq!(v.after, Some(0.1));
}

#[test]
fn histogram_counts_early_failures_by_joint() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut recs = Vec::new();
    for (joint, ticks_after, terminated) in [(1, 10, true), (1, 149, true), (5, 149, true), (12, 150, true), (7, 20, false)] {
        let mut r = common::synthetic_record(&mut rng, recs.len(), TerrainKind::SmoothSlope);
        r.fault = FaultSpec {
            t_f: 3.0,
            locks: vec![JointLock {
                joint,
                theta_tol: 0.1,
                center: None,
                allowed: None,
            }],
            f_t: joint,
        };
        r.ticks_after = ticks_after;
        r.ticks = r.fault_tick + ticks_after;
        r.terminated = terminated;
        recs.push(r);
    }
    let h = worst_case_joint_distribution(&recs, 3.0, 0.02);
    assert_eq!(h.counts[0], [2, 0, 0]);
    assert_eq!(h.counts[1], [0, 1, 0]);
    assert_eq!(h.total(), 3);
    assert_eq!(h.by_type(), [2, 1, 0]);
    assert!(h.to_csv().starts_with("leg,joint,count\n"));
}

#[test]
fn eval_records_are_bounded_and_reproducible() {
    let (agent, run) = agent_for(AgentVariant::FailureStudentJt, 1);
    let cfg = small_eval(false);
    let a = run_eval(&agent, &run, &cfg).unwrap();
    assert_eq!(a.len(), 15);
    assert!(a.iter().all(|r| r.ticks_after <= POST_FAULT_TICKS));
    assert!(a.iter().all(|r| r.ticks <= r.fault_tick + POST_FAULT_TICKS));
    assert_eq!(a, run_eval(&agent, &run, &cfg).unwrap());
    let mut seq = cfg.clone();
    seq.exec = quadfault::ExecMode::Sequential;
    seq.batch = 15;
    assert_eq!(a, run_eval(&agent, &run, &seq).unwrap());
}

#[test]
fn agents_see_matched_faults() {
    let (a, run_a) = agent_for(AgentVariant::FailureStudentJt, 1);
    let (b, run_b) = agent_for(AgentVariant::BaseStudentJt, 2);
    let cfg = small_eval(false);
    let ra = run_eval(&a, &run_a, &cfg).unwrap();
    let rb = run_eval(&b, &run_b, &cfg).unwrap();
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!((x.terrain, x.level, x.fault_tick), (y.terrain, y.level, y.fault_tick));
        assert_eq!(x.fault.j_f(), y.fault.j_f());
        assert_eq!(x.fault.theta_tol(), y.fault.theta_tol());
    }
}

#[test]
fn none_mode_keeps_reference_fault_time() {
    let (agent, run) = agent_for(AgentVariant::BaseStudentJt, 4);
    let mut cfg = small_eval(false);
    cfg.fault_mode = FaultMode::None;
    let hard = run_eval(&agent, &run, &small_eval(false)).unwrap();
    let none = run_eval(&agent, &run, &cfg).unwrap();
    for (h, n) in hard.iter().zip(&none) {
        assert_eq!(h.fault_tick, n.fault_tick);
        assert!(!n.fault.triggered());
    }
}

#[test]
fn trace_round_trip_and_window() {
    let (agent, run) = agent_for(AgentVariant::FailureTeacher, 5);
    let mut cfg = small_eval(true);
    cfg.terrain = TerrainSelect::Smooth;
    cfg.episodes_per_terrain = 2;
    let recs = run_eval(&agent, &run, &cfg).unwrap();
    let r = &recs[0];
    let full = export_trace(r, None, 0.02).unwrap();
    assert_eq!(full.len() as u32, r.ticks);
    let mut buf = Vec::new();
    write_trace_jsonl(&mut buf, &full).unwrap();
    assert_eq!(read_trace_jsonl(BufReader::new(&buf[..])).unwrap(), full);
    let w = export_trace(r, Some(0.5), 0.02).unwrap();
    assert!(w.iter().all(|t| t.tick as f64 > r.fault_tick as f64 - 25.0));
    assert!(w.len() <= full.len());
    let mut untraced = r.clone();
    untraced.trace = None;
    assert!(export_trace(&untraced, None, 0.02).is_err());
}

#[test]
fn eval_dir_round_trip_and_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let recs: Vec<_> = (0..30).map(|i| common::synthetic_record(&mut rng, i, KINDS[i % 3])).collect();
    let report = write_eval_dir(dir.path(), "FailureEnv[S][JT]", &recs, 0.02).unwrap();
    assert_eq!(read_records(dir.path()).unwrap(), recs);
    assert_eq!(read_report(dir.path()).unwrap(), report);
    assert_eq!(report.agents[0].rows.len(), 4);
    assert_eq!(report.agents[0].pooled().unwrap().survival, survival_stats(&recs).unwrap());

    let empty = tempfile::tempdir().unwrap();
    let report = write_eval_dir(empty.path(), "x", &[], 0.02).unwrap();
    assert!(report.agents[0].rows.is_empty());
    assert!(read_records(empty.path()).unwrap().is_empty());
}
