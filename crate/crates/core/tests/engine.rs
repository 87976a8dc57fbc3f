use std::collections::HashMap;

use proptest::prelude::*;

use contention_lab::ccpolicy::{PolicyConfig, PolicySpec};
use contention_lab::engine::{is_serializable, run, run_replications, run_with_artifacts, Mode, SimConfig, TraceKind};
use contention_lab::loadctl::LoadControlConfig;
use contention_lab::workload::WorkloadSpec;

fn closed(k: u32, d: u64, mpl: u32) -> SimConfig {
    let mut cfg = SimConfig::new(WorkloadSpec::uniform(k, d, 1.0), Mode::Closed { mpl });
    cfg.horizon = 3_000.0;
    cfg.warmup = 300.0;
    cfg
}

fn policy(name: &str) -> PolicyConfig {
    PolicyConfig::from_spec(&PolicySpec { name: name.into(), params: Default::default() }).unwrap()
}

#[test]
fn locks_are_released_only_at_commit_or_abort() {
    for name in ["blocking", "wound_wait", "wdl", "cautious_waiting"] {
        let mut cfg = closed(6, 60, 8);
        cfg.policy = policy(name);
        cfg.horizon = 500.0;
        cfg.warmup = 0.0;
        cfg.record_history = true;
        let (_, art) = run_with_artifacts(&cfg).unwrap();
        assert!(!art.trace.is_empty());
        let mut last: HashMap<u64, TraceKind> = HashMap::new();
        let mut held: HashMap<u64, i64> = HashMap::new();
        for ev in &art.trace {
            let prev = last.insert(ev.txn, ev.kind);
            match ev.kind {
                TraceKind::Release => {
                    assert!(
                        matches!(prev, Some(TraceKind::Commit | TraceKind::Abort | TraceKind::Release)),
                        "{name}: txn {} released after {prev:?} at t={}",
                        ev.txn,
                        ev.time
                    );
                    *held.entry(ev.txn).or_default() -= 1;
                }
                TraceKind::Grant => *held.entry(ev.txn).or_default() += 1,
                TraceKind::Commit | TraceKind::Abort | TraceKind::Block => {}
            }
            assert!(held.get(&ev.txn).copied().unwrap_or(0) >= 0, "{name}: txn {} released more than granted", ev.txn);
        }
    }
}

#[test]
fn closed_mode_obeys_littles_law() {
    let cfg = closed(8, 1000, 12);
    let r = run(&cfg).unwrap();
    assert!((r.mean_executing - 12.0).abs() < 1e-9);
    let little = r.throughput * r.response_time;
    assert!((little - 12.0).abs() / 12.0 < 0.02, "X*R = {little}");
}

#[test]
fn open_mode_obeys_littles_law() {
    let mut cfg = SimConfig::new(WorkloadSpec::uniform(4, 500, 1.0), Mode::Open { lambda: 0.8 });
    cfg.horizon = 20_000.0;
    cfg.warmup = 1_000.0;
    let r = run(&cfg).unwrap();
    assert!((r.throughput - 0.8).abs() / 0.8 < 0.03, "X = {}", r.throughput);
    let little = r.throughput * r.response_time;
    assert!((little - r.mean_in_system).abs() / r.mean_in_system < 0.03, "X*R = {little}, N = {}", r.mean_in_system);
}

#[test]
fn runs_are_deterministic_per_seed() {
    let mut cfg = closed(8, 400, 10);
    cfg.policy = policy("wound_wait");
    cfg.load_control = LoadControlConfig::half_and_half();
    assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    let reps = run_replications(&cfg, &[3, 4]).unwrap();
    assert_eq!(reps[0], run(&SimConfig { seed: 3, ..cfg.clone() }).unwrap());
    assert_ne!(reps[0].committed, 0);
    assert_ne!(reps[0], reps[1]);
}

#[test]
fn deadlock_rate_falls_with_database_size_squared() {
    let rate = |d: u64| {
        let mut cfg = closed(8, d, 8);
        cfg.horizon = 40_000.0;
        let reps = run_replications(&cfg, &[1, 2, 3, 4]).unwrap();
        let dl: u64 = reps.iter().map(|r| r.deadlocks_2way).sum();
        let c: u64 = reps.iter().map(|r| r.committed).sum();
        dl as f64 / c as f64
    };
    let ratio = rate(400) / rate(800);
    assert!((2.5..=6.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn no_contention_without_sharing() {
    let r = run(&closed(5, 1_000_000, 1)).unwrap();
    assert_eq!((r.conflicts, r.deadlocks), (0, 0));
    assert_eq!(r.beta, 0.0);
    // One txn at a time: 5 lock steps and the commit step.
    assert!((r.throughput - 1.0 / 6.0).abs() < 1e-3, "{}", r.throughput);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = closed(4, 100, 1);
    cfg.warmup = cfg.horizon;
    assert!(run(&cfg).is_err());
    assert!(run(&SimConfig::new(WorkloadSpec::uniform(4, 100, 1.0), Mode::Closed { mpl: 0 })).is_err());
    assert!(run(&SimConfig::new(WorkloadSpec::uniform(4, 100, 1.0), Mode::Open { lambda: -1.0 })).is_err());
    assert!(run(&SimConfig::new(WorkloadSpec::uniform(4, 0, 1.0), Mode::Closed { mpl: 2 })).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_policy_yields_serializable_histories(
        which in 0usize..contention_lab::ccpolicy::POLICY_NAMES.len(),
        k in 1u32..6,
        d in 8u64..60,
        mpl in 1u32..8,
        seed in any::<u64>(),
    ) {
        let mut cfg = closed(k, d, mpl);
        cfg.policy = policy(contention_lab::ccpolicy::POLICY_NAMES[which]);
        cfg.horizon = 150.0;
        cfg.warmup = 0.0;
        cfg.seed = seed;
        cfg.record_history = true;
        cfg.check_invariants = true;
        let (r, art) = run_with_artifacts(&cfg).unwrap();
        prop_assert!(is_serializable(&art.history));
        prop_assert!((0.0..=1.0).contains(&r.beta));
        prop_assert!((0.0..=1.0).contains(&r.p_c));
        prop_assert!(r.conflicts <= r.requests);
    }

    #[test]
    fn conflict_ratio_and_rho_agree(mpl in 2u32..16, d in 50u64..500, seed in any::<u64>()) {
        let mut cfg = closed(6, d, mpl);
        cfg.horizon = 400.0;
        cfg.warmup = 40.0;
        cfg.seed = seed;
        let r = run(&cfg).unwrap();
        prop_assert!(r.conflict_ratio >= 1.0);
        prop_assert!((r.rho - (1.0 - 1.0 / r.conflict_ratio)).abs() <= 1e-12);
    }
}
