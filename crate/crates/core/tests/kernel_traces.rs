use std::collections::{BTreeMap, BTreeSet};

use healsim_core::fault_model::{classify_scenario, scenario_frequencies, ScenarioClass};
use healsim_core::healing::{AgentEventKind, AgentSet};
use healsim_core::simkernel::{
    self, build_fault_plan, EpochContext, EpochObserver, FaultPlan, FaultProfile, FaultProfileSpec,
    MonitoringMode, PairDetector, SimConfig, Simulation,
};
use healsim_core::{Epoch, NodeId};
use proptest::prelude::*;

fn plan(profile: FaultProfile, scale: f64, n: usize, runtime: Epoch, seed: u64) -> FaultPlan {
    build_fault_plan(
        &FaultProfileSpec {
            profile,
            scale,
            runtime,
        },
        n,
        seed,
    )
    .unwrap()
}

struct ViewChecker {
    capacity: usize,
    epochs: usize,
}

impl EpochObserver for ViewChecker {
    fn on_epoch(&mut self, ctx: &EpochContext<'_>) {
        self.epochs += 1;
        for (owner, v) in ctx.views.iter().enumerate() {
            assert!(v.len() <= self.capacity);
            let mut seen = BTreeSet::new();
            for d in v.entries() {
                assert_ne!(d.node as usize, owner, "self descriptor in view");
                assert!(seen.insert(d.node), "duplicate descriptor for {}", d.node);
                assert!(d.created_at <= ctx.epoch, "descriptor from the future");
                assert!((d.node as usize) < ctx.n());
            }
        }
    }
}

#[test]
fn views_stay_bounded_and_duplicate_free() {
    let mut cfg = SimConfig::new(80, 300, 40, 5);
    cfg.gossip.view_capacity = 20;
    cfg.gossip.swap = 9;
    let p = plan(FaultProfile::P3, 0.5, 80, 300, 5);
    let mut checker = ViewChecker {
        capacity: 20,
        epochs: 0,
    };
    Simulation::new(&cfg, &p).unwrap().run(&mut [&mut checker]);
    assert_eq!(checker.epochs, 300);
}

#[test]
fn identical_inputs_give_identical_traces() {
    let cfg = SimConfig::new(60, 200, 30, 99).with_thresholds(vec![5, 20, 60]);
    let p = plan(FaultProfile::P2, 0.5, 60, 200, 99);
    let a = simkernel::run(&cfg, &p).unwrap();
    let b = simkernel::run(&cfg, &p).unwrap();
    assert_eq!(a, b);

    let other = SimConfig::new(60, 200, 30, 100).with_thresholds(vec![5, 20, 60]);
    assert_ne!(simkernel::run(&other, &p).unwrap().digest, a.digest);
}

#[test]
fn trace_classes_match_pair_count_formulas() {
    let n = 120;
    for profile in FaultProfile::ALL {
        for scale in [0.2, 0.5, 0.8] {
            let cfg = SimConfig::new(n, 240, 40, 3).with_thresholds(vec![10]);
            let p = plan(profile, scale, n, 240, 3);
            let trace = simkernel::run(&cfg, &p).unwrap();
            let mut counts = [0u64; 6];
            for pair in &trace.records[0] {
                counts[classify_scenario(&pair.record).class() as usize] += 1;
            }
            let want = scenario_frequencies(n as u64, p.m as u64, p.k as u64).unwrap();
            assert_eq!(counts, want.counts, "{} at {scale}", profile.as_str());
        }
    }
}

/// The 50% setting of the four-batch profile asks for 150 faulty nodes in
/// four equal batches, which no plan can satisfy at n = 300.
#[test]
#[ignore = "150 faulty nodes cannot be split into 4 equal batches"]
fn trace_classes_four_batches_at_half_scale_n300() {
    let p = build_fault_plan(
        &FaultProfileSpec {
            profile: FaultProfile::P3,
            scale: 0.5,
            runtime: 800,
        },
        300,
        1,
    )
    .expect("fault plan for P3 at 50% with 300 nodes");
    let cfg = SimConfig::new(300, 800, 100, 1).with_thresholds(vec![25]);
    let trace = simkernel::run(&cfg, &p).unwrap();
    let mut counts = [0u64; 6];
    for pair in &trace.records[0] {
        counts[classify_scenario(&pair.record).class() as usize] += 1;
    }
    assert_eq!(
        counts,
        scenario_frequencies(300, p.m as u64, p.k as u64)
            .unwrap()
            .counts
    );
}

#[test]
fn healthy_trace_records_only_first_class() {
    let cfg = SimConfig::new(40, 150, 20, 8);
    let trace = simkernel::run(&cfg, &FaultPlan::healthy(40)).unwrap();
    assert_eq!(trace.records[0].len(), 40 * 39);
    assert!(trace.records[0]
        .iter()
        .all(|p| classify_scenario(&p.record).class() == ScenarioClass::S1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn detection_is_monotone_in_threshold(seed in any::<u64>(), profile in 0usize..3) {
        let (n, runtime) = (50, 240);
        let thresholds = vec![2, 5, 10, 30, 80];
        let cfg = SimConfig::new(n, runtime, 30, seed).with_thresholds(thresholds.clone());
        let p = plan(FaultProfile::ALL[profile], 0.4, n, runtime, seed);
        let mut det = PairDetector::new(n, cfg.monitoring_since(), runtime, &thresholds);
        Simulation::new(&cfg, &p).unwrap().run(&mut [&mut det]);
        for a in 0..n as NodeId {
            for b in 0..n as NodeId {
                if a == b {
                    continue;
                }
                for i in 1..thresholds.len() {
                    let (lo, hi) = (det.detection(a, b, i - 1), det.detection(a, b, i));
                    if let Some(h) = hi {
                        prop_assert!(lo.is_some_and(|l| l <= h), "{a}->{b}: {lo:?} then {hi:?}");
                    }
                }
                for i in 0..thresholds.len() {
                    prop_assert!(det.record(a, b, i).validate().is_ok());
                }
            }
        }
    }
}

#[test]
fn agents_on_their_first_host_detect_like_that_host() {
    let (n, runtime, since) = (80, 320, 40);
    let thresholds = [4, 12, 40];
    for seed in [1u64, 2, 3] {
        let cfg = SimConfig::new(n, runtime, since, seed).with_thresholds(thresholds.to_vec());
        let p = plan(FaultProfile::P2, 0.5, n, runtime, seed);
        let mut det = PairDetector::new(n, since, runtime, &thresholds);
        let mut sets: Vec<AgentSet> = thresholds
            .iter()
            .map(|&t| AgentSet::new(n, t, since, seed))
            .collect();
        {
            let mut obs: Vec<&mut dyn EpochObserver> = vec![&mut det];
            obs.extend(sets.iter_mut().map(|s| s as &mut dyn EpochObserver));
            Simulation::new(&cfg, &p).unwrap().run(&mut obs);
        }
        let mut compared = 0;
        for (ti, set) in sets.iter().enumerate() {
            let mut migrations: BTreeMap<NodeId, Vec<(Epoch, NodeId)>> = BTreeMap::new();
            let mut detected: BTreeMap<NodeId, Epoch> = BTreeMap::new();
            let mut returned = BTreeSet::new();
            for e in set.events() {
                match e.kind {
                    AgentEventKind::Migrated { host } => migrations
                        .entry(e.parent)
                        .or_default()
                        .push((e.epoch, host)),
                    AgentEventKind::Detected { .. } => {
                        detected.entry(e.parent).or_insert(e.epoch);
                    }
                    AgentEventKind::Returned => {
                        returned.insert(e.parent);
                    }
                    _ => {}
                }
            }
            for (parent, moves) in &migrations {
                if moves.len() != 1 || moves[0].0 != since || returned.contains(parent) {
                    continue;
                }
                let host = moves[0].1;
                assert_eq!(
                    detected.get(parent).copied(),
                    det.detection(host, *parent, ti),
                    "seed {seed}, t={}, parent {parent} on host {host}",
                    thresholds[ti]
                );
                compared += 1;
            }
        }
        assert!(compared > n, "too few comparable agents: {compared}");
    }
}

#[test]
fn agent_mode_trace_has_one_record_per_node() {
    let mut cfg = SimConfig::new(60, 200, 30, 4).with_thresholds(vec![10, 40]);
    cfg.monitoring = MonitoringMode::AgentPerNode;
    let p = plan(FaultProfile::P1, 0.5, 60, 200, 4);
    let trace = simkernel::run(&cfg, &p).unwrap();
    for recs in &trace.records {
        assert_eq!(recs.len(), 60);
        for r in recs {
            assert!(r.record.validate().is_ok());
        }
    }
    assert!(!trace.events.is_empty());
}
