//! Epoch-driven simulation kernel.
//!
//! The kernel owns the clock, the partial views and node liveness. Each epoch
//! it applies the fault plan, lets every live node initiate one gossip
//! exchange (in a seeded random order) and then hands a read-only snapshot to
//! the registered observers: failure detectors, agents, the aggregation
//! application. Observers never feed back into gossip, so any number of them
//! can watch the same trace.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault_model::{MonitoredPair, PairRecord};
use crate::gossip::{gossip_round, GossipConfig, PartialView};
use crate::healing::{AgentEvent, AgentSet};
use crate::{rng_for, Epoch, NodeId};

/// Runtime the reference fault profiles and thresholds are expressed in.
pub const REFERENCE_RUNTIME: Epoch = 3200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid fault plan: {0}")]
    Plan(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultProfile {
    P1,
    P2,
    P3,
}

impl FaultProfile {
    pub const ALL: [FaultProfile; 3] = [FaultProfile::P1, FaultProfile::P2, FaultProfile::P3];

    pub fn reference_batches(self) -> &'static [Epoch] {
        match self {
            FaultProfile::P1 => &[1600],
            FaultProfile::P2 => &[1332, 2264],
            FaultProfile::P3 => &[1060, 1620, 2180, 2740],
        }
    }

    pub fn batch_count(self) -> usize {
        self.reference_batches().len()
    }

    /// Batch epochs rescaled to `runtime`, rounded to the nearest epoch.
    pub fn batch_epochs(self, runtime: Epoch) -> Vec<Epoch> {
        self.reference_batches()
            .iter()
            .map(|&e| rescale_epoch(e, runtime))
            .collect()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultProfile::P1 => "P1",
            FaultProfile::P2 => "P2",
            FaultProfile::P3 => "P3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "P1" | "p1" | "1" => Some(FaultProfile::P1),
            "P2" | "p2" | "2" => Some(FaultProfile::P2),
            "P3" | "p3" | "3" => Some(FaultProfile::P3),
            _ => None,
        }
    }
}

/// Map an epoch count given on the reference runtime onto `runtime`.
pub fn rescale_epoch(reference: Epoch, runtime: Epoch) -> Epoch {
    let scaled = (reference as f64 * runtime as f64 / REFERENCE_RUNTIME as f64).round() as Epoch;
    scaled.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultProfileSpec {
    pub profile: FaultProfile,
    /// Fraction of nodes that fail over the run.
    pub scale: f64,
    pub runtime: Epoch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub batch_epochs: Vec<Epoch>,
    pub faulty_node_ids: Vec<Vec<NodeId>>,
    #[serde(default)]
    pub recoveries: BTreeMap<NodeId, Epoch>,
}

impl FaultPlan {
    pub fn healthy(n: usize) -> Self {
        Self {
            n,
            m: 0,
            k: 0,
            batch_epochs: Vec::new(),
            faulty_node_ids: Vec::new(),
            recoveries: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Plan(m));
        if self.batch_epochs.len() != self.m || self.faulty_node_ids.len() != self.m {
            return bad(format!("expected {} batches", self.m));
        }
        if self.m * self.k > self.n {
            return bad(format!("m*k = {} exceeds n = {}", self.m * self.k, self.n));
        }
        if self.batch_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("batch epochs must be strictly increasing".into());
        }
        if self.batch_epochs.first().is_some_and(|&e| e < 1) {
            return bad("batch epochs start at 1".into());
        }
        let mut seen = vec![false; self.n];
        for batch in &self.faulty_node_ids {
            if batch.len() != self.k {
                return bad(format!(
                    "batch of size {} instead of {}",
                    batch.len(),
                    self.k
                ));
            }
            for &id in batch {
                let i = id as usize;
                if i >= self.n {
                    return bad(format!("node {id} out of range"));
                }
                if seen[i] {
                    return bad(format!("node {id} assigned to more than one batch"));
                }
                seen[i] = true;
            }
        }
        for (&node, &r) in &self.recoveries {
            match self.fault_epochs().get(node as usize).copied().flatten() {
                Some(f) if r > f => {}
                _ => {
                    return bad(format!(
                        "recovery of node {node} at {r} without an earlier fault"
                    ))
                }
            }
        }
        Ok(())
    }

    /// First fault epoch of every node.
    pub fn fault_epochs(&self) -> Vec<Option<Epoch>> {
        let mut out = vec![None; self.n];
        for (batch, &epoch) in self.faulty_node_ids.iter().zip(&self.batch_epochs) {
            for &id in batch {
                out[id as usize] = Some(epoch);
            }
        }
        out
    }

    pub fn recovery_epochs(&self) -> Vec<Option<Epoch>> {
        let mut out = vec![None; self.n];
        for (&id, &r) in &self.recoveries {
            out[id as usize] = Some(r);
        }
        out
    }

    pub fn faulty_count(&self) -> usize {
        self.m * self.k
    }
}

pub fn build_fault_plan(
    spec: &FaultProfileSpec,
    n: usize,
    seed: u64,
) -> Result<FaultPlan, SimError> {
    if !(0.0..=1.0).contains(&spec.scale) {
        return Err(SimError::Plan(format!(
            "fault scale {} outside [0, 1]",
            spec.scale
        )));
    }
    let exact = spec.scale * n as f64;
    let faulty = exact.round();
    if (exact - faulty).abs() > 1e-6 {
        return Err(SimError::Plan(format!(
            "fault scale {} of {n} nodes is not a whole number of nodes",
            spec.scale
        )));
    }
    let faulty = faulty as usize;
    if faulty > n {
        return Err(SimError::Plan(format!(
            "{faulty} faulty nodes exceed n = {n}"
        )));
    }
    let m = spec.profile.batch_count();
    if !faulty.is_multiple_of(m) {
        return Err(SimError::Plan(format!(
            "{faulty} faulty nodes cannot be split into {m} equal batches"
        )));
    }
    let k = faulty / m;
    let batch_epochs = spec.profile.batch_epochs(spec.runtime);
    if batch_epochs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::Plan(format!(
            "runtime {} too short to keep {} distinct batch epochs",
            spec.runtime, m
        )));
    }
    let mut rng = rng_for(seed, "fault-plan");
    let chosen = rand::seq::index::sample(&mut rng, n, faulty).into_vec();
    let faulty_node_ids = chosen
        .chunks(k.max(1))
        .take(if k == 0 { m } else { usize::MAX })
        .map(|c| {
            if k == 0 {
                Vec::new()
            } else {
                c.iter().map(|&i| i as NodeId).collect()
            }
        })
        .collect::<Vec<_>>();
    let faulty_node_ids = if k == 0 {
        vec![Vec::new(); m]
    } else {
        faulty_node_ids
    };
    let plan = FaultPlan {
        n,
        m,
        k,
        batch_epochs,
        faulty_node_ids,
        recoveries: BTreeMap::new(),
    };
    plan.validate()?;
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitoringMode {
    /// Every node watches every other node through its own view.
    AllPairs,
    /// One migrated agent per node watches its parent from the host's view.
    AgentPerNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_nodes: usize,
    pub epochs: Epoch,
    pub bootstrap_epochs: Epoch,
    /// Informational only; the kernel counts epochs.
    pub epoch_duration_ms: u32,
    pub seed: u64,
    pub gossip: GossipConfig,
    /// Detection thresholds in epochs; one trace serves all of them.
    pub thresholds: Vec<Epoch>,
    pub monitoring: MonitoringMode,
}

impl SimConfig {
    pub fn new(n_nodes: usize, epochs: Epoch, bootstrap_epochs: Epoch, seed: u64) -> Self {
        Self {
            n_nodes,
            epochs,
            bootstrap_epochs,
            epoch_duration_ms: 250,
            seed,
            gossip: GossipConfig::default(),
            thresholds: vec![100],
            monitoring: MonitoringMode::AllPairs,
        }
    }

    pub fn with_thresholds(mut self, thresholds: Vec<Epoch>) -> Self {
        self.thresholds = thresholds;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.n_nodes < 2 {
            return bad(format!("n_nodes must be at least 2, got {}", self.n_nodes));
        }
        if self.epochs < 1 {
            return bad("epochs must be positive".into());
        }
        if self.bootstrap_epochs >= self.epochs {
            return bad(format!(
                "bootstrap_epochs ({}) must be smaller than epochs ({})",
                self.bootstrap_epochs, self.epochs
            ));
        }
        if self.thresholds.is_empty() {
            return bad("thresholds must not be empty".into());
        }
        if let Some(t) = self.thresholds.iter().find(|&&t| t < 1 || t > self.epochs) {
            return bad(format!("threshold {t} outside [1, {}]", self.epochs));
        }
        self.gossip.validate().map_err(SimError::Config)
    }

    /// Epoch after which monitoring starts; sightings at or before it are
    /// ignored and it serves as every detector's initial sighting.
    pub fn monitoring_since(&self) -> Epoch {
        self.bootstrap_epochs
    }
}

/// Read-only snapshot handed to observers after the gossip phase.
pub struct EpochContext<'a> {
    pub epoch: Epoch,
    pub runtime: Epoch,
    pub monitoring_since: Epoch,
    pub views: &'a [PartialView],
    pub alive: &'a [bool],
    pub incarnations: &'a [u32],
    pub fault_epochs: &'a [Option<Epoch>],
}

impl EpochContext<'_> {
    pub fn n(&self) -> usize {
        self.alive.len()
    }
}

pub trait EpochObserver {
    fn on_epoch(&mut self, ctx: &EpochContext<'_>);

    /// Called once after the last epoch with the final snapshot.
    fn on_finish(&mut self, _ctx: &EpochContext<'_>) {}
}

pub struct Simulation {
    config: SimConfig,
    views: Vec<PartialView>,
    alive: Vec<bool>,
    incarnations: Vec<u32>,
    fault_epochs: Vec<Option<Epoch>>,
    liveness_events: BTreeMap<Epoch, Vec<(NodeId, bool)>>,
    rng: ChaCha8Rng,
}

impl Simulation {
    pub fn new(config: &SimConfig, plan: &FaultPlan) -> Result<Self, SimError> {
        config.validate()?;
        plan.validate()?;
        if plan.n != config.n_nodes {
            return Err(SimError::Plan(format!(
                "plan covers {} nodes, configuration has {}",
                plan.n, config.n_nodes
            )));
        }
        let n = config.n_nodes;
        let mut boot_rng = rng_for(config.seed, "bootstrap");
        let views = (0..n)
            .map(|i| {
                PartialView::bootstrap(i as NodeId, n, config.gossip.view_capacity, &mut boot_rng)
            })
            .collect();
        let fault_epochs = plan.fault_epochs();
        let mut liveness_events: BTreeMap<Epoch, Vec<(NodeId, bool)>> = BTreeMap::new();
        for (i, f) in fault_epochs.iter().enumerate() {
            if let Some(f) = f {
                liveness_events
                    .entry(*f)
                    .or_default()
                    .push((i as NodeId, false));
            }
        }
        for (&node, &r) in &plan.recoveries {
            liveness_events.entry(r).or_default().push((node, true));
        }
        Ok(Self {
            config: config.clone(),
            views,
            alive: vec![true; n],
            incarnations: vec![0; n],
            fault_epochs,
            liveness_events,
            rng: rng_for(config.seed, "gossip"),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn run(&mut self, observers: &mut [&mut dyn EpochObserver]) {
        let n = self.config.n_nodes;
        let mut order: Vec<NodeId> = Vec::with_capacity(n);
        for epoch in 1..=self.config.epochs {
            if let Some(events) = self.liveness_events.get(&epoch) {
                for &(node, up) in events {
                    self.alive[node as usize] = up;
                    if up {
                        self.incarnations[node as usize] += 1;
                    }
                }
            }
            order.clear();
            order.extend((0..n as NodeId).filter(|&i| self.alive[i as usize]));
            order.shuffle(&mut self.rng);
            for &node in &order {
                gossip_round(
                    &mut self.views,
                    &self.alive,
                    &self.incarnations,
                    node,
                    epoch,
                    &self.config.gossip,
                    &mut self.rng,
                );
            }
            let ctx = self.context(epoch);
            for obs in observers.iter_mut() {
                obs.on_epoch(&ctx);
            }
        }
        let ctx = self.context(self.config.epochs);
        for obs in observers.iter_mut() {
            obs.on_finish(&ctx);
        }
    }

    fn context(&self, epoch: Epoch) -> EpochContext<'_> {
        EpochContext {
            epoch,
            runtime: self.config.epochs,
            monitoring_since: self.config.monitoring_since(),
            views: &self.views,
            alive: &self.alive,
            incarnations: &self.incarnations,
            fault_epochs: &self.fault_epochs,
        }
    }

    pub fn views(&self) -> &[PartialView] {
        &self.views
    }
}

/// All-pairs staleness detector evaluated for several thresholds at once.
///
/// Per ordered pair it keeps the epoch of the last fresh sighting and the
/// longest sighting gap seen so far. A threshold `t` fires on the first gap
/// longer than `t`, at `last + t + 1`; since gaps only grow the running
/// maximum, every threshold is assigned at most once. Memory is
/// `n^2 * (8 + 4 * thresholds)` bytes.
pub struct PairDetector {
    n: usize,
    since: Epoch,
    runtime: Epoch,
    thresholds: Vec<Epoch>,
    last: Vec<Epoch>,
    max_gap: Vec<Epoch>,
    detections: Vec<Epoch>,
    finalized: Vec<bool>,
    fault_epochs: Vec<Option<Epoch>>,
}

impl PairDetector {
    pub fn new(n: usize, since: Epoch, runtime: Epoch, thresholds: &[Epoch]) -> Self {
        let mut thresholds = thresholds.to_vec();
        thresholds.sort_unstable();
        thresholds.dedup();
        Self {
            n,
            since,
            runtime,
            last: vec![since; n * n],
            max_gap: vec![0; n * n],
            detections: vec![0; n * n * thresholds.len()],
            thresholds,
            finalized: vec![false; n],
            fault_epochs: vec![None; n],
        }
    }

    pub fn thresholds(&self) -> &[Epoch] {
        &self.thresholds
    }

    fn close_gap(&mut self, idx: usize, gap: Epoch) {
        let prev = self.max_gap[idx];
        if gap <= prev {
            return;
        }
        let last = self.last[idx];
        let k = self.thresholds.len();
        let start = self.thresholds.partition_point(|&t| t < prev);
        for ti in start..k {
            let t = self.thresholds[ti];
            if t >= gap {
                break;
            }
            self.detections[idx * k + ti] = last + t + 1;
        }
        self.max_gap[idx] = gap;
    }

    fn sight(&mut self, a: usize, b: usize, epoch: Epoch) {
        let idx = a * self.n + b;
        let gap = epoch - self.last[idx] - 1;
        self.close_gap(idx, gap);
        self.last[idx] = epoch;
    }

    fn finalize(&mut self, a: usize, end: Epoch) {
        for b in 0..self.n {
            if b == a {
                continue;
            }
            let idx = a * self.n + b;
            let gap = end.saturating_sub(self.last[idx]);
            self.close_gap(idx, gap);
        }
        self.finalized[a] = true;
    }

    pub fn detection(
        &self,
        monitor: NodeId,
        target: NodeId,
        threshold_index: usize,
    ) -> Option<Epoch> {
        let idx = monitor as usize * self.n + target as usize;
        match self.detections[idx * self.thresholds.len() + threshold_index] {
            0 => None,
            d => Some(d),
        }
    }

    pub fn record(&self, monitor: NodeId, target: NodeId, threshold_index: usize) -> PairRecord {
        PairRecord {
            runtime: self.runtime,
            threshold: self.thresholds[threshold_index],
            fault_a: self.fault_epochs[monitor as usize],
            fault_b: self.fault_epochs[target as usize],
            detection: self.detection(monitor, target, threshold_index),
        }
    }

    /// Visit every ordered pair for one threshold without materializing them.
    pub fn for_each_record<F: FnMut(MonitoredPair)>(&self, threshold_index: usize, mut f: F) {
        for a in 0..self.n as NodeId {
            for b in 0..self.n as NodeId {
                if a != b {
                    f(MonitoredPair {
                        monitor: a,
                        target: b,
                        record: self.record(a, b, threshold_index),
                    });
                }
            }
        }
    }

    pub fn records(&self, threshold_index: usize) -> Vec<MonitoredPair> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1));
        self.for_each_record(threshold_index, |p| out.push(p));
        out
    }
}

impl EpochObserver for PairDetector {
    fn on_epoch(&mut self, ctx: &EpochContext<'_>) {
        if self.fault_epochs.iter().all(Option::is_none) {
            self.fault_epochs.copy_from_slice(ctx.fault_epochs);
        }
        let epoch = ctx.epoch;
        if epoch <= self.since {
            return;
        }
        for a in 0..self.n {
            if self.finalized[a] {
                continue;
            }
            if !ctx.alive[a] {
                self.finalize(a, epoch - 1);
                continue;
            }
            for i in 0..ctx.views[a].len() {
                let d = ctx.views[a].entries()[i];
                if d.created_at > self.since {
                    self.sight(a, d.node as usize, epoch);
                }
            }
        }
    }

    fn on_finish(&mut self, ctx: &EpochContext<'_>) {
        if self.fault_epochs.iter().all(Option::is_none) {
            self.fault_epochs.copy_from_slice(ctx.fault_epochs);
        }
        for a in 0..self.n {
            if !self.finalized[a] {
                self.finalize(a, self.runtime);
            }
        }
    }
}

/// Output of [`run`]: pair records per threshold plus the agent event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub mode: MonitoringMode,
    pub thresholds: Vec<Epoch>,
    pub records: Vec<Vec<MonitoredPair>>,
    pub events: Vec<AgentEvent>,
    pub digest: String,
}

impl SimTrace {
    pub fn records_for(&self, threshold: Epoch) -> Option<&[MonitoredPair]> {
        self.thresholds
            .iter()
            .position(|&t| t == threshold)
            .map(|i| self.records[i].as_slice())
    }
}

pub fn trace_digest(records: &[Vec<MonitoredPair>], events: &[AgentEvent]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    let opt = |v: Option<Epoch>| v.map_or(0u64, |x| x as u64 + 1).to_le_bytes();
    for per_threshold in records {
        for p in per_threshold {
            h.update(p.monitor.to_le_bytes());
            h.update(p.target.to_le_bytes());
            h.update(p.record.runtime.to_le_bytes());
            h.update(p.record.threshold.to_le_bytes());
            h.update(opt(p.record.fault_a));
            h.update(opt(p.record.fault_b));
            h.update(opt(p.record.detection));
        }
    }
    for e in events {
        h.update(serde_json::to_vec(e).expect("events serialize"));
    }
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run the gossip trace and collect one record per monitored pair and threshold.
pub fn run(config: &SimConfig, plan: &FaultPlan) -> Result<SimTrace, SimError> {
    let mut sim = Simulation::new(config, plan)?;
    let n = config.n_nodes;
    let since = config.monitoring_since();
    let (thresholds, records, events): (Vec<Epoch>, Vec<Vec<MonitoredPair>>, Vec<AgentEvent>) =
        match config.monitoring {
            MonitoringMode::AllPairs => {
                let mut det = PairDetector::new(n, since, config.epochs, &config.thresholds);
                sim.run(&mut [&mut det]);
                let thresholds = det.thresholds().to_vec();
                let records = (0..thresholds.len()).map(|i| det.records(i)).collect();
                (thresholds, records, Vec::new())
            }
            MonitoringMode::AgentPerNode => {
                let mut thresholds = config.thresholds.clone();
                thresholds.sort_unstable();
                thresholds.dedup();
                let mut sets: Vec<AgentSet> = thresholds
                    .iter()
                    .map(|&t| AgentSet::new(n, t, since, config.seed))
                    .collect();
                {
                    let mut observers: Vec<&mut dyn EpochObserver> = sets
                        .iter_mut()
                        .map(|s| s as &mut dyn EpochObserver)
                        .collect();
                    sim.run(&mut observers);
                }
                let fault_epochs = plan.fault_epochs();
                let records = sets
                    .iter()
                    .map(|s| s.records(&fault_epochs, config.epochs))
                    .collect();
                let events = sets.into_iter().flat_map(|s| s.into_events()).collect();
                (thresholds, records, events)
            }
        };
    let digest = trace_digest(&records, &events);
    Ok(SimTrace {
        mode: config.monitoring,
        thresholds,
        records,
        events,
        digest,
    })
}

/// Epoch at which a detector with last fresh sighting `last` fires.
pub fn detection_epoch(last: Epoch, threshold: Epoch) -> Epoch {
    last + threshold + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fault_model::{classify_scenario, scenario_frequencies, ScenarioClass};

    #[test]
    fn fault_plan_examples() {
        let spec = FaultProfileSpec {
            profile: FaultProfile::P3,
            scale: 0.2,
            runtime: 3200,
        };
        let plan = build_fault_plan(&spec, 3000, 1).unwrap();
        assert_eq!(plan.faulty_count(), 600);
        assert_eq!(plan.k, 150);
        assert_eq!(plan.batch_epochs, vec![1060, 1620, 2180, 2740]);
        assert!(plan.faulty_node_ids.iter().all(|b| b.len() == 150));

        let spec = FaultProfileSpec {
            profile: FaultProfile::P1,
            scale: 0.5,
            runtime: 3200,
        };
        let plan = build_fault_plan(&spec, 3000, 1).unwrap();
        assert_eq!((plan.m, plan.k), (1, 1500));
        assert_eq!(plan.batch_epochs, vec![1600]);

        let spec = FaultProfileSpec {
            profile: FaultProfile::P2,
            scale: 0.1,
            runtime: 3200,
        };
        assert!(build_fault_plan(&spec, 10, 1).is_err());
    }

    #[test]
    fn batch_epochs_rescale() {
        assert_eq!(FaultProfile::P1.batch_epochs(800), vec![400]);
        assert_eq!(FaultProfile::P2.batch_epochs(800), vec![333, 566]);
        assert_eq!(FaultProfile::P3.batch_epochs(800), vec![265, 405, 545, 685]);
    }

    #[test]
    fn zero_scale_plan_is_healthy() {
        let spec = FaultProfileSpec {
            profile: FaultProfile::P3,
            scale: 0.0,
            runtime: 800,
        };
        let plan = build_fault_plan(&spec, 40, 3).unwrap();
        assert!(plan.fault_epochs().iter().all(Option::is_none));
    }

    #[test]
    fn detector_convention() {
        assert_eq!(detection_epoch(500, 150), 651);
        // Stepping the detector by hand: with a sighting at 500 and none
        // after, the first epoch where staleness exceeds 150 is 651.
        let mut det = PairDetector::new(2, 0, 1000, &[150]);
        det.last[1] = 500;
        det.finalize(0, 1000);
        assert_eq!(det.detection(0, 1, 0), Some(651));

        let mut det = PairDetector::new(2, 0, 1000, &[150]);
        det.last[1] = 500;
        det.finalize(0, 650);
        assert_eq!(det.detection(0, 1, 0), None);
    }

    #[test]
    fn healthy_network_with_large_threshold_never_detects() {
        let cfg = SimConfig::new(60, 300, 50, 4).with_thresholds(vec![240]);
        let trace = run(&cfg, &FaultPlan::healthy(60)).unwrap();
        assert!(trace.records[0]
            .iter()
            .all(|p| p.record.detection.is_none()));
    }

    #[test]
    fn trace_classes_match_pair_counts() {
        let n = 80;
        let spec = FaultProfileSpec {
            profile: FaultProfile::P2,
            scale: 0.5,
            runtime: 400,
        };
        let plan = build_fault_plan(&spec, n, 9).unwrap();
        let cfg = SimConfig::new(n, 400, 50, 9).with_thresholds(vec![10, 30]);
        let trace = run(&cfg, &plan).unwrap();
        let expected = scenario_frequencies(n as u64, 2, 20).unwrap();
        for recs in &trace.records {
            let mut counts = [0u64; 6];
            for p in recs {
                p.record.validate().unwrap();
                counts[classify_scenario(&p.record).class() as usize] += 1;
            }
            assert_eq!(counts, expected.counts);
            assert_eq!(counts[ScenarioClass::S1 as usize], 40 * 39);
        }
    }

    #[test]
    fn reproducible_digest() {
        let spec = FaultProfileSpec {
            profile: FaultProfile::P1,
            scale: 0.25,
            runtime: 300,
        };
        let plan = build_fault_plan(&spec, 40, 5).unwrap();
        let cfg = SimConfig::new(40, 300, 40, 5).with_thresholds(vec![5, 20]);
        let a = run(&cfg, &plan).unwrap();
        let b = run(&cfg, &plan).unwrap();
        assert_eq!(a.digest, b.digest);
        let mut other = cfg.clone();
        other.seed = 6;
        assert_ne!(run(&other, &plan).unwrap().digest, a.digest);
    }

    #[test]
    fn config_validation_names_the_field() {
        let cfg = SimConfig::new(10, 100, 100, 1);
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("bootstrap_epochs"));
        let cfg = SimConfig::new(10, 100, 10, 1).with_thresholds(vec![]);
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("thresholds"));
    }
}
