//! Decentralized aggregation with rollback.
//!
//! Every node is both a data supplier (one power reading per half hour) and a
//! data consumer that keeps running sum, count, min and max over everything it
//! has aggregated. Consumers discover suppliers through their partial views.
//! A per-supplier memory turns repeated exchanges into replacements, which is
//! also what makes rollback possible.

use std::collections::BTreeMap;

use ordered_float::OrderedFloat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloom::{pair_key, CountingBloomFilter};
use crate::derive_seed;
use crate::healing::{AgentEvent, AgentSet, CorrectionTarget};
use crate::simkernel::{EpochContext, EpochObserver};
use crate::{Epoch, NodeId};

pub const RECORDS_PER_DAY: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupplierState {
    pub node_id: NodeId,
    pub current_value: f64,
    pub version: u32,
    pub incarnation: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
#[derive(Default)]
pub enum MemoryMode {
    #[default]
    Exact,
    Bloom {
        m_bits: usize,
        k_hashes: u32,
    },
}

/// Multiset of remembered values, for min and max under removal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extrema {
    values: BTreeMap<OrderedFloat<f64>, u32>,
}

impl Extrema {
    pub fn insert(&mut self, v: f64) {
        *self.values.entry(OrderedFloat(v)).or_insert(0) += 1;
    }

    pub fn remove(&mut self, v: f64) -> bool {
        let key = OrderedFloat(v);
        match self.values.get_mut(&key) {
            Some(c) if *c > 1 => {
                *c -= 1;
                true
            }
            Some(_) => {
                self.values.remove(&key);
                true
            }
            None => false,
        }
    }

    pub fn min(&self) -> Option<f64> {
        self.values.keys().next().map(|k| k.0)
    }

    pub fn max(&self) -> Option<f64> {
        self.values.keys().next_back().map(|k| k.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeOutcome {
    Added,
    Replaced,
    Duplicate,
    /// The supplier was rolled back here and has not come back since.
    Refused,
}

#[derive(Debug, Clone)]
enum Memory {
    Exact {
        held: Vec<Option<(f64, u32)>>,
    },
    Bloom {
        aggregated: CountingBloomFilter,
        withdrawn: CountingBloomFilter,
        /// Exact shadow used only to count filter mistakes.
        audit: Vec<Option<u32>>,
        false_positives: u64,
    },
}

#[derive(Debug, Clone)]
pub struct AggregateState {
    sum: f64,
    count: u64,
    extrema: Extrema,
    memory: Memory,
    /// Supplier id -> incarnation at which it was rolled back.
    tombstones: BTreeMap<NodeId, u32>,
}

impl AggregateState {
    pub fn new(n_suppliers: usize, mode: MemoryMode, salt: u64) -> Self {
        let memory = match mode {
            MemoryMode::Exact => Memory::Exact {
                held: vec![None; n_suppliers],
            },
            MemoryMode::Bloom { m_bits, k_hashes } => Memory::Bloom {
                aggregated: CountingBloomFilter::new(m_bits, k_hashes, salt),
                withdrawn: CountingBloomFilter::new(
                    m_bits,
                    k_hashes,
                    salt.rotate_left(17) ^ 0x5bd1_e995,
                ),
                audit: vec![None; n_suppliers],
                false_positives: 0,
            },
        };
        Self {
            sum: 0.0,
            count: 0,
            extrema: Extrema::default(),
            memory,
            tombstones: BTreeMap::new(),
        }
    }

    pub fn exact(n_suppliers: usize) -> Self {
        Self::new(n_suppliers, MemoryMode::Exact, 0)
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn avg(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    pub fn min(&self) -> Option<f64> {
        self.extrema.min()
    }

    pub fn max(&self) -> Option<f64> {
        self.extrema.max()
    }

    /// Remembered (value, version) of a supplier; exact mode only.
    pub fn remembered(&self, supplier: NodeId) -> Option<(f64, u32)> {
        match &self.memory {
            Memory::Exact { held } => held.get(supplier as usize).copied().flatten(),
            Memory::Bloom { .. } => None,
        }
    }

    /// Filter answers that disagreed with the exact shadow (bloom mode).
    pub fn false_positives(&self) -> u64 {
        match &self.memory {
            Memory::Exact { .. } => 0,
            Memory::Bloom {
                false_positives, ..
            } => *false_positives,
        }
    }

    fn is_tombstoned(&self, supplier: NodeId, incarnation: u32) -> bool {
        self.tombstones
            .get(&supplier)
            .is_some_and(|&t| incarnation <= t)
    }

    fn add_value(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
        self.extrema.insert(v);
    }

    fn drop_value(&mut self, v: f64) {
        self.sum -= v;
        // Only a filter mistake can remove from an empty state.
        self.count = self.count.saturating_sub(1);
        self.extrema.remove(v);
    }

    /// Aggregate the supplier's current value. `series` maps versions to the
    /// supplier's values; bloom mode needs it to subtract an older version.
    /// A supplier's versions never decrease.
    pub fn exchange(&mut self, s: &SupplierState, series: &[f64]) -> ExchangeOutcome {
        let id = s.node_id;
        let exact_refused = self.is_tombstoned(id, s.incarnation);
        if !exact_refused {
            self.tombstones.remove(&id);
        }
        match &mut self.memory {
            Memory::Exact { held } => {
                if exact_refused {
                    return ExchangeOutcome::Refused;
                }
                match held[id as usize] {
                    Some((_, ver)) if ver == s.version => ExchangeOutcome::Duplicate,
                    Some((old, _)) => {
                        held[id as usize] = Some((s.current_value, s.version));
                        self.sum += s.current_value - old;
                        self.extrema.remove(old);
                        self.extrema.insert(s.current_value);
                        ExchangeOutcome::Replaced
                    }
                    None => {
                        held[id as usize] = Some((s.current_value, s.version));
                        self.add_value(s.current_value);
                        ExchangeOutcome::Added
                    }
                }
            }
            Memory::Bloom {
                aggregated,
                withdrawn,
                audit,
                false_positives,
            } => {
                let refused = withdrawn.contains(pair_key(id, s.incarnation));
                if refused != exact_refused {
                    *false_positives += 1;
                }
                if refused {
                    return ExchangeOutcome::Refused;
                }
                let shadow = audit[id as usize];
                if aggregated.contains(pair_key(id, s.version)) {
                    if shadow != Some(s.version) {
                        *false_positives += 1;
                    }
                    return ExchangeOutcome::Duplicate;
                }
                let older = (0..s.version)
                    .rev()
                    .find(|&v| aggregated.contains(pair_key(id, v)));
                if older != shadow {
                    *false_positives += 1;
                }
                aggregated.insert(pair_key(id, s.version));
                audit[id as usize] = Some(s.version);
                match older {
                    Some(v) => {
                        aggregated.remove(pair_key(id, v));
                        let old = series[v as usize];
                        self.sum += s.current_value - old;
                        self.extrema.remove(old);
                        self.extrema.insert(s.current_value);
                        ExchangeOutcome::Replaced
                    }
                    None => {
                        self.add_value(s.current_value);
                        ExchangeOutcome::Added
                    }
                }
            }
        }
    }

    /// Remove the supplier's contribution and refuse it until it comes back
    /// with a newer incarnation. Returns whether a value was removed.
    pub fn rollback(&mut self, supplier: NodeId, incarnation: u32, series: &[f64]) -> bool {
        let exact_done = self.is_tombstoned(supplier, incarnation);
        let t = self.tombstones.entry(supplier).or_insert(incarnation);
        *t = (*t).max(incarnation);
        match &mut self.memory {
            Memory::Exact { held } => match held[supplier as usize].take() {
                Some((v, _)) => {
                    self.drop_value(v);
                    true
                }
                None => false,
            },
            Memory::Bloom {
                aggregated,
                withdrawn,
                audit,
                false_positives,
            } => {
                let key = pair_key(supplier, incarnation);
                let done = withdrawn.contains(key);
                if done != exact_done {
                    *false_positives += 1;
                }
                if done {
                    return false;
                }
                withdrawn.insert(key);
                let shadow = audit[supplier as usize].take();
                let found = (0..RECORDS_PER_DAY as u32)
                    .rev()
                    .find(|&v| aggregated.contains(pair_key(supplier, v)));
                if found != shadow {
                    *false_positives += 1;
                }
                match found {
                    Some(v) if aggregated.remove(pair_key(supplier, v)) => {
                        self.drop_value(series[v as usize]);
                        true
                    }
                    Some(_) => false,
                    None => false,
                }
            }
        }
    }
}

/// Sum of current values over suppliers on live nodes.
pub fn actual_aggregate(values: &[f64], alive: &[bool]) -> f64 {
    values
        .iter()
        .zip(alive)
        .filter(|(_, &a)| a)
        .map(|(v, _)| v)
        .sum()
}

/// Mean over consumers of `|estimate - actual| / |actual|`. With a zero
/// actual, a consumer's error is 0 if its estimate is also 0 and 1 otherwise.
pub fn relative_approx_error(estimates: &[f64], actual: f64) -> f64 {
    if estimates.is_empty() {
        return 0.0;
    }
    let per = |e: f64| {
        if actual == 0.0 {
            if e == 0.0 {
                0.0
            } else {
                1.0
            }
        } else {
            (e - actual).abs() / actual.abs()
        }
    };
    estimates.iter().map(|&e| per(e)).sum::<f64>() / estimates.len() as f64
}

/// Version of the supplier data in effect at `epoch`: the 48 records are
/// spread evenly over the epochs after bootstrap.
pub fn version_at(epoch: Epoch, bootstrap: Epoch, runtime: Epoch) -> u32 {
    if epoch <= bootstrap || runtime <= bootstrap {
        return 0;
    }
    let span = (runtime - bootstrap) as u64;
    let idx = (epoch - bootstrap - 1) as u64 * RECORDS_PER_DAY as u64 / span;
    idx.min(RECORDS_PER_DAY as u64 - 1) as u32
}

/// Consumer states of one layer plus the supplier -> consumer sharing lists.
pub struct LayerState {
    consumers: Vec<AggregateState>,
    shared_with: Vec<Vec<NodeId>>,
    shared_flag: Vec<bool>,
    series: Vec<Vec<f64>>,
    n: usize,
}

impl LayerState {
    fn new(series: &[Vec<f64>], mode: MemoryMode, seed: u64) -> Self {
        let n = series.len();
        Self {
            consumers: (0..n)
                .map(|i| AggregateState::new(n, mode, derive_seed(seed, &format!("bloom/{i}"))))
                .collect(),
            shared_with: vec![Vec::new(); n],
            shared_flag: vec![false; n * n],
            series: series.to_vec(),
            n,
        }
    }

    fn aggregate(&mut self, consumer: usize, supplier: usize, version: u32, incarnation: u32) {
        let s = SupplierState {
            node_id: supplier as NodeId,
            current_value: self.series[supplier][version as usize],
            version,
            incarnation,
        };
        let out = self.consumers[consumer].exchange(&s, &self.series[supplier]);
        // A node's own value never needs correcting at itself.
        if supplier != consumer && matches!(out, ExchangeOutcome::Added | ExchangeOutcome::Replaced)
        {
            let flag = &mut self.shared_flag[supplier * self.n + consumer];
            if !*flag {
                *flag = true;
                self.shared_with[supplier].push(consumer as NodeId);
            }
        }
    }

    pub fn consumers(&self) -> &[AggregateState] {
        &self.consumers
    }
}

impl CorrectionTarget for LayerState {
    fn consumers_of(&self, supplier: NodeId) -> &[NodeId] {
        &self.shared_with[supplier as usize]
    }

    fn rollback(&mut self, consumer: NodeId, supplier: NodeId, incarnation: u32) -> bool {
        let series = &self.series[supplier as usize];
        self.consumers[consumer as usize].rollback(supplier, incarnation, series)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSeries {
    /// `None` for the layer without correction.
    pub threshold: Option<Epoch>,
    pub mean_estimate: Vec<f64>,
    pub avg_rel_error: Vec<f64>,
}

struct Layer {
    state: LayerState,
    agents: Option<AgentSet>,
    out: LayerSeries,
}

impl Layer {
    fn step(&mut self, ctx: &EpochContext<'_>, version: u32, actual: f64) {
        let n = self.state.n;
        for c in 0..n {
            if !ctx.alive[c] {
                continue;
            }
            self.state.aggregate(c, c, version, ctx.incarnations[c]);
            for d in ctx.views[c].entries() {
                let s = d.node as usize;
                if !ctx.alive[s] {
                    continue;
                }
                self.state.aggregate(c, s, version, ctx.incarnations[s]);
                self.state.aggregate(s, c, version, ctx.incarnations[c]);
            }
        }
        if let Some(agents) = &mut self.agents {
            agents.step(ctx, &mut self.state);
        }
        let estimates: Vec<f64> = (0..n)
            .filter(|&c| ctx.alive[c])
            .map(|c| self.state.consumers[c].sum())
            .collect();
        let mean = if estimates.is_empty() {
            0.0
        } else {
            estimates.iter().sum::<f64>() / estimates.len() as f64
        };
        self.out.mean_estimate.push(mean);
        self.out
            .avg_rel_error
            .push(relative_approx_error(&estimates, actual));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub memory: MemoryMode,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            memory: MemoryMode::Exact,
        }
    }
}

/// Kernel observer running one uncorrected layer and one corrective layer
/// per threshold over the same gossip trace.
pub struct AggregationRun {
    bootstrap: Epoch,
    series: Vec<Vec<f64>>,
    actual: Vec<f64>,
    layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationOutcome {
    pub bootstrap: Epoch,
    pub actual: Vec<f64>,
    /// Index 0 is the uncorrected layer, then one per threshold.
    pub layers: Vec<LayerSeries>,
    pub events: Vec<AgentEvent>,
    pub bloom_false_positives: u64,
    /// Final sum per consumer and layer.
    pub final_sums: Vec<Vec<f64>>,
}

impl AggregationRun {
    /// `series[i]` holds node `i`'s 48 readings.
    pub fn new(
        series: &[Vec<f64>],
        thresholds: &[Epoch],
        bootstrap: Epoch,
        seed: u64,
        config: AggregationConfig,
    ) -> Self {
        let n = series.len();
        let mut layers = vec![Layer {
            state: LayerState::new(series, config.memory, seed),
            agents: None,
            out: LayerSeries {
                threshold: None,
                mean_estimate: Vec::new(),
                avg_rel_error: Vec::new(),
            },
        }];
        for &t in thresholds {
            layers.push(Layer {
                state: LayerState::new(series, config.memory, seed),
                agents: Some(AgentSet::new(n, t, bootstrap, seed)),
                out: LayerSeries {
                    threshold: Some(t),
                    mean_estimate: Vec::new(),
                    avg_rel_error: Vec::new(),
                },
            });
        }
        Self {
            bootstrap,
            series: series.to_vec(),
            actual: Vec::new(),
            layers,
        }
    }

    pub fn finish(self) -> AggregationOutcome {
        let mut events = Vec::new();
        let mut fps = 0;
        let mut final_sums = Vec::new();
        let mut out = Vec::new();
        for layer in self.layers {
            fps += layer
                .state
                .consumers
                .iter()
                .map(|c| c.false_positives())
                .sum::<u64>();
            final_sums.push(layer.state.consumers.iter().map(|c| c.sum()).collect());
            if let Some(a) = layer.agents {
                events.extend(a.into_events());
            }
            out.push(layer.out);
        }
        AggregationOutcome {
            bootstrap: self.bootstrap,
            actual: self.actual,
            layers: out,
            events,
            bloom_false_positives: fps,
            final_sums,
        }
    }
}

impl EpochObserver for AggregationRun {
    fn on_epoch(&mut self, ctx: &EpochContext<'_>) {
        let version = version_at(ctx.epoch, self.bootstrap, ctx.runtime);
        let values: Vec<f64> = self.series.iter().map(|s| s[version as usize]).collect();
        let actual = actual_aggregate(&values, ctx.alive);
        self.actual.push(actual);
        self.layers
            .par_iter_mut()
            .for_each(|layer| layer.step(ctx, version, actual));
    }
}

impl AggregationOutcome {
    /// Epoch indices (0-based into the series) after bootstrap.
    fn post_bootstrap(&self) -> std::ops::Range<usize> {
        (self.bootstrap as usize).min(self.actual.len())..self.actual.len()
    }

    /// Mean post-bootstrap relative error of a layer.
    pub fn app_error(&self, layer: usize) -> f64 {
        let r = self.post_bootstrap();
        let errs = &self.layers[layer].avg_rel_error[r];
        if errs.is_empty() {
            0.0
        } else {
            errs.iter().sum::<f64>() / errs.len() as f64
        }
    }

    /// RMSE between a layer's mean estimate and the actual sum after bootstrap.
    pub fn estimate_rmse(&self, layer: usize) -> f64 {
        let r = self.post_bootstrap();
        let est = &self.layers[layer].mean_estimate[r.clone()];
        let act = &self.actual[r];
        if est.is_empty() {
            return 0.0;
        }
        let sq: f64 = est.iter().zip(act).map(|(e, a)| (e - a).powi(2)).sum();
        (sq / est.len() as f64).sqrt()
    }

    pub fn layer_for(&self, threshold: Epoch) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| l.threshold == Some(threshold))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn supplier(id: NodeId, v: f64, version: u32) -> SupplierState {
        SupplierState {
            node_id: id,
            current_value: v,
            version,
            incarnation: 0,
        }
    }

    #[test]
    fn exchange_examples() {
        let mut st = AggregateState::exact(3);
        st.exchange(&supplier(0, 2.0, 0), &[]);
        st.exchange(&supplier(1, 3.0, 0), &[]);
        st.exchange(&supplier(2, 5.0, 0), &[]);
        assert_eq!((st.sum(), st.count()), (10.0, 3));
        assert_eq!(
            st.exchange(&supplier(1, 3.0, 0), &[]),
            ExchangeOutcome::Duplicate
        );
        assert_eq!(st.sum(), 10.0);
        assert_eq!(
            st.exchange(&supplier(1, 4.0, 1), &[]),
            ExchangeOutcome::Replaced
        );
        assert_eq!(st.sum(), 11.0);
        assert_eq!(st.count(), 3);
    }

    #[test]
    fn rollback_examples() {
        let mut st = AggregateState::exact(3);
        for (i, v) in [2.0, 3.0, 5.0].into_iter().enumerate() {
            st.exchange(&supplier(i as NodeId, v, 0), &[]);
        }
        assert!(st.rollback(1, 0, &[]));
        assert_eq!((st.sum(), st.count()), (7.0, 2));
        assert!(!st.rollback(1, 0, &[]));
        assert_eq!((st.sum(), st.count()), (7.0, 2));

        let mut st = AggregateState::exact(3);
        for (i, v) in [2.0, 3.0, 5.0].into_iter().enumerate() {
            st.exchange(&supplier(i as NodeId, v, 0), &[]);
        }
        st.rollback(0, 0, &[]);
        assert_eq!(st.min(), Some(3.0));
        assert_eq!(st.max(), Some(5.0));
    }

    #[test]
    fn rolled_back_supplier_refused_until_new_incarnation() {
        let mut st = AggregateState::exact(2);
        st.exchange(&supplier(0, 2.0, 0), &[]);
        st.rollback(0, 0, &[]);
        assert_eq!(
            st.exchange(&supplier(0, 2.0, 1), &[]),
            ExchangeOutcome::Refused
        );
        let back = SupplierState {
            incarnation: 1,
            ..supplier(0, 2.5, 1)
        };
        assert_eq!(st.exchange(&back, &[]), ExchangeOutcome::Added);
        assert_eq!(st.sum(), 2.5);
    }

    #[test]
    fn actual_examples() {
        assert_eq!(actual_aggregate(&[2.0, 3.0, 5.0], &[true; 3]), 10.0);
        assert_eq!(
            actual_aggregate(&[2.0, 3.0, 5.0], &[true, false, true]),
            7.0
        );
        assert_eq!(actual_aggregate(&[2.0, 3.0, 5.0], &[false; 3]), 0.0);
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_approx_error(&[7.0, 7.0], 7.0), 0.0);
        assert!((relative_approx_error(&[10.0], 7.0) - 3.0 / 7.0).abs() < 1e-12);
        assert!((relative_approx_error(&[11.0, 13.0], 10.0) - 0.2).abs() < 1e-12);
        assert_eq!(relative_approx_error(&[0.0, 0.0], 0.0), 0.0);
        assert_eq!(relative_approx_error(&[0.0, 2.0], 0.0), 0.5);
    }

    #[test]
    fn versions_span_the_run() {
        assert_eq!(version_at(50, 100, 800), 0);
        assert_eq!(version_at(101, 100, 800), 0);
        assert_eq!(version_at(800, 100, 800), 47);
        let mut prev = 0;
        let mut seen = std::collections::BTreeSet::new();
        for e in 1..=800 {
            let v = version_at(e, 100, 800);
            assert!(v >= prev);
            prev = v;
            seen.insert(v);
        }
        assert_eq!(seen.len(), 48);
    }

    #[test]
    fn bloom_mode_tracks_exact_mode_without_collisions() {
        let series: Vec<Vec<f64>> = (0..20)
            .map(|i| (0..48).map(|v| 1.0 + i as f64 + 0.1 * v as f64).collect())
            .collect();
        let mode = MemoryMode::Bloom {
            m_bits: 1 << 16,
            k_hashes: 5,
        };
        let mut b = AggregateState::new(20, mode, 11);
        let mut e = AggregateState::exact(20);
        for step in 0..200u32 {
            let id = (step * 7 % 20) as NodeId;
            let version = (step / 10).min(47);
            let s = supplier(id, series[id as usize][version as usize], version);
            e.exchange(&s, &series[id as usize]);
            b.exchange(&s, &series[id as usize]);
            if step % 13 == 0 {
                e.rollback(id, 0, &series[id as usize]);
                b.rollback(id, 0, &series[id as usize]);
            }
        }
        assert_eq!(b.false_positives(), 0);
        assert!((b.sum() - e.sum()).abs() < 1e-9);
        assert_eq!(b.count(), e.count());
    }
}
