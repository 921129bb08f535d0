use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, ThresholdSpec};
use super::output::{fmt_f64, write_json, write_table, Table};
use super::Result;
use crate::aggregation::{AggregationConfig, AggregationOutcome, AggregationRun};
use crate::fault_model::{
    classify_scenario, relative_costs, CostStream, CostSummary, CostWeights, MonitoredPair,
    ScenarioClass, STREAM_COUNT,
};
use crate::healing::{AgentEvent, AgentEventKind};
use crate::simkernel::{self, EpochObserver, FaultPlan, PairDetector, SimConfig, Simulation};
use crate::Epoch;

pub const HISTOGRAM_BINS: usize = 100;

/// Everything the profiler derives from the records of one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdProfile {
    pub threshold: ThresholdSpec,
    pub pairs: u64,
    pub class_counts: [u64; 6],
    pub scenario_counts: [u64; 7],
    /// Pairs with nonzero cost in each stream.
    pub stream_nonzero: [u64; STREAM_COUNT],
    pub stream_sums: [f64; STREAM_COUNT],
    pub summary: CostSummary,
    /// Per stream, counts of ρ over 100 equal bins of [0, 1], taken over the
    /// pairs of the stream's scenario.
    pub histogram: Vec<[u64; HISTOGRAM_BINS]>,
    pub records: Option<Vec<MonitoredPair>>,
}

impl ThresholdProfile {
    pub fn from_records(threshold: ThresholdSpec, records: &[MonitoredPair], keep: bool) -> Self {
        let weights = CostWeights::default();
        let mut out = Self {
            threshold,
            pairs: records.len() as u64,
            class_counts: [0; 6],
            scenario_counts: [0; 7],
            stream_nonzero: [0; STREAM_COUNT],
            stream_sums: [0.0; STREAM_COUNT],
            summary: CostSummary::default(),
            histogram: vec![[0; HISTOGRAM_BINS]; STREAM_COUNT],
            records: keep.then(|| records.to_vec()),
        };
        for p in records {
            let sc = classify_scenario(&p.record);
            out.class_counts[sc.class() as usize] += 1;
            out.scenario_counts[sc.index()] += 1;
            let costs = relative_costs(&p.record);
            for &s in sc.streams() {
                let v = costs.get(s);
                let i = s.index();
                if v > 0.0 {
                    out.stream_nonzero[i] += 1;
                }
                out.stream_sums[i] += v;
                out.summary.add(s, weights.weight(s) * v);
                let bin = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
                out.histogram[i][bin] += 1;
            }
        }
        out
    }

    pub fn normalized_cost(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.summary.c_total / self.pairs as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileResult {
    pub config: ExperimentConfig,
    pub plan: FaultPlan,
    pub digest: String,
    pub thresholds: Vec<ThresholdProfile>,
}

pub fn profile(cfg: &ExperimentConfig, keep_records: bool) -> Result<ProfileResult> {
    cfg.validate()?;
    let plan = cfg.fault_plan()?;
    let trace = simkernel::run(&cfg.sim_config(), &plan)?;
    let thresholds = cfg
        .resolved_thresholds()
        .into_iter()
        .map(|spec| {
            let recs = trace.records_for(spec.actual).expect("threshold simulated");
            ThresholdProfile::from_records(spec, recs, keep_records)
        })
        .collect();
    Ok(ProfileResult {
        config: cfg.clone(),
        plan,
        digest: trace.digest,
        thresholds,
    })
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
    thresholds: Vec<ThresholdSpec>,
    batch_epochs: &'a [Epoch],
    faulty_per_batch: usize,
    quantile_population: &'static str,
    frequency_normalization: &'static str,
    trace_digest: Option<&'a str>,
}

fn metadata<'a>(
    command: &'a str,
    cfg: &'a ExperimentConfig,
    plan: &'a FaultPlan,
    digest: Option<&'a str>,
) -> Metadata<'a> {
    Metadata {
        command,
        config: cfg,
        thresholds: cfg.resolved_thresholds(),
        batch_epochs: &plan.batch_epochs,
        faulty_per_batch: plan.k,
        quantile_population: "pairs_of_stream_scenario_including_zero_cost",
        frequency_normalization: if cfg.per_scenario_frequencies {
            "per_scenario"
        } else {
            "all_pairs"
        },
        trace_digest: digest,
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn frequencies_table(r: &ProfileResult) -> Table {
    let mut t = Table::new(&[
        "profile",
        "scale",
        "threshold",
        "scenario",
        "state",
        "count",
        "rel_freq",
    ]);
    let per_scenario = r.config.per_scenario_frequencies;
    let profile = r.config.profile.as_str();
    let scale = fmt_f64(r.config.fault_scale);
    for tp in &r.thresholds {
        let th = tp.threshold.reference.to_string();
        for class in ScenarioClass::ALL {
            let c = tp.class_counts[class as usize];
            let f = if per_scenario {
                ratio(c, c)
            } else {
                ratio(c, tp.pairs)
            };
            t.push(vec![
                profile.into(),
                scale.clone(),
                th.clone(),
                class.as_str().into(),
                "ALL".into(),
                c.to_string(),
                fmt_f64(f),
            ]);
        }
        for s in CostStream::ALL {
            let c = tp.stream_nonzero[s.index()];
            let denom = if per_scenario {
                tp.scenario_counts[s.scenario().index()]
            } else {
                tp.pairs
            };
            t.push(vec![
                profile.into(),
                scale.clone(),
                th.clone(),
                s.scenario().as_str().into(),
                s.state_label().into(),
                c.to_string(),
                fmt_f64(ratio(c, denom)),
            ]);
        }
    }
    t
}

pub fn cost_summary_table(r: &ProfileResult) -> Table {
    let mut t = Table::new(&[
        "profile",
        "scale",
        "threshold",
        "c_fp",
        "c_fn",
        "c_total",
        "pairs",
        "normalized_cost",
    ]);
    for tp in &r.thresholds {
        t.push(vec![
            r.config.profile.as_str().into(),
            fmt_f64(r.config.fault_scale),
            tp.threshold.reference.to_string(),
            fmt_f64(tp.summary.c_fp),
            fmt_f64(tp.summary.c_fn),
            fmt_f64(tp.summary.c_total),
            tp.pairs.to_string(),
            fmt_f64(tp.normalized_cost()),
        ]);
    }
    t
}

pub fn pair_costs_table(r: &ProfileResult) -> Table {
    let per_pair = r.thresholds.iter().all(|tp| tp.records.is_some());
    if per_pair {
        let mut header: Vec<String> = [
            "threshold",
            "monitor",
            "target",
            "fault_a",
            "fault_b",
            "detection",
            "scenario",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(CostStream::ALL.iter().map(|s| s.as_str().to_string()));
        let mut t = Table::new(&header);
        let opt = |v: Option<Epoch>| v.map(|x| x.to_string()).unwrap_or_default();
        for tp in &r.thresholds {
            for p in tp.records.as_deref().unwrap_or_default() {
                let costs = relative_costs(&p.record);
                let mut row = vec![
                    tp.threshold.reference.to_string(),
                    p.monitor.to_string(),
                    p.target.to_string(),
                    opt(p.record.fault_a),
                    opt(p.record.fault_b),
                    opt(p.record.detection),
                    classify_scenario(&p.record).as_str().into(),
                ];
                row.extend(costs.rho.iter().map(|&v| fmt_f64(v)));
                t.push(row);
            }
        }
        t
    } else {
        let mut t = Table::new(&["threshold", "stream", "bin_lo", "bin_hi", "count"]);
        for tp in &r.thresholds {
            for s in CostStream::ALL {
                for (b, &c) in tp.histogram[s.index()].iter().enumerate() {
                    t.push(vec![
                        tp.threshold.reference.to_string(),
                        s.as_str().into(),
                        fmt_f64(b as f64 / HISTOGRAM_BINS as f64),
                        fmt_f64((b + 1) as f64 / HISTOGRAM_BINS as f64),
                        c.to_string(),
                    ]);
                }
            }
        }
        t
    }
}

pub fn write_profile(out: &Path, r: &ProfileResult) -> Result<()> {
    write_table(&out.join("frequencies.csv"), &frequencies_table(r))?;
    write_table(&out.join("cost_summary.csv"), &cost_summary_table(r))?;
    write_table(&out.join("pair_costs.csv"), &pair_costs_table(r))?;
    write_json(
        &out.join("metadata.json"),
        &metadata("profile", &r.config, &r.plan, Some(&r.digest)),
    )
}

/// Outputs of one simulated network: the all-pairs detector and, when data
/// is supplied, the aggregation layers.
pub(crate) struct Simulated {
    pub detector: Option<PairDetector>,
    pub aggregation: Option<AggregationOutcome>,
}

pub(crate) fn simulate(
    sim: &SimConfig,
    plan: &FaultPlan,
    series: Option<&[Vec<f64>]>,
    agg: AggregationConfig,
    with_detector: bool,
) -> Result<Simulated> {
    let mut kernel = Simulation::new(sim, plan)?;
    let mut detector = with_detector.then(|| {
        PairDetector::new(
            sim.n_nodes,
            sim.monitoring_since(),
            sim.epochs,
            &sim.thresholds,
        )
    });
    let mut app = series
        .map(|s| AggregationRun::new(s, &sim.thresholds, sim.bootstrap_epochs, sim.seed, agg));
    {
        let mut observers: Vec<&mut dyn EpochObserver> = Vec::new();
        if let Some(d) = detector.as_mut() {
            observers.push(d);
        }
        if let Some(a) = app.as_mut() {
            observers.push(a);
        }
        kernel.run(&mut observers);
    }
    Ok(Simulated {
        detector,
        aggregation: app.map(AggregationRun::finish),
    })
}

/// Aggregation run with one corrective layer per threshold (actual epochs).
pub fn run_aggregation(
    sim: &SimConfig,
    plan: &FaultPlan,
    series: &[Vec<f64>],
    agg: AggregationConfig,
) -> Result<AggregationOutcome> {
    Ok(simulate(sim, plan, Some(series), agg, false)?
        .aggregation
        .expect("aggregation requested"))
}

pub fn aggregate(cfg: &ExperimentConfig, series: &[Vec<f64>]) -> Result<AggregationOutcome> {
    cfg.validate()?;
    let plan = cfg.fault_plan()?;
    run_aggregation(
        &cfg.sim_config(),
        &plan,
        series,
        AggregationConfig { memory: cfg.memory },
    )
}

fn event_fields(e: &AgentEvent) -> (&'static str, String) {
    match &e.kind {
        AgentEventKind::Migrated { host } => ("migrated", host.to_string()),
        AgentEventKind::MigrationFailed => ("migration_failed", String::new()),
        AgentEventKind::Detected { host } => ("detected", host.to_string()),
        AgentEventKind::Rollback { consumer, applied } => (
            if *applied {
                "rollback"
            } else {
                "rollback_noop"
            },
            consumer.to_string(),
        ),
        AgentEventKind::SkippedConsumer { consumer } => ("skipped_consumer", consumer.to_string()),
        AgentEventKind::CorrectionComplete => ("correction_complete", String::new()),
        AgentEventKind::Returned => ("returned", String::new()),
        AgentEventKind::Lost => ("lost", String::new()),
    }
}

pub fn timeseries_table(outcome: &AggregationOutcome, corrective_layer: usize) -> Table {
    let mut t = Table::new(&[
        "epoch",
        "actual_sum",
        "faulty_estimate_mean",
        "corrective_estimate_mean",
        "avg_rel_error_faulty",
        "avg_rel_error_corrective",
    ]);
    let faulty = &outcome.layers[0];
    let corr = &outcome.layers[corrective_layer];
    for (i, &actual) in outcome.actual.iter().enumerate() {
        t.push(vec![
            (i + 1).to_string(),
            fmt_f64(actual),
            fmt_f64(faulty.mean_estimate[i]),
            fmt_f64(corr.mean_estimate[i]),
            fmt_f64(faulty.avg_rel_error[i]),
            fmt_f64(corr.avg_rel_error[i]),
        ]);
    }
    t
}

pub fn write_aggregate(
    out: &Path,
    cfg: &ExperimentConfig,
    outcome: &AggregationOutcome,
) -> Result<()> {
    let specs = cfg.resolved_thresholds();
    let first = specs[0].actual;
    let layer = outcome
        .layer_for(first)
        .expect("configured threshold simulated");
    write_table(
        &out.join("timeseries.csv"),
        &timeseries_table(outcome, layer),
    )?;

    let mut summary = Table::new(&[
        "layer",
        "threshold_ref",
        "threshold",
        "estimate_rmse",
        "app_error",
    ]);
    summary.push(vec![
        "faulty".into(),
        String::new(),
        String::new(),
        fmt_f64(outcome.estimate_rmse(0)),
        fmt_f64(outcome.app_error(0)),
    ]);
    let mut seen = Vec::new();
    for spec in &specs {
        if seen.contains(&spec.actual) {
            continue;
        }
        seen.push(spec.actual);
        let l = outcome.layer_for(spec.actual).expect("threshold simulated");
        summary.push(vec![
            "corrective".into(),
            spec.reference.to_string(),
            spec.actual.to_string(),
            fmt_f64(outcome.estimate_rmse(l)),
            fmt_f64(outcome.app_error(l)),
        ]);
    }
    write_table(&out.join("aggregate_summary.csv"), &summary)?;

    let mut events = Table::new(&["epoch", "threshold", "parent", "kind", "peer"]);
    for e in &outcome.events {
        let (kind, peer) = event_fields(e);
        events.push(vec![
            e.epoch.to_string(),
            e.threshold.to_string(),
            e.parent.to_string(),
            kind.into(),
            peer,
        ]);
    }
    write_table(&out.join("events.csv"), &events)?;

    let plan = cfg.fault_plan()?;
    write_json(
        &out.join("metadata.json"),
        &metadata("aggregate", cfg, &plan, None),
    )
}
