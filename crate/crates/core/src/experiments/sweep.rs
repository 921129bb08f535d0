use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{SweepSpec, ThresholdSpec, MAX_REFERENCE_THRESHOLD};
use super::dataset::ConsumptionDataset;
use super::output::{fmt_f64, write_json, write_table, Table};
use super::profile::simulate;
use super::{ExperimentError, Result};
use crate::aggregation::AggregationConfig;
use crate::calibration::{extract_features, feature_names, StreamPopulations};
use crate::derive_seed;
use crate::fault_model::{
    classify_scenario, relative_costs, CostStream, CostSummary, CostWeights, STREAM_COUNT,
};
use crate::simkernel::FaultProfile;

pub fn setting_key(profile: FaultProfile, scale: f64, reference_threshold: u32) -> String {
    format!(
        "{}-s{:.2}-t{}",
        profile.as_str(),
        scale,
        reference_threshold
    )
}

fn group_key(profile: FaultProfile, scale: f64) -> String {
    format!("{}-s{:.2}", profile.as_str(), scale)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettingResult {
    pub key: String,
    pub profile: FaultProfile,
    pub scale: f64,
    pub threshold: ThresholdSpec,
    pub seed: u64,
    pub pairs: u64,
    pub summary: CostSummary,
    pub stream_sums: [f64; STREAM_COUNT],
    pub features: Vec<f64>,
    /// Mean post-bootstrap relative error of the corrective layer.
    pub app_error: f64,
    pub estimate_rmse: f64,
    pub faulty_app_error: f64,
    pub faulty_rmse: f64,
}

impl SettingResult {
    pub fn normalized_cost(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.summary.c_total / self.pairs as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub settings: Vec<SettingResult>,
    /// (setting key, error) for settings that could not run.
    pub failures: Vec<(String, String)>,
}

fn run_group(
    spec: &SweepSpec,
    profile: FaultProfile,
    scale: f64,
    data: &ConsumptionDataset,
) -> Result<Vec<SettingResult>> {
    let seed = derive_seed(spec.seed, &group_key(profile, scale));
    let cfg = spec.setting_config(profile, scale, seed);
    cfg.validate()?;
    let plan = cfg.fault_plan()?;
    let series = data.take(cfg.n_nodes)?;
    let sim = cfg.sim_config();
    let out = simulate(
        &sim,
        &plan,
        Some(&series),
        AggregationConfig { memory: cfg.memory },
        true,
    )?;
    let det = out.detector.expect("detector requested");
    let agg = out.aggregation.expect("aggregation requested");
    let weights = CostWeights::default();
    let mut rows = Vec::new();
    for tspec in cfg.resolved_thresholds() {
        let ti = det
            .thresholds()
            .iter()
            .position(|&t| t == tspec.actual)
            .expect("threshold simulated");
        let mut pops = StreamPopulations::default();
        let mut sums = [0.0; STREAM_COUNT];
        let mut summary = CostSummary::default();
        let mut pairs = 0u64;
        det.for_each_record(ti, |p| {
            pairs += 1;
            pops.push(&p.record);
            let costs = relative_costs(&p.record);
            for &s in classify_scenario(&p.record).streams() {
                let v = costs.get(s);
                sums[s.index()] += v;
                summary.add(s, weights.weight(s) * v);
            }
        });
        let layer = agg.layer_for(tspec.actual).expect("layer per threshold");
        rows.push(SettingResult {
            key: setting_key(profile, scale, tspec.reference),
            profile,
            scale,
            threshold: tspec,
            seed,
            pairs,
            summary,
            stream_sums: sums,
            features: extract_features(
                &pops,
                tspec.reference as f64,
                MAX_REFERENCE_THRESHOLD as f64,
                scale,
            ),
            app_error: agg.app_error(layer),
            estimate_rmse: agg.estimate_rmse(layer),
            faulty_app_error: agg.app_error(0),
            faulty_rmse: agg.estimate_rmse(0),
        });
    }
    Ok(rows)
}

/// Run every (profile, scale, threshold) setting. All thresholds of a
/// (profile, scale) pair share one simulated network; groups run in parallel
/// on `workers` threads and results come back in spec order.
pub fn run_sweep(
    spec: &SweepSpec,
    data: &ConsumptionDataset,
    workers: Option<usize>,
) -> Result<SweepResult> {
    spec.validate()?;
    let groups: Vec<(FaultProfile, f64)> = spec
        .profiles
        .iter()
        .flat_map(|&p| spec.fault_scales.iter().map(move |&s| (p, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(spec.parallelism).max(1))
        .build()
        .map_err(|e| ExperimentError::Config(format!("parallelism: {e}")))?;
    let results: Vec<Result<Vec<SettingResult>>> = pool.install(|| {
        groups
            .par_iter()
            .map(|&(p, s)| run_group(spec, p, s, data))
            .collect()
    });
    let mut settings = Vec::new();
    let mut failures = Vec::new();
    for ((p, s), r) in groups.iter().zip(results) {
        match r {
            Ok(rows) => settings.extend(rows),
            Err(e) => {
                log::warn!("sweep group {} failed: {e}", group_key(*p, *s));
                for &t in &spec.thresholds {
                    failures.push((setting_key(*p, *s, t), e.to_string()));
                }
            }
        }
    }
    Ok(SweepResult {
        spec: spec.clone(),
        settings,
        failures,
    })
}

pub fn results_table(r: &SweepResult) -> Table {
    let mut t = Table::new(&[
        "profile",
        "scale",
        "threshold",
        "seed",
        "c_fp",
        "c_fn",
        "c_total",
        "app_error",
    ]);
    for s in &r.settings {
        t.push(vec![
            s.profile.as_str().into(),
            fmt_f64(s.scale),
            s.threshold.reference.to_string(),
            s.seed.to_string(),
            fmt_f64(s.summary.c_fp),
            fmt_f64(s.summary.c_fn),
            fmt_f64(s.summary.c_total),
            fmt_f64(s.app_error),
        ]);
    }
    t
}

pub fn features_table(r: &SweepResult) -> Table {
    let mut header = vec!["setting_key".to_string()];
    header.extend(feature_names());
    let mut t = Table::new(&header);
    for s in &r.settings {
        let mut row = vec![s.key.clone()];
        row.extend(s.features.iter().map(|&v| fmt_f64(v)));
        t.push(row);
    }
    t
}

pub fn stream_costs_table(r: &SweepResult) -> Table {
    let mut header: Vec<String> = ["setting_key", "scale", "pairs"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(CostStream::ALL.iter().map(|s| s.as_str().to_string()));
    let mut t = Table::new(&header);
    for s in &r.settings {
        let mut row = vec![s.key.clone(), fmt_f64(s.scale), s.pairs.to_string()];
        row.extend(s.stream_sums.iter().map(|&v| fmt_f64(v)));
        t.push(row);
    }
    t
}

pub fn targets_table(r: &SweepResult) -> Table {
    let mut t = Table::new(&["setting_key", "target"]);
    for s in &r.settings {
        t.push(vec![s.key.clone(), fmt_f64(s.app_error)]);
    }
    t
}

#[derive(Serialize)]
struct SweepMetadata<'a> {
    command: &'static str,
    spec: &'a SweepSpec,
    thresholds: Vec<ThresholdSpec>,
    settings: usize,
    failed: usize,
    max_reference_threshold: u32,
    seed_derivation: &'static str,
}

pub fn write_sweep(out: &Path, r: &SweepResult) -> Result<()> {
    write_table(&out.join("results.csv"), &results_table(r))?;
    write_table(&out.join("features.csv"), &features_table(r))?;
    write_table(&out.join("stream_costs.csv"), &stream_costs_table(r))?;
    write_table(&out.join("targets.csv"), &targets_table(r))?;
    let mut failures = Table::new(&["setting_key", "error"]);
    for (k, e) in &r.failures {
        failures.push(vec![k.clone(), e.clone()]);
    }
    write_table(&out.join("failures.csv"), &failures)?;
    let thresholds = r
        .spec
        .setting_config(r.spec.profiles[0], r.spec.fault_scales[0], 0)
        .resolved_thresholds();
    write_json(
        &out.join("metadata.json"),
        &SweepMetadata {
            command: "sweep",
            spec: &r.spec,
            thresholds,
            settings: r.settings.len(),
            failed: r.failures.len(),
            max_reference_threshold: MAX_REFERENCE_THRESHOLD,
            seed_derivation:
                "sha256(seed || \"<profile>-s<scale>\"), one network per profile and scale",
        },
    )
}
