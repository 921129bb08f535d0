//! Predicting application error from the cost model.
//!
//! Three calibrators map the application-agnostic inconsistency cost onto the
//! error measured in the aggregation application:
//! - a scalar λ that discounts the four dead-monitor false-negative streams,
//! - ordinary least squares on a 62-value feature vector,
//! - elastic net on the same features, trained on a subset of fault profiles.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault_model::{
    classify_scenario, relative_costs, CostStream, CostSummary, CostWeights, MonitoredPair,
    PairRecord, STREAM_COUNT,
};

pub const QUANTILE_LEVELS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const FEATURE_COUNT: usize = STREAM_COUNT * QUANTILE_LEVELS.len() + 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("empty lambda grid")]
    EmptyGrid,
    #[error("no training rows")]
    EmptyTrainSet,
    #[error("length mismatch: {0} rows vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("invalid calibration config: {0}")]
    Config(String),
}

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Per-pair cost populations of the 12 streams. A stream's population is
/// every pair in the stream's scenario, zero-cost pairs included.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamPopulations {
    pub values: [Vec<f64>; STREAM_COUNT],
}

impl StreamPopulations {
    pub fn push(&mut self, rec: &PairRecord) {
        let costs = relative_costs(rec);
        for &s in classify_scenario(rec).streams() {
            self.values[s.index()].push(costs.get(s));
        }
    }

    pub fn from_records<'a, I: IntoIterator<Item = &'a PairRecord>>(records: I) -> Self {
        let mut p = Self::default();
        for r in records {
            p.push(r);
        }
        p
    }

    pub fn from_pairs(pairs: &[MonitoredPair]) -> Self {
        Self::from_records(pairs.iter().map(|p| &p.record))
    }
}

pub type FeatureVector = Vec<f64>;

pub fn extract_features(
    pops: &StreamPopulations,
    threshold: f64,
    max_threshold: f64,
    fault_scale: f64,
) -> FeatureVector {
    let mut out = Vec::with_capacity(FEATURE_COUNT);
    for pop in &pops.values {
        let mut sorted = pop.clone();
        sorted.sort_by(f64::total_cmp);
        for &q in &QUANTILE_LEVELS {
            out.push(quantile_sorted(&sorted, q));
        }
    }
    out.push(threshold / max_threshold);
    out.push(fault_scale);
    out
}

/// Header names of the 62 features.
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = (0..STREAM_COUNT * QUANTILE_LEVELS.len())
        .map(|i| format!("f{i:02}"))
        .collect();
    names.push("rel_threshold".into());
    names.push("scale".into());
    names
}

/// Eq. 1 with the dead-monitor false-negative streams scaled by `lambda`.
pub fn fn_calibrated_cost<'a, I>(records: I, weights: &CostWeights, lambda: f64) -> CostSummary
where
    I: IntoIterator<Item = &'a PairRecord>,
{
    let mut sums = [0.0; STREAM_COUNT];
    for r in records {
        let c = relative_costs(r);
        for (acc, v) in sums.iter_mut().zip(c.rho.iter()) {
            *acc += v;
        }
    }
    cost_from_stream_sums(&sums, weights, lambda)
}

/// Eq. 1 evaluated from per-stream sums of ρ.
pub fn cost_from_stream_sums(
    sums: &[f64; STREAM_COUNT],
    weights: &CostWeights,
    lambda: f64,
) -> CostSummary {
    let mut out = CostSummary::default();
    for s in CostStream::ALL {
        let factor = if s.is_dead_monitor_fn() { lambda } else { 1.0 };
        out.add(s, weights.weight(s) * factor * sums[s.index()]);
    }
    out
}

/// Per-stream ρ sums of one experimental setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSums {
    pub setting_key: String,
    pub scale: f64,
    pub pairs: u64,
    pub sums: [f64; STREAM_COUNT],
}

impl StreamSums {
    pub fn from_pairs(setting_key: &str, scale: f64, pairs: &[MonitoredPair]) -> Self {
        let mut sums = [0.0; STREAM_COUNT];
        for p in pairs {
            let c = relative_costs(&p.record);
            for (acc, v) in sums.iter_mut().zip(c.rho.iter()) {
                *acc += v;
            }
        }
        Self {
            setting_key: setting_key.to_string(),
            scale,
            pairs: pairs.len() as u64,
            sums,
        }
    }

    /// Calibrated cost normalized per monitored pair.
    pub fn normalized_cost(&self, weights: &CostWeights, lambda: f64) -> f64 {
        let c = cost_from_stream_sums(&self.sums, weights, lambda).c_total;
        if self.pairs == 0 {
            0.0
        } else {
            c / self.pairs as f64
        }
    }
}

/// Key used to group settings by fault scale.
pub fn scale_key(scale: f64) -> String {
    format!("{scale:.2}")
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rmse needs equal lengths");
    if a.is_empty() {
        return 0.0;
    }
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (sq / a.len() as f64).sqrt()
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson needs equal lengths");
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn default_lambda_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Best grid λ per fault scale; ties go to the smallest λ.
pub fn fit_lambda(
    settings: &[StreamSums],
    targets: &[f64],
    grid: &[f64],
    weights: &CostWeights,
) -> Result<BTreeMap<String, f64>, CalibrationError> {
    if grid.is_empty() {
        return Err(CalibrationError::EmptyGrid);
    }
    if settings.len() != targets.len() {
        return Err(CalibrationError::LengthMismatch(
            settings.len(),
            targets.len(),
        ));
    }
    let mut sorted_grid = grid.to_vec();
    sorted_grid.sort_by(f64::total_cmp);
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in settings.iter().enumerate() {
        groups.entry(scale_key(s.scale)).or_default().push(i);
    }
    let mut out = BTreeMap::new();
    for (key, idx) in groups {
        let y: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
        let mut best = (f64::INFINITY, sorted_grid[0]);
        for &lambda in &sorted_grid {
            let pred: Vec<f64> = idx
                .iter()
                .map(|&i| settings[i].normalized_cost(weights, lambda))
                .collect();
            let e = rmse(&pred, &y);
            if e < best.0 {
                best = (e, lambda);
            }
        }
        out.insert(key, best.1);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Coefficients in the original feature units.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub standardization: Option<Standardization>,
    pub rank_deficient: bool,
    pub converged: bool,
    pub iterations: usize,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    pub fn predict_all(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

fn column_means(x: &[Vec<f64>], p: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..p)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect()
}

fn check_shape(x: &[Vec<f64>], y: &[f64]) -> Result<usize, CalibrationError> {
    if x.is_empty() {
        return Err(CalibrationError::EmptyTrainSet);
    }
    if x.len() != y.len() {
        return Err(CalibrationError::LengthMismatch(x.len(), y.len()));
    }
    Ok(x[0].len())
}

/// Least squares with intercept via SVD of the centered design. Rank
/// deficiency yields the minimum-norm slope vector.
pub fn ols_fit(x: &[Vec<f64>], y: &[f64]) -> Result<LinearModel, CalibrationError> {
    let p = check_shape(x, y)?;
    let n = x.len();
    let mx = column_means(x, p);
    let my = y.iter().sum::<f64>() / n as f64;
    if p == 0 {
        return Ok(LinearModel {
            coefficients: Vec::new(),
            intercept: my,
            standardization: None,
            rank_deficient: false,
            converged: true,
            iterations: 0,
        });
    }
    let a = DMatrix::from_fn(n, p, |i, j| x[i][j] - mx[j]);
    let b = DVector::from_iterator(n, y.iter().map(|v| v - my));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * 1e-10).max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let rank_deficient = rank < p;
    if rank_deficient {
        log::warn!("ols_fit: design has rank {rank} < {p}; using the minimum-norm solution");
    }
    let beta = if smax > 0.0 {
        svd.solve(&b, eps).expect("svd computed with u and v")
    } else {
        DVector::zeros(p)
    };
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = my
        - coefficients
            .iter()
            .zip(&mx)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    Ok(LinearModel {
        coefficients,
        intercept,
        standardization: None,
        rank_deficient,
        converged: true,
        iterations: 0,
    })
}

pub const ENET_TOLERANCE: f64 = 1e-8;
pub const ENET_MAX_SWEEPS: usize = 100_000;

/// Elastic net by cyclic coordinate descent on standardized features:
/// `(1/2n)|r|^2 + alpha*l1*|b|_1 + alpha*(1-l1)/2*|b|^2`, intercept free.
pub fn elastic_net_fit(
    x: &[Vec<f64>],
    y: &[f64],
    alpha: f64,
    l1_ratio: f64,
) -> Result<LinearModel, CalibrationError> {
    let p = check_shape(x, y)?;
    let n = x.len();
    let nf = n as f64;
    let means = column_means(x, p);
    let scales: Vec<f64> = (0..p)
        .map(|j| (x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / nf).sqrt())
        .collect();
    // Column-major standardized design; constant columns stay all zero.
    let z: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            x.iter()
                .map(|r| {
                    if scales[j] > 0.0 {
                        (r[j] - means[j]) / scales[j]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let my = y.iter().sum::<f64>() / nf;
    let mut resid: Vec<f64> = y.iter().map(|v| v - my).collect();
    let mut beta = vec![0.0; p];
    let l1 = alpha * l1_ratio;
    let l2 = alpha * (1.0 - l1_ratio);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < ENET_MAX_SWEEPS {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if scales[j] == 0.0 {
                continue;
            }
            let zj = &z[j];
            let old = beta[j];
            let rho = zj.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + old;
            let new = soft_threshold(rho, l1) / (1.0 + l2);
            if new != old {
                let d = new - old;
                for (r, a) in resid.iter_mut().zip(zj) {
                    *r -= d * a;
                }
                beta[j] = new;
                max_delta = max_delta.max(d.abs());
            }
        }
        if max_delta < ENET_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("elastic_net_fit: no convergence after {sweeps} sweeps");
    }
    let coefficients: Vec<f64> = (0..p)
        .map(|j| {
            if scales[j] > 0.0 {
                beta[j] / scales[j]
            } else {
                0.0
            }
        })
        .collect();
    let intercept = my
        - coefficients
            .iter()
            .zip(&means)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    Ok(LinearModel {
        coefficients,
        intercept,
        standardization: Some(Standardization { means, scales }),
        rank_deficient: false,
        converged,
        iterations: sweeps,
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub elastic_alpha: f64,
    pub elastic_l1_ratio: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lambda_grid: default_lambda_grid(),
            elastic_alpha: 0.07,
            elastic_l1_ratio: 0.05,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: &str| Err(CalibrationError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.lambda_grid.is_empty() {
            return bad("lambda_grid must not be empty");
        }
        if self.lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return bad("lambda_grid entries must lie in [0, 1]");
        }
        if self.elastic_alpha < 0.0 || !self.elastic_alpha.is_finite() {
            return bad("elastic_alpha must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.elastic_l1_ratio) {
            return bad("elastic_l1_ratio must lie in [0, 1]");
        }
        Ok(())
    }
}

/// One experimental setting as seen by the regressions.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingRow {
    pub key: String,
    pub profile: String,
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationRow {
    pub train_profiles: Vec<String>,
    pub validate_profile: String,
    pub settings: usize,
    pub rmse_gr_d: f64,
    pub rmse_gr_r: f64,
    pub accuracy_loss: f64,
    pub pearson_gr_d: Option<f64>,
}

/// Every non-empty subset of `profiles`, smallest first.
pub fn profile_subsets(profiles: &[String]) -> Vec<Vec<String>> {
    let k = profiles.len();
    let mut subsets: Vec<Vec<String>> = (1u32..(1 << k))
        .map(|mask| {
            (0..k)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| profiles[i].clone())
                .collect()
        })
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
}

/// Elastic net trained on `train` profiles and validated on `validate`.
/// C_R is the OLS fit over all rows; the accuracy loss is
/// RMSE(C_GR, C_D) − RMSE(C_GR, C_R).
pub fn generalized_regression(
    rows: &[SettingRow],
    train: &[String],
    validate: &str,
    config: &CalibrationConfig,
) -> Result<GeneralizationRow, CalibrationError> {
    let all_x: Vec<Vec<f64>> = rows.iter().map(|r| r.features.clone()).collect();
    let all_y: Vec<f64> = rows.iter().map(|r| r.target).collect();
    let ols = ols_fit(&all_x, &all_y)?;
    let (tx, ty): (Vec<Vec<f64>>, Vec<f64>) = rows
        .iter()
        .filter(|r| train.contains(&r.profile))
        .map(|r| (r.features.clone(), r.target))
        .unzip();
    if tx.is_empty() {
        return Err(CalibrationError::EmptyTrainSet);
    }
    let enet = elastic_net_fit(&tx, &ty, config.elastic_alpha, config.elastic_l1_ratio)?;
    let vrows: Vec<&SettingRow> = rows.iter().filter(|r| r.profile == validate).collect();
    let c_gr: Vec<f64> = vrows.iter().map(|r| enet.predict(&r.features)).collect();
    let c_r: Vec<f64> = vrows.iter().map(|r| ols.predict(&r.features)).collect();
    let c_d: Vec<f64> = vrows.iter().map(|r| r.target).collect();
    let rmse_gr_d = rmse(&c_gr, &c_d);
    let rmse_gr_r = rmse(&c_gr, &c_r);
    Ok(GeneralizationRow {
        train_profiles: train.to_vec(),
        validate_profile: validate.to_string(),
        settings: vrows.len(),
        rmse_gr_d,
        rmse_gr_r,
        accuracy_loss: rmse_gr_d - rmse_gr_r,
        pearson_gr_d: pearson(&c_gr, &c_d),
    })
}

/// All train-subset × validate-profile combinations.
pub fn generalization_sweep(
    rows: &[SettingRow],
    config: &CalibrationConfig,
) -> Result<Vec<GeneralizationRow>, CalibrationError> {
    let mut profiles: Vec<String> = rows.iter().map(|r| r.profile.clone()).collect();
    profiles.sort();
    profiles.dedup();
    let mut out = Vec::new();
    for train in profile_subsets(&profiles) {
        for v in &profiles {
            out.push(generalized_regression(rows, &train, v, config)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fault_model::total_cost;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quantile_convention() {
        let pop: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        assert_abs_diff_eq!(quantile_sorted(&pop, 0.1), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile_sorted(&pop, 0.5), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile_sorted(&pop, 0.9), 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile_sorted(&[1.0, 2.0], 0.3), 1.3, epsilon = 1e-12);
    }

    #[test]
    fn empty_streams_give_zero_quantiles() {
        let f = extract_features(&StreamPopulations::default(), 400.0, 800.0, 0.5);
        assert_eq!(f.len(), FEATURE_COUNT);
        assert!(f[..60].iter().all(|&v| v == 0.0));
        assert_eq!(&f[60..], &[0.5, 0.5]);
    }

    #[test]
    fn constant_stream() {
        let mut pops = StreamPopulations::default();
        pops.values[CostStream::S2Fp.index()] = vec![0.3; 17];
        let f = extract_features(&pops, 1.0, 800.0, 0.1);
        let i = CostStream::S2Fp.index() * 5;
        assert!(f[i..i + 5].iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn lambda_one_is_total_cost() {
        let recs = [
            PairRecord::new(3200, 100, Some(1000), Some(2000), None).unwrap(),
            PairRecord::new(3200, 100, Some(2500), Some(1500), Some(1700)).unwrap(),
            PairRecord::new(3200, 100, None, None, Some(300)).unwrap(),
        ];
        let w = CostWeights::default();
        assert_eq!(fn_calibrated_cost(&recs, &w, 1.0), total_cost(&recs, &w));
        let s4 = [recs[0]];
        assert_eq!(fn_calibrated_cost(&s4, &w, 0.0).c_total, 0.0);
    }

    #[test]
    fn late_detection_half_lambda() {
        // S5.2: lag share (d - F_B)/(F_A - F_B) plus a post-death share of 1.
        let rec = PairRecord::new(3200, 150, Some(2900), Some(1500), Some(1752)).unwrap();
        let w = CostWeights::default();
        let c = fn_calibrated_cost([&rec], &w, 0.5);
        let lag = 252.0 / 1400.0;
        assert_abs_diff_eq!(c.c_fn, lag + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rmse_and_pearson_examples() {
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_abs_diff_eq!(
            rmse(&[0.0, 0.0], &[3.0, 4.0]),
            12.5f64.sqrt(),
            epsilon = 1e-12
        );
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_abs_diff_eq!(pearson(&x, &y).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[2.0, 3.0]), None);
    }

    #[test]
    fn ols_examples() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let m = ols_fit(&x, &[1.0, 3.0, 5.0]).unwrap();
        assert_abs_diff_eq!(m.coefficients[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.intercept, 1.0, epsilon = 1e-12);
        let m = ols_fit(&x, &[4.0, 4.0, 4.0]).unwrap();
        assert_abs_diff_eq!(m.coefficients[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.intercept, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn ols_rank_deficient_is_min_norm() {
        let x = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        let m = ols_fit(&x, &[2.0, 4.0, 6.0]).unwrap();
        assert!(m.rank_deficient);
        assert_abs_diff_eq!(m.coefficients[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.coefficients[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn huge_penalty_gives_mean() {
        let x = vec![
            vec![0.0, 1.0],
            vec![1.0, 0.5],
            vec![2.0, 0.1],
            vec![3.0, 0.7],
        ];
        let y = [1.0, 2.0, 2.5, 4.5];
        let m = elastic_net_fit(&x, &y, 1e6, 0.5).unwrap();
        assert!(m.coefficients.iter().all(|&b| b == 0.0));
        assert_abs_diff_eq!(m.intercept, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn subsets_of_three_profiles() {
        let p: Vec<String> = ["P1", "P2", "P3"].iter().map(|s| s.to_string()).collect();
        let s = profile_subsets(&p);
        assert_eq!(s.len(), 7);
        assert_eq!(s[0], vec!["P1".to_string()]);
        assert_eq!(s[6].len(), 3);
    }

    #[test]
    fn config_defaults_validate() {
        let c = CalibrationConfig::default();
        c.validate().unwrap();
        assert_eq!(c.lambda_grid.len(), 21);
        let bad = CalibrationConfig {
            elastic_l1_ratio: 1.5,
            ..c
        };
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("elastic_l1_ratio"));
    }
}
