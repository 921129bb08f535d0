use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::output::{parse_f64, read_table};
use super::{ExperimentError, Result};
use crate::calibration::{
    elastic_net_fit, feature_names, fit_lambda, generalization_sweep, ols_fit, pearson, rmse,
    scale_key, CalibrationConfig, GeneralizationRow, LinearModel, SettingRow, Standardization,
    StreamSums, FEATURE_COUNT,
};
use crate::fault_model::{CostStream, CostWeights, STREAM_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    None,
    FnLambda,
    Ols,
    ElasticNet,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::FnLambda => "fn-lambda",
            Method::Ols => "ols",
            Method::ElasticNet => "elastic-net",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Method::None,
            Method::FnLambda,
            Method::Ols,
            Method::ElasticNet,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
    }

    fn uses_features(self) -> bool {
        matches!(self, Method::Ols | Method::ElasticNet)
    }
}

/// Profile part of a setting key such as `P2-s0.50-t100`.
pub fn key_profile(key: &str) -> String {
    key.split('-').next().unwrap_or("").to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub method: Method,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub standardization: Option<Standardization>,
    /// Fitted λ per fault scale (fn-lambda only).
    pub lambda: BTreeMap<String, f64>,
    pub config: CalibrationConfig,
    pub train_profiles: Vec<String>,
    pub feature_names: Vec<String>,
    pub converged: bool,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub setting_key: String,
    pub method: Method,
    pub predicted: f64,
    pub target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub method: Method,
    pub rows: Vec<PredictionRow>,
    pub rmse: f64,
    pub pearson: Option<f64>,
    /// Elastic net only: RMSE(C_GR, C_D) − RMSE(C_GR, C_R) over the
    /// validation settings.
    pub accuracy_loss: Option<f64>,
    pub generalization: Vec<GeneralizationRow>,
}

pub fn read_features(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let t = read_table(path)?;
    let mut expected = vec!["setting_key".to_string()];
    expected.extend(feature_names());
    if t.header != expected {
        return Err(ExperimentError::Data(format!(
            "{}: expected header setting_key,f00..f59,rel_threshold,scale",
            path.display()
        )));
    }
    t.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != FEATURE_COUNT + 1 {
                return Err(ExperimentError::Data(format!(
                    "row {}: expected {} columns",
                    i + 1,
                    FEATURE_COUNT + 1
                )));
            }
            let vals = row[1..]
                .iter()
                .zip(&expected[1..])
                .map(|(s, c)| parse_f64(s, i + 1, c))
                .collect::<Result<Vec<f64>>>()?;
            Ok((row[0].clone(), vals))
        })
        .collect()
}

pub fn read_targets(path: &Path) -> Result<BTreeMap<String, f64>> {
    let t = read_table(path)?;
    let (k, v) = match (t.column("setting_key"), t.column("target")) {
        (Some(k), Some(v)) => (k, v),
        _ => {
            return Err(ExperimentError::Data(format!(
                "{}: needs setting_key and target columns",
                path.display()
            )))
        }
    };
    let mut out = BTreeMap::new();
    for (i, row) in t.rows.iter().enumerate() {
        let key = row.get(k).cloned().unwrap_or_default();
        let val = parse_f64(
            row.get(v).map(String::as_str).unwrap_or(""),
            i + 1,
            "target",
        )?;
        if out.insert(key.clone(), val).is_some() {
            return Err(ExperimentError::Data(format!(
                "row {}: duplicate key {key}",
                i + 1
            )));
        }
    }
    Ok(out)
}

pub fn read_stream_costs(path: &Path) -> Result<Vec<StreamSums>> {
    let t = read_table(path)?;
    let col = |name: &str| {
        t.column(name).ok_or_else(|| {
            ExperimentError::Data(format!("{}: missing column {name}", path.display()))
        })
    };
    let (ck, cs, cp) = (col("setting_key")?, col("scale")?, col("pairs")?);
    let stream_cols = CostStream::ALL
        .iter()
        .map(|s| col(s.as_str()))
        .collect::<Result<Vec<usize>>>()?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let line = i + 1;
            let get = |c: usize| row.get(c).map(String::as_str).unwrap_or("");
            let mut sums = [0.0; STREAM_COUNT];
            for (j, &c) in stream_cols.iter().enumerate() {
                sums[j] = parse_f64(get(c), line, CostStream::ALL[j].as_str())?;
            }
            let pairs = get(cp).parse::<u64>().map_err(|_| {
                ExperimentError::Data(format!("row {line}: column pairs: not an integer"))
            })?;
            Ok(StreamSums {
                setting_key: get(ck).to_string(),
                scale: parse_f64(get(cs), line, "scale")?,
                pairs,
                sums,
            })
        })
        .collect()
}

fn check_keys<'a, I: IntoIterator<Item = &'a String>>(
    keys: I,
    targets: &BTreeMap<String, f64>,
) -> Result<()> {
    let have: BTreeSet<&String> = keys.into_iter().collect();
    let missing_targets: Vec<&str> = have
        .iter()
        .filter(|k| !targets.contains_key(**k))
        .map(|k| k.as_str())
        .collect();
    let missing_inputs: Vec<&str> = targets
        .keys()
        .filter(|k| !have.contains(k))
        .map(String::as_str)
        .collect();
    if missing_targets.is_empty() && missing_inputs.is_empty() {
        return Ok(());
    }
    Err(ExperimentError::Data(format!(
        "setting keys do not align; without target: [{}]; without inputs: [{}]",
        missing_targets.join(", "),
        missing_inputs.join(", ")
    )))
}

fn in_train(key: &str, train: &[String]) -> bool {
    train.is_empty() || train.contains(&key_profile(key))
}

fn report(method: Method, rows: Vec<PredictionRow>) -> PredictionReport {
    let p: Vec<f64> = rows.iter().map(|r| r.predicted).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.target.unwrap_or(0.0)).collect();
    PredictionReport {
        method,
        rmse: rmse(&p, &y),
        pearson: pearson(&p, &y),
        rows,
        accuracy_loss: None,
        generalization: Vec::new(),
    }
}

/// Fit a calibrator and evaluate it on every setting.
///
/// `none` and `fn-lambda` read the per-stream cost sums; `ols` and
/// `elastic-net` read the feature vectors. `train_profiles` limits the
/// fitting rows (empty means all).
pub fn calibrate(
    method: Method,
    features: Option<&[(String, Vec<f64>)]>,
    costs: Option<&[StreamSums]>,
    targets: &BTreeMap<String, f64>,
    config: &CalibrationConfig,
    train_profiles: &[String],
) -> Result<(CalibrationModel, PredictionReport)> {
    config.validate()?;
    let weights = CostWeights::default();
    let mut model = CalibrationModel {
        method,
        coefficients: Vec::new(),
        intercept: 0.0,
        standardization: None,
        lambda: BTreeMap::new(),
        config: config.clone(),
        train_profiles: train_profiles.to_vec(),
        feature_names: if method.uses_features() {
            feature_names()
        } else {
            Vec::new()
        },
        converged: true,
        rank_deficient: false,
    };
    if !method.uses_features() {
        let costs = costs.ok_or_else(|| {
            ExperimentError::Config(format!("--costs is required for {}", method.as_str()))
        })?;
        check_keys(costs.iter().map(|c| &c.setting_key), targets)?;
        if method == Method::FnLambda {
            let (train, y): (Vec<StreamSums>, Vec<f64>) = costs
                .iter()
                .filter(|c| in_train(&c.setting_key, train_profiles))
                .map(|c| (c.clone(), targets[&c.setting_key]))
                .unzip();
            if train.is_empty() {
                return Err(ExperimentError::Data(
                    "no training settings for the given profiles".into(),
                ));
            }
            model.lambda = fit_lambda(&train, &y, &config.lambda_grid, &weights)?;
        }
        let rows = costs
            .iter()
            .map(|c| PredictionRow {
                setting_key: c.setting_key.clone(),
                method,
                predicted: predict_cost(&model, c),
                target: Some(targets[&c.setting_key]),
            })
            .collect();
        return Ok((model.clone(), report(method, rows)));
    }

    let features = features.ok_or_else(|| {
        ExperimentError::Config(format!("--features is required for {}", method.as_str()))
    })?;
    check_keys(features.iter().map(|f| &f.0), targets)?;
    let (tx, ty): (Vec<Vec<f64>>, Vec<f64>) = features
        .iter()
        .filter(|(k, _)| in_train(k, train_profiles))
        .map(|(k, x)| (x.clone(), targets[k]))
        .unzip();
    if tx.is_empty() {
        return Err(ExperimentError::Data(
            "no training settings for the given profiles".into(),
        ));
    }
    let fit: LinearModel = match method {
        Method::Ols => ols_fit(&tx, &ty)?,
        _ => elastic_net_fit(&tx, &ty, config.elastic_alpha, config.elastic_l1_ratio)?,
    };
    model.coefficients = fit.coefficients.clone();
    model.intercept = fit.intercept;
    model.standardization = fit.standardization.clone();
    model.converged = fit.converged;
    model.rank_deficient = fit.rank_deficient;
    let rows: Vec<PredictionRow> = features
        .iter()
        .map(|(k, x)| PredictionRow {
            setting_key: k.clone(),
            method,
            predicted: fit.predict(x),
            target: Some(targets[k]),
        })
        .collect();
    let mut rep = report(method, rows);
    if method == Method::ElasticNet {
        let all_x: Vec<Vec<f64>> = features.iter().map(|f| f.1.clone()).collect();
        let all_y: Vec<f64> = features.iter().map(|f| targets[&f.0]).collect();
        let ols = ols_fit(&all_x, &all_y)?;
        let held_out: Vec<usize> = (0..features.len())
            .filter(|&i| train_profiles.is_empty() || !in_train(&features[i].0, train_profiles))
            .collect();
        let c_gr: Vec<f64> = held_out
            .iter()
            .map(|&i| fit.predict(&features[i].1))
            .collect();
        let c_r: Vec<f64> = held_out
            .iter()
            .map(|&i| ols.predict(&features[i].1))
            .collect();
        let c_d: Vec<f64> = held_out.iter().map(|&i| all_y[i]).collect();
        rep.accuracy_loss = Some(rmse(&c_gr, &c_d) - rmse(&c_gr, &c_r));
        let setting_rows: Vec<SettingRow> = features
            .iter()
            .map(|(k, x)| SettingRow {
                key: k.clone(),
                profile: key_profile(k),
                features: x.clone(),
                target: targets[k],
            })
            .collect();
        rep.generalization = generalization_sweep(&setting_rows, config)?;
    }
    Ok((model, rep))
}

fn predict_cost(model: &CalibrationModel, c: &StreamSums) -> f64 {
    let lambda = match model.method {
        Method::FnLambda => model
            .lambda
            .get(&scale_key(c.scale))
            .copied()
            .unwrap_or(model.config.lambda),
        _ => 1.0,
    };
    c.normalized_cost(&CostWeights::default(), lambda)
}

/// Apply a stored model to new settings.
pub fn predict(
    model: &CalibrationModel,
    features: Option<&[(String, Vec<f64>)]>,
    costs: Option<&[StreamSums]>,
) -> Result<Vec<PredictionRow>> {
    if model.method.uses_features() {
        let features = features.ok_or_else(|| {
            ExperimentError::Config("--features is required for this model".into())
        })?;
        let lm = LinearModel {
            coefficients: model.coefficients.clone(),
            intercept: model.intercept,
            standardization: None,
            rank_deficient: model.rank_deficient,
            converged: model.converged,
            iterations: 0,
        };
        if let Some((k, x)) = features
            .iter()
            .find(|(_, x)| x.len() != lm.coefficients.len())
        {
            return Err(ExperimentError::Data(format!(
                "setting {k}: {} features, model has {}",
                x.len(),
                lm.coefficients.len()
            )));
        }
        Ok(features
            .iter()
            .map(|(k, x)| PredictionRow {
                setting_key: k.clone(),
                method: model.method,
                predicted: lm.predict(x),
                target: None,
            })
            .collect())
    } else {
        let costs = costs
            .ok_or_else(|| ExperimentError::Config("--costs is required for this model".into()))?;
        Ok(costs
            .iter()
            .map(|c| PredictionRow {
                setting_key: c.setting_key.clone(),
                method: model.method,
                predicted: predict_cost(model, c),
                target: None,
            })
            .collect())
    }
}
