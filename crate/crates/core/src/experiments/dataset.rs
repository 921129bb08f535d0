use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::output::{fmt_f64, parse_f64, read_table, write_table, Table};
use super::{ExperimentError, Result};
use crate::aggregation::RECORDS_PER_DAY;
use crate::rng_for;

/// Half-hourly load readings (kW), one row of 48 per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionDataset {
    pub values: Vec<Vec<f64>>,
}

impl ConsumptionDataset {
    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    /// First `n` nodes, or an error when the dataset is too small.
    pub fn take(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        if self.values.len() < n {
            return Err(ExperimentError::Data(format!(
                "dataset has {} nodes, configuration needs {n}",
                self.values.len()
            )));
        }
        Ok(self.values[..n].to_vec())
    }
}

fn header() -> Vec<String> {
    let mut h = vec!["node_id".to_string()];
    h.extend((0..RECORDS_PER_DAY).map(|i| format!("r{i:02}")));
    h
}

/// Base load plus daily and half-daily harmonics and Gaussian noise,
/// clamped at zero and rounded to 0.1 W.
pub fn gen_synthetic(nodes: usize, seed: u64) -> ConsumptionDataset {
    let mut rng = rng_for(seed, "dataset");
    let values = (0..nodes)
        .map(|_| {
            let base: f64 = rng.gen_range(0.2..1.2);
            let a1 = base * rng.gen_range(0.2..0.6);
            let p1 = rng.gen_range(0.0..TAU);
            let a2 = base * rng.gen_range(0.05..0.3);
            let p2 = rng.gen_range(0.0..TAU);
            let noise = Normal::new(0.0, 0.05 * base).expect("positive deviation");
            (0..RECORDS_PER_DAY)
                .map(|h| {
                    let x = TAU * h as f64 / RECORDS_PER_DAY as f64;
                    let v = base
                        + a1 * (x + p1).sin()
                        + a2 * (2.0 * x + p2).sin()
                        + noise.sample(&mut rng);
                    (v.max(0.0) * 1e4).round() / 1e4
                })
                .collect()
        })
        .collect();
    ConsumptionDataset { values }
}

pub fn dataset_table(ds: &ConsumptionDataset) -> Table {
    let mut t = Table::new(&header());
    for (i, row) in ds.values.iter().enumerate() {
        let mut r = vec![i.to_string()];
        r.extend(row.iter().map(|&v| fmt_f64(v)));
        t.push(r);
    }
    t
}

pub fn write_dataset(path: &Path, ds: &ConsumptionDataset) -> Result<()> {
    write_table(path, &dataset_table(ds))
}

pub fn parse_dataset(t: &Table) -> Result<ConsumptionDataset> {
    let mut values = Vec::with_capacity(t.rows.len());
    for (i, row) in t.rows.iter().enumerate() {
        let line = i + 1;
        if row.len() != RECORDS_PER_DAY + 1 {
            return Err(ExperimentError::Data(format!(
                "row {line}: expected {RECORDS_PER_DAY} values, found {}",
                row.len().saturating_sub(1)
            )));
        }
        let vals = row[1..]
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let v = parse_f64(s, line, &format!("r{j:02}"))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(ExperimentError::Data(format!(
                        "row {line}: negative or non-finite value {v}"
                    )));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        values.push(vals);
    }
    Ok(ConsumptionDataset { values })
}

pub fn read_dataset(path: &Path) -> Result<ConsumptionDataset> {
    parse_dataset(&read_table(path)?)
}
