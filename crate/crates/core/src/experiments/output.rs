use std::fs;
use std::path::Path;

use super::{ExperimentError, Result};

/// A CSV table held as strings. Floats are written with the shortest
/// representation that parses back to the same value.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(|e| ExperimentError::Data(format!("bad header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| ExperimentError::Data(format!("row {}: {e}", i + 1)))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn parse_f64(s: &str, row: usize, col: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| ExperimentError::Data(format!("row {row}: column {col}: not a number: {s:?}")))
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
        }
    }
    fs::write(path, table.to_csv_string()).map_err(|e| ExperimentError::io(path, e))
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    Table::from_csv_str(&text)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
        }
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::write(path, text).map_err(|e| ExperimentError::io(path, e))
}
