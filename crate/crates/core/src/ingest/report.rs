use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

pub const REPORT_VERSION: u32 = 1;

/// Four summary fields shared by every metric entry.
///
/// `cov` is `None` when the mean is too close to zero for the ratio to mean
/// anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub cov: Option<f64>,
    pub std: f64,
    pub count: u64,
}

impl MetricStat {
    /// A single observed value (tallies, rates).
    pub fn scalar(value: f64, count: u64) -> Self {
        Self {
            mean: value,
            cov: None,
            std: 0.0,
            count,
        }
    }
}

/// Class-count thresholds in effect when the report was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinCount {
    /// Minimum samples for a class mean to enter geometry metrics.
    pub geometry: u64,
    /// Minimum samples for a class variance to enter CDNV.
    pub variance: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Input role (or path) to hex SHA-256 digest.
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub version: u32,
    pub num_classes: u64,
    pub dim: u64,
    pub included_classes: u64,
    pub min_count: MinCount,
    pub metrics: BTreeMap<String, MetricStat>,
    pub provenance: Provenance,
}

impl MetricReport {
    pub fn new(num_classes: u64, dim: u64, min_count: MinCount, provenance: Provenance) -> Self {
        Self {
            version: REPORT_VERSION,
            num_classes,
            dim,
            included_classes: 0,
            min_count,
            metrics: BTreeMap::new(),
            provenance,
        }
    }

    pub fn insert(&mut self, name: &str, stat: MetricStat) {
        self.metrics.insert(name.to_owned(), stat);
    }

    pub fn get(&self, name: &str) -> Option<&MetricStat> {
        self.metrics.get(name)
    }
}

/// Rebuilds every object with its keys in sorted order, independent of how
/// `serde_json::Map` happens to be backed.
fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Pretty-printed JSON with sorted keys and shortest round-trip reals,
/// terminated by a newline.
pub fn write_report(report: &MetricReport) -> Result<Vec<u8>> {
    let value = sort_keys(serde_json::to_value(report)?);
    let mut out = serde_json::to_vec_pretty(&value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn parse_report(bytes: &[u8]) -> Result<MetricReport> {
    Ok(serde_json::from_slice(bytes)?)
}
