//! Evaluation report files: a per-image CSV and a versioned JSON summary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{summarize, ErrorStats};

pub const REPORT_SCHEMA: u32 = 1;
pub const CSV_HEADER: [&str; 7] = ["id", "mean", "median", "trimean", "best25", "worst25", "max"];

/// How an estimate was compared against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// One illuminant per image; the reference is recovered from the
    /// biased/corrected pair.
    SingleIlluminant,
    /// Per-pixel comparison of illumination maps.
    IlluminationMap,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::SingleIlluminant => "single-illuminant",
            Protocol::IlluminationMap => "illumination-map",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageErrors {
    pub id: String,
    pub stats: ErrorStats,
}

/// Dataset-level summary in the layout of the usual benchmark tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationReport {
    pub schema: u32,
    pub protocol: Protocol,
    pub estimator: String,
    /// How per-pixel errors were reduced before the dataset statistics.
    pub averaging: String,
    pub images: usize,
    pub stats: ErrorStats,
    #[serde(default)]
    pub excluded_ids: Vec<String>,
    #[serde(default)]
    pub config: serde_json::Value,
}

pub const PER_IMAGE_MEAN: &str = "per-image mean of per-pixel errors, then statistics over images";

impl EvaluationReport {
    /// Dataset statistics over the per-image mean errors.
    pub fn from_images(protocol: Protocol, estimator: &str, rows: &[ImageErrors]) -> Result<Self> {
        let means: Vec<f64> = rows.iter().map(|r| r.stats.mean).collect();
        Ok(Self {
            schema: REPORT_SCHEMA,
            protocol,
            estimator: estimator.into(),
            averaging: PER_IMAGE_MEAN.into(),
            images: rows.len(),
            stats: summarize(&means)?,
            excluded_ids: Vec::new(),
            config: serde_json::Value::Null,
        })
    }

    /// Parse and check a report against schema version 1.
    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != REPORT_SCHEMA {
            return Err(Error::InvalidData(format!("report schema {} is not {REPORT_SCHEMA}", self.schema)));
        }
        validate_stats(&self.stats)?;
        if self.stats.count != self.images {
            return Err(Error::InvalidData(format!("{} images but stats over {}", self.images, self.stats.count)));
        }
        Ok(())
    }
}

/// Check the ordering invariants of an [`ErrorStats`].
pub fn validate_stats(s: &ErrorStats) -> Result<()> {
    let all = [s.mean, s.median, s.trimean, s.best25, s.worst25, s.max];
    if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidData(format!("statistics must be finite and non-negative: {s:?}")));
    }
    if !(s.best25 <= s.mean && s.mean <= s.worst25 && s.median <= s.max && s.trimean <= s.max && s.worst25 <= s.max) {
        return Err(Error::InvalidData(format!("statistics violate ordering: {s:?}")));
    }
    if s.count == 0 {
        return Err(Error::InvalidData("statistics over zero samples".into()));
    }
    Ok(())
}

pub fn write_csv(path: &Path, rows: &[ImageErrors]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let fail = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(CSV_HEADER).map_err(fail)?;
    for r in rows {
        let s = &r.stats;
        let fields = [s.mean, s.median, s.trimean, s.best25, s.worst25, s.max].map(|v| format!("{v:.6}"));
        w.write_record(std::iter::once(r.id.as_str()).chain(fields.iter().map(String::as_str))).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read back a per-image CSV (the `count` column is not stored and is set to 0).
pub fn read_csv(path: &Path) -> Result<Vec<(String, [f64; 6])>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let headers = r.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::format(path, format!("unexpected header {headers:?}")));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
            let mut v = [0.0; 6];
            for (i, slot) in v.iter_mut().enumerate() {
                *slot = rec[i + 1].parse().map_err(|_| Error::format(path, format!("bad number {:?}", &rec[i + 1])))?;
            }
            Ok((rec[0].to_string(), v))
        })
        .collect()
}
