//! Versioned JSON run reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::eval::AuditSummary;
use crate::metrics::MetricReport;
use crate::train::TrainHistory;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub report_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub metrics: Vec<MetricReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tiebreak: Vec<AuditSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<TrainHistory>,
    /// Free-form extras such as per-objective gradient check results.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
    /// Wall-clock seconds per phase. Not covered by `content_sha256`.
    pub timings: BTreeMap<String, f64>,
    pub content_sha256: String,
}

impl RunReport {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        Self {
            report_version: REPORT_VERSION,
            command: command.into(),
            config,
            metrics: Vec::new(),
            tiebreak: Vec::new(),
            history: None,
            details: serde_json::Value::Null,
            timings: BTreeMap::new(),
            content_sha256: String::new(),
        }
    }

    /// Hash of the canonical JSON of everything except timings and the hash
    /// itself, so reruns with the same inputs agree.
    pub fn content_hash(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timings");
            obj.remove("content_sha256");
        }
        let bytes = serde_json::to_vec(&value)?;
        Ok(Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    }

    pub fn seal(&mut self) -> Result<()> {
        self.content_sha256 = self.content_hash()?;
        Ok(())
    }

    /// Metric means agree with their per-query values and the hash matches.
    pub fn is_consistent(&self, tol: f64) -> bool {
        self.metrics.iter().all(|m| m.is_consistent(tol))
            && self.content_hash().is_ok_and(|h| h == self.content_sha256)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_timings_and_detects_edits() {
        let mut r = RunReport::new("eval", serde_json::json!({"k": 5}));
        r.metrics.push(MetricReport::from_values(
            "AP_T",
            None,
            vec![Some(0.5), None, Some(1.0)],
        ));
        r.seal().unwrap();
        let h = r.content_sha256.clone();
        assert_eq!(h.len(), 64);
        r.timings.insert("eval".into(), 1.5);
        assert_eq!(r.content_hash().unwrap(), h);
        assert!(r.is_consistent(1e-12));
        r.metrics[0].mean = Some(0.7);
        assert!(!r.is_consistent(1e-12));
    }

    #[test]
    fn json_round_trip_keeps_version() {
        let mut r = RunReport::new("train", serde_json::Value::Null);
        r.seal().unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"report_version\":1"));
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(back.is_consistent(0.0));
    }
}
