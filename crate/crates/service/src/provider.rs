//! Upstream observation feed. The only implementation replays JSON fixture
//! files so deployments and tests stay hermetic.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use skycast_core::store::{ObsLocation, Observation, SharedStore};
use skycast_core::time::{parse_date, to_epoch_day};
use thiserror::Error;
use tracing::warn;

use crate::config::Region;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("fixture {path}: {reason}")]
    FixtureCorrupt { path: PathBuf, reason: String },
    #[error("fixture directory {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderObservation {
    pub location: ObsLocation,
    pub variable: String,
    /// ISO date.
    pub date: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderBatch {
    pub source: String,
    pub observations: Vec<ProviderObservation>,
}

impl ProviderBatch {
    /// Rejects future dates and non-finite values. Point observations
    /// outside `region` are dropped.
    pub fn validate(&self, today: NaiveDate, region: Option<&Region>) -> Result<Vec<Observation>, String> {
        let mut out = Vec::with_capacity(self.observations.len());
        for (i, o) in self.observations.iter().enumerate() {
            let date = parse_date(&o.date).ok_or_else(|| format!("observation {i}: bad date {:?}", o.date))?;
            if date > today {
                return Err(format!("observation {i}: {date} is in the future"));
            }
            if !o.value.is_finite() {
                return Err(format!("observation {i}: value is not finite"));
            }
            if let (ObsLocation::Point(p), Some(r)) = (&o.location, region) {
                if !r.contains(p.lat(), p.lon()) {
                    continue;
                }
            }
            out.push(Observation {
                location: o.location,
                variable: o.variable.clone(),
                day: to_epoch_day(date),
                value: o.value,
            });
        }
        if out.is_empty() {
            return Err("no usable observations".into());
        }
        Ok(out)
    }
}

/// Client contract for an observation source.
pub trait Provider: Send {
    /// The next batch, `None` once the source is exhausted.
    fn next_batch(&mut self) -> Option<Result<ProviderBatch, ProviderError>>;
}

/// Replays `*.json` files from a directory in lexicographic file-name order.
#[derive(Debug)]
pub struct ReplayProvider {
    files: Vec<PathBuf>,
    cursor: usize,
}

impl ReplayProvider {
    pub fn new(dir: &Path) -> Result<Self, ProviderError> {
        let unreadable = |e: std::io::Error| ProviderError::Unreadable {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        };
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(unreadable)? {
            let path = entry.map_err(unreadable)?.path();
            if path.is_file() && path.extension().is_some_and(|e| e == "json") {
                files.push(path);
            }
        }
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        Ok(Self { files, cursor: 0 })
    }

    pub fn remaining(&self) -> usize {
        self.files.len() - self.cursor
    }
}

impl Provider for ReplayProvider {
    fn next_batch(&mut self) -> Option<Result<ProviderBatch, ProviderError>> {
        let path = self.files.get(self.cursor)?.clone();
        self.cursor += 1;
        let corrupt = |reason: String| ProviderError::FixtureCorrupt {
            path: path.clone(),
            reason,
        };
        let parsed = std::fs::read_to_string(&path)
            .map_err(|e| corrupt(e.to_string()))
            .and_then(|text| serde_json::from_str(&text).map_err(|e| corrupt(e.to_string())));
        Some(parsed)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PollReport {
    /// Version published by this poll, if any.
    pub published: Option<u64>,
    pub source: Option<String>,
    pub observations: usize,
    /// One reason per skipped batch.
    pub skipped: Vec<String>,
}

/// Pulls batches until one ingests cleanly and publishes it as a new
/// snapshot. Corrupt or rejected batches are logged and skipped. Once the
/// provider is exhausted this is a no-op.
pub fn poll_provider(
    provider: &mut dyn Provider,
    store: &SharedStore,
    region: Option<&Region>,
    today: NaiveDate,
) -> PollReport {
    let mut report = PollReport::default();
    while let Some(next) = provider.next_batch() {
        let batch = match next {
            Ok(b) => b,
            Err(e) => {
                warn!("skipping provider batch: {e}");
                report.skipped.push(e.to_string());
                continue;
            }
        };
        let ingested = batch.validate(today, region).and_then(|obs| {
            let n = obs.len();
            store
                .load()
                .ingest_observations(&obs, &batch.source)
                .map(|s| (s, n))
                .map_err(|e| e.to_string())
        });
        match ingested {
            Ok((snapshot, n)) => {
                let published = store.publish(snapshot);
                report.published = Some(published.version());
                report.source = Some(batch.source);
                report.observations = n;
                return report;
            }
            Err(reason) => {
                warn!("rejecting provider batch {:?}: {reason}", batch.source);
                report.skipped.push(format!("{}: {reason}", batch.source));
            }
        }
    }
    report
}
