//! Persistent object memory.
//!
//! An append-only `observations.jsonl` log (one record per line, UTF-8)
//! plus one `model_<label>.json` per fitted label beside it. Single-writer,
//! many-reader: every query re-reads the log, appends flush before they
//! return. Timestamps per label must never decrease.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{read_model_file, write_model_file, GmmModel};

/// One timestamped location estimate of a labeled object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub label: String,
    pub location: Vector3<f64>,
    /// Seconds since epoch.
    pub timestamp: f64,
    /// Contributing view ids; empty for simulated data.
    pub source_view_ids: Vec<String>,
}

impl ObservationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.label.is_empty() {
            return Err(Error::invalid_input("observation label must be non-empty"));
        }
        if !self.location.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid_input("observation location must be finite"));
        }
        if !self.timestamp.is_finite() {
            return Err(Error::invalid_input("observation timestamp must be finite"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    label: String,
    x: f64,
    y: f64,
    z: f64,
    t: f64,
    views: Vec<String>,
}

impl From<&ObservationRecord> for RecordLine {
    fn from(record: &ObservationRecord) -> Self {
        Self {
            label: record.label.clone(),
            x: record.location.x,
            y: record.location.y,
            z: record.location.z,
            t: record.timestamp,
            views: record.source_view_ids.clone(),
        }
    }
}

impl From<RecordLine> for ObservationRecord {
    fn from(line: RecordLine) -> Self {
        Self {
            label: line.label,
            location: Vector3::new(line.x, line.y, line.z),
            timestamp: line.t,
            source_view_ids: line.views,
        }
    }
}

/// Append-only observation log and model catalog, keyed by object label.
pub struct ObjectMemory {
    observations_path: PathBuf,
    /// Last appended timestamp per label, for ordering enforcement.
    last_timestamp: HashMap<String, f64>,
}

fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

impl ObjectMemory {
    /// Opens (or prepares to create) the store backed by `observations.jsonl`
    /// at `path`. Existing records are scanned once to rebuild the
    /// per-label ordering index.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let observations_path = path.into();
        let mut store = Self {
            observations_path,
            last_timestamp: HashMap::new(),
        };
        if store.observations_path.exists() {
            for record in store.read_all()? {
                store
                    .last_timestamp
                    .entry(record.label)
                    .and_modify(|t| *t = t.max(record.timestamp))
                    .or_insert(record.timestamp);
            }
        }
        Ok(store)
    }

    pub fn observations_path(&self) -> &Path {
        &self.observations_path
    }

    fn read_all(&self) -> Result<Vec<ObservationRecord>> {
        if !self.observations_path.exists() {
            return Ok(Vec::new());
        }
        let reader = BufReader::new(File::open(&self.observations_path)?);
        let mut records = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RecordLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: self.observations_path.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            records.push(parsed.into());
        }
        Ok(records)
    }

    /// Appends one record; durable (flushed) before returning.
    pub fn append_observation(&mut self, record: &ObservationRecord) -> Result<()> {
        record.validate()?;
        if let Some(&last) = self.last_timestamp.get(&record.label) {
            if record.timestamp < last {
                return Err(Error::Ordering(format!(
                    "timestamp {} for {:?} precedes the last stored {}",
                    record.timestamp, record.label, last
                )));
            }
        }

        if let Some(parent) = self.observations_path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.observations_path)?;
        let line = serde_json::to_string(&RecordLine::from(record))?;
        writeln!(file, "{line}")?;
        file.flush()?;

        self.last_timestamp
            .insert(record.label.clone(), record.timestamp);
        Ok(())
    }

    /// All records for `label` within the half-open `[start, end)` range,
    /// in timestamp order. Unknown labels yield an empty list.
    pub fn query_observations(
        &self,
        label: &str,
        time_range: Option<(f64, f64)>,
    ) -> Result<Vec<ObservationRecord>> {
        if let Some((start, end)) = time_range {
            if end < start {
                return Err(Error::invalid_input(format!(
                    "inverted time range: [{start}, {end})"
                )));
            }
        }
        let mut records: Vec<ObservationRecord> = self
            .read_all()?
            .into_iter()
            .filter(|r| r.label == label)
            .filter(|r| match time_range {
                Some((start, end)) => r.timestamp >= start && r.timestamp < end,
                None => true,
            })
            .collect();
        records.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite"));
        Ok(records)
    }

    /// Path of the model document for a label, beside the observation log.
    pub fn model_path(&self, label: &str) -> PathBuf {
        let dir = self
            .observations_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        dir.join(format!("model_{}.json", sanitize_label(label)))
    }

    /// Writes (or overwrites) the latest fitted model for a label.
    pub fn save_model(&self, label: &str, model: &GmmModel) -> Result<PathBuf> {
        model.validate()?;
        let path = self.model_path(label);
        write_model_file(&path, label, model)?;
        Ok(path)
    }

    /// Reads back the latest model for a label, bit-stable.
    pub fn load_model(&self, label: &str) -> Result<GmmModel> {
        let path = self.model_path(label);
        if !path.exists() {
            return Err(Error::NotFound(format!("no stored model for {label:?}")));
        }
        let (stored_label, model) = read_model_file(&path)?;
        if stored_label != label {
            return Err(Error::MalformedFile {
                path,
                message: format!(
                    "stores label {stored_label:?}, requested {label:?} (filename collision)"
                ),
            });
        }
        Ok(model)
    }
}
