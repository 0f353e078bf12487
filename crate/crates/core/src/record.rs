//! Digitised records and their on-disk form.
//!
//! A record is written as two files:
//! - `<id>.sig.csv`: a `time_s` column then one column per lead; cells
//!   outside a lead's time support are empty; six decimals throughout.
//! - `<id>.meta.json`: sampling rate, record length, per-lead start times
//!   and warnings.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub const SIGNAL_SUFFIX: &str = ".sig.csv";
pub const META_SUFFIX: &str = ".meta.json";

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record {path}: {reason}")]
    Malformed { path: String, reason: String },
}

/// Samples of one printed trace, starting at `start_seconds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadSignal<T> {
    pub start_seconds: T,
    pub samples: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitisedRecord<T> {
    pub sampling_rate_hz: T,
    pub record_seconds: T,
    /// Keyed by printed-trace name (`II`, `rhythm_II`), in layout order.
    pub leads: IndexMap<String, LeadSignal<T>>,
    pub warnings: Vec<String>,
}

impl<T: Real> DigitisedRecord<T> {
    pub fn new(sampling_rate_hz: T, record_seconds: T) -> Self {
        Self {
            sampling_rate_hz,
            record_seconds,
            leads: IndexMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn lead(&self, name: &str) -> Option<&LeadSignal<T>> {
        self.leads.get(name)
    }

    /// Sample index of a lead's first sample on the record's time axis.
    pub fn start_index(&self, name: &str) -> Option<usize> {
        let l = self.leads.get(name)?;
        (l.start_seconds * self.sampling_rate_hz).round().to_usize()
    }

    pub fn total_samples(&self) -> usize {
        (self.record_seconds * self.sampling_rate_hz)
            .round()
            .to_usize()
            .unwrap_or(0)
    }

    /// Same leads and timing, every sample zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for l in out.leads.values_mut() {
            l.samples.iter_mut().for_each(|v| *v = T::zero());
        }
        out.warnings.clear();
        out
    }

    pub fn cast<U: Real>(&self) -> DigitisedRecord<U> {
        let c = |v: T| U::lit(v.as_f64());
        DigitisedRecord {
            sampling_rate_hz: c(self.sampling_rate_hz),
            record_seconds: c(self.record_seconds),
            leads: self
                .leads
                .iter()
                .map(|(k, l)| {
                    (
                        k.clone(),
                        LeadSignal {
                            start_seconds: c(l.start_seconds),
                            samples: l.samples.iter().map(|&v| c(v)).collect(),
                        },
                    )
                })
                .collect(),
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordMeta {
    pub sampling_rate_hz: f64,
    pub record_seconds: f64,
    pub lead_start_seconds: IndexMap<String, f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// Paths of the signal and meta files for a record id inside `dir`.
pub fn record_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{id}{SIGNAL_SUFFIX}")),
        dir.join(format!("{id}{META_SUFFIX}")),
    )
}

pub fn signal_csv<T: Real>(rec: &DigitisedRecord<T>) -> String {
    let fs = rec.sampling_rate_hz.as_f64();
    let names: Vec<&String> = rec.leads.keys().collect();
    let starts: Vec<usize> = names
        .iter()
        .map(|n| rec.start_index(n).unwrap_or(0))
        .collect();
    let n = names
        .iter()
        .zip(&starts)
        .map(|(name, &s)| s + rec.leads[*name].samples.len())
        .max()
        .unwrap_or(0)
        .max(rec.total_samples());

    let mut out = String::with_capacity(n * (names.len() + 1) * 10);
    out.push_str("time_s");
    for name in &names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..n {
        out.push_str(&fmt6(i as f64 / fs));
        for (name, &s) in names.iter().zip(&starts) {
            out.push(',');
            let samples = &rec.leads[*name].samples;
            if i >= s && i - s < samples.len() {
                out.push_str(&fmt6(samples[i - s].as_f64()));
            }
        }
        out.push('\n');
    }
    out
}

pub fn record_meta<T: Real>(rec: &DigitisedRecord<T>) -> RecordMeta {
    RecordMeta {
        sampling_rate_hz: rec.sampling_rate_hz.as_f64(),
        record_seconds: rec.record_seconds.as_f64(),
        lead_start_seconds: rec
            .leads
            .iter()
            .map(|(k, l)| (k.clone(), l.start_seconds.as_f64()))
            .collect(),
        warnings: rec.warnings.clone(),
    }
}

/// Writes `<id>.sig.csv` and `<id>.meta.json`, each via a temporary file and rename.
pub fn write_record<T: Real>(rec: &DigitisedRecord<T>, dir: &Path, id: &str) -> Result<(), RecordError> {
    let (sig, meta) = record_paths(dir, id);
    let meta_json = serde_json::to_string_pretty(&record_meta(rec)).expect("meta serialises") + "\n";
    write_atomic(&sig, signal_csv(rec).as_bytes())?;
    write_atomic(&meta, meta_json.as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RecordError> {
    let io = |source| RecordError::Io {
        path: path.display().to_string(),
        source,
    };
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Reads a record written by [`write_record`]. The meta file is optional;
/// without it the sampling rate comes from the time column and start times
/// from the first filled cell of each lead.
pub fn read_record<T: Real>(dir: &Path, id: &str) -> Result<DigitisedRecord<T>, RecordError> {
    let (sig, meta_path) = record_paths(dir, id);
    let meta: Option<RecordMeta> = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|source| RecordError::Io {
            path: meta_path.display().to_string(),
            source,
        })?;
        Some(serde_json::from_str(&text).map_err(|e| RecordError::Malformed {
            path: meta_path.display().to_string(),
            reason: e.to_string(),
        })?)
    } else {
        None
    };
    parse_signal_csv(&sig, meta)
}

fn parse_signal_csv<T: Real>(path: &Path, meta: Option<RecordMeta>) -> Result<DigitisedRecord<T>, RecordError> {
    let shown = path.display().to_string();
    let bad = |reason: String| RecordError::Malformed {
        path: shown.clone(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => RecordError::Io {
                path: shown.clone(),
                source,
            },
            other => bad(format!("{other:?}")),
        })?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.get(0) != Some("time_s") {
        return Err(bad("first column must be time_s".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    // (first row index, samples, finished)
    let mut cols: Vec<(Option<usize>, Vec<T>, bool)> = vec![(None, Vec::new(), false); names.len()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let t: f64 = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad(format!("row {}: bad time", row + 1)))?;
        times.push(t);
        for (j, col) in cols.iter_mut().enumerate() {
            let cell = rec.get(j + 1).unwrap_or("").trim();
            if cell.is_empty() {
                if col.0.is_some() {
                    col.2 = true;
                }
                continue;
            }
            if col.2 {
                return Err(bad(format!("lead {} has a gap at row {}", names[j], row + 1)));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| bad(format!("row {}: bad value {cell:?}", row + 1)))?;
            col.0.get_or_insert(row);
            col.1.push(T::lit(v));
        }
    }

    let (fs_hz, record_seconds) = match &meta {
        Some(m) => (m.sampling_rate_hz, m.record_seconds),
        None => {
            if times.len() < 2 || times[1] <= times[0] {
                return Err(bad("cannot infer sampling rate".into()));
            }
            let fs = 1.0 / (times[1] - times[0]);
            (fs, times.len() as f64 / fs)
        }
    };
    let mut rec = DigitisedRecord::new(T::lit(fs_hz), T::lit(record_seconds));
    for (name, (first, samples, _)) in names.into_iter().zip(cols) {
        let start = match meta.as_ref().and_then(|m| m.lead_start_seconds.get(&name)) {
            Some(&s) => s,
            None => first.map(|i| i as f64 / fs_hz).unwrap_or(0.0),
        };
        rec.leads.insert(
            name,
            LeadSignal {
                start_seconds: T::lit(start),
                samples,
            },
        );
    }
    if let Some(m) = meta {
        rec.warnings = m.warnings;
    }
    Ok(rec)
}
