//! Signal-to-noise scoring of digitised records.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::DigitisedRecord;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("length mismatch: reference has {reference} samples, estimate has {estimate}")]
    LengthMismatch { reference: usize, estimate: usize },
    #[error("reference signal has zero energy")]
    ZeroReference,
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("no leads in common between truth and prediction")]
    NoCommonLeads,
    #[error("no reports to aggregate")]
    EmptyInput,
}

/// An SNR in dB. A perfect reconstruction is `Infinite`, serialised as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr<T> {
    Finite(T),
    Infinite,
}

impl<T: Real> Snr<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Snr::Finite(v) => Some(v),
            Snr::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Snr::Infinite)
    }

    /// Total order with `Infinite` above every finite value.
    fn gt(self, other: Self) -> bool {
        match (self, other) {
            (Snr::Infinite, Snr::Finite(_)) => true,
            (Snr::Finite(a), Snr::Finite(b)) => a > b,
            _ => false,
        }
    }
}

impl<T: Real> fmt::Display for Snr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Finite(v) => write!(f, "{:.4}", v.as_f64()),
            Snr::Infinite => f.write_str("inf"),
        }
    }
}

impl<T: Real> Serialize for Snr<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Snr::Finite(v) => s.serialize_f64(v.as_f64()),
            Snr::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de, T: Real> Deserialize<'de> for Snr<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V<T>(std::marker::PhantomData<T>);
        impl<T: Real> Visitor<'_> for V<T> {
            type Value = Snr<T>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                Ok(Snr::Finite(T::lit(v)))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Ok(Snr::Finite(T::lit(v as f64)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(Snr::Finite(T::lit(v as f64)))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                if v == "inf" {
                    Ok(Snr::Infinite)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V(std::marker::PhantomData))
    }
}

fn snr_core<T: Real>(y: &[T], y_hat: &[T], offset: T) -> Option<Snr<T>> {
    let mut signal = T::zero();
    let mut noise = T::zero();
    for (&a, &b) in y.iter().zip(y_hat) {
        signal += a * a;
        let e = (b + offset) - a;
        noise += e * e;
    }
    if signal == T::zero() {
        None
    } else if noise == T::zero() {
        Some(Snr::Infinite)
    } else {
        Some(Snr::Finite(T::lit(10.0) * (signal / noise).log10()))
    }
}

/// `10 log10(sum y^2 / sum (y_hat - y)^2)`.
pub fn snr<T: Real>(y: &[T], y_hat: &[T]) -> Result<Snr<T>, ScoringError> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(ScoringError::LengthMismatch {
            reference: y.len(),
            estimate: y_hat.len(),
        });
    }
    snr_core(y, y_hat, T::zero()).ok_or(ScoringError::ZeroReference)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment<T> {
    pub snr: Snr<T>,
    pub shift: isize,
    pub offset: T,
}

/// Best SNR over integer shifts `s` in `[-max_shift, max_shift]` and offsets
/// on a grid within `[-max_offset, max_offset]`. A shift `s` compares
/// `y[i]` with `y_hat[i - s] + b` over the overlapping samples only.
/// Ties prefer the smallest `|s|`, then `|b|`, then non-positive `s`, then
/// non-positive `b`.
pub fn aligned_snr<T: Real>(
    y: &[T],
    y_hat: &[T],
    max_shift: usize,
    max_offset_mv: T,
    offset_grid_mv: T,
) -> Result<Alignment<T>, ScoringError> {
    if !(max_offset_mv >= T::zero()) {
        return Err(ScoringError::InvalidThreshold(format!(
            "max_offset_mv must be non-negative, got {max_offset_mv}"
        )));
    }
    if !(offset_grid_mv > T::zero()) {
        return Err(ScoringError::InvalidThreshold(format!(
            "offset_grid_mv must be positive, got {offset_grid_mv}"
        )));
    }
    let base = snr(y, y_hat)?;
    let n = y.len() as isize;
    let max_shift = (max_shift as isize).min(n - 1);
    let kmax = (max_offset_mv / offset_grid_mv + T::lit(1e-9))
        .floor()
        .to_isize()
        .unwrap_or(0);

    let mut candidates: Vec<(isize, isize)> = (-max_shift..=max_shift)
        .flat_map(|s| (-kmax..=kmax).map(move |k| (s, k)))
        .collect();
    candidates.sort_by_key(|&(s, k)| (s.abs(), k.abs(), s > 0, k > 0));

    let mut best = Alignment {
        snr: base,
        shift: 0,
        offset: T::zero(),
    };
    for (s, k) in candidates.into_iter().skip(1) {
        let (ys, hs) = if s >= 0 {
            let s = s as usize;
            (&y[s..], &y_hat[..y_hat.len() - s])
        } else {
            let s = (-s) as usize;
            (&y[..y.len() - s], &y_hat[s..])
        };
        let b = T::from_isize_lossy(k) * offset_grid_mv;
        if let Some(v) = snr_core(ys, hs, b) {
            if v.gt(best.snr) {
                best = Alignment {
                    snr: v,
                    shift: s,
                    offset: b,
                };
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringConfig {
    pub max_shift_seconds: f64,
    pub max_offset_mv: f64,
    pub offset_grid_mv: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            max_shift_seconds: 0.05,
            max_offset_mv: 0.1,
            offset_grid_mv: 0.01,
        }
    }
}

impl ScoringConfig {
    /// No alignment: plain SNR.
    pub fn unaligned() -> Self {
        Self {
            max_shift_seconds: 0.0,
            max_offset_mv: 0.0,
            offset_grid_mv: 0.01,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.max_shift_seconds >= 0.0 && self.max_shift_seconds.is_finite()) {
            errs.push(format!(
                "scoring.max_shift_seconds must be non-negative, got {}",
                self.max_shift_seconds
            ));
        }
        if !(self.max_offset_mv >= 0.0 && self.max_offset_mv.is_finite()) {
            errs.push(format!(
                "scoring.max_offset_mv must be non-negative, got {}",
                self.max_offset_mv
            ));
        }
        if !(self.offset_grid_mv > 0.0 && self.offset_grid_mv.is_finite()) {
            errs.push(format!(
                "scoring.offset_grid_mv must be positive, got {}",
                self.offset_grid_mv
            ));
        }
        errs
    }

    pub fn max_shift_samples(&self, sampling_rate_hz: f64) -> usize {
        (self.max_shift_seconds * sampling_rate_hz).round().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub lead: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SnrReport<T> {
    pub per_lead_snr_db: IndexMap<String, Snr<T>>,
    /// Mean over finite leads; `Infinite` when every scored lead is perfect.
    pub mean_snr_db: Snr<T>,
    pub finite_leads: usize,
    pub infinite_leads: usize,
    pub applied_shift_samples: IndexMap<String, isize>,
    pub applied_offset_mv: IndexMap<String, T>,
    pub exclusions: Vec<Exclusion>,
}

/// Linearly resamples every lead to a new rate, keeping start times.
pub fn resample_record<T: Real>(rec: &DigitisedRecord<T>, sampling_rate_hz: T) -> DigitisedRecord<T> {
    let mut out = DigitisedRecord::new(sampling_rate_hz, rec.record_seconds);
    out.warnings = rec.warnings.clone();
    let ratio = rec.sampling_rate_hz / sampling_rate_hz;
    for (name, l) in &rec.leads {
        let dur = T::from_usize_lossy(l.samples.len()) / rec.sampling_rate_hz;
        let len = (dur * sampling_rate_hz).round().to_usize().unwrap_or(0);
        let n = l.samples.len();
        let samples = (0..len)
            .map(|i| {
                let u = T::from_usize_lossy(i) * ratio;
                let j = u.floor().to_usize().unwrap_or(0);
                if n == 0 {
                    T::zero()
                } else if j + 1 >= n {
                    l.samples[n - 1]
                } else {
                    let f = u - T::from_usize_lossy(j);
                    l.samples[j] + (l.samples[j + 1] - l.samples[j]) * f
                }
            })
            .collect();
        out.leads.insert(
            name.clone(),
            crate::record::LeadSignal {
                start_seconds: l.start_seconds,
                samples,
            },
        );
    }
    out
}

/// Prediction samples on the truth lead's sample grid; zero outside the
/// prediction's support.
fn align_to_truth<T: Real>(truth: &DigitisedRecord<T>, pred: &DigitisedRecord<T>, lead: &str) -> Vec<T> {
    let t = &truth.leads[lead];
    let mut out = vec![T::zero(); t.samples.len()];
    let Some(p) = pred.leads.get(lead) else {
        return out;
    };
    let ts = truth.start_index(lead).unwrap_or(0) as isize;
    let ps = pred.start_index(lead).unwrap_or(0) as isize;
    for (i, o) in out.iter_mut().enumerate() {
        let j = ts + i as isize - ps;
        if j >= 0 && (j as usize) < p.samples.len() {
            *o = p.samples[j as usize];
        }
    }
    out
}

/// Scores every lead of `truth` against `pred` and averages.
pub fn score_record<T: Real>(
    truth: &DigitisedRecord<T>,
    pred: &DigitisedRecord<T>,
    cfg: &ScoringConfig,
) -> Result<SnrReport<T>, ScoringError> {
    if !truth.leads.keys().any(|k| pred.leads.contains_key(k)) {
        return Err(ScoringError::NoCommonLeads);
    }
    let resampled;
    let pred = if pred.sampling_rate_hz != truth.sampling_rate_hz {
        resampled = resample_record(pred, truth.sampling_rate_hz);
        &resampled
    } else {
        pred
    };
    let max_shift = cfg.max_shift_samples(truth.sampling_rate_hz.as_f64());
    let mut report = SnrReport {
        per_lead_snr_db: IndexMap::new(),
        mean_snr_db: Snr::Finite(T::zero()),
        finite_leads: 0,
        infinite_leads: 0,
        applied_shift_samples: IndexMap::new(),
        applied_offset_mv: IndexMap::new(),
        exclusions: Vec::new(),
    };
    let mut sum = T::zero();
    for (name, lead) in &truth.leads {
        if lead.samples.is_empty() || lead.samples.iter().all(|&v| v == T::zero()) {
            report.exclusions.push(Exclusion {
                lead: name.clone(),
                reason: "reference has zero energy".into(),
            });
            continue;
        }
        let y_hat = align_to_truth(truth, pred, name);
        let a = aligned_snr(
            &lead.samples,
            &y_hat,
            max_shift,
            T::lit(cfg.max_offset_mv),
            T::lit(cfg.offset_grid_mv),
        )?;
        match a.snr {
            Snr::Finite(v) => {
                sum += v;
                report.finite_leads += 1;
            }
            Snr::Infinite => report.infinite_leads += 1,
        }
        report.per_lead_snr_db.insert(name.clone(), a.snr);
        report.applied_shift_samples.insert(name.clone(), a.shift);
        report.applied_offset_mv.insert(name.clone(), a.offset);
    }
    for name in pred.leads.keys().filter(|k| !truth.leads.contains_key(*k)) {
        report.exclusions.push(Exclusion {
            lead: name.clone(),
            reason: "absent from truth".into(),
        });
    }
    report.mean_snr_db = if report.finite_leads > 0 {
        Snr::Finite(sum / T::from_usize_lossy(report.finite_leads))
    } else if report.infinite_leads > 0 {
        Snr::Infinite
    } else {
        return Err(ScoringError::NoCommonLeads);
    };
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FoldMean<T> {
    pub fold: u32,
    pub records: usize,
    /// Records whose mean was `Infinite`, left out of the fold mean.
    pub infinite_records: usize,
    pub mean_snr_db: Snr<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FoldSummary<T> {
    pub per_fold: Vec<FoldMean<T>>,
    pub overall_mean_snr_db: Snr<T>,
}

fn mean_of<T: Real>(values: impl Iterator<Item = Snr<T>>) -> (Snr<T>, usize, usize) {
    let (mut sum, mut finite, mut inf) = (T::zero(), 0, 0);
    for v in values {
        match v {
            Snr::Finite(x) => {
                sum += x;
                finite += 1;
            }
            Snr::Infinite => inf += 1,
        }
    }
    let mean = if finite > 0 {
        Snr::Finite(sum / T::from_usize_lossy(finite))
    } else {
        Snr::Infinite
    };
    (mean, finite, inf)
}

/// Mean of record means per fold, then mean over folds, in fold order.
pub fn aggregate_folds<T: Real>(reports: &[(u32, &SnrReport<T>)]) -> Result<FoldSummary<T>, ScoringError> {
    if reports.is_empty() {
        return Err(ScoringError::EmptyInput);
    }
    let mut folds: BTreeMap<u32, Vec<Snr<T>>> = BTreeMap::new();
    for (fold, r) in reports {
        folds.entry(*fold).or_default().push(r.mean_snr_db);
    }
    let per_fold: Vec<FoldMean<T>> = folds
        .into_iter()
        .map(|(fold, means)| {
            let (mean, finite, inf) = mean_of(means.into_iter());
            FoldMean {
                fold,
                records: finite + inf,
                infinite_records: inf,
                mean_snr_db: mean,
            }
        })
        .collect();
    let (overall, _, _) = mean_of(per_fold.iter().map(|f| f.mean_snr_db));
    Ok(FoldSummary {
        per_fold,
        overall_mean_snr_db: overall,
    })
}
