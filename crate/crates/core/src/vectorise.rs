//! Mask to signal conversion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::GridCalibration;
use crate::record::{DigitisedRecord, LeadSignal};
use crate::scalar::Real;
use crate::segmentation::{LeadKey, LeadLayout, LeadMask, PlacedLayout, SegmentationError};

#[derive(Debug, Error, PartialEq)]
pub enum VectoriseError {
    #[error("no trace for leads: {}", .0.join(", "))]
    MissingLead(Vec<String>),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
}

/// Per-column row positions of one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadTrace<T> {
    pub lead: LeadKey,
    /// Image column of `rows[0]`.
    pub col_start: usize,
    pub rows: Vec<T>,
    /// True where the row was interpolated across an empty column.
    pub gap_flags: Vec<bool>,
}

impl<T: Real> LeadTrace<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Length of the longest run of interpolated columns.
    pub fn longest_gap(&self) -> usize {
        let mut best = 0;
        let mut run = 0;
        for &g in &self.gap_flags {
            run = if g { run + 1 } else { 0 };
            best = best.max(run);
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VectoriseConfig {
    pub sampling_rate_hz: f64,
    pub layout: String,
    /// Gaps wider than this fraction of a segment's width raise a warning.
    pub gap_warning_fraction: f64,
    /// Below this share of columns in the modal row, the layout baseline is used.
    pub baseline_min_fraction: f64,
}

impl Default for VectoriseConfig {
    fn default() -> Self {
        Self {
            sampling_rate_hz: 100.0,
            layout: "standard_3x4_rhythm_II".into(),
            gap_warning_fraction: 0.2,
            baseline_min_fraction: 0.1,
        }
    }
}

impl VectoriseConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            errs.push(format!(
                "vectorise.sampling_rate_hz must be positive, got {}",
                self.sampling_rate_hz
            ));
        }
        if LeadLayout::by_name(&self.layout).is_none() {
            errs.push(format!("vectorise.layout: unknown layout {:?}", self.layout));
        }
        if !(self.gap_warning_fraction > 0.0 && self.gap_warning_fraction <= 1.0) {
            errs.push(format!(
                "vectorise.gap_warning_fraction must be in (0, 1], got {}",
                self.gap_warning_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.baseline_min_fraction) {
            errs.push(format!(
                "vectorise.baseline_min_fraction must be in [0, 1], got {}",
                self.baseline_min_fraction
            ));
        }
        errs
    }
}

/// Mean row of the mask's pixels in each column from the first to the last
/// occupied column, linearly interpolated across empty columns.
pub fn columns_to_trace<T: Real>(m: &LeadMask) -> Result<LeadTrace<T>, SegmentationError> {
    let occupied: Vec<(usize, T)> = m
        .column_stats()
        .into_iter()
        .enumerate()
        .filter(|(_, s)| s.1 > 0)
        .map(|(x, (sum, n))| (x, T::from_usize_lossy(sum) / T::from_usize_lossy(n)))
        .collect();
    if occupied.len() < 2 {
        return Err(SegmentationError::TooSparse {
            lead: m.key().to_string(),
            columns: occupied.len(),
        });
    }
    let col_start = occupied[0].0;
    let len = occupied[occupied.len() - 1].0 - col_start + 1;
    let mut rows = Vec::with_capacity(len);
    let mut gap_flags = Vec::with_capacity(len);
    rows.push(occupied[0].1);
    gap_flags.push(false);
    for pair in occupied.windows(2) {
        let ((c1, r1), (c2, r2)) = (pair[0], pair[1]);
        let span = T::from_usize_lossy(c2 - c1);
        for c in c1 + 1..c2 {
            let t = T::from_usize_lossy(c - c1) / span;
            rows.push(r1 + (r2 - r1) * t);
            gap_flags.push(true);
        }
        rows.push(r2);
        gap_flags.push(false);
    }
    Ok(LeadTrace {
        lead: m.key().clone(),
        col_start,
        rows,
        gap_flags,
    })
}

/// Converts rows to millivolts; rows above the baseline are positive.
pub fn trace_to_signal<T: Real>(t: &LeadTrace<T>, baseline_row: T, cal: &GridCalibration<T>) -> Vec<T> {
    let k = cal.mv_per_pixel();
    t.rows.iter().map(|&r| (baseline_row - r) * k).collect()
}

/// Modal row (1-pixel bins) and the number of columns in the modal bin.
/// The row is the mean of the values in the bin; tied bins give the median
/// of their means.
pub fn baseline_mode<T: Real>(t: &LeadTrace<T>) -> Option<(T, usize)> {
    let mut bins: Vec<(isize, T, usize)> = t
        .rows
        .iter()
        .filter_map(|&r| Some(((r + T::lit(0.5)).floor().to_isize()?, r)))
        .fold(std::collections::BTreeMap::<isize, (T, usize)>::new(), |mut acc, (b, r)| {
            let e = acc.entry(b).or_insert((T::zero(), 0));
            e.0 += r;
            e.1 += 1;
            acc
        })
        .into_iter()
        .map(|(b, (s, n))| (b, s / T::from_usize_lossy(n), n))
        .collect();
    let best = bins.iter().map(|b| b.2).max()?;
    bins.retain(|b| b.2 == best);
    let n = bins.len();
    let row = if n % 2 == 1 {
        bins[n / 2].1
    } else {
        (bins[n / 2 - 1].1 + bins[n / 2].1) * T::lit(0.5)
    };
    Some((row, best))
}

/// Baseline row of a trace: the mode of its rows.
pub fn estimate_baseline<T: Real>(t: &LeadTrace<T>) -> T {
    baseline_mode(t).map(|m| m.0).unwrap_or_else(T::zero)
}

/// Resamples column values onto `target_len` samples at `sampling_rate_hz`.
/// Column `c` sits at time `(col_start + c) * seconds_per_pixel`, with
/// `col_start` measured from the start of the lead's slot. Samples outside
/// the columns' time span are zero.
pub fn resample_to_rate<T: Real>(
    values: &[T],
    col_start: T,
    cal: &GridCalibration<T>,
    sampling_rate_hz: T,
    target_len: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); target_len];
    if values.is_empty() {
        return out;
    }
    let px_per_sample = cal.px_per_second() / sampling_rate_hz;
    let last = T::from_usize_lossy(values.len() - 1);
    let eps = T::lit(1e-9);
    for (i, o) in out.iter_mut().enumerate() {
        let u = T::from_usize_lossy(i) * px_per_sample - col_start;
        if u < -eps || u > last + eps {
            continue;
        }
        let u = u.max(T::zero()).min(last);
        let j = u.floor().to_usize().unwrap_or(0).min(values.len() - 1);
        let f = u - T::from_usize_lossy(j);
        *o = if f == T::zero() || j + 1 == values.len() {
            values[j]
        } else {
            values[j] + (values[j + 1] - values[j]) * f
        };
    }
    out
}

/// Builds a record from traces. Leads without a trace are zero-filled and
/// returned in the second slot; per-lead warnings go into the record.
pub fn assemble_record_partial<T: Real>(
    traces: &[LeadTrace<T>],
    layout: &LeadLayout,
    placed: &PlacedLayout<T>,
    cal: &GridCalibration<T>,
    cfg: &VectoriseConfig,
) -> (DigitisedRecord<T>, Vec<String>) {
    let fs = T::lit(cfg.sampling_rate_hz);
    let mut rec = DigitisedRecord::new(fs, T::lit(layout.record_seconds));
    let mut missing = Vec::new();
    let segment_px = T::lit(layout.segment_seconds()) * cal.px_per_second();
    for region in placed.regions() {
        let name = region.key.to_string();
        let len = (region.duration_seconds * fs).round().to_usize().unwrap_or(0);
        let samples = match traces.iter().find(|t| t.lead == region.key) {
            Some(t) => {
                let baseline = match baseline_mode(t) {
                    Some((row, n))
                        if n as f64 >= cfg.baseline_min_fraction * t.len() as f64 =>
                    {
                        row
                    }
                    _ => {
                        rec.warnings
                            .push(format!("lead {name}: flat row histogram, layout baseline used"));
                        region.baseline_row
                    }
                };
                let gap = t.longest_gap();
                if T::from_usize_lossy(gap) > T::lit(cfg.gap_warning_fraction) * segment_px {
                    rec.warnings
                        .push(format!("lead {name}: interpolated gap of {gap} columns"));
                }
                let values = trace_to_signal(t, baseline, cal);
                let rel = T::from_usize_lossy(t.col_start) - region.start_x;
                resample_to_rate(&values, rel, cal, fs, len)
            }
            None => {
                missing.push(name.clone());
                vec![T::zero(); len]
            }
        };
        rec.leads.insert(
            name,
            LeadSignal {
                start_seconds: region.start_seconds,
                samples,
            },
        );
    }
    if !missing.is_empty() {
        rec.warnings.push(format!("missing leads zero-filled: {}", missing.join(", ")));
    }
    (rec, missing)
}

/// Like [`assemble_record_partial`] but fails when any lead has no trace.
pub fn assemble_record<T: Real>(
    traces: &[LeadTrace<T>],
    layout: &LeadLayout,
    placed: &PlacedLayout<T>,
    cal: &GridCalibration<T>,
    cfg: &VectoriseConfig,
) -> Result<DigitisedRecord<T>, VectoriseError> {
    let (rec, missing) = assemble_record_partial(traces, layout, placed, cal, cfg);
    if missing.is_empty() {
        Ok(rec)
    } else {
        Err(VectoriseError::MissingLead(missing))
    }
}

/// Traces every mask; masks too sparse to trace are returned by name.
pub fn traces_from_masks<T: Real>(masks: &[LeadMask]) -> (Vec<LeadTrace<T>>, Vec<(String, SegmentationError)>) {
    let mut traces = Vec::with_capacity(masks.len());
    let mut failed = Vec::new();
    for m in masks {
        match columns_to_trace(m) {
            Ok(t) => traces.push(t),
            Err(e) => failed.push((m.key().to_string(), e)),
        }
    }
    (traces, failed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_calibration;
    use crate::raster::BinaryMask;
    use crate::segmentation::{default_layout, Density};
    use proptest::prelude::*;

    fn cal(pitch: f64) -> GridCalibration<f64> {
        make_calibration(pitch, 10.0, 25.0).unwrap()
    }

    fn mask_from(w: usize, h: usize, px: &[(usize, usize)]) -> LeadMask {
        let mut m = BinaryMask::empty(w, h);
        for &(x, y) in px {
            m.set(x, y, true);
        }
        LeadMask::from_parts(LeadKey::segment("II"), m, Density::Sparse)
    }

    fn trace(rows: &[f64]) -> LeadTrace<f64> {
        LeadTrace {
            lead: LeadKey::segment("II"),
            col_start: 0,
            rows: rows.to_vec(),
            gap_flags: vec![false; rows.len()],
        }
    }

    #[test]
    fn column_mean_and_interpolation() {
        let t: LeadTrace<f64> = columns_to_trace(&mask_from(4, 20, &[(0, 2), (0, 4), (1, 9)])).unwrap();
        assert_eq!(t.rows, vec![3.0, 9.0]);

        let t: LeadTrace<f64> = columns_to_trace(&mask_from(5, 20, &[(0, 10), (2, 14)])).unwrap();
        assert_eq!(t.col_start, 0);
        assert_eq!(t.rows, vec![10.0, 12.0, 14.0]);
        assert_eq!(t.gap_flags, vec![false, true, false]);
        assert_eq!(t.longest_gap(), 1);

        assert!(matches!(
            columns_to_trace::<f64>(&mask_from(5, 5, &[(1, 1), (1, 2)])),
            Err(SegmentationError::TooSparse { columns: 1, .. })
        ));
    }

    #[test]
    fn signal_scaling() {
        let c = cal(8.0);
        let t = trace(&[40.0, 32.0, 56.0]);
        let v = trace_to_signal(&t, 40.0, &c);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 0.1).abs() < 1e-12);
        assert!((v[2] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(estimate_baseline(&trace(&[40.0; 10])), 40.0);
        let mut rows = vec![40.0; 8];
        rows.extend([10.0, 10.0]);
        assert_eq!(estimate_baseline(&trace(&rows)), 40.0);
        assert_eq!(estimate_baseline(&trace(&[40.0, 42.0, 40.0, 42.0])), 41.0);
        assert_eq!(estimate_baseline(&trace(&[40.5, 40.5, 12.0])), 40.5);
    }

    #[test]
    fn resample_examples() {
        let c = cal(10.0);
        let fs = c.px_per_second();
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = resample_to_rate(&v, 0.0, &c, fs, v.len());
        for (a, b) in out.iter().zip(&v) {
            assert!((a - b).abs() <= 1e-12);
        }

        let out = resample_to_rate(&[0.0, 1.0], 0.0, &c, 2.0 * fs, 3);
        assert_eq!(out, vec![0.0, 0.5, 1.0]);

        // trace begins 2.5 s into a 10 s slot
        let c = cal(4.0);
        let v = vec![1.0; 300];
        let out = resample_to_rate(&v, 2.5 * c.px_per_second(), &c, 100.0, 1000);
        assert!(out[..250].iter().all(|&x| x == 0.0));
        assert!(out[250..].iter().take(20).all(|&x| x == 1.0));
    }

    #[test]
    fn missing_lead_is_reported() {
        let layout = default_layout();
        let c = cal(4.0);
        let placed = layout.place(&c, (0.0, 0.0));
        let traces: Vec<LeadTrace<f64>> = placed
            .regions()
            .iter()
            .filter(|r| r.key.name != "V6")
            .map(|r| LeadTrace {
                lead: r.key.clone(),
                col_start: r.col_first as usize,
                rows: vec![r.baseline_row; (r.col_end - r.col_first) as usize],
                gap_flags: vec![false; (r.col_end - r.col_first) as usize],
            })
            .collect();
        let cfg = VectoriseConfig::default();
        assert_eq!(
            assemble_record(&traces, &layout, &placed, &c, &cfg),
            Err(VectoriseError::MissingLead(vec!["V6".into()]))
        );
        let (rec, missing) = assemble_record_partial(&traces, &layout, &placed, &c, &cfg);
        assert_eq!(missing, vec!["V6".to_string()]);
        assert_eq!(rec.leads.len(), 13);
        assert_eq!(rec.lead("V6").unwrap().samples.len(), 250);
        assert_eq!(rec.lead("rhythm_II").unwrap().samples.len(), 1000);
        assert_eq!(rec.lead("V4").unwrap().start_seconds, 7.5);
        assert!(rec.leads.values().all(|l| l.samples.iter().all(|v| v.abs() < 1e-9)));
    }

    fn naive_trace(m: &BinaryMask) -> Option<(usize, Vec<f64>, Vec<bool>)> {
        let mut cols = Vec::new();
        for x in 0..m.width() {
            let ys: Vec<usize> = (0..m.height()).filter(|&y| m.get(x, y)).collect();
            if !ys.is_empty() {
                cols.push((x, ys.iter().sum::<usize>() as f64 / ys.len() as f64));
            }
        }
        if cols.len() < 2 {
            return None;
        }
        let (first, last) = (cols[0].0, cols[cols.len() - 1].0);
        let mut rows = Vec::new();
        let mut gaps = Vec::new();
        for x in first..=last {
            if let Some(&(_, r)) = cols.iter().find(|c| c.0 == x) {
                rows.push(r);
                gaps.push(false);
            } else {
                let l = cols.iter().rev().find(|c| c.0 < x).unwrap();
                let r = cols.iter().find(|c| c.0 > x).unwrap();
                let t = (x - l.0) as f64 / (r.0 - l.0) as f64;
                rows.push(l.1 + (r.1 - l.1) * t);
                gaps.push(true);
            }
        }
        Some((first, rows, gaps))
    }

    pub(crate) fn random_mask() -> impl Strategy<Value = BinaryMask> {
        (1usize..=64, 1usize..=64, 0.0f64..0.3).prop_flat_map(|(w, h, density)| {
            proptest::collection::vec(proptest::bool::weighted(density.max(0.01)), w * h).prop_map(
                move |bits| {
                    let mut m = BinaryMask::empty(w, h);
                    for (i, b) in bits.into_iter().enumerate() {
                        if b {
                            m.set(i % w, i / w, true);
                        }
                    }
                    m
                },
            )
        })
    }

    proptest! {
        #[test]
        fn trace_matches_naive_oracle(m in random_mask()) {
            let lm = LeadMask::from_parts(LeadKey::segment("I"), m.clone(), Density::Sparse);
            match (columns_to_trace::<f64>(&lm), naive_trace(&m)) {
                (Ok(t), Some((first, rows, gaps))) => {
                    prop_assert_eq!(t.col_start, first);
                    prop_assert_eq!(t.rows, rows);
                    prop_assert_eq!(t.gap_flags, gaps);
                }
                (Err(SegmentationError::TooSparse { .. }), None) => {}
                (a, b) => prop_assert!(false, "mismatch {:?} vs {:?}", a.is_ok(), b.is_some()),
            }
        }

        #[test]
        fn amplitude_is_linear(dev in proptest::collection::vec(-6i32..=6, 4..40), k in 1i32..4) {
            let base = 40usize;
            let h = 100;
            let w = dev.len();
            let px = |s: i32| -> Vec<(usize, usize)> {
                let mut v = vec![(0usize, base), (1, base), (2, base)];
                v.extend(dev.iter().enumerate().map(|(x, &d)| (x + 3, (base as i32 - s * d) as usize)));
                v
            };
            let c = cal(5.0);
            let t1: LeadTrace<f64> = columns_to_trace(&mask_from(w + 3, h, &px(1))).unwrap();
            let tk: LeadTrace<f64> = columns_to_trace(&mask_from(w + 3, h, &px(k))).unwrap();
            let v1 = trace_to_signal(&t1, base as f64, &c);
            let vk = trace_to_signal(&tk, base as f64, &c);
            for (a, b) in v1.iter().zip(&vk) {
                prop_assert!((a * k as f64 - b).abs() < 1e-9);
            }
        }

        #[test]
        fn vertical_shift_leaves_signal_unchanged(rows in proptest::collection::vec(20usize..40, 3..40), d in 0usize..30) {
            let c = cal(4.0);
            let px: Vec<(usize, usize)> = rows.iter().enumerate().map(|(x, &y)| (x, y)).collect();
            let shifted: Vec<(usize, usize)> = px.iter().map(|&(x, y)| (x, y + d)).collect();
            let t0: LeadTrace<f64> = columns_to_trace(&mask_from(rows.len(), 80, &px)).unwrap();
            let t1: LeadTrace<f64> = columns_to_trace(&mask_from(rows.len(), 80, &shifted)).unwrap();
            let b0 = estimate_baseline(&t0);
            let b1 = estimate_baseline(&t1);
            prop_assert_eq!(trace_to_signal(&t0, b0, &c), trace_to_signal(&t1, b1, &c));
        }
    }
}
