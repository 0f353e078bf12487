//! Classical trace segmenter: the trace ink is darker than the grid, so an
//! Otsu split inside the darkest part of the histogram separates them.

use serde::{Deserialize, Serialize};

use crate::raster::{luminance_histogram, otsu_split, BinaryMask, RasterImage, HISTOGRAM_BINS};
use crate::scalar::Real;

use super::layout::{LeadKey, PlacedLayout};
use super::mask::{Density, LeadMask};
use super::SegmentationError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdConfig {
    /// Share of darkest pixels the trace threshold is searched in.
    pub dark_fraction: f64,
    /// Pixels on a grid row/column with fewer 8-connected ink neighbours are dropped.
    pub min_trace_neighbours: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            dark_fraction: 0.1,
            min_trace_neighbours: 3,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.dark_fraction > 0.0 && self.dark_fraction <= 1.0) {
            errs.push(format!(
                "segmentation.threshold.dark_fraction must lie in (0, 1], got {}",
                self.dark_fraction
            ));
        }
        if self.min_trace_neighbours > 8 {
            errs.push("segmentation.threshold.min_trace_neighbours must be at most 8".into());
        }
        errs
    }
}

/// Threshold for trace ink: Otsu over the darkest `dark_fraction` of pixels.
pub fn trace_threshold<T: Real>(img: &RasterImage<T>, dark_fraction: f64) -> Option<T> {
    let hist = luminance_histogram(img);
    let target = (dark_fraction * img.luminance().len() as f64).ceil() as u64;
    let mut cum = 0u64;
    let mut cut = HISTOGRAM_BINS - 1;
    for (b, &c) in hist.iter().enumerate() {
        cum += c;
        if cum >= target {
            cut = b;
            break;
        }
    }
    let mut dark = [0u64; HISTOGRAM_BINS];
    dark[..=cut].copy_from_slice(&hist[..=cut]);
    let k = otsu_split(&dark)?;
    Some(T::from_usize_lossy(k + 1) / T::from_usize_lossy(HISTOGRAM_BINS))
}

/// Rows (or columns) whose mean darkness stands out: the grid phase.
fn grid_phase(profile: &[f64]) -> Vec<bool> {
    let n = profile.len() as f64;
    let mean = profile.iter().sum::<f64>() / n;
    let sd = (profile.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    profile.iter().map(|&v| v > mean + 0.5 * sd).collect()
}

fn darkness_profiles<T: Real>(img: &RasterImage<T>) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let mut rows = vec![0.0; h];
    let mut cols = vec![0.0; w];
    for y in 0..h {
        for (x, &v) in img.row(y).iter().enumerate() {
            let d = 1.0 - v.as_f64();
            rows[y] += d;
            cols[x] += d;
        }
    }
    (rows, cols)
}

fn neighbours(mask: &BinaryMask, x: usize, y: usize) -> usize {
    let (x, y) = (x as isize, y as isize);
    let mut n = 0;
    for dy in -1..=1 {
        for dx in -1..=1 {
            if (dx != 0 || dy != 0) && mask.get_signed(x + dx, y + dy) {
                n += 1;
            }
        }
    }
    n
}

/// Ink mask with grid residue removed, before partitioning into leads.
pub fn trace_ink<T: Real>(img: &RasterImage<T>, cfg: &ThresholdConfig) -> Option<BinaryMask> {
    let t = trace_threshold(img, cfg.dark_fraction)?;
    let mut mask = crate::raster::binarise(img, t).ok()?;
    let (rows, cols) = darkness_profiles(img);
    let (grid_rows, grid_cols) = (grid_phase(&rows), grid_phase(&cols));
    let residue: Vec<(usize, usize)> = mask
        .foreground()
        .filter(|&(x, y)| {
            (grid_rows[y] || grid_cols[x]) && neighbours(&mask, x, y) < cfg.min_trace_neighbours
        })
        .collect();
    for (x, y) in residue {
        mask.set(x, y, false);
    }
    Some(mask)
}

/// Per-lead masks plus the keys that received no pixels.
pub fn segment_by_threshold_partial<T: Real>(
    img: &RasterImage<T>,
    layout: &PlacedLayout<T>,
    cfg: &ThresholdConfig,
) -> (Vec<LeadMask>, Vec<LeadKey>) {
    let regions = layout.regions();
    let mut masks: Vec<BinaryMask> = regions
        .iter()
        .map(|_| BinaryMask::empty(img.width(), img.height()))
        .collect();
    if let Some(ink) = trace_ink(img, cfg) {
        for (x, y) in ink.foreground() {
            if let Some(r) = layout.lead_at(x, y) {
                let i = regions.iter().position(|q| q.key == r.key).expect("region");
                masks[i].set(x, y, true);
            }
        }
    }
    let mut empty = Vec::new();
    let mut out = Vec::new();
    for (r, m) in regions.iter().zip(masks) {
        if m.count() == 0 {
            empty.push(r.key.clone());
        } else {
            out.push(LeadMask::from_parts(r.key.clone(), m, Density::Dense));
        }
    }
    (out, empty)
}

/// Segments every lead of the layout; fails if any lead gets no pixels.
pub fn segment_by_threshold<T: Real>(
    img: &RasterImage<T>,
    layout: &PlacedLayout<T>,
    cfg: &ThresholdConfig,
) -> Result<Vec<LeadMask>, SegmentationError> {
    let (masks, empty) = segment_by_threshold_partial(img, layout, cfg);
    if !empty.is_empty() {
        return Err(SegmentationError::EmptySegmentation {
            leads: empty.iter().map(|k| k.to_string()).collect(),
        });
    }
    Ok(masks)
}
