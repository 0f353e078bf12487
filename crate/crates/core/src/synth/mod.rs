//! Synthetic printout renderer.
//!
//! Draws a millimetre grid, the traces of a known record, an optional
//! calibration pulse and header block, then applies wrinkles, shadow,
//! noise and rotation. Ground-truth masks are captured before any
//! augmentation, in unrotated page coordinates.

mod draw;
mod signals;
mod suite;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{make_calibration, GridCalibration};
use crate::raster::{BinaryMask, RasterImage};
use crate::record::DigitisedRecord;
use crate::rotation::rotate_image;
use crate::scalar::Real;
use crate::segmentation::{Density, LeadLayout, LeadMask, PlacedLayout};

pub use draw::render_grid;
pub use signals::{generate_record, narrow_peaks_record, SignalKind};
pub use suite::{generate_sample, generate_suite, Sweep, SuiteRanges};

/// Largest rotation the renderer applies, in degrees.
pub const MAX_RENDER_ROTATION_DEGREES: f64 = 30.0;
/// Luminance factor inside a wrinkle line.
pub const WRINKLE_DARKENING: f64 = 0.85;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("lead {lead} leaves its row band at column {col}")]
    LayoutOverflow { lead: String, col: usize },
    #[error("invalid render config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("record does not match layout: {0}")]
    RecordMismatch(String),
    #[error("suite size must be at least 1")]
    EmptySuite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub pitch_px_per_mm: f64,
    pub rotation_degrees: f64,
    pub noise_sigma: f64,
    pub wrinkle_count: u32,
    /// Depth of a low-frequency darkening gradient; 0 disables it.
    pub shadow_strength: f64,
    pub include_calibration_pulse: bool,
    pub include_header_text: bool,
    pub grid_luminance: f64,
    pub trace_luminance: f64,
    #[serde(rename = "mm_per_mV")]
    pub mm_per_mv: f64,
    pub mm_per_second: f64,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            pitch_px_per_mm: 5.0,
            rotation_degrees: 0.0,
            noise_sigma: 0.0,
            wrinkle_count: 0,
            shadow_strength: 0.0,
            include_calibration_pulse: true,
            include_header_text: true,
            grid_luminance: 0.65,
            trace_luminance: 0.1,
            mm_per_mv: 10.0,
            mm_per_second: 25.0,
            seed: 0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.pitch_px_per_mm.is_finite() && self.pitch_px_per_mm >= 1.0) {
            errs.push(format!("pitch_px_per_mm must be at least 1, got {}", self.pitch_px_per_mm));
        }
        if !(self.rotation_degrees.abs() <= MAX_RENDER_ROTATION_DEGREES) {
            errs.push(format!(
                "rotation_degrees must be within +/-{MAX_RENDER_ROTATION_DEGREES}, got {}",
                self.rotation_degrees
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            errs.push(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if !(0.0..1.0).contains(&self.shadow_strength) {
            errs.push(format!("shadow_strength must be in [0, 1), got {}", self.shadow_strength));
        }
        if !(self.grid_luminance > 0.0 && self.grid_luminance < 1.0) {
            errs.push(format!("grid_luminance must be in (0, 1), got {}", self.grid_luminance));
        }
        if !(self.trace_luminance >= 0.0 && self.trace_luminance < self.grid_luminance) {
            errs.push(format!(
                "trace_luminance must be in [0, grid_luminance), got {}",
                self.trace_luminance
            ));
        }
        if !(self.mm_per_mv > 0.0 && self.mm_per_second > 0.0) {
            errs.push("mm_per_mV and mm_per_second must be positive".into());
        }
        errs
    }

    pub fn calibration<T: Real>(&self) -> GridCalibration<T> {
        make_calibration(
            T::lit(self.pitch_px_per_mm),
            T::lit(self.mm_per_mv),
            T::lit(self.mm_per_second),
        )
        .expect("validated config")
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSample<T> {
    pub image: RasterImage<T>,
    /// Dense masks of the drawn traces, before augmentation.
    pub truth_masks: Vec<LeadMask>,
    pub truth_record: DigitisedRecord<T>,
    pub config: RenderConfig,
    /// Layout placement on the unrotated page.
    pub placed: PlacedLayout<T>,
}

/// Renders `record` onto a page laid out by `layout`.
pub fn render<T: Real>(
    record: &DigitisedRecord<T>,
    layout: &LeadLayout,
    cfg: &RenderConfig,
) -> Result<SyntheticSample<T>, SynthError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(SynthError::InvalidConfig(errs));
    }
    let cal: GridCalibration<T> = cfg.calibration();
    let placed = layout.place(&cal, (T::zero(), T::zero()));
    let p = cfg.pitch_px_per_mm;
    let width = (layout.page_width_mm(cfg.mm_per_second) * p).round() as usize + 1;
    let height = (layout.page_height_mm() * p).round() as usize + 1;

    let mut lum = vec![1.0f64; width * height];
    draw::grid(&mut lum, width, height, p, cfg.grid_luminance);

    let mut masks = Vec::with_capacity(placed.regions().len());
    let px_per_mv = cal.px_per_mv().as_f64();
    let fs = record.sampling_rate_hz.as_f64();
    let pps = cal.px_per_second().as_f64();
    for region in placed.regions() {
        let name = region.key.to_string();
        let lead = record
            .lead(&name)
            .ok_or_else(|| SynthError::RecordMismatch(format!("missing lead {name}")))?;
        let base = region.baseline_row.as_f64().round();
        let x0 = placed.time_zero_x.as_f64() + lead.start_seconds.as_f64() * pps;
        let points: Vec<(i64, i64)> = lead
            .samples
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let x = x0 + i as f64 / fs * pps;
                let y = base - v.as_f64() * px_per_mv;
                (x.round() as i64, y.round() as i64)
            })
            .collect();
        let mut mask = BinaryMask::empty(width, height);
        for &(x, y) in &points {
            let inside = |y: i64| {
                y >= 0
                    && (y as usize) < height
                    && placed.band_for_row(y as usize) == Some(region.band)
            };
            if x >= 0 && region.contains_col(x as usize) && !(inside(y) && inside(y + 1)) {
                return Err(SynthError::LayoutOverflow {
                    lead: name,
                    col: x as usize,
                });
            }
        }
        draw::polyline(&points, |x, y, steep| {
            for (px, py) in draw::pen(x, y, steep) {
                if px < 0 || py < 0 || py as usize >= height || !region.contains_col(px as usize) {
                    continue;
                }
                if placed.band_for_row(py as usize) == Some(region.band) {
                    mask.set(px as usize, py as usize, true);
                }
            }
        });
        for (x, y) in mask.foreground() {
            lum[y * width + x] = cfg.trace_luminance;
        }
        masks.push(LeadMask::from_parts(region.key.clone(), mask, Density::Dense));
    }

    if cfg.include_calibration_pulse {
        for b in 0..layout.band_count() {
            let (top, bottom) = placed.band_rows(b);
            let base = ((top + bottom) * T::lit(0.5)).as_f64().round() as i64;
            draw::calibration_pulse(&mut lum, width, height, p, base, px_per_mv, cfg.trace_luminance);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ec9);
    if cfg.include_header_text {
        let top_margin = layout.geometry.margin_top_mm;
        draw::header_block(&mut lum, width, p, top_margin, cfg.trace_luminance, &mut rng);
    }
    for _ in 0..cfg.wrinkle_count {
        draw::wrinkle(&mut lum, width, height, p, &mut rng);
    }
    if cfg.shadow_strength > 0.0 {
        draw::shadow(&mut lum, width, height, cfg.shadow_strength, &mut rng);
    }
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("valid sigma");
        for v in lum.iter_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }

    let image = RasterImage::new(width, height, lum.into_iter().map(T::lit).collect())
        .expect("valid page raster");
    let image = if cfg.rotation_degrees != 0.0 {
        rotate_image(&image, T::lit(cfg.rotation_degrees)).expect("rotation within limits")
    } else {
        image
    };
    Ok(SyntheticSample {
        image,
        truth_masks: masks,
        truth_record: record.clone(),
        config: cfg.clone(),
        placed,
    })
}

#[cfg(test)]
mod tests;
