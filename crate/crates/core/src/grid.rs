//! Grid pitch estimation and the pixel to physical-unit calibration.
//!
//! The pitch is measured on a deskewed page from the row-wise darkness
//! profile: its autocorrelation peaks at every multiple of the small-square
//! spacing. The 5 mm bold lines add a stronger peak at five times the pitch,
//! so the smallest peak whose multiples also peak is taken as the base
//! period and then refined progressively on its higher multiples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::RasterImage;
use crate::scalar::Real;

pub const DEFAULT_MM_PER_MV: f64 = 10.0;
pub const DEFAULT_MM_PER_SECOND: f64 = 25.0;

/// Smallest lag considered a plausible pitch, in pixels.
pub const MIN_PITCH_LAG: usize = 3;
/// Largest plausible pitch as a fraction of the image height.
pub const MAX_PITCH_FRACTION: f64 = 0.05;
/// Peaks must exceed this multiple of the white-noise autocorrelation floor `1/sqrt(n)`.
pub const PEAK_NOISE_FACTOR: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("no grid detected: {0}")]
    NoGridDetected(String),
    #[error("scale factors must be positive: {0}")]
    NonPositiveScale(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCalibration<T> {
    pub pitch_px_per_mm: T,
    pub mm_per_mv: T,
    pub mm_per_second: T,
}

impl<T: Real> GridCalibration<T> {
    /// Millivolts per pixel of vertical deflection.
    pub fn mv_per_pixel(&self) -> T {
        T::one() / (self.pitch_px_per_mm * self.mm_per_mv)
    }

    pub fn seconds_per_pixel(&self) -> T {
        T::one() / (self.pitch_px_per_mm * self.mm_per_second)
    }

    pub fn px_per_mv(&self) -> T {
        self.pitch_px_per_mm * self.mm_per_mv
    }

    pub fn px_per_second(&self) -> T {
        self.pitch_px_per_mm * self.mm_per_second
    }
}

pub fn make_calibration<T: Real>(
    pitch_px_per_mm: T,
    mm_per_mv: T,
    mm_per_second: T,
) -> Result<GridCalibration<T>, GridError> {
    for (name, v) in [
        ("pitch_px_per_mm", pitch_px_per_mm),
        ("mm_per_mV", mm_per_mv),
        ("mm_per_second", mm_per_second),
    ] {
        if !(v > T::zero() && v.is_finite()) {
            return Err(GridError::NonPositiveScale(format!("{name} = {v}")));
        }
    }
    Ok(GridCalibration {
        pitch_px_per_mm,
        mm_per_mv,
        mm_per_second,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    #[serde(rename = "mm_per_mV")]
    pub mm_per_mv: f64,
    pub mm_per_second: f64,
    /// Skips estimation when set.
    pub pitch_override_px: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            mm_per_mv: DEFAULT_MM_PER_MV,
            mm_per_second: DEFAULT_MM_PER_SECOND,
            pitch_override_px: None,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("mm_per_mV", Some(self.mm_per_mv)),
            ("mm_per_second", Some(self.mm_per_second)),
            ("pitch_override_px", self.pitch_override_px),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    errs.push(format!("grid.{name} must be positive, got {v}"));
                }
            }
        }
        errs
    }

    /// Calibration from the override or from the estimated pitch of `img`.
    pub fn calibrate<T: Real>(&self, img: &RasterImage<T>) -> Result<GridCalibration<T>, GridError> {
        let pitch = match self.pitch_override_px {
            Some(p) => T::lit(p),
            None => estimate_grid_pitch(img)?,
        };
        make_calibration(pitch, T::lit(self.mm_per_mv), T::lit(self.mm_per_second))
    }
}

/// Mean darkness `1 - luminance` of every row.
pub fn row_darkness_profile<T: Real>(img: &RasterImage<T>) -> Vec<T> {
    let w = T::from_usize_lossy(img.width());
    (0..img.height())
        .map(|y| img.row(y).iter().map(|&v| T::one() - v).sum::<T>() / w)
        .collect()
}

/// Unbiased, variance-normalised autocorrelation of a mean-removed series, lags `0..=max_lag`.
fn autocorrelation<T: Real>(x: &[T], max_lag: usize) -> Option<Vec<T>> {
    let n = x.len();
    let var = x.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(n);
    if !(var > T::lit(1e-12)) {
        return None;
    }
    Some(
        (0..=max_lag.min(n - 1))
            .map(|k| {
                let s: T = x[..n - k].iter().zip(&x[k..]).map(|(&a, &b)| a * b).sum();
                s / T::from_usize_lossy(n - k) / var
            })
            .collect(),
    )
}

fn is_peak<T: Real>(r: &[T], k: usize, floor: T) -> bool {
    k >= 1 && k + 1 < r.len() && r[k] >= r[k - 1] && r[k] > r[k + 1] && r[k] > floor
}

/// Vertex offset of the parabola through `r[k-1], r[k], r[k+1]`, in `[-0.5, 0.5]`.
fn parabolic_offset<T: Real>(r: &[T], k: usize) -> T {
    let (a, b, c) = (r[k - 1], r[k], r[k + 1]);
    let den = a - b - b + c;
    if den >= T::zero() {
        return T::zero();
    }
    (T::lit(0.5) * (a - c) / den).max(T::lit(-0.5)).min(T::lit(0.5))
}

/// Strongest peak lag within `centre +/- radius`.
fn peak_near<T: Real>(r: &[T], centre: usize, radius: usize, floor: T) -> Option<usize> {
    let lo = centre.saturating_sub(radius).max(1);
    let hi = (centre + radius).min(r.len().saturating_sub(2));
    (lo..=hi)
        .filter(|&k| is_peak(r, k, floor))
        .max_by(|&a, &b| r[a].partial_cmp(&r[b]).unwrap_or(std::cmp::Ordering::Equal))
}

/// Pitch of the 1 mm grid in pixels.
pub fn estimate_grid_pitch<T: Real>(img: &RasterImage<T>) -> Result<T, GridError> {
    let profile = row_darkness_profile(img);
    let n = profile.len();
    let max_pitch = (MAX_PITCH_FRACTION * n as f64).floor() as usize;
    if max_pitch <= MIN_PITCH_LAG {
        return Err(GridError::NoGridDetected(format!(
            "image height {n} too small for a pitch window"
        )));
    }
    let mean = profile.iter().copied().sum::<T>() / T::from_usize_lossy(n);
    let centred: Vec<T> = profile.iter().map(|&v| v - mean).collect();
    let max_lag = (n / 2).max(max_pitch + 2);
    let r = autocorrelation(&centred, max_lag)
        .ok_or_else(|| GridError::NoGridDetected("flat row profile".into()))?;
    let floor = T::lit(PEAK_NOISE_FACTOR / (n as f64).sqrt());

    let candidates: Vec<usize> = (MIN_PITCH_LAG..=max_pitch)
        .filter(|&k| is_peak(&r, k, floor))
        .collect();
    let base = candidates
        .iter()
        .map(|&k| T::from_usize_lossy(k) + parabolic_offset(&r, k))
        .find(|&lag| {
            (2..=3).all(|m| {
                let target = (lag * T::from_usize_lossy(m)).round().to_usize().unwrap_or(usize::MAX);
                target + 1 >= r.len() || {
                    let tol = ((0.1 * target as f64).round() as usize).max(1);
                    peak_near(&r, target, tol, floor).is_some()
                }
            })
        })
        .ok_or_else(|| {
            GridError::NoGridDetected(format!(
                "no periodic autocorrelation peak in [{MIN_PITCH_LAG}, {max_pitch}] px"
            ))
        })?;

    let mut pitch = base;
    let mut m = 2usize;
    loop {
        let predicted = (pitch * T::from_usize_lossy(m)).round().to_usize().unwrap_or(usize::MAX);
        if predicted + 2 >= r.len() {
            break;
        }
        let radius = ((pitch.as_f64() * 0.2).round() as usize).max(1);
        let Some(k) = peak_near(&r, predicted, radius, floor) else {
            break;
        };
        pitch = (T::from_usize_lossy(k) + parabolic_offset(&r, k)) / T::from_usize_lossy(m);
        m += 1;
    }
    Ok(pitch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize, pitch: f64, offset: f64) -> RasterImage<f64> {
        let mut im = RasterImage::filled(w, h, 1.0);
        let mut k = 0usize;
        loop {
            let y = (offset + k as f64 * pitch).round() as usize;
            if y >= h {
                break;
            }
            let thick = if k % 5 == 0 { 2 } else { 1 };
            for yy in y..(y + thick).min(h) {
                for x in 0..w {
                    im.set(x, yy, 0.6);
                }
            }
            k += 1;
        }
        im
    }

    #[test]
    fn calibration_arithmetic() {
        let c = make_calibration(10.0f64, 10.0, 25.0).unwrap();
        assert!((c.mv_per_pixel() - 0.01).abs() < 1e-15);
        assert!((c.seconds_per_pixel() - 0.004).abs() < 1e-15);
        let one = make_calibration(1.0f64, 1.0, 1.0).unwrap();
        assert_eq!(one.mv_per_pixel(), 1.0);
        assert_eq!(one.seconds_per_pixel(), 1.0);
        assert!(matches!(
            make_calibration(0.0f64, 10.0, 25.0),
            Err(GridError::NonPositiveScale(_))
        ));
        assert!(make_calibration(5.0f64, -1.0, 25.0).is_err());
    }

    #[test]
    fn integer_pitches() {
        for p in [5.0, 7.0, 10.0, 13.0] {
            let est = estimate_grid_pitch(&grid(50, 600, p, 2.0)).unwrap();
            assert!((est - p).abs() < 0.1, "pitch {p}: {est}");
        }
    }

    #[test]
    fn fractional_pitch() {
        let est = estimate_grid_pitch(&grid(40, 800, 4.6, 0.0)).unwrap();
        assert!((est - 4.6).abs() < 0.05, "{est}");
    }

    #[test]
    fn blank_has_no_grid() {
        assert!(matches!(
            estimate_grid_pitch(&RasterImage::<f64>::filled(100, 200, 1.0)),
            Err(GridError::NoGridDetected(_))
        ));
    }

    #[test]
    fn uniform_offset_does_not_move_pitch() {
        let g = grid(50, 500, 7.0, 1.0);
        let mut darker = g.clone();
        darker.map_in_place(|_, _, v| v - 0.2);
        let (a, b) = (estimate_grid_pitch(&g).unwrap(), estimate_grid_pitch(&darker).unwrap());
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn pitch_scales_with_upscaling() {
        let g = grid(30, 400, 6.0, 0.0);
        let base = estimate_grid_pitch(&g).unwrap();
        for k in [2usize, 3] {
            let up = estimate_grid_pitch(&g.upscale(k)).unwrap();
            assert!((up / (k as f64 * base) - 1.0).abs() < 0.02, "k={k}: {up} vs {base}");
        }
    }

    #[test]
    fn override_skips_estimation() {
        let cfg = GridConfig {
            pitch_override_px: Some(8.0),
            ..Default::default()
        };
        let c = cfg.calibrate(&RasterImage::<f64>::filled(10, 10, 1.0)).unwrap();
        assert_eq!(c.pitch_px_per_mm, 8.0);
    }
}
