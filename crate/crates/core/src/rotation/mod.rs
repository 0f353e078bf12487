//! Deskew: Hough line detection on the full page, angle-window and
//! parallel-line filtering, and the correction angle that makes the
//! dominant line family horizontal.
//!
//! Grid lines, not waveform strokes, dominate the votes, so the whole image
//! is used without separating grid from trace.

mod filter;
mod hough;
mod resample;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{binarise, flatten_background, otsu_threshold, otsu_threshold_above, RasterError, RasterImage};
use crate::scalar::Real;

pub use filter::{filter_lines, weighted_mean_degrees};
pub use hough::{
    extract_edges, extract_peak_lines, hough_accumulate, hough_accumulate_window, HoughAccumulator,
    PolarLine,
};
pub use resample::{rotate_image, MAX_ROTATION_DEGREES};

#[derive(Debug, Error)]
pub enum RotationError {
    #[error("no lines detected")]
    NoLinesDetected,
    #[error("no parallel cluster: {candidates} candidate lines, {required} required")]
    NoParallelCluster { candidates: usize, required: usize },
    #[error("point ({x}, {y}) lies outside rho range +/-{diag}")]
    PointOutOfRange { x: f64, y: f64, diag: f64 },
    #[error("rotation angle {0} degrees exceeds 45")]
    AngleOutOfRange(f64),
    #[error("estimated correction {angle} degrees exceeds the configured maximum {max}")]
    CorrectionOutOfRange { angle: f64, max: f64 },
    #[error("invalid rotation parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

impl RotationError {
    /// Errors after which the pipeline continues with the unrotated image.
    pub fn is_soft_failure(&self) -> bool {
        matches!(
            self,
            Self::NoLinesDetected | Self::NoParallelCluster { .. } | Self::CorrectionOutOfRange { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RotationConfig {
    pub theta_step_deg: f64,
    pub rho_step_px: f64,
    /// `None`: `max(50, 0.5 * image width)`.
    pub min_votes: Option<u32>,
    pub angle_centre_deg: f64,
    pub angle_half_range_deg: f64,
    pub min_parallel: usize,
    pub parallel_tol_deg: f64,
    pub max_correction_deg: f64,
    /// `None`: Otsu threshold of the whole image.
    pub binarise_threshold: Option<f64>,
    /// Tile size for dividing out uneven illumination before thresholding;
    /// `None` skips it.
    pub background_block_px: Option<usize>,
}

impl Default for RotationConfig {
    fn default() -> Self {
        Self {
            theta_step_deg: 0.25,
            rho_step_px: 1.0,
            min_votes: None,
            angle_centre_deg: 90.0,
            angle_half_range_deg: 30.0,
            min_parallel: 5,
            parallel_tol_deg: 1.0,
            max_correction_deg: 45.0,
            binarise_threshold: None,
            background_block_px: Some(32),
        }
    }
}

impl RotationConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let pos = |name: &str, v: f64, errs: &mut Vec<String>| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("rotation.{name} must be positive, got {v}"));
            }
        };
        pos("theta_step_deg", self.theta_step_deg, &mut errs);
        pos("rho_step_px", self.rho_step_px, &mut errs);
        pos("angle_half_range_deg", self.angle_half_range_deg, &mut errs);
        if !(self.parallel_tol_deg >= 0.0) {
            errs.push(format!(
                "rotation.parallel_tol_deg must be non-negative, got {}",
                self.parallel_tol_deg
            ));
        }
        if !(self.angle_centre_deg >= 0.0 && self.angle_centre_deg < 180.0) {
            errs.push(format!(
                "rotation.angle_centre_deg must lie in [0, 180), got {}",
                self.angle_centre_deg
            ));
        }
        if self.min_parallel == 0 {
            errs.push("rotation.min_parallel must be at least 1".into());
        }
        if self.min_votes == Some(0) {
            errs.push("rotation.min_votes must be at least 1".into());
        }
        if !(self.max_correction_deg > 0.0 && self.max_correction_deg <= MAX_ROTATION_DEGREES) {
            errs.push(format!(
                "rotation.max_correction_deg must lie in (0, 45], got {}",
                self.max_correction_deg
            ));
        }
        if self.background_block_px == Some(0) {
            errs.push("rotation.background_block_px must be at least 1".into());
        }
        if let Some(t) = self.binarise_threshold {
            if !(t > 0.0 && t < 1.0) {
                errs.push(format!("rotation.binarise_threshold must lie in (0, 1), got {t}"));
            }
        }
        errs
    }

    pub fn min_votes_for(&self, width: usize) -> u32 {
        self.min_votes
            .unwrap_or_else(|| (0.5 * width as f64).round().max(50.0) as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotationEstimate<T> {
    /// Correction to pass to [`rotate_image`] so the line family becomes horizontal.
    pub angle_degrees: T,
    pub supporting_lines: usize,
    pub mean_residual_degrees: T,
}

/// Estimates the deskew correction of a page image.
pub fn estimate_rotation<T: Real>(
    img: &RasterImage<T>,
    cfg: &RotationConfig,
) -> Result<RotationEstimate<T>, RotationError> {
    if let Some(e) = cfg.validate().into_iter().next() {
        return Err(RotationError::InvalidParameter(e));
    }
    let flat;
    let img = match cfg.background_block_px {
        Some(b) => {
            flat = flatten_background(img, b);
            &flat
        }
        None => img,
    };
    if let Some(t) = cfg.binarise_threshold {
        return estimate_at(img, T::lit(t), cfg);
    }
    let t1 = match otsu_threshold(img) {
        Ok(t) => t,
        Err(RasterError::DegenerateImage) => return Err(RotationError::NoLinesDetected),
        Err(e) => return Err(e.into()),
    };
    match estimate_at(img, t1, cfg) {
        // dark trace or wrinkle ink can take the first split, leaving the
        // grid on the light side; split that side again
        Err(e @ (RotationError::NoLinesDetected | RotationError::NoParallelCluster { .. })) => {
            match otsu_threshold_above(img, t1) {
                Ok(t2) if t2 > t1 && t2 < T::one() => estimate_at(img, t2, cfg).map_err(|_| e),
                _ => Err(e),
            }
        }
        r => r,
    }
}

/// Line detection and filtering on the image binarised at `threshold`.
fn estimate_at<T: Real>(
    img: &RasterImage<T>,
    threshold: T,
    cfg: &RotationConfig,
) -> Result<RotationEstimate<T>, RotationError> {
    let mask = binarise(img, threshold)?;
    let two = T::lit(2.0);
    let (cx, cy) = (
        T::from_usize_lossy(img.width()) / two,
        T::from_usize_lossy(img.height()) / two,
    );
    let points: Vec<(T, T)> = extract_edges(&mask)
        .into_iter()
        .map(|(x, y)| (T::from_usize_lossy(x) - cx, T::from_usize_lossy(y) - cy))
        .collect();
    if points.is_empty() {
        return Err(RotationError::NoLinesDetected);
    }
    let diag = (cx * cx + cy * cy).sqrt() + T::one();

    // only the bins the angle window can keep are accumulated
    let step = cfg.theta_step_deg;
    let total_bins = hough::full_theta_bins(T::lit(step).to_radians());
    let lo = ((cfg.angle_centre_deg - cfg.angle_half_range_deg) / step).floor().max(0.0) as usize;
    let hi = (((cfg.angle_centre_deg + cfg.angle_half_range_deg) / step).ceil() as usize)
        .min(total_bins - 1);
    let acc = hough_accumulate_window(
        &points,
        T::lit(step).to_radians(),
        T::lit(cfg.rho_step_px),
        diag,
        lo,
        hi + 1 - lo,
    )?;
    let peaks = extract_peak_lines(&acc, cfg.min_votes_for(img.width()));
    if peaks.is_empty() {
        return Err(RotationError::NoLinesDetected);
    }
    let cluster = filter_lines(
        &peaks,
        T::lit(cfg.angle_centre_deg),
        T::lit(cfg.angle_half_range_deg),
        cfg.min_parallel,
        T::lit(cfg.parallel_tol_deg),
    )?;
    Ok(estimate_from_cluster(&cluster, cfg)?)
}

fn estimate_from_cluster<T: Real>(
    cluster: &[PolarLine<T>],
    cfg: &RotationConfig,
) -> Result<RotationEstimate<T>, RotationError> {
    let mean = weighted_mean_degrees(cluster);
    let (mut wsum, mut vsum) = (T::zero(), T::zero());
    for l in cluster {
        let v = T::from_u32(l.votes).unwrap_or_else(T::one);
        wsum += v * (l.theta_degrees() - mean).abs();
        vsum += v;
    }
    let angle = T::lit(90.0) - mean;
    if angle.abs() > T::lit(cfg.max_correction_deg) {
        return Err(RotationError::CorrectionOutOfRange {
            angle: angle.as_f64(),
            max: cfg.max_correction_deg,
        });
    }
    Ok(RotationEstimate {
        angle_degrees: angle,
        supporting_lines: cluster.len(),
        mean_residual_degrees: wsum / vsum,
    })
}

/// Estimates and applies the correction. Soft failures leave the image as is
/// and are returned alongside it.
pub fn deskew<T: Real>(
    img: &RasterImage<T>,
    cfg: &RotationConfig,
) -> Result<(RasterImage<T>, Result<RotationEstimate<T>, RotationError>), RotationError> {
    match estimate_rotation(img, cfg) {
        Ok(est) => Ok((rotate_image(img, est.angle_degrees)?, Ok(est))),
        Err(e) if e.is_soft_failure() => Ok((img.clone(), Err(e))),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Horizontal dark lines every `pitch` rows.
    fn ruled(w: usize, h: usize, pitch: usize) -> RasterImage<f64> {
        let mut im = RasterImage::filled(w, h, 1.0);
        for y in (pitch / 2..h).step_by(pitch) {
            for x in 0..w {
                im.set(x, y, 0.4);
            }
        }
        im
    }

    #[test]
    fn blank_page_has_no_lines() {
        let im = RasterImage::<f64>::filled(200, 100, 1.0);
        assert!(matches!(
            estimate_rotation(&im, &RotationConfig::default()),
            Err(RotationError::NoLinesDetected)
        ));
    }

    #[test]
    fn horizontal_rules_need_no_correction() {
        let est = estimate_rotation(&ruled(300, 200, 10), &RotationConfig::default()).unwrap();
        assert!(est.angle_degrees.abs() < 1e-9);
        assert!(est.supporting_lines >= 5);
    }

    #[test]
    fn rotated_rules_give_opposite_correction() {
        let im = rotate_image(&ruled(300, 200, 10), 7.0).unwrap();
        let est = estimate_rotation(&im, &RotationConfig::default()).unwrap();
        assert!((est.angle_degrees + 7.0).abs() <= 0.25, "{est:?}");

        let f32_est = estimate_rotation(&im.cast::<f32>(), &RotationConfig::default()).unwrap();
        assert!((f32_est.angle_degrees + 7.0).abs() <= 0.25);
    }

    #[test]
    fn too_few_rules_is_no_parallel_cluster() {
        let im = ruled(300, 30, 10);
        let r = estimate_rotation(&im, &RotationConfig::default());
        assert!(matches!(r, Err(RotationError::NoParallelCluster { .. })), "{r:?}");
    }

    #[test]
    fn deskew_soft_failure_keeps_image() {
        let im = RasterImage::<f64>::filled(64, 64, 1.0);
        let (out, est) = deskew(&im, &RotationConfig::default()).unwrap();
        assert_eq!(out, im);
        assert!(est.is_err());
    }

    #[test]
    fn config_validation_lists_every_problem() {
        let cfg = RotationConfig {
            theta_step_deg: 0.0,
            min_parallel: 0,
            binarise_threshold: Some(2.0),
            ..Default::default()
        };
        assert_eq!(cfg.validate().len(), 3);
        assert!(RotationConfig::default().validate().is_empty());
    }
}
