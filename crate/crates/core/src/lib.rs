//! Reconstructs ECG time series from images of paper printouts.
//!
//! The pipeline deskews the page with a Hough transform over the grid,
//! calibrates the scale from the grid pitch, segments each lead's trace,
//! and turns the masks into sampled signals. Scoring, a synthetic page
//! renderer and batch commands sit alongside.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

pub mod grid;
pub mod harness;
pub mod raster;
pub mod record;
pub mod rotation;
pub mod scalar;
pub mod scoring;
pub mod segmentation;
pub mod synth;
pub mod vectorise;

pub use scalar::Real;

pub type Image32 = raster::RasterImage<f32>;
pub type Image64 = raster::RasterImage<f64>;
pub type Record32 = record::DigitisedRecord<f32>;
pub type Record64 = record::DigitisedRecord<f64>;
pub type Calibration32 = grid::GridCalibration<f32>;
pub type Calibration64 = grid::GridCalibration<f64>;
pub type Estimate32 = rotation::RotationEstimate<f32>;
pub type Estimate64 = rotation::RotationEstimate<f64>;
pub type Report32 = scoring::SnrReport<f32>;
pub type Report64 = scoring::SnrReport<f64>;
pub type Sample32 = synth::SyntheticSample<f32>;
pub type Sample64 = synth::SyntheticSample<f64>;
