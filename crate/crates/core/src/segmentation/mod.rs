//! Per-lead trace masks: the threshold segmenter, external mask bundles,
//! and sparse-to-dense interpolation.
//!
//! Lead identity comes from position on the page. The layout's regions play
//! the role of the positional prior a learned segmenter would pick up.

mod bundle;
mod layout;
mod mask;
mod threshold;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundle::{ingest_masks, read_manifest, write_mask_bundle, BundleManifest, MANIFEST_FILE};
pub use layout::{
    default_layout, LeadKey, LeadLayout, LeadRegion, LeadSlot, PageGeometry, PlacedLayout,
    DEFAULT_LAYOUT_NAME,
};
pub use mask::{densify_mask, Density, LeadMask};
pub use threshold::{
    segment_by_threshold, segment_by_threshold_partial, trace_ink, trace_threshold,
    ThresholdConfig,
};

#[derive(Debug, Error, PartialEq)]
pub enum SegmentationError {
    #[error("no trace pixels for leads: {}", .leads.join(", "))]
    EmptySegmentation { leads: Vec<String> },
    #[error("unknown lead name {0:?}")]
    UnknownLeadName(String),
    #[error("mask is {}x{}, image is {}x{}", .found.0, .found.1, .expected.0, .expected.1)]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("lead {lead}: {columns} occupied column(s), at least 2 needed")]
    TooSparse { lead: String, columns: usize },
    #[error("mask bundle: {0}")]
    Bundle(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentationMode {
    Threshold,
    ExternalMasks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    pub mode: SegmentationMode,
    /// Bundle directory per image; `{id}` is replaced by the image stem.
    pub mask_dir_pattern: Option<String>,
    pub threshold: ThresholdConfig,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            mode: SegmentationMode::Threshold,
            mask_dir_pattern: None,
            threshold: ThresholdConfig::default(),
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = self.threshold.validate();
        match (self.mode, &self.mask_dir_pattern) {
            (SegmentationMode::ExternalMasks, None) => errs.push(
                "segmentation.mode external_masks requires segmentation.mask_dir_pattern".into(),
            ),
            (SegmentationMode::Threshold, Some(_)) => errs.push(
                "segmentation.mask_dir_pattern is set but segmentation.mode is threshold".into(),
            ),
            _ => {}
        }
        errs
    }

    pub fn mask_dir_for(&self, id: &str) -> Option<std::path::PathBuf> {
        self.mask_dir_pattern
            .as_ref()
            .map(|p| std::path::PathBuf::from(p.replace("{id}", id)))
    }
}
