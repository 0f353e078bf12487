//! Mask bundles: the hand-off format for externally predicted masks.
//!
//! A bundle is a directory with one 1-bit PNG per printed trace, named after
//! its key (`II.png`, `rhythm_II.png`), and a `manifest.json`:
//!
//! ```json
//! {"image_width": 1336, "image_height": 701, "density": "sparse", "leads": ["I", "rhythm_II"]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::raster::{load_mask, save_mask_png};
use crate::scalar::Real;

use super::layout::{LeadKey, LeadLayout, PlacedLayout};
use super::mask::{Density, LeadMask};
use super::SegmentationError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub image_width: usize,
    pub image_height: usize,
    pub density: Density,
    pub leads: Vec<String>,
}

fn io(path: &Path, e: impl ToString) -> SegmentationError {
    SegmentationError::Bundle(format!("{}: {}", path.display(), e.to_string()))
}

/// Writes masks (all of the same size) as a bundle directory.
pub fn write_mask_bundle(dir: &Path, masks: &[LeadMask]) -> Result<(), SegmentationError> {
    let first = masks
        .first()
        .ok_or_else(|| SegmentationError::Bundle("no masks to write".into()))?;
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let manifest = BundleManifest {
        image_width: first.mask().width(),
        image_height: first.mask().height(),
        density: first.density(),
        leads: masks.iter().map(|m| m.key().to_string()).collect(),
    };
    for m in masks {
        let p = dir.join(format!("{}.png", m.key()));
        save_mask_png(m.mask(), &p).map_err(|e| io(&p, e))?;
    }
    let p = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| io(&p, e))?;
    fs::write(&p, json + "\n").map_err(|e| io(&p, e))
}

pub fn read_manifest(dir: &Path) -> Result<BundleManifest, SegmentationError> {
    let p = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&p).map_err(|e| io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| io(&p, e))
}

/// Loads a bundle for an image of `width x height`, clipping every mask to
/// its layout region. Returns the masks and the total clipped pixel count.
pub fn ingest_masks<T: Real>(
    dir: &Path,
    layout: &LeadLayout,
    placed: &PlacedLayout<T>,
    width: usize,
    height: usize,
) -> Result<(Vec<LeadMask>, usize), SegmentationError> {
    let manifest = read_manifest(dir)?;
    if (manifest.image_width, manifest.image_height) != (width, height) {
        return Err(SegmentationError::DimensionMismatch {
            expected: (width, height),
            found: (manifest.image_width, manifest.image_height),
        });
    }
    let keys: Vec<LeadKey> = manifest
        .leads
        .iter()
        .map(|s| s.parse().expect("infallible"))
        .collect();
    if let Some(bad) = keys.iter().find(|k| !layout.contains(k)) {
        return Err(SegmentationError::UnknownLeadName(bad.to_string()));
    }
    let mut out = Vec::with_capacity(keys.len());
    let mut clipped_total = 0;
    for key in keys {
        let p = dir.join(format!("{key}.png"));
        let mask = load_mask(&p).map_err(|e| io(&p, e))?;
        if (mask.width(), mask.height()) != (width, height) {
            return Err(SegmentationError::DimensionMismatch {
                expected: (width, height),
                found: (mask.width(), mask.height()),
            });
        }
        let (m, clipped) = LeadMask::clipped(key, mask, manifest.density, placed);
        clipped_total += clipped;
        out.push(m);
    }
    Ok((out, clipped_total))
}
