use serde::{Deserialize, Serialize};

use crate::raster::BinaryMask;
use crate::scalar::Real;

use super::layout::{LeadKey, PlacedLayout};
use super::SegmentationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Density {
    /// Pixels at the original sample positions only.
    Sparse,
    /// Gaps between sample columns filled in.
    Dense,
}

/// Trace pixels of one lead, in full-image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadMask {
    key: LeadKey,
    mask: BinaryMask,
    density: Density,
}

impl LeadMask {
    /// Builds a mask, dropping pixels outside the lead's region.
    /// Returns the mask and the number of clipped pixels.
    pub fn clipped<T: Real>(
        key: LeadKey,
        mut mask: BinaryMask,
        density: Density,
        layout: &PlacedLayout<T>,
    ) -> (Self, usize) {
        let outside: Vec<(usize, usize)> = mask
            .foreground()
            .filter(|&(x, y)| layout.lead_at(x, y).is_none_or(|r| r.key != key))
            .collect();
        for &(x, y) in &outside {
            mask.set(x, y, false);
        }
        (Self { key, mask, density }, outside.len())
    }

    /// Wraps a mask whose pixels are already known to be in-region.
    pub(crate) fn from_parts(key: LeadKey, mask: BinaryMask, density: Density) -> Self {
        Self { key, mask, density }
    }

    pub fn key(&self) -> &LeadKey {
        &self.key
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn density(&self) -> Density {
        self.density
    }

    pub fn pixel_count(&self) -> usize {
        self.mask.count()
    }

    /// Sum and count of foreground rows per column.
    pub(crate) fn column_stats(&self) -> Vec<(usize, usize)> {
        let (w, h) = (self.mask.width(), self.mask.height());
        let mut stats = vec![(0usize, 0usize); w];
        for y in 0..h {
            for (x, s) in stats.iter_mut().enumerate() {
                if self.mask.get(x, y) {
                    s.0 += y;
                    s.1 += 1;
                }
            }
        }
        stats
    }
}

/// Fills the columns between neighbouring occupied columns with one pixel
/// each, on the straight line through the two columns' mean rows.
pub fn densify_mask(m: &LeadMask) -> Result<LeadMask, SegmentationError> {
    let occupied: Vec<(usize, f64)> = m
        .column_stats()
        .into_iter()
        .enumerate()
        .filter(|(_, s)| s.1 > 0)
        .map(|(x, s)| (x, s.0 as f64 / s.1 as f64))
        .collect();
    if occupied.len() < 2 {
        return Err(SegmentationError::TooSparse {
            lead: m.key.to_string(),
            columns: occupied.len(),
        });
    }
    let mut mask = m.mask.clone();
    let h = mask.height();
    for pair in occupied.windows(2) {
        let ((c1, r1), (c2, r2)) = (pair[0], pair[1]);
        for c in c1 + 1..c2 {
            let t = (c - c1) as f64 / (c2 - c1) as f64;
            let row = (r1 + (r2 - r1) * t).round();
            if row >= 0.0 && (row as usize) < h {
                mask.set(c, row as usize, true);
            }
        }
    }
    Ok(LeadMask {
        key: m.key.clone(),
        mask,
        density: Density::Dense,
    })
}
