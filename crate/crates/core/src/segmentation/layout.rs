//! Printed page geometry: which lead sits in which row band and column span.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grid::GridCalibration;
use crate::scalar::Real;

const RHYTHM_PREFIX: &str = "rhythm_";

/// A printed trace: a lead's short segment, or its full-width rhythm strip.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LeadKey {
    pub name: String,
    pub rhythm: bool,
}

impl LeadKey {
    pub fn segment(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            rhythm: false,
        }
    }

    pub fn rhythm(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            rhythm: true,
        }
    }
}

impl fmt::Display for LeadKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rhythm {
            write!(f, "{RHYTHM_PREFIX}{}", self.name)
        } else {
            f.write_str(&self.name)
        }
    }
}

impl FromStr for LeadKey {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.strip_prefix(RHYTHM_PREFIX) {
            Some(name) => Self::rhythm(name),
            None => Self::segment(s),
        })
    }
}

/// Page margins and band height in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageGeometry {
    pub margin_left_mm: f64,
    pub margin_right_mm: f64,
    pub margin_top_mm: f64,
    pub margin_bottom_mm: f64,
    pub band_height_mm: f64,
}

impl Default for PageGeometry {
    fn default() -> Self {
        Self {
            margin_left_mm: 12.0,
            margin_right_mm: 5.0,
            margin_top_mm: 15.0,
            margin_bottom_mm: 5.0,
            band_height_mm: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadLayout {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` names.
    pub lead_order: Vec<String>,
    /// Full-width strips printed below the segment grid.
    pub rhythm_leads: Vec<String>,
    pub record_seconds: f64,
    pub geometry: PageGeometry,
}

pub const DEFAULT_LAYOUT_NAME: &str = "standard_3x4_rhythm_II";

/// Where a key sits on the page, in layout terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadSlot {
    pub band: usize,
    /// `None` for rhythm strips.
    pub col: Option<usize>,
    pub start_seconds: f64,
    pub duration_seconds: f64,
}

/// The standard 3x4 printout with a lead II rhythm strip, 10 s.
pub fn default_layout() -> LeadLayout {
    LeadLayout {
        name: DEFAULT_LAYOUT_NAME.into(),
        rows: 3,
        cols: 4,
        lead_order: [
            "I", "aVR", "V1", "V4", "II", "aVL", "V2", "V5", "III", "aVF", "V3", "V6",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        rhythm_leads: vec!["II".into()],
        record_seconds: 10.0,
        geometry: PageGeometry::default(),
    }
}

impl LeadLayout {
    pub fn by_name(name: &str) -> Option<Self> {
        (name == DEFAULT_LAYOUT_NAME).then(default_layout)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.rows == 0 || self.cols == 0 {
            errs.push("layout needs at least one row and one column".into());
        }
        if self.lead_order.len() != self.rows * self.cols {
            errs.push(format!(
                "lead_order has {} names, expected rows*cols = {}",
                self.lead_order.len(),
                self.rows * self.cols
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for k in self.keys() {
            if !seen.insert(k.to_string()) {
                errs.push(format!("lead {k} appears twice"));
            }
        }
        if !(self.record_seconds > 0.0) {
            errs.push("record_seconds must be positive".into());
        }
        errs
    }

    pub fn band_count(&self) -> usize {
        self.rows + self.rhythm_leads.len()
    }

    pub fn segment_seconds(&self) -> f64 {
        self.record_seconds / self.cols as f64
    }

    /// Segment keys row-major, then rhythm strips.
    pub fn keys(&self) -> Vec<LeadKey> {
        self.lead_order
            .iter()
            .map(LeadKey::segment)
            .chain(self.rhythm_leads.iter().map(LeadKey::rhythm))
            .collect()
    }

    pub fn contains(&self, key: &LeadKey) -> bool {
        self.slot(key).is_some()
    }

    pub fn slot(&self, key: &LeadKey) -> Option<LeadSlot> {
        if key.rhythm {
            let i = self.rhythm_leads.iter().position(|n| *n == key.name)?;
            return Some(LeadSlot {
                band: self.rows + i,
                col: None,
                start_seconds: 0.0,
                duration_seconds: self.record_seconds,
            });
        }
        let i = self.lead_order.iter().position(|n| *n == key.name)?;
        let (row, col) = (i / self.cols, i % self.cols);
        let seg = self.segment_seconds();
        Some(LeadSlot {
            band: row,
            col: Some(col),
            start_seconds: col as f64 * seg,
            duration_seconds: seg,
        })
    }

    pub fn page_width_mm(&self, mm_per_second: f64) -> f64 {
        let g = &self.geometry;
        g.margin_left_mm + self.record_seconds * mm_per_second + g.margin_right_mm
    }

    pub fn page_height_mm(&self) -> f64 {
        let g = &self.geometry;
        g.margin_top_mm + self.band_count() as f64 * g.band_height_mm + g.margin_bottom_mm
    }

    /// Resolves the layout to pixels for a page whose top-left corner is at `origin`.
    pub fn place<T: Real>(&self, cal: &GridCalibration<T>, origin: (T, T)) -> PlacedLayout<T> {
        let p = cal.pitch_px_per_mm;
        let g = &self.geometry;
        let band_h = T::lit(g.band_height_mm) * p;
        let first_top = origin.1 + T::lit(g.margin_top_mm) * p;
        let x0 = origin.0 + T::lit(g.margin_left_mm) * p;
        let pps = cal.px_per_second();
        let bands: Vec<(T, T, T)> = (0..self.band_count())
            .map(|b| {
                let top = first_top + T::from_usize_lossy(b) * band_h;
                (top, top + band_h, top + band_h * T::lit(0.5))
            })
            .collect();
        let regions = self
            .keys()
            .into_iter()
            .map(|key| {
                let slot = self.slot(&key).expect("key from layout");
                let (top, bottom, baseline) = bands[slot.band];
                let start_x = x0 + T::lit(slot.start_seconds) * pps;
                let end_x = start_x + T::lit(slot.duration_seconds) * pps;
                LeadRegion {
                    key,
                    band: slot.band,
                    band_top: top,
                    band_bottom: bottom,
                    baseline_row: baseline,
                    col_first: round_col(start_x),
                    col_end: round_col(end_x),
                    start_x,
                    start_seconds: T::lit(slot.start_seconds),
                    duration_seconds: T::lit(slot.duration_seconds),
                }
            })
            .collect();
        PlacedLayout {
            bands,
            regions,
            origin,
            pitch: p,
            time_zero_x: x0,
        }
    }
}

fn round_col<T: Real>(x: T) -> isize {
    x.round().to_isize().unwrap_or(0)
}

/// A lead's pixel region on a placed page.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadRegion<T> {
    pub key: LeadKey,
    pub band: usize,
    pub band_top: T,
    pub band_bottom: T,
    pub baseline_row: T,
    /// Pixel columns `col_first..col_end` belong to the lead.
    pub col_first: isize,
    pub col_end: isize,
    /// Exact column of the slot's start time.
    pub start_x: T,
    pub start_seconds: T,
    pub duration_seconds: T,
}

impl<T: Real> LeadRegion<T> {
    pub fn contains_col(&self, x: usize) -> bool {
        let x = x as isize;
        x >= self.col_first && x < self.col_end
    }
}

/// A layout resolved to pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedLayout<T> {
    /// (top, bottom, baseline) per band.
    bands: Vec<(T, T, T)>,
    regions: Vec<LeadRegion<T>>,
    pub origin: (T, T),
    pub pitch: T,
    /// Column of time zero.
    pub time_zero_x: T,
}

impl<T: Real> PlacedLayout<T> {
    pub fn regions(&self) -> &[LeadRegion<T>] {
        &self.regions
    }

    pub fn region(&self, key: &LeadKey) -> Option<&LeadRegion<T>> {
        self.regions.iter().find(|r| r.key == *key)
    }

    /// Band of a pixel row: the band with the nearest baseline, ties to the
    /// upper band; `None` outside the band stack.
    pub fn band_for_row(&self, y: usize) -> Option<usize> {
        let yf = T::from_usize_lossy(y);
        let (top, bottom) = (self.bands.first()?.0, self.bands.last()?.1);
        if yf < top.floor() || yf > bottom.ceil() {
            return None;
        }
        let mut best: Option<(usize, T)> = None;
        for (i, &(_, _, base)) in self.bands.iter().enumerate() {
            let d = (yf - base).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|b| b.0)
    }

    /// Lead region owning pixel `(x, y)`.
    pub fn lead_at(&self, x: usize, y: usize) -> Option<&LeadRegion<T>> {
        let band = self.band_for_row(y)?;
        self.regions
            .iter()
            .find(|r| r.band == band && r.contains_col(x))
    }

    pub fn band_rows(&self, band: usize) -> (T, T) {
        let b = self.bands[band];
        (b.0, b.1)
    }
}
