use serde::Serialize;

use crate::grid::{make_calibration, GridCalibration};
use crate::raster::RasterImage;
use crate::record::DigitisedRecord;
use crate::rotation::{estimate_rotation, rotate_image, RotationEstimate};
use crate::scalar::Real;
use crate::segmentation::{
    ingest_masks, segment_by_threshold_partial, LeadLayout, LeadMask, PlacedLayout, SegmentationMode,
};
use crate::vectorise::{assemble_record_partial, traces_from_masks};

use super::config::PipelineConfig;

/// Rows and columns darker than this count as page content.
const CONTENT_LUMINANCE: f64 = 0.98;
/// Share of a row or column that must be content for it to bound the page.
const CONTENT_FRACTION: f64 = 0.01;

/// A problem met while digitising one image. Processing went on without it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub stage: &'static str,
    pub kind: String,
    pub message: String,
}

impl Issue {
    fn new(stage: &'static str, kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            stage,
            kind: kind.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PitchSource {
    Estimated,
    Override,
    /// The grid was not found; the page is assumed to fill its content box.
    PageFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationSummary {
    pub angle_degrees: f64,
    pub supporting_lines: usize,
    pub mean_residual_degrees: f64,
    pub applied: bool,
}

impl RotationSummary {
    pub fn from_estimate<T: Real>(e: &RotationEstimate<T>, applied: bool) -> Self {
        Self {
            angle_degrees: e.angle_degrees.as_f64(),
            supporting_lines: e.supporting_lines,
            mean_residual_degrees: e.mean_residual_degrees.as_f64(),
            applied,
        }
    }
}

/// What happened to one image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineTrace {
    pub rotation: Option<RotationSummary>,
    pub pitch_px_per_mm: f64,
    pub pitch_source: PitchSource,
    pub page_origin_px: (f64, f64),
    pub missing_leads: Vec<String>,
    pub issues: Vec<Issue>,
}

/// Variant name of an error, for reports.
pub(crate) fn kind_of(e: &impl std::fmt::Debug) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("").to_string()
}

/// Bounding box of page content as (x0, y0, x1, y1), inclusive.
pub fn content_box<T: Real>(img: &RasterImage<T>) -> Option<(usize, usize, usize, usize)> {
    let (w, h) = (img.width(), img.height());
    let limit = T::lit(CONTENT_LUMINANCE);
    let mut rows = vec![0usize; h];
    let mut cols = vec![0usize; w];
    for y in 0..h {
        for (x, &v) in img.row(y).iter().enumerate() {
            if v < limit {
                rows[y] += 1;
                cols[x] += 1;
            }
        }
    }
    let span = |counts: &[usize], len: usize| {
        let need = ((CONTENT_FRACTION * len as f64).ceil() as usize).max(1);
        let first = counts.iter().position(|&c| c >= need)?;
        let last = counts.iter().rposition(|&c| c >= need)?;
        Some((first, last))
    };
    let (x0, x1) = span(&cols, h)?;
    let (y0, y1) = span(&rows, w)?;
    Some((x0, y0, x1, y1))
}

/// Places `layout` so the page is centred on the content box, or on the
/// image when there is no content.
fn place_centred<T: Real>(
    img: &RasterImage<T>,
    layout: &LeadLayout,
    cal: &GridCalibration<T>,
    mm_per_second: f64,
) -> PlacedLayout<T> {
    let (x0, y0, x1, y1) =
        content_box(img).unwrap_or((0, 0, img.width().saturating_sub(1), img.height().saturating_sub(1)));
    let half = T::lit(0.5);
    let cx = T::from_usize_lossy(x0 + x1) * half;
    let cy = T::from_usize_lossy(y0 + y1) * half;
    let p = cal.pitch_px_per_mm;
    let page_w = T::lit(layout.page_width_mm(mm_per_second)) * p;
    let page_h = T::lit(layout.page_height_mm()) * p;
    layout.place(cal, (cx - page_w * half, cy - page_h * half))
}

/// Runs rotation, calibration, segmentation and vectorisation on one image.
///
/// `masks_dir` is required in external-mask mode. Failures of individual
/// stages degrade the result and are listed in the trace; the record always
/// has every lead of the layout, zero-filled where nothing was found.
pub fn digitise_image<T: Real>(
    img: &RasterImage<T>,
    cfg: &PipelineConfig,
    masks_dir: Option<&std::path::Path>,
) -> (DigitisedRecord<T>, PipelineTrace) {
    let layout = LeadLayout::by_name(&cfg.vectorise.layout).expect("validated layout");
    let external = cfg.segmentation.mode == SegmentationMode::ExternalMasks;
    let mut issues = Vec::new();

    // External masks are drawn on the image as given, so it is not rotated.
    let estimate = estimate_rotation(img, &cfg.rotation);
    let (page, rotation) = match estimate {
        Ok(e) if !external && e.angle_degrees != T::zero() => match rotate_image(img, e.angle_degrees) {
            Ok(r) => (r, Some(RotationSummary::from_estimate(&e, true))),
            Err(err) => {
                issues.push(Issue::new("rotation", kind_of(&err), err.to_string()));
                (img.clone(), Some(RotationSummary::from_estimate(&e, false)))
            }
        },
        Ok(e) => (img.clone(), Some(RotationSummary::from_estimate(&e, false))),
        Err(err) => {
            issues.push(Issue::new("rotation", kind_of(&err), format!("{err}; continuing unrotated")));
            (img.clone(), None)
        }
    };

    let g = &cfg.grid;
    let (cal, pitch_source) = match g.pitch_override_px {
        Some(_) => (g.calibrate(&page).expect("validated override"), PitchSource::Override),
        None => match g.calibrate(&page) {
            Ok(c) => (c, PitchSource::Estimated),
            Err(err) => {
                issues.push(Issue::new("grid", kind_of(&err), format!("{err}; page fitted to content")));
                let width = content_box(&page).map(|(x0, _, x1, _)| x1 - x0).unwrap_or(page.width());
                let p = (width.max(1) as f64 / layout.page_width_mm(g.mm_per_second)).max(f64::EPSILON);
                let cal = make_calibration(T::lit(p), T::lit(g.mm_per_mv), T::lit(g.mm_per_second))
                    .expect("positive calibration");
                (cal, PitchSource::PageFit)
            }
        },
    };
    let placed = place_centred(&page, &layout, &cal, g.mm_per_second);

    let masks: Vec<LeadMask> = if external {
        let ingested = match masks_dir {
            Some(dir) => ingest_masks(dir, &layout, &placed, page.width(), page.height()),
            None => Err(crate::segmentation::SegmentationError::Bundle("no mask directory given".into())),
        };
        match ingested {
            Ok((m, clipped)) => {
                if clipped > 0 {
                    issues.push(Issue::new(
                        "segmentation",
                        "Clipped",
                        format!("{clipped} mask pixel(s) outside their lead region dropped"),
                    ));
                }
                m
            }
            Err(err) => {
                issues.push(Issue::new("segmentation", kind_of(&err), err.to_string()));
                Vec::new()
            }
        }
    } else {
        let (m, empty) = segment_by_threshold_partial(&page, &placed, &cfg.segmentation.threshold);
        if !empty.is_empty() {
            let err = crate::segmentation::SegmentationError::EmptySegmentation {
                leads: empty.iter().map(|k| k.to_string()).collect(),
            };
            issues.push(Issue::new("segmentation", kind_of(&err), err.to_string()));
        }
        m
    };

    let (traces, failed) = traces_from_masks::<T>(&masks);
    for (lead, err) in failed {
        issues.push(Issue::new("vectorise", kind_of(&err), format!("lead {lead}: {err}")));
    }
    let (record, missing) = assemble_record_partial(&traces, &layout, &placed, &cal, &cfg.vectorise);
    let trace = PipelineTrace {
        rotation,
        pitch_px_per_mm: cal.pitch_px_per_mm.as_f64(),
        pitch_source,
        page_origin_px: (placed.origin.0.as_f64(), placed.origin.1.as_f64()),
        missing_leads: missing,
        issues,
    };
    (record, trace)
}
