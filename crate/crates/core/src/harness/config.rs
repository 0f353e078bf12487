use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::grid::GridConfig;
use crate::rotation::RotationConfig;
use crate::scoring::ScoringConfig;
use crate::segmentation::{SegmentationConfig, SegmentationMode};
use crate::synth::SuiteRanges;
use crate::vectorise::VectoriseConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    /// Image paths or glob patterns, used when none are given on the command line.
    pub inputs: Vec<String>,
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSuiteConfig {
    pub samples: usize,
    pub seed: u64,
    pub ranges: SuiteRanges,
}

impl Default for RenderSuiteConfig {
    fn default() -> Self {
        Self {
            samples: 4,
            seed: 0,
            ranges: SuiteRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub precision: Precision,
    pub rotation: RotationConfig,
    pub grid: GridConfig,
    pub segmentation: SegmentationConfig,
    pub vectorise: VectoriseConfig,
    pub scoring: ScoringConfig,
    pub render: RenderSuiteConfig,
    pub io: IoConfig,
}

impl PipelineConfig {
    /// Reads a config file. Lines whose first non-blank characters are `//`
    /// are comments, so the output of [`defaults_document`] loads as is.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let cfg = Self::parse(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        cfg.validated()
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        let stripped: String = text
            .lines()
            .map(|l| if l.trim_start().starts_with("//") { "" } else { l })
            .collect::<Vec<_>>()
            .join("\n");
        serde_json::from_str(&stripped)
    }

    pub fn validated(self) -> Result<Self, ConfigError> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = self.rotation.validate();
        errs.extend(self.grid.validate());
        errs.extend(self.segmentation.validate());
        errs.extend(self.vectorise.validate());
        errs.extend(self.scoring.validate());
        errs.extend(
            self.render
                .ranges
                .validate()
                .into_iter()
                .map(|e| format!("render.ranges.{e}")),
        );
        if self.render.samples == 0 {
            errs.push("render.samples must be at least 1".into());
        }
        for p in &self.io.inputs {
            if let Err(e) = glob::Pattern::new(p) {
                errs.push(format!("io.inputs: bad pattern {p:?}: {e}"));
            }
        }
        if self.segmentation.mode == SegmentationMode::ExternalMasks {
            if let Some(pattern) = &self.segmentation.mask_dir_pattern {
                let fixed = pattern.split("{id}").next().unwrap_or("");
                let root = if pattern.contains("{id}") {
                    // the directory part before the first placeholder
                    Path::new(fixed).parent().map(Path::to_owned).unwrap_or_default()
                } else {
                    PathBuf::from(fixed)
                };
                let root = if root.as_os_str().is_empty() { PathBuf::from(".") } else { root };
                if !root.is_dir() {
                    errs.push(format!(
                        "segmentation.mask_dir_pattern: directory {} does not exist",
                        root.display()
                    ));
                }
            }
        }
        errs
    }
}

/// Documentation for each key, shown by `config --print-defaults`.
const KEY_DOCS: &[(&str, &str)] = &[
    ("precision", "Scalar type for all numeric work: \"f32\" or \"f64\"."),
    ("rotation", "Deskew: Hough line detection over the grid."),
    ("rotation.theta_step_deg", "Angular bin width of the Hough accumulator."),
    ("rotation.rho_step_px", "Distance bin width of the Hough accumulator."),
    ("rotation.min_votes", "Votes a peak needs; null means max(50, 0.5 * image width)."),
    ("rotation.angle_centre_deg", "Normal angle of the line family searched for; 90 is horizontal."),
    ("rotation.angle_half_range_deg", "Half-width of the searched angle window."),
    ("rotation.min_parallel", "Lines needed in the winning parallel cluster."),
    ("rotation.parallel_tol_deg", "Angular spread allowed inside a cluster."),
    ("rotation.max_correction_deg", "Larger estimated corrections are rejected."),
    ("rotation.binarise_threshold", "Luminance threshold for edge extraction; null means Otsu."),
    ("rotation.background_block_px", "Tile size for evening out illumination before thresholding; null disables."),
    ("grid", "Physical scale of the paper."),
    ("grid.mm_per_mV", "Vertical paper scale."),
    ("grid.mm_per_second", "Horizontal paper scale."),
    ("grid.pitch_override_px", "Pixels per millimetre; null estimates it from the grid."),
    ("segmentation", "How trace pixels are found."),
    ("segmentation.mode", "\"threshold\" or \"external_masks\"."),
    ("segmentation.mask_dir_pattern", "Mask bundle directory per image, {id} is the image stem. External mode only."),
    ("segmentation.threshold.dark_fraction", "Share of darkest pixels the trace threshold is chosen from."),
    ("segmentation.threshold.min_trace_neighbours", "Pixels on grid lines with fewer ink neighbours are dropped."),
    ("vectorise", "Mask to signal conversion."),
    ("vectorise.sampling_rate_hz", "Output sampling rate."),
    ("vectorise.layout", "Printed lead arrangement."),
    ("vectorise.gap_warning_fraction", "Warn when an interpolated gap exceeds this share of a segment."),
    ("vectorise.baseline_min_fraction", "Minimum share of columns in the modal row for it to be the baseline."),
    ("scoring", "SNR alignment search used by the score command."),
    ("scoring.max_shift_seconds", "Largest time shift tried."),
    ("scoring.max_offset_mv", "Largest vertical offset tried."),
    ("scoring.offset_grid_mv", "Offset search step."),
    ("render", "Synthetic suite written by the render command."),
    ("render.samples", "Number of pages."),
    ("render.seed", "Suite seed; page k uses seed + k."),
    ("render.ranges", "Each numeric entry is a number, {\"min\": a, \"max\": b}, or a list cycled by page index."),
    ("io", "Batch plumbing."),
    ("io.inputs", "Image paths or glob patterns used when none are given on the command line."),
    ("io.output_dir", "Output directory used when --out is not given."),
    ("io.jobs", "Worker threads; 0 uses every core."),
];

/// The default config as commented JSON.
pub fn defaults_document() -> String {
    let value = serde_json::to_value(PipelineConfig::default()).expect("config serialises");
    let mut out = String::new();
    write_value(&mut out, &value, "", 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, path: &str, depth: usize) {
    let pad = "  ".repeat(depth + 1);
    match v {
        Value::Object(map) if !map.is_empty() => {
            out.push_str("{\n");
            for (i, (k, child)) in map.iter().enumerate() {
                let key_path = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                if let Some((_, doc)) = KEY_DOCS.iter().find(|(p, _)| *p == key_path) {
                    out.push_str(&format!("{pad}// {doc}\n"));
                }
                out.push_str(&format!("{pad}{}: ", Value::String(k.clone())));
                write_value(out, child, &key_path, depth + 1);
                if i + 1 < map.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&"  ".repeat(depth));
            out.push('}');
        }
        other => out.push_str(&serde_json::to_string(other).expect("json value")),
    }
}
