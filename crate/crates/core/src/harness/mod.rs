//! Batch commands behind the command-line tool: digitise, score, render
//! and deskew, plus the pipeline config and fold files they read.
//!
//! Every command writes its outputs atomically and assembles its report in
//! input order, so reruns with the same inputs give identical trees.

mod config;
mod folds;
mod pipeline;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::raster::{encode_png, load_image, RasterError};
use crate::record::{read_record, write_atomic, write_record, DigitisedRecord, RecordError, SIGNAL_SUFFIX};
use crate::rotation::{estimate_rotation, rotate_image};
use crate::scalar::Real;
use crate::scoring::{aggregate_folds, score_record, FoldSummary, ScoringConfig, Snr, SnrReport};
use crate::segmentation::{write_mask_bundle, SegmentationError};
use crate::synth::{generate_sample, SynthError};

pub use config::{defaults_document, ConfigError, IoConfig, PipelineConfig, Precision, RenderSuiteConfig};
pub use folds::{FoldAssignment, FoldError, MAX_FOLD, MIN_FOLD};
pub use pipeline::{content_box, digitise_image, Issue, PipelineTrace, PitchSource, RotationSummary};

pub const DIGITISE_REPORT: &str = "report.json";
pub const SCORES_FILE: &str = "scores.json";
pub const RENDER_MANIFEST: &str = "manifest.json";
pub const DESKEW_REPORT: &str = "deskew.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no input images match {0:?}")]
    NoInputs(Vec<String>),
    #[error("bad input pattern {pattern:?}: {reason}")]
    BadPattern { pattern: String, reason: String },
    #[error("inputs {first} and {second} share the record id {id}")]
    DuplicateId { id: String, first: PathBuf, second: PathBuf },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no record ids common to {truth} and {pred}")]
    NoMatchingRecords { truth: PathBuf, pred: PathBuf },
    #[error(transparent)]
    Folds(#[from] FoldError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Process exit status of a batch command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Every item processed cleanly.
    Clean,
    /// The batch finished but some items degraded or failed.
    Warnings,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Clean => 0,
            Outcome::Warnings => 2,
        }
    }

    fn from_clean(clean: bool) -> Self {
        if clean {
            Outcome::Clean
        } else {
            Outcome::Warnings
        }
    }
}

/// Runs `f` on a pool of `jobs` threads; 0 means one per core.
pub fn with_pool<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Expands paths and glob patterns into a sorted, de-duplicated list per
/// pattern, keeping pattern order. Literal paths are kept even if missing
/// so the batch can report them.
pub fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out: Vec<PathBuf> = Vec::new();
    for p in patterns {
        let is_glob = p.contains(['*', '?', '[']);
        if !is_glob {
            out.push(PathBuf::from(p));
            continue;
        }
        let mut hits: Vec<PathBuf> = glob::glob(p)
            .map_err(|e| HarnessError::BadPattern {
                pattern: p.clone(),
                reason: e.to_string(),
            })?
            .filter_map(Result::ok)
            .filter(|p| p.is_file())
            .collect();
        hits.sort();
        out.extend(hits);
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|p| seen.insert(p.clone()));
    if out.is_empty() {
        return Err(HarnessError::NoInputs(patterns.to_vec()));
    }
    Ok(out)
}

/// Record id of an image: its file name without the extension.
pub fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn ids_for(inputs: &[PathBuf]) -> Result<Vec<String>, HarnessError> {
    let mut seen: BTreeMap<String, &PathBuf> = BTreeMap::new();
    let mut ids = Vec::with_capacity(inputs.len());
    for p in inputs {
        let id = image_id(p);
        if let Some(first) = seen.insert(id.clone(), p) {
            return Err(HarnessError::DuplicateId {
                id,
                first: first.clone(),
                second: p.clone(),
            });
        }
        ids.push(id);
    }
    Ok(ids)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageStatus {
    Ok,
    Degraded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageReport {
    pub id: String,
    pub input: String,
    pub status: ImageStatus,
    /// Signal file written for this image, relative to the output directory.
    pub output: Option<String>,
    #[serde(flatten)]
    pub trace: Option<PipelineTrace>,
    /// Warnings stored in the record itself.
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DigitiseReport {
    pub images: usize,
    pub ok: usize,
    pub degraded: usize,
    pub failed: usize,
    pub outcome: Outcome,
    pub results: Vec<ImageReport>,
}

fn digitise_one<T: Real>(input: &Path, id: &str, cfg: &PipelineConfig, out: &Path) -> ImageReport {
    let mut report = ImageReport {
        id: id.to_string(),
        input: input.display().to_string(),
        status: ImageStatus::Failed,
        output: None,
        trace: None,
        warnings: Vec::new(),
        error: None,
    };
    let img = match load_image::<T>(input) {
        Ok(i) => i,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    let masks = cfg.segmentation.mask_dir_for(id);
    let (record, trace) = digitise_image(&img, cfg, masks.as_deref());
    if let Err(e) = write_record(&record, out, id) {
        report.error = Some(e.to_string());
        report.trace = Some(trace);
        return report;
    }
    report.status = if trace.issues.is_empty() && record.warnings.is_empty() {
        ImageStatus::Ok
    } else {
        ImageStatus::Degraded
    };
    report.output = Some(format!("{id}{SIGNAL_SUFFIX}"));
    report.warnings = record.warnings;
    report.trace = Some(trace);
    report
}

/// Digitises every input into `out` and writes `report.json` there.
pub fn cmd_digitise(
    inputs: &[PathBuf],
    cfg: &PipelineConfig,
    out: &Path,
    jobs: usize,
) -> Result<DigitiseReport, HarnessError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(ConfigError::Invalid(errs).into());
    }
    let ids = ids_for(inputs)?;
    create_dir(out)?;
    let results: Vec<ImageReport> = with_pool(jobs, || {
        inputs
            .par_iter()
            .zip(&ids)
            .map(|(p, id)| {
                let r = match cfg.precision {
                    Precision::F32 => digitise_one::<f32>(p, id, cfg, out),
                    Precision::F64 => digitise_one::<f64>(p, id, cfg, out),
                };
                log::info!("{id}: {:?}", r.status);
                r
            })
            .collect()
    })?;
    let count = |s: ImageStatus| results.iter().filter(|r| r.status == s).count();
    let report = DigitiseReport {
        images: results.len(),
        ok: count(ImageStatus::Ok),
        degraded: count(ImageStatus::Degraded),
        failed: count(ImageStatus::Failed),
        outcome: Outcome::from_clean(count(ImageStatus::Ok) == results.len()),
        results,
    };
    write_json(&out.join(DIGITISE_REPORT), &report)?;
    Ok(report)
}

/// Record ids under `dir`, searched recursively, mapped to their directory.
pub fn find_records(dir: &Path) -> Result<BTreeMap<String, PathBuf>, HarnessError> {
    if !dir.is_dir() {
        return Err(HarnessError::Io {
            path: dir.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let mut out = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| HarnessError::Io {
            path: dir.to_owned(),
            source: e.into(),
        })?;
        let name = entry.file_name().to_string_lossy();
        let Some(id) = name.strip_suffix(SIGNAL_SUFFIX) else {
            continue;
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let parent = entry.path().parent().unwrap_or(dir).to_owned();
        if let Some(prev) = out.insert(id.to_string(), parent.clone()) {
            return Err(HarnessError::DuplicateId {
                id: id.to_string(),
                first: prev.join(&*name),
                second: parent.join(&*name),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordScore {
    pub id: String,
    pub fold: Option<u32>,
    /// No prediction was found; the record was scored against all zeros.
    pub prediction_missing: bool,
    #[serde(flatten)]
    pub report: Option<SnrReport<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub records: Vec<RecordScore>,
    pub missing_predictions: Vec<String>,
    pub unmatched_predictions: Vec<String>,
    pub per_fold: Option<FoldSummary<f64>>,
    pub overall_mean_snr_db: Snr<f64>,
    pub outcome: Outcome,
}

/// Scores every truth record against the prediction of the same id and
/// writes `scores.json` into `out`. Truth records without a prediction are
/// scored against zeros and listed.
pub fn cmd_score(
    truth_dir: &Path,
    pred_dir: &Path,
    folds: Option<&Path>,
    cfg: &ScoringConfig,
    out: &Path,
    jobs: usize,
) -> Result<ScoreReport, HarnessError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(ConfigError::Invalid(errs).into());
    }
    let truth = find_records(truth_dir)?;
    let pred = find_records(pred_dir)?;
    if !truth.keys().any(|id| pred.contains_key(id)) {
        return Err(HarnessError::NoMatchingRecords {
            truth: truth_dir.to_owned(),
            pred: pred_dir.to_owned(),
        });
    }
    let assignment = folds.map(FoldAssignment::load).transpose()?;
    let fold_of = |id: &str| -> Result<Option<u32>, HarnessError> {
        Ok(match &assignment {
            Some(a) => Some(a.fold_of(id)?),
            None => None,
        })
    };
    let ids: Vec<(&String, &PathBuf, Option<u32>)> = truth
        .iter()
        .map(|(id, dir)| Ok((id, dir, fold_of(id)?)))
        .collect::<Result<_, HarnessError>>()?;

    let scored: Vec<RecordScore> = with_pool(jobs, || {
        ids.par_iter()
            .map(|&(id, dir, fold)| -> Result<RecordScore, HarnessError> {
                let t: DigitisedRecord<f64> = read_record(dir, id)?;
                let missing = !pred.contains_key(id);
                let p = match pred.get(id) {
                    Some(pdir) => read_record(pdir, id)?,
                    None => t.zeros_like(),
                };
                let (report, error) = match score_record(&t, &p, cfg) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                Ok(RecordScore {
                    id: id.clone(),
                    fold,
                    prediction_missing: missing,
                    report,
                    error,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })??;

    let good: Vec<(u32, &SnrReport<f64>)> = scored
        .iter()
        .filter_map(|r| r.report.as_ref().map(|rep| (r.fold.unwrap_or(0), rep)))
        .collect();
    let (per_fold, overall) = match aggregate_folds(&good) {
        Ok(summary) if assignment.is_some() => {
            let overall = summary.overall_mean_snr_db;
            (Some(summary), overall)
        }
        // without folds every record sits in one pool
        Ok(summary) => (None, summary.overall_mean_snr_db),
        Err(_) => (None, Snr::Finite(0.0)),
    };
    let missing_predictions: Vec<String> =
        scored.iter().filter(|r| r.prediction_missing).map(|r| r.id.clone()).collect();
    let clean = missing_predictions.is_empty() && scored.iter().all(|r| r.error.is_none());
    let report = ScoreReport {
        unmatched_predictions: pred.keys().filter(|id| !truth.contains_key(*id)).cloned().collect(),
        missing_predictions,
        records: scored,
        per_fold,
        overall_mean_snr_db: overall,
        outcome: Outcome::from_clean(clean),
    };
    create_dir(out)?;
    write_json(&out.join(SCORES_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderEntry {
    pub id: String,
    pub image: String,
    pub truth_signal: String,
    pub masks: String,
    pub config: crate::synth::RenderConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderManifest {
    pub samples: usize,
    pub seed: u64,
    pub ranges: crate::synth::SuiteRanges,
    pub entries: Vec<RenderEntry>,
}

/// Directory name of suite sample `index`.
pub fn sample_id(index: usize) -> String {
    format!("sample_{index:04}")
}

fn render_one<T: Real>(index: usize, suite: &RenderSuiteConfig, out: &Path) -> Result<RenderEntry, HarnessError> {
    let id = sample_id(index);
    let sample = generate_sample::<T>(index, suite.seed, &suite.ranges)?;
    // build the sample in a scratch directory, then move it into place whole
    let tmp = out.join(format!(".{id}.tmp"));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
    }
    create_dir(&tmp)?;
    let png = encode_png(&sample.image)?;
    let image_path = tmp.join(format!("{id}.png"));
    std::fs::write(&image_path, png).map_err(io_err(&image_path))?;
    write_record(&sample.truth_record, &tmp, &id)?;
    write_mask_bundle(&tmp.join("masks"), &sample.truth_masks)?;
    write_json(&tmp.join("render.json"), &sample.config)?;
    let dest = out.join(&id);
    if dest.exists() {
        std::fs::remove_dir_all(&dest).map_err(io_err(&dest))?;
    }
    std::fs::rename(&tmp, &dest).map_err(io_err(&dest))?;
    Ok(RenderEntry {
        image: format!("{id}/{id}.png"),
        truth_signal: format!("{id}/{id}{SIGNAL_SUFFIX}"),
        masks: format!("{id}/masks"),
        config: sample.config,
        id,
    })
}

/// Writes the configured synthetic suite, one directory per sample, plus a
/// manifest.
pub fn cmd_render(cfg: &PipelineConfig, out: &Path, jobs: usize) -> Result<RenderManifest, HarnessError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(ConfigError::Invalid(errs).into());
    }
    create_dir(out)?;
    let suite = &cfg.render;
    let entries = with_pool(jobs, || {
        (0..suite.samples)
            .into_par_iter()
            .map(|i| match cfg.precision {
                Precision::F32 => render_one::<f32>(i, suite, out),
                Precision::F64 => render_one::<f64>(i, suite, out),
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    let manifest = RenderManifest {
        samples: entries.len(),
        seed: suite.seed,
        ranges: suite.ranges.clone(),
        entries,
    };
    write_json(&out.join(RENDER_MANIFEST), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeskewStatus {
    Rotated,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeskewRow {
    pub id: String,
    pub input: String,
    pub status: DeskewStatus,
    pub angle_degrees: Option<f64>,
    pub supporting_lines: Option<usize>,
    pub mean_residual_degrees: Option<f64>,
    pub output: Option<String>,
    pub reason: Option<String>,
}

impl DeskewRow {
    /// One line for the terminal.
    pub fn summary(&self) -> String {
        match (self.status, self.angle_degrees) {
            (DeskewStatus::Rotated, Some(a)) => format!(
                "{}: rotated {a:+.3} deg ({} lines, residual {:.3} deg)",
                self.id,
                self.supporting_lines.unwrap_or(0),
                self.mean_residual_degrees.unwrap_or(0.0)
            ),
            _ => format!(
                "{}: {}: {}",
                self.id,
                if self.status == DeskewStatus::Skipped { "skipped" } else { "failed" },
                self.reason.as_deref().unwrap_or("")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeskewReport {
    pub outcome: Outcome,
    pub results: Vec<DeskewRow>,
}

fn deskew_one<T: Real>(input: &Path, id: &str, cfg: &PipelineConfig, out: &Path) -> DeskewRow {
    let mut row = DeskewRow {
        id: id.to_string(),
        input: input.display().to_string(),
        status: DeskewStatus::Failed,
        angle_degrees: None,
        supporting_lines: None,
        mean_residual_degrees: None,
        output: None,
        reason: None,
    };
    let img = match load_image::<T>(input) {
        Ok(i) => i,
        Err(e) => {
            row.reason = Some(e.to_string());
            return row;
        }
    };
    let est = match estimate_rotation(&img, &cfg.rotation) {
        Ok(e) => e,
        Err(e) => {
            if e.is_soft_failure() {
                row.status = DeskewStatus::Skipped;
            }
            row.reason = Some(format!("{}: {e}", pipeline::kind_of(&e)));
            return row;
        }
    };
    row.angle_degrees = Some(est.angle_degrees.as_f64());
    row.supporting_lines = Some(est.supporting_lines);
    row.mean_residual_degrees = Some(est.mean_residual_degrees.as_f64());
    let written = rotate_image(&img, est.angle_degrees)
        .map_err(|e| e.to_string())
        .and_then(|r| encode_png(&r).map_err(|e| e.to_string()))
        .and_then(|png| {
            let p = out.join(format!("{id}.png"));
            write_atomic(&p, &png).map_err(|e| e.to_string())
        });
    match written {
        Ok(()) => {
            row.status = DeskewStatus::Rotated;
            row.output = Some(format!("{id}.png"));
        }
        Err(e) => row.reason = Some(e),
    }
    row
}

/// Estimates and undoes the rotation of every input, writing the corrected
/// images and `deskew.json` into `out`.
pub fn cmd_deskew(
    inputs: &[PathBuf],
    cfg: &PipelineConfig,
    out: &Path,
    jobs: usize,
) -> Result<DeskewReport, HarnessError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(ConfigError::Invalid(errs).into());
    }
    let ids = ids_for(inputs)?;
    create_dir(out)?;
    let results: Vec<DeskewRow> = with_pool(jobs, || {
        inputs
            .par_iter()
            .zip(&ids)
            .map(|(p, id)| match cfg.precision {
                Precision::F32 => deskew_one::<f32>(p, id, cfg, out),
                Precision::F64 => deskew_one::<f64>(p, id, cfg, out),
            })
            .collect()
    })?;
    let report = DeskewReport {
        outcome: Outcome::from_clean(results.iter().all(|r| r.status == DeskewStatus::Rotated)),
        results,
    };
    write_json(&out.join(DESKEW_REPORT), &report)?;
    Ok(report)
}
