use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ecgdigit::harness::{
    cmd_deskew, cmd_digitise, cmd_render, cmd_score, defaults_document, expand_inputs, HarnessError,
    PipelineConfig,
};
use ecgdigit::segmentation::SegmentationMode;

/// Digitise ECG printout images and score the results.
#[derive(Parser)]
#[command(name = "ecgdigit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Turn images into record files plus report.json.
    Digitise {
        #[command(flatten)]
        common: Common,
        /// Mask bundle directory per image; `{id}` is the image stem.
        /// Switches segmentation to external masks.
        #[arg(long)]
        masks: Option<String>,
        /// Image paths or glob patterns.
        images: Vec<String>,
    },
    /// Score predicted records against ground truth into scores.json.
    Score {
        #[command(flatten)]
        common: Common,
        /// `record_id,fold` CSV; enables per-fold means.
        #[arg(long)]
        folds: Option<PathBuf>,
        truth: PathBuf,
        pred: PathBuf,
    },
    /// Write a synthetic suite: images, truth records and masks.
    Render {
        #[command(flatten)]
        common: Common,
        /// Suite seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of pages, overriding the config.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Estimate and undo page rotation.
    Deskew {
        #[command(flatten)]
        common: Common,
        images: Vec<String>,
    },
    /// Print or check pipeline configs.
    Config {
        /// Print the default config with every key documented.
        #[arg(long)]
        print_defaults: bool,
        /// Validate this config file.
        #[arg(long)]
        check: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

fn out_dir(common: &Common, cfg: &PipelineConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.io.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

fn jobs(common: &Common, cfg: &PipelineConfig) -> usize {
    common.jobs.unwrap_or(cfg.io.jobs)
}

fn inputs(images: &[String], cfg: &PipelineConfig) -> Result<Vec<PathBuf>, HarnessError> {
    if images.is_empty() {
        expand_inputs(&cfg.io.inputs)
    } else {
        expand_inputs(images)
    }
}

/// Runs a command; `Ok` carries the exit code for a finished batch.
fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Digitise { common, masks, images } => {
            let mut cfg = load_config(common.config.as_deref())?;
            if let Some(m) = masks {
                cfg.segmentation.mode = SegmentationMode::ExternalMasks;
                cfg.segmentation.mask_dir_pattern = Some(m);
                cfg = cfg.validated()?;
            }
            let out = out_dir(&common, &cfg);
            let report = cmd_digitise(&inputs(&images, &cfg)?, &cfg, &out, jobs(&common, &cfg))?;
            for r in &report.results {
                let issues = r.trace.as_ref().map_or(0, |t| t.issues.len());
                match &r.error {
                    Some(e) => println!("{}: failed: {e}", r.id),
                    None => println!("{}: {:?}, {issues} issue(s), {} warning(s)", r.id, r.status, r.warnings.len()),
                }
            }
            println!(
                "{} image(s): {} ok, {} degraded, {} failed",
                report.images, report.ok, report.degraded, report.failed
            );
            Ok(report.outcome.exit_code() as u8)
        }
        Command::Score { common, folds, truth, pred } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = out_dir(&common, &cfg);
            let report = cmd_score(&truth, &pred, folds.as_deref(), &cfg.scoring, &out, jobs(&common, &cfg))?;
            if !report.missing_predictions.is_empty() {
                eprintln!(
                    "scored as zeros, no prediction found: {}",
                    report.missing_predictions.join(", ")
                );
            }
            println!("{}", report.overall_mean_snr_db);
            Ok(report.outcome.exit_code() as u8)
        }
        Command::Render { common, seed, samples } => {
            let mut cfg = load_config(common.config.as_deref())?;
            if let Some(s) = seed {
                cfg.render.seed = s;
            }
            if let Some(n) = samples {
                cfg.render.samples = n;
            }
            let cfg = cfg.validated()?;
            let out = out_dir(&common, &cfg);
            let manifest = cmd_render(&cfg, &out, jobs(&common, &cfg))?;
            println!("{} sample(s) written to {}", manifest.samples, out.display());
            Ok(0)
        }
        Command::Deskew { common, images } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = out_dir(&common, &cfg);
            let report = cmd_deskew(&inputs(&images, &cfg)?, &cfg, &out, jobs(&common, &cfg))?;
            for r in &report.results {
                println!("{}", r.summary());
            }
            Ok(report.outcome.exit_code() as u8)
        }
        Command::Config { print_defaults, check } => {
            if print_defaults {
                print!("{}", defaults_document());
            }
            if let Some(p) = &check {
                PipelineConfig::load(p).with_context(|| format!("checking {}", p.display()))?;
                println!("{}: ok", p.display());
            }
            if !print_defaults && check.is_none() {
                bail!("config needs --print-defaults or --check <path>");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
