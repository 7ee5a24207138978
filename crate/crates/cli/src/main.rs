//! `poks`: evaluate keypoint-guided polyline detections and build training targets.
//!
//! Exit codes: 0 on success, 1 when a file cannot be read or written, 2 when input data
//! or configuration is invalid (including a failed `selftest`).

mod commands;
mod config;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use poks::codec::{CenterSpec, ObbParamMode};
use poks::io::{ReportFormat, Source};

use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(
    name = "poks",
    version,
    about = "Evaluate keypoint-guided polyline detections and build training targets"
)]
struct Cli {
    /// JSON config file; command-line flags take precedence over its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Log more to stderr (repeat for more detail)
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads [default: all cores]; never changes any output
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score predictions against ground truth (POKS per subset, OKS, box mAP50)
    Evaluate(EvaluateArgs),
    /// Write per-image regression targets and center heatmaps
    Encode(EncodeArgs),
    /// Render center, keypoint (P) or segment (S) heatmaps
    Render(RenderArgs),
    /// Print dataset statistics as JSON
    Stats(StatsArgs),
    /// Split image ids into train/val/test lists
    Split(SplitArgs),
    /// Run built-in analytic checks
    Selftest,
    /// Convert a COCO-keypoint file to the annotation format
    ImportCoco(ImportCocoArgs),
    /// Write ground truth as a prediction file with score 1
    ToPredictions(ToPredictionsArgs),
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Annotation file
    #[arg(long)]
    gt: PathBuf,
    /// Prediction file
    #[arg(long)]
    pred: PathBuf,
    /// Report destination
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Sigma of the true keypoints (stem, basal, apex) [default: 0.05]
    #[arg(long)]
    sigma_true: Option<f64>,
    /// Sigma of the pseudo keypoints [default: 0.1]
    #[arg(long)]
    sigma_pseudo: Option<f64>,
    /// Use 11-point interpolated AP instead of all-point AP
    #[arg(long)]
    voc_11pt: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CenterArg {
    Basal,
    Stem,
    Apex,
    Obb,
}

impl From<CenterArg> for CenterSpec {
    fn from(c: CenterArg) -> Self {
        match c {
            CenterArg::Basal => CenterSpec::KBasal,
            CenterArg::Stem => CenterSpec::KStem,
            CenterArg::Apex => CenterSpec::KApex,
            CenterArg::Obb => CenterSpec::ObbCenter,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObbModeArg {
    Three,
    Five,
}

impl From<ObbModeArg> for ObbParamMode {
    fn from(m: ObbModeArg) -> Self {
        match m {
            ObbModeArg::Three => ObbParamMode::Three,
            ObbModeArg::Five => ObbParamMode::Five,
        }
    }
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    gt: PathBuf,
    /// Anchor of the targets [default: basal]
    #[arg(long, value_enum)]
    center: Option<CenterArg>,
    /// Output downscale ratio [default: 4]
    #[arg(long)]
    r: Option<u32>,
    /// Box parametrization [default: five]
    #[arg(long, value_enum)]
    obb_mode: Option<ObbModeArg>,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeatmapType {
    Center,
    P,
    S,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long = "type", value_enum)]
    kind: HeatmapType,
    /// Fixed Gaussian sigma in output cells [default: size-adaptive]
    #[arg(long)]
    sigma: Option<f64>,
    /// Output downscale ratio [default: 4]
    #[arg(long)]
    r: Option<u32>,
    /// Anchor for center heatmaps [default: basal]
    #[arg(long, value_enum)]
    center: Option<CenterArg>,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    gt: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    gt: PathBuf,
    /// Output directory for train.txt, val.txt and test.txt
    #[arg(long)]
    out: PathBuf,
    /// Train, val and test fractions
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.15, 0.15])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SourceArg {
    Inaturalist,
    Roborumex,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Inaturalist => Source::Inaturalist,
            SourceArg::Roborumex => Source::Roborumex,
        }
    }
}

#[derive(Debug, Args)]
struct ImportCocoArgs {
    /// COCO-keypoint JSON file
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Source recorded for images that do not name one
    #[arg(long, value_enum, default_value = "inaturalist")]
    source: SourceArg,
}

#[derive(Debug, Args)]
struct ToPredictionsArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// A failed command: message for stderr and process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<poks::Error> for Failure {
    fn from(e: poks::Error) -> Self {
        Failure {
            code: if e.is_io() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli, cfg: FileConfig) -> Result<(), Failure> {
    match cli.command {
        Command::Evaluate(a) => commands::evaluate(&a, &cfg),
        Command::Encode(a) => commands::encode(&a, &cfg),
        Command::Render(a) => commands::render(&a, &cfg),
        Command::Stats(a) => commands::stats(&a),
        Command::Split(a) => commands::split(&a),
        Command::Selftest => selftest::run(),
        Command::ImportCoco(a) => commands::import_coco(&a),
        Command::ToPredictions(a) => commands::to_predictions(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).init();

    let result = FileConfig::load(cli.config.as_deref())
        .map_err(Failure::from)
        .and_then(|cfg| {
            let workers = cli.workers.or(cfg.workers);
            if workers == Some(0) {
                return Err(Failure::invalid("--workers must be at least 1"));
            }
            log::debug!(
                "workers: {workers:?}, parallel build: {}",
                poks::par::is_parallel()
            );
            poks::par::with_workers(workers, || run(cli, cfg))
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
