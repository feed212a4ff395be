//! `gridfuse` subcommands: `fuse`, `eval` and `synth`.
//!
//! Settings resolve as flag > config file > default. Diagnostics go to
//! standard error; data goes to files, and `eval` prints the mAP to
//! standard output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use gridfuse_core::eval::{evaluate, ApRegistry, EvalParams, EvalReport};
use gridfuse_core::io::{self, CalibrationOptions, Config, DatasetLayout, ParseError};
use gridfuse_core::pipeline::{process_frame, FrameOutput};
use gridfuse_core::synth::{self, SceneSpec, SyntheticScene};
use gridfuse_core::{CameraCalibration, FrameData, DEFAULT_GROUND_HEIGHT};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "gridfuse", version, about = "Fuse detector boxes with occupancy-grid points")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project grid points, fuse them with detections and write fused objects.
    Fuse(FuseArgs),
    /// Score fused objects against KITTI-format labels.
    Eval(EvalArgs),
    /// Generate a synthetic fixture directory from a scene file.
    Synth(SynthArgs),
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// key = value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// KITTI calibration file
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Grid plane height in the lidar frame, meters
    #[arg(long, allow_negative_numbers = true)]
    pub ground_height: Option<f64>,
    #[arg(long)]
    pub image_width: Option<u32>,
    #[arg(long)]
    pub image_height: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fixture directory supplying default file names (and config.txt)
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Fused-object output file
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Run report (JSON) output file
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fused-object records
    #[arg(long)]
    pub predictions: PathBuf,
    /// KITTI label directory or single label file
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long)]
    pub cutoff_m: Option<f64>,
    /// AP interpolation scheme (all-point, 11-point)
    #[arg(long)]
    pub ap_method: Option<String>,
    /// Metrics report output file
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// PR-curve CSV output file
    #[arg(long)]
    pub pr_curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Scene description (TOML)
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

/// Settings after applying flag > config file > default.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub calib: Option<PathBuf>,
    pub ground_height: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub iou_threshold: f64,
    pub cutoff_m: f64,
    pub workers: usize,
    pub ap_method: String,
}

impl Settings {
    pub fn resolve(common: &CommonArgs, implicit_config: Option<&Path>) -> Result<Self, CliError> {
        let config_path = common.config.as_deref().or(implicit_config);
        let cfg = match config_path {
            Some(p) => {
                let text = io::read_text(p).map_err(|e| input_err(p, e))?;
                let mut cfg = io::parse_config(&text).map_err(|e| input_err(p, e))?;
                // relative calibration paths are relative to the config file
                if let (Some(c), Some(dir)) = (&cfg.calib, p.parent()) {
                    if c.is_relative() {
                        cfg.calib = Some(dir.join(c));
                    }
                }
                cfg
            }
            None => Config::default(),
        };
        let defaults = CalibrationOptions::default();
        Ok(Self {
            calib: common.calib.clone().or(cfg.calib),
            ground_height: common
                .ground_height
                .or(cfg.ground_height)
                .unwrap_or(DEFAULT_GROUND_HEIGHT),
            image_width: common
                .image_width
                .or(cfg.image_width)
                .unwrap_or(defaults.image_width),
            image_height: common
                .image_height
                .or(cfg.image_height)
                .unwrap_or(defaults.image_height),
            iou_threshold: cfg
                .iou_threshold
                .unwrap_or(gridfuse_core::eval::DEFAULT_IOU_THRESHOLD),
            cutoff_m: cfg.cutoff_m.unwrap_or(gridfuse_core::eval::DEFAULT_CUTOFF_M),
            workers: cfg.workers.unwrap_or_else(default_workers),
            ap_method: cfg
                .ap_method
                .unwrap_or_else(|| gridfuse_core::eval::ap::ALL_POINT.to_string()),
        })
    }

    fn calibration_options(&self) -> CalibrationOptions {
        CalibrationOptions {
            image_width: self.image_width,
            image_height: self.image_height,
            ground_height: self.ground_height,
        }
    }

    pub fn load_calibration(&self) -> Result<CameraCalibration, CliError> {
        let path = self
            .calib
            .as_deref()
            .ok_or_else(|| CliError::Input("no calibration file given (--calib)".into()))?;
        let text = io::read_text(path).map_err(|e| input_err(path, e))?;
        io::parse_calibration(&text, &self.calibration_options()).map_err(|e| input_err(path, e))
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LatencyStats {
    pub min_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: &[f64]) -> Self {
        if samples_ms.is_empty() {
            return Self::default();
        }
        let mut s = samples_ms.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        // nearest rank
        let p99 = s[((0.99 * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            min_ms: s[0],
            median_ms: median,
            p99_ms: p99,
            max_ms: s[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub frames_processed: usize,
    pub objects_emitted: usize,
    pub discarded_regions: usize,
    pub latency: LatencyStats,
}

/// Groups parsed records into frames ordered by id.
pub fn assemble_frames(
    detections: Vec<(i64, gridfuse_core::BoundingBox2D)>,
    points: Vec<(i64, gridfuse_core::GridPoint)>,
) -> Result<Vec<FrameData>, CliError> {
    let mut frames: BTreeMap<i64, (Vec<_>, Vec<_>)> = BTreeMap::new();
    for (f, d) in detections {
        frames.entry(f).or_default().0.push(d);
    }
    for (f, p) in points {
        frames.entry(f).or_default().1.push(p);
    }
    frames
        .into_iter()
        .map(|(f, (d, p))| FrameData::new(f, d, p).map_err(|e| CliError::Input(e.to_string())))
        .collect()
}

/// Runs the per-frame chain on a worker pool; results come back in frame
/// order along with each frame's latency in milliseconds.
pub fn run_frames(
    frames: &[FrameData],
    calib: &CameraCalibration,
    workers: usize,
) -> Result<Vec<(FrameOutput, f64)>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    pool.install(|| {
        frames
            .par_iter()
            .map(|f| {
                let start = Instant::now();
                let out = process_frame(f, calib)
                    .map_err(|e| CliError::Internal(format!("frame {}: {e}", f.frame_id())))?;
                Ok((out, start.elapsed().as_secs_f64() * 1e3))
            })
            .collect()
    })
}

fn read_parsed<T>(
    path: &Path,
    parse: impl FnOnce(&str) -> Result<T, ParseError>,
) -> Result<T, CliError> {
    let text = io::read_text(path).map_err(|e| input_err(path, e))?;
    parse(&text).map_err(|e| input_err(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| input_err(path, e))
}

/// Resolves a fixture layout from `--dataset` and explicit file flags.
pub fn fuse_layout(args: &FuseArgs, settings: &Settings) -> Result<DatasetLayout, CliError> {
    let base = args.dataset.as_deref().map(DatasetLayout::in_dir);
    let pick = |flag: &Option<PathBuf>, fallback: Option<PathBuf>, name: &str| {
        flag.clone()
            .or(fallback)
            .ok_or_else(|| CliError::Input(format!("missing --{name}")))
    };
    let layout = DatasetLayout {
        detections_path: pick(&args.detections, base.as_ref().map(|b| b.detections_path.clone()), "detections")?,
        grid_path: pick(&args.grid, base.as_ref().map(|b| b.grid_path.clone()), "grid")?,
        labels_path: base.as_ref().map_or_else(PathBuf::new, |b| b.labels_path.clone()),
        calib_path: pick(&settings.calib, base.as_ref().map(|b| b.calib_path.clone()), "calib")?,
        output_path: pick(&args.output, base.as_ref().map(|b| b.output_path.clone()), "output")?,
    };
    Ok(layout)
}

pub fn cmd_fuse(args: &FuseArgs) -> Result<RunReport, CliError> {
    let implicit = args
        .dataset
        .as_ref()
        .map(|d| d.join("config.txt"))
        .filter(|p| p.is_file());
    let mut settings = Settings::resolve(&args.common, implicit.as_deref())?;
    if let Some(w) = args.workers {
        settings.workers = w;
    }
    let layout = fuse_layout(args, &settings)?;
    settings.calib = Some(layout.calib_path.clone());
    let calib = settings.load_calibration()?;

    let detections = read_parsed(&layout.detections_path, io::parse_detections)?;
    let points = read_parsed(&layout.grid_path, io::parse_grid_points)?;
    let frames = assemble_frames(detections, points)?;

    let results = run_frames(&frames, &calib, settings.workers)?;
    let latencies: Vec<f64> = results.iter().map(|(_, ms)| *ms).collect();
    let objects: Vec<_> = results
        .iter()
        .flat_map(|(out, _)| out.objects.iter().cloned())
        .collect();
    write_file(&layout.output_path, &io::write_fused_objects(&objects))?;

    let report = RunReport {
        frames_processed: frames.len(),
        objects_emitted: objects.len(),
        discarded_regions: results.iter().map(|(o, _)| o.discarded_regions).sum(),
        latency: LatencyStats::from_samples(&latencies),
    };
    if let Some(path) = &args.report {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        write_file(path, &(json + "\n"))?;
    }
    eprintln!(
        "fused {} frames, {} objects, {} empty regions; latency ms min {:.3} median {:.3} p99 {:.3} max {:.3}",
        report.frames_processed,
        report.objects_emitted,
        report.discarded_regions,
        report.latency.min_ms,
        report.latency.median_ms,
        report.latency.p99_ms,
        report.latency.max_ms
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    /// Metrics report text as written to `--output`.
    pub metrics_text: String,
    /// The line printed to standard output.
    pub map_line: String,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalOutcome, CliError> {
    let mut settings = Settings::resolve(&args.common, None)?;
    if let Some(t) = args.iou_threshold {
        settings.iou_threshold = t;
    }
    if let Some(c) = args.cutoff_m {
        settings.cutoff_m = c;
    }
    if let Some(m) = &args.ap_method {
        settings.ap_method = m.clone();
    }

    let fused = read_parsed(&args.predictions, io::parse_fused_objects)?;
    let preds = io::predictions_from_fused(&fused);
    let gts = io::read_kitti_labels(&args.labels).map_err(|(p, e)| input_err(&p, e))?;

    let registry = ApRegistry::with_builtins();
    let method = registry
        .get(&settings.ap_method)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let params = EvalParams {
        iou_threshold: settings.iou_threshold,
        cutoff_m: settings.cutoff_m,
    };
    let report =
        evaluate(&preds, &gts, &params, method).map_err(|e| CliError::Input(e.to_string()))?;
    for m in &report.label_mismatches {
        eprintln!(
            "warning: frame {}: predicted class `{}` does not occur in the labels",
            m.frame_id, m.class_label
        );
    }

    let metrics_text = io::write_metrics_report(&report);
    match &args.output {
        Some(p) => write_file(p, &metrics_text)?,
        None => eprint!("{metrics_text}"),
    }
    if let Some(p) = &args.pr_curve {
        write_file(p, &io::write_pr_curves(&report))?;
    }
    let map_line = format!("{:.6}", report.map);
    Ok(EvalOutcome {
        report,
        metrics_text,
        map_line,
    })
}

pub fn cmd_synth(args: &SynthArgs) -> Result<SyntheticScene, CliError> {
    let settings = Settings::resolve(&args.common, None)?;
    let spec_text = io::read_text(&args.spec).map_err(|e| input_err(&args.spec, e))?;
    let spec = SceneSpec::from_toml(&spec_text).map_err(|e| input_err(&args.spec, e))?;
    let calib = match &settings.calib {
        Some(_) => settings.load_calibration()?,
        None => io::parse_calibration(synth::KITTI_SAMPLE_CALIB, &settings.calibration_options())
            .map_err(|e| CliError::Internal(e.to_string()))?,
    };
    let scene = synth::generate(&spec, &calib).map_err(|e| input_err(&args.spec, e))?;
    scene
        .write_to(&args.out, &calib)
        .map_err(|e| CliError::Input(e.to_string()))?;
    eprintln!(
        "wrote {} frames, {} labels, {} expected objects to {}",
        scene.frames.len(),
        scene.ground_truth.len(),
        scene.expected.len(),
        args.out.display()
    );
    Ok(scene)
}

/// Dispatches a parsed command line. Returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    let result = match &cli.command {
        Command::Fuse(a) => cmd_fuse(a).map(|_| ()),
        Command::Eval(a) => cmd_eval(a).map(|o| println!("{}", o.map_line)),
        Command::Synth(a) => cmd_synth(a).map(|_| ()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
