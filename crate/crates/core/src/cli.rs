//! Command-line entry points: `track`, `eval`, `synth`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_records, sequence_metrics, tre_harness, write_curve_csv, write_metrics_json, MetricsReport,
};
use crate::pipeline::Pipeline;
use crate::sequence_io::{
    format_groundtruth, load_groundtruth, load_sequence, read_trajectories, trajectory_records,
    write_frame_metrics_csv, write_outputs, GroundTruthBox, LoadOptions, OutputOptions, FRAME_METRICS_FILE,
};
use crate::synth::{generate, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const METRICS_FILE: &str = "metrics.json";
pub const PRECISION_FILE: &str = "precision.csv";
pub const SUCCESS_FILE: &str = "success.csv";
pub const TRE_FILE: &str = "tre.json";
pub const GROUNDTRUTH_FILE: &str = "groundtruth_rect.txt";
pub const FRAMES_DIR: &str = "img";

#[derive(Debug, Parser)]
#[command(name = "stblob", version, about = "Detect and track moving objects in image sequences from a moving camera")]
pub struct Cli {
    /// JSON pipeline configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    pub emit_config: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run detection and tracking over a directory of frames.
    Track(TrackArgs),
    /// Score a trajectory file against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic sequence with ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Frame directory, or a sequence directory containing `img/`.
    pub seq_dir: PathBuf,
    /// Ground truth, one `x,y,w,h` box per frame.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write frames with boxes and track ids drawn in.
    #[arg(long)]
    pub annotate: bool,
    /// With --gt, also run the multi-start robustness evaluation.
    #[arg(long)]
    pub tre: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub trajectories: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// First frame to score; defaults to the first frame with a full block.
    #[arg(long)]
    pub from: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON sequence description; the built-in occlusion scenario when omitted.
    pub spec: Option<PathBuf>,
    #[arg(long, default_value = "synth")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

fn report(result: Result<()>) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

/// The directory actually holding frames: `seq_dir/img` when present.
pub fn frames_dir(seq_dir: &Path) -> PathBuf {
    let img = seq_dir.join(FRAMES_DIR);
    if img.is_dir() {
        img
    } else {
        seq_dir.to_path_buf()
    }
}

fn write_report(out: &Path, report: &MetricsReport) -> Result<()> {
    write_metrics_json(&out.join(METRICS_FILE), report)?;
    write_curve_csv(&out.join(PRECISION_FILE), &report.precision_curve)?;
    write_curve_csv(&out.join(SUCCESS_FILE), &report.success_curve)
}

fn frame_end(records_max: Option<usize>, gt: &[GroundTruthBox], frames: usize) -> usize {
    let gt_end = gt.iter().map(|b| b.frame + 1).max().unwrap_or(0);
    frames.max(gt_end).max(records_max.map_or(0, |f| f + 1))
}

pub fn run_track(config: &PipelineConfig, args: &TrackArgs) -> Result<()> {
    let pipeline = Pipeline::<f64>::new(config.clone())?;
    let dir = frames_dir(&args.seq_dir);
    let gt = args.gt.as_deref().map(load_groundtruth).transpose()?;

    let t0 = Instant::now();
    let frames = load_sequence(&dir, &LoadOptions::default())?;
    log::info!("loaded {} frames from {} in {:.3}s", frames.len(), dir.display(), t0.elapsed().as_secs_f64());

    let run = pipeline.run(&frames)?;
    log::info!("tracking: {:.1} frames/s", run.fps());

    let outcomes = gt.as_ref().map(|gt| {
        let records = trajectory_records(&run.tracks);
        let first = run.first_frame().unwrap_or(0);
        let end = frames.last().map_or(first, |f| f.index + 1);
        evaluate_records(&records, gt, first..end)
    });
    let options = OutputOptions {
        annotate: args.annotate.then_some(frames.as_slice()),
        outcomes: outcomes.as_deref(),
    };
    let written = write_outputs(&run.tracks, &args.out, &options)?;
    for p in &written {
        log::debug!("wrote {}", p.display());
    }

    if let (Some(gt), Some(outcomes)) = (&gt, &outcomes) {
        let report = sequence_metrics(outcomes, Some(run.fps()))?;
        write_report(&args.out, &report)?;
        log::info!(
            "TD {:.1}%  FD {:.1}%  MD {:.1}%  AUC {:.3}  precision@20 {:.3}",
            report.td,
            report.fd,
            report.md,
            report.auc,
            report.precision_at_20
        );
        if args.tre {
            let tre = tre_harness::<f64>(&frames, gt, config, config.eval.tre_starts)?;
            write_metrics_json(&args.out.join(TRE_FILE), &tre)?;
            log::info!("TRE over {} starts: TD {:.1}%", tre.per_start.len(), tre.mean.td);
        }
    } else if args.tre {
        log::warn!("--tre needs --gt; skipped");
    }
    Ok(())
}

pub fn run_eval(config: &PipelineConfig, args: &EvalArgs) -> Result<()> {
    let records = read_trajectories(&args.trajectories)?;
    let gt = load_groundtruth(&args.gt)?;
    let first = args.from.unwrap_or(config.gabor.temporal_extent - 1);
    let records_max = records.iter().map(|r| r.frame).max();
    let gt_end = gt.iter().map(|b| b.frame + 1).max().unwrap_or(0);
    if let Some(m) = records_max {
        if m >= gt_end {
            log::warn!(
                "trajectories reach frame {m} but ground truth ends at frame {}",
                gt_end.saturating_sub(1)
            );
        }
    }
    let end = frame_end(records_max, &gt, 0);
    let outcomes = evaluate_records(&records, &gt, first..end.max(first));
    let report = sequence_metrics(&outcomes, None)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_report(&args.out, &report)?;
    write_frame_metrics_csv(&args.out.join(FRAME_METRICS_FILE), &outcomes)?;
    log::info!("TD {:.1}%  FD {:.1}%  MD {:.1}%  AUC {:.3}", report.td, report.fd, report.md, report.auc);
    Ok(())
}

pub fn load_synth_spec(path: Option<&Path>) -> Result<SynthSpec> {
    let Some(path) = path else {
        return Ok(SynthSpec::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: SynthSpec =
        serde_json::from_str(&text).map_err(|e| Error::Synth(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

pub fn run_synth(args: &SynthArgs) -> Result<()> {
    let spec = load_synth_spec(args.spec.as_deref())?;
    let (frames, gt) = generate(&spec, args.seed)?;
    let img_dir = args.out.join(FRAMES_DIR);
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    for f in &frames {
        let path = img_dir.join(format!("{:04}.png", f.index + 1));
        f.to_image().save(&path).map_err(|source| Error::Image { path, source })?;
    }
    let gt_path = args.out.join(GROUNDTRUTH_FILE);
    fs::write(&gt_path, format_groundtruth(&gt, frames.len())).map_err(|e| Error::io(&gt_path, e))?;
    log::info!("wrote {} frames to {}", frames.len(), img_dir.display());
    Ok(())
}

pub fn cmd_track(config_path: Option<&Path>, args: &TrackArgs) -> i32 {
    report(load_config(config_path).and_then(|c| run_track(&c, args)))
}

pub fn cmd_eval(config_path: Option<&Path>, args: &EvalArgs) -> i32 {
    report(load_config(config_path).and_then(|c| run_eval(&c, args)))
}

pub fn cmd_synth(args: &SynthArgs) -> i32 {
    report(run_synth(args))
}

/// Dispatch parsed arguments; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let config_path = cli.config.as_deref();
    if cli.emit_config {
        return match load_config(config_path) {
            Ok(c) => {
                println!("{}", c.to_json());
                EXIT_OK
            }
            Err(e) => report(Err(e)),
        };
    }
    match &cli.command {
        Some(Command::Track(a)) => cmd_track(config_path, a),
        Some(Command::Eval(a)) => cmd_eval(config_path, a),
        Some(Command::Synth(a)) => cmd_synth(a),
        None => {
            eprintln!("error: a subcommand is required (track, eval, synth); see --help");
            EXIT_USAGE
        }
    }
}
