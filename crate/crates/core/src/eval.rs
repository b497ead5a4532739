//! Detection accounting, overlap and center-error curves, multi-start runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::pipeline::Pipeline;
use crate::rect::Rect;
use crate::scalar::Scalar;
use crate::sequence_io::{trajectory_records, FrameGrid, GroundTruthBox, TrajectoryRecord};

/// Pixel intersection over union.
pub fn overlap(a: &Rect, b: &Rect) -> f64 {
    let inter = a.intersection(b).map_or(0, |r| r.area());
    let union = a.area() + b.area() - inter;
    if union <= 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Distance between box centers.
pub fn center_error(a: &Rect, b: &Rect) -> f64 {
    let (ar, ac) = a.center();
    let (br, bc) = b.center();
    (ar - br).hypot(ac - bc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    TrueDetection,
    FalseDetection,
    MissedDetection,
    NoGroundTruth,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::TrueDetection => "TD",
            Classification::FalseDetection => "FD",
            Classification::MissedDetection => "MD",
            Classification::NoGroundTruth => "NoGT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub frame: usize,
    pub classification: Classification,
    /// Zero unless both boxes exist.
    pub overlap: f64,
    pub cle: Option<f64>,
}

pub fn classify_frame(frame: usize, pred: Option<&Rect>, gt: Option<&Rect>) -> FrameOutcome {
    let (classification, s, cle) = match (pred, gt) {
        (Some(p), Some(g)) => {
            let s = overlap(p, g);
            let class = if s > 0.0 {
                Classification::TrueDetection
            } else {
                Classification::FalseDetection
            };
            (class, s, Some(center_error(p, g)))
        }
        (Some(_), None) => (Classification::FalseDetection, 0.0, None),
        (None, Some(_)) => (Classification::MissedDetection, 0.0, None),
        (None, None) => (Classification::NoGroundTruth, 0.0, None),
    };
    FrameOutcome {
        frame,
        classification,
        overlap: s,
        cle,
    }
}

/// The candidate whose center is nearest the ground truth center; the first
/// candidate when there is no ground truth.
pub fn select_prediction<'a>(candidates: &[&'a Rect], gt: Option<&Rect>) -> Option<&'a Rect> {
    match gt {
        None => candidates.first().copied(),
        Some(g) => candidates
            .iter()
            .copied()
            .min_by(|a, b| center_error(a, g).total_cmp(&center_error(b, g))),
    }
}

/// Outcomes for every frame in `frames`, scoring the nearest track per frame.
pub fn evaluate_records(
    records: &[TrajectoryRecord],
    gt: &[GroundTruthBox],
    frames: std::ops::Range<usize>,
) -> Vec<FrameOutcome> {
    let mut by_frame: BTreeMap<usize, Vec<Rect>> = BTreeMap::new();
    for r in records {
        by_frame.entry(r.frame).or_default().push(r.rect());
    }
    let gt_by_frame: BTreeMap<usize, Rect> = gt.iter().map(|b| (b.frame, b.rect)).collect();
    frames
        .map(|f| {
            let candidates: Vec<&Rect> = by_frame.get(&f).map(|v| v.iter().collect()).unwrap_or_default();
            let g = gt_by_frame.get(&f);
            classify_frame(f, select_prediction(&candidates, g), g)
        })
        .collect()
}

/// One `(threshold, value)` sample per row.
pub type Curve = Vec<(f64, f64)>;

pub const PRECISION_MAX_PX: usize = 50;
pub const PRECISION_REPORT_PX: f64 = 20.0;
pub const SUCCESS_STEPS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: usize,
    pub n_td: usize,
    pub n_fd: usize,
    pub n_md: usize,
    pub n_nogt: usize,
    /// Percentages.
    pub td: f64,
    pub fd: f64,
    pub md: f64,
    /// Fraction of ground-truth frames with center error within each pixel threshold.
    pub precision_curve: Curve,
    /// Fraction of ground-truth frames whose overlap reaches each threshold
    /// (strictly positive overlap at threshold 0).
    pub success_curve: Curve,
    /// Mean of the success curve samples.
    pub auc: f64,
    pub precision_at_20: f64,
    /// Over frames where both boxes exist.
    pub mean_cle: Option<f64>,
    pub fps: Option<f64>,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64 * 100.0
    }
}

pub fn precision_curve(outcomes: &[FrameOutcome]) -> Curve {
    let with_gt: Vec<&FrameOutcome> = outcomes.iter().filter(|o| has_gt(o)).collect();
    (0..=PRECISION_MAX_PX)
        .map(|t| {
            let thr = t as f64;
            let hits = with_gt.iter().filter(|o| o.cle.is_some_and(|c| c <= thr)).count();
            (thr, fraction(hits, with_gt.len()))
        })
        .collect()
}

pub fn success_curve(outcomes: &[FrameOutcome]) -> Curve {
    let with_gt: Vec<&FrameOutcome> = outcomes.iter().filter(|o| has_gt(o)).collect();
    (0..=SUCCESS_STEPS)
        .map(|i| {
            let thr = i as f64 / SUCCESS_STEPS as f64;
            let hits = with_gt
                .iter()
                .filter(|o| if i == 0 { o.overlap > 0.0 } else { o.overlap >= thr })
                .count();
            (thr, fraction(hits, with_gt.len()))
        })
        .collect()
}

pub fn curve_mean(curve: &Curve) -> f64 {
    if curve.is_empty() {
        0.0
    } else {
        curve.iter().map(|&(_, v)| v).sum::<f64>() / curve.len() as f64
    }
}

/// Trapezoidal area over the curve's threshold span, normalized by that span.
pub fn curve_trapezoid(curve: &Curve) -> f64 {
    let (Some(first), Some(last)) = (curve.first(), curve.last()) else {
        return 0.0;
    };
    let span = last.0 - first.0;
    if span <= 0.0 {
        return first.1;
    }
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum::<f64>()
        / span
}

fn has_gt(o: &FrameOutcome) -> bool {
    matches!(
        o.classification,
        Classification::TrueDetection | Classification::MissedDetection
    ) || (o.classification == Classification::FalseDetection && o.cle.is_some())
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn sequence_metrics(outcomes: &[FrameOutcome], fps: Option<f64>) -> Result<MetricsReport> {
    if outcomes.is_empty() {
        return Err(Error::Eval("no frames to evaluate".into()));
    }
    let count = |c: Classification| outcomes.iter().filter(|o| o.classification == c).count();
    let n_td = count(Classification::TrueDetection);
    let n_fd = count(Classification::FalseDetection);
    let n_md = count(Classification::MissedDetection);
    let n_nogt = count(Classification::NoGroundTruth);
    let precision = precision_curve(outcomes);
    let success = success_curve(outcomes);
    let cles: Vec<f64> = outcomes.iter().filter_map(|o| o.cle).collect();
    Ok(MetricsReport {
        frames: outcomes.len(),
        n_td,
        n_fd,
        n_md,
        n_nogt,
        td: percent(n_td, outcomes.len()),
        fd: percent(n_fd, n_td + n_fd),
        md: percent(n_md, n_td + n_md),
        precision_at_20: precision[PRECISION_REPORT_PX as usize].1,
        auc: curve_mean(&success),
        precision_curve: precision,
        success_curve: success,
        mean_cle: (!cles.is_empty()).then(|| cles.iter().sum::<f64>() / cles.len() as f64),
        fps,
    })
}

pub fn write_curve_csv(path: &Path, curve: &Curve) -> Result<()> {
    let mut text = String::from("threshold,value\n");
    for (t, v) in curve {
        text.push_str(&format!("{t:.2},{v:.6}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_metrics_json(path: &Path, report: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Metrics of one run started at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub start: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub td: f64,
    pub fd: f64,
    pub md: f64,
    pub auc: f64,
    pub precision_at_20: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub per_start: Vec<StartReport>,
    pub mean: MeanMetrics,
    pub skipped_starts: Vec<usize>,
}

/// Start offsets `i * len / k` for `i < k`, deduplicated.
pub fn start_offsets(len: usize, k: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..k).map(|i| i * len / k.max(1)).collect();
    starts.dedup();
    starts
}

/// Run the pipeline from one start frame and score it against ground truth.
/// Frames before the first full block are not scored.
pub fn evaluate_from<T: Scalar>(
    pipeline: &Pipeline<T>,
    frames: &[FrameGrid],
    gt: &[GroundTruthBox],
    start: usize,
) -> Result<MetricsReport> {
    let run = pipeline.run(&frames[start..])?;
    let records = trajectory_records(&run.tracks);
    let first = frames[start].index + pipeline.bank().temporal_extent() - 1;
    let end = frames.last().map_or(first, |f| f.index + 1);
    let outcomes = evaluate_records(&records, gt, first..end);
    sequence_metrics(&outcomes, Some(run.fps()))
}

/// Temporal robustness: the full pipeline from `k_starts` evenly spaced
/// start frames. Starts leaving fewer frames than the block length are skipped.
pub fn tre_harness<T: Scalar>(
    frames: &[FrameGrid],
    gt: &[GroundTruthBox],
    config: &PipelineConfig,
    k_starts: usize,
) -> Result<RobustnessReport> {
    if k_starts == 0 {
        return Err(Error::Eval("at least one start is required".into()));
    }
    let pipeline = Pipeline::<T>::new(config.clone())?;
    let n = pipeline.bank().temporal_extent();
    let (usable, skipped): (Vec<usize>, Vec<usize>) = start_offsets(frames.len(), k_starts)
        .into_iter()
        .partition(|&s| frames.len() - s >= n);
    for s in &skipped {
        log::warn!("start {s} leaves {} frames, fewer than {n}; skipped", frames.len() - s);
    }
    if usable.is_empty() {
        return Err(Error::SequenceTooShort {
            len: frames.len(),
            needed: n,
        });
    }
    let per_start = usable
        .par_iter()
        .map(|&s| {
            evaluate_from(&pipeline, frames, gt, s).map(|metrics| StartReport { start: s, metrics })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = per_start.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| per_start.iter().map(|r| f(&r.metrics)).sum::<f64>() / k;
    let mean = MeanMetrics {
        td: avg(|m| m.td),
        fd: avg(|m| m.fd),
        md: avg(|m| m.md),
        auc: avg(|m| m.auc),
        precision_at_20: avg(|m| m.precision_at_20),
    };
    Ok(RobustnessReport {
        per_start,
        mean,
        skipped_starts: skipped,
    })
}

/// One pass from the first frame.
pub fn one_pass<T: Scalar>(
    frames: &[FrameGrid],
    gt: &[GroundTruthBox],
    config: &PipelineConfig,
) -> Result<MetricsReport> {
    let pipeline = Pipeline::<T>::new(config.clone())?;
    if frames.len() < pipeline.bank().temporal_extent() {
        return Err(Error::SequenceTooShort {
            len: frames.len(),
            needed: pipeline.bank().temporal_extent(),
        });
    }
    evaluate_from(&pipeline, frames, gt, 0)
}

/// The method takes no initial box, so spatial robustness reduces to one pass.
pub fn spatial_robustness<T: Scalar>(
    frames: &[FrameGrid],
    gt: &[GroundTruthBox],
    config: &PipelineConfig,
) -> Result<MetricsReport> {
    one_pass::<T>(frames, gt, config)
}
