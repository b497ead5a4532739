//! Full detection and tracking run over a frame sequence.

use std::path::Path;
use std::time::{Duration, Instant};

use image::{ImageBuffer, Luma};
use rayon::prelude::*;

use crate::blob_extract::{extract_blobs, fuse_energy, fuse_maps, EnergyFrame};
use crate::blob_merge::{merge_blobs, ObjectFeature};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::gabor_bank::{apply_bank_with, make_bank, GaborBank};
use crate::scalar::Scalar;
use crate::sequence_io::{block_stream, FrameGrid, STBlock};
use crate::tracker::{FrameTracks, Tracker};

/// Objects found in one target frame.
#[derive(Debug, Clone)]
pub struct FrameDetections<T> {
    pub frame: usize,
    pub blob_count: usize,
    pub objects: Vec<ObjectFeature<T>>,
}

/// Time spent per stage. Per-block stages are summed over worker threads.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTiming {
    pub filtering: Duration,
    pub fusion: Duration,
    pub merging: Duration,
    pub tracking: Duration,
    /// Wall-clock time of detection plus tracking.
    pub wall: Duration,
}

#[derive(Debug, Clone)]
pub struct PipelineRun<T> {
    pub tracks: Vec<FrameTracks<T>>,
    pub detections: Vec<FrameDetections<T>>,
    pub timing: StageTiming,
}

impl<T> PipelineRun<T> {
    /// Processed frames per second of wall-clock time.
    pub fn fps(&self) -> f64 {
        let secs = self.timing.wall.as_secs_f64();
        if secs > 0.0 {
            self.tracks.len() as f64 / secs
        } else {
            0.0
        }
    }

    /// First frame that receives tracking output.
    pub fn first_frame(&self) -> Option<usize> {
        self.tracks.first().map(|t| t.frame)
    }
}

pub struct Pipeline<T> {
    config: PipelineConfig,
    bank: GaborBank<T>,
}

struct BlockOutput<T> {
    detections: FrameDetections<T>,
    filtering: Duration,
    fusion: Duration,
    merging: Duration,
}

impl<T: Scalar> Pipeline<T> {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let bank = make_bank(&config.gabor)?;
        Ok(Self { config, bank })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn bank(&self) -> &GaborBank<T> {
        &self.bank
    }

    /// Fused energy of one block.
    pub fn energy(&self, block: &STBlock<'_>) -> Result<EnergyFrame<T>> {
        let stack = apply_bank_with(block, &self.bank, self.config.convolution)?;
        if stack.maps.len() == 9 {
            fuse_energy(&stack)
        } else {
            fuse_maps(&stack.maps, stack.target, None)
        }
    }

    fn detect_timed(&self, block: &STBlock<'_>) -> Result<BlockOutput<T>> {
        let t0 = Instant::now();
        let stack = apply_bank_with(block, &self.bank, self.config.convolution)?;
        let t1 = Instant::now();
        let energy = if stack.maps.len() == 9 {
            fuse_energy(&stack)?
        } else {
            fuse_maps(&stack.maps, stack.target, None)?
        };
        drop(stack);
        if let Some(dir) = &self.config.blob.debug_energy_dir {
            write_energy_png(&energy, Path::new(dir))?;
        }
        let blobs = extract_blobs(&energy, self.config.blob.min_blob_area);
        let t2 = Instant::now();
        let objects = merge_blobs(&blobs, block.target(), self.config.merge.threshold_rule);
        let t3 = Instant::now();
        Ok(BlockOutput {
            detections: FrameDetections {
                frame: block.target().index,
                blob_count: blobs.len(),
                objects,
            },
            filtering: t1 - t0,
            fusion: t2 - t1,
            merging: t3 - t2,
        })
    }

    /// Objects of one block's target frame.
    pub fn detect(&self, block: &STBlock<'_>) -> Result<FrameDetections<T>> {
        self.detect_timed(block).map(|o| o.detections)
    }

    /// Detect in every block (in parallel), then track frame by frame.
    pub fn run(&self, frames: &[FrameGrid]) -> Result<PipelineRun<T>> {
        let n = self.bank.temporal_extent();
        if frames.len() < n {
            return Err(Error::SequenceTooShort {
                len: frames.len(),
                needed: n,
            });
        }
        let start = Instant::now();
        let blocks: Vec<STBlock<'_>> = block_stream(frames, n)?.collect();
        let outputs = blocks
            .par_iter()
            .map(|b| self.detect_timed(b))
            .collect::<Result<Vec<_>>>()?;

        let mut timing = StageTiming::default();
        let mut detections = Vec::with_capacity(outputs.len());
        for o in outputs {
            timing.filtering += o.filtering;
            timing.fusion += o.fusion;
            timing.merging += o.merging;
            detections.push(o.detections);
        }

        let t_track = Instant::now();
        let mut tracker = Tracker::new(self.config.tracker.clone());
        let tracks = detections
            .iter()
            .map(|d| tracker.step(d.objects.clone(), d.frame))
            .collect();
        timing.tracking = t_track.elapsed();
        timing.wall = start.elapsed();

        log::info!(
            "{} frames: filtering {:.3}s, fusion+blobs {:.3}s, merging {:.3}s (summed over threads), tracking {:.3}s, wall {:.3}s",
            detections.len(),
            timing.filtering.as_secs_f64(),
            timing.fusion.as_secs_f64(),
            timing.merging.as_secs_f64(),
            timing.tracking.as_secs_f64(),
            timing.wall.as_secs_f64()
        );
        Ok(PipelineRun {
            tracks,
            detections,
            timing,
        })
    }
}

/// Fused energy scaled to the full 16-bit range.
pub fn write_energy_png<T: Scalar>(energy: &EnergyFrame<T>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (w, h) = energy.grid.dims();
    let max = energy
        .grid
        .as_slice()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.as_f64()));
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    let data: Vec<u16> = energy
        .grid
        .as_slice()
        .iter()
        .map(|v| (v.as_f64() * scale).round() as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, data).expect("buffer matches dimensions");
    let path = dir.join(format!("energy_{:06}.png", energy.target));
    img.save(&path).map_err(|source| Error::Image { path, source })
}
