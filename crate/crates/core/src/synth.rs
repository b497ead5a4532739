//! Synthetic moving-camera sequences with exact ground truth.
//!
//! The background is a value-noise texture that pans with wrap-around, which
//! stands in for camera motion without inventing new scene content.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rect::Rect;
use crate::sequence_io::{FrameGrid, GroundTruthBox};

pub const MIN_LENGTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextureSpec {
    /// Spacing of the random lattice in pixels.
    pub cell: f64,
    pub low: u8,
    pub high: u8,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            cell: 6.0,
            low: 30,
            high: 170,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetShape {
    Rect { width: u32, height: u32 },
    Disk { diameter: u32 },
}

impl TargetShape {
    fn extent(&self) -> (i32, i32) {
        match *self {
            TargetShape::Rect { width, height } => (width as i32, height as i32),
            TargetShape::Disk { diameter } => (diameter as i32, diameter as i32),
        }
    }

    /// Whether pixel `(dx, dy)` of the bounding box belongs to the shape.
    fn covers(&self, dx: i32, dy: i32) -> bool {
        match *self {
            TargetShape::Rect { .. } => true,
            TargetShape::Disk { diameter } => {
                let r = f64::from(diameter) / 2.0;
                let px = f64::from(dx) + 0.5 - r;
                let py = f64::from(dy) + 0.5 - r;
                px * px + py * py <= r * r
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub shape: TargetShape,
    pub intensity: u8,
    /// Top-left corner `(x, y)` at frame 0.
    pub start: (f64, f64),
    /// Pixels per frame `(dx, dy)`.
    pub velocity: (f64, f64),
    /// Reflect off the frame borders instead of failing validation.
    #[serde(default)]
    pub bounce: bool,
    /// Surface texture carried with the target; flat `intensity` when absent.
    #[serde(default)]
    pub pattern: Option<TextureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccluderSpec {
    pub rect: Rect,
    pub intensity: u8,
    /// Frames `first..last` (exclusive) during which the patch is drawn.
    #[serde(default)]
    pub frames: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub length: usize,
    pub texture: TextureSpec,
    /// Background translation per frame `(dx, dy)`.
    pub pan: (f64, f64),
    pub targets: Vec<TargetSpec>,
    pub occluders: Vec<OccluderSpec>,
    pub noise_std: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::occlusion_scenario()
    }
}

/// Target velocity as seen against the panning background.
pub fn relative_motion(target: (f64, f64), pan: (f64, f64)) -> (f64, f64) {
    (target.0 - pan.0, target.1 - pan.1)
}

/// Fold `p` into `[0, span]` as if bouncing between the walls.
fn reflect(p: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * span;
    let m = p.rem_euclid(period);
    if m <= span {
        m
    } else {
        period - m
    }
}

impl SynthSpec {
    /// 160×120, 60 frames, a 20×20 disk at 3 px/frame over a background
    /// panning 1 px/frame. A static patch is inserted for frames 15..20 and
    /// fully hides the target for exactly those five frames.
    pub fn occlusion_scenario() -> Self {
        Self {
            width: 160,
            height: 120,
            length: 60,
            texture: TextureSpec::default(),
            pan: (1.0, 0.0),
            targets: vec![TargetSpec {
                shape: TargetShape::Disk { diameter: 20 },
                intensity: 235,
                start: (10.0, 50.0),
                velocity: (3.0, 0.0),
                bounce: true,
                pattern: None,
            }],
            occluders: vec![OccluderSpec {
                rect: Rect::new(50, 36, 42, 48),
                intensity: 100,
                frames: Some((15, 20)),
            }],
            noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < MIN_LENGTH {
            return Err(Error::Synth(format!(
                "length {} is below the minimum of {MIN_LENGTH}",
                self.length
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Synth("frame size must be positive".into()));
        }
        if !(self.texture.cell > 0.0) || self.texture.low > self.texture.high {
            return Err(Error::Synth("texture needs a positive cell and low <= high".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Synth(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if !self.pan.0.is_finite() || !self.pan.1.is_finite() {
            return Err(Error::Synth("pan must be finite".into()));
        }
        for (i, t) in self.targets.iter().enumerate() {
            let (w, h) = t.shape.extent();
            if w <= 0 || h <= 0 || w as usize > self.width || h as usize > self.height {
                return Err(Error::Synth(format!("target {i} does not fit in the frame")));
            }
            if t.bounce {
                continue;
            }
            for f in 0..self.length {
                let r = self.target_rect(i, f);
                if r.x < 0 || r.y < 0 || r.right() > self.width as i32 || r.bottom() > self.height as i32 {
                    return Err(Error::Synth(format!("target {i} leaves the frame at frame {f}: {r:?}")));
                }
            }
        }
        Ok(())
    }

    /// Bounding box of target `i` in frame `f`.
    pub fn target_rect(&self, i: usize, f: usize) -> Rect {
        let t = &self.targets[i];
        let (w, h) = t.shape.extent();
        let mut x = t.start.0 + t.velocity.0 * f as f64;
        let mut y = t.start.1 + t.velocity.1 * f as f64;
        if t.bounce {
            x = reflect(x, (self.width as i32 - w) as f64);
            y = reflect(y, (self.height as i32 - h) as f64);
        }
        Rect::new(x.round() as i32, y.round() as i32, w, h)
    }

    /// Ground truth of the first target, one box per frame.
    pub fn ground_truth(&self) -> Vec<GroundTruthBox> {
        if self.targets.is_empty() {
            return Vec::new();
        }
        (0..self.length)
            .map(|f| GroundTruthBox {
                frame: f,
                rect: self.target_rect(0, f),
            })
            .collect()
    }
}

fn box_blur_wrap(src: &[f64], w: usize, h: usize, radius: isize) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    let mut out = vec![0.0; w * h];
    let n = (2 * radius + 1) as f64;
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -radius..=radius {
                let xx = (x as isize + d).rem_euclid(w as isize) as usize;
                acc += src[y * w + xx];
            }
            tmp[y * w + x] = acc / n;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -radius..=radius {
                let yy = (y as isize + d).rem_euclid(h as isize) as usize;
                acc += tmp[yy * w + x];
            }
            out[y * w + x] = acc / n;
        }
    }
    out
}

/// Periodic value noise at frame size, blurred 5×5 and stretched to `[low, high]`.
pub fn background_texture(width: usize, height: usize, spec: &TextureSpec, rng: &mut impl Rng) -> Grid<f64> {
    let nx = ((width as f64 / spec.cell).round() as usize).max(1);
    let ny = ((height as f64 / spec.cell).round() as usize).max(1);
    let lattice: Vec<f64> = (0..nx * ny).map(|_| rng.random::<f64>()).collect();
    let sx = nx as f64 / width as f64;
    let sy = ny as f64 / height as f64;
    let mut raw = vec![0.0; width * height];
    for y in 0..height {
        let fy = y as f64 * sy;
        let y0 = fy.floor() as usize % ny;
        let y1 = (y0 + 1) % ny;
        let ty = fy - fy.floor();
        for x in 0..width {
            let fx = x as f64 * sx;
            let x0 = fx.floor() as usize % nx;
            let x1 = (x0 + 1) % nx;
            let tx = fx - fx.floor();
            let top = lattice[y0 * nx + x0] * (1.0 - tx) + lattice[y0 * nx + x1] * tx;
            let bottom = lattice[y1 * nx + x0] * (1.0 - tx) + lattice[y1 * nx + x1] * tx;
            raw[y * width + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    let blurred = box_blur_wrap(&raw, width, height, 2);
    let (lo, hi) = blurred
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (low, high) = (f64::from(spec.low), f64::from(spec.high));
    let data = blurred
        .iter()
        .map(|&v| low + (v - lo) / span * (high - low))
        .collect();
    Grid::from_vec(width, height, data).expect("texture size")
}

fn render_frame(
    spec: &SynthSpec,
    texture: &Grid<f64>,
    patterns: &[Option<Grid<f64>>],
    f: usize,
    seed: u64,
) -> FrameGrid {
    let (w, h) = (spec.width, spec.height);
    let ox = (spec.pan.0 * f as f64).round() as isize;
    let oy = (spec.pan.1 * f as f64).round() as isize;
    let mut px: Vec<f64> = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            // Content moves by +pan, so sample the texture at position - offset.
            let sx = (x as isize - ox).rem_euclid(w as isize) as usize;
            let sy = (y as isize - oy).rem_euclid(h as isize) as usize;
            px.push(texture.get(sx, sy));
        }
    }
    for (i, t) in spec.targets.iter().enumerate() {
        let r = spec.target_rect(i, f);
        for dy in 0..r.h {
            for dx in 0..r.w {
                let (x, y) = (r.x + dx, r.y + dy);
                if x < 0 || y < 0 || x >= w as i32 || y >= h as i32 || !t.shape.covers(dx, dy) {
                    continue;
                }
                px[y as usize * w + x as usize] = match &patterns[i] {
                    Some(p) => p.get(dx as usize, dy as usize),
                    None => f64::from(t.intensity),
                };
            }
        }
    }
    for o in &spec.occluders {
        if let Some((a, b)) = o.frames {
            if f < a || f >= b {
                continue;
            }
        }
        for y in o.rect.y.max(0)..o.rect.bottom().min(h as i32) {
            for x in o.rect.x.max(0)..o.rect.right().min(w as i32) {
                px[y as usize * w + x as usize] = f64::from(o.intensity);
            }
        }
    }
    if spec.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(f as u64 + 1);
        let normal = Normal::new(0.0, spec.noise_std).expect("validated noise");
        for v in px.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let bytes = px.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    FrameGrid::new(f, Grid::from_vec(w, h, bytes).expect("frame size"))
}

/// Render every frame and the first target's ground truth. Deterministic in `seed`.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<(Vec<FrameGrid>, Vec<GroundTruthBox>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = background_texture(spec.width, spec.height, &spec.texture, &mut rng);
    let patterns: Vec<Option<Grid<f64>>> = spec
        .targets
        .iter()
        .map(|t| {
            let (w, h) = t.shape.extent();
            t.pattern
                .as_ref()
                .map(|p| background_texture(w as usize, h as usize, p, &mut rng))
        })
        .collect();
    let frames = (0..spec.length)
        .into_par_iter()
        .map(|f| render_frame(spec, &texture, &patterns, f, seed))
        .collect();
    Ok((frames, spec.ground_truth()))
}
