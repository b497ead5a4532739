//! Frame and ground-truth loading, spatio-temporal blocks, and result writers.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::FrameOutcome;
use crate::grid::Grid;
use crate::rect::Rect;
use crate::scalar::Scalar;
use crate::tracker::FrameTracks;

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "pgm", "ppm", "pnm"];

/// One grayscale frame with intensities in `0..=255`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid {
    pub index: usize,
    pub pixels: Grid<u8>,
}

impl FrameGrid {
    pub fn new(index: usize, pixels: Grid<u8>) -> Self {
        Self { index, pixels }
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_raw(
            self.width() as u32,
            self.height() as u32,
            self.pixels.as_slice().to_vec(),
        )
        .expect("grid length matches dimensions")
    }
}

/// Window of `n` consecutive frames, oldest first. The newest frame is the target.
#[derive(Debug, Clone, Copy)]
pub struct STBlock<'a> {
    pub frames: &'a [FrameGrid],
}

impl<'a> STBlock<'a> {
    pub fn target_index(&self) -> usize {
        self.frames.last().map(|f| f.index).unwrap_or(0)
    }

    pub fn target(&self) -> &'a FrameGrid {
        self.frames.last().expect("non-empty block")
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames
            .first()
            .map(|f| f.pixels.dims())
            .unwrap_or((0, 0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub frame: usize,
    pub rect: Rect,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Restrict to the first `limit` frames after sorting.
    pub limit: Option<usize>,
}

/// Rec.601 luma, rounded to the nearest integer.
#[inline]
pub fn luma601(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

pub fn to_grayscale(img: &DynamicImage) -> Grid<u8> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => {
            Grid::from_vec(w, h, g.as_raw().clone()).expect("luma buffer matches dimensions")
        }
        other => {
            let rgb = other.to_rgb8();
            let data = rgb.pixels().map(|p| luma601(p[0], p[1], p[2])).collect();
            Grid::from_vec(w, h, data).expect("rgb buffer matches dimensions")
        }
    }
}

fn numeric_key(path: &Path) -> (Option<u64>, String) {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let digits: String = stem.chars().filter(|c| c.is_ascii_digit()).collect();
    (digits.parse().ok(), stem)
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_string_lossy().to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Image files of a directory in filename-numeric order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && is_image(&path) {
            files.push(path);
        }
    }
    // Files with a number sort before files without one.
    files.sort_by_key(|p| {
        let (num, stem) = numeric_key(p);
        (num.is_none(), num, stem)
    });
    Ok(files)
}

pub fn load_sequence(dir: &Path, options: &LoadOptions) -> Result<Vec<FrameGrid>> {
    let mut files = list_frames(dir)?;
    if let Some(limit) = options.limit {
        files.truncate(limit);
    }
    if files.is_empty() {
        return Err(Error::EmptySequence(dir.to_path_buf()));
    }

    let decoded: Vec<Result<Grid<u8>>> = files
        .par_iter()
        .map(|path| {
            image::open(path)
                .map(|img| to_grayscale(&img))
                .map_err(|source| Error::Image {
                    path: path.clone(),
                    source,
                })
        })
        .collect();

    let mut frames = Vec::with_capacity(files.len());
    let mut expected = None;
    for (index, (path, grid)) in files.iter().zip(decoded).enumerate() {
        let grid = grid?;
        let (w, h) = grid.dims();
        match expected {
            None => expected = Some((w, h)),
            Some((ew, eh)) if (ew, eh) != (w, h) => {
                return Err(Error::DimensionMismatch {
                    path: path.clone(),
                    expected_w: ew,
                    expected_h: eh,
                    found_w: w,
                    found_h: h,
                })
            }
            Some(_) => {}
        }
        frames.push(FrameGrid::new(index, grid));
    }
    Ok(frames)
}

/// Parse one-box-per-line ground truth. Line `k` describes frame `k - 1`.
///
/// Zero-sized or NaN boxes mark frames without a visible target and are
/// omitted from the result.
pub fn parse_groundtruth(text: &str, path: &Path) -> Result<Vec<GroundTruthBox>> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 4 values, found {}", fields.len()),
            });
        }
        let mut vals = [0f64; 4];
        for (slot, field) in vals.iter_mut().zip(&fields) {
            *slot = field.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("not a number: {field:?}"),
            })?;
        }
        if vals.iter().any(|v| v.is_nan()) || vals[2] <= 0.0 || vals[3] <= 0.0 {
            continue;
        }
        boxes.push(GroundTruthBox {
            frame: i,
            rect: Rect::new(
                vals[0].round() as i32,
                vals[1].round() as i32,
                vals[2].round() as i32,
                vals[3].round() as i32,
            ),
        });
    }
    Ok(boxes)
}

pub fn load_groundtruth(path: &Path) -> Result<Vec<GroundTruthBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_groundtruth(&text, path)
}

/// Serialize boxes one per line; frames without a box get `0,0,0,0`.
pub fn format_groundtruth(boxes: &[GroundTruthBox], frame_count: usize) -> String {
    let mut lines = vec!["0,0,0,0".to_string(); frame_count];
    for b in boxes {
        if b.frame < frame_count {
            lines[b.frame] = format!("{},{},{},{}", b.rect.x, b.rect.y, b.rect.w, b.rect.h);
        }
    }
    let mut out = lines.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

pub fn write_groundtruth(path: &Path, boxes: &[GroundTruthBox], frame_count: usize) -> Result<()> {
    fs::write(path, format_groundtruth(boxes, frame_count)).map_err(|e| Error::io(path, e))
}

/// Sliding windows of `n` frames; block `k` targets frame `k + n - 1`.
pub fn block_stream(frames: &[FrameGrid], n: usize) -> Result<impl Iterator<Item = STBlock<'_>>> {
    if n == 0 || frames.len() < n {
        return Err(Error::SequenceTooShort {
            len: frames.len(),
            needed: n.max(1),
        });
    }
    Ok(frames.windows(n).map(|frames| STBlock { frames }))
}

/// One line of the trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub frame: usize,
    pub id: u64,
    pub cx: f64,
    pub cy: f64,
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl TrajectoryRecord {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }
}

pub fn trajectory_records<T: Scalar>(tracks: &[FrameTracks<T>]) -> Vec<TrajectoryRecord> {
    tracks
        .iter()
        .flat_map(|ft| {
            ft.tracks.iter().map(move |t| TrajectoryRecord {
                frame: ft.frame,
                id: t.id,
                cx: t.centroid.1.as_f64(),
                cy: t.centroid.0.as_f64(),
                x: t.bbox.x,
                y: t.bbox.y,
                w: t.bbox.w,
                h: t.bbox.h,
            })
        })
        .collect()
}

pub fn write_trajectories(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectories(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_frame_metrics_csv(path: &Path, outcomes: &[FrameOutcome]) -> Result<()> {
    let mut text = String::from("frame,classification,overlap,cle\n");
    for o in outcomes {
        let cle = o.cle.map(|c| format!("{c:.6}")).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{:.6},{}\n",
            o.frame,
            o.classification.as_str(),
            o.overlap,
            cle
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

// 3x5 digit glyphs, one row per entry, bit 2 is the leftmost column.
const DIGITS: [[u8; 5]; 10] = [
    [7, 5, 5, 5, 7],
    [2, 6, 2, 2, 7],
    [7, 1, 7, 4, 7],
    [7, 1, 7, 1, 7],
    [5, 5, 7, 1, 1],
    [7, 4, 7, 1, 7],
    [7, 4, 7, 5, 7],
    [7, 1, 1, 1, 1],
    [7, 5, 7, 5, 7],
    [7, 5, 7, 1, 7],
];

fn track_color(id: u64) -> Rgb<u8> {
    const PALETTE: [[u8; 3]; 6] = [
        [255, 64, 64],
        [64, 255, 64],
        [64, 128, 255],
        [255, 220, 0],
        [255, 0, 255],
        [0, 230, 230],
    ];
    Rgb(PALETTE[(id as usize) % PALETTE.len()])
}

fn put(img: &mut RgbImage, x: i32, y: i32, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn draw_rect(img: &mut RgbImage, r: &Rect, c: Rgb<u8>) {
    for x in r.x..r.right() {
        put(img, x, r.y, c);
        put(img, x, r.bottom() - 1, c);
    }
    for y in r.y..r.bottom() {
        put(img, r.x, y, c);
        put(img, r.right() - 1, y, c);
    }
}

fn draw_number(img: &mut RgbImage, mut x: i32, y: i32, n: u64, c: Rgb<u8>) {
    const SCALE: i32 = 2;
    for ch in n.to_string().bytes() {
        let glyph = DIGITS[(ch - b'0') as usize];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) != 0 {
                    for dy in 0..SCALE {
                        for dx in 0..SCALE {
                            put(img, x + col * SCALE + dx, y + row as i32 * SCALE + dy, c);
                        }
                    }
                }
            }
        }
        x += 4 * SCALE;
    }
}

/// Render a frame with each track's box, centroid mark and id.
pub fn annotate_frame<T: Scalar>(frame: &FrameGrid, tracks: &FrameTracks<T>) -> RgbImage {
    let mut img = DynamicImage::ImageLuma8(frame.to_image()).to_rgb8();
    for t in &tracks.tracks {
        let c = track_color(t.id);
        draw_rect(&mut img, &t.bbox, c);
        let (r, col) = (t.centroid.0.as_f64().round() as i32, t.centroid.1.as_f64().round() as i32);
        for d in -2..=2 {
            put(&mut img, col + d, r, c);
            put(&mut img, col, r + d, c);
        }
        draw_number(&mut img, t.bbox.x + 1, t.bbox.y - 12, t.id, c);
    }
    img
}

#[derive(Debug, Default)]
pub struct OutputOptions<'a> {
    /// Source frames; when given, annotated PNGs are written for every tracked frame.
    pub annotate: Option<&'a [FrameGrid]>,
    pub outcomes: Option<&'a [FrameOutcome]>,
}

pub const TRAJECTORY_FILE: &str = "trajectories.jsonl";
pub const FRAME_METRICS_FILE: &str = "frame_metrics.csv";
pub const ANNOTATED_DIR: &str = "annotated";

/// Write the trajectory file and, optionally, annotated frames and per-frame metrics.
pub fn write_outputs<T: Scalar>(
    tracks_per_frame: &[FrameTracks<T>],
    out_dir: &Path,
    options: &OutputOptions<'_>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let traj = out_dir.join(TRAJECTORY_FILE);
    write_trajectories(&traj, &trajectory_records(tracks_per_frame))?;
    written.push(traj);

    if let Some(frames) = options.annotate {
        let dir = out_dir.join(ANNOTATED_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for ft in tracks_per_frame {
            let Some(frame) = frames.iter().find(|f| f.index == ft.frame) else {
                continue;
            };
            let path = dir.join(format!("{:06}.png", ft.frame));
            annotate_frame(frame, ft)
                .save(&path)
                .map_err(|source| Error::Image {
                    path: path.clone(),
                    source,
                })?;
            written.push(path);
        }
    }

    if let Some(outcomes) = options.outcomes {
        let path = out_dir.join(FRAME_METRICS_FILE);
        write_frame_metrics_csv(&path, outcomes)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(count: usize) -> Vec<FrameGrid> {
        (0..count)
            .map(|i| FrameGrid::new(i, Grid::filled(4, 4, i as u8)))
            .collect()
    }

    #[test]
    fn luma_of_pure_red() {
        assert_eq!(luma601(255, 0, 0), 76);
        assert_eq!(luma601(0, 255, 0), 150);
        assert_eq!(luma601(0, 0, 255), 29);
    }

    #[test]
    fn luma_is_identity_on_gray() {
        for v in 0..=255u8 {
            assert_eq!(luma601(v, v, v), v);
        }
    }

    #[test]
    fn groundtruth_separators() {
        let p = Path::new("gt.txt");
        let comma = parse_groundtruth("10,20,30,40\n", p).unwrap();
        let tab = parse_groundtruth("10\t20\t30\t40\n", p).unwrap();
        let space = parse_groundtruth("10 20  30 40\n", p).unwrap();
        let expected = GroundTruthBox {
            frame: 0,
            rect: Rect::new(10, 20, 30, 40),
        };
        assert_eq!(comma, vec![expected]);
        assert_eq!(tab, comma);
        assert_eq!(space, comma);
    }

    #[test]
    fn groundtruth_errors_name_line() {
        let p = Path::new("gt.txt");
        match parse_groundtruth("10,20,30\n", p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_groundtruth("1,2,3,4\n1,2,x,4\n", p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn groundtruth_absent_frames_are_skipped() {
        let gt = parse_groundtruth("1,2,3,4\n0,0,0,0\nNaN,NaN,NaN,NaN\n5,6,7,8\n", Path::new("g")).unwrap();
        assert_eq!(gt.iter().map(|b| b.frame).collect::<Vec<_>>(), vec![0, 3]);
        let text = format_groundtruth(&gt, 4);
        assert_eq!(parse_groundtruth(&text, Path::new("g")).unwrap(), gt);
    }

    #[test]
    fn blocks_target_newest_frame() {
        let f = frames(10);
        let targets: Vec<usize> = block_stream(&f, 7).unwrap().map(|b| b.target_index()).collect();
        assert_eq!(targets, vec![6, 7, 8, 9]);
        let first = block_stream(&f, 7).unwrap().next().unwrap();
        assert_eq!(first.frames.iter().map(|f| f.index).collect::<Vec<_>>(), (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn block_boundaries() {
        assert_eq!(block_stream(&frames(7), 7).unwrap().count(), 1);
        assert!(matches!(
            block_stream(&frames(6), 7),
            Err(Error::SequenceTooShort { len: 6, needed: 7 })
        ));
    }

    #[test]
    fn numeric_ordering_beats_lexical() {
        let mut names = vec![PathBuf::from("img10.png"), PathBuf::from("img2.png"), PathBuf::from("img1.png")];
        names.sort_by_key(|p| {
            let (num, stem) = numeric_key(p);
            (num.is_none(), num, stem)
        });
        assert_eq!(names[0], PathBuf::from("img1.png"));
        assert_eq!(names[2], PathBuf::from("img10.png"));
    }
}
