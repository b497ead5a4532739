//! Track bookkeeping: gated histogram cost matrix, assignment, coasting.

use serde::{Deserialize, Serialize};

use crate::blob_merge::ObjectFeature;
use crate::error::{Error, Result};
use crate::kalman::{KalmanParams, KalmanState};
use crate::rect::Rect;
use crate::scalar::Scalar;

pub const DEFAULT_PHI: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    /// Tracks pick their cheapest remaining object in id order.
    #[default]
    Greedy,
    /// Minimum total cost over all one-to-one matchings.
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Cost marking a pair that fails the gate.
    pub phi: f64,
    /// Height and width must each differ by less than this (pixels).
    pub size_diff: f64,
    /// A track is retired once it has gone unmatched for more than this many frames.
    pub max_missed: usize,
    pub assignment: AssignmentMode,
    pub kalman: KalmanParams,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            phi: DEFAULT_PHI,
            size_diff: 5.0,
            max_missed: 10,
            assignment: AssignmentMode::Greedy,
            kalman: KalmanParams::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0) || !self.phi.is_finite() {
            return Err(Error::Config(format!("tracker.phi must be positive and finite, got {}", self.phi)));
        }
        if !(self.size_diff > 0.0) {
            return Err(Error::Config(format!("tracker.size_diff must be positive, got {}", self.size_diff)));
        }
        self.kalman.validate()
    }
}

/// One cell of the track × object cost matrix. `object` is `None` exactly
/// when the pair failed the gate and `cost` is phi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostCell<T> {
    pub object: Option<usize>,
    pub cost: T,
}

impl<T: Scalar> CostCell<T> {
    pub fn finite(object: usize, cost: T) -> Self {
        Self {
            object: Some(object),
            cost,
        }
    }

    pub fn phi(phi: T) -> Self {
        Self { object: None, cost: phi }
    }

    /// Object number, or -1 for no resemblance.
    pub fn object_no(&self) -> i64 {
        self.object.map(|o| o as i64).unwrap_or(-1)
    }

    pub fn is_phi(&self) -> bool {
        self.object.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostGrid<T> {
    pub tracks: usize,
    pub objects: usize,
    pub cells: Vec<CostCell<T>>,
}

impl<T: Scalar> CostGrid<T> {
    pub fn from_cells(tracks: usize, objects: usize, cells: Vec<CostCell<T>>) -> Result<Self> {
        if cells.len() != tracks * objects {
            return Err(Error::Shape(format!(
                "{} cells for a {tracks}x{objects} cost matrix",
                cells.len()
            )));
        }
        Ok(Self { tracks, objects, cells })
    }

    #[inline]
    pub fn cell(&self, track: usize, object: usize) -> &CostCell<T> {
        &self.cells[track * self.objects + object]
    }
}

/// Mean absolute difference of the histogram bins.
pub fn histogram_cost<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().max(1);
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum::<T>() / T::from_count(n)
}

/// Whether `object` may continue the track described by `track`.
pub fn gate<T: Scalar>(track: &ObjectFeature<T>, object: &ObjectFeature<T>, size_diff: T) -> bool {
    let dr = track.centroid.0 - object.centroid.0;
    let dc = track.centroid.1 - object.centroid.1;
    let d = (dr * dr + dc * dc).sqrt();
    let (hk, wk) = (track.height(), track.width());
    d <= hk && d <= wk && (hk - object.height()).abs() < size_diff && (wk - object.width()).abs() < size_diff
}

pub fn cost_matrix<T: Scalar>(
    tracks: &[ObjectFeature<T>],
    objects: &[ObjectFeature<T>],
    config: &TrackerConfig,
) -> CostGrid<T> {
    let phi = T::lit(config.phi);
    let size_diff = T::lit(config.size_diff);
    let mut cells = Vec::with_capacity(tracks.len() * objects.len());
    for t in tracks {
        for (l, o) in objects.iter().enumerate() {
            cells.push(if gate(t, o, size_diff) {
                CostCell::finite(l, histogram_cost(&t.hist, &o.hist))
            } else {
                CostCell::phi(phi)
            });
        }
    }
    CostGrid {
        tracks: tracks.len(),
        objects: objects.len(),
        cells,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    /// `(track row, object column)` pairs.
    pub matches: Vec<(usize, usize)>,
    pub unassigned_tracks: Vec<usize>,
    /// Objects resembling no track; each starts a new track.
    pub new_objects: Vec<usize>,
    /// Objects resembling some track that went unmatched.
    pub discarded_objects: Vec<usize>,
}

fn classify_leftovers<T: Scalar>(grid: &CostGrid<T>, matches: Vec<(usize, usize)>) -> Assignment {
    let mut track_done = vec![false; grid.tracks];
    let mut object_done = vec![false; grid.objects];
    for &(t, o) in &matches {
        track_done[t] = true;
        object_done[o] = true;
    }
    let mut out = Assignment {
        matches,
        ..Assignment::default()
    };
    out.unassigned_tracks = (0..grid.tracks).filter(|&t| !track_done[t]).collect();
    for o in (0..grid.objects).filter(|&o| !object_done[o]) {
        if (0..grid.tracks).all(|t| grid.cell(t, o).is_phi()) {
            out.new_objects.push(o);
        } else {
            out.discarded_objects.push(o);
        }
    }
    out
}

/// Rows in order each take their cheapest still-available finite column;
/// ties go to the lower column.
pub fn assign<T: Scalar>(grid: &CostGrid<T>) -> Assignment {
    let mut taken = vec![false; grid.objects];
    let mut matches = Vec::new();
    for t in 0..grid.tracks {
        let mut best: Option<(usize, T)> = None;
        for o in 0..grid.objects {
            let cell = grid.cell(t, o);
            if taken[o] || cell.is_phi() {
                continue;
            }
            if best.is_none_or(|(_, c)| cell.cost < c) {
                best = Some((o, cell.cost));
            }
        }
        if let Some((o, _)) = best {
            taken[o] = true;
            matches.push((t, o));
        }
    }
    classify_leftovers(grid, matches)
}

/// Minimum-cost matching (Hungarian method) restricted to finite cells.
pub fn assign_optimal<T: Scalar>(grid: &CostGrid<T>) -> Assignment {
    let (nt, no) = (grid.tracks, grid.objects);
    if nt == 0 || no == 0 {
        return classify_leftovers(grid, Vec::new());
    }
    // Rows must not outnumber columns.
    let transpose = nt > no;
    let (rows, cols) = if transpose { (no, nt) } else { (nt, no) };
    let cost = |r: usize, c: usize| -> T {
        let (t, o) = if transpose { (c, r) } else { (r, c) };
        grid.cell(t, o).cost
    };

    let inf = T::infinity();
    let mut u = vec![T::zero(); rows + 1];
    let mut v = vec![T::zero(); cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for r in 1..=rows {
        owner[0] = r;
        let mut c0 = 0usize;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[c0] = true;
            let r0 = owner[c0];
            let mut delta = inf;
            let mut c1 = 0usize;
            for c in 1..=cols {
                if used[c] {
                    continue;
                }
                let cur = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if cur < minv[c] {
                    minv[c] = cur;
                    way[c] = c0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    c1 = c;
                }
            }
            for c in 0..=cols {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            c0 = c1;
            if owner[c0] == 0 {
                break;
            }
        }
        loop {
            let c1 = way[c0];
            owner[c0] = owner[c1];
            c0 = c1;
            if c0 == 0 {
                break;
            }
        }
    }

    let mut matches = Vec::new();
    for c in 1..=cols {
        if owner[c] == 0 {
            continue;
        }
        let (t, o) = if transpose { (c - 1, owner[c] - 1) } else { (owner[c] - 1, c - 1) };
        if !grid.cell(t, o).is_phi() {
            matches.push((t, o));
        }
    }
    matches.sort_unstable();
    classify_leftovers(grid, matches)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint<T> {
    pub frame: usize,
    pub centroid: (T, T),
    pub bbox: Rect,
}

#[derive(Debug, Clone)]
pub struct Track<T> {
    pub id: u64,
    pub feature: ObjectFeature<T>,
    pub kalman: KalmanState<T>,
    pub trajectory: Vec<TrajectoryPoint<T>>,
    /// Consecutive frames without a matched object.
    pub missed: usize,
    /// Frames since creation.
    pub age: usize,
}

impl<T: Scalar> Track<T> {
    fn record(&mut self, frame: usize) {
        self.trajectory.push(TrajectoryPoint {
            frame,
            centroid: self.feature.centroid,
            bbox: self.feature.bbox,
        });
    }
}

/// Snapshot of a live track after a frame has been processed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackReport<T> {
    pub id: u64,
    /// `(row, col)`.
    pub centroid: (T, T),
    pub bbox: Rect,
    pub missed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTracks<T> {
    pub frame: usize,
    pub tracks: Vec<TrackReport<T>>,
}

/// Per-frame outcome of [`Tracker::step`], for inspection and tests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepSummary {
    pub matched: Vec<(u64, usize)>,
    pub spawned: Vec<u64>,
    pub discarded: Vec<usize>,
    pub coasting: Vec<u64>,
    pub retired: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Tracker<T> {
    config: TrackerConfig,
    tracks: Vec<Track<T>>,
    retired: Vec<Track<T>>,
    next_id: u64,
    started: bool,
    last: StepSummary,
}

impl<T: Scalar> Tracker<T> {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            config,
            tracks: Vec::new(),
            retired: Vec::new(),
            next_id: 1,
            started: false,
            last: StepSummary::default(),
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live tracks in ascending id order.
    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    pub fn retired(&self) -> &[Track<T>] {
        &self.retired
    }

    pub fn last_step(&self) -> &StepSummary {
        &self.last
    }

    fn spawn(&mut self, object: ObjectFeature<T>, frame: usize) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let kalman = KalmanState::init(object.centroid, &self.config.kalman);
        let mut track = Track {
            id,
            feature: object,
            kalman,
            trajectory: Vec::new(),
            missed: 0,
            age: 0,
        };
        track.record(frame);
        self.tracks.push(track);
        id
    }

    /// Advance every track by one frame using this frame's detected objects.
    pub fn step(&mut self, objects: Vec<ObjectFeature<T>>, frame: usize) -> FrameTracks<T> {
        let mut summary = StepSummary::default();

        if !self.started {
            if !objects.is_empty() {
                self.started = true;
                for object in objects {
                    let id = self.spawn(object, frame);
                    summary.spawned.push(id);
                }
            }
            self.last = summary;
            return self.report(frame);
        }

        let features: Vec<ObjectFeature<T>> = self.tracks.iter().map(|t| t.feature.clone()).collect();
        let grid = cost_matrix(&features, &objects, &self.config);
        let result = match self.config.assignment {
            AssignmentMode::Greedy => assign(&grid),
            AssignmentMode::Optimal => assign_optimal(&grid),
        };

        let mut matched_object: Vec<Option<usize>> = vec![None; self.tracks.len()];
        for &(t, o) in &result.matches {
            matched_object[t] = Some(o);
        }

        for (track, m) in self.tracks.iter_mut().zip(&matched_object) {
            track.kalman.predict();
            track.age += 1;
            match m {
                Some(o) => {
                    let object = objects[*o].clone();
                    // Innovation covariance is positive definite for positive R.
                    let _ = track.kalman.correct(object.centroid);
                    track.feature = object;
                    track.missed = 0;
                    summary.matched.push((track.id, *o));
                }
                None => {
                    let (r, c) = track.kalman.position();
                    track.feature.centroid = (r, c);
                    track.feature.bbox = Rect::centered_at(
                        r.as_f64(),
                        c.as_f64(),
                        track.feature.bbox.w,
                        track.feature.bbox.h,
                    );
                    track.missed += 1;
                    summary.coasting.push(track.id);
                }
            }
            track.record(frame);
        }

        let max_missed = self.config.max_missed;
        let (keep, gone): (Vec<_>, Vec<_>) = std::mem::take(&mut self.tracks)
            .into_iter()
            .partition(|t| t.missed <= max_missed);
        self.tracks = keep;
        summary.retired = gone.iter().map(|t| t.id).collect();
        summary.coasting.retain(|id| !summary.retired.contains(id));
        self.retired.extend(gone);

        let mut objects: Vec<Option<ObjectFeature<T>>> = objects.into_iter().map(Some).collect();
        for &o in &result.new_objects {
            if let Some(object) = objects[o].take() {
                let id = self.spawn(object, frame);
                summary.spawned.push(id);
            }
        }
        summary.discarded = result.discarded_objects;
        self.last = summary;
        self.report(frame)
    }

    pub fn report(&self, frame: usize) -> FrameTracks<T> {
        FrameTracks {
            frame,
            tracks: self
                .tracks
                .iter()
                .map(|t| TrackReport {
                    id: t.id,
                    centroid: t.feature.centroid,
                    bbox: t.feature.bbox,
                    missed: t.missed,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature(row: f64, col: f64, w: i32, h: i32, hist: [f64; 4]) -> ObjectFeature<f64> {
        let bbox = Rect::centered_at(row, col, w, h);
        ObjectFeature {
            centroid: (row, col),
            bbox,
            hist,
        }
    }

    const FLAT: [f64; 4] = [25.0, 25.0, 25.0, 25.0];

    #[test]
    fn identical_features_cost_zero() {
        let f = feature(50.0, 50.0, 20, 20, FLAT);
        let grid = cost_matrix(&[f.clone()], &[f], &TrackerConfig::default());
        assert_eq!(*grid.cell(0, 0), CostCell::finite(0, 0.0));
    }

    #[test]
    fn distance_gate() {
        let t = feature(50.0, 50.0, 20, 10, FLAT);
        let far = feature(50.0, 61.0, 20, 10, FLAT);
        let grid = cost_matrix(&[t.clone()], &[far], &TrackerConfig::default());
        assert!(grid.cell(0, 0).is_phi());
        assert_eq!(grid.cell(0, 0).object_no(), -1);
        assert_eq!(grid.cell(0, 0).cost, 1e9);
        let near = feature(50.0, 60.0, 20, 10, FLAT);
        let grid = cost_matrix(&[t], &[near], &TrackerConfig::default());
        assert!(!grid.cell(0, 0).is_phi());
    }

    #[test]
    fn size_gate_is_strict() {
        let t = feature(50.0, 50.0, 20, 20, FLAT);
        let grown = feature(50.0, 50.0, 25, 20, FLAT);
        let grid = cost_matrix(&[t.clone()], &[grown], &TrackerConfig::default());
        assert!(grid.cell(0, 0).is_phi());
        let slightly = feature(50.0, 50.0, 24, 16, FLAT);
        let grid = cost_matrix(&[t], &[slightly], &TrackerConfig::default());
        assert!(!grid.cell(0, 0).is_phi());
    }

    #[test]
    fn empty_objects_leave_tracks_unassigned() {
        let grid = CostGrid::<f64>::from_cells(2, 0, vec![]).unwrap();
        let a = assign(&grid);
        assert_eq!(a.unassigned_tracks, vec![0, 1]);
        assert!(a.matches.is_empty());
    }

    #[test]
    fn lower_track_wins_contested_object() {
        let grid = CostGrid::from_cells(2, 1, vec![CostCell::finite(0, 3.0), CostCell::finite(0, 1.0)]).unwrap();
        let a = assign(&grid);
        assert_eq!(a.matches, vec![(0, 0)]);
        assert_eq!(a.unassigned_tracks, vec![1]);
        assert!(a.discarded_objects.is_empty());
        assert!(a.new_objects.is_empty());
    }

    #[test]
    fn discarded_versus_new() {
        // Object 1 resembles track 0 but loses to object 0; object 2 resembles nothing.
        let phi = CostCell::phi(1e9);
        let grid = CostGrid::from_cells(1, 3, vec![CostCell::finite(0, 1.0), CostCell::finite(1, 2.0), phi]).unwrap();
        let a = assign(&grid);
        assert_eq!(a.matches, vec![(0, 0)]);
        assert_eq!(a.discarded_objects, vec![1]);
        assert_eq!(a.new_objects, vec![2]);
    }

    #[test]
    fn optimal_beats_greedy_when_it_should() {
        // Greedy: track 0 takes object 0 (1), track 1 takes object 1 (10) = 11.
        // Optimal: track 0 -> object 1 (2), track 1 -> object 0 (2) = 4.
        let grid = CostGrid::from_cells(
            2,
            2,
            vec![
                CostCell::finite(0, 1.0),
                CostCell::finite(1, 2.0),
                CostCell::finite(0, 2.0),
                CostCell::finite(1, 10.0),
            ],
        )
        .unwrap();
        assert_eq!(assign(&grid).matches, vec![(0, 0), (1, 1)]);
        assert_eq!(assign_optimal(&grid).matches, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn optimal_skips_phi_pairs() {
        let phi = CostCell::phi(1e9);
        let grid = CostGrid::from_cells(3, 2, vec![phi, phi, phi, CostCell::finite(1, 4.0), phi, phi]).unwrap();
        let a = assign_optimal(&grid);
        assert_eq!(a.matches, vec![(1, 1)]);
        assert_eq!(a.unassigned_tracks, vec![0, 2]);
        assert_eq!(a.new_objects, vec![0]);
    }

    #[test]
    fn first_frame_seeds_tracks() {
        let mut tracker = Tracker::<f64>::new(TrackerConfig::default());
        let out = tracker.step(
            vec![feature(20.0, 20.0, 10, 10, FLAT), feature(60.0, 60.0, 10, 10, FLAT)],
            6,
        );
        let ids: Vec<u64> = out.tracks.iter().map(|t| t.id).collect();
        assert_eq!(ids, vec![1, 2]);
        for t in tracker.tracks() {
            assert_eq!(t.kalman.velocity(), (0.0, 0.0));
        }
    }

    #[test]
    fn retirement_after_max_missed() {
        let cfg = TrackerConfig {
            max_missed: 3,
            ..TrackerConfig::default()
        };
        let mut tracker = Tracker::<f64>::new(cfg);
        tracker.step(vec![feature(20.0, 20.0, 10, 10, FLAT)], 0);
        for f in 1..=3 {
            tracker.step(vec![], f);
            assert_eq!(tracker.tracks().len(), 1);
        }
        tracker.step(vec![], 4);
        assert!(tracker.tracks().is_empty());
        assert_eq!(tracker.last_step().retired, vec![1]);
        let out = tracker.step(vec![feature(20.0, 20.0, 10, 10, FLAT)], 5);
        assert_eq!(out.tracks[0].id, 2);
    }
}
