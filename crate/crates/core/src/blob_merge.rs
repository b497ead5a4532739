//! Grouping blob fragments into objects with a thresholded minimum spanning tree.

use serde::{Deserialize, Serialize};

use crate::blob_extract::Blob;
use crate::error::{Error, Result};
use crate::rect::Rect;
use crate::scalar::Scalar;
use crate::sequence_io::FrameGrid;

/// Symmetric matrix of pairwise centroid distances.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T> {
    size: usize,
    data: Vec<T>,
}

impl<T: Scalar> WeightMatrix<T> {
    /// Euclidean distances between `(row, col)` points.
    pub fn from_points(points: &[(T, T)]) -> Self {
        let size = points.len();
        let mut data = vec![T::zero(); size * size];
        for i in 0..size {
            for j in (i + 1)..size {
                let dr = points[i].0 - points[j].0;
                let dc = points[i].1 - points[j].1;
                let d = (dr * dr + dc * dc).sqrt();
                data[i * size + j] = d;
                data[j * size + i] = d;
            }
        }
        Self { size, data }
    }

    /// Square matrix given row by row. Off-diagonal pairs are averaged so the
    /// result is exactly symmetric.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::Shape("weight matrix must be square".into()));
        }
        let half = T::lit(0.5);
        let mut data = vec![T::zero(); size * size];
        for i in 0..size {
            for j in 0..size {
                if i != j {
                    let v = (rows[i][j] + rows[j][i]) * half;
                    if v < T::zero() || !v.is_finite() {
                        return Err(Error::Shape(format!("invalid weight at ({i}, {j})")));
                    }
                    data[i * size + j] = v;
                }
            }
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.size + j]
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }
}

pub fn weight_matrix<T: Scalar>(blobs: &[Blob<T>]) -> WeightMatrix<T> {
    let points: Vec<(T, T)> = blobs.iter().map(|b| b.centroid).collect();
    WeightMatrix::from_points(&points)
}

#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    /// Returns false when both nodes were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] = self.rank[ra].saturating_add(1);
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge<T> {
    pub i: usize,
    pub j: usize,
    pub weight: T,
}

/// Kruskal's algorithm over the complete graph of `w`.
///
/// Edges are considered in `(weight, i, j)` order with `i < j`, which fixes
/// the tree when weights tie.
pub fn kruskal_mst<T: Scalar>(w: &WeightMatrix<T>) -> Vec<MstEdge<T>> {
    let n = w.size();
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push(MstEdge { i, j, weight: w.get(i, j) });
        }
    }
    edges.sort_by(|a, b| {
        a.weight
            .partial_cmp(&b.weight)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });

    let mut sets = DisjointSet::new(n);
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for e in edges {
        if sets.union(e.i, e.j) {
            tree.push(e);
            if tree.len() + 1 == n {
                break;
            }
        }
    }
    tree
}

/// How the edge-cut threshold is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Mean plus population std of the tree's own edge weights.
    #[default]
    MstMeanStd,
    /// Mean plus population std over every entry of the weight matrix.
    MatrixMeanStd,
    /// Mean over every entry of the weight matrix.
    MatrixMean,
}

fn mean_std<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> (T, T) {
    let n = values.clone().count();
    if n == 0 {
        return (T::zero(), T::zero());
    }
    let nt = T::from_count(n);
    let mean = values.clone().fold(T::zero(), |a, v| a + v) / nt;
    let var = values.fold(T::zero(), |a, v| a + (v - mean) * (v - mean)) / nt;
    (mean, var.sqrt())
}

pub fn cut_threshold<T: Scalar>(rule: ThresholdRule, w: &WeightMatrix<T>, mst: &[MstEdge<T>]) -> T {
    match rule {
        ThresholdRule::MstMeanStd => {
            let (m, s) = mean_std(mst.iter().map(|e| e.weight));
            m + s
        }
        ThresholdRule::MatrixMeanStd => {
            let (m, s) = mean_std(w.values().iter().copied());
            m + s
        }
        ThresholdRule::MatrixMean => mean_std(w.values().iter().copied()).0,
    }
}

/// Drop tree edges heavier than `threshold`; the remaining components are the
/// clusters. Each cluster lists its nodes ascending; clusters are ordered by
/// their smallest node.
pub fn cut_and_cluster<T: Scalar>(mst: &[MstEdge<T>], node_count: usize, threshold: T) -> Vec<Vec<usize>> {
    let mut sets = DisjointSet::new(node_count);
    for e in mst.iter().filter(|e| e.weight <= threshold) {
        sets.union(e.i, e.j);
    }
    let mut by_root: Vec<Option<usize>> = vec![None; node_count];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for node in 0..node_count {
        let root = sets.find(node);
        match by_root[root] {
            Some(c) => clusters[c].push(node),
            None => {
                by_root[root] = Some(clusters.len());
                clusters.push(vec![node]);
            }
        }
    }
    clusters
}

pub fn cluster_area<T>(cluster: &[usize], blobs: &[Blob<T>]) -> usize {
    cluster.iter().map(|&i| blobs[i].area).sum()
}

/// Remove clusters whose pixel area is below a third of the largest.
pub fn prune_clusters<T>(clusters: Vec<Vec<usize>>, blobs: &[Blob<T>]) -> Vec<Vec<usize>> {
    let max_area = clusters
        .iter()
        .map(|c| cluster_area(c, blobs))
        .max()
        .unwrap_or(0);
    clusters
        .into_iter()
        .filter(|c| 3 * cluster_area(c, blobs) >= max_area)
        .collect()
}

pub const HIST_BINS: usize = 4;

/// Features describing one detected object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectFeature<T> {
    /// Box center as `(row, col)`.
    pub centroid: (T, T),
    pub bbox: Rect,
    /// Gray-level histogram in percent over `[0,64)`, `[64,128)`, `[128,192)`, `[192,256)`.
    pub hist: [T; HIST_BINS],
}

impl<T: Scalar> ObjectFeature<T> {
    pub fn height(&self) -> T {
        T::lit(f64::from(self.bbox.h))
    }

    pub fn width(&self) -> T {
        T::lit(f64::from(self.bbox.w))
    }
}

/// Percent histogram of `frame` inside `bbox` (clipped to the frame).
pub fn gray_histogram<T: Scalar>(frame: &FrameGrid, bbox: &Rect) -> [T; HIST_BINS] {
    let mut counts = [0usize; HIST_BINS];
    let x0 = bbox.x.max(0) as usize;
    let y0 = bbox.y.max(0) as usize;
    let x1 = (bbox.right().max(0) as usize).min(frame.width());
    let y1 = (bbox.bottom().max(0) as usize).min(frame.height());
    for y in y0..y1 {
        for x in x0..x1 {
            counts[frame.pixels.get(x, y) as usize / 64] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let mut hist = [T::zero(); HIST_BINS];
    if total > 0 {
        let scale = T::lit(100.0) / T::from_count(total);
        for (h, &c) in hist.iter_mut().zip(&counts) {
            *h = T::from_count(c) * scale;
        }
    }
    hist
}

pub fn make_object<T: Scalar>(cluster: &[usize], blobs: &[Blob<T>], frame: &FrameGrid) -> ObjectFeature<T> {
    let bbox = cluster
        .iter()
        .map(|&i| blobs[i].bbox)
        .reduce(|a, b| a.hull(&b))
        .unwrap_or(Rect::new(0, 0, 0, 0));
    let (r, c) = bbox.center();
    ObjectFeature {
        centroid: (T::lit(r), T::lit(c)),
        bbox,
        hist: gray_histogram(frame, &bbox),
    }
}

/// Blobs of one frame to objects: tree, cut, prune, describe.
pub fn merge_blobs<T: Scalar>(blobs: &[Blob<T>], frame: &FrameGrid, rule: ThresholdRule) -> Vec<ObjectFeature<T>> {
    if blobs.is_empty() {
        return Vec::new();
    }
    let w = weight_matrix(blobs);
    let mst = kruskal_mst(&w);
    let threshold = cut_threshold(rule, &w, &mst);
    let clusters = prune_clusters(cut_and_cluster(&mst, blobs.len(), threshold), blobs);
    clusters.iter().map(|c| make_object(c, blobs, frame)).collect()
}
