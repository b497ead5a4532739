//! Fixtures and independent reference implementations shared by the
//! integration tests.

#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stblob::blob_merge::{ObjectFeature, WeightMatrix};
use stblob::gabor_bank::GaborParams;
use stblob::grid::Grid;
use stblob::sequence_io::FrameGrid;
use stblob::Rect;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pairwise blob distances of the seven-blob example, as printed (not quite symmetric).
pub const BLOB_DISTANCES: [[f64; 7]; 7] = [
    [0.0, 15.65, 72.56, 98.60, 73.79, 87.21, 126.02],
    [15.65, 0.0, 65.19, 84.40, 61.98, 75.27, 119.60],
    [72.56, 65.19, 0.0, 55.08, 24.73, 30.59, 54.45],
    [98.59, 84.40, 55.08, 0.0, 32.28, 25.17, 80.28],
    [73.79, 61.98, 24.73, 32.28, 0.0, 13.41, 67.53],
    [87.20, 75.27, 30.59, 25.17, 13.41, 0.0, 60.60],
    [126.01, 119.60, 54.45, 80.28, 67.53, 60.60, 0.0],
];

/// Planar `(row, col)` points whose distances reproduce [`BLOB_DISTANCES`] to within 0.01.
pub const BLOB_CENTROIDS: [(f64, f64); 7] = [
    (69.833, 135.922),
    (56.237, 128.17),
    (64.751, 63.539),
    (10.0, 57.561),
    (40.468, 68.226),
    (35.123, 55.923),
    (74.671, 10.0),
];

/// Expected tree over the seven blobs, 0-based, `i < j`.
pub const BLOB_TREE: [(usize, usize); 6] = [(0, 1), (1, 4), (2, 4), (2, 6), (3, 5), (4, 5)];
pub const BLOB_CUT: [(usize, usize); 2] = [(1, 4), (2, 6)];

pub fn blob_distance_matrix() -> WeightMatrix<f64> {
    let rows: Vec<Vec<f64>> = BLOB_DISTANCES.iter().map(|r| r.to_vec()).collect();
    WeightMatrix::from_rows(&rows).unwrap()
}

/// Total weight of the lightest spanning tree by trying every edge subset.
pub fn brute_force_mst_weight(w: &WeightMatrix<f64>) -> f64 {
    let n = w.size();
    if n < 2 {
        return 0.0;
    }
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << edges.len()) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(p: &mut [usize], mut a: usize) -> usize {
            while p[a] != a {
                a = p[a];
            }
            a
        }
        let mut total = 0.0;
        let mut tree = true;
        for (k, &(i, j)) in edges.iter().enumerate() {
            if mask & (1 << k) == 0 {
                continue;
            }
            let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
            if ri == rj {
                tree = false;
                break;
            }
            parent[ri] = rj;
            total += w.get(i, j);
        }
        if tree && total < best {
            best = total;
        }
    }
    best
}

/// Per-pixel selective average written from the rule alone.
pub fn selective_average_oracle(maps: &[Grid<f64>]) -> Grid<f64> {
    let sigma: Vec<f64> = maps
        .iter()
        .map(|m| {
            let v = m.as_slice();
            let n = v.len() as f64;
            let mut s = 0.0;
            for &x in v {
                s += x;
            }
            let mean = s / n;
            let mut q = 0.0;
            for &x in v {
                q += (x - mean) * (x - mean);
            }
            (q / n).sqrt()
        })
        .collect();
    let (w, h) = maps[0].dims();
    Grid::from_fn(w, h, |x, y| {
        let mut keep = Vec::new();
        for (m, &s) in maps.iter().zip(&sigma) {
            let e = m.get(x, y);
            if e > 0.0 && e >= s {
                keep.push(e);
            }
        }
        if keep.len() * 2 > maps.len() {
            let mut total = 0.0;
            for e in &keep {
                total += e;
            }
            total / keep.len() as f64
        } else {
            0.0
        }
    })
}

/// Quadrature responses by the textbook triple sum, with taps computed from
/// the closed form and edge-replicated borders.
pub fn gabor_oracle(volume: &[Grid<f64>], p: &GaborParams<f64>) -> (Grid<f64>, Grid<f64>) {
    let (w, h) = volume[0].dims();
    let rs = (p.spatial_extent / 2) as isize;
    let rt = (p.temporal_extent / 2) as isize;
    let k = 1.0 / ((2.0 * std::f64::consts::PI).powf(1.5) * p.sigma_x * p.sigma_y * p.sigma_t);
    let (fx, fy) = (p.omega * p.theta.to_radians().cos(), p.omega * p.theta.to_radians().sin());
    let mut odd = Grid::filled(w, h, 0.0);
    let mut even = Grid::filled(w, h, 0.0);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut so, mut se) = (0.0, 0.0);
            for t in -rt..=rt {
                for v in -rs..=rs {
                    for u in -rs..=rs {
                        let (uf, vf, tf) = (u as f64, v as f64, t as f64);
                        let env = k * (-0.5
                            * (uf * uf / (p.sigma_x * p.sigma_x)
                                + vf * vf / (p.sigma_y * p.sigma_y)
                                + tf * tf / (p.sigma_t * p.sigma_t)))
                            .exp();
                        let ph = 2.0 * std::f64::consts::PI * (fx * uf + fy * vf + p.omega_t0 * tf);
                        let sx = (x - u).clamp(0, w as isize - 1) as usize;
                        let sy = (y - v).clamp(0, h as isize - 1) as usize;
                        let s = volume[(rt - t) as usize].get(sx, sy);
                        so += s * env * ph.sin();
                        se += s * env * ph.cos();
                    }
                }
            }
            odd.set(x as usize, y as usize, so);
            even.set(x as usize, y as usize, se);
        }
    }
    (odd, even)
}

pub fn max_relative_error(a: &Grid<f64>, b: &Grid<f64>) -> f64 {
    let scale = b.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

pub fn random_volume(rng: &mut impl Rng, w: usize, h: usize, depth: usize) -> Vec<Grid<f64>> {
    (0..depth)
        .map(|_| Grid::from_fn(w, h, |_, _| rng.random_range(0.0..255.0)))
        .collect()
}

/// Frames of a drifting cosine `offset + amp·cos(2π(fx·x + fy·y + ft·t) + phase)`.
pub fn drifting_sinusoid(
    w: usize,
    h: usize,
    depth: usize,
    freq: (f64, f64, f64),
    amp: f64,
    offset: f64,
    phase: f64,
) -> Vec<Grid<f64>> {
    (0..depth)
        .map(|t| {
            Grid::from_fn(w, h, |x, y| {
                let a = 2.0 * std::f64::consts::PI * (freq.0 * x as f64 + freq.1 * y as f64 + freq.2 * t as f64);
                offset + amp * (a + phase).cos()
            })
        })
        .collect()
}

pub fn interior_mean(g: &Grid<f64>, margin: usize) -> f64 {
    let (w, h) = g.dims();
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in margin..h - margin {
        for x in margin..w - margin {
            sum += g.get(x, y);
            n += 1;
        }
    }
    sum / n as f64
}

pub fn flat_frame(index: usize, w: usize, h: usize, value: u8) -> FrameGrid {
    FrameGrid::new(index, Grid::filled(w, h, value))
}

/// Object with a `w`×`h` box centred on `(row, col)`.
pub fn feature(row: f64, col: f64, w: i32, h: i32, hist: [f64; 4]) -> ObjectFeature<f64> {
    ObjectFeature {
        centroid: (row, col),
        bbox: Rect::centered_at(row, col, w, h),
        hist,
    }
}

/// Histogram `[10+a, 10+b, 40-a, 40-b]`; the cost between two of these is `(|Δa| + |Δb|) / 2`.
pub fn hist_ab(a: f64, b: f64) -> [f64; 4] {
    [10.0 + a, 10.0 + b, 40.0 - a, 40.0 - b]
}

/// Constant-velocity filter written with nalgebra.
pub struct KalmanOracle {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
    a: Matrix4<f64>,
    h: Matrix2x4<f64>,
    q: Matrix4<f64>,
    r: Matrix2<f64>,
}

impl KalmanOracle {
    pub fn new(pos: (f64, f64), p0: f64, q: f64, r: f64) -> Self {
        Self {
            x: Vector4::new(pos.0, pos.1, 0.0, 0.0),
            p: Matrix4::identity() * p0,
            a: Matrix4::new(
                1.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 0.0, 1.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ),
            h: Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0),
            q: Matrix4::identity() * q,
            r: Matrix2::identity() * r,
        }
    }

    pub fn predict(&mut self) {
        self.x = self.a * self.x;
        self.p = self.a * self.p * self.a.transpose() + self.q;
    }

    pub fn correct(&mut self, z: (f64, f64)) {
        let s = self.h * self.p * self.h.transpose() + self.r;
        let k = self.p * self.h.transpose() * s.try_inverse().unwrap();
        self.x += k * (Vector2::new(z.0, z.1) - self.h * self.x);
        self.p = (Matrix4::identity() - k * self.h) * self.p;
    }
}

pub fn min_eigenvalue(p: &[[f64; 4]; 4]) -> f64 {
    let m = Matrix4::from_fn(|i, j| p[i][j]);
    m.symmetric_eigen().eigenvalues.min()
}
