//! Selective-average fusion of the energy stack and connected blob extraction.

use crate::error::{Error, Result};
use crate::gabor_bank::EnergyStack;
use crate::grid::Grid;
use crate::rect::Rect;
use crate::scalar::Scalar;

/// Fused energy for one target frame. Zero marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyFrame<T> {
    pub grid: Grid<T>,
    pub target: usize,
}

/// Population standard deviation over every value, zeros included.
pub fn population_std<T: Scalar>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let n = T::from_count(values.len());
    let mut sum = T::zero();
    for &v in values {
        sum += v;
    }
    let mean = sum / n;
    let mut sq = T::zero();
    for &v in values {
        let d = v - mean;
        sq += d * d;
    }
    (sq / n).sqrt()
}

/// Fuse the energy maps with the selective-average rule.
///
/// A value `e_n` is kept when `e_n >= σ(E_n)`; a kept value of exactly zero
/// still counts as rejected. A pixel takes the mean of its kept values when
/// they outnumber the rejected ones, and zero otherwise.
pub fn fuse_energy<T: Scalar>(stack: &EnergyStack<T>) -> Result<EnergyFrame<T>> {
    fuse_maps(&stack.maps, stack.target, Some(9))
}

/// [`fuse_energy`] for any bank size. With an even bank, ties map to zero.
pub fn fuse_maps<T: Scalar>(
    maps: &[Grid<T>],
    target: usize,
    expected: Option<usize>,
) -> Result<EnergyFrame<T>> {
    if let Some(n) = expected {
        if maps.len() != n {
            return Err(Error::Shape(format!("expected {n} energy maps, got {}", maps.len())));
        }
    }
    let Some(first) = maps.first() else {
        return Err(Error::Shape("no energy maps".into()));
    };
    if maps.iter().any(|m| !m.same_shape(first)) {
        return Err(Error::Shape("energy maps differ in size".into()));
    }

    let thresholds: Vec<T> = maps.iter().map(|m| population_std(m.as_slice())).collect();
    let (w, h) = first.dims();
    let mut out = Grid::filled(w, h, T::zero());
    let slices: Vec<&[T]> = maps.iter().map(|m| m.as_slice()).collect();
    for (p, dst) in out.as_mut_slice().iter_mut().enumerate() {
        let mut accepted = 0usize;
        let mut sum = T::zero();
        for (map, &sigma) in slices.iter().zip(&thresholds) {
            let e = map[p];
            if e >= sigma && e > T::zero() {
                accepted += 1;
                sum += e;
            }
        }
        let rejected = maps.len() - accepted;
        if accepted > rejected {
            *dst = sum / T::from_count(accepted);
        }
    }
    Ok(EnergyFrame { grid: out, target })
}

/// Connected region of nonzero fused energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob<T> {
    /// Member pixels as `(x, y)`.
    pub pixels: Vec<(usize, usize)>,
    /// Mean pixel position as `(row, col)`.
    pub centroid: (T, T),
    pub area: usize,
    pub bbox: Rect,
}

impl<T: Scalar> Blob<T> {
    pub fn from_pixels(pixels: Vec<(usize, usize)>) -> Self {
        let n = T::from_count(pixels.len().max(1));
        let (mut sr, mut sc) = (T::zero(), T::zero());
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &(x, y) in &pixels {
            sr += T::from_count(y);
            sc += T::from_count(x);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let bbox = if pixels.is_empty() {
            Rect::new(0, 0, 0, 0)
        } else {
            Rect::new(x0 as i32, y0 as i32, (x1 - x0 + 1) as i32, (y1 - y0 + 1) as i32)
        };
        Self {
            area: pixels.len(),
            centroid: (sr / n, sc / n),
            bbox,
            pixels,
        }
    }
}

pub const DEFAULT_MIN_BLOB_AREA: usize = 9;

/// 8-connected components of nonzero pixels, dropping those smaller than
/// `min_blob_area`, ordered by the (top, left) corner of their boxes.
pub fn extract_blobs<T: Scalar>(energy: &EnergyFrame<T>, min_blob_area: usize) -> Vec<Blob<T>> {
    let grid = &energy.grid;
    let (w, h) = grid.dims();
    let mut seen = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();

    for start in 0..w * h {
        if seen[start] || grid.as_slice()[start] == T::zero() {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            pixels.push((x, y));
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if !seen[q] && grid.as_slice()[q] != T::zero() {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if pixels.len() >= min_blob_area {
            pixels.sort_by_key(|&(x, y)| (y, x));
            blobs.push(Blob::from_pixels(pixels));
        }
    }
    blobs.sort_by_key(|b| (b.bbox.y, b.bbox.x));
    blobs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_with(w: usize, h: usize, on: &[(usize, usize)]) -> EnergyFrame<f64> {
        let mut g = Grid::filled(w, h, 0.0);
        for &(x, y) in on {
            g.set(x, y, 1.0);
        }
        EnergyFrame { grid: g, target: 0 }
    }

    fn square(x0: usize, y0: usize, side: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                v.push((x, y));
            }
        }
        v
    }

    #[test]
    fn all_zero_stack_fuses_to_zero() {
        let stack = EnergyStack {
            maps: vec![Grid::filled(5, 4, 0.0f64); 9],
            target: 3,
        };
        let fused = fuse_energy(&stack).unwrap();
        assert!(fused.grid.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(fused.target, 3);
    }

    #[test]
    fn five_of_nine_accepted() {
        // Each map holds {e, 10 - e}: mean 5, population std exactly 5.
        let energies = [10.0, 10.0, 10.0, 10.0, 10.0, 0.0, 0.0, 0.0, 0.0];
        let maps: Vec<Grid<f64>> = energies
            .iter()
            .map(|&e| Grid::from_vec(2, 1, vec![e, 10.0 - e]).unwrap())
            .collect();
        for m in &maps {
            assert_eq!(population_std(m.as_slice()), 5.0);
        }
        let fused = fuse_maps(&maps, 0, Some(9)).unwrap();
        assert_eq!(fused.grid.get(0, 0), 10.0);
    }

    #[test]
    fn wrong_map_count() {
        let stack = EnergyStack {
            maps: vec![Grid::filled(2, 2, 0.0f64); 8],
            target: 0,
        };
        assert!(fuse_energy(&stack).is_err());
        let mut maps = vec![Grid::filled(2, 2, 0.0f64); 9];
        maps[4] = Grid::filled(3, 2, 0.0);
        assert!(fuse_maps(&maps, 0, Some(9)).is_err());
    }

    #[test]
    fn single_square_blob() {
        let f = frame_with(12, 12, &square(4, 4, 3));
        let blobs = extract_blobs(&f, 9);
        assert_eq!(blobs.len(), 1);
        assert_eq!(blobs[0].area, 9);
        assert_eq!(blobs[0].centroid, (5.0, 5.0));
        assert_eq!(blobs[0].bbox, Rect::new(4, 4, 3, 3));
    }

    #[test]
    fn separated_squares_are_two_blobs() {
        let mut on = square(0, 0, 3);
        on.extend(square(5, 0, 3));
        let blobs = extract_blobs(&frame_with(10, 4, &on), 9);
        assert_eq!(blobs.len(), 2);
        assert_eq!(blobs[0].bbox.x, 0);
        assert_eq!(blobs[1].bbox.x, 5);
    }

    #[test]
    fn diagonal_neighbours_connect() {
        let on = [(0, 0), (1, 1), (2, 2)];
        let blobs = extract_blobs(&frame_with(4, 4, &on), 1);
        assert_eq!(blobs.len(), 1);
        assert_eq!(blobs[0].area, 3);
    }

    #[test]
    fn small_components_dropped() {
        let mut on = square(0, 0, 3);
        on.push((8, 8));
        let blobs = extract_blobs(&frame_with(10, 10, &on), 9);
        assert_eq!(blobs.len(), 1);
    }
}
