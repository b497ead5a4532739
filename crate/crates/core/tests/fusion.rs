mod common;

use proptest::prelude::*;

use stblob::blob_extract::{extract_blobs, fuse_energy, population_std, EnergyFrame};
use stblob::gabor_bank::EnergyStack;
use stblob::grid::Grid;

const W: usize = 12;
const H: usize = 10;

fn energy_value() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 4 => 0.0..500.0f64]
}

fn stack() -> impl Strategy<Value = Vec<Grid<f64>>> {
    prop::collection::vec(prop::collection::vec(energy_value(), W * H), 9)
        .prop_map(|maps| maps.into_iter().map(|m| Grid::from_vec(W, H, m).unwrap()).collect())
}

fn fuse(maps: &[Grid<f64>]) -> Grid<f64> {
    fuse_energy(&EnergyStack {
        maps: maps.to_vec(),
        target: 0,
    })
    .unwrap()
    .grid
}

proptest! {
    #[test]
    fn fused_value_within_pixel_range(maps in stack()) {
        let fused = fuse(&maps);
        for y in 0..H {
            for x in 0..W {
                let v = fused.get(x, y);
                if v != 0.0 {
                    let lo = maps.iter().map(|m| m.get(x, y)).fold(f64::INFINITY, f64::min);
                    let hi = maps.iter().map(|m| m.get(x, y)).fold(0.0, f64::max);
                    prop_assert!(v >= lo && v <= hi);
                }
            }
        }
    }

    #[test]
    fn fusion_commutes_with_scaling(maps in stack(), k in 0.5..8.0f64) {
        let scaled: Vec<Grid<f64>> = maps.iter().map(|m| m.map(|v| v * k)).collect();
        let a = fuse(&maps);
        let b = fuse(&scaled);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x * k - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }

    #[test]
    fn matches_reference_rule(maps in stack()) {
        prop_assert_eq!(fuse(&maps), common::selective_average_oracle(&maps));
    }

    #[test]
    fn kept_pixels_have_a_majority(maps in stack()) {
        let fused = fuse(&maps);
        let sigma: Vec<f64> = maps.iter().map(|m| population_std(m.as_slice())).collect();
        for y in 0..H {
            for x in 0..W {
                let accepted = maps
                    .iter()
                    .zip(&sigma)
                    .filter(|(m, &s)| m.get(x, y) > 0.0 && m.get(x, y) >= s)
                    .count();
                prop_assert_eq!(fused.get(x, y) != 0.0, accepted >= 5);
            }
        }
    }

    #[test]
    fn blobs_are_disjoint_nonzero_regions(
        cells in prop::collection::vec(prop_oneof![2 => Just(0.0), 1 => 1.0..10.0f64], 30 * 24),
        min_area in 1usize..12,
    ) {
        let energy = EnergyFrame { grid: Grid::from_vec(30, 24, cells).unwrap(), target: 0 };
        let blobs = extract_blobs(&energy, min_area);
        let mut owner = vec![usize::MAX; 30 * 24];
        for (i, b) in blobs.iter().enumerate() {
            prop_assert!(b.area >= min_area);
            prop_assert_eq!(b.area, b.pixels.len());
            for &(x, y) in &b.pixels {
                prop_assert!(energy.grid.get(x, y) != 0.0);
                prop_assert_eq!(owner[y * 30 + x], usize::MAX);
                owner[y * 30 + x] = i;
            }
        }
        let corners: Vec<(i32, i32)> = blobs.iter().map(|b| (b.bbox.y, b.bbox.x)).collect();
        let mut sorted = corners.clone();
        sorted.sort();
        prop_assert_eq!(corners, sorted);
    }
}

#[test]
fn diagonal_neighbours_join() {
    let mut g = Grid::filled(8, 8, 0.0);
    for i in 0..5 {
        g.set(i, i, 1.0);
        g.set(i + 1, i, 1.0);
    }
    let blobs = extract_blobs(&EnergyFrame { grid: g, target: 0 }, 1);
    assert_eq!(blobs.len(), 1);
    assert_eq!(blobs[0].area, 10);
}

#[test]
fn small_blobs_are_dropped() {
    let mut g = Grid::filled(20, 20, 0.0);
    for y in 0..3 {
        for x in 0..3 {
            g.set(x, y, 1.0);
            g.set(x + 10, y + 10, 1.0);
        }
    }
    g.set(13, 10, 1.0);
    let blobs = extract_blobs(&EnergyFrame { grid: g, target: 0 }, 10);
    assert_eq!(blobs.len(), 1);
    assert_eq!(blobs[0].bbox.x, 10);
}
