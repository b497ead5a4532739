//! Three-dimensional Gabor energy filter bank.
//!
//! Each filter is a quadrature pair of Gaussian-windowed sinusoids over
//! `(x, y, t)` offsets, where `x` is the column, `y` the row and `t` the frame.
//! The sinusoid phase is `2π(ω_x0·x + ω_y0·y + ω_t0·t)` with
//! `ω_x0 = ω cos θ` and `ω_y0 = ω sin θ`; `θ` is measured from the column
//! axis towards the row axis.
//!
//! Two convolution paths exist. [`convolve_volume_direct`] is the plain
//! triple loop over the sampled taps. [`convolve_volume`] uses the fact that
//! the complex kernel `even + i·odd` factors into three 1D complex kernels, so
//! the block is filtered along `t`, then `x`, then `y`. Both use edge-replicate
//! padding in space and consume the whole block in time, so they agree up to
//! rounding.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;
use crate::sequence_io::STBlock;

/// Parameters of one filter pair. Frequencies are in cycles per pixel / frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborParams<T> {
    pub omega: T,
    /// Orientation in degrees.
    pub theta: T,
    pub omega_t0: T,
    pub sigma_x: T,
    pub sigma_y: T,
    pub sigma_t: T,
    pub spatial_extent: usize,
    pub temporal_extent: usize,
}

impl<T: Scalar> GaborParams<T> {
    pub fn omega_x0(&self) -> T {
        self.omega * self.theta.to_radians().cos()
    }

    pub fn omega_y0(&self) -> T {
        self.omega * self.theta.to_radians().sin()
    }

    /// `1 / ((2π)^{3/2} σx σy σt)`, the envelope peak.
    pub fn normalization(&self) -> T {
        let two_pi = T::TAU();
        T::one() / (two_pi.powf(T::lit(1.5)) * self.sigma_x * self.sigma_y * self.sigma_t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, ext) in [
            ("spatial_extent", self.spatial_extent),
            ("temporal_extent", self.temporal_extent),
        ] {
            if ext < 3 || ext % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd and >= 3, got {ext}")));
            }
        }
        for (name, s) in [
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
            ("sigma_t", self.sigma_t),
        ] {
            if !(s > T::zero()) || !s.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {s}")));
            }
        }
        if !self.omega.is_finite() || !self.theta.is_finite() || !self.omega_t0.is_finite() {
            return Err(Error::Config("filter frequencies must be finite".into()));
        }
        Ok(())
    }

    fn envelope(&self, x: T, y: T, t: T) -> T {
        let half = T::lit(0.5);
        let q = x * x / (self.sigma_x * self.sigma_x)
            + y * y / (self.sigma_y * self.sigma_y)
            + t * t / (self.sigma_t * self.sigma_t);
        self.normalization() * (-half * q).exp()
    }

    fn phase(&self, x: T, y: T, t: T) -> T {
        T::TAU() * (self.omega_x0() * x + self.omega_y0() * y + self.omega_t0 * t)
    }

    /// Odd-phase tap at integer offset `(x, y, t)` from the kernel center.
    pub fn odd_tap(&self, x: isize, y: isize, t: isize) -> T {
        let (x, y, t) = (T::lit(x as f64), T::lit(y as f64), T::lit(t as f64));
        self.envelope(x, y, t) * self.phase(x, y, t).sin()
    }

    /// Even-phase tap at integer offset `(x, y, t)` from the kernel center.
    pub fn even_tap(&self, x: isize, y: isize, t: isize) -> T {
        let (x, y, t) = (T::lit(x as f64), T::lit(y as f64), T::lit(t as f64));
        self.envelope(x, y, t) * self.phase(x, y, t).cos()
    }
}

/// Dense kernel over offsets `-r..=r` in each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel3<T> {
    spatial: usize,
    temporal: usize,
    taps: Vec<T>,
}

impl<T: Copy> Kernel3<T> {
    pub fn spatial_extent(&self) -> usize {
        self.spatial
    }

    pub fn temporal_extent(&self) -> usize {
        self.temporal
    }

    pub fn spatial_radius(&self) -> isize {
        (self.spatial / 2) as isize
    }

    pub fn temporal_radius(&self) -> isize {
        (self.temporal / 2) as isize
    }

    /// Tap at offset `(x, y, t)`; each offset must lie within the radius.
    #[inline]
    pub fn at(&self, x: isize, y: isize, t: isize) -> T {
        let rs = self.spatial_radius();
        let rt = self.temporal_radius();
        let s = self.spatial;
        let idx = (t + rt) as usize * s * s + (y + rs) as usize * s + (x + rs) as usize;
        self.taps[idx]
    }

    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    fn sample(spatial: usize, temporal: usize, f: impl Fn(isize, isize, isize) -> T) -> Self {
        let rs = (spatial / 2) as isize;
        let rt = (temporal / 2) as isize;
        let mut taps = Vec::with_capacity(spatial * spatial * temporal);
        for t in -rt..=rt {
            for y in -rs..=rs {
                for x in -rs..=rs {
                    taps.push(f(x, y, t));
                }
            }
        }
        Self {
            spatial,
            temporal,
            taps,
        }
    }
}

/// Odd and even kernels sampled from the same parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborPair<T> {
    pub params: GaborParams<T>,
    pub odd: Kernel3<T>,
    pub even: Kernel3<T>,
}

impl<T: Scalar> GaborPair<T> {
    pub fn new(params: GaborParams<T>) -> Result<Self> {
        params.validate()?;
        let (s, t) = (params.spatial_extent, params.temporal_extent);
        Ok(Self {
            odd: Kernel3::sample(s, t, |x, y, tt| params.odd_tap(x, y, tt)),
            even: Kernel3::sample(s, t, |x, y, tt| params.even_tap(x, y, tt)),
            params,
        })
    }

    /// 1D complex factors `(h_x, h_y, h_t)`; `h_t` carries the normalization.
    fn separable_factors(&self) -> (Vec<Complex<T>>, Vec<Complex<T>>, Vec<Complex<T>>) {
        let p = &self.params;
        let half = T::lit(0.5);
        let factor = |extent: usize, sigma: T, freq: T, scale: T| -> Vec<Complex<T>> {
            let r = (extent / 2) as isize;
            (-r..=r)
                .map(|o| {
                    let o = T::lit(o as f64);
                    let env = scale * (-half * o * o / (sigma * sigma)).exp();
                    Complex::from_polar(env, T::TAU() * freq * o)
                })
                .collect()
        };
        (
            factor(p.spatial_extent, p.sigma_x, p.omega_x0(), T::one()),
            factor(p.spatial_extent, p.sigma_y, p.omega_y0(), T::one()),
            factor(p.temporal_extent, p.sigma_t, p.omega_t0, p.normalization()),
        )
    }
}

/// Settings for building a bank; one pair per `(theta, omega_t0)` combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankSpec {
    pub omega: f64,
    pub thetas: Vec<f64>,
    pub omega_t0s: Vec<f64>,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_t: f64,
    pub spatial_extent: usize,
    pub temporal_extent: usize,
}

impl Default for BankSpec {
    fn default() -> Self {
        Self {
            omega: 0.25,
            thetas: vec![0.0, 35.0, 75.0],
            omega_t0s: vec![1.0 / 7.0, 1.0 / 8.0, 1.0 / 9.0],
            sigma_x: 4.0,
            sigma_y: 4.0,
            sigma_t: 1.0,
            spatial_extent: 25,
            temporal_extent: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborBank<T> {
    pub pairs: Vec<GaborPair<T>>,
}

impl<T: Scalar> GaborBank<T> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn temporal_extent(&self) -> usize {
        self.pairs
            .first()
            .map(|p| p.params.temporal_extent)
            .unwrap_or(0)
    }
}

/// Build the bank in `(theta outer, omega_t0 inner)` order.
pub fn make_bank<T: Scalar>(spec: &BankSpec) -> Result<GaborBank<T>> {
    if spec.thetas.is_empty() || spec.omega_t0s.is_empty() {
        return Err(Error::Config("bank needs at least one orientation and one temporal frequency".into()));
    }
    let mut pairs = Vec::with_capacity(spec.thetas.len() * spec.omega_t0s.len());
    for &theta in &spec.thetas {
        for &omega_t0 in &spec.omega_t0s {
            pairs.push(GaborPair::new(GaborParams {
                omega: T::lit(spec.omega),
                theta: T::lit(theta),
                omega_t0: T::lit(omega_t0),
                sigma_x: T::lit(spec.sigma_x),
                sigma_y: T::lit(spec.sigma_y),
                sigma_t: T::lit(spec.sigma_t),
                spatial_extent: spec.spatial_extent,
                temporal_extent: spec.temporal_extent,
            })?);
        }
    }
    Ok(GaborBank { pairs })
}

/// Per-filter energy maps for one target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyStack<T> {
    pub maps: Vec<Grid<T>>,
    pub target: usize,
}

fn check_volume<T: Scalar>(volume: &[Grid<T>], pair: &GaborPair<T>) -> Result<(usize, usize)> {
    let depth = pair.params.temporal_extent;
    if volume.len() != depth {
        return Err(Error::Shape(format!(
            "block has {} frames, kernel depth is {}",
            volume.len(),
            depth
        )));
    }
    let dims = volume[0].dims();
    if volume.iter().any(|g| g.dims() != dims) {
        return Err(Error::Shape("block frames differ in size".into()));
    }
    if dims.0 == 0 || dims.1 == 0 {
        return Err(Error::Shape("empty frame".into()));
    }
    Ok(dims)
}

pub fn block_to_volume<T: Scalar>(block: &STBlock<'_>) -> Vec<Grid<T>> {
    block
        .frames
        .iter()
        .map(|f| f.pixels.map(|v| T::lit(f64::from(v))))
        .collect()
}

/// Reference convolution: direct sum over every sampled tap.
///
/// Returns `(odd, even)` responses for the block's temporal center.
pub fn convolve_volume_direct<T: Scalar>(
    volume: &[Grid<T>],
    pair: &GaborPair<T>,
) -> Result<(Grid<T>, Grid<T>)> {
    let (w, h) = check_volume(volume, pair)?;
    let rs = pair.odd.spatial_radius();
    let rt = pair.odd.temporal_radius();
    let mut odd = Grid::filled(w, h, T::zero());
    let mut even = Grid::filled(w, h, T::zero());
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut so, mut se) = (T::zero(), T::zero());
            for t in -rt..=rt {
                let frame = &volume[(rt - t) as usize];
                for v in -rs..=rs {
                    for u in -rs..=rs {
                        let s = frame.get_clamped(x - u, y - v);
                        so += s * pair.odd.at(u, v, t);
                        se += s * pair.even.at(u, v, t);
                    }
                }
            }
            odd.set(x as usize, y as usize, so);
            even.set(x as usize, y as usize, se);
        }
    }
    Ok((odd, even))
}

/// Separable convolution through the complex factorization of the pair.
///
/// Returns `(odd, even)` responses for the block's temporal center.
pub fn convolve_volume<T: Scalar>(
    volume: &[Grid<T>],
    pair: &GaborPair<T>,
) -> Result<(Grid<T>, Grid<T>)> {
    let (w, h) = check_volume(volume, pair)?;
    let (hx, hy, ht) = pair.separable_factors();
    let rs = (hx.len() / 2) as isize;
    let rt = (ht.len() / 2) as isize;
    let n = w * h;

    // t: out = sum_tau I(center - tau) h_t(tau)
    let mut temporal = vec![Complex::new(T::zero(), T::zero()); n];
    for (k, tap) in ht.iter().enumerate() {
        let tau = k as isize - rt;
        let frame = volume[(rt - tau) as usize].as_slice();
        for (acc, &s) in temporal.iter_mut().zip(frame) {
            *acc += tap * s;
        }
    }

    // x
    let mut horizontal = vec![Complex::new(T::zero(), T::zero()); n];
    let wi = w as isize;
    for y in 0..h {
        let row = &temporal[y * w..(y + 1) * w];
        let out = &mut horizontal[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (k, tap) in hx.iter().enumerate() {
                let u = k as isize - rs;
                let sx = (x as isize - u).clamp(0, wi - 1) as usize;
                acc += row[sx] * tap;
            }
            *o = acc;
        }
    }

    // y
    let mut odd = Grid::filled(w, h, T::zero());
    let mut even = Grid::filled(w, h, T::zero());
    let hi = h as isize;
    for y in 0..h {
        for x in 0..w {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (k, tap) in hy.iter().enumerate() {
                let v = k as isize - rs;
                let sy = (y as isize - v).clamp(0, hi - 1) as usize;
                acc += horizontal[sy * w + x] * tap;
            }
            odd.set(x, y, acc.im);
            even.set(x, y, acc.re);
        }
    }
    Ok((odd, even))
}

pub fn convolve_block<T: Scalar>(block: &STBlock<'_>, pair: &GaborPair<T>) -> Result<(Grid<T>, Grid<T>)> {
    convolve_volume(&block_to_volume(block), pair)
}

pub fn convolve_block_direct<T: Scalar>(
    block: &STBlock<'_>,
    pair: &GaborPair<T>,
) -> Result<(Grid<T>, Grid<T>)> {
    convolve_volume_direct(&block_to_volume(block), pair)
}

/// `odd² + even²` per pixel.
pub fn energy_map<T: Scalar>(odd: &Grid<T>, even: &Grid<T>) -> Result<Grid<T>> {
    if !odd.same_shape(even) {
        return Err(Error::Shape(format!(
            "odd response is {:?}, even response is {:?}",
            odd.dims(),
            even.dims()
        )));
    }
    let data = odd
        .as_slice()
        .iter()
        .zip(even.as_slice())
        .map(|(&o, &e)| o * o + e * e)
        .collect();
    Grid::from_vec(odd.width(), odd.height(), data)
}

/// Which convolution path the bank uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolutionPath {
    #[default]
    Separable,
    Direct,
}

pub fn apply_bank_volume<T: Scalar>(
    volume: &[Grid<T>],
    target: usize,
    bank: &GaborBank<T>,
    path: ConvolutionPath,
) -> Result<EnergyStack<T>> {
    let maps = bank
        .pairs
        .par_iter()
        .map(|pair| {
            let (odd, even) = match path {
                ConvolutionPath::Separable => convolve_volume(volume, pair)?,
                ConvolutionPath::Direct => convolve_volume_direct(volume, pair)?,
            };
            energy_map(&odd, &even)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergyStack { maps, target })
}

/// Energy maps of every filter, in bank order.
pub fn apply_bank<T: Scalar>(block: &STBlock<'_>, bank: &GaborBank<T>) -> Result<EnergyStack<T>> {
    apply_bank_volume(&block_to_volume(block), block.target_index(), bank, ConvolutionPath::Separable)
}

pub fn apply_bank_with<T: Scalar>(
    block: &STBlock<'_>,
    bank: &GaborBank<T>,
    path: ConvolutionPath,
) -> Result<EnergyStack<T>> {
    apply_bank_volume(&block_to_volume(block), block.target_index(), bank, path)
}
