//! Constant-velocity Kalman filter over a track's centroid.
//!
//! State is `(row, col, v_row, v_col)` with velocities in pixels per frame.
//! Only the position is measured.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

type Mat<T, const R: usize, const C: usize> = [[T; C]; R];

fn zeros<T: Scalar, const R: usize, const C: usize>() -> Mat<T, R, C> {
    [[T::zero(); C]; R]
}

fn scaled_identity<T: Scalar, const N: usize>(s: T) -> Mat<T, N, N> {
    let mut m = zeros::<T, N, N>();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = s;
    }
    m
}

fn matmul<T: Scalar, const R: usize, const K: usize, const C: usize>(
    a: &Mat<T, R, K>,
    b: &Mat<T, K, C>,
) -> Mat<T, R, C> {
    let mut out = zeros::<T, R, C>();
    for i in 0..R {
        for j in 0..C {
            let mut acc = T::zero();
            for k in 0..K {
                acc += a[i][k] * b[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn transpose<T: Scalar, const R: usize, const C: usize>(a: &Mat<T, R, C>) -> Mat<T, C, R> {
    let mut out = zeros::<T, C, R>();
    for i in 0..R {
        for j in 0..C {
            out[j][i] = a[i][j];
        }
    }
    out
}

fn add<T: Scalar, const R: usize, const C: usize>(a: &Mat<T, R, C>, b: &Mat<T, R, C>) -> Mat<T, R, C> {
    let mut out = *a;
    for i in 0..R {
        for j in 0..C {
            out[i][j] += b[i][j];
        }
    }
    out
}

/// Noise scalars: `P0 = p0·I₄`, `Q = q·I₄`, `R = r·I₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalmanParams {
    pub p0: f64,
    pub q: f64,
    pub r: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            p0: 100.0,
            q: 0.01,
            r: 1.0,
        }
    }
}

impl KalmanParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p0", self.p0), ("q", self.q), ("r", self.r)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("kalman.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState<T> {
    pub x: [T; 4],
    pub p: Mat<T, 4, 4>,
    pub a: Mat<T, 4, 4>,
    pub h: Mat<T, 2, 4>,
    pub q: Mat<T, 4, 4>,
    pub r: Mat<T, 2, 2>,
}

impl<T: Scalar> KalmanState<T> {
    /// Filter at `(row, col)` with zero velocity.
    pub fn init(centroid: (T, T), params: &KalmanParams) -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            x: [centroid.0, centroid.1, z, z],
            p: scaled_identity(T::lit(params.p0)),
            a: [[o, z, o, z], [z, o, z, o], [z, z, o, z], [z, z, z, o]],
            h: [[o, z, z, z], [z, o, z, z]],
            q: scaled_identity(T::lit(params.q)),
            r: scaled_identity(T::lit(params.r)),
        }
    }

    pub fn position(&self) -> (T, T) {
        (self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> (T, T) {
        (self.x[2], self.x[3])
    }

    /// `H·x`.
    pub fn measurement(&self) -> (T, T) {
        let m = matmul(&self.h, &transpose(&[self.x]));
        (m[0][0], m[1][0])
    }

    /// A priori step: `x ← A·x`, `P ← A·P·Aᵀ + Q`.
    pub fn predict(&mut self) {
        let x = matmul(&self.a, &transpose(&[self.x]));
        self.x = [x[0][0], x[1][0], x[2][0], x[3][0]];
        let ap = matmul(&self.a, &self.p);
        self.p = add(&matmul(&ap, &transpose(&self.a)), &self.q);
    }

    /// A posteriori step with a `(row, col)` measurement.
    pub fn correct(&mut self, measured: (T, T)) -> Result<()> {
        let ht = transpose(&self.h);
        let pht = matmul(&self.p, &ht);
        let s = add(&matmul(&self.h, &pht), &self.r);
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        if !(det > T::zero()) || !det.is_finite() {
            return Err(Error::Shape("singular innovation covariance".into()));
        }
        let s_inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
        let k = matmul(&pht, &s_inv);

        let (hr, hc) = self.measurement();
        let innovation = [[measured.0 - hr], [measured.1 - hc]];
        let dx = matmul(&k, &innovation);
        for (xi, d) in self.x.iter_mut().zip(dx.iter()) {
            *xi += d[0];
        }

        let mut i_kh = scaled_identity::<T, 4>(T::one());
        let kh = matmul(&k, &self.h);
        for i in 0..4 {
            for j in 0..4 {
                i_kh[i][j] -= kh[i][j];
            }
        }
        let p = matmul(&i_kh, &self.p);
        let half = T::lit(0.5);
        for i in 0..4 {
            for j in 0..4 {
                self.p[i][j] = (p[i][j] + p[j][i]) * half;
            }
        }
        Ok(())
    }

    pub fn trace_p(&self) -> T {
        (0..4).map(|i| self.p[i][i]).sum()
    }
}
