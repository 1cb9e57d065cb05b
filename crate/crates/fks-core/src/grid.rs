//! Periodic lattice discretizing the box `[-L, L)^d`.

use serde::{Deserialize, Serialize};

use crate::error::{FksError, Result};

/// Uniform periodic grid on `[-L, L)^d` with `n` samples per axis.
///
/// Sample points are `x_i = -L + i h` with spacing `h = 2L/n`; the discrete
/// Fourier dual consists of the wavenumbers `k_m = pi m / L` for integer
/// `m in [-n/2, n/2)`. `n` must be a power of two, at least 8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    d: usize,
    n: usize,
    l: f64,
}

impl Grid {
    /// Create a grid after validating `d in 1..=3`, `n` a power of two
    /// `>= 8`, and `l > 0`.
    pub fn new(d: usize, n: usize, l: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(FksError::InvalidParam(format!(
                "grid dimension d = {d} outside 1..=3"
            )));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(FksError::InvalidParam(format!(
                "grid size n = {n} must be a power of two >= 8"
            )));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(FksError::InvalidParam(format!(
                "grid half-width L = {l} must be positive and finite"
            )));
        }
        Ok(Self { d, n, l })
    }

    /// Spatial dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Samples per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Half-width `L` of the box `[-L, L)^d`.
    pub fn half_width(&self) -> f64 {
        self.l
    }

    /// Lattice spacing `h = 2L/n`.
    pub fn h(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    /// Total number of lattice points `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// `true` when the grid holds no points (never, by construction).
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume `h^d` used by all lattice quadratures.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    /// Coordinate of index `i` along one axis: `x_i = -L + i h`.
    pub fn coord(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.h()
    }

    /// All per-axis coordinates in index order.
    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Signed integer mode number for FFT bin `i`: `0..n/2-1, -n/2..-1`.
    pub fn mode(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavenumber of FFT bin `i` along one axis: `k = pi m / L`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        std::f64::consts::PI * self.mode(i) as f64 / self.l
    }

    /// Decompose a flat row-major index into per-axis indices
    /// (last axis fastest).
    pub fn unravel(&self, flat: usize, out: &mut [usize]) {
        let mut rem = flat;
        for axis in (0..self.d).rev() {
            out[axis] = rem % self.n;
            rem /= self.n;
        }
    }

    /// Flatten per-axis indices (last axis fastest) into a row-major index.
    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for &i in idx.iter() {
            flat = flat * self.n + i;
        }
        flat
    }

    /// Position vector of a flat index.
    pub fn position(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0usize; self.d];
        self.unravel(flat, &mut idx);
        idx.iter().map(|&i| self.coord(i)).collect()
    }
}
