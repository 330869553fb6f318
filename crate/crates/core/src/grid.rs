//! Uniform periodic grid on the torus [0,L)³ and its frequency lattice.
//!
//! Physical samples sit at x = (L/n)·j, j ∈ {0,…,n−1}³. Spectral coefficients
//! are indexed in standard DFT order along each axis: array index i maps to
//! the signed integer k = i for i < n/2 and k = i − n otherwise, with
//! wavevector component ξ = (2π/L)k. The row i = n/2 (k = −n/2) is the
//! unpaired Nyquist row; fields keep it identically zero so that real-valued
//! fields have exactly conjugate-symmetric coefficients.

use crate::error::CoreError;
use crate::Result;

/// Grid descriptor: n samples per axis on a torus of side `length`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    /// Validates n (even, ≥ 4) and L (positive, finite).
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(CoreError::InvalidGrid(format!(
                "n must be even and at least 4, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(CoreError::InvalidGrid(format!(
                "torus side must be positive and finite, got {length}"
            )));
        }
        Ok(Grid { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Total number of lattice points n³.
    pub fn points(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(3)
    }

    /// Volume element (L/n)³ of the physical sampling lattice.
    pub fn cell_volume(&self) -> f64 {
        (self.length / self.n as f64).powi(3)
    }

    /// Physical coordinate of sample index j along one axis.
    pub fn coord(&self, j: usize) -> f64 {
        self.length * j as f64 / self.n as f64
    }

    /// Signed integer frequency of array index i (DFT order).
    pub fn signed_index(&self, i: usize) -> i64 {
        debug_assert!(i < self.n);
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavevector component ξ = (2π/L)·k for array index i.
    pub fn freq(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.signed_index(i) as f64 / self.length
    }

    /// Full wavevector for an array index triple.
    pub fn wavevector(&self, idx: [usize; 3]) -> [f64; 3] {
        [self.freq(idx[0]), self.freq(idx[1]), self.freq(idx[2])]
    }

    /// |ξ|² for an array index triple.
    pub fn xi_sq(&self, idx: [usize; 3]) -> f64 {
        let w = self.wavevector(idx);
        w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    }

    /// True when any component of the index triple is the Nyquist row n/2.
    pub fn is_nyquist(&self, idx: [usize; 3]) -> bool {
        idx.iter().any(|&i| i == self.n / 2)
    }

    /// Array index of the conjugate mode −k (Nyquist maps to itself).
    pub fn conjugate_index(&self, idx: [usize; 3]) -> [usize; 3] {
        let flip = |i: usize| if i == 0 { 0 } else { self.n - i };
        [flip(idx[0]), flip(idx[1]), flip(idx[2])]
    }

    /// Largest |ξ| component represented on the lattice, π·n/L.
    pub fn max_freq(&self) -> f64 {
        std::f64::consts::PI * self.n as f64 / self.length
    }

    /// Iterates all index triples in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (0..n).flat_map(move |j| (0..n).map(move |k| [i, j, k])))
    }

    /// Checks that another grid is compatible for pointwise algebra.
    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(CoreError::GridMismatch {
                left_n: self.n,
                left_l: self.length,
                right_n: other.n,
                right_l: other.length,
            });
        }
        Ok(())
    }
}
