//! Periodic lattices on the torus `[0, L)^d` and uniform time partitions.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in up to three dimensions. Unused trailing coordinates are zero.
pub type Point = [f64; 3];

/// Uniform periodic lattice with `n` points per axis on `[0, length)^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("domain length must be positive, got {length}")));
        }
        Ok(Grid { dim, n, length })
    }

    /// Grid on the standard torus of side 2π.
    pub fn periodic(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, TAU)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Total number of nodes, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^d` of a single node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Fundamental wavenumber `2π / L`.
    pub fn base_wavenumber(&self) -> f64 {
        TAU / self.length
    }

    /// Row-major multi-index of a flat node index (last axis fastest).
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rest % self.n;
            rest /= self.n;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi[..self.dim]
            .iter()
            .fold(0, |acc, &j| acc * self.n + (j % self.n))
    }

    /// Stride of `axis` in the row-major layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Physical coordinates of a node.
    pub fn node(&self, flat: usize) -> Point {
        let h = self.spacing();
        let m = self.multi_index(flat);
        let mut p = [0.0; 3];
        for axis in 0..self.dim {
            p[axis] = m[axis] as f64 * h;
        }
        p
    }

    /// Signed integer frequency of FFT index `j`; the Nyquist index maps to `+n/2`.
    pub fn signed_frequency(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.n / 2
    }

    /// Physical wavevector of flat spectral index `flat`.
    pub fn wavevector(&self, flat: usize) -> Point {
        let m = self.multi_index(flat);
        let k0 = self.base_wavenumber();
        let mut k = [0.0; 3];
        for axis in 0..self.dim {
            k[axis] = k0 * self.signed_frequency(m[axis]) as f64;
        }
        k
    }

    /// Whether any axis of spectral index `flat` sits on the Nyquist frequency.
    pub fn touches_nyquist(&self, flat: usize) -> bool {
        let m = self.multi_index(flat);
        (0..self.dim).any(|axis| self.is_nyquist(m[axis]))
    }

    /// Spectral index of the mode `-k`.
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let m = self.multi_index(flat);
        let mut c = [0usize; 3];
        for axis in 0..self.dim {
            c[axis] = (self.n - m[axis]) % self.n;
        }
        self.flat_index(&c)
    }

    /// Wraps a coordinate into `[0, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let w = x.rem_euclid(self.length);
        // rem_euclid can round up to exactly L for tiny negative inputs.
        if w >= self.length {
            0.0
        } else {
            w
        }
    }

    pub fn wrap_point(&self, p: Point) -> Point {
        let mut out = [0.0; 3];
        for axis in 0..self.dim {
            out[axis] = self.wrap(p[axis]);
        }
        out
    }

    /// Minimal-image representative of a displacement, in `[-L/2, L/2)`.
    pub fn minimal_image(&self, dx: f64) -> f64 {
        let half = 0.5 * self.length;
        (dx + half).rem_euclid(self.length) - half
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.dim == other.dim && self.n == other.n && self.length == other.length
    }

    /// Grid with the same domain and `factor` times as many points per axis.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid { dim: self.dim, n: self.n * factor, length: self.length }
    }
}

/// Uniform partition `t_k = k T / n` of `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    horizon: f64,
    slices: usize,
}

impl TimePartition {
    pub fn new(horizon: f64, slices: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if slices == 0 {
            return Err(Error::InvalidArgument("slice count must be at least 1".into()));
        }
        Ok(TimePartition { horizon, slices })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    /// Knot `t_k`, computed as `k T / n` rather than accumulated.
    pub fn knot(&self, k: usize) -> f64 {
        if k == self.slices {
            return self.horizon;
        }
        k as f64 * self.horizon / self.slices as f64
    }

    pub fn width(&self) -> f64 {
        self.horizon / self.slices as f64
    }

    pub fn knots(&self) -> Vec<f64> {
        (0..=self.slices).map(|k| self.knot(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(1, 16, 1.0).is_err());
        assert!(Grid::new(2, 4, 1.0).is_err());
        assert!(Grid::new(2, 24, 1.0).is_err());
        assert!(Grid::new(3, 16, 0.0).is_err());
        assert!(Grid::periodic(3, 16).is_ok());
    }

    #[test]
    fn spacing_times_n_is_length() {
        let g = Grid::periodic(2, 64).unwrap();
        assert_eq!(g.spacing() * 64.0, g.length());
        assert_eq!(g.len(), 4096);
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::periodic(3, 8).unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
        assert_eq!(g.stride(0), 64);
        assert_eq!(g.stride(2), 1);
    }

    #[test]
    fn conjugate_index_negates_frequencies() {
        let g = Grid::periodic(2, 16).unwrap();
        for flat in 0..g.len() {
            let k = g.wavevector(flat);
            let c = g.wavevector(g.conjugate_index(flat));
            for axis in 0..2 {
                let m = g.multi_index(flat)[axis];
                if g.is_nyquist(m) {
                    assert_eq!(k[axis], c[axis]);
                } else {
                    assert_eq!(k[axis], -c[axis]);
                }
            }
        }
    }

    #[test]
    fn wrap_and_minimal_image() {
        let g = Grid::periodic(2, 8).unwrap();
        assert!((g.wrap(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        assert_eq!(g.wrap(TAU), 0.0);
        assert!((g.wrap(-1e-300)) < TAU);
        assert!((g.minimal_image(TAU - 0.1) + 0.1).abs() < 1e-14);
        assert!((g.minimal_image(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn partition_knots_are_exact() {
        let p = TimePartition::new(1.0, 3).unwrap();
        let knots = p.knots();
        assert_eq!(knots[0], 0.0);
        assert_eq!(knots[3], 1.0);
        assert_eq!(knots[1], 1.0 / 3.0);
        assert_eq!(knots[2], 2.0 / 3.0);
        assert!(TimePartition::new(1.0, 0).is_err());
    }
}
