//! Scalar and vector fields sampled on a periodic [`Grid`].
//!
//! A [`Field`] holds one or more real components. Scalars have one component,
//! velocity-like fields have `grid.dim()` components, and tensors such as the
//! velocity gradient are stored as `dim * dim` components in row-major order.
//! Spectral coefficients are computed on first use and cached.

use std::sync::OnceLock;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::spectral;

/// Coefficients with modulus below this fraction of the largest one are
/// skipped by off-grid evaluation.
const MODE_CUTOFF: f64 = 1e-15;

#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    comps: Vec<Vec<f64>>,
    spectra: OnceLock<Vec<Vec<Complex64>>>,
    modes: OnceLock<ModeSet>,
}

impl Field {
    /// Builds a field from component samples, validating size and finiteness.
    pub fn new(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.is_empty() {
            return Err(Error::InvalidArgument("field needs at least one component".into()));
        }
        for c in &comps {
            if c.len() != grid.len() {
                return Err(Error::SizeMismatch { expected: grid.len(), actual: c.len() });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("field samples".into()));
            }
        }
        Ok(Field { grid, comps, spectra: OnceLock::new(), modes: OnceLock::new() })
    }

    pub fn scalar(grid: Grid, samples: Vec<f64>) -> Result<Self> {
        Self::new(grid, vec![samples])
    }

    pub fn vector(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector field on a {}-d grid needs {} components, got {}",
                grid.dim(),
                grid.dim(),
                comps.len()
            )));
        }
        Self::new(grid, comps)
    }

    pub fn zeros(grid: Grid, ncomp: usize) -> Self {
        Field {
            grid,
            comps: vec![vec![0.0; grid.len()]; ncomp],
            spectra: OnceLock::new(),
            modes: OnceLock::new(),
        }
    }

    pub fn constant(grid: Grid, values: &[f64]) -> Self {
        Field {
            grid,
            comps: values.iter().map(|&v| vec![v; grid.len()]).collect(),
            spectra: OnceLock::new(),
            modes: OnceLock::new(),
        }
    }

    pub fn scalar_from_fn(grid: Grid, f: impl Fn(Point) -> f64 + Sync) -> Result<Self> {
        let samples = (0..grid.len()).into_par_iter().map(|i| f(grid.node(i))).collect();
        Self::scalar(grid, samples)
    }

    /// Vector field from a closure returning the first `dim` entries of a [`Point`].
    pub fn vector_from_fn(grid: Grid, f: impl Fn(Point) -> Point + Sync) -> Result<Self> {
        let values: Vec<Point> = (0..grid.len()).into_par_iter().map(|i| f(grid.node(i))).collect();
        let comps = (0..grid.dim())
            .map(|c| values.iter().map(|v| v[c]).collect())
            .collect();
        Self::vector(grid, comps)
    }

    /// Builds a field from spectral coefficients. The coefficients are first
    /// made Hermitian so that the cached spectrum matches the real samples.
    pub fn from_spectra(grid: Grid, mut spectra: Vec<Vec<Complex64>>) -> Result<Self> {
        let mut comps = Vec::with_capacity(spectra.len());
        for s in spectra.iter_mut() {
            spectral::hermitian_symmetrize(&grid, s);
            comps.push(spectral::inverse(&grid, s)?);
        }
        let field = Self::new(grid, comps)?;
        let _ = field.spectra.set(spectra);
        Ok(field)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    /// Values of every component at node `flat`.
    pub fn at_node(&self, flat: usize) -> Vec<f64> {
        self.comps.iter().map(|c| c[flat]).collect()
    }

    /// Cached Fourier coefficients, one array per component.
    pub fn spectra(&self) -> &[Vec<Complex64>] {
        self.spectra.get_or_init(|| {
            self.comps
                .iter()
                .map(|c| spectral::forward(&self.grid, c).expect("field length matches grid"))
                .collect()
        })
    }

    pub fn spectrum(&self, c: usize) -> &[Complex64] {
        &self.spectra()[c]
    }

    pub fn is_vector(&self) -> bool {
        self.ncomp() == self.grid.dim()
    }

    pub fn require_vector(&self) -> Result<()> {
        if self.is_vector() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "expected a vector field with {} components, got {}",
                self.grid.dim(),
                self.ncomp()
            )))
        }
    }

    pub fn require_scalar(&self) -> Result<()> {
        if self.ncomp() == 1 {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "expected a scalar field, got {} components",
                self.ncomp()
            )))
        }
    }

    pub fn require_compatible(&self, other: &Field) -> Result<()> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::SizeMismatch { expected: self.grid.len(), actual: other.grid.len() });
        }
        if self.ncomp() != other.ncomp() {
            return Err(Error::DimensionMismatch(format!(
                "component count {} vs {}",
                self.ncomp(),
                other.ncomp()
            )));
        }
        Ok(())
    }

    /// Pointwise `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.require_compatible(other)?;
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect())
            .collect();
        Field::new(self.grid, comps)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> Field {
        let comps = self.comps.iter().map(|c| c.iter().map(|v| a * v).collect()).collect();
        let spectra = self.spectra.get().map(|s| {
            s.iter().map(|c| c.iter().map(|z| z * a).collect()).collect::<Vec<Vec<_>>>()
        });
        let out = Field { grid: self.grid, comps, spectra: OnceLock::new(), modes: OnceLock::new() };
        if let Some(s) = spectra {
            let _ = out.spectra.set(s);
        }
        out
    }

    /// Applies a per-mode linear map to the spectra. The closure receives the
    /// wavevector, the flat spectral index, and the input coefficients of all
    /// components, and writes `out_ncomp` output coefficients.
    pub fn map_modes(
        &self,
        out_ncomp: usize,
        f: impl Fn(Point, usize, &[Complex64], &mut [Complex64]) + Sync,
    ) -> Result<Field> {
        let spectra = self.spectra();
        let grid = self.grid;
        let ncomp = self.ncomp();
        let per_mode: Vec<Vec<Complex64>> = (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let input: Vec<Complex64> = (0..ncomp).map(|c| spectra[c][flat]).collect();
                let mut out = vec![Complex64::new(0.0, 0.0); out_ncomp];
                f(grid.wavevector(flat), flat, &input, &mut out);
                out
            })
            .collect();
        let out_spectra = (0..out_ncomp)
            .map(|c| per_mode.iter().map(|m| m[c]).collect())
            .collect();
        Field::from_spectra(grid, out_spectra)
    }

    /// Pointwise Euclidean magnitude across components at every node.
    pub fn magnitude(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .collect()
    }

    /// Trapezoid-rule mean of each component.
    pub fn mean(&self) -> Vec<f64> {
        self.comps.iter().map(|c| pairwise_sum(c) / self.grid.len() as f64).collect()
    }

    /// L2 inner product `h^d Σ_x Σ_c a_c(x) b_c(x)`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.require_compatible(other)?;
        let terms: Vec<f64> = (0..self.grid.len())
            .map(|i| self.comps.iter().zip(&other.comps).map(|(a, b)| a[i] * b[i]).sum())
            .collect();
        Ok(self.grid.cell_volume() * pairwise_sum(&terms))
    }

    /// `L^p` norm of the pointwise magnitude; `p = ∞` is the maximum over a
    /// twice-oversampled trigonometric resampling, a lower bound for the sup.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidArgument(format!("L^p norm needs p >= 1, got {p}")));
        }
        if p.is_infinite() {
            return self.sup_norm();
        }
        let mag = self.magnitude();
        let powered: Vec<f64> = if p == 2.0 {
            mag.iter().map(|m| m * m).collect()
        } else {
            mag.iter().map(|m| m.powf(p)).collect()
        };
        let integral = self.grid.cell_volume() * pairwise_sum(&powered);
        Ok(if p == 2.0 { integral.sqrt() } else { integral.powf(1.0 / p) })
    }

    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0).expect("p = 2 is valid")
    }

    /// Maximum pointwise magnitude over the grid nodes only.
    pub fn grid_max(&self) -> f64 {
        self.magnitude().into_iter().fold(0.0, f64::max)
    }

    fn sup_norm(&self) -> Result<f64> {
        let mut fine_grid = None;
        let mut fine: Vec<Vec<f64>> = Vec::with_capacity(self.ncomp());
        for s in self.spectra() {
            let (g, padded) = spectral::zero_pad(&self.grid, s, 2)?;
            fine.push(spectral::inverse(&g, &padded)?);
            fine_grid = Some(g);
        }
        let g = fine_grid.expect("at least one component");
        let max = (0..g.len())
            .map(|i| fine.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(max)
    }

    /// Parseval form of the squared L2 norm, `L^d Σ_k |c_k|^2`.
    pub fn parseval_energy(&self) -> f64 {
        let terms: Vec<f64> = self
            .spectra()
            .iter()
            .flat_map(|s| s.iter().map(|z| z.norm_sqr()))
            .collect();
        self.grid.volume() * pairwise_sum(&terms)
    }

    fn mode_set(&self) -> &ModeSet {
        self.modes.get_or_init(|| ModeSet::build(&self.grid, self.spectra()))
    }

    /// Trigonometric interpolant of every component at an arbitrary point.
    /// Coordinates are wrapped onto the torus first.
    pub fn evaluate(&self, point: Point) -> Vec<f64> {
        let mut out = vec![0.0; self.ncomp()];
        self.evaluate_into(point, &mut out);
        out
    }

    pub fn evaluate_into(&self, point: Point, out: &mut [f64]) {
        self.mode_set().evaluate(&self.grid, point, out);
    }

    /// Evaluates at many points in parallel; row `i` holds all components at `points[i]`.
    pub fn evaluate_many(&self, points: &[Point]) -> Vec<Vec<f64>> {
        let modes = self.mode_set();
        points
            .par_iter()
            .map(|&p| {
                let mut out = vec![0.0; self.ncomp()];
                modes.evaluate(&self.grid, p, &mut out);
                out
            })
            .collect()
    }

    /// Same as [`Field::evaluate_many`] but as a new field on the same grid,
    /// with `points` indexed by node.
    pub fn compose(&self, points: &[Point]) -> Result<Field> {
        if points.len() != self.grid.len() {
            return Err(Error::SizeMismatch { expected: self.grid.len(), actual: points.len() });
        }
        let values = self.evaluate_many(points);
        let comps = (0..self.ncomp())
            .map(|c| values.iter().map(|v| v[c]).collect())
            .collect();
        Field::new(self.grid, comps)
    }

    /// Component-wise maximum absolute difference to another field.
    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.require_compatible(other)?;
        Ok(self
            .comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }
}

/// Sparse list of significant Fourier modes used for off-grid evaluation.
#[derive(Clone, Debug)]
struct ModeSet {
    ncomp: usize,
    /// Largest |frequency| along any axis among the kept modes.
    kmax: usize,
    freqs: Vec<[i64; 3]>,
    nyquist: Vec<[bool; 3]>,
    /// `freqs.len() * ncomp` coefficients, mode-major.
    coeffs: Vec<Complex64>,
}

impl ModeSet {
    fn build(grid: &Grid, spectra: &[Vec<Complex64>]) -> Self {
        let ncomp = spectra.len();
        let peak = spectra
            .iter()
            .flat_map(|s| s.iter().map(|z| z.norm()))
            .fold(0.0, f64::max);
        let cutoff = peak * MODE_CUTOFF;
        let mut freqs = Vec::new();
        let mut nyquist = Vec::new();
        let mut coeffs = Vec::new();
        let mut kmax = 0usize;
        for flat in 0..grid.len() {
            if peak == 0.0 || spectra.iter().all(|s| s[flat].norm() <= cutoff) {
                continue;
            }
            let m = grid.multi_index(flat);
            let mut f = [0i64; 3];
            let mut nq = [false; 3];
            for axis in 0..grid.dim() {
                f[axis] = grid.signed_frequency(m[axis]);
                nq[axis] = grid.is_nyquist(m[axis]);
                kmax = kmax.max(f[axis].unsigned_abs() as usize);
            }
            freqs.push(f);
            nyquist.push(nq);
            coeffs.extend(spectra.iter().map(|s| s[flat]));
        }
        ModeSet { ncomp, kmax, freqs, nyquist, coeffs }
    }

    fn evaluate(&self, grid: &Grid, point: Point, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.freqs.is_empty() {
            return;
        }
        let k0 = grid.base_wavenumber();
        let width = self.kmax + 1;
        // table[axis * width + k] = exp(i k k0 x_axis) for k = 0..=kmax
        let mut table = vec![Complex64::new(1.0, 0.0); 3 * width];
        for axis in 0..grid.dim() {
            let x = grid.wrap(point[axis]);
            for k in 1..width {
                let (s, c) = (k as f64 * k0 * x).sin_cos();
                table[axis * width + k] = Complex64::new(c, s);
            }
        }
        let mut acc = vec![Complex64::new(0.0, 0.0); self.ncomp];
        for (mode, (f, nq)) in self.freqs.iter().zip(&self.nyquist).enumerate() {
            let mut phase = Complex64::new(1.0, 0.0);
            for axis in 0..grid.dim() {
                let k = f[axis];
                let z = table[axis * width + k.unsigned_abs() as usize];
                let factor = if nq[axis] {
                    Complex64::new(z.re, 0.0)
                } else if k < 0 {
                    z.conj()
                } else {
                    z
                };
                phase *= factor;
            }
            let cs = &self.coeffs[mode * self.ncomp..(mode + 1) * self.ncomp];
            for (a, c) in acc.iter_mut().zip(cs) {
                *a += c * phase;
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = a.re;
        }
    }
}

/// Pairwise (cascade) summation with a fixed reduction tree, so results do not
/// depend on thread count or chunking.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
