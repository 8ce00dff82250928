//! Linear operators of the energy estimate on the torus: the heat kernel, its
//! semigroup and Green operator, the Leray projector `P` with its gradient
//! complement `Ξ = id - P`, spectral differential operators, the dealiased
//! advection nonlinearity, and the exponential absorbing constant.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{Grid, Point};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Parameters of the periodic heat kernel `h_ν`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatKernelParams {
    pub nu: f64,
    pub dim: usize,
    /// Side of the periodic domain.
    pub length: f64,
}

impl HeatKernelParams {
    pub fn new(nu: f64, dim: usize, length: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")));
        }
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {dim}")));
        }
        Ok(HeatKernelParams { nu, dim, length })
    }

    pub fn for_grid(nu: f64, grid: &Grid) -> Result<Self> {
        Self::new(nu, grid.dim(), grid.length())
    }

    /// Smallest image count `M` with `exp(-(M L / 2)^2 / (4 ν t)) < 1e-16`.
    pub fn image_cutoff(&self, t: f64) -> usize {
        let threshold = (4.0 * self.nu * t * 1e16f64.ln()).sqrt();
        let m = (2.0 * threshold / self.length).floor() as usize + 1;
        m.max(1)
    }
}

/// Wrapped Gaussian `Σ_m (4πνt)^{-d/2} exp(-|x + mL|^2 / (4νt))`.
pub fn heat_kernel_point(params: &HeatKernelParams, t: f64, x: Point) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("heat kernel needs t > 0, got {t}")));
    }
    let d = params.dim;
    let l = params.length;
    let four_nu_t = 4.0 * params.nu * t;
    let norm = (PI * four_nu_t).powf(-(d as f64) / 2.0);
    let m = params.image_cutoff(t) as i64;
    // Separable: the d-dimensional image sum factorizes per axis.
    let mut value = norm;
    for &xi in x.iter().take(d) {
        // |minimal image|, computed from |x| so that h(x) == h(-x) bitwise
        let a = xi.abs().rem_euclid(l);
        let base = a.min(l - a);
        let axis_sum: f64 = (-m..=m)
            .map(|j| {
                let y = base + j as f64 * l;
                (-y * y / four_nu_t).exp()
            })
            .sum();
        value *= axis_sum;
    }
    Ok(value)
}

/// Heat semigroup `P̃` over a duration `dt`: the multiplier `exp(-ν|k|² dt)`.
pub fn heat_semigroup(field: &Field, nu: f64, dt: f64) -> Result<Field> {
    if dt < 0.0 || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("heat semigroup needs dt >= 0, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(field.clone());
    }
    let ncomp = field.ncomp();
    field.map_modes(ncomp, |k, _, input, out| {
        let damp = (-nu * norm_sqr(k) * dt).exp();
        for (o, i) in out.iter_mut().zip(input) {
            *o = i * damp;
        }
    })
}

/// Green operator `G̃_r ψ(t) = ∫_r^t P̃_{t-s} ψ(s) ds` by the composite
/// midpoint rule with `m` subintervals.
pub fn heat_green(
    psi: impl Fn(f64) -> Result<Field>,
    nu: f64,
    r: f64,
    t: f64,
    m: usize,
) -> Result<Field> {
    if r > t {
        return Err(Error::InvalidArgument(format!("Green operator needs r <= t, got r={r}, t={t}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one subinterval".into()));
    }
    let first = psi(r)?;
    let mut acc = Field::zeros(*first.grid(), first.ncomp());
    if r == t {
        return Ok(acc);
    }
    let w = (t - r) / m as f64;
    for q in 0..m {
        let s = r + (q as f64 + 0.5) * w;
        let smoothed = heat_semigroup(&psi(s)?, nu, t - s)?;
        acc = acc.lincomb(1.0, &smoothed, w)?;
    }
    Ok(acc)
}

fn norm_sqr(k: Point) -> f64 {
    k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
}

/// Leray projector `P = I - k kᵀ / |k|²`; the mean mode passes unchanged.
pub fn leray_project(v: &Field) -> Result<Field> {
    v.require_vector()?;
    let d = v.grid().dim();
    v.map_modes(d, move |k, _, input, out| {
        let k2 = norm_sqr(k);
        if k2 == 0.0 {
            out.copy_from_slice(input);
            return;
        }
        let kdotv: Complex64 = (0..d).map(|j| input[j] * k[j]).sum();
        for i in 0..d {
            out[i] = input[i] - kdotv * (k[i] / k2);
        }
    })
}

/// Gradient part `Ξ = id - P`, i.e. the multiplier `k kᵀ / |k|²` (zero on the mean).
pub fn xi_apply(v: &Field) -> Result<Field> {
    v.require_vector()?;
    let d = v.grid().dim();
    v.map_modes(d, move |k, _, input, out| {
        let k2 = norm_sqr(k);
        if k2 == 0.0 {
            out.iter_mut().for_each(|o| *o = ZERO);
            return;
        }
        let kdotv: Complex64 = (0..d).map(|j| input[j] * k[j]).sum();
        for i in 0..d {
            out[i] = kdotv * (k[i] / k2);
        }
    })
}

/// First-derivative symbol `i k_j`, zero on the Nyquist index of axis `j` so
/// that odd derivatives of real fields stay real.
fn derivative_symbol(grid: &Grid, flat: usize, k: Point, axis: usize) -> Complex64 {
    if grid.is_nyquist(grid.multi_index(flat)[axis]) {
        ZERO
    } else {
        Complex64::new(0.0, k[axis])
    }
}

/// All first partial derivatives: component `c * d + j` is `∂_j f_c`.
pub fn gradient_tensor(f: &Field) -> Result<Field> {
    let grid = *f.grid();
    let d = grid.dim();
    let nc = f.ncomp();
    f.map_modes(nc * d, move |k, flat, input, out| {
        for j in 0..d {
            let sym = derivative_symbol(&grid, flat, k, j);
            for c in 0..nc {
                out[c * d + j] = input[c] * sym;
            }
        }
    })
}

/// Gradient of a scalar field.
pub fn grad(scalar: &Field) -> Result<Field> {
    scalar.require_scalar()?;
    gradient_tensor(scalar)
}

pub fn div(v: &Field) -> Result<Field> {
    v.require_vector()?;
    let grid = *v.grid();
    let d = grid.dim();
    v.map_modes(1, move |k, flat, input, out| {
        out[0] = (0..d).map(|j| input[j] * derivative_symbol(&grid, flat, k, j)).sum();
    })
}

/// Curl: a scalar `∂₁v₂ - ∂₂v₁` in 2D, a vector in 3D.
pub fn curl(v: &Field) -> Result<Field> {
    v.require_vector()?;
    let grid = *v.grid();
    match grid.dim() {
        2 => v.map_modes(1, move |k, flat, input, out| {
            let d0 = derivative_symbol(&grid, flat, k, 0);
            let d1 = derivative_symbol(&grid, flat, k, 1);
            out[0] = d0 * input[1] - d1 * input[0];
        }),
        3 => v.map_modes(3, move |k, flat, input, out| {
            let dk = [
                derivative_symbol(&grid, flat, k, 0),
                derivative_symbol(&grid, flat, k, 1),
                derivative_symbol(&grid, flat, k, 2),
            ];
            out[0] = dk[1] * input[2] - dk[2] * input[1];
            out[1] = dk[2] * input[0] - dk[0] * input[2];
            out[2] = dk[0] * input[1] - dk[1] * input[0];
        }),
        d => Err(Error::DimensionMismatch(format!("curl undefined for d = {d}"))),
    }
}

pub fn laplacian(f: &Field) -> Result<Field> {
    let nc = f.ncomp();
    f.map_modes(nc, |k, _, input, out| {
        let k2 = norm_sqr(k);
        for (o, i) in out.iter_mut().zip(input) {
            *o = i * (-k2);
        }
    })
}

/// Largest retained frequency under the 2/3 rule.
pub fn dealias_cutoff(grid: &Grid) -> i64 {
    (grid.n() / 3) as i64
}

/// Zeroes every mode with some `|k_j| > n/3`.
pub fn dealias(f: &Field) -> Result<Field> {
    let grid = *f.grid();
    let cutoff = dealias_cutoff(&grid);
    let nc = f.ncomp();
    f.map_modes(nc, move |_, flat, input, out| {
        let m = grid.multi_index(flat);
        let keep = (0..grid.dim()).all(|a| grid.signed_frequency(m[a]).abs() <= cutoff);
        for (o, i) in out.iter_mut().zip(input) {
            *o = if keep { *i } else { ZERO };
        }
    })
}

/// Dealiased convective derivative `(a·∇) b`, componentwise `Σ_j a_j ∂_j b_i`.
/// Both inputs are truncated by the 2/3 rule before the physical-space product
/// and the result is truncated again, so no aliased mode survives.
pub fn convective_derivative(a: &Field, b: &Field) -> Result<Field> {
    a.require_vector()?;
    if !a.grid().same_shape(b.grid()) {
        return Err(Error::SizeMismatch { expected: a.grid().len(), actual: b.grid().len() });
    }
    let grid = *a.grid();
    let d = grid.dim();
    let a_t = dealias(a)?;
    let grad_b = gradient_tensor(&dealias(b)?)?;
    let nb = b.ncomp();
    let comps: Vec<Vec<f64>> = (0..nb)
        .map(|i| {
            (0..grid.len())
                .map(|x| (0..d).map(|j| a_t.component(j)[x] * grad_b.component(i * d + j)[x]).sum())
                .collect()
        })
        .collect();
    dealias(&Field::new(grid, comps)?)
}

/// Advection nonlinearity `u·∇u`.
pub fn advection(u: &Field) -> Result<Field> {
    convective_derivative(u, u)
}

/// Near-minimal constant `C_δ` with `|x|^δ e^{-|x|²} <= C_δ e^{-|x|²/C_δ}`.
///
/// Candidates run over the geometric grid `C = (1 + 1e-6) * 1.01^j`; the first
/// one whose closed-form supremum `sup_r r^δ e^{-r²(1 - 1/C)}` (attained at
/// `r² = δ / (2(1 - 1/C))`) does not exceed `C` is returned.
pub fn absorbing_constant(delta: f64) -> Result<f64> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("absorbing constant needs delta >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(1.0);
    }
    let mut c = 1.0 + 1e-6;
    loop {
        if absorbing_supremum(delta, c) <= c {
            return Ok(c);
        }
        c *= 1.01;
    }
}

/// `sup_{r>=0} r^δ exp(-r² (1 - 1/C))`.
pub fn absorbing_supremum(delta: f64, c: f64) -> f64 {
    if delta == 0.0 {
        return 1.0;
    }
    let a = 1.0 - 1.0 / c;
    let r2 = delta / (2.0 * a);
    r2.powf(0.5 * delta) * (-0.5 * delta).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn grid2(n: usize) -> Grid {
        Grid::periodic(2, n).unwrap()
    }

    #[test]
    fn heat_kernel_small_time_matches_free_space() {
        let p = HeatKernelParams::new(1.0, 2, TAU).unwrap();
        for &t in &[1e-4, 1e-3, 1e-2] {
            let v = heat_kernel_point(&p, t, [0.0; 3]).unwrap();
            let free = 1.0 / (4.0 * PI * t);
            assert!((v - free).abs() < 1e-12 * free);
        }
    }

    #[test]
    fn heat_kernel_is_even_and_rejects_nonpositive_time() {
        let p = HeatKernelParams::new(0.3, 3, TAU).unwrap();
        let x = [0.4, -1.3, 2.2];
        let a = heat_kernel_point(&p, 0.7, x).unwrap();
        let b = heat_kernel_point(&p, 0.7, [-0.4, 1.3, -2.2]).unwrap();
        assert_eq!(a, b);
        assert!(heat_kernel_point(&p, 0.0, x).is_err());
        assert!(heat_kernel_point(&p, -1.0, x).is_err());
    }

    #[test]
    fn heat_kernel_has_unit_mass() {
        let g = grid2(64);
        let p = HeatKernelParams::for_grid(0.5, &g).unwrap();
        let mass: f64 = (0..g.len())
            .map(|i| heat_kernel_point(&p, 0.2, g.node(i)).unwrap())
            .sum::<f64>()
            * g.cell_volume();
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn semigroup_damps_eigenfunction() {
        let g = grid2(16);
        let f = Field::scalar_from_fn(g, |p| p[0].sin()).unwrap();
        let out = heat_semigroup(&f, 1.0, 1.0).unwrap();
        let expect = f.scale((-1.0f64).exp());
        assert!(out.max_abs_diff(&expect).unwrap() < 1e-15);
        assert!(heat_semigroup(&f, 1.0, 0.0).unwrap().max_abs_diff(&f).unwrap() == 0.0);
        assert!(heat_semigroup(&f, 1.0, -0.1).is_err());
    }

    #[test]
    fn green_of_constant_is_elapsed_time() {
        let g = grid2(8);
        let c = Field::constant(g, &[2.0]);
        let out = heat_green(|_| Ok(c.clone()), 0.3, 0.25, 1.0, 7).unwrap();
        assert!(out.max_abs_diff(&Field::constant(g, &[1.5])).unwrap() < 1e-14);
        let empty = heat_green(|_| Ok(c.clone()), 0.3, 1.0, 1.0, 7).unwrap();
        assert_eq!(empty.grid_max(), 0.0);
        assert!(heat_green(|_| Ok(c.clone()), 0.3, 1.0, 0.5, 7).is_err());
    }

    #[test]
    fn green_of_eigenfunction_matches_closed_form() {
        // ∫_r^t e^{-(t-s)} ds sin x = (1 - e^{-(t-r)}) sin x
        let g = grid2(16);
        let f = Field::scalar_from_fn(g, |p| p[0].sin()).unwrap();
        let (r, t) = (0.0, 1.0);
        let exact = f.scale(1.0 - (-(t - r) as f64).exp());
        let coarse = heat_green(|_| Ok(f.clone()), 1.0, r, t, 16).unwrap();
        let fine = heat_green(|_| Ok(f.clone()), 1.0, r, t, 32).unwrap();
        let e1 = coarse.max_abs_diff(&exact).unwrap();
        let e2 = fine.max_abs_diff(&exact).unwrap();
        assert!(e1 < 2e-4);
        // second-order midpoint rule
        assert!((e1 / e2 - 4.0).abs() < 0.05);
    }

    #[test]
    fn leray_kills_gradients_and_keeps_solenoidal_fields() {
        let g = grid2(32);
        let gradient =
            Field::vector_from_fn(g, |p| [p[0].cos() * p[1].sin(), p[0].sin() * p[1].cos(), 0.0]).unwrap();
        assert!(leray_project(&gradient).unwrap().grid_max() < 1e-12);
        // stream function ψ = sin x cos 2y: (-∂₂ψ, ∂₁ψ)
        let stream = Field::vector_from_fn(g, |p| {
            [2.0 * p[0].sin() * (2.0 * p[1]).sin(), p[0].cos() * (2.0 * p[1]).cos(), 0.0]
        })
        .unwrap();
        let projected = leray_project(&stream).unwrap();
        assert!(projected.max_abs_diff(&stream).unwrap() < 1e-12);
        let xi = xi_apply(&stream).unwrap();
        assert!(xi.grid_max() < 1e-12);
    }

    #[test]
    fn leray_keeps_mean_and_xi_drops_it() {
        let g = grid2(8);
        let c = Field::constant(g, &[1.0, -2.0]);
        assert!(leray_project(&c).unwrap().max_abs_diff(&c).unwrap() < 1e-15);
        assert!(xi_apply(&c).unwrap().grid_max() < 1e-15);
        let s = Field::constant(g, &[1.0]);
        assert!(leray_project(&s).is_err());
    }

    #[test]
    fn differential_operators_on_sine() {
        let g = grid2(16);
        let f = Field::scalar_from_fn(g, |p| p[0].sin()).unwrap();
        let gr = grad(&f).unwrap();
        let expect = Field::vector_from_fn(g, |p| [p[0].cos(), 0.0, 0.0]).unwrap();
        let err = gr.max_abs_diff(&expect).unwrap();
        assert!(err < 1e-13, "{err}");
        let lap = laplacian(&f).unwrap();
        assert!(lap.max_abs_diff(&f.scale(-1.0)).unwrap() < 1e-13);
    }

    #[test]
    fn curl_needs_vector() {
        let g = grid2(8);
        assert!(curl(&Field::constant(g, &[1.0])).is_err());
    }

    #[test]
    fn advection_of_constant_vanishes() {
        let g = grid2(16);
        let u = Field::constant(g, &[0.3, -1.2]);
        assert!(advection(&u).unwrap().grid_max() < 1e-15);
    }

    #[test]
    fn absorbing_constant_certifies_inequality() {
        assert_eq!(absorbing_constant(0.0).unwrap(), 1.0);
        assert!(absorbing_constant(-1.0).is_err());
        for &delta in &[0.5, 1.0, 2.0, 3.5] {
            let c = absorbing_constant(delta).unwrap();
            assert!(c > 1.0);
            for i in 0..10_000 {
                let r = 20.0 * i as f64 / 9_999.0;
                let lhs = r.powf(delta) * (-r * r).exp();
                let rhs = c * (-r * r / c).exp();
                assert!(lhs <= rhs * (1.0 + 1e-12), "delta={delta} r={r}");
            }
            // near-minimal: the previous grid point fails
            let prev = c / 1.01;
            if prev > 1.0 + 1e-6 {
                assert!(absorbing_supremum(delta, prev) > prev);
            }
        }
    }
}
