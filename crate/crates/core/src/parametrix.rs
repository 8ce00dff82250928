//! Frozen-point parametrix: the perturbed heat kernel `p̂^{t,x}`, its semigroup
//! `P̂` and Green operator `Ĝ`, the per-slice Duhamel reconstruction of the
//! velocity, and the three remainder functionals with their norm factors.
//!
//! Freezing is always diagonal, `(τ, ξ) = (t, x)`, so the kernel seen from the
//! node `x` is the wrapped Gaussian of variance `2ν(t - s)` per axis centered at
//! the characteristic foot `θ_{s,t}(x)`. Gaussian integrals are computed either
//! exactly, as the heat multiplier followed by trigonometric evaluation at the
//! center ([`KernelQuadrature::Spectral`]), or by direct truncated grid sums
//! ([`KernelQuadrature::Stencil`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::flow::{self, FlowMap, Orientation};
use crate::grid::{Grid, Point, TimePartition};
use crate::operators::{self, HeatKernelParams};
use crate::solver::{Forcing, HypothesisNorms};
use crate::trajectory::Trajectory;

/// Stencil radius in standard deviations.
pub const STENCIL_RADIUS: f64 = 6.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelQuadrature {
    /// Heat multiplier applied spectrally, then evaluated at the kernel center.
    #[default]
    Spectral,
    /// Grid sum over a ball of radius `6σ` around the center; a point mass
    /// below `t - s < h² / (100ν)`.
    Stencil,
}

/// Second-order difference of the pressure term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delta2Variant {
    /// `g(y) - g(θ) - (y - θ)·∇g(θ)`.
    #[default]
    Full,
    /// `g(y) - g(θ)`, without the first-order subtraction.
    ZeroOrder,
}

#[derive(Clone, Debug)]
pub struct ParametrixContext<'a> {
    pub traj: &'a Trajectory,
    pub forcing: Option<&'a Forcing>,
    pub nu: f64,
    pub orientation: Orientation,
    pub h_ode: f64,
    pub quadrature: KernelQuadrature,
    pub delta2: Delta2Variant,
}

impl<'a> ParametrixContext<'a> {
    /// Upstream characteristics, spectral kernel route, ODE step `dt / 4`.
    pub fn new(traj: &'a Trajectory) -> Result<Self> {
        if !(traj.nu() > 0.0) {
            return Err(Error::InvalidArgument("parametrix needs a positive viscosity".into()));
        }
        Ok(ParametrixContext {
            traj,
            forcing: None,
            nu: traj.nu(),
            orientation: Orientation::Upstream,
            h_ode: flow::default_h_ode(traj),
            quadrature: KernelQuadrature::Spectral,
            delta2: Delta2Variant::Full,
        })
    }

    pub fn with_forcing(mut self, forcing: &'a Forcing) -> Self {
        self.forcing = if forcing.is_zero() { None } else { Some(forcing) };
        self
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_h_ode(mut self, h_ode: f64) -> Self {
        self.h_ode = h_ode;
        self
    }

    pub fn with_quadrature(mut self, quadrature: KernelQuadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn with_delta2(mut self, delta2: Delta2Variant) -> Self {
        self.delta2 = delta2;
        self
    }

    pub fn grid(&self) -> &Grid {
        self.traj.grid()
    }

    fn params(&self) -> Result<HeatKernelParams> {
        HeatKernelParams::for_grid(self.nu, self.grid())
    }

    fn center(&self, s: f64, t: f64, x: Point) -> Result<Point> {
        flow::flow_point_oriented(self.traj, s, t, x, self.h_ode, self.orientation)
    }

    fn flows(&self, t: f64, times: &[f64]) -> Result<Vec<FlowMap>> {
        flow::flow_grid_multi(self.traj, t, times, self.h_ode, self.orientation)
    }
}

fn check_interval(r: f64, t: f64) -> Result<()> {
    if r > t {
        return Err(Error::InvalidArgument(format!("needs r <= t, got r = {r}, t = {t}")));
    }
    Ok(())
}

/// Minimal-image vector `y - c`.
fn offset(grid: &Grid, y: Point, c: Point) -> Point {
    let mut v = [0.0; 3];
    for a in 0..grid.dim() {
        v[a] = grid.minimal_image(y[a] - c[a]);
    }
    v
}

/// `p̂^{t,x}(s, t, x, y)`.
pub fn perturbed_kernel(ctx: &ParametrixContext, s: f64, t: f64, x: Point, y: Point) -> Result<f64> {
    if s >= t {
        return Err(Error::InvalidArgument(format!("kernel needs s < t, got s = {s}, t = {t}")));
    }
    let theta = ctx.center(s, t, x)?;
    let grid = ctx.grid();
    operators::heat_kernel_point(&ctx.params()?, t - s, offset(grid, theta, y))
}

/// Grid quadrature of the kernel mass and first moment `∫ p̂ (y - θ) dy`
/// (minimal-image displacement) over the whole torus.
pub fn kernel_moments(ctx: &ParametrixContext, s: f64, t: f64, x: Point) -> Result<(f64, Point)> {
    if s >= t {
        return Err(Error::InvalidArgument(format!("kernel needs s < t, got s = {s}, t = {t}")));
    }
    let theta = ctx.center(s, t, x)?;
    let grid = *ctx.grid();
    let params = ctx.params()?;
    let h = grid.cell_volume();
    let d = grid.dim();
    let rows: Vec<[f64; 4]> = (0..grid.len())
        .map(|i| {
            let v = offset(&grid, grid.node(i), theta);
            let w = operators::heat_kernel_point(&params, t - s, v).map(|k| k * h)?;
            Ok([w, w * v[0], w * v[1], w * v[2]])
        })
        .collect::<Result<_>>()?;
    let column = |c: usize| crate::field::pairwise_sum(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());
    let mut moment = [0.0; 3];
    for a in 0..d {
        moment[a] = column(a + 1);
    }
    Ok((column(0), moment))
}

/// Gaussian integrals `∫ h_ν(τ, c - y) g(y) dy` at many centers, with the
/// mass and first moment of the weights actually used.
struct KernelApplication {
    /// `values[i][c]`: component `c` at center `i`.
    values: Vec<Vec<f64>>,
    mass: Vec<f64>,
    moment: Vec<Point>,
}

fn apply_kernel(
    quadrature: KernelQuadrature,
    nu: f64,
    g: &Field,
    tau: f64,
    centers: &[Point],
) -> Result<KernelApplication> {
    let grid = *g.grid();
    let ncomp = g.ncomp();
    let point_mass = |values: Vec<Vec<f64>>| KernelApplication {
        mass: vec![1.0; values.len()],
        moment: vec![[0.0; 3]; values.len()],
        values,
    };
    match quadrature {
        KernelQuadrature::Spectral => {
            let smoothed = operators::heat_semigroup(g, nu, tau)?;
            Ok(point_mass(smoothed.evaluate_many(centers)))
        }
        KernelQuadrature::Stencil => {
            let h = grid.spacing();
            if tau < h * h / (100.0 * nu) {
                return Ok(point_mass(g.evaluate_many(centers)));
            }
            let params = HeatKernelParams::for_grid(nu, &grid)?;
            let radius = STENCIL_RADIUS * (2.0 * nu * tau).sqrt();
            let rows: Vec<(Vec<f64>, f64, Point)> = centers
                .par_iter()
                .map(|&c| stencil_sum(&grid, &params, g, tau, c, radius, ncomp))
                .collect::<Result<_>>()?;
            let mut out = KernelApplication { values: Vec::new(), mass: Vec::new(), moment: Vec::new() };
            for (v, m, mo) in rows {
                out.values.push(v);
                out.mass.push(m);
                out.moment.push(mo);
            }
            Ok(out)
        }
    }
}

fn axis_range(grid: &Grid, center: f64, radius: f64) -> Vec<usize> {
    let n = grid.n() as i64;
    let h = grid.spacing();
    let lo = ((center - radius) / h).ceil() as i64;
    let hi = ((center + radius) / h).floor() as i64;
    if hi - lo + 1 >= n {
        return (0..grid.n()).collect();
    }
    (lo..=hi).map(|j| j.rem_euclid(n) as usize).collect()
}

fn stencil_sum(
    grid: &Grid,
    params: &HeatKernelParams,
    g: &Field,
    tau: f64,
    center: Point,
    radius: f64,
    ncomp: usize,
) -> Result<(Vec<f64>, f64, Point)> {
    let d = grid.dim();
    let cell = grid.cell_volume();
    let ranges: Vec<Vec<usize>> = (0..d).map(|a| axis_range(grid, center[a], radius)).collect();
    let full = ranges.iter().all(|r| r.len() == grid.n());
    let mut values = vec![0.0; ncomp];
    let mut mass = 0.0;
    let mut moment = [0.0; 3];
    let mut idx = [0usize; 3];
    let total: usize = ranges.iter().map(|r| r.len()).product();
    for combo in 0..total {
        let mut rest = combo;
        for a in (0..d).rev() {
            idx[a] = ranges[a][rest % ranges[a].len()];
            rest /= ranges[a].len();
        }
        let flat = grid.flat_index(&idx[..d]);
        let v = offset(grid, grid.node(flat), center);
        if !full && (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() > radius {
            continue;
        }
        let w = operators::heat_kernel_point(params, tau, v)? * cell;
        mass += w;
        for a in 0..d {
            moment[a] += w * v[a];
        }
        for (c, out) in values.iter_mut().enumerate() {
            *out += w * g.component(c)[flat];
        }
    }
    Ok((values, mass, moment))
}

fn columns(grid: Grid, rows: &[Vec<f64>]) -> Result<Field> {
    let ncomp = rows.first().map_or(0, |r| r.len());
    let comps = (0..ncomp).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
    Field::new(grid, comps)
}

/// `x ↦ P̂_r^{t,x} g(t, x)`.
pub fn hat_p_apply(ctx: &ParametrixContext, g: &Field, r: f64, t: f64) -> Result<Field> {
    check_interval(r, t)?;
    if r == t {
        return Ok(g.clone());
    }
    let map = ctx.flows(t, &[r])?.remove(0);
    let applied = apply_kernel(ctx.quadrature, ctx.nu, g, t - r, &map.points)?;
    columns(*g.grid(), &applied.values)
}

/// Midpoint nodes of `[r, t]` with `m` subintervals.
pub fn midpoint_nodes(r: f64, t: f64, m: usize) -> Vec<f64> {
    let w = (t - r) / m as f64;
    (0..m).map(|j| r + (j as f64 + 0.5) * w).collect()
}

/// `x ↦ Ĝ_r^{t,x} ψ(t, x)` with the composite midpoint rule in time.
pub fn hat_g_apply(
    ctx: &ParametrixContext,
    psi: impl Fn(f64) -> Result<Field>,
    r: f64,
    t: f64,
    m: usize,
) -> Result<Field> {
    check_interval(r, t)?;
    if m == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one subinterval".into()));
    }
    let grid = *ctx.grid();
    let first = psi(r)?;
    let mut acc = Field::zeros(grid, first.ncomp());
    if r == t {
        return Ok(acc);
    }
    let nodes = midpoint_nodes(r, t, m);
    let maps = ctx.flows(t, &nodes)?;
    let w = (t - r) / m as f64;
    for (s, map) in nodes.iter().zip(&maps) {
        let applied = apply_kernel(ctx.quadrature, ctx.nu, &psi(*s)?, t - s, &map.points)?;
        acc = acc.lincomb(1.0, &columns(grid, &applied.values)?, w)?;
    }
    Ok(acc)
}

/// Integrand `(u(s, θ_{s,t}(x)) - u(s, y))·∇u(s, y)` of the velocity-increment term.
pub fn u_delta_integrand(ctx: &ParametrixContext, s: f64, t: f64, x: Point, y: Point) -> Result<Vec<f64>> {
    let theta = ctx.center(s, t, x)?;
    let u = ctx.traj.field_at(s)?;
    let grad = operators::gradient_tensor(&u)?;
    let d = ctx.grid().dim();
    let ut = u.evaluate(theta);
    let uy = u.evaluate(y);
    let gy = grad.evaluate(y);
    Ok((0..d)
        .map(|i| (0..d).map(|j| (ut[j] - uy[j]) * gy[i * d + j]).sum())
        .collect())
}

/// `Ξ[u·∇u](s, ·)` of the interpolated velocity.
pub fn xi_advection(traj: &Trajectory, s: f64) -> Result<Field> {
    operators::xi_apply(&operators::advection(&traj.field_at(s)?)?)
}

/// Second-order difference `g(y) - g(θ) - (y - θ)·∇g(θ)` of a vector field `g`
/// (minimal-image displacement); the last term is dropped for
/// [`Delta2Variant::ZeroOrder`].
pub fn xi_delta2(g: &Field, theta: Point, y: Point, variant: Delta2Variant) -> Result<Vec<f64>> {
    let grid = g.grid();
    let d = grid.dim();
    let gy = g.evaluate(y);
    let gt = g.evaluate(theta);
    let mut out: Vec<f64> = gy.iter().zip(&gt).map(|(a, b)| a - b).collect();
    if variant == Delta2Variant::Full {
        let grad = operators::gradient_tensor(g)?.evaluate(theta);
        let v = offset(grid, y, theta);
        for (i, o) in out.iter_mut().enumerate() {
            *o -= (0..d).map(|j| v[j] * grad[i * d + j]).sum::<f64>();
        }
    }
    Ok(out)
}

/// L2 norms of one Duhamel term before and after the Leray projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuhamelTerm {
    pub name: String,
    pub raw_l2: f64,
    pub projected_l2: f64,
}

#[derive(Clone, Debug)]
pub struct Duhamel {
    /// Sum of the five projected terms.
    pub reconstruction: Field,
    pub terms: Vec<DuhamelTerm>,
    pub reference_l2: f64,
    pub error_l2: f64,
    pub relative_error: f64,
}

pub const DUHAMEL_TERMS: [&str; 5] = ["semigroup", "forcing", "velocity_increment", "pressure_delta2", "pressure_shift"];

/// Five-term frozen-diagonal Duhamel formula on slice `k` evaluated at
/// `t ∈ (t_k, t_{k+1}]`, with `m` midpoint nodes in time, compared with the
/// stored solution.
pub fn duhamel_reconstruct(
    ctx: &ParametrixContext,
    partition: &TimePartition,
    k: usize,
    t: f64,
    m: usize,
) -> Result<Duhamel> {
    let tk = slice_start(partition, k, t)?;
    if m == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one subinterval".into()));
    }
    let grid = *ctx.grid();
    let d = grid.dim();
    let nodes = midpoint_nodes(tk, t, m);
    let w = (t - tk) / m as f64;
    let mut times = vec![tk];
    times.extend(&nodes);
    let maps = ctx.flows(t, &times)?;

    let u_k = ctx.traj.field_at(tk)?;
    let t1 = columns(grid, &apply_kernel(ctx.quadrature, ctx.nu, &u_k, t - tk, &maps[0].points)?.values)?;

    let zero_rows = || vec![vec![0.0; d]; grid.len()];
    let mut t2 = zero_rows();
    let mut t3 = zero_rows();
    let mut t4 = zero_rows();
    let mut t5 = zero_rows();
    for (s, map) in nodes.iter().zip(&maps[1..]) {
        let tau = t - s;
        let u = ctx.traj.field_at(*s)?;
        let grad = operators::gradient_tensor(&u)?;
        let adv = operators::advection(&u)?;
        let xi = operators::xi_apply(&adv)?;
        let grad_xi = operators::gradient_tensor(&xi)?;
        let at_theta_u = u.evaluate_many(&map.points);
        let at_theta_xi = xi.evaluate_many(&map.points);
        let at_theta_grad_xi = grad_xi.evaluate_many(&map.points);
        let k_grad = apply_kernel(ctx.quadrature, ctx.nu, &grad, tau, &map.points)?;
        let k_adv = apply_kernel(ctx.quadrature, ctx.nu, &adv, tau, &map.points)?;
        let k_xi = apply_kernel(ctx.quadrature, ctx.nu, &xi, tau, &map.points)?;
        let k_f = match ctx.forcing {
            Some(f) => Some(apply_kernel(ctx.quadrature, ctx.nu, &f.at(grid, *s), tau, &map.points)?),
            None => None,
        };
        for x in 0..grid.len() {
            for i in 0..d {
                if let Some(kf) = &k_f {
                    t2[x][i] += w * kf.values[x][i];
                }
                let transported: f64 = (0..d).map(|j| at_theta_u[x][j] * k_grad.values[x][i * d + j]).sum();
                t3[x][i] += w * (transported - k_adv.values[x][i]);
                let mut delta2 = k_xi.values[x][i] - k_xi.mass[x] * at_theta_xi[x][i];
                if ctx.delta2 == Delta2Variant::Full {
                    delta2 -= (0..d).map(|j| k_xi.moment[x][j] * at_theta_grad_xi[x][i * d + j]).sum::<f64>();
                }
                t4[x][i] += w * delta2;
                t5[x][i] += w * (at_theta_xi[x][i] - xi.component(i)[x]);
            }
        }
    }
    let raw = [t1, columns(grid, &t2)?, columns(grid, &t3)?, columns(grid, &t4)?, columns(grid, &t5)?];
    let mut reconstruction = Field::zeros(grid, d);
    let mut terms = Vec::with_capacity(5);
    for (name, field) in DUHAMEL_TERMS.iter().zip(raw.iter()) {
        let projected = operators::leray_project(field)?;
        terms.push(DuhamelTerm {
            name: name.to_string(),
            raw_l2: field.l2_norm(),
            projected_l2: projected.l2_norm(),
        });
        reconstruction = reconstruction.add(&projected)?;
    }
    if terms.iter().any(|t| !t.raw_l2.is_finite()) {
        return Err(Error::NonFinite(format!("Duhamel terms on slice {k} at t = {t}")));
    }
    let reference = ctx.traj.field_at(t)?;
    let reference_l2 = reference.l2_norm();
    let error_l2 = reconstruction.sub(&reference)?.l2_norm();
    let relative_error = if reference_l2 > 0.0 { error_l2 / reference_l2 } else { error_l2 };
    Ok(Duhamel { reconstruction, terms, reference_l2, error_l2, relative_error })
}

fn slice_start(partition: &TimePartition, k: usize, t: f64) -> Result<f64> {
    if k >= partition.slices() {
        return Err(Error::InvalidArgument(format!(
            "slice index {k} out of range for {} slices",
            partition.slices()
        )));
    }
    let (a, b) = (partition.knot(k), partition.knot(k + 1));
    if !(t > a && t <= b) {
        return Err(Error::InvalidArgument(format!("t = {t} is not in the slice ({a}, {b}]")));
    }
    Ok(a)
}

/// Gaussian integrals centered at the grid nodes themselves.
fn unperturbed(ctx: &ParametrixContext, g: &Field, tau: f64) -> Result<(Field, Vec<f64>, Vec<Point>)> {
    let grid = *g.grid();
    match ctx.quadrature {
        KernelQuadrature::Spectral => Ok((
            operators::heat_semigroup(g, ctx.nu, tau)?,
            vec![1.0; grid.len()],
            vec![[0.0; 3]; grid.len()],
        )),
        KernelQuadrature::Stencil => {
            let nodes: Vec<Point> = (0..grid.len()).map(|i| grid.node(i)).collect();
            let a = apply_kernel(KernelQuadrature::Stencil, ctx.nu, g, tau, &nodes)?;
            Ok((columns(grid, &a.values)?, a.mass, a.moment))
        }
    }
}

/// The three remainders on slice `k` at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Remainders {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

/// `R1`, `R2`, `R3` at `t ∈ (t_k, t_{k+1}]` with `m` midpoint nodes; `R1`, `R2`
/// use the unperturbed kernel, `R3` the characteristic shift.
pub fn remainders(ctx: &ParametrixContext, partition: &TimePartition, k: usize, t: f64, m: usize) -> Result<Remainders> {
    let tk = slice_start(partition, k, t)?;
    if m == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one subinterval".into()));
    }
    let grid = *ctx.grid();
    let d = grid.dim();
    let nodes = midpoint_nodes(tk, t, m);
    let w = (t - tk) / m as f64;
    let maps = ctx.flows(t, &nodes)?;
    let zero_rows = || vec![vec![0.0; d]; grid.len()];
    let (mut a1, mut a2, mut a3) = (zero_rows(), zero_rows(), zero_rows());
    for (s, map) in nodes.iter().zip(&maps) {
        let tau = t - s;
        let u = ctx.traj.field_at(*s)?;
        let grad = operators::gradient_tensor(&u)?;
        let adv = operators::advection(&u)?;
        let xi = operators::xi_apply(&adv)?;
        let grad_xi = operators::gradient_tensor(&xi)?;
        let (k_grad, _, _) = unperturbed(ctx, &grad, tau)?;
        let (k_adv, _, _) = unperturbed(ctx, &adv, tau)?;
        let (k_xi, mass, moment) = unperturbed(ctx, &xi, tau)?;
        let shifted = xi.evaluate_many(&map.points);
        for x in 0..grid.len() {
            for i in 0..d {
                let local: f64 = (0..d).map(|j| u.component(j)[x] * k_grad.component(i * d + j)[x]).sum();
                a1[x][i] += w * (k_adv.component(i)[x] - local);
                let mut delta2 = k_xi.component(i)[x] - mass[x] * xi.component(i)[x];
                if ctx.delta2 == Delta2Variant::Full {
                    delta2 -= (0..d).map(|j| moment[x][j] * grad_xi.component(i * d + j)[x]).sum::<f64>();
                }
                a2[x][i] += w * delta2;
                a3[x][i] += w * (shifted[x][i] - xi.component(i)[x]);
            }
        }
    }
    Ok(Remainders {
        r1: columns(grid, &a1)?.l2_norm(),
        r2: columns(grid, &a2)?.l2_norm(),
        r3: columns(grid, &a3)?.l2_norm(),
    })
}

/// One row of the remainder table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderReport {
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub epsilon: f64,
}

/// Remainders at `t = t_{k+1}` for every slice of an `n`-slice partition of the
/// trajectory horizon.
pub fn remainder_table(
    ctx: &ParametrixContext,
    n: usize,
    m: usize,
    factors: &NormFactors,
) -> Result<Vec<RemainderReport>> {
    let horizon = ctx.traj.t_end() - ctx.traj.t0();
    if ctx.traj.t0() != 0.0 {
        return Err(Error::InvalidArgument("remainder tables need a trajectory starting at 0".into()));
    }
    let partition = TimePartition::new(horizon, n)?;
    (0..n)
        .map(|k| {
            let t = partition.knot(k + 1);
            let r = remainders(ctx, &partition, k, t, m)?;
            Ok(RemainderReport {
                n,
                k,
                t,
                r1: r.r1,
                r2: r.r2,
                r3: r.r3,
                n1: factors.n1,
                n2: factors.n2,
                n3: factors.n3,
                epsilon: factors.epsilon,
            })
        })
        .collect()
}

/// Norm factors of the three remainder bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormFactors {
    pub epsilon: f64,
    /// `‖∇u‖_{L^∞L^∞} ‖∇u‖_{L^∞L²}`
    pub n1: f64,
    /// `‖∇²Ξ‖^{ε/2} (‖u‖_∞‖∇u‖_{2-ε} + ‖u‖_∞‖∇²u‖_{2-ε} + ‖∇u‖_∞‖∇u‖_{2-ε})^{(2-ε)/2}`
    pub n2: f64,
    /// `‖∇Ξ‖_∞^{ε/2} ‖u‖_∞^{ε/2} ‖u‖_{2-ε}^{(2-ε)/2} ‖∇u‖_∞^{(2-ε)/2}`
    pub n3: f64,
}

pub fn norm_factors(h: &HypothesisNorms) -> NormFactors {
    let e = h.epsilon;
    let half = e / 2.0;
    let rest = (2.0 - e) / 2.0;
    let inner = h.u_inf * h.grad_u_l2eps + h.u_inf * h.hess_u_l2eps + h.grad_u_inf * h.grad_u_l2eps;
    NormFactors {
        epsilon: e,
        n1: h.grad_u_inf * h.grad_u_l2,
        n2: h.hess_xi_inf.powf(half) * inner.powf(rest),
        n3: h.grad_xi_inf.powf(half) * h.u_inf.powf(half) * h.u_l2eps.powf(rest) * h.grad_u_inf.powf(rest),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{self, SolverConfig};

    fn zero_traj(n: usize) -> Trajectory {
        let g = Grid::periodic(2, n).unwrap();
        Trajectory::new(vec![Field::zeros(g, 2); 5], 0.0, 0.25, 0.1).unwrap()
    }

    fn tg_traj(n: usize, t_end: f64, dt: f64) -> Trajectory {
        let g = Grid::periodic(2, n).unwrap();
        let u0 = solver::taylor_green_2d(g, 0.0, 0.1).unwrap();
        solver::solve(&u0, &Forcing::none(), &SolverConfig::new(0.1, t_end, dt)).unwrap()
    }

    #[test]
    fn kernel_reduces_to_heat_kernel_without_flow() {
        let traj = zero_traj(16);
        let ctx = ParametrixContext::new(&traj).unwrap();
        let params = HeatKernelParams::for_grid(0.1, traj.grid()).unwrap();
        let (x, y) = ([1.0, 2.0, 0.0], [1.5, 1.2, 0.0]);
        let a = perturbed_kernel(&ctx, 0.2, 0.7, x, y).unwrap();
        let b = operators::heat_kernel_point(&params, 0.5, [-0.5, 0.8, 0.0]).unwrap();
        assert!((a - b).abs() < 1e-14 * b);
        assert!(perturbed_kernel(&ctx, 0.7, 0.7, x, y).is_err());
    }

    #[test]
    fn kernel_mass_and_first_moment_on_taylor_green() {
        let traj = tg_traj(32, 0.5, 1.0 / 64.0);
        let ctx = ParametrixContext::new(&traj).unwrap();
        for x in [[0.3, 1.7, 0.0], [4.0, 5.9, 0.0]] {
            let (mass, moment) = kernel_moments(&ctx, 0.25, 0.5, x).unwrap();
            assert!((mass - 1.0).abs() < 1e-10);
            assert!(moment.iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn green_of_constant_is_interval_length() {
        let traj = tg_traj(16, 0.5, 1.0 / 32.0);
        let ctx = ParametrixContext::new(&traj).unwrap();
        let g = *traj.grid();
        let one = Field::constant(g, &[1.0, 1.0]);
        let out = hat_g_apply(&ctx, |_| Ok(one.clone()), 0.1, 0.4, 3).unwrap();
        assert!(out.components().iter().flatten().all(|v| (v - 0.3).abs() < 1e-12));
        let empty = hat_g_apply(&ctx, |_| Ok(one.clone()), 0.4, 0.4, 3).unwrap();
        assert_eq!(empty.grid_max(), 0.0);
        let profile = hat_g_apply(&ctx, |s| Ok(one.scale(s * s)), 0.0, 0.5, 4).unwrap();
        let midpoint: f64 = midpoint_nodes(0.0, 0.5, 4).iter().map(|s| s * s * 0.125).sum();
        assert!((profile.component(0)[7] - midpoint).abs() < 1e-14);
    }

    #[test]
    fn operators_reduce_to_heat_flow_without_velocity() {
        let traj = zero_traj(64);
        let g = *traj.grid();
        let phi = Field::vector_from_fn(g, |p| [p[0].sin() * p[1].cos(), (2.0 * p[0]).cos(), 0.0]).unwrap();
        for quadrature in [KernelQuadrature::Spectral, KernelQuadrature::Stencil] {
            let ctx = ParametrixContext::new(&traj).unwrap().with_quadrature(quadrature);
            let hat = hat_p_apply(&ctx, &phi, 0.25, 1.0).unwrap();
            let heat = operators::heat_semigroup(&phi, 0.1, 0.75).unwrap();
            assert!(hat.max_abs_diff(&heat).unwrap() < 1e-8, "{quadrature:?}");
            let green = hat_g_apply(&ctx, |_| Ok(phi.clone()), 0.5, 1.0, 2).unwrap();
            let tilde = operators::heat_green(|_| Ok(phi.clone()), 0.1, 0.5, 1.0, 2).unwrap();
            assert!(green.max_abs_diff(&tilde).unwrap() < 1e-8, "{quadrature:?}");
        }
    }

    #[test]
    fn stencil_matches_spectral_when_resolved() {
        let traj = tg_traj(32, 0.5, 1.0 / 64.0);
        let g = *traj.grid();
        let phi = Field::vector_from_fn(g, |p| [(p[0] + p[1]).sin(), p[1].cos(), 0.0]).unwrap();
        let spectral = hat_p_apply(&ParametrixContext::new(&traj).unwrap(), &phi, 0.0, 0.5).unwrap();
        let stencil = hat_p_apply(
            &ParametrixContext::new(&traj).unwrap().with_quadrature(KernelQuadrature::Stencil),
            &phi,
            0.0,
            0.5,
        )
        .unwrap();
        assert!(spectral.max_abs_diff(&stencil).unwrap() < 1e-7);
        assert!(spectral.l2_norm() <= phi.l2_norm() + 1e-8);
        let constant = Field::constant(g, &[2.0, -1.0]);
        let same = hat_p_apply(&ParametrixContext::new(&traj).unwrap(), &constant, 0.1, 0.4).unwrap();
        assert!(same.max_abs_diff(&constant).unwrap() < 1e-14);
    }

    #[test]
    fn diagonal_cancellations() {
        let traj = tg_traj(16, 0.5, 1.0 / 32.0);
        let ctx = ParametrixContext::new(&traj).unwrap();
        let x = [1.1, 0.4, 0.0];
        let theta = flow::flow_point_oriented(&traj, 0.2, 0.5, x, ctx.h_ode, Orientation::Upstream).unwrap();
        let at_theta = u_delta_integrand(&ctx, 0.2, 0.5, x, theta).unwrap();
        assert!(at_theta.iter().all(|v| v.abs() < 1e-14));
        let xi = xi_advection(&traj, 0.2).unwrap();
        let d2 = xi_delta2(&xi, theta, theta, Delta2Variant::Full).unwrap();
        assert!(d2.iter().all(|v| v.abs() < 1e-14));
        let constant = Field::constant(*traj.grid(), &[0.5, 0.5]);
        let flat = xi_delta2(&constant, theta, [3.0, 2.0, 0.0], Delta2Variant::Full).unwrap();
        assert!(flat.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn delta2_is_second_order_small() {
        let g = Grid::periodic(2, 32).unwrap();
        let f = Field::vector_from_fn(g, |p| [p[0].sin() + p[1].cos(), (p[0] - p[1]).sin(), 0.0]).unwrap();
        let theta = [1.0, 2.0, 0.0];
        let sizes = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = sizes
            .iter()
            .map(|r| {
                let y = [1.0 + r, 2.0 + 0.5 * r, 0.0];
                let v = xi_delta2(&f, theta, y, Delta2Variant::Full).unwrap();
                v.iter().map(|a| a * a).sum::<f64>().sqrt()
            })
            .collect();
        let slope = (errs[0] / errs[2]).ln() / (sizes[0] / sizes[2]).ln();
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn zero_trajectory_has_zero_duhamel_terms_and_remainders() {
        let traj = zero_traj(16);
        let ctx = ParametrixContext::new(&traj).unwrap();
        let part = TimePartition::new(1.0, 4).unwrap();
        let dh = duhamel_reconstruct(&ctx, &part, 1, 0.5, 2).unwrap();
        assert_eq!(dh.reconstruction.grid_max(), 0.0);
        assert_eq!(dh.error_l2, 0.0);
        let r = remainders(&ctx, &part, 2, 0.75, 2).unwrap();
        assert_eq!((r.r1, r.r2, r.r3), (0.0, 0.0, 0.0));
        assert!(duhamel_reconstruct(&ctx, &part, 1, 0.8, 2).is_err());
    }

    #[test]
    fn uniform_velocity_has_no_velocity_increment_remainder() {
        let g = Grid::periodic(2, 16).unwrap();
        let traj = Trajectory::new(vec![Field::constant(g, &[0.3, -0.2]); 5], 0.0, 0.25, 0.1).unwrap();
        let ctx = ParametrixContext::new(&traj).unwrap();
        let part = TimePartition::new(1.0, 2).unwrap();
        let r = remainders(&ctx, &part, 0, 0.5, 4).unwrap();
        assert_eq!(r.r1, 0.0);
    }

    #[test]
    fn linear_regime_reconstruction_is_heat_flow() {
        let g = Grid::periodic(2, 16).unwrap();
        let u0 = solver::random_solenoidal(g, 3, 4.0, 1e-6).unwrap();
        let traj = solver::solve(&u0, &Forcing::none(), &SolverConfig::new(0.1, 0.5, 1.0 / 64.0)).unwrap();
        let ctx = ParametrixContext::new(&traj).unwrap();
        let part = TimePartition::new(0.5, 2).unwrap();
        let dh = duhamel_reconstruct(&ctx, &part, 1, 0.5, 2).unwrap();
        assert!(dh.relative_error < 1e-4, "{}", dh.relative_error);
    }

    #[test]
    fn taylor_green_reconstruction_converges_in_time_quadrature() {
        let traj = tg_traj(16, 0.5, 1.0 / 128.0);
        let ctx = ParametrixContext::new(&traj).unwrap();
        let part = TimePartition::new(0.5, 2).unwrap();
        let coarse = duhamel_reconstruct(&ctx, &part, 1, 0.5, 1).unwrap();
        let fine = duhamel_reconstruct(&ctx, &part, 1, 0.5, 2).unwrap();
        assert!(fine.relative_error < 5e-2);
        assert!(coarse.error_l2 / fine.error_l2 > 1.8, "{} {}", coarse.error_l2, fine.error_l2);
        for t in &fine.terms {
            assert!(t.projected_l2 <= t.raw_l2 + 1e-12);
        }
    }

    #[test]
    fn norm_factors_scale_with_the_trajectory() {
        let traj = tg_traj(16, 0.25, 1.0 / 32.0);
        let f = Forcing::none();
        let a = norm_factors(&solver::hypothesis_norms(&traj, &f, 0.5).unwrap());
        let b = norm_factors(&solver::hypothesis_norms(&traj.scaled(2.0), &f, 0.5).unwrap());
        assert!(b.n1 >= 2.0 * a.n1 && b.n2 >= 2.0 * a.n2 && b.n3 >= 2.0 * a.n3);
        assert!(a.n1 > 0.0 && a.n2.is_finite() && a.n3.is_finite());
        let zero = norm_factors(&solver::hypothesis_norms(&zero_traj(8), &f, 0.5).unwrap());
        assert_eq!((zero.n1, zero.n2, zero.n3), (0.0, 0.0, 0.0));
    }
}
