//! Experiment harnesses: operator and flow property batteries, the L² energy
//! inequality, remainder scaling fits, the `L^p` projector probe, and the 3D
//! vorticity L¹ bound.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{pairwise_sum, Field};
use crate::flow::{self, Orientation};
use crate::grid::{Grid, Point};
use crate::operators::{self, HeatKernelParams};
use crate::parametrix::{self, NormFactors, ParametrixContext, RemainderReport};
use crate::solver::{self, Forcing, HypothesisNorms, SolverConfig};
use crate::trajectory::Trajectory;

/// One measured property with its tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `measured <= tolerance`.
    pub fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        Check { name: name.into(), measured, tolerance, passed: measured <= tolerance }
    }

    /// Passes when `measured >= threshold`.
    pub fn at_least(name: &str, measured: f64, threshold: f64) -> Self {
        Check { name: name.into(), measured, tolerance: threshold, passed: measured >= threshold }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn relative(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        a.abs() / b.abs()
    }
}

/// Projector properties over `count` seeded random fields: idempotence,
/// Pythagorean identity, orthogonality, divergence of the projection.
pub fn leray_suite(grid: Grid, count: usize, seed: u64) -> Result<Vec<Check>> {
    let band = (grid.n() / 3 - 1) as f64;
    let rows: Vec<[f64; 4]> = (0..count)
        .into_par_iter()
        .map(|i| {
            let phi = solver::random_field(grid, seed.wrapping_add(i as u64), band, 1.0)?;
            let p = operators::leray_project(&phi)?;
            let pp = operators::leray_project(&p)?;
            let xi = operators::xi_apply(&phi)?;
            let norm2 = phi.l2_norm().powi(2);
            let idem = pp.sub(&p)?.l2_norm() / phi.l2_norm();
            let pyth = relative(p.l2_norm().powi(2) + xi.l2_norm().powi(2) - norm2, norm2);
            let cross = p.inner(&xi)?.abs() / norm2;
            let div = operators::div(&p)?.l2_norm() / operators::gradient_tensor(&phi)?.l2_norm();
            Ok([idem, pyth, cross, div])
        })
        .collect::<Result<_>>()?;
    let max = |c: usize| rows.iter().map(|r| r[c]).fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("leray_idempotence", max(0), 1e-12),
        Check::at_most("leray_pythagoras", max(1), 1e-10),
        Check::at_most("leray_orthogonality", max(2), 1e-12),
        Check::at_most("leray_divergence", max(3), 1e-10),
    ])
}

/// Heat semigroup law, kernel mass, Green operator of the constant field.
pub fn heat_suite(grid: Grid, nu: f64, seed: u64) -> Result<Vec<Check>> {
    let phi = solver::random_field(grid, seed, (grid.n() / 3 - 1) as f64, 1.0)?;
    let two = operators::heat_semigroup(&operators::heat_semigroup(&phi, nu, 0.3)?, nu, 0.45)?;
    let one = operators::heat_semigroup(&phi, nu, 0.75)?;
    let semigroup = two.sub(&one)?.l2_norm() / phi.l2_norm();

    let params = HeatKernelParams::for_grid(nu, &grid)?;
    let mut mass_err: f64 = 0.0;
    for t in [0.05 / nu, 0.5 / nu] {
        for center in [[0.0, 0.0, 0.0], [1.234, 5.1, 2.2]] {
            let values: Vec<f64> = (0..grid.len())
                .map(|i| {
                    let x = grid.node(i);
                    let v = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                    operators::heat_kernel_point(&params, t, v)
                })
                .collect::<Result<_>>()?;
            mass_err = mass_err.max((grid.cell_volume() * pairwise_sum(&values) - 1.0).abs());
        }
    }

    let zero = Trajectory::new(vec![Field::zeros(grid, grid.dim()); 3], 0.0, 0.5, nu)?;
    let ctx = ParametrixContext::new(&zero)?;
    let ones = Field::constant(grid, &vec![1.0; grid.dim()]);
    let (r, t) = (0.2, 0.9);
    let hat = parametrix::hat_g_apply(&ctx, |_| Ok(ones.clone()), r, t, 7)?;
    let tilde = operators::heat_green(|_| Ok(ones.clone()), nu, r, t, 7)?;
    let green = hat
        .components()
        .iter()
        .chain(tilde.components())
        .flatten()
        .map(|v| (v - (t - r)).abs())
        .fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("heat_semigroup_law", semigroup, 1e-12),
        Check::at_most("heat_kernel_mass", mass_err, 1e-10),
        Check::at_most("green_of_one", green, 1e-12),
    ])
}

/// Full operator battery used by the `op-suite` command.
pub fn operator_suite(grid: Grid, nu: f64, seed: u64) -> Result<Vec<Check>> {
    let mut checks = leray_suite(grid, 20, seed)?;
    checks.extend(heat_suite(grid, nu, seed)?);
    let d = grid.dim();
    let band = (grid.n() / 3 - 1) as f64;
    let phi = solver::random_field(grid, seed ^ 0x5eed, band, 1.0)?;

    let p = operators::leray_project(&phi)?;
    checks.push(Check::at_most("leray_contraction", p.l2_norm() - phi.l2_norm(), 0.0));
    let g = Field::scalar_from_fn(grid, |x| x[0].sin() * x[1].sin())?;
    let gradient_part = operators::leray_project(&operators::grad(&g)?)?;
    checks.push(Check::at_most("leray_kills_gradients", gradient_part.grid_max(), 1e-12));

    let back = Field::new(grid, phi.components().to_vec())?;
    let spectra_back = Field::from_spectra(grid, phi.spectra().to_vec())?;
    checks.push(Check::at_most("fft_round_trip", spectra_back.max_abs_diff(&back)?, 1e-12));
    let parseval = relative(phi.parseval_energy() - phi.l2_norm().powi(2), phi.l2_norm().powi(2));
    checks.push(Check::at_most("parseval", parseval, 1e-10));

    let node = grid.len() / 3 + 5;
    let at_node = phi.evaluate(grid.node(node));
    let node_err = (0..d).map(|c| (at_node[c] - phi.component(c)[node]).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("offgrid_at_node", node_err, 1e-12));

    let sin = Field::scalar_from_fn(grid, |x| x[0].sin())?;
    let lap_err = operators::laplacian(&sin)?.add(&sin)?.grid_max();
    checks.push(Check::at_most("laplacian_sine", lap_err, 1e-12));
    let curl_grad = operators::curl(&operators::grad(&g)?)?.grid_max();
    checks.push(Check::at_most("curl_of_gradient", curl_grad, 1e-12));
    if d == 3 {
        let div_curl = operators::div(&operators::curl(&phi)?)?.grid_max();
        checks.push(Check::at_most("div_of_curl", div_curl, 1e-12));
    }

    let u = solver::random_solenoidal(grid, seed ^ 0xadd, band.min(8.0), 1.0)?;
    let skew = operators::advection(&u)?.inner(&u)?.abs() / u.l2_norm().powi(2);
    checks.push(Check::at_most("advection_skew_symmetry", skew, 1e-10));
    if d == 2 {
        let tg = solver::taylor_green_2d(grid, 0.0, nu)?;
        let residual = operators::leray_project(&operators::advection(&tg)?)?.grid_max();
        checks.push(Check::at_most("taylor_green_pure_gradient", residual, 1e-10));
    }

    let params = HeatKernelParams::for_grid(nu, &grid)?;
    let t_small = 0.01 / nu;
    let free = (4.0 * PI * nu * t_small).powf(-(d as f64) / 2.0);
    let at_zero = operators::heat_kernel_point(&params, t_small, [0.0; 3])?;
    checks.push(Check::at_most("heat_kernel_free_space", relative(at_zero - free, free), 1e-12));
    let x = [0.7, -1.3, 2.9];
    let even = (operators::heat_kernel_point(&params, 0.3, x)?
        - operators::heat_kernel_point(&params, 0.3, [-x[0], -x[1], -x[2]])?)
    .abs();
    checks.push(Check::at_most("heat_kernel_even", even, 0.0));

    for delta in [1.0, 2.0] {
        let c = operators::absorbing_constant(delta)?;
        let worst = (0..=10_000)
            .map(|i| {
                let r = 20.0 * i as f64 / 10_000.0;
                r.powf(delta) * (-r * r).exp() - c * (-r * r / c).exp()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::at_most(&format!("absorbing_constant_delta_{delta}"), worst, 0.0));
    }
    Ok(checks)
}

/// Measure preservation, Jacobian and kernel cancellation on a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub s: f64,
    pub t: f64,
    pub h_ode: f64,
    pub measure_gap: f64,
    pub jacobian_max_deviation: f64,
    pub first_moment_max: f64,
    pub mass_max_deviation: f64,
    pub step_halving_max: f64,
    pub checks: Vec<Check>,
}

pub fn flow_suite(traj: &Trajectory, s: f64, t: f64, h_ode: f64) -> Result<FlowReport> {
    let grid = *traj.grid();
    let mut checks = Vec::new();
    let mut worst_gap: f64 = 0.0;
    let mut worst_det: f64 = 0.0;
    let phi = Field::scalar_from_fn(grid, |x| {
        (x[0] + 0.3).cos() * x[1].sin() + 0.5 * (2.0 * x[1]).cos() + (x[0] - x[1]).sin().powi(2)
    })?;
    for orientation in [Orientation::Downstream, Orientation::Upstream] {
        let map = flow::flow_grid_oriented(traj, s, t, h_ode, orientation)?;
        worst_gap = worst_gap.max(flow::measure_preservation_gap(&map, &phi)?.gap);
        let det = flow::jacobian_determinant(&map)?;
        worst_det = worst_det.max(det.component(0).iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
    }
    let coarse = flow::flow_grid_oriented(traj, s, t, h_ode, Orientation::Upstream)?;
    let fine = flow::flow_grid_oriented(traj, s, t, h_ode / 2.0, Orientation::Upstream)?;
    let halving = coarse
        .displacement
        .iter()
        .zip(&fine.displacement)
        .map(|(a, b)| (0..grid.dim()).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);

    let ctx = ParametrixContext::new(traj)?.with_h_ode(h_ode);
    let moments: Vec<(f64, Point)> = (0..grid.len())
        .into_par_iter()
        .map(|i| parametrix::kernel_moments(&ctx, s, t, grid.node(i)))
        .collect::<Result<_>>()?;
    let first = moments
        .iter()
        .map(|(_, m)| (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt())
        .fold(0.0, f64::max);
    let mass = moments.iter().map(|(w, _)| (w - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("measure_preservation_gap", worst_gap, 1e-6));
    checks.push(Check::at_most("jacobian_determinant", worst_det, 1e-3));
    checks.push(Check::at_most("kernel_first_moment", first, 1e-8));
    checks.push(Check::at_most("kernel_mass", mass, 1e-10));
    checks.push(Check::at_most("flow_step_halving", halving, 1e-8));
    Ok(FlowReport {
        s,
        t,
        h_ode,
        measure_gap: worst_gap,
        jacobian_max_deviation: worst_det,
        first_moment_max: first,
        mass_max_deviation: mass,
        step_halving_max: halving,
        checks,
    })
}

/// Both sides of `‖u(T)‖₂ <= ‖u0‖₂ + ∫₀ᵀ ‖Pf(s)‖₂ ds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub initial_l2: f64,
    pub forcing_integral: f64,
    /// `‖u(t_j)‖₂` at every snapshot.
    pub history: Vec<f64>,
    pub monotone: Option<bool>,
    pub passed: bool,
}

pub fn energy_check(u0: &Field, forcing: &Forcing, cfg: &SolverConfig) -> Result<(EnergyReport, Trajectory)> {
    let traj = solver::solve(u0, forcing, cfg)?;
    let (steps, _) = cfg.steps()?;
    let initial_l2 = traj.first().l2_norm();
    let forcing_integral = match forcing.pattern() {
        Some(p) => forcing.time_integral(p.l2_norm(), cfg.t_final, steps),
        None => 0.0,
    };
    let lhs = traj.last().l2_norm();
    let rhs = initial_l2 + forcing_integral;
    let slack = rhs - lhs;
    let history: Vec<f64> = traj.snapshots().iter().map(|f| f.l2_norm()).collect();
    let monotone = forcing.is_zero().then(|| history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let report = EnergyReport {
        lhs,
        rhs,
        slack,
        initial_l2,
        forcing_integral,
        passed: slack >= -1e-6 * rhs && monotone.unwrap_or(true),
        history,
        monotone,
    };
    Ok((report, traj))
}

/// Least-squares slope of `ln y` against `ln x`; NaN unless every point is
/// positive and finite.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.len() != ys.len() || xs.len() < 2 || ys.iter().chain(xs).any(|v| !(v.is_finite() && *v > 0.0)) {
        return f64::NAN;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub max_r1: f64,
    pub max_r2: f64,
    pub max_r3: f64,
    /// `n · max_k R_i`, the summed contribution over all slices.
    pub total_r1: f64,
    pub total_r2: f64,
    pub total_r3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub epsilon: f64,
    pub horizon: f64,
    pub quadrature_nodes: usize,
    pub rows: Vec<RemainderReport>,
    pub points: Vec<ScalingPoint>,
    pub slopes: Slopes,
    pub total_slopes: Slopes,
    /// Slopes predicted by the bounds: `-3/2` and `-(1 + ε/2)`.
    pub predicted: Slopes,
    /// Smallest constant `C` with `R_i <= C (T/n)^{rate_i} N_i` over all rows.
    pub fitted_constants: Slopes,
    pub hypothesis: HypothesisNorms,
    pub factors: NormFactors,
}

pub fn scaling_study(ctx: &ParametrixContext, n_list: &[usize], m: usize, epsilon: f64) -> Result<ScalingStudy> {
    if n_list.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "scaling study needs at least 3 slice counts, got {}",
            n_list.len()
        )));
    }
    let hypothesis = solver::hypothesis_norms(ctx.traj, ctx.forcing.unwrap_or(&Forcing::none()), epsilon)?;
    let factors = parametrix::norm_factors(&hypothesis);
    let horizon = ctx.traj.t_end() - ctx.traj.t0();
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &n in n_list {
        let table = parametrix::remainder_table(ctx, n, m, &factors)?;
        let max = |f: fn(&RemainderReport) -> f64| table.iter().map(f).fold(0.0, f64::max);
        let (a, b, c) = (max(|r| r.r1), max(|r| r.r2), max(|r| r.r3));
        let nf = n as f64;
        points.push(ScalingPoint {
            n,
            max_r1: a,
            max_r2: b,
            max_r3: c,
            total_r1: nf * a,
            total_r2: nf * b,
            total_r3: nf * c,
        });
        rows.extend(table);
    }
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let col = |f: fn(&ScalingPoint) -> f64| points.iter().map(f).collect::<Vec<_>>();
    let slopes = Slopes {
        r1: fit_slope(&ns, &col(|p| p.max_r1)),
        r2: fit_slope(&ns, &col(|p| p.max_r2)),
        r3: fit_slope(&ns, &col(|p| p.max_r3)),
    };
    let total_slopes = Slopes {
        r1: fit_slope(&ns, &col(|p| p.total_r1)),
        r2: fit_slope(&ns, &col(|p| p.total_r2)),
        r3: fit_slope(&ns, &col(|p| p.total_r3)),
    };
    let rate_eps = 1.0 + epsilon / 2.0;
    let fit = |value: fn(&RemainderReport) -> f64, rate: f64, factor: f64| {
        if factor == 0.0 {
            return f64::NAN;
        }
        rows.iter()
            .map(|r| value(r) / ((horizon / r.n as f64).powf(rate) * factor))
            .fold(0.0, f64::max)
    };
    let fitted_constants = Slopes {
        r1: fit(|r| r.r1, 1.5, factors.n1),
        r2: fit(|r| r.r2, rate_eps, factors.n2),
        r3: fit(|r| r.r3, rate_eps, factors.n3),
    };
    Ok(ScalingStudy {
        epsilon,
        horizon,
        quadrature_nodes: m,
        points,
        slopes,
        total_slopes,
        predicted: Slopes { r1: -1.5, r2: -rate_eps, r3: -rate_eps },
        fitted_constants,
        rows,
        hypothesis,
        factors,
    })
}

/// Sample families of the projector probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProbeSample {
    Random { band: f64 },
    GradientDominant { delta: f64 },
    Bump { center: [f64; 3], width: f64 },
    /// Solenoidal field plus `delta` times a unit gradient.
    NearlySolenoidal { delta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpProbeReport {
    pub p: f64,
    pub samples: usize,
    pub seed: u64,
    pub max_ratio: f64,
    pub argmax_index: usize,
    pub argmax: ProbeSample,
    /// Largest ratio per family: random, gradient-dominant, bump, nearly solenoidal.
    pub family_max: [f64; 4],
}

fn probe_field(grid: Grid, seed: u64, index: usize) -> Result<(ProbeSample, Field)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64));
    let sub_seed: u64 = rng.gen();
    let max_band = (grid.n() / 3 - 1) as f64;
    let d = grid.dim();
    match index % 4 {
        0 => {
            let band = rng.gen_range(1.0..=max_band).floor();
            Ok((ProbeSample::Random { band }, solver::random_field(grid, sub_seed, band, 1.0)?))
        }
        1 => {
            let delta = [0.0, 0.1, 1.0][(index / 4) % 3];
            let band = rng.gen_range(2.0..=max_band.min(8.0)).floor();
            let g = solver::random_field(grid, sub_seed, band, 1.0)?;
            // first component as a scalar potential
            let potential = Field::scalar(grid, g.component(0).to_vec())?;
            let gradient = operators::grad(&potential)?;
            let gradient = gradient.scale(1.0 / gradient.l2_norm().max(f64::MIN_POSITIVE));
            let sol = solver::random_solenoidal(grid, sub_seed ^ 1, band, 1.0)?;
            Ok((ProbeSample::GradientDominant { delta }, gradient.lincomb(1.0, &sol, delta)?))
        }
        3 => {
            let delta = [0.0, 1e-6, 1e-3][(index / 4) % 3];
            let band = rng.gen_range(1.0..=max_band).floor();
            let sol = solver::random_solenoidal(grid, sub_seed, band, 1.0)?;
            let potential = Field::scalar(grid, solver::random_field(grid, sub_seed ^ 1, band, 1.0)?.component(0).to_vec())?;
            let gradient = operators::grad(&potential)?;
            let gradient = gradient.scale(1.0 / gradient.l2_norm().max(f64::MIN_POSITIVE));
            Ok((ProbeSample::NearlySolenoidal { delta }, sol.lincomb(1.0, &gradient, delta)?))
        }
        _ => {
            let mut center = [0.0; 3];
            for c in center.iter_mut().take(d) {
                *c = rng.gen_range(0.0..grid.length());
            }
            let width = rng.gen_range(0.2..0.6);
            let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let field = Field::vector_from_fn(grid, |x| {
                let r2: f64 = (0..d).map(|a| grid.minimal_image(x[a] - center[a]).powi(2)).sum();
                let bump = (-r2 / (2.0 * width * width)).exp();
                let mut v = [0.0; 3];
                for a in 0..d {
                    v[a] = dir[a] * bump;
                }
                v
            })?;
            Ok((ProbeSample::Bump { center, width }, field))
        }
    }
}

/// `max ‖Pφ‖_p / ‖φ‖_p` over `samples` seeded fields.
pub fn lp_probe(grid: Grid, p: f64, samples: usize, seed: u64) -> Result<LpProbeReport> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("probe needs p >= 1, got {p}")));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("probe needs at least one sample".into()));
    }
    let ratios: Vec<(ProbeSample, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let (desc, phi) = probe_field(grid, seed, i)?;
            let proj = operators::leray_project(&phi)?;
            Ok((desc, proj.lp_norm(p)? / phi.lp_norm(p)?))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    let mut family_max = [0.0f64; 4];
    for (i, (_, r)) in ratios.iter().enumerate() {
        if *r > ratios[best].1 {
            best = i;
        }
        family_max[i % 4] = family_max[i % 4].max(*r);
    }
    Ok(LpProbeReport {
        p,
        samples,
        seed,
        max_ratio: ratios[best].1,
        argmax_index: best,
        argmax: ratios[best].0,
        family_max,
    })
}

fn require_3d(f: &Field) -> Result<()> {
    if f.grid().dim() != 3 {
        return Err(Error::DimensionMismatch("vorticity tools need a 3D field".into()));
    }
    Ok(())
}

/// `ω = ∇ × u` for a 3D velocity.
pub fn vorticity(u: &Field) -> Result<Field> {
    require_3d(u)?;
    operators::curl(u)
}

/// Vortex stretching `(ω·∇)u`, dealiased.
pub fn stretching(omega: &Field, u: &Field) -> Result<Field> {
    require_3d(u)?;
    operators::convective_derivative(omega, u)
}

/// Mean-free solenoidal velocity with curl `ω`: the multiplier `i k × ω̂ / |k|²`.
pub fn biot_savart(omega: &Field) -> Result<Field> {
    require_3d(omega)?;
    omega.require_vector()?;
    let mean = omega.mean();
    let scale = omega.lp_norm(2.0)? / omega.grid().volume().sqrt();
    if mean.iter().any(|m| m.abs() > 1e-12 * scale.max(1.0)) {
        return Err(Error::InvalidArgument(format!("Biot–Savart needs a mean-free vorticity, mean {mean:?}")));
    }
    omega.map_modes(3, |k, _, w, out| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 {
            out.iter_mut().for_each(|o| *o = num_zero());
            return;
        }
        let i = rustfft::num_complex::Complex64::new(0.0, 1.0);
        out[0] = i * (w[2] * k[1] - w[1] * k[2]) / k2;
        out[1] = i * (w[0] * k[2] - w[2] * k[0]) / k2;
        out[2] = i * (w[1] * k[0] - w[0] * k[1]) / k2;
    })
}

fn num_zero() -> rustfft::num_complex::Complex64 {
    rustfft::num_complex::Complex64::new(0.0, 0.0)
}

/// Largest L2 residual of `∂tω + u·∇ω - νΔω - ω·∇u - ∇×Pf` over interior
/// snapshots (centered differences in time), with the largest `‖ω‖₂`.
pub fn vorticity_residual_check(traj: &Trajectory, forcing: &Forcing) -> Result<(f64, f64)> {
    require_3d(traj.first())?;
    if traj.len() < 3 {
        return Err(Error::InvalidArgument("residual check needs at least 3 snapshots".into()));
    }
    let omegas: Vec<Field> = traj.snapshots().iter().map(vorticity).collect::<Result<_>>()?;
    let grid = *traj.grid();
    let nu = traj.nu();
    let mut worst: f64 = 0.0;
    for j in 1..traj.len() - 1 {
        let dt_omega = omegas[j + 1].lincomb(0.5 / traj.dt(), &omegas[j - 1], -0.5 / traj.dt())?;
        let u = traj.snapshot(j);
        let transport = operators::convective_derivative(u, &omegas[j])?;
        let diffusion = operators::laplacian(&omegas[j])?.scale(nu);
        let stretch = stretching(&omegas[j], u)?;
        let source = operators::curl(&forcing.at(grid, traj.time(j)))?;
        let rhs = diffusion.add(&stretch)?.add(&source)?.sub(&transport)?;
        worst = worst.max(dt_omega.sub(&rhs)?.l2_norm());
    }
    let omega_max = omegas.iter().map(|w| w.l2_norm()).fold(0.0, f64::max);
    Ok((worst, omega_max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VorticityReport {
    /// `‖ω(T)‖₁`
    pub lhs: f64,
    /// `‖ω0‖₁`
    pub omega0_l1: f64,
    /// `∫₀ᵀ ‖∇×f‖₁`
    pub curl_forcing_l1: f64,
    /// `∫₀ᵀ ‖∇u‖₂²` (trapezoid over snapshots)
    pub dirichlet_integral: f64,
    pub bound: f64,
    pub slack: f64,
    /// `∫₀ᵀ ‖∇ω‖₁`, reported without threshold.
    pub grad_omega_l1_integral: f64,
    /// `‖u0‖₁` and the constant fitted to the `‖u0‖₁ + ∫‖∇×f‖₁ + C ‖∇u‖_{L²L²}` form.
    pub u0_l1: f64,
    pub statement_constant: f64,
    pub biot_savart_error: f64,
    pub enstrophy_identity_error: f64,
    pub residual: f64,
    pub residual_relative: f64,
    pub checks: Vec<Check>,
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut terms = values.to_vec();
    terms[0] *= 0.5;
    *terms.last_mut().expect("nonempty") *= 0.5;
    h * pairwise_sum(&terms)
}

pub fn vorticity_l1_check(u0: &Field, forcing: &Forcing, cfg: &SolverConfig) -> Result<(VorticityReport, Trajectory)> {
    require_3d(u0)?;
    let traj = solver::solve(u0, forcing, cfg)?;
    let (steps, _) = cfg.steps()?;
    let omegas: Vec<Field> = traj.snapshots().iter().map(vorticity).collect::<Result<_>>()?;
    let omega0_l1 = omegas[0].lp_norm(1.0)?;
    let lhs = omegas.last().expect("nonempty").lp_norm(1.0)?;
    let curl_forcing_l1 = match forcing.pattern() {
        Some(p) => forcing.time_integral(operators::curl(p)?.lp_norm(1.0)?, cfg.t_final, steps),
        None => 0.0,
    };
    let grads: Vec<f64> = traj
        .snapshots()
        .iter()
        .map(|u| Ok(operators::gradient_tensor(u)?.l2_norm()))
        .collect::<Result<_>>()?;
    let dirichlet_integral = trapezoid(&grads.iter().map(|g| g * g).collect::<Vec<_>>(), traj.dt());
    let grad_omega: Vec<f64> = omegas
        .iter()
        .map(|w| operators::gradient_tensor(w)?.lp_norm(1.0))
        .collect::<Result<_>>()?;
    let grad_omega_l1_integral = trapezoid(&grad_omega, traj.dt());
    let bound = omega0_l1 + curl_forcing_l1 + dirichlet_integral;
    let slack = bound - lhs;

    let u0_l1 = traj.first().lp_norm(1.0)?;
    let statement_constant = if dirichlet_integral > 0.0 {
        (lhs - u0_l1 - curl_forcing_l1).max(0.0) / dirichlet_integral.sqrt()
    } else {
        0.0
    };

    let mut bs_err: f64 = 0.0;
    let mut enstrophy: f64 = 0.0;
    for (j, (u, w)) in traj.snapshots().iter().zip(&omegas).enumerate() {
        let mean = u.mean();
        let centered = Field::new(
            *u.grid(),
            u.components().iter().zip(&mean).map(|(c, m)| c.iter().map(|v| v - m).collect()).collect(),
        )?;
        let scale = u.l2_norm().max(f64::MIN_POSITIVE);
        bs_err = bs_err.max(biot_savart(w)?.sub(&centered)?.l2_norm() / scale);
        let g = grads[j];
        enstrophy = enstrophy.max(relative(w.l2_norm() - g, g));
    }
    let (residual, omega_max) = if traj.len() >= 3 {
        vorticity_residual_check(&traj, forcing)?
    } else {
        (0.0, 0.0)
    };
    let residual_relative = relative(residual, omega_max);
    let checks = vec![
        Check::at_least("vorticity_bound_slack", slack, -1e-6 * bound),
        Check::at_most("biot_savart_round_trip", bs_err, 1e-10),
        Check::at_most("enstrophy_identity", enstrophy, 1e-10),
        Check::at_most("vorticity_residual_relative", residual_relative, 1e-3),
    ];
    let report = VorticityReport {
        lhs,
        omega0_l1,
        curl_forcing_l1,
        dirichlet_integral,
        bound,
        slack,
        grad_omega_l1_integral,
        u0_l1,
        statement_constant,
        biot_savart_error: bs_err,
        enstrophy_identity_error: enstrophy,
        residual,
        residual_relative,
        checks,
    };
    Ok((report, traj))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_fit_recovers_power_law() {
        let xs = [2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((fit_slope(&xs, &ys) + 1.5).abs() < 1e-12);
        assert!(fit_slope(&xs, &[0.0, 1.0, 1.0, 1.0]).is_nan());
    }

    #[test]
    fn operator_battery_passes_in_2d_and_3d() {
        let checks = operator_suite(Grid::periodic(2, 32).unwrap(), 0.1, 3).unwrap();
        assert!(all_passed(&checks), "{checks:#?}");
        let checks = operator_suite(Grid::periodic(3, 32).unwrap(), 0.1, 3).unwrap();
        assert!(all_passed(&checks), "{checks:#?}");
    }

    #[test]
    fn energy_of_zero_datum() {
        let g = Grid::periodic(2, 16).unwrap();
        let (r, _) = energy_check(&Field::zeros(g, 2), &Forcing::none(), &SolverConfig::new(0.1, 0.1, 0.01)).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(r.passed);
    }

    #[test]
    fn taylor_green_energy_decays_in_closed_form() {
        let g = Grid::periodic(2, 32).unwrap();
        let u0 = solver::taylor_green_2d(g, 0.0, 0.1).unwrap();
        let (r, _) = energy_check(&u0, &Forcing::none(), &SolverConfig::new(0.1, 0.5, 0.01)).unwrap();
        assert!((r.lhs - (-0.1f64).exp() * r.initial_l2).abs() < 1e-6);
        assert!(r.slack > 0.0 && r.passed);
    }

    #[test]
    fn scaling_study_needs_three_points_and_handles_zero() {
        let g = Grid::periodic(2, 8).unwrap();
        let traj = Trajectory::new(vec![Field::zeros(g, 2); 9], 0.0, 0.125, 0.1).unwrap();
        let ctx = ParametrixContext::new(&traj).unwrap();
        assert!(scaling_study(&ctx, &[2, 4], 2, 0.5).is_err());
        let study = scaling_study(&ctx, &[2, 4, 8], 2, 0.5).unwrap();
        assert!(study.slopes.r1.is_nan() && study.slopes.r2.is_nan());
        assert!(study.points.iter().all(|p| p.max_r1 == 0.0));
    }

    #[test]
    fn projector_probe_in_l2_and_on_solenoidal_fields() {
        let g = Grid::periodic(2, 32).unwrap();
        let r = lp_probe(g, 2.0, 30, 7).unwrap();
        assert!(r.max_ratio <= 1.0 + 1e-12);
        let again = lp_probe(g, 2.0, 30, 7).unwrap();
        assert_eq!(r, again);
        let u = solver::random_solenoidal(g, 1, 5.0, 1.0).unwrap();
        for p in [1.25, 4.0] {
            let pu = operators::leray_project(&u).unwrap();
            assert!((pu.lp_norm(p).unwrap() / u.lp_norm(p).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn biot_savart_inverts_curl() {
        let g = Grid::periodic(3, 16).unwrap();
        let u = solver::random_solenoidal(g, 9, 4.0, 1.0).unwrap().add(&Field::constant(g, &[0.3, 0.0, -0.1])).unwrap();
        let w = vorticity(&u).unwrap();
        let back = biot_savart(&w).unwrap();
        let centered = u.sub(&Field::constant(g, &[0.3, 0.0, -0.1])).unwrap();
        assert!(back.sub(&centered).unwrap().l2_norm() < 1e-10);
        let grad = operators::gradient_tensor(&u).unwrap().l2_norm();
        assert!((w.l2_norm() - grad).abs() < 1e-10 * grad);
        assert!(biot_savart(&Field::constant(g, &[1.0, 0.0, 0.0])).is_err());
        assert!(vorticity(&solver::taylor_green_2d(Grid::periodic(2, 8).unwrap(), 0.0, 0.1).unwrap()).is_err());
    }

    #[test]
    fn vorticity_bound_for_zero_and_scaled_data() {
        let g = Grid::periodic(3, 8).unwrap();
        let cfg = SolverConfig::new(0.5, 0.02, 0.01);
        let (r, _) = vorticity_l1_check(&Field::zeros(g, 3), &Forcing::none(), &cfg).unwrap();
        assert_eq!((r.lhs, r.bound, r.residual), (0.0, 0.0, 0.0));
        let u0 = solver::taylor_green_3d_init(g).unwrap();
        let (a, _) = vorticity_l1_check(&u0, &Forcing::none(), &cfg).unwrap();
        let (b, _) = vorticity_l1_check(&u0.scale(0.5), &Forcing::none(), &cfg).unwrap();
        assert!((b.omega0_l1 - 0.5 * a.omega0_l1).abs() <= 1e-14 * a.omega0_l1);
        assert!(a.slack >= 0.0);
    }
}
