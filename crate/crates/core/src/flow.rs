//! Characteristic flows `θ_{s,τ}` of a stored velocity trajectory.
//!
//! The flow is integrated backward from the freezing time `τ` to `s <= τ` with
//! classical RK4. Two sign conventions are supported:
//!
//! * [`Orientation::Downstream`]: `θ_{s,τ}(x) = x + ∫_s^τ u(σ, θ_{σ,τ}(x)) dσ`.
//! * [`Orientation::Upstream`]: `θ_{s,τ}(x) = x - ∫_s^τ u(σ, θ_{σ,τ}(x)) dσ`,
//!   the foot at time `s` of the particle path through `x` at time `τ`. This is
//!   the center of the fundamental solution of `∂_t + b(t)·∇ - νΔ`.
//!
//! Both are measure preserving for solenoidal velocities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{pairwise_sum, Field};
use crate::grid::{Grid, Point};
use crate::trajectory::Trajectory;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    Downstream,
    Upstream,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::Downstream => 1.0,
            Orientation::Upstream => -1.0,
        }
    }
}

/// Default ODE step: a quarter of the snapshot spacing.
pub fn default_h_ode(traj: &Trajectory) -> f64 {
    if traj.len() > 1 {
        traj.dt() / 4.0
    } else {
        1e-2
    }
}

fn check_times(traj: &Trajectory, s: f64, tau: f64, h_ode: f64) -> Result<()> {
    if !(h_ode > 0.0 && h_ode.is_finite()) {
        return Err(Error::InvalidArgument(format!("ODE step must be positive, got {h_ode}")));
    }
    if s > tau {
        return Err(Error::InvalidArgument(format!("flow needs s <= tau, got s = {s}, tau = {tau}")));
    }
    traj.bracket(s)?;
    traj.bracket(tau)?;
    Ok(())
}

/// RK4 from `from` down to `to` (`to <= from`), unwrapped coordinates.
fn integrate(
    traj: &Trajectory,
    from: f64,
    to: f64,
    start: Point,
    h_ode: f64,
    orientation: Orientation,
) -> Result<Point> {
    let span = from - to;
    if span <= 0.0 {
        return Ok(start);
    }
    let d = traj.grid().dim();
    let steps = ((span / h_ode) - 1e-9).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let sign = orientation.sign();
    let mut x = start;
    let mut k = [[0.0f64; 3]; 4];
    // Backward variable r = from - σ; dx/dr = sign * u(from - r, x).
    let velocity = |r: f64, p: Point, out: &mut [f64; 3]| -> Result<()> {
        let sigma = (from - r).max(to);
        traj.velocity_at(sigma, p, &mut out[..d])?;
        for v in out[..d].iter_mut() {
            *v *= sign;
        }
        Ok(())
    };
    for step in 0..steps {
        let r = step as f64 * h;
        velocity(r, x, &mut k[0])?;
        let mut y = x;
        for a in 0..d {
            y[a] = x[a] + 0.5 * h * k[0][a];
        }
        velocity(r + 0.5 * h, y, &mut k[1])?;
        for a in 0..d {
            y[a] = x[a] + 0.5 * h * k[1][a];
        }
        velocity(r + 0.5 * h, y, &mut k[2])?;
        for a in 0..d {
            y[a] = x[a] + h * k[2][a];
        }
        velocity(r + h, y, &mut k[3])?;
        for a in 0..d {
            x[a] += h / 6.0 * (k[0][a] + 2.0 * k[1][a] + 2.0 * k[2][a] + k[3][a]);
        }
    }
    Ok(x)
}

/// `θ_{s,τ}(x0)` in the [`Orientation::Downstream`] convention, wrapped.
pub fn flow_point(traj: &Trajectory, s: f64, tau: f64, x0: Point, h_ode: f64) -> Result<Point> {
    flow_point_oriented(traj, s, tau, x0, h_ode, Orientation::Downstream)
}

pub fn flow_point_oriented(
    traj: &Trajectory,
    s: f64,
    tau: f64,
    x0: Point,
    h_ode: f64,
    orientation: Orientation,
) -> Result<Point> {
    check_times(traj, s, tau, h_ode)?;
    let x = integrate(traj, tau, s, x0, h_ode, orientation)?;
    Ok(traj.grid().wrap_point(x))
}

/// Unwrapped positions `θ_{s_j,τ}(x0)` for every requested time `s_j <= τ`,
/// from a single backward integration. Output order follows `times`.
pub fn flow_path(
    traj: &Trajectory,
    tau: f64,
    x0: Point,
    times: &[f64],
    h_ode: f64,
    orientation: Orientation,
) -> Result<Vec<Point>> {
    for &s in times {
        check_times(traj, s, tau, h_ode)?;
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut out = vec![[0.0; 3]; times.len()];
    let mut current = tau;
    let mut x = x0;
    for j in order {
        x = integrate(traj, current, times[j], x, h_ode, orientation)?;
        current = times[j];
        out[j] = x;
    }
    Ok(out)
}

/// Grid sampling of `θ_{s,t}`.
#[derive(Clone, Debug)]
pub struct FlowMap {
    pub grid: Grid,
    pub s: f64,
    pub t: f64,
    pub orientation: Orientation,
    /// Wrapped positions in `[0, L)^d`, indexed by node.
    pub points: Vec<Point>,
    /// Unwrapped displacement `θ_{s,t}(x) - x`, indexed by node.
    pub displacement: Vec<Point>,
}

impl FlowMap {
    /// Identity map at time `t`.
    pub fn identity(grid: Grid, t: f64, orientation: Orientation) -> Self {
        FlowMap {
            grid,
            s: t,
            t,
            orientation,
            points: (0..grid.len()).map(|i| grid.node(i)).collect(),
            displacement: vec![[0.0; 3]; grid.len()],
        }
    }

    fn from_unwrapped(grid: Grid, s: f64, t: f64, orientation: Orientation, unwrapped: Vec<Point>) -> Self {
        let d = grid.dim();
        let displacement = unwrapped
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let x = grid.node(i);
                let mut disp = [0.0; 3];
                for a in 0..d {
                    disp[a] = p[a] - x[a];
                }
                disp
            })
            .collect();
        let points = unwrapped.iter().map(|&p| grid.wrap_point(p)).collect();
        FlowMap { grid, s, t, orientation, points, displacement }
    }

    /// Displacement as a vector field (export format).
    pub fn displacement_field(&self) -> Result<Field> {
        let d = self.grid.dim();
        let comps = (0..d).map(|a| self.displacement.iter().map(|p| p[a]).collect()).collect();
        Field::new(self.grid, comps)
    }
}

/// [`flow_point`] at every node of the trajectory grid (downstream convention).
pub fn flow_grid(traj: &Trajectory, s: f64, t: f64, h_ode: f64) -> Result<FlowMap> {
    flow_grid_oriented(traj, s, t, h_ode, Orientation::Downstream)
}

pub fn flow_grid_oriented(
    traj: &Trajectory,
    s: f64,
    t: f64,
    h_ode: f64,
    orientation: Orientation,
) -> Result<FlowMap> {
    Ok(flow_grid_multi(traj, t, &[s], h_ode, orientation)?.remove(0))
}

/// Flow maps `θ_{s_j,t}` for several source times, one integration per node.
pub fn flow_grid_multi(
    traj: &Trajectory,
    t: f64,
    times: &[f64],
    h_ode: f64,
    orientation: Orientation,
) -> Result<Vec<FlowMap>> {
    let grid = *traj.grid();
    for &s in times {
        check_times(traj, s, t, h_ode)?;
    }
    let paths: Vec<Vec<Point>> = (0..grid.len())
        .into_par_iter()
        .map(|i| flow_path(traj, t, grid.node(i), times, h_ode, orientation))
        .collect::<Result<_>>()?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let unwrapped = paths.iter().map(|p| p[j]).collect();
            FlowMap::from_unwrapped(grid, s, t, orientation, unwrapped)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureGap {
    pub composed: f64,
    pub plain: f64,
    pub gap: f64,
}

/// Compares `h^d Σ φ(θ(x))` with `h^d Σ φ(x)`, relative to `‖φ‖₁`.
pub fn measure_preservation_gap(map: &FlowMap, phi: &Field) -> Result<MeasureGap> {
    phi.require_scalar()?;
    if !phi.grid().same_shape(&map.grid) {
        return Err(Error::SizeMismatch { expected: map.grid.len(), actual: phi.grid().len() });
    }
    let h = map.grid.cell_volume();
    let composed_values: Vec<f64> = phi.evaluate_many(&map.points).into_iter().map(|v| v[0]).collect();
    let composed = h * pairwise_sum(&composed_values);
    let plain = h * pairwise_sum(phi.component(0));
    let l1 = phi.lp_norm(1.0)?;
    let gap = (composed - plain).abs() / (l1 + f64::EPSILON);
    Ok(MeasureGap { composed, plain, gap })
}

/// `det ∇θ` per node from fourth-order centered differences of the unwrapped
/// displacement (`∇θ = I + ∇(θ - x)`).
pub fn jacobian_determinant(map: &FlowMap) -> Result<Field> {
    let grid = map.grid;
    let d = grid.dim();
    let n = grid.n();
    let h = grid.spacing();
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let m = grid.multi_index(i);
            let mut jac = [[0.0f64; 3]; 3];
            for axis in 0..d {
                let at = |offset: i64| {
                    let mut mm = m;
                    mm[axis] = ((m[axis] as i64 + offset).rem_euclid(n as i64)) as usize;
                    map.displacement[grid.flat_index(&mm[..d])]
                };
                let (p1, p2, m1, m2) = (at(1), at(2), at(-1), at(-2));
                for c in 0..d {
                    let deriv = (8.0 * (p1[c] - m1[c]) - (p2[c] - m2[c])) / (12.0 * h);
                    jac[c][axis] = deriv + if c == axis { 1.0 } else { 0.0 };
                }
            }
            if d == 2 {
                jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]
            } else {
                jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
                    - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
                    + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0])
            }
        })
        .collect();
    Field::scalar(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver;
    use std::f64::consts::PI;

    fn uniform_traj(grid: Grid, times: usize, dt: f64, f: impl Fn(f64) -> [f64; 2]) -> Trajectory {
        let fields = (0..times)
            .map(|j| {
                let v = f(j as f64 * dt);
                Field::constant(grid, &v)
            })
            .collect();
        Trajectory::new(fields, 0.0, dt, 0.1).unwrap()
    }

    #[test]
    fn zero_velocity_is_identity() {
        let g = Grid::periodic(2, 8).unwrap();
        let traj = uniform_traj(g, 3, 0.5, |_| [0.0, 0.0]);
        let x = [1.0, 2.0, 0.0];
        assert_eq!(flow_point(&traj, 0.0, 1.0, x, 0.1).unwrap(), x);
        let map = flow_grid(&traj, 0.2, 0.9, 0.1).unwrap();
        let phi = Field::scalar_from_fn(g, |p| p[0].sin() + 2.0).unwrap();
        assert_eq!(measure_preservation_gap(&map, &phi).unwrap().gap, 0.0);
    }

    #[test]
    fn constant_drift_in_both_orientations() {
        let g = Grid::periodic(2, 8).unwrap();
        let traj = uniform_traj(g, 5, 0.25, |_| [0.5, -1.0]);
        let x = [6.0, 0.5, 0.0];
        let down = flow_point(&traj, 0.25, 1.0, x, 0.05).unwrap();
        assert!((down[0] - (6.375 - 2.0 * PI)).abs() < 1e-12);
        assert!((down[1] - (0.5 - 0.75 + 2.0 * PI)).abs() < 1e-12);
        let up = flow_point_oriented(&traj, 0.25, 1.0, x, 0.05, Orientation::Upstream).unwrap();
        assert!((up[0] - 5.625).abs() < 1e-12);
        assert!((up[1] - 1.25).abs() < 1e-12);
        let det = jacobian_determinant(&flow_grid(&traj, 0.0, 1.0, 0.1).unwrap()).unwrap();
        assert!(det.component(0).iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn oscillating_drift_matches_closed_form() {
        let g = Grid::periodic(2, 8).unwrap();
        let dt = 1e-3;
        let traj = uniform_traj(g, 1001, dt, |t| [t.cos(), 0.0]);
        let x = [1.0, 1.0, 0.0];
        let p = flow_point(&traj, 0.2, 0.9, x, dt / 4.0).unwrap();
        // Linear-in-time interpolation limits accuracy to O(dt²).
        assert!((p[0] - (1.0 + 0.9f64.sin() - 0.2f64.sin())).abs() < 1e-7);
    }

    #[test]
    fn flow_at_equal_times_is_identity() {
        let g = Grid::periodic(2, 16).unwrap();
        let u = solver::taylor_green_2d(g, 0.0, 0.1).unwrap();
        let traj = Trajectory::new(vec![u.clone(), u], 0.0, 0.5, 0.1).unwrap();
        let map = flow_grid(&traj, 0.3, 0.3, 0.01).unwrap();
        for (i, p) in map.points.iter().enumerate() {
            assert_eq!(*p, g.node(i));
        }
    }

    #[test]
    fn composition_and_multi_time_paths() {
        let g = Grid::periodic(2, 16).unwrap();
        let u0 = solver::taylor_green_2d(g, 0.0, 0.1).unwrap();
        let traj = solver::solve(&u0, &solver::Forcing::none(), &solver::SolverConfig::new(0.1, 0.5, 0.01)).unwrap();
        let x = [0.7, 2.1, 0.0];
        for orientation in [Orientation::Downstream, Orientation::Upstream] {
            let mid = flow_point_oriented(&traj, 0.3, 0.5, x, 0.0025, orientation).unwrap();
            let two = flow_point_oriented(&traj, 0.1, 0.3, mid, 0.0025, orientation).unwrap();
            let one = flow_point_oriented(&traj, 0.1, 0.5, x, 0.0025, orientation).unwrap();
            assert!((0..2).all(|a| g.minimal_image(two[a] - one[a]).abs() < 1e-10));
            let path = flow_path(&traj, 0.5, x, &[0.1, 0.3], 0.0025, orientation).unwrap();
            assert!((0..2).all(|a| g.minimal_image(path[0][a] - one[a]).abs() < 1e-10));
        }
    }

    #[test]
    fn taylor_green_flow_preserves_measure() {
        let g = Grid::periodic(2, 32).unwrap();
        let u0 = solver::taylor_green_2d(g, 0.0, 0.1).unwrap();
        let traj = solver::solve(&u0, &solver::Forcing::none(), &solver::SolverConfig::new(0.1, 0.25, 1e-2)).unwrap();
        let map = flow_grid(&traj, 0.0, 0.25, 2.5e-3).unwrap();
        let phi = Field::scalar_from_fn(g, |p| (p[0] + 0.3).cos() * p[1].sin() + 0.5 * (2.0 * p[1]).cos() + 1.0).unwrap();
        assert!(measure_preservation_gap(&map, &phi).unwrap().gap < 1e-6);
        let det = jacobian_determinant(&map).unwrap();
        assert!(det.component(0).iter().all(|v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn rejects_bad_times() {
        let g = Grid::periodic(2, 8).unwrap();
        let traj = uniform_traj(g, 3, 0.5, |_| [0.0, 0.0]);
        assert!(flow_point(&traj, 0.5, 0.2, [0.0; 3], 0.1).is_err());
        assert!(flow_point(&traj, 0.0, 1.5, [0.0; 3], 0.1).is_err());
        assert!(flow_point(&traj, 0.0, 1.0, [0.0; 3], 0.0).is_err());
    }
}
