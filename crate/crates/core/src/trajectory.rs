//! Time-indexed sequence of solenoidal velocity snapshots.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{Grid, Point};
use crate::operators;

/// Relative divergence tolerance `‖div u‖₂ <= tol * ‖∇u‖₂` for stored snapshots.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Trajectory {
    fields: Vec<Field>,
    t0: f64,
    dt: f64,
    nu: f64,
}

impl Trajectory {
    /// Validates shapes, spacing and the divergence-free invariant.
    pub fn new(fields: Vec<Field>, t0: f64, dt: f64, nu: f64) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidArgument("trajectory needs at least one snapshot".into()))?;
        if fields.len() > 1 && !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("snapshot spacing must be positive, got {dt}")));
        }
        let grid = *first.grid();
        for (j, f) in fields.iter().enumerate() {
            f.require_vector()?;
            if !f.grid().same_shape(&grid) {
                return Err(Error::SizeMismatch { expected: grid.len(), actual: f.grid().len() });
            }
            let defect = divergence_defect(f)?;
            if defect > DIVERGENCE_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "snapshot {j} is not divergence-free (relative defect {defect:.3e})"
                )));
            }
        }
        Ok(Trajectory { fields, t0, dt, nu })
    }

    pub fn grid(&self) -> &Grid {
        self.fields[0].grid()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn snapshot(&self, j: usize) -> &Field {
        &self.fields[j]
    }

    pub fn snapshots(&self) -> &[Field] {
        &self.fields
    }

    pub fn first(&self) -> &Field {
        &self.fields[0]
    }

    pub fn last(&self) -> &Field {
        &self.fields[self.len() - 1]
    }

    /// Same snapshots multiplied by `a` (no longer a Navier–Stokes solution in
    /// general; used for homogeneity checks).
    pub fn scaled(&self, a: f64) -> Trajectory {
        Trajectory {
            fields: self.fields.iter().map(|f| f.scale(a)).collect(),
            t0: self.t0,
            dt: self.dt,
            nu: self.nu,
        }
    }

    /// Bracketing snapshot `j` and weight `w` with `s = (1 - w) t_j + w t_{j+1}`.
    pub fn bracket(&self, s: f64) -> Result<(usize, f64)> {
        let end = self.t_end();
        let tol = 1e-12 * (1.0 + end.abs());
        if !(s >= self.t0 - tol && s <= end + tol) {
            return Err(Error::TimeOutOfRange { time: s, start: self.t0, end });
        }
        if self.len() == 1 {
            return Ok((0, 0.0));
        }
        let pos = ((s - self.t0) / self.dt).clamp(0.0, (self.len() - 1) as f64);
        let j = (pos.floor() as usize).min(self.len() - 2);
        Ok((j, pos - j as f64))
    }

    /// Linear-in-time interpolation of the velocity at time `s`.
    pub fn field_at(&self, s: f64) -> Result<Field> {
        let (j, w) = self.bracket(s)?;
        if w == 0.0 {
            return Ok(self.fields[j].clone());
        }
        if w == 1.0 {
            return Ok(self.fields[j + 1].clone());
        }
        let a = &self.fields[j];
        let b = &self.fields[j + 1];
        let spectra: Vec<Vec<Complex64>> = a
            .spectra()
            .iter()
            .zip(b.spectra())
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * (1.0 - w) + q * w).collect())
            .collect();
        Field::from_spectra(*a.grid(), spectra)
    }

    /// Velocity at an off-grid point, trigonometric in space and linear in time.
    pub fn velocity_at(&self, s: f64, point: Point, out: &mut [f64]) -> Result<()> {
        let (j, w) = self.bracket(s)?;
        self.fields[j].evaluate_into(point, out);
        if w != 0.0 {
            let mut next = [0.0; 3];
            let d = self.grid().dim();
            self.fields[j + 1].evaluate_into(point, &mut next[..d]);
            for (o, n) in out.iter_mut().zip(next) {
                *o = (1.0 - w) * *o + w * n;
            }
        }
        Ok(())
    }
}

/// `‖div u‖₂ / ‖∇u‖₂`, or the absolute divergence norm when `∇u` vanishes.
pub fn divergence_defect(u: &Field) -> Result<f64> {
    let div = operators::div(u)?.l2_norm();
    let grad = operators::gradient_tensor(u)?.l2_norm();
    Ok(if grad > 0.0 { div / grad } else { div })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(grid: Grid, c: f64) -> Field {
        Field::constant(grid, &[c, 0.0])
    }

    #[test]
    fn rejects_divergent_snapshot() {
        let g = Grid::periodic(2, 16).unwrap();
        let bad = Field::vector_from_fn(g, |p| [p[0].sin(), 0.0, 0.0]).unwrap();
        assert!(Trajectory::new(vec![bad], 0.0, 0.1, 1.0).is_err());
        assert!(Trajectory::new(vec![], 0.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn interpolates_linearly_in_time() {
        let g = Grid::periodic(2, 8).unwrap();
        let traj = Trajectory::new(vec![uniform(g, 1.0), uniform(g, 3.0)], 0.0, 0.5, 1.0).unwrap();
        let f = traj.field_at(0.125).unwrap();
        assert!((f.component(0)[5] - 1.5).abs() < 1e-14);
        let mut out = [0.0; 2];
        traj.velocity_at(0.375, [1.0, 2.0, 0.0], &mut out).unwrap();
        assert!((out[0] - 2.5).abs() < 1e-14);
        assert!(traj.field_at(0.6).is_err());
        assert!(traj.field_at(-0.1).is_err());
    }

    #[test]
    fn bracket_handles_endpoints() {
        let g = Grid::periodic(2, 8).unwrap();
        let traj = Trajectory::new(vec![uniform(g, 0.0); 5], 1.0, 0.25, 1.0).unwrap();
        assert_eq!(traj.bracket(1.0).unwrap(), (0, 0.0));
        assert_eq!(traj.bracket(2.0).unwrap(), (3, 1.0));
        assert_eq!(traj.t_end(), 2.0);
    }
}
