//! Reference pseudo-spectral solver for the projected Navier–Stokes system
//! `∂t u + P[u·∇u] = νΔu + Pf` on the torus, plus the closed-form oracle data
//! and the hypothesis norms of the energy estimate.
//!
//! Time stepping is the integrating-factor (Lawson) RK4 scheme: viscous decay
//! is applied exactly per mode and RK4 handles `-P[u·∇u] + Pf`. Products are
//! dealiased with the 2/3 rule and every stage input is re-projected.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{pairwise_sum, Field};
use crate::grid::Grid;
use crate::operators;
use crate::spectral;
use crate::trajectory::Trajectory;

type Spectra = Vec<Vec<Complex64>>;

fn one() -> f64 {
    1.0
}

/// Initial datum description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSpec {
    Zero {},
    /// 2D or 3D Taylor–Green datum (chosen by the grid dimension), times `scale`
    /// (default 1).
    TaylorGreen {
        #[serde(default = "one")]
        scale: f64,
    },
    Random { seed: u64, band: f64, amplitude: f64 },
}

impl InitSpec {
    pub fn build(&self, grid: Grid) -> Result<Field> {
        match *self {
            InitSpec::Zero {} => Ok(Field::zeros(grid, grid.dim())),
            InitSpec::TaylorGreen { scale } => {
                let base = if grid.dim() == 2 {
                    taylor_green_2d(grid, 0.0, 0.0)?
                } else {
                    taylor_green_3d_init(grid)?
                };
                Ok(base.scale(scale))
            }
            InitSpec::Random { seed, band, amplitude } => random_solenoidal(grid, seed, band, amplitude),
        }
    }
}

/// Scalar time profile multiplying a fixed forcing pattern.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TimeProfile {
    Constant {},
    Sin { omega: f64 },
    Cos { omega: f64 },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant {} => 1.0,
            TimeProfile::Sin { omega } => (omega * t).sin(),
            TimeProfile::Cos { omega } => (omega * t).cos(),
        }
    }
}

/// Forcing description; the built pattern is always Leray-projected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingSpec {
    None {},
    TaylorGreen { amplitude: f64, profile: TimeProfile },
    Random { seed: u64, band: f64, amplitude: f64, profile: TimeProfile },
}

/// Forcing `f(t, x) = profile(t) * pattern(x)` with a solenoidal pattern.
#[derive(Clone, Debug)]
pub struct Forcing {
    spec: ForcingSpec,
    pattern: Option<Field>,
    profile: TimeProfile,
}

impl Forcing {
    pub fn none() -> Self {
        Forcing { spec: ForcingSpec::None {}, pattern: None, profile: TimeProfile::Constant {} }
    }

    pub fn build(spec: &ForcingSpec, grid: Grid) -> Result<Self> {
        let (pattern, profile) = match *spec {
            ForcingSpec::None {} => return Ok(Self::none()),
            ForcingSpec::TaylorGreen { amplitude, profile } => {
                let base = if grid.dim() == 2 {
                    taylor_green_2d(grid, 0.0, 0.0)?
                } else {
                    taylor_green_3d_init(grid)?
                };
                (base.scale(amplitude), profile)
            }
            ForcingSpec::Random { seed, band, amplitude, profile } => {
                (random_solenoidal(grid, seed, band, amplitude)?, profile)
            }
        };
        Ok(Forcing { spec: spec.clone(), pattern: Some(operators::leray_project(&pattern)?), profile })
    }

    /// Arbitrary pattern and profile; the pattern is projected.
    pub fn from_pattern(pattern: &Field, profile: TimeProfile) -> Result<Self> {
        Ok(Forcing {
            spec: ForcingSpec::None {},
            pattern: Some(operators::leray_project(pattern)?),
            profile,
        })
    }

    pub fn spec(&self) -> &ForcingSpec {
        &self.spec
    }

    pub fn is_zero(&self) -> bool {
        self.pattern.is_none()
    }

    pub fn pattern(&self) -> Option<&Field> {
        self.pattern.as_ref()
    }

    pub fn profile(&self) -> TimeProfile {
        self.profile
    }

    /// `Pf(t, ·)` on `grid`.
    pub fn at(&self, grid: Grid, t: f64) -> Field {
        match &self.pattern {
            Some(p) => p.scale(self.profile.value(t)),
            None => Field::zeros(grid, grid.dim()),
        }
    }

    /// `∫_0^T ‖f(s)‖ ds` by the composite midpoint rule on `steps` equal
    /// subintervals, for a given spatial norm of the pattern.
    pub fn time_integral(&self, pattern_norm: f64, t_final: f64, steps: usize) -> f64 {
        if self.pattern.is_none() || steps == 0 {
            return 0.0;
        }
        let h = t_final / steps as f64;
        let values: Vec<f64> = (0..steps)
            .map(|j| self.profile.value((j as f64 + 0.5) * h).abs())
            .collect();
        pattern_norm * h * pairwise_sum(&values)
    }
}

/// 2D Taylor–Green solution `e^{-2νt}(cos x₁ sin x₂, -sin x₁ cos x₂)`.
pub fn taylor_green_2d(grid: Grid, t: f64, nu: f64) -> Result<Field> {
    if grid.dim() != 2 {
        return Err(Error::DimensionMismatch("2D Taylor–Green needs a 2D grid".into()));
    }
    let decay = (-2.0 * nu * t).exp();
    let k = grid.base_wavenumber();
    Field::vector_from_fn(grid, |p| {
        let (x, y) = (k * p[0], k * p[1]);
        [decay * x.cos() * y.sin(), -decay * x.sin() * y.cos(), 0.0]
    })
}

/// 3D Taylor–Green datum `(cos x₁ sin x₂ sin x₃, -sin x₁ cos x₂ sin x₃, 0)`.
pub fn taylor_green_3d_init(grid: Grid) -> Result<Field> {
    if grid.dim() != 3 {
        return Err(Error::DimensionMismatch("3D Taylor–Green needs a 3D grid".into()));
    }
    let k = grid.base_wavenumber();
    Field::vector_from_fn(grid, |p| {
        let (x, y, z) = (k * p[0], k * p[1], k * p[2]);
        [x.cos() * y.sin() * z.sin(), -x.sin() * y.cos() * z.sin(), 0.0]
    })
}

/// Seeded random solenoidal field supported on `0 < |k| <= band` (integer
/// frequencies), scaled to L2 norm `amplitude`. Requires `band < n/3`.
pub fn random_solenoidal(grid: Grid, seed: u64, band: f64, amplitude: f64) -> Result<Field> {
    let raw = random_field(grid, seed, band, 1.0)?;
    let projected = operators::leray_project(&raw)?;
    let norm = projected.l2_norm();
    if norm == 0.0 {
        return Ok(projected);
    }
    Ok(projected.scale(amplitude / norm))
}

/// Seeded random vector field (not projected) on `0 < |k| <= band`, scaled to
/// L2 norm `amplitude`.
pub fn random_field(grid: Grid, seed: u64, band: f64, amplitude: f64) -> Result<Field> {
    if !(band > 0.0) || band >= grid.n() as f64 / 3.0 {
        return Err(Error::InvalidArgument(format!(
            "band must lie in (0, n/3) = (0, {:.3}), got {band}",
            grid.n() as f64 / 3.0
        )));
    }
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidArgument(format!("amplitude must be >= 0, got {amplitude}")));
    }
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectra: Spectra = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; d];
    for flat in 0..grid.len() {
        let m = grid.multi_index(flat);
        let r2: f64 = (0..d).map(|a| (grid.signed_frequency(m[a]) as f64).powi(2)).sum();
        // Draw for every mode so the stream does not depend on the band.
        let draws: Vec<(f64, f64)> =
            (0..d).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        if r2 == 0.0 || r2.sqrt() > band {
            continue;
        }
        for (c, (re, im)) in draws.into_iter().enumerate() {
            spectra[c][flat] = Complex64::new(re, im);
        }
    }
    let raw = Field::from_spectra(grid, spectra)?;
    let norm = raw.l2_norm();
    if norm == 0.0 {
        return Ok(raw);
    }
    Ok(raw.scale(amplitude / norm))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: f64,
    pub t_final: f64,
    /// Requested step; shortened if needed so that steps tile `[0, T]` exactly.
    pub dt: f64,
    /// Store every `snapshot_every`-th step (1 = every step).
    pub snapshot_every: usize,
}

impl SolverConfig {
    pub fn new(nu: f64, t_final: f64, dt: f64) -> Self {
        SolverConfig { nu, t_final, dt, snapshot_every: 1 }
    }

    pub fn with_snapshot_every(mut self, every: usize) -> Self {
        self.snapshot_every = every;
        self
    }

    /// Number of steps and the effective step length.
    pub fn steps(&self) -> Result<(usize, f64)> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!("T must be positive, got {}", self.t_final)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        let ratio = self.t_final / self.dt;
        let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio {
            ratio.round() as usize
        } else {
            ratio.ceil() as usize
        };
        let steps = steps.max(1);
        Ok((steps, self.t_final / steps as f64))
    }

    fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("nu must be >= 0, got {}", self.nu)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::InvalidArgument("snapshot_every must be >= 1".into()));
        }
        let (steps, _) = self.steps()?;
        if steps % self.snapshot_every != 0 {
            return Err(Error::InvalidArgument(format!(
                "snapshot_every = {} does not divide the step count {steps}",
                self.snapshot_every
            )));
        }
        Ok(())
    }
}

/// Advective step bound `0.25 h / ‖u0‖_∞`.
pub fn default_dt(u0: &Field) -> Result<f64> {
    let umax = u0.lp_norm(f64::INFINITY)?;
    Ok(if umax > 0.0 { 0.25 * u0.grid().spacing() / umax } else { 0.25 * u0.grid().spacing() })
}

/// Precomputed per-mode data of the scheme.
struct Stepper {
    grid: Grid,
    nu: f64,
    k2: Vec<f64>,
    keep: Vec<bool>,
    /// `i k_j`, zero on Nyquist indices; `deriv[j][flat]`.
    deriv: Vec<Vec<Complex64>>,
    wave: Vec<[f64; 3]>,
}

impl Stepper {
    fn new(grid: Grid, nu: f64) -> Self {
        let d = grid.dim();
        let cutoff = operators::dealias_cutoff(&grid);
        let wave: Vec<[f64; 3]> = (0..grid.len()).map(|f| grid.wavevector(f)).collect();
        let k2 = wave.iter().map(|k| k.iter().map(|x| x * x).sum()).collect();
        let keep = (0..grid.len())
            .map(|f| {
                let m = grid.multi_index(f);
                (0..d).all(|a| grid.signed_frequency(m[a]).abs() <= cutoff)
            })
            .collect();
        let deriv = (0..d)
            .map(|j| {
                (0..grid.len())
                    .map(|f| {
                        if grid.is_nyquist(grid.multi_index(f)[j]) {
                            Complex64::new(0.0, 0.0)
                        } else {
                            Complex64::new(0.0, wave[f][j])
                        }
                    })
                    .collect()
            })
            .collect();
        Stepper { grid, nu, k2, keep, deriv, wave }
    }

    fn damp(&self, s: &Spectra, h: f64) -> Spectra {
        let factors: Vec<f64> = self.k2.iter().map(|k2| (-self.nu * k2 * h).exp()).collect();
        s.iter()
            .map(|c| c.iter().zip(&factors).map(|(z, f)| z * f).collect())
            .collect()
    }

    fn project(&self, s: &mut Spectra) {
        let d = self.grid.dim();
        for flat in 0..self.grid.len() {
            let k2 = self.k2[flat];
            if k2 == 0.0 {
                continue;
            }
            let k = self.wave[flat];
            let kdotv: Complex64 = (0..d).map(|j| s[j][flat] * k[j]).sum();
            for i in 0..d {
                s[i][flat] -= kdotv * (k[i] / k2);
            }
        }
    }

    /// `-P[(u·∇)u] + forcing` in spectral form.
    fn rhs(&self, s: &Spectra, forcing: Option<(&Spectra, f64)>) -> Result<Spectra> {
        let grid = self.grid;
        let d = grid.dim();
        let trunc: Spectra = s
            .iter()
            .map(|c| c.iter().zip(&self.keep).map(|(z, &k)| if k { *z } else { Complex64::new(0.0, 0.0) }).collect())
            .collect();
        let u: Vec<Vec<f64>> = trunc
            .par_iter()
            .map(|c| spectral::inverse(&grid, c))
            .collect::<Result<_>>()?;
        let grads: Vec<Vec<f64>> = (0..d * d)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / d, idx % d);
                let c: Vec<Complex64> =
                    trunc[i].iter().zip(&self.deriv[j]).map(|(z, dk)| z * dk).collect();
                spectral::inverse(&grid, &c)
            })
            .collect::<Result<_>>()?;
        let mut out: Spectra = (0..d)
            .into_par_iter()
            .map(|i| {
                let prod: Vec<f64> = (0..grid.len())
                    .map(|x| (0..d).map(|j| u[j][x] * grads[i * d + j][x]).sum())
                    .collect();
                spectral::forward(&grid, &prod)
            })
            .collect::<Result<_>>()?;
        for c in out.iter_mut() {
            for (z, &k) in c.iter_mut().zip(&self.keep) {
                *z = if k { -*z } else { Complex64::new(0.0, 0.0) };
            }
        }
        self.project(&mut out);
        if let Some((f, amp)) = forcing {
            for (o, fc) in out.iter_mut().zip(f) {
                for (z, w) in o.iter_mut().zip(fc) {
                    *z += w * amp;
                }
            }
        }
        Ok(out)
    }
}

fn axpy(y: &Spectra, a: f64, x: &Spectra) -> Spectra {
    y.iter()
        .zip(x)
        .map(|(yc, xc)| yc.iter().zip(xc).map(|(p, q)| p + q * a).collect())
        .collect()
}

fn energy(grid: &Grid, s: &Spectra) -> f64 {
    let terms: Vec<f64> = s.iter().flat_map(|c| c.iter().map(|z| z.norm_sqr())).collect();
    (grid.volume() * pairwise_sum(&terms)).sqrt()
}

/// Integrates from `u0` (projected on load) and returns every stored snapshot.
pub fn solve(u0: &Field, forcing: &Forcing, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    u0.require_vector()?;
    let grid = *u0.grid();
    let (steps, dt) = cfg.steps()?;
    let stepper = Stepper::new(grid, cfg.nu);
    let u0 = operators::leray_project(u0)?;
    let mut state: Spectra = u0.spectra().to_vec();
    let initial = energy(&grid, &state);
    let f_spec: Option<Spectra> = forcing.pattern().map(|p| p.spectra().to_vec());
    let profile = forcing.profile();
    let force = |t: f64| f_spec.as_ref().map(|f| (f, profile.value(t)));

    let mut fields = vec![u0.clone()];
    let half = 0.5 * dt;
    for step in 0..steps {
        let t = step as f64 * dt;
        let k1 = stepper.rhs(&state, force(t))?;
        let mut a = stepper.damp(&axpy(&state, half, &k1), half);
        stepper.project(&mut a);
        let k2 = stepper.rhs(&a, force(t + half))?;
        let mut b = axpy(&stepper.damp(&state, half), half, &k2);
        stepper.project(&mut b);
        let k3 = stepper.rhs(&b, force(t + half))?;
        let mut c = axpy(&stepper.damp(&state, dt), dt, &stepper.damp(&k3, half));
        stepper.project(&mut c);
        let k4 = stepper.rhs(&c, force(t + dt))?;

        let mid = axpy(&k2, 1.0, &k3);
        let mut next = stepper.damp(&state, dt);
        next = axpy(&next, dt / 6.0, &stepper.damp(&k1, dt));
        next = axpy(&next, dt / 3.0, &stepper.damp(&mid, half));
        next = axpy(&next, dt / 6.0, &k4);
        stepper.project(&mut next);
        state = next;

        let norm = energy(&grid, &state);
        let t_next = (step + 1) as f64 * dt;
        if !norm.is_finite() {
            return Err(Error::NonFinite(format!("solver state at t = {t_next}")));
        }
        if forcing.is_zero() && initial > 0.0 && norm > 10.0 * initial {
            return Err(Error::Unstable { time: t_next, norm, initial });
        }
        if (step + 1) % cfg.snapshot_every == 0 {
            fields.push(Field::from_spectra(grid, state.clone())?);
        }
    }
    Trajectory::new(fields, 0.0, dt * cfg.snapshot_every as f64, cfg.nu)
}

/// Hypothesis norms of the energy estimate, each a maximum over snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisNorms {
    pub epsilon: f64,
    /// ‖u‖_{L^∞_T L^∞}
    pub u_inf: f64,
    /// ‖∇u‖_{L^∞_T L^∞}
    pub grad_u_inf: f64,
    /// ‖∇u‖_{L^∞_T L²}
    pub grad_u_l2: f64,
    /// ‖∇u‖_{L^∞_T L^{2-ε}}
    pub grad_u_l2eps: f64,
    /// ‖∇²u‖_{L^∞_T L^{2-ε}}
    pub hess_u_l2eps: f64,
    /// ‖∇Ξ[u·∇u]‖_{L^∞_T L^∞}
    pub grad_xi_inf: f64,
    /// ‖∇²Ξ[u·∇u]‖_{L^∞_T L^∞}
    pub hess_xi_inf: f64,
    /// ‖u‖_{L^∞_T L^{2-ε}}
    pub u_l2eps: f64,
    /// ‖Ξ[u·∇u]‖_{L^∞_T L^{2-ε}}
    pub xi_l2eps: f64,
    /// ∫_0^T ‖Pf(s)‖₂ ds
    pub forcing_l1_l2: f64,
}

impl HypothesisNorms {
    /// Entries keyed by symbol, in a fixed order.
    pub fn table(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("u_Linf_Linf", self.u_inf),
            ("grad_u_Linf_Linf", self.grad_u_inf),
            ("grad_u_Linf_L2", self.grad_u_l2),
            ("grad_u_Linf_L2-eps", self.grad_u_l2eps),
            ("grad2_u_Linf_L2-eps", self.hess_u_l2eps),
            ("grad_xi_adv_Linf_Linf", self.grad_xi_inf),
            ("grad2_xi_adv_Linf_Linf", self.hess_xi_inf),
            ("u_Linf_L2-eps", self.u_l2eps),
            ("xi_adv_Linf_L2-eps", self.xi_l2eps),
            ("f_L1_L2", self.forcing_l1_l2),
        ]
    }
}

/// Spatial norms of one snapshot, in the field order of [`HypothesisNorms`].
fn snapshot_norms(u: &Field, p: f64) -> Result<[f64; 9]> {
    let grad = operators::gradient_tensor(u)?;
    let hess = operators::gradient_tensor(&grad)?;
    let xi = operators::xi_apply(&operators::advection(u)?)?;
    let grad_xi = operators::gradient_tensor(&xi)?;
    let hess_xi = operators::gradient_tensor(&grad_xi)?;
    Ok([
        u.lp_norm(f64::INFINITY)?,
        grad.lp_norm(f64::INFINITY)?,
        grad.l2_norm(),
        grad.lp_norm(p)?,
        hess.lp_norm(p)?,
        grad_xi.lp_norm(f64::INFINITY)?,
        hess_xi.lp_norm(f64::INFINITY)?,
        u.lp_norm(p)?,
        xi.lp_norm(p)?,
    ])
}

pub fn hypothesis_norms(traj: &Trajectory, forcing: &Forcing, epsilon: f64) -> Result<HypothesisNorms> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let p = 2.0 - epsilon;
    let mut max = [0.0f64; 9];
    for u in traj.snapshots() {
        let v = snapshot_norms(u, p)?;
        for (m, x) in max.iter_mut().zip(v) {
            *m = m.max(x);
        }
    }
    let forcing_l1_l2 = match forcing.pattern() {
        Some(f) => forcing.time_integral(f.l2_norm(), traj.t_end() - traj.t0(), traj.len() - 1),
        None => 0.0,
    };
    Ok(HypothesisNorms {
        epsilon,
        u_inf: max[0],
        grad_u_inf: max[1],
        grad_u_l2: max[2],
        grad_u_l2eps: max[3],
        hess_u_l2eps: max[4],
        grad_xi_inf: max[5],
        hess_xi_inf: max[6],
        u_l2eps: max[7],
        xi_l2eps: max[8],
        forcing_l1_l2,
    })
}

/// Closed-form L2 norm of the 2D Taylor–Green datum on `[0, 2π)²`.
pub fn taylor_green_2d_l2(nu: f64, t: f64) -> f64 {
    PI * 2f64.sqrt() * (-2.0 * nu * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_green_is_divergence_free_with_known_norm() {
        let g = Grid::periodic(2, 32).unwrap();
        let u = taylor_green_2d(g, 0.0, 0.1).unwrap();
        assert!(operators::div(&u).unwrap().grid_max() < 1e-12);
        // ∫ cos²x sin²y + sin²x cos²y over [0, 2π)² = 2π²
        assert!((u.l2_norm() - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        let g3 = Grid::periodic(3, 16).unwrap();
        let u3 = taylor_green_3d_init(g3).unwrap();
        assert!(operators::div(&u3).unwrap().grid_max() < 1e-12);
        assert!(taylor_green_2d(g3, 0.0, 0.1).is_err());
    }

    #[test]
    fn taylor_green_without_viscosity_is_the_datum() {
        let g = Grid::periodic(2, 16).unwrap();
        let a = taylor_green_2d(g, 3.0, 0.0).unwrap();
        let b = taylor_green_2d(g, 0.0, 0.7).unwrap();
        assert_eq!(a.max_abs_diff(&b).unwrap(), 0.0);
    }

    #[test]
    fn random_solenoidal_properties() {
        let g = Grid::periodic(2, 32).unwrap();
        let a = random_solenoidal(g, 11, 4.0, 2.5).unwrap();
        let b = random_solenoidal(g, 11, 4.0, 2.5).unwrap();
        assert!(a.components() == b.components());
        assert!((a.l2_norm() - 2.5).abs() < 1e-12);
        assert!(operators::div(&a).unwrap().l2_norm() < 1e-12);
        assert!(random_solenoidal(g, 1, 11.0, 1.0).is_err());
        assert!(random_solenoidal(g, 1, 0.0, 1.0).is_err());
    }

    #[test]
    fn spectral_rhs_matches_field_operators() {
        let g = Grid::periodic(2, 32).unwrap();
        let u = random_solenoidal(g, 4, 5.0, 1.0).unwrap();
        let stepper = Stepper::new(g, 0.1);
        let rhs = stepper.rhs(&u.spectra().to_vec(), None).unwrap();
        let via_fields = operators::leray_project(&operators::advection(&u).unwrap()).unwrap().scale(-1.0);
        let rhs_field = Field::from_spectra(g, rhs).unwrap();
        assert!(rhs_field.max_abs_diff(&via_fields).unwrap() < 1e-12);
    }

    #[test]
    fn zero_datum_stays_zero() {
        let g = Grid::periodic(2, 16).unwrap();
        let traj = solve(&Field::zeros(g, 2), &Forcing::none(), &SolverConfig::new(0.1, 0.1, 0.01)).unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.snapshots().iter().all(|f| f.grid_max() == 0.0));
    }

    #[test]
    fn step_count_tiles_horizon() {
        assert_eq!(SolverConfig::new(0.1, 1.0, 1e-3).steps().unwrap().0, 1000);
        let (n, dt) = SolverConfig::new(0.1, 1.0, 0.3).steps().unwrap();
        assert_eq!(n, 4);
        assert_eq!(dt, 0.25);
        assert!(SolverConfig::new(0.1, 1.0, 0.1).with_snapshot_every(3).validate().is_err());
    }

    #[test]
    fn forcing_time_integral_midpoint() {
        let g = Grid::periodic(2, 16).unwrap();
        let spec = ForcingSpec::TaylorGreen { amplitude: 2.0, profile: TimeProfile::Constant {} };
        let f = Forcing::build(&spec, g).unwrap();
        let norm = f.pattern().unwrap().l2_norm();
        assert!((f.time_integral(norm, 0.5, 10) - 0.5 * norm).abs() < 1e-14);
        assert!((norm - 2.0 * (2.0 * PI * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hypothesis_norms_of_zero_trajectory_vanish() {
        let g = Grid::periodic(2, 16).unwrap();
        let traj = Trajectory::new(vec![Field::zeros(g, 2); 3], 0.0, 0.1, 0.1).unwrap();
        let n = hypothesis_norms(&traj, &Forcing::none(), 0.5).unwrap();
        assert!(n.table().iter().all(|(_, v)| *v == 0.0));
        assert!(hypothesis_norms(&traj, &Forcing::none(), 1.0).is_err());
    }

    #[test]
    fn reproduces_decaying_taylor_green() {
        let g = Grid::periodic(2, 32).unwrap();
        let u0 = taylor_green_2d(g, 0.0, 0.1).unwrap();
        let cfg = SolverConfig::new(0.1, 0.2, 1e-2).with_snapshot_every(5);
        let traj = solve(&u0, &Forcing::none(), &cfg).unwrap();
        let exact = taylor_green_2d(g, 0.2, 0.1).unwrap();
        assert!(traj.last().max_abs_diff(&exact).unwrap() < 1e-10);
        assert!((traj.last().l2_norm() - taylor_green_2d_l2(0.1, 0.2)).abs() < 1e-10);
    }

    #[test]
    fn unforced_energy_decays() {
        let g = Grid::periodic(2, 32).unwrap();
        let u0 = random_solenoidal(g, 2, 6.0, 3.0).unwrap();
        let traj = solve(&u0, &Forcing::none(), &SolverConfig::new(0.05, 0.1, 5e-3)).unwrap();
        let norms: Vec<f64> = traj.snapshots().iter().map(|f| f.l2_norm()).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}
