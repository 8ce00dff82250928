//! One function per subcommand. Each writes its artifacts into a [`RunDir`]
//! and returns whether every assertion held.

use std::fs;
use std::path::{Path, PathBuf};

use parametrix_core::flow::{self, Orientation};
use parametrix_core::io;
use parametrix_core::parametrix::{self, Delta2Variant, DuhamelTerm, ParametrixContext};
use parametrix_core::plot::{self, Series};
use parametrix_core::solver::{self, Forcing, InitSpec};
use parametrix_core::verify::{self, Check};
use parametrix_core::{TimePartition, Trajectory};
use serde::Serialize;

use crate::config::{require, Config, ConfigError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] parametrix_core::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
}

pub type RunResult<T> = std::result::Result<T, RunError>;

/// Output directory that remembers what was written into it.
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    passed: bool,
    files: &'a [String],
}

impl RunDir {
    pub fn create(root: &Path) -> RunResult<Self> {
        fs::create_dir_all(root).map_err(|source| RunError::Write { path: root.display().to_string(), source })?;
        Ok(RunDir { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn text(&mut self, name: &str, content: &str) -> RunResult<()> {
        let path = self.path(name);
        fs::write(&path, content).map_err(|source| RunError::Write { path: path.display().to_string(), source })?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> RunResult<()> {
        self.text(name, &io::versioned_json(value)?)
    }

    pub fn finish(mut self, command: &str, passed: bool) -> RunResult<()> {
        self.files.sort();
        let manifest = Manifest { command, version: env!("CARGO_PKG_VERSION"), passed, files: &self.files };
        let text = io::versioned_json(&manifest)?;
        let path = self.path("manifest.json");
        fs::write(&path, text).map_err(|source| RunError::Write { path: path.display().to_string(), source })
    }
}

fn solve_from(cfg: &Config) -> RunResult<(Trajectory, Forcing)> {
    let grid = cfg.grid()?;
    let s = cfg.solver()?;
    let u0 = s.init.build(grid)?;
    let forcing = Forcing::build(&s.forcing, grid)?;
    let traj = solver::solve(&u0, &forcing, &cfg.solver_config()?)?;
    Ok((traj, forcing))
}

fn context<'a>(cfg: &Config, traj: &'a Trajectory, forcing: &'a Forcing) -> RunResult<ParametrixContext<'a>> {
    let mut ctx = ParametrixContext::new(traj)?.with_forcing(forcing);
    if let Some(o) = cfg.experiment.orientation {
        ctx = ctx.with_orientation(o);
    }
    if let Some(q) = cfg.experiment.quadrature {
        ctx = ctx.with_quadrature(q);
    }
    if let Some(h) = cfg.experiment.h_ode {
        ctx = ctx.with_h_ode(h);
    }
    Ok(ctx)
}

fn history_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,l2\n");
    for (j, f) in traj.snapshots().iter().enumerate() {
        out.push_str(&format!("{:e},{:e}\n", traj.time(j), f.l2_norm()));
    }
    out
}

fn checks_csv(checks: &[Check]) -> String {
    let mut out = String::from("name,measured,tolerance,passed\n");
    for c in checks {
        out.push_str(&format!("{},{:e},{:e},{}\n", c.name, c.measured, c.tolerance, c.passed));
    }
    out
}

#[derive(Serialize)]
struct SolveReport {
    steps: usize,
    dt_effective: f64,
    snapshots: usize,
    initial_l2: f64,
    final_l2: f64,
    max_divergence: f64,
    /// Relative L2 error against the decaying Taylor–Green solution, when it applies.
    oracle_relative_error: Option<f64>,
    monotone: Option<bool>,
    checks: Vec<Check>,
    passed: bool,
}

pub fn solve(cfg: &Config, run: &mut RunDir) -> RunResult<bool> {
    let (traj, forcing) = solve_from(cfg)?;
    let (steps, dt_effective) = cfg.solver_config()?.steps()?;
    let grid = *traj.grid();
    let mut max_divergence: f64 = 0.0;
    for f in traj.snapshots() {
        max_divergence = max_divergence.max(parametrix_core::trajectory::divergence_defect(f)?);
    }
    let mut checks = vec![Check::at_most(
        "divergence_defect",
        max_divergence,
        parametrix_core::trajectory::DIVERGENCE_TOLERANCE,
    )];
    let s = cfg.solver()?;
    let oracle_relative_error = if grid.dim() == 2 && forcing.is_zero() && matches!(s.init, InitSpec::TaylorGreen { .. })
    {
        let scale = match s.init {
            InitSpec::TaylorGreen { scale } => scale,
            _ => unreachable!(),
        };
        let mut worst: f64 = 0.0;
        for (j, f) in traj.snapshots().iter().enumerate() {
            let exact = solver::taylor_green_2d(grid, traj.time(j), traj.nu())?.scale(scale);
            worst = worst.max(f.sub(&exact)?.l2_norm() / exact.l2_norm());
        }
        checks.push(Check::at_most("taylor_green_oracle", worst, 1e-6));
        Some(worst)
    } else {
        None
    };
    let history: Vec<f64> = traj.snapshots().iter().map(|f| f.l2_norm()).collect();
    let monotone = forcing.is_zero().then(|| history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    if let Some(m) = monotone {
        checks.push(Check::at_least("energy_monotone", if m { 1.0 } else { 0.0 }, 1.0));
    }
    let passed = verify::all_passed(&checks);
    if cfg.experiment.write_trajectory.unwrap_or(true) {
        io::write_trajectory(&run.path("trajectory"), &traj)?;
        run.files.push("trajectory/manifest.json".into());
    }
    run.text("energy.csv", &history_csv(&traj))?;
    let report = SolveReport {
        steps,
        dt_effective,
        snapshots: traj.len(),
        initial_l2: history[0],
        final_l2: *history.last().expect("nonempty"),
        max_divergence,
        oracle_relative_error,
        monotone,
        checks,
        passed,
    };
    run.json("report.json", &report)?;
    Ok(passed)
}

pub fn energy_check(cfg: &Config, run: &mut RunDir) -> RunResult<bool> {
    let grid = cfg.grid()?;
    let s = cfg.solver()?;
    let u0 = s.init.build(grid)?;
    let forcing = Forcing::build(&s.forcing, grid)?;
    let (report, traj) = verify::energy_check(&u0, &forcing, &cfg.solver_config()?)?;
    run.text("energy.csv", &history_csv(&traj))?;
    run.json("report.json", &report)?;
    Ok(report.passed)
}

/// Slope windows for the remainder maxima.
pub const R1_SLOPE_WINDOW: (f64, f64) = (-1.75, -1.25);
pub const R23_SLOPE_MAX: f64 = -1.0;

#[derive(Serialize)]
struct ScalingReport<'a> {
    study: &'a verify::ScalingStudy,
    /// Max over slices of R2 with the zero-order second difference, per n.
    r2_zero_order_max: Option<Vec<f64>>,
    checks: Vec<Check>,
    passed: bool,
}

pub fn remainder_scaling(cfg: &Config, run: &mut RunDir) -> RunResult<bool> {
    let n_list = require(&cfg.experiment.n_list, "experiment.n_list")?;
    let eps = cfg.epsilon()?;
    let m = cfg.m();
    let (traj, forcing) = solve_from(cfg)?;
    let ctx = context(cfg, &traj, &forcing)?;
    let study = verify::scaling_study(&ctx, &n_list, m, eps)?;

    let zero_order = if cfg.experiment.r2_zero_order.unwrap_or(false) {
        let zctx = ctx.clone().with_delta2(Delta2Variant::ZeroOrder);
        let mut column = Vec::with_capacity(study.rows.len());
        for &n in &n_list {
            column.extend(parametrix::remainder_table(&zctx, n, m, &study.factors)?.iter().map(|r| r.r2));
        }
        Some(column)
    } else {
        None
    };
    run.text("remainders.csv", &io::remainder_csv(&study.rows, zero_order.as_deref())?)?;

    let mut points = String::from("n,max_R1,max_R2,max_R3,total_R1,total_R2,total_R3\n");
    for p in &study.points {
        points.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            p.n, p.max_r1, p.max_r2, p.max_r3, p.total_r1, p.total_r2, p.total_r3
        ));
    }
    run.text("scaling.csv", &points)?;

    let series = |f: fn(&verify::ScalingPoint) -> f64| -> Vec<(f64, f64)> {
        study.points.iter().map(|p| (p.n as f64, f(p))).collect()
    };
    let r1 = series(|p| p.max_r1);
    let svg = plot::loglog_svg(
        "Remainder maxima over slices",
        "slices n",
        "max_k R_i",
        &[
            Series::new("R1", r1.clone()).with_slope(study.slopes.r1),
            Series::new("R2", series(|p| p.max_r2)).with_slope(study.slopes.r2),
            Series::new("R3", series(|p| p.max_r3)).with_slope(study.slopes.r3),
            Series::new("n^-3/2", plot::reference_line(&r1, -1.5)).dashed(),
        ],
    );
    run.text("remainders.svg", &svg)?;

    let r2_zero_order_max = zero_order.map(|col| {
        let mut out = Vec::new();
        let mut offset = 0;
        for &n in &n_list {
            out.push(col[offset..offset + n].iter().copied().fold(0.0, f64::max));
            offset += n;
        }
        out
    });
    let checks = vec![
        Check::at_least("r1_slope_lower", study.slopes.r1, R1_SLOPE_WINDOW.0),
        Check::at_most("r1_slope_upper", study.slopes.r1, R1_SLOPE_WINDOW.1),
        Check::at_most("r2_slope", study.slopes.r2, R23_SLOPE_MAX),
        Check::at_most("r3_slope", study.slopes.r3, R23_SLOPE_MAX),
    ];
    let passed = verify::all_passed(&checks);
    run.json("report.json", &ScalingReport { study: &study, r2_zero_order_max, checks, passed })?;
    Ok(passed)
}

pub const DUHAMEL_MAX_RELATIVE: f64 = 5e-2;
pub const DUHAMEL_MIN_REDUCTION: f64 = 1.8;

#[derive(Clone, Serialize)]
pub struct DuhamelRow {
    pub m: usize,
    pub relative_error: f64,
    pub error_l2: f64,
    pub reference_l2: f64,
    pub terms: Vec<DuhamelTerm>,
}

#[derive(Serialize)]
struct DuhamelReport {
    n: usize,
    k: usize,
    t: f64,
    rows: Vec<DuhamelRow>,
    /// `err(m) / err(2m)` for every doubling present in `m_list`.
    reductions: Vec<(usize, f64)>,
    checks: Vec<Check>,
    passed: bool,
}

pub fn duhamel_reconstruct(cfg: &Config, run: &mut RunDir) -> RunResult<bool> {
    let n = require(&cfg.experiment.n, "experiment.n")?;
    let k = require(&cfg.experiment.k, "experiment.k")?;
    let m_list = cfg.experiment.m_list.clone().unwrap_or_else(|| vec![cfg.m()]);
    let (traj, forcing) = solve_from(cfg)?;
    let partition = TimePartition::new(traj.t_end() - traj.t0(), n)?;
    let t = cfg.experiment.t.unwrap_or(partition.knot(k + 1));
    let ctx = context(cfg, &traj, &forcing)?;
    let mut rows = Vec::new();
    for &m in &m_list {
        let d = parametrix::duhamel_reconstruct(&ctx, &partition, k, t, m)?;
        rows.push(DuhamelRow {
            m,
            relative_error: d.relative_error,
            error_l2: d.error_l2,
            reference_l2: d.reference_l2,
            terms: d.terms,
        });
    }
    let mut checks: Vec<Check> = rows
        .iter()
        .map(|r| Check::at_most(&format!("relative_error_m{}", r.m), r.relative_error, DUHAMEL_MAX_RELATIVE))
        .collect();
    let mut reductions = Vec::new();
    for a in &rows {
        if let Some(b) = rows.iter().find(|b| b.m == 2 * a.m) {
            let factor = a.error_l2 / b.error_l2;
            reductions.push((a.m, factor));
            checks.push(Check::at_least(&format!("reduction_m{}_to_m{}", a.m, b.m), factor, DUHAMEL_MIN_REDUCTION));
        }
    }
    let mut csv = String::from("m,relative_error,error_l2,reference_l2");
    for name in parametrix::DUHAMEL_TERMS {
        csv.push_str(&format!(",{name}"));
    }
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!("{},{:e},{:e},{:e}", r.m, r.relative_error, r.error_l2, r.reference_l2));
        for term in &r.terms {
            csv.push_str(&format!(",{:e}", term.projected_l2));
        }
        csv.push('\n');
    }
    run.text("duhamel.csv", &csv)?;
    if rows.len() >= 2 {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.m as f64, r.error_l2)).collect();
        let slope = verify::fit_slope(
            &pts.iter().map(|p| p.0).collect::<Vec<_>>(),
            &pts.iter().map(|p| p.1).collect::<Vec<_>>(),
        );
        run.text(
            "duhamel.svg",
            &plot::loglog_svg("Duhamel reconstruction error", "quadrature nodes m", "L2 error", &[
                Series::new("error", pts).with_slope(slope),
            ]),
        )?;
    }
    let passed = verify::all_passed(&checks);
    run.json("report.json", &DuhamelReport { n, k, t, rows, reductions, checks, passed })?;
    Ok(passed)
}

pub const LP_TWO_TOLERANCE: f64 = 1e-12;

#[derive(Serialize)]
struct LpReport {
    probes: Vec<verify::LpProbeReport>,
    checks: Vec<Check>,
    passed: bool,
}

pub fn lp_probe(cfg: &Config, run: &mut RunDir) -> RunResult<bool> {
    let grid = cfg.grid()?;
    let seed = require(&cfg.experiment.seed, "experiment.seed")?;
    let samples = require(&cfg.experiment.samples, "experiment.samples")?;
    let p_list = require(&cfg.experiment.p_list, "experiment.p_list")?;
    let mut probes = Vec::new();
    let mut checks = Vec::new();
    let mut csv = String::from("p,samples,max_ratio,argmax_index,random_max,gradient_max,bump_max,nearly_solenoidal_max\n");
    for &p in &p_list {
        let r = verify::lp_probe(grid, p, samples, seed)?;
        if p == 2.0 {
            checks.push(Check::at_most("l2_ratio_excess", r.max_ratio - 1.0, LP_TWO_TOLERANCE));
        }
        csv.push_str(&format!(
            "{p:e},{samples},{:e},{},{:e},{:e},{:e},{:e}\n",
            r.max_ratio, r.argmax_index, r.family_max[0], r.family_max[1], r.family_max[2], r.family_max[3]
        ));
        probes.push(r);
    }
    run.text("lp_probe.csv", &csv)?;
    let passed = verify::all_passed(&checks);
    run.json("report.json", &LpReport { probes, checks, passed })?;
    Ok(passed)
}

pub fn vorticity_check(cfg: &Config, run: &mut RunDir) -> RunResult<bool> {
    let grid = cfg.grid()?;
    let s = cfg.solver()?;
    let u0 = s.init.build(grid)?;
    let forcing = Forcing::build(&s.forcing, grid)?;
    let (report, traj) = verify::vorticity_l1_check(&u0, &forcing, &cfg.solver_config()?)?;
    let mut csv = String::from("t,l2,omega_l1,omega_l2,grad_u_l2\n");
    for (j, u) in traj.snapshots().iter().enumerate() {
        let w = verify::vorticity(u)?;
        let g = parametrix_core::operators::gradient_tensor(u)?;
        csv.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e}\n",
            traj.time(j),
            u.l2_norm(),
            w.lp_norm(1.0)?,
            w.l2_norm(),
            g.l2_norm()
        ));
    }
    run.text("vorticity.csv", &csv)?;
    run.text("checks.csv", &checks_csv(&report.checks))?;
    let passed = verify::all_passed(&report.checks);
    #[derive(Serialize)]
    struct Wrapped<'a> {
        #[serde(flatten)]
        report: &'a verify::VorticityReport,
        passed: bool,
    }
    run.json("report.json", &Wrapped { report: &report, passed })?;
    Ok(passed)
}

pub fn flow_test(cfg: &Config, run: &mut RunDir) -> RunResult<bool> {
    let s = require(&cfg.experiment.s, "experiment.s")?;
    let t = require(&cfg.experiment.t, "experiment.t")?;
    let (traj, _) = solve_from(cfg)?;
    let h_ode = cfg.experiment.h_ode.unwrap_or_else(|| flow::default_h_ode(&traj));
    let report = verify::flow_suite(&traj, s, t, h_ode)?;
    let orientation = cfg.experiment.orientation.unwrap_or(Orientation::Upstream);
    let map = flow::flow_grid_oriented(&traj, s, t, h_ode, orientation)?;
    run.text("flow.csv", &io::flow_csv(&map))?;
    run.text("checks.csv", &checks_csv(&report.checks))?;
    let passed = verify::all_passed(&report.checks);
    #[derive(Serialize)]
    struct Wrapped<'a> {
        #[serde(flatten)]
        report: &'a verify::FlowReport,
        passed: bool,
    }
    run.json("report.json", &Wrapped { report: &report, passed })?;
    Ok(passed)
}

pub fn op_suite(cfg: &Config, run: &mut RunDir) -> RunResult<bool> {
    let grid = cfg.grid()?;
    let seed = require(&cfg.experiment.seed, "experiment.seed")?;
    let nu = cfg.solver.as_ref().map(|s| s.nu).unwrap_or(0.1);
    let mut checks = verify::operator_suite(grid, nu, seed)?;
    if let Some(count) = cfg.experiment.count {
        for mut c in verify::leray_suite(grid, count, seed)? {
            c.name = format!("{}_x{count}", c.name);
            checks.push(c);
        }
    }
    run.text("checks.csv", &checks_csv(&checks))?;
    let passed = verify::all_passed(&checks);
    #[derive(Serialize)]
    struct Report<'a> {
        checks: &'a [Check],
        passed: bool,
    }
    run.json("report.json", &Report { checks: &checks, passed })?;
    Ok(passed)
}
