use std::sync::OnceLock;

use parametrix_core::flow::{self, Orientation};
use parametrix_core::io;
use parametrix_core::operators::{self, HeatKernelParams};
use parametrix_core::parametrix::{self, ParametrixContext};
use parametrix_core::solver::{self, Forcing, SolverConfig};
use parametrix_core::verify;
use parametrix_core::{Field, Grid, Trajectory};
use proptest::prelude::*;

fn g32() -> Grid {
    Grid::periodic(2, 32).unwrap()
}

fn random_trajectory(n: usize) -> Trajectory {
    let g = Grid::periodic(2, n).unwrap();
    let u0 = solver::random_solenoidal(g, 5, 4.0, 1.0).unwrap();
    solver::solve(&u0, &Forcing::none(), &SolverConfig::new(0.1, 0.5, 1.0 / 128.0).with_snapshot_every(2)).unwrap()
}

fn traj32() -> &'static Trajectory {
    static TRAJ: OnceLock<Trajectory> = OnceLock::new();
    TRAJ.get_or_init(|| random_trajectory(32))
}

fn traj64() -> &'static Trajectory {
    static TRAJ: OnceLock<Trajectory> = OnceLock::new();
    TRAJ.get_or_init(|| random_trajectory(64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leray_is_an_orthogonal_projection(seed in any::<u64>(), band in 1u32..10) {
        let phi = solver::random_field(g32(), seed, band as f64, 1.0).unwrap();
        let p = operators::leray_project(&phi).unwrap();
        let xi = operators::xi_apply(&phi).unwrap();
        prop_assert!(operators::leray_project(&p).unwrap().sub(&p).unwrap().l2_norm() <= 1e-12);
        prop_assert!(p.l2_norm() <= phi.l2_norm() * (1.0 + 1e-14));
        prop_assert!(p.inner(&xi).unwrap().abs() <= 1e-12);
        prop_assert!(operators::div(&p).unwrap().grid_max() <= 1e-10);
    }

    #[test]
    fn heat_semigroup_composes(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let phi = solver::random_field(g32(), seed, 8.0, 1.0).unwrap();
        let two = operators::heat_semigroup(&operators::heat_semigroup(&phi, 0.2, a).unwrap(), 0.2, b).unwrap();
        let one = operators::heat_semigroup(&phi, 0.2, a + b).unwrap();
        prop_assert!(two.sub(&one).unwrap().l2_norm() <= 1e-12);
        prop_assert!(one.l2_norm() <= phi.l2_norm() * (1.0 + 1e-14));
    }

    #[test]
    fn heat_kernel_is_positive_periodic_even(x in -10.0f64..10.0, y in -10.0f64..10.0, t in 0.01f64..3.0) {
        let params = HeatKernelParams::new(0.25, 2, 2.0 * std::f64::consts::PI).unwrap();
        let h = operators::heat_kernel_point(&params, t, [x, y, 0.0]).unwrap();
        let shifted = operators::heat_kernel_point(&params, t, [x + 2.0 * std::f64::consts::PI, y, 0.0]).unwrap();
        let mirrored = operators::heat_kernel_point(&params, t, [-x, -y, 0.0]).unwrap();
        prop_assert!(h > 0.0);
        prop_assert!((h - shifted).abs() <= 1e-12 * h.max(1e-3));
        prop_assert!((h - mirrored).abs() <= 1e-14 * h.max(1e-3));
    }

    #[test]
    fn absorbing_inequality_holds(delta in 0.0f64..4.0, r in 0.0f64..8.0) {
        let c = operators::absorbing_constant(delta).unwrap();
        prop_assert!(c >= 1.0);
        prop_assert!(r.powf(delta) * (-r * r).exp() <= c * (-r * r / c).exp() * (1.0 + 1e-12));
    }

    #[test]
    fn slope_fit_inverts_power_laws(c in 0.01f64..100.0, slope in -3.0f64..3.0) {
        let xs = [2.0f64, 4.0, 8.0, 16.0, 32.0];
        let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(slope)).collect();
        prop_assert!((verify::fit_slope(&xs, &ys) - slope).abs() <= 1e-10);
    }

    #[test]
    fn snapshot_files_round_trip(seed in any::<u64>(), time in -5.0f64..5.0) {
        let g = Grid::periodic(2, 8).unwrap();
        let f = solver::random_field(g, seed, 2.0, 1.0).unwrap();
        let path = std::env::temp_dir().join(format!("parametrix-prop-{}-{seed}.bin", std::process::id()));
        io::write_snapshot(&path, &f, time).unwrap();
        let (back, t) = io::read_snapshot(&path).unwrap();
        std::fs::remove_file(&path).unwrap();
        prop_assert_eq!(t, time);
        prop_assert_eq!(back.components(), f.components());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn flow_preserves_measure(s in 0.0f64..0.25, span in 0.05f64..0.25) {
        let traj = traj32();
        let t = s + span;
        let map = flow::flow_grid_oriented(traj, s, t, flow::default_h_ode(traj), Orientation::Upstream).unwrap();
        let phi = Field::scalar_from_fn(*traj.grid(), |p| (p[0] + 2.0 * p[1]).sin() + p[0].cos().powi(2)).unwrap();
        prop_assert!(flow::measure_preservation_gap(&map, &phi).unwrap().gap <= 1e-6);
    }

    #[test]
    fn flow_composes_along_paths(s in 0.0f64..0.2, x in 0.0f64..6.28, y in 0.0f64..6.28) {
        let traj = traj32();
        let h = flow::default_h_ode(traj) / 2.0;
        let (mid, t) = (s + 0.1, s + 0.2);
        for o in [Orientation::Downstream, Orientation::Upstream] {
            // the foot at s of the point through x at t equals the foot at s of the point through θ_{mid,t}(x) at mid
            let a = flow::flow_point_oriented(traj, s, t, [x, y, 0.0], h, o).unwrap();
            let m = flow::flow_point_oriented(traj, mid, t, [x, y, 0.0], h, o).unwrap();
            let b = flow::flow_point_oriented(traj, s, mid, m, h, o).unwrap();
            let g = traj.grid();
            prop_assert!(g.minimal_image(a[0] - b[0]).abs() <= 1e-7);
            prop_assert!(g.minimal_image(a[1] - b[1]).abs() <= 1e-7);
        }
    }

    #[test]
    fn unforced_energy_never_grows(seed in any::<u64>(), amp in 0.1f64..2.0) {
        let g = Grid::periodic(2, 16).unwrap();
        let u0 = solver::random_solenoidal(g, seed, 4.0, amp).unwrap();
        let (report, _) = verify::energy_check(&u0, &Forcing::none(), &SolverConfig::new(0.05, 0.2, 0.01)).unwrap();
        prop_assert!(report.passed);
        prop_assert_eq!(report.monotone, Some(true));
    }

    #[test]
    fn projector_probe_never_exceeds_one_in_l2(seed in any::<u64>()) {
        let r = verify::lp_probe(g32(), 2.0, 9, seed).unwrap();
        prop_assert!(r.max_ratio <= 1.0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    // spans keep the kernel width above two grid spacings
    #[test]
    fn kernel_has_unit_mass_and_no_first_moment(s in 0.0f64..0.25, span in 0.2f64..0.25, x in 0.0f64..6.28, y in 0.0f64..6.28) {
        let traj = traj64();
        let t = s + span;
        let ctx = ParametrixContext::new(traj).unwrap();
        let (mass, moment) = parametrix::kernel_moments(&ctx, s, t, [x, y, 0.0]).unwrap();
        prop_assert!((mass - 1.0).abs() <= 1e-10);
        prop_assert!(moment[0].hypot(moment[1]) <= 1e-8);
    }

    #[test]
    fn composition_with_the_flow_keeps_lp_norms(s in 0.0f64..0.2, span in 0.05f64..0.3) {
        let traj = traj32();
        let t = s + span;
        let grid = *traj.grid();
        let g = Field::scalar_from_fn(grid, |p| 2.0 + p[0].sin() * (2.0 * p[1]).cos() + 0.3 * p[1].cos()).unwrap();
        // node quadrature; the composed samples are not band-limited
        let norm = |v: &[f64], p: f64| (grid.cell_volume() * v.iter().map(|x| x.abs().powf(p)).sum::<f64>()).powf(1.0 / p);
        for o in [Orientation::Downstream, Orientation::Upstream] {
            let map = flow::flow_grid_oriented(traj, s, t, flow::default_h_ode(traj), o).unwrap();
            let composed = g.compose(&map.points).unwrap();
            for p in [1.5, 2.0] {
                let (a, b) = (norm(composed.component(0), p), norm(g.component(0), p));
                prop_assert!((a - b).abs() <= 1e-5 * b, "p={}: {} vs {}", p, a, b);
            }
        }
    }
}
