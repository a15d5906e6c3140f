use std::f64::consts::PI;

use patchflow_core::limit_lab::*;
use patchflow_core::patch::{advect_markers, FourierCurve, MarkerCurve};
use patchflow_core::scenario::{InitialCondition, RunConfig, Swirl};
use patchflow_core::spectral::SpectralOps;
use patchflow_core::{FluidState, Grid, PressureSpec, ScalarField, SimConfig, VectorField};

fn taylor_green(grid: Grid) -> VectorField {
    VectorField::from_fn(grid, |x, y| (x.sin() * y.cos(), -x.cos() * y.sin()))
}

#[test]
fn taylor_green_decays_at_the_viscous_rate() {
    let grid = Grid::new(128, 2.0 * PI).unwrap();
    let mu = 0.1;
    let solver = IncompressibleSolver::new(SpectralOps::new(grid), mu, 1.0, 0.5, true, 1e-12).unwrap();
    let s0 = FluidState::new(ScalarField::constant(grid, 1.0), taylor_green(grid), 0.0).unwrap();
    let run = incompressible_reference(&solver, &s0, &[0.5, 1.0]).unwrap();
    assert!(run.max_div <= 1e-9, "{}", run.max_div);
    for s in &run.samples {
        let exact = taylor_green(grid).scale((-2.0 * mu * s.t).exp());
        let err = s.velocity.sub(&exact).linf();
        assert!(err <= 1e-4, "t = {}: {err}", s.t);
    }
}

#[test]
fn fluid_at_rest_stays_at_rest() {
    let grid = Grid::new(32, 2.0 * PI).unwrap();
    let solver = IncompressibleSolver::new(SpectralOps::new(grid), 0.1, 1.5, 0.5, true, 1e-12).unwrap();
    let rho = ScalarField::from_fn(grid, |x, _| 1.0 + 0.5 * x.cos());
    let s0 = FluidState::new(rho.clone(), VectorField::zeros(grid), 0.0).unwrap();
    let run = incompressible_reference(&solver, &s0, &[0.1, 0.2]).unwrap();
    let last = run.samples.last().unwrap();
    assert_eq!(last.velocity.linf(), 0.0);
    assert_eq!(last.t, 0.2);
}

#[test]
fn projection_removes_divergence_for_variable_density() {
    let grid = Grid::new(64, 2.0 * PI).unwrap();
    let ops = SpectralOps::new(grid);
    let solver = IncompressibleSolver::new(ops.clone(), 0.1, 2.0, 0.5, true, 1e-12).unwrap();
    let rho = ScalarField::from_fn(grid, |x, y| 1.0 + 0.8 * (x + 2.0 * y).sin().powi(2));
    let w = VectorField::from_fn(grid, |x, y| (x.sin() + (2.0 * y).cos(), x.cos() * y.sin()));
    let (v, _) = solver.project(&rho, &w).unwrap();
    assert!(ops.div(&v).unwrap().linf() <= 1e-9);
    // w - v is a gradient over rho, so rho (w - v) is curl free
    let g = w.sub(&v).mul_scalar(&rho);
    assert!(ops.rot(&g).unwrap().linf() <= 1e-8 * w.linf());
}

#[test]
fn dense_patch_keeps_its_area_and_mass() {
    let grid = Grid::new(128, 2.0 * PI).unwrap();
    let ops = SpectralOps::new(grid);
    let curve = FourierCurve::circle(PI, PI, 1.0);
    let rho = ScalarField::from_fn(grid, |x, y| {
        let r = ((x - PI).powi(2) + (y - PI).powi(2)).sqrt();
        1.0 + 0.5 * (1.0 - ((r - 1.0) / 0.2).tanh())
    });
    let u = Swirl {
        center: [PI + 0.4, PI + 0.2],
        amplitude: 0.5,
        radius: 1.0,
    }
    .velocity(&ops)
    .unwrap();
    let solver = IncompressibleSolver::new(ops, 0.05, rho.max(), 0.4, true, 1e-12).unwrap();
    let mut state = solver.prepare(&FluidState::new(rho, u, 0.0).unwrap()).unwrap().0;
    let mut markers = MarkerCurve::from_curve(&curve, 256).unwrap();
    let (a0, m0) = (markers.area(), state.mass());
    while state.t < 0.5 {
        let dt = solver.cfl_dt(&state).unwrap().min(0.5 - state.t);
        let (next, rep) = solver.step_with(&state, dt).unwrap();
        assert!(rep.div_inf <= 1e-9, "{}", rep.div_inf);
        markers = advect_markers(&markers, &state.u, &next.u, dt).unwrap();
        state = next;
    }
    assert!((markers.area() - a0).abs() <= 1e-3 * a0, "{} vs {a0}", markers.area());
    assert!((state.mass() - m0).abs() <= 1e-12 * m0);
}

#[test]
fn slope_fits_recover_power_laws() {
    let nus = [10.0, 40.0, 160.0, 640.0];
    let series: Vec<Vec<f64>> = nus
        .iter()
        .map(|nu: &f64| (0..20).map(|k| 3.0 * nu.powf(-0.5) * (1.0 + k as f64 / 40.0)).collect())
        .collect();
    let fit = fit_scaling(&nus, &series, 100, 7).unwrap();
    assert!((fit.slope + 0.5).abs() < 1e-12, "{}", fit.slope);
    assert!((fit.ci_low + 0.5).abs() < 1e-12 && (fit.ci_high + 0.5).abs() < 1e-12);

    let series: Vec<Vec<f64>> = nus.iter().map(|nu| vec![2.0 / nu, 1.0 / nu]).collect();
    assert!((fit_scaling(&nus, &series, 0, 0).unwrap().slope + 1.0).abs() < 1e-12);
}

#[test]
fn slope_fit_skips_nonpositive_metrics() {
    let nus = [1.0, 2.0, 4.0, 8.0];
    let series = vec![vec![1.0], vec![0.5], vec![0.0], vec![0.125]];
    let fit = fit_scaling(&nus, &series, 10, 0).unwrap();
    assert_eq!(fit.excluded_nus, vec![4.0]);
    assert!((fit.slope + 1.0).abs() < 1e-12);
    let too_few = vec![vec![1.0], vec![0.0], vec![0.0], vec![0.125]];
    assert!(fit_scaling(&nus, &too_few, 10, 0).is_err());
}

fn small_base(t_end: f64) -> RunConfig {
    let mut s = SimConfig::basic(32, 2.0 * PI, 0.1, 1.0, PressureSpec::Gamma { a: 1.0, gamma: 2.0 }, 1.0, t_end);
    s.diagnostic_interval = Some(0.05);
    RunConfig::new(
        s,
        InitialCondition::Smooth {
            density_amplitude: 0.1,
            mode: [1, 0],
            swirl: 0.5,
        },
    )
}

#[test]
fn nu_lists_are_checked() {
    let base = small_base(0.1);
    let opts = SweepOptions::default();
    assert!(run_sweep(&base, &[2.0, 2.0], &opts).is_err());
    assert!(run_sweep(&base, &[4.0, 2.0], &opts).is_err());
    assert!(run_sweep(&base, &[0.2], &opts).is_err());
    assert!(run_sweep(&base, &[], &opts).is_err());
}

#[test]
fn single_member_sweep_has_no_fit() {
    let sweep = run_sweep(&small_base(0.1), &[2.0], &SweepOptions::default()).unwrap();
    assert_eq!(sweep.members.len(), 1);
    assert!(sweep.div_fit.is_none());
    assert!(!sweep.partial);
    let table = compare_limit(&sweep, 10, 0).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert!(table.residual_fit.is_none());
}

#[test]
fn sweep_members_share_a_step_and_parallel_runs_match_serial() {
    let base = small_base(0.2);
    let nus = [1.0, 4.0, 16.0];
    let serial = run_sweep(&base, &nus, &SweepOptions::default()).unwrap();
    let parallel = run_sweep(&base, &nus, &SweepOptions { workers: 3, ..Default::default() }).unwrap();
    assert_eq!(serial, parallel);
    let dt = serial.dt.unwrap();
    for m in &serial.members {
        assert_eq!(m.config.simulation.fixed_dt, Some(dt));
        assert!((m.config.simulation.lambda + 0.2 - m.nu).abs() < 1e-12);
        assert_eq!(m.discrepancy.len(), 5);
        assert_eq!(m.discrepancy[0].1, 0.0);
    }
    let fit = serial.div_fit.as_ref().unwrap();
    assert!(fit.slope < 0.0);
    let table = compare_limit(&serial, 20, 1).unwrap();
    assert!(!table.resampled);
    assert_eq!(table.rows.len(), 15);
    let sups: Vec<f64> = table.sup_discrepancy.iter().map(|s| s.1).collect();
    assert!(sups[2] < sups[0], "{sups:?}");
    assert!(table.to_csv().lines().count() == 16);
}
