use std::f64::consts::PI;

use patchflow_core::diagnostics::{
    clms_check, energy, flow_fields, flow_sample, grad_decomposition, interp_terms, lipschitz_and_blowup_monitor,
    log_riesz_terms, pressure_by_flux_control, ContinuationSample, FlowSample, Tracker,
};
use patchflow_core::striated::VectorFieldFamily;
use patchflow_core::thermo::HlSample;
use patchflow_core::{FluidState, Grid, PressureSpec, ScalarField, SimConfig, Solver, SpectralOps, VectorField};
use proptest::prelude::*;

fn solver(n: usize, mu: f64, lambda: f64, a: f64, gamma: f64, rho_max: f64) -> Solver {
    let cfg = SimConfig::basic(n, 2.0 * PI, mu, lambda, PressureSpec::Gamma { a, gamma }, 1.0, 1.0);
    let law = cfg.pressure_law(rho_max).unwrap();
    Solver::new(cfg, law).unwrap()
}

fn smooth_state(g: Grid, amp: f64) -> FluidState {
    let rho = ScalarField::from_fn(g, |x, y| 1.0 + amp * (x.sin() * (2.0 * y).cos() + 0.3 * (x + y).cos()));
    let u = VectorField::from_fn(g, |x, y| (0.4 * y.sin() + 0.2 * (x - y).cos(), 0.3 * (2.0 * x).sin() * y.cos()));
    FluidState::new(rho, u, 0.0).unwrap()
}

#[test]
fn equilibrium_has_no_energy() {
    let s = solver(32, 0.1, 0.5, 1.0, 1.4, 2.0);
    let state = FluidState::equilibrium(s.ops().grid(), 1.0);
    let e = energy(&state, s.law(), 0.0).unwrap();
    assert!(e.total().abs() < 1e-14, "{e:?}");
    let f = flow_sample(&s, &state).unwrap();
    assert!(f.grad_u_l2 == 0.0 && f.g_l2.abs() < 1e-14 && f.sqrt_rho_udot_l2 < 1e-14);
}

#[test]
fn shear_mode_kinetic_energy() {
    let s = solver(32, 0.1, 0.5, 1.0, 1.4, 2.0);
    let g = s.ops().grid();
    // grad_perp sin x1 = (0, -cos x1)
    let u = s.ops().perp_grad(&ScalarField::from_fn(g, |x, _| x.sin())).unwrap();
    let state = FluidState::new(ScalarField::constant(g, 1.0), u, 0.0).unwrap();
    let e = energy(&state, s.law(), 0.0).unwrap();
    assert!((e.kinetic - PI * PI).abs() < 1e-12, "{}", e.kinetic);
    assert!(e.potential.abs() < 1e-14);
}

#[test]
fn quadratic_law_potential_in_closed_form() {
    // gamma = 2, a = 1, rho_tilde = 1: H_1 = (rho - 1)^2
    let s = solver(64, 0.1, 0.5, 1.0, 2.0, 4.0);
    let g = s.ops().grid();
    let rho = ScalarField::from_fn(g, |x, _| 1.0 + 0.5 * x.sin());
    let state = FluidState::new(rho, VectorField::zeros(g), 0.0).unwrap();
    let e = energy(&state, s.law(), 0.0).unwrap();
    let exact = 0.25 * 2.0 * PI * PI;
    assert!((e.potential - exact).abs() < 1e-8 * exact, "{}", e.potential);
}

#[test]
fn stokes_mode_keeps_first_functional_constant() {
    // rho = rho_tilde, u = grad_perp sin x1: u(t) = e^{-mu t} u0 and A1 = mu pi^2 for all t
    let mu = 0.1;
    let s = solver(32, mu, 0.5, 1.0, 1.4, 2.0);
    let g = s.ops().grid();
    let u = s.ops().perp_grad(&ScalarField::from_fn(g, |x, _| x.sin())).unwrap();
    let mut state = FluidState::new(ScalarField::constant(g, 1.0), u, 0.0).unwrap();
    let mut tracker = Tracker::new();
    tracker.push(flow_sample(&s, &state).unwrap());
    let dt = 0.01;
    let exact = mu * PI * PI;
    while state.t < 1.0 - 1e-12 {
        let (next, _) = s.step_with(&state, dt, patchflow_core::solver::CflLimit::Fixed).unwrap();
        state = next;
        tracker.push(flow_sample(&s, &state).unwrap());
        let a1 = tracker.a1(mu, 0.5).unwrap();
        assert!((a1 - exact).abs() < 1e-2 * exact, "t = {}: {a1} vs {exact}", state.t);
    }
    let e = tracker.energy().unwrap();
    assert!((e.total() - PI * PI).abs() < 1e-3 * PI * PI, "{e:?}");
}

fn sample_with_rate(t: f64, rate: f64) -> FlowSample {
    FlowSample {
        t,
        kinetic: 0.0,
        potential: 0.0,
        mass: 1.0,
        rho_min: 1.0,
        rho_max: 1.0,
        grad_u_l2: 0.0,
        grad_u_inf: 0.0,
        div_l2: 0.0,
        div_inf: 0.0,
        g_l2: 0.0,
        f_l2: 0.0,
        f_inf: 0.0,
        sqrt_rho_udot_l2: 0.0,
        udot_l2: 0.0,
        momentum_rate_l2: 0.0,
        grad_f_l2: 0.0,
        grad_udot_l2: 0.0,
        fdot_l2: 0.0,
        vacuum_fraction: 0.0,
        dissipation_rate: 0.0,
        a2_rate: rate,
    }
}

#[test]
fn second_functional_is_time_weighted_before_one() {
    let mut tr = Tracker::new();
    for k in 0..=200 {
        tr.push(sample_with_rate(k as f64 * 0.01, 1.0));
    }
    let a2 = tr.a2().unwrap();
    // int_0^1 t dt + int_1^2 dt
    assert!((a2.value - 1.5).abs() < 1e-12, "{a2:?}");
    assert!((a2.unweighted - 2.0).abs() < 1e-12);
    assert!(a2.reliable);
    let mut vac = sample_with_rate(2.01, 1.0);
    vac.vacuum_fraction = 0.3;
    tr.push(vac);
    assert!(!tr.a2().unwrap().reliable);
}

#[test]
fn decomposition_reassembles_gradient() {
    let s = solver(64, 0.2, 1.0, 1.0, 1.4, 4.0);
    let state = smooth_state(s.ops().grid(), 0.2);
    let d = grad_decomposition(&s, &state).unwrap();
    assert!(d.residual <= 1e-8, "{}", d.residual);
    assert!(d.from_pressure_inf > 0.0);
}

#[test]
fn flux_rate_matches_finite_difference() {
    // F_dot = d_t F + u . grad F, from two nearby solver states
    let s = solver(128, 0.2, 1.0, 1.0, 1.4, 4.0);
    let ops = s.ops();
    let state = smooth_state(ops.grid(), 0.1);
    let fields = flow_fields(&s, &state).unwrap();
    let dt = 1e-5;
    let (next, _) = s.step_with(&state, dt, patchflow_core::solver::CflLimit::Fixed).unwrap();
    let later = flow_fields(&s, &next).unwrap();
    let gf = ops.grad(&fields.flux).unwrap();
    let gf_next = ops.grad(&later.flux).unwrap();
    let adv = |u: &VectorField, g: &VectorField| {
        ScalarField::from_vec(u.grid, (0..u.x.len()).map(|k| u.x[k] * g.x[k] + u.y[k] * g.y[k]).collect()).unwrap()
    };
    let advection = adv(&state.u, &gf).add(&adv(&next.u, &gf_next)).scale(0.5);
    let fd = later.flux.sub(&fields.flux).scale(1.0 / dt).add(&advection);
    let mid = fields.fdot.add(&later.fdot).scale(0.5);
    let rel = fd.sub(&mid).l2() / mid.l2();
    assert!(rel < 2e-2, "{rel}");
}

fn unit_frame(g: Grid) -> VectorFieldFamily {
    VectorFieldFamily::new(vec![VectorField::constant(g, 1.0, 0.0), VectorField::constant(g, 0.0, 1.0)], 4.0).unwrap()
}

#[test]
fn log_riesz_single_mode() {
    let g = Grid::new(64, 2.0 * PI).unwrap();
    let ops = SpectralOps::new(g);
    let gf = ScalarField::from_fn(g, |x, _| x.sin());
    let t = log_riesz_terms(&ops, &gf, &unit_frame(g), 4.0, 4.0).unwrap().unwrap();
    // R1 R1 sin x1 = sin x1, the other entries vanish
    assert!((t.lhs - 1.0).abs() < 1e-12);
    let l4 = (2.0 * PI * 3.0 * PI / 4.0).powf(0.25);
    assert!((t.g_lq - l4).abs() < 1e-10);
    assert!(t.margin(1.0) > 0.0);
    assert!(log_riesz_terms(&ops, &ScalarField::zeros(g), &unit_frame(g), 4.0, 4.0).unwrap().is_none());
}

#[test]
fn clms_closed_form_and_degenerate_pair() {
    let g = Grid::new(32, 2.0 * PI).unwrap();
    let ops = SpectralOps::new(g);
    let f = ScalarField::from_fn(g, |x, y| x.cos() * y.cos());
    let v = ScalarField::from_fn(g, |x, _| x.sin());
    let w = ScalarField::from_fn(g, |_, y| y.sin());
    let r = clms_check(&ops, &f, &v, &w).unwrap().unwrap();
    let exact = 1.0 / (2.0 * 2f64.sqrt() * PI);
    assert!((r - exact).abs() < 1e-12, "{r} {exact}");
    assert!(clms_check(&ops, &f, &v, &v).unwrap().unwrap() < 1e-14);
    assert!(clms_check(&ops, &ScalarField::zeros(g), &v, &w).unwrap().is_none());
}

#[test]
fn interpolation_at_constant_density() {
    let g = Grid::new(64, 2.0 * PI).unwrap();
    let ops = SpectralOps::new(g);
    let rt = 2.5;
    let rho = ScalarField::constant(g, rt);
    let v = ScalarField::from_fn(g, |x, y| x.sin() + 0.5 * (x + 2.0 * y).cos());
    let t = interp_terms(&ops, &v, &rho, rt, 4.0, 4.0).unwrap();
    assert!((t.ratio_l2() - 1.0 / rt.sqrt()).abs() < 1e-12);
    // q = 4: rho^{1/6} ||v||_4 against (sqrt(rt) ||v||_2)^{1/2} ||grad v||^{1/2}
    let expected = rt.powf(1.0 / 6.0) * v.lp(4.0) / ((rt.sqrt() * v.l2()).sqrt() * ops.grad(&v).unwrap().l2().sqrt());
    assert!((t.ratio_lq() - expected).abs() < 1e-12);
}

fn bump(g: Grid, s: f64) -> ScalarField {
    let (cx, cy) = g.center();
    ScalarField::from_fn(g, |x, y| {
        let r2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (s * s);
        if r2 < 1.0 {
            (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    })
}

#[test]
fn interpolation_ratio_is_scale_invariant() {
    // v(x/s) at rho = rho_tilde: ||v||_4 ~ s^{1/2}, ||v||_2 ~ s, ||grad v||_2 ~ 1
    let g = Grid::new(256, 2.0 * PI).unwrap();
    let ops = SpectralOps::new(g);
    let rho = ScalarField::constant(g, 1.0);
    let ratio = |s| {
        let v = bump(g, s);
        interp_terms(&ops, &v, &rho, 1.0, 4.0, 4.0).unwrap().ratio_lq()
    };
    let (a, b) = (ratio(1.0), ratio(2.0));
    assert!((a - b).abs() < 1e-2 * a, "{a} {b}");
}

#[test]
fn monitor_recovers_exponential_constant() {
    let c = 0.7;
    let k = 1.0 + 2.0 * 0.5;
    let hist: Vec<_> = (0..20)
        .map(|i| {
            let t = 0.1 * i as f64;
            ContinuationSample {
                t,
                family_norm: 1.0,
                inv_nondegeneracy: 0.5,
                inv_rho_inf: Some(1.0),
                rho_inf: 1.0,
                rho_deviation_inf: 0.1 + 0.01 * i as f64,
                directional: 0.0,
                grad_u_l2: 1.0,
                udot_l2: 1.0,
                lipschitz_integral: if i == 19 { c * k * (c * t).exp() } else { 0.0 },
                a3: 2.0,
            }
        })
        .collect();
    let r = lipschitz_and_blowup_monitor(&hist).unwrap();
    assert!((r.fitted_lipschitz_constant - c).abs() < 1e-9);
    assert!((r.density_excess - (0.29f64.powi(2) - 0.01)).abs() < 1e-12);
    assert!(r.all_finite);
}

#[test]
fn pressure_control_fit() {
    // ||G||^2 = 4, ||F||^2 = 1, l = 1, nu = 1, no H budget: C = 4
    let hist: Vec<_> = (0..5)
        .map(|i| HlSample {
            t: i as f64,
            h_l1: 0.0,
            g_norm: 2.0,
            f_norm: 1.0,
            cross: 0.0,
        })
        .collect();
    let c = pressure_by_flux_control(&hist, 1.0, 1.0).unwrap();
    assert!((c.fitted_constant - 4.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn clms_ratio_is_homogeneous(a in 0.1f64..10.0, b in 0.1f64..10.0, c in 0.1f64..10.0, k in 1usize..4) {
        let g = Grid::new(32, 2.0 * PI).unwrap();
        let ops = SpectralOps::new(g);
        let kf = k as f64;
        let f = ScalarField::from_fn(g, |x, y| (kf * x).cos() * y.sin());
        let v = ScalarField::from_fn(g, |x, y| x.sin() + (kf * y).cos());
        let w = ScalarField::from_fn(g, |x, y| (x + y).sin());
        let r0 = clms_check(&ops, &f, &v, &w).unwrap().unwrap();
        let r1 = clms_check(&ops, &f.scale(a), &v.scale(b), &w.scale(c)).unwrap().unwrap();
        prop_assert!((r0 - r1).abs() <= 1e-14 + 1e-10 * r0);
    }

    #[test]
    fn decomposition_residual_small(amp in 0.0f64..0.3, lambda in 0.0f64..5.0) {
        let s = solver(32, 0.2, lambda, 1.0, 1.4, 4.0);
        let d = grad_decomposition(&s, &smooth_state(s.ops().grid(), amp)).unwrap();
        prop_assert!(d.residual <= 1e-8);
    }

    #[test]
    fn energy_parts_nonnegative(amp in 0.0f64..0.9) {
        let s = solver(32, 0.2, 0.5, 1.0, 1.4, 4.0);
        let st = smooth_state(s.ops().grid(), amp / 1.4);
        let e = energy(&st, s.law(), 0.0).unwrap();
        prop_assert!(e.kinetic >= 0.0 && e.potential >= 0.0);
    }
}

#[test]
fn momentum_residual_is_shear_times_divergence() {
    // rho u_dot - grad F - mu Lap u = -mu grad div u, whose H^{-1} norm is mu ||div u||_2
    let s = solver(64, 0.2, 1.0, 1.0, 1.4, 4.0);
    let state = smooth_state(s.ops().grid(), 0.2);
    let fields = flow_fields(&s, &state).unwrap();
    let r = patchflow_core::diagnostics::momentum_residual_hm1(&s, &state, &fields).unwrap();
    let expected = 0.2 * fields.div_u.l2();
    assert!((r - expected).abs() < 1e-10 * expected, "{r} {expected}");
}
