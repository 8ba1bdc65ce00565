use dicke_core::dynamics::{
    build_delay_system, fit_decay_rate, max_population_deviation, population, solve_dde,
    solve_volterra_converged, QuadratureGrid,
};
use dicke_core::ArrayParams;

// (N, quadrature step). The delay solver step is fixed by the first delay;
// the quadrature only needs to resolve the decay.
const CASES: [(usize, f64); 3] = [(1, 2e-3), (5, 2e-4), (20, 5e-5)];

#[test]
fn delay_and_quadrature_solvers_agree() {
    for (n, quad_dt) in CASES {
        let p = ArrayParams::mqw(n);
        let t_max = 3.0 / p.superradiant_rate();
        let sys = build_delay_system(&p);
        let dde = solve_dde(&sys, t_max, (sys.max_step() / 2.0).min(1e-2)).unwrap();
        let grid = QuadratureGrid::for_window(&p, t_max, 2e4 / p.light_speed_per_unit());
        let quad = solve_volterra_converged(&p, grid, t_max, quad_dt, 1e-4).unwrap();
        let deviation = max_population_deviation(&dde, &quad.trace);
        assert!(deviation < 1e-3, "N={n}: deviation {deviation:e}");
        assert!(
            quad.change < 1e-4,
            "N={n}: refinement change {:e}",
            quad.change
        );
    }
}

#[test]
fn negligible_delays_give_superradiant_rate() {
    for n in [2, 5, 10, 20] {
        let base = ArrayParams::mqw(n);
        // tau N^2 Gamma = 5e-4
        let tau = 5e-4 / ((n * n) as f64 * base.gamma_tle);
        let v_nm_per_ps = base.spacing_nm / (tau * base.time_unit_ps);
        let p = ArrayParams {
            light_speed_nm_per_ps: v_nm_per_ps,
            ..base
        };
        assert!(p.delay_step() * (n * n) as f64 * p.gamma_tle < 1e-3);
        let sys = build_delay_system(&p);
        let window = 1.0 / p.superradiant_rate();
        let trace = solve_dde(&sys, window, sys.max_step() / 2.0).unwrap();
        let rate = fit_decay_rate(&population(&trace), (0.0, window)).unwrap();
        let expected = n as f64 * p.gamma_tle;
        assert!(
            (rate / expected - 1.0).abs() < 0.02,
            "N={n}: {rate} vs {expected}"
        );
    }
}

#[test]
fn early_rate_ratio_for_sixty_and_twenty() {
    let rate = |n: usize| {
        let p = ArrayParams::mqw(n);
        let sys = build_delay_system(&p);
        let window = 1.0 / p.superradiant_rate();
        let trace = solve_dde(&sys, window, sys.max_step() / 2.0).unwrap();
        fit_decay_rate(&population(&trace), (0.0, window)).unwrap()
    };
    let ratio = rate(60) / rate(20);
    assert!((ratio / 3.0 - 1.0).abs() < 0.1, "{ratio}");
}

#[test]
fn single_emitter_population_law() {
    let p = ArrayParams::mqw(1);
    let sys = build_delay_system(&p);
    let trace = solve_dde(&sys, 5.0 / p.gamma_tle, 1e-2).unwrap();
    for (k, b) in trace.values.iter().enumerate() {
        let exact = (-p.gamma_tle * trace.time(k)).exp();
        assert!((b.norm_sqr() / exact - 1.0).abs() < 1e-6);
    }
}
