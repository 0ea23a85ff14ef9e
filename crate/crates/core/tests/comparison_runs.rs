use terrace_lab::front::{LimitProfile, Verdict};
use terrace_lab::pde::{heaviside_ic, sandwich_ic, simulate, BoundaryPolicy, Field, Grid, Shape, SimParams};
use terrace_lab::periodic::{OdeConfig, PeriodicSolution};
use terrace_lab::supersub::{
    check_comparison, default_cert_tol, fife_mcleod, flattening_super, sandwich_fit, Bound, CheckOptions,
};
use terrace_lab::terrace::WaveProfile;
use terrace_lab::NonlinearitySpec;

fn exact_bistable_wave(a: f64, dxi: f64) -> WaveProfile {
    let half = (40.0 / dxi).round() as usize;
    let xi_min = -(half as f64) * dxi;
    let row: Vec<f64> =
        (0..=2 * half).map(|m| 1.0 / (1.0 + ((xi_min + m as f64 * dxi) / 2f64.sqrt()).exp())).collect();
    let n = row.len();
    let lp = LimitProfile {
        alpha: 0.5,
        xi_min,
        dxi,
        tau: vec![0.0],
        profiles: vec![row],
        speed: (1.0 - 2.0 * a) / 2f64.sqrt(),
        base_period: 0,
        base_shift: 0.0,
        region: (0, n - 1),
        tails: (1.0, 0.0),
        convergence_defect: 0.0,
        central_variation: 1.0,
        verdict: Verdict::Wave,
        shifts: vec![],
    };
    let top = PeriodicSolution::constant(1.0, 1.0, 64);
    let bottom = PeriodicSolution::constant(0.0, 1.0, 64);
    WaveProfile::new(lp.speed, 0.0, top, bottom, &lp)
}

fn dominated(upper: &Field, lower: &Field, tol: f64) -> bool {
    upper.values.iter().zip(&lower.values).all(|(u, l)| *l <= u + tol)
}

#[test]
fn certified_corrector_dominates_the_solution() {
    let spec = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
    let wave = exact_bistable_wave(0.25, 0.01);
    let cf = fife_mcleod(&spec, Bound::Upper, &wave, wave.speed + 0.1, 0.0, 0.02).unwrap();
    let grid = Grid::with_spacing(-30.0, 30.0, 0.1).unwrap();
    let times: Vec<f64> = (0..=16).map(|j| 0.25 * j as f64).collect();
    let opts = CheckOptions::new(0.01, default_cert_tol(&spec, 0.0, 1.0));
    let rep = check_comparison(&cf, &spec, &grid, &times, &opts);
    assert!(rep.certified, "{rep:?}");

    let w0 = cf.field(grid, 0.0);
    let u0 = Field::from_fn(grid, 0.0, |x| cf.eval(0.0, x).clamp(0.0, 1.0));
    assert!(dominated(&w0, &u0, 0.0));
    let run = simulate(&spec, &u0, BoundaryPolicy::default(), &SimParams::new(0.01, 4.0).with_stride(10, None)).unwrap();
    for f in &run.snapshots {
        assert!(dominated(&cf.field(grid, f.t), f, 1e-8), "t = {}", f.t);
    }
}

#[test]
fn flattening_fronts_bracket_general_data() {
    let spec = NonlinearitySpec::bistable(0.3, 1.0).unwrap();
    let top = PeriodicSolution::constant(1.0, 1.0, 64);
    let grid = Grid::with_spacing(-40.0, 60.0, 0.1).unwrap();
    let shape = Shape::GeneralH3 { left: 1.05, right: 0.1, bump: 0.15 };
    let u0 = sandwich_ic(&grid, -5.0, 5.0, 1.0, &shape).unwrap();
    let cfg = OdeConfig::default();
    let t_end = 10.0;
    let up = flattening_super(&u0, &spec, &top, Bound::Upper, t_end, &cfg).unwrap();
    let low = flattening_super(&u0, &spec, &top, Bound::Lower, t_end, &cfg).unwrap();
    let opts = CheckOptions::new(0.01, default_cert_tol(&spec, 0.0, 1.0));
    let times: Vec<f64> = (0..=20).map(|j| 0.5 * j as f64).collect();
    assert!(check_comparison(&up, &spec, &grid, &times, &opts).certified);
    assert!(check_comparison(&low, &spec, &grid, &times, &opts).certified);
    let run = simulate(&spec, &u0, BoundaryPolicy::tracking(), &SimParams::new(0.01, t_end).with_stride(20, None))
        .unwrap();
    for f in &run.snapshots {
        assert!(dominated(&up.field(grid, f.t), f, 1e-8), "upper at t = {}", f.t);
        assert!(dominated(f, &low.field(grid, f.t), 1e-8), "lower at t = {}", f.t);
    }
}

#[test]
fn sandwich_fit_of_an_ordered_heaviside_run_is_trivial() {
    let spec = NonlinearitySpec::bistable(0.3, 1.0).unwrap();
    let grid = Grid::with_spacing(-30.0, 50.0, 0.1).unwrap();
    let params = SimParams::new(0.01, 10.0);
    let bc = BoundaryPolicy::default();
    let run = |a: f64| simulate(&spec, &heaviside_ic(&grid, a, 1.0), bc, &params).unwrap();
    let fit = sandwich_fit(&run(0.0), &run(5.0), &run(-5.0), 0.0).unwrap();
    assert!(fit.fit_ok);
    assert_eq!(fit.k0_hat, 0.0);
    assert!(fit.violations.iter().all(|v| v.1 == 0.0));
}

#[test]
fn sandwich_fit_flags_unstable_zero() {
    let spec = NonlinearitySpec::kpp(1.0);
    let grid = Grid::with_spacing(-30.0, 50.0, 0.1).unwrap();
    let params = SimParams::new(0.01, 5.0);
    let bc = BoundaryPolicy::default();
    let run = |a: f64| simulate(&spec, &heaviside_ic(&grid, a, 1.0), bc, &params).unwrap();
    let fit = sandwich_fit(&run(0.0), &run(5.0), &run(-5.0), 0.0).unwrap();
    assert!(!fit.fit_ok);
    assert!(fit.note.as_deref().unwrap_or("").contains("hypotheses unmet"));
}

#[test]
fn sandwich_violations_decay_for_general_data() {
    let spec = NonlinearitySpec::bistable(0.3, 1.0).unwrap();
    let grid = Grid::with_spacing(-40.0, 60.0, 0.1).unwrap();
    let shape = Shape::GeneralH3 { left: 1.1, right: 0.1, bump: 0.1 };
    let u0 = sandwich_ic(&grid, -3.0, 3.0, 1.0, &shape).unwrap();
    let params = SimParams::new(0.01, 30.0);
    let bc = BoundaryPolicy::tracking();
    let u = simulate(&spec, &u0, bc, &params).unwrap();
    let hat = |a: f64| simulate(&spec, &heaviside_ic(&grid, a, 1.0), bc, &params).unwrap();
    let fit = sandwich_fit(&u, &hat(15.0), &hat(-15.0), 0.0).unwrap();
    assert!(fit.fit_ok, "{fit:?}");
    assert!(fit.beta0_hat > 0.0 && fit.k0_hat > 0.0);
}
