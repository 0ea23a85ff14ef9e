use proptest::prelude::*;
use terrace_lab::front::{level_crossing, Which};
use terrace_lab::pde::{
    heaviside_ic, monotone_dt, sandwich_ic, simulate, BoundaryPolicy, Field, Grid, Shape, SimParams,
};
use terrace_lab::{Family, NonlinearitySpec};

fn small_grid() -> Grid {
    Grid::new(-10.0, 10.0, 201).unwrap()
}

fn spec_strategy() -> impl Strategy<Value = NonlinearitySpec> {
    prop_oneof![
        (0.05f64..0.95).prop_map(|a| NonlinearitySpec::bistable(a, 1.0).unwrap()),
        (0.0f64..0.9).prop_map(|rho| {
            let base = Family::BistableCubic { a: 0.3 };
            NonlinearitySpec::new(Family::TimePeriodicProduct { rho, base: Box::new(base) }, 1.0).unwrap()
        }),
        Just(NonlinearitySpec::kpp(1.0)),
    ]
}

fn sample_field(grid: Grid, seeds: &[f64]) -> Field {
    // Piecewise-linear random profile through the seed values.
    let h = 20.0 / (seeds.len() - 1) as f64;
    Field::from_fn(grid, 0.0, |x| terrace_lab::interp::linear(-10.0, h, seeds, x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ordered_data_stay_ordered(
        spec in spec_strategy(),
        low in prop::collection::vec(0.0f64..1.0, 12),
        gap in prop::collection::vec(0.0f64..0.3, 12),
    ) {
        let high: Vec<f64> = low.iter().zip(&gap).map(|(a, b)| a + b).collect();
        let grid = small_grid();
        let (u1, u2) = (sample_field(grid, &low), sample_field(grid, &high));
        let dt = monotone_dt(&spec, 0.0, 1.3, 0.01);
        let params = SimParams::new(dt, 3.0).with_stride(10, None);
        let r1 = simulate(&spec, &u1, BoundaryPolicy::tracking(), &params).unwrap();
        let r2 = simulate(&spec, &u2, BoundaryPolicy::tracking(), &params).unwrap();
        for (a, b) in r1.snapshots.iter().zip(&r2.snapshots) {
            prop_assert!((a.t - b.t).abs() < 1e-12);
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!(*x <= y + 1e-10, "order lost at t = {}: {x} > {y}", a.t);
            }
        }
    }

    #[test]
    fn shifted_data_give_shifted_solutions(spec in spec_strategy(), m in 1i64..20) {
        let grid = Grid::new(-30.0, 30.0, 601).unwrap();
        let ic = heaviside_ic(&grid, -5.0, 1.0);
        let shifted = ic.translated(m);
        let params = SimParams::new(0.01, 2.0);
        let r1 = simulate(&spec, &ic, BoundaryPolicy::default(), &params).unwrap();
        let r2 = simulate(&spec, &shifted, BoundaryPolicy::default(), &params).unwrap();
        let (a, b) = (r1.last(), r2.last());
        let m = m as usize;
        // Interior nodes, well away from the ends.
        for i in 100..500 {
            prop_assert!((a.values[i] - b.values[i + m]).abs() < 1e-12, "node {i}");
        }
    }
}

#[test]
fn heaviside_runs_stay_monotone() {
    for spec in [
        NonlinearitySpec::bistable(0.25, 1.0).unwrap(),
        NonlinearitySpec::kpp(1.0),
        NonlinearitySpec::new(Family::MultistableQuintic { kappa: 50.0, theta1: 0.1, q: 0.5, theta2: 0.7 }, 1.0)
            .unwrap(),
    ] {
        let grid = Grid::with_spacing(-20.0, 60.0, 0.1).unwrap();
        let ic = heaviside_ic(&grid, 0.0, 1.0);
        let dt = monotone_dt(&spec, 0.0, 1.0, 0.01);
        let run = simulate(&spec, &ic, BoundaryPolicy::default(), &SimParams::new(dt, 20.0).with_stride(50, None))
            .unwrap();
        for f in &run.snapshots {
            assert!(f.is_nonincreasing(1e-10), "{spec} at t = {}", f.t);
        }
    }
}

#[test]
fn sandwiched_data_stay_between_heaviside_runs() {
    let spec = NonlinearitySpec::bistable(0.3, 1.0).unwrap();
    let grid = Grid::with_spacing(-20.0, 60.0, 0.1).unwrap();
    let (a_minus, a_plus) = (-2.0, 4.0);
    let shape = Shape::RampBump { amplitude: 0.4, center: 0.6, width: 0.1 };
    let u0 = sandwich_ic(&grid, a_minus, a_plus, 1.0, &shape).unwrap();
    let params = SimParams::new(0.01, 20.0).with_stride(25, None);
    let bc = BoundaryPolicy::default();
    let mid = simulate(&spec, &u0, bc, &params).unwrap();
    let low = simulate(&spec, &heaviside_ic(&grid, a_minus, 1.0), bc, &params).unwrap();
    let high = simulate(&spec, &heaviside_ic(&grid, a_plus, 1.0), bc, &params).unwrap();
    for ((m, l), h) in mid.snapshots.iter().zip(&low.snapshots).zip(&high.snapshots) {
        for i in 0..grid.n_x {
            assert!(l.values[i] <= m.values[i] + 1e-8 && m.values[i] <= h.values[i] + 1e-8, "t = {}", m.t);
        }
    }
}

/// The Heaviside jump sits half a cell right of its node, an `O(dx)` offset
/// that is fixed at `t = 0`; the displacement between two times removes it.
/// Backward-Euler diffusion is first order in time, so `dt ≪ dx` keeps the
/// spatial error dominant.
#[test]
fn front_displacement_converges_at_second_order() {
    let spec = NonlinearitySpec::bistable(0.25, 1.0).unwrap();
    let displacement = |dx: f64, dt: f64| {
        let grid = Grid::with_spacing(-20.0, 40.0, dx).unwrap();
        let run = simulate(&spec, &heaviside_ic(&grid, 0.0, 1.0), BoundaryPolicy::default(), &SimParams::new(dt, 20.0))
            .unwrap();
        let mid = run.period_snapshots().find(|(k, _)| *k == 10).unwrap().1;
        level_crossing(run.last(), 0.5, Which::Rightmost).unwrap() - level_crossing(mid, 0.5, Which::Rightmost).unwrap()
    };
    let reference = displacement(0.0125, 0.00125);
    let coarse = (displacement(0.4, 0.005) - reference).abs();
    let fine = (displacement(0.2, 0.0025) - reference).abs();
    assert!(coarse / fine >= 3.0, "coarse {coarse:.3e}, fine {fine:.3e}, ratio {}", coarse / fine);
}
