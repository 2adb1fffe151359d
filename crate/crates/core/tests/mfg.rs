use lanemfg::hjb::{solve_backward, DensityPath};
use lanemfg::mfg::velocity;
use lanemfg::scenario::{DENSITY_ZERO, PRESET_SEC6_COARSE};
use lanemfg::transport::{forward_step, total_mass};
use lanemfg::{solve, DampingSchedule, InitialDensity, LaneArray, Problem, Scenario, TargetSet};

fn bump(center: f64, height: f64, width: f64) -> Vec<[f64; 2]> {
    vec![[-1e3, 0.0], [center - width, 0.0], [center, height], [center + width, 0.0], [1e3, 0.0]]
}

/// 25-long road, dx = 0.25, dt = 0.25.
fn small(lanes: usize, horizon: f64, density: InitialDensity) -> Scenario {
    let mut s = Scenario::preset(PRESET_SEC6_COARSE).unwrap();
    s.lanes = lanes;
    s.nodes = 101;
    s.horizon = horizon;
    s.steps = (horizon / 0.25).round() as usize;
    s.target = TargetSet::at_position(25.0, lanes);
    s.initial_density = density;
    s.snapshots = None;
    s
}

fn staggered(lanes: usize) -> InitialDensity {
    InitialDensity::Samples((0..lanes).map(|l| bump(3.0 + 2.0 * l as f64, 0.45, 2.5)).collect())
}

#[test]
fn empty_road_converges_at_once() {
    let p = small(3, 10.0, InitialDensity::Preset(DENSITY_ZERO.into())).to_problem().unwrap();
    let sol = solve(&p).unwrap();
    assert!(sol.converged);
    assert!(sol.iterations <= 2, "{} iterations", sol.iterations);
    assert!(sol.rho().iter().all(|r| r.as_slice().iter().all(|x| *x == 0.0)));
}

#[test]
fn single_lane_is_pure_transport() {
    let p = small(1, 10.0, InitialDensity::Samples(vec![bump(5.0, 0.5, 3.0)])).to_problem().unwrap();
    let sol = solve(&p).unwrap();
    assert!(sol.policies.iter().all(|pol| pol.target.as_slice().iter().all(|t| *t == 0)));
    let zero = LaneArray::filled(1, p.grid.len(), 0.0);
    let mut rho = p.rho0.clone();
    for k in 0..p.time.steps() {
        let vel = velocity(&p, &rho, &sol.policies[k], Some(&sol.values[k])).unwrap();
        rho = forward_step(&rho, &vel, &zero, &p.grid, p.time.dt()).unwrap().rho;
        for (a, b) in rho.as_slice().iter().zip(sol.rho()[k + 1].as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn mass_ledger_balances_every_level() {
    let p = small(3, 25.0, staggered(3)).to_problem().unwrap();
    let sol = solve(&p).unwrap();
    let tr = &sol.trajectory;
    let m0 = total_mass(&tr.rho[0], &p.grid).total;
    for k in 0..tr.rho.len() {
        let m = total_mass(&tr.rho[k], &p.grid).total;
        assert!((m - tr.expected_mass(&p.grid, k)).abs() <= 1e-10 * m0, "level {k}");
    }
    assert!(tr.rho.iter().all(|r| r.as_slice().iter().all(|x| *x >= 0.0)));
}

fn undamped(mut s: Scenario) -> Problem {
    s.solver.damping = 1.0;
    s.solver.schedule = DampingSchedule::Constant;
    s.solver.tol_policy = 0.0;
    s.solver.tol_value = Some(0.0);
    s.to_problem().unwrap()
}

#[test]
fn converged_undamped_solution_is_a_fixed_point() {
    let p = undamped(small(1, 10.0, InitialDensity::Samples(vec![bump(5.0, 0.3, 3.0)])));
    let sol = solve(&p).unwrap();
    assert!(sol.converged, "{:?}", sol.residual_history.last());
    let again = solve_backward(DensityPath::Trajectory(sol.rho()), &p.terminal(), &p.hjb_params()).unwrap();
    assert_eq!(again.policies, sol.policies);
    assert_eq!(again.values, sol.values);
}

#[test]
fn shift_of_the_road_shifts_the_solution() {
    let base = small(2, 10.0, staggered(2));
    let mut moved = base.clone();
    moved.domain = [8.0, 33.0];
    moved.target = TargetSet::at_position(33.0, 2);
    moved.initial_density = InitialDensity::Samples(
        (0..2).map(|l| bump(11.0 + 2.0 * l as f64, 0.45, 2.5)).collect(),
    );
    let a = solve(&base.to_problem().unwrap()).unwrap();
    let b = solve(&moved.to_problem().unwrap()).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.policies, b.policies);
    for (ra, rb) in a.rho().iter().zip(b.rho()) {
        for (x, y) in ra.as_slice().iter().zip(rb.as_slice()) {
            assert!((x - y).abs() <= 1e-9);
        }
    }
}
