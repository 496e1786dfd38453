use std::f64::consts::PI;

use weakkam::action::peierls_barrier;
use weakkam::limits::discount_sweep;
use weakkam::*;

const SCHEDULE: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

fn setup(spec: ModelSpec, n: usize) -> (LagrangianModel, SolverConfig) {
    let model = build_model(&spec).unwrap();
    let grid = GridSpec::new(1, n).unwrap();
    let cfg = SolverConfig::new(grid, &model);
    (model, cfg)
}

fn dist(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(1.0);
    d.min(1.0 - d)
}

fn node_x(grid: &GridSpec, i: usize) -> f64 {
    grid.node_point(i).coords()[0]
}

/// `(2/pi)(1 - cos(pi d(x, 0)))`, the pendulum barrier from the fixed point.
fn pendulum_barrier(x: f64) -> f64 {
    2.0 / PI * (1.0 - (PI * dist(x, 0.0)).cos())
}

#[test]
fn pendulum_barrier_matches_closed_form() {
    let (model, cfg) = setup(ModelSpec::pendulum(), 128);
    let cfg = cfg.with_c(1.0);
    let dx = cfg.grid.dx();
    let h = peierls_barrier(&TorusPoint::new(&[0.0]).unwrap(), &cfg, &model).unwrap();
    for i in 0..cfg.grid.len() {
        let x = node_x(&cfg.grid, i);
        assert!((h.field.get(i) - pendulum_barrier(x)).abs() < 5.0 * dx, "x = {x}: {}", h.field.get(i));
    }
}

#[test]
fn pendulum_self_barrier_off_the_aubry_set() {
    // h(1/2, 1/2) = h(1/2, 0) + h(0, 1/2) = 4/pi
    let (model, cfg) = setup(ModelSpec::pendulum(), 128);
    let cfg = cfg.with_c(1.0);
    let h = peierls_barrier(&TorusPoint::new(&[0.5]).unwrap(), &cfg, &model).unwrap();
    let at = h.field.get(64);
    assert!((at - 4.0 / PI).abs() < 5.0 * cfg.grid.dx(), "{at}");
}

#[test]
fn pendulum_forward_limit_is_reversed_barrier() {
    let (model, cfg) = setup(ModelSpec::pendulum(), 128);
    let sweep = discount_sweep(&SCHEDULE, &cfg, &model).unwrap();
    // L is even in v, so h(x, 0) = h(0, x)
    let u_plus = sweep.u0_plus().unwrap();
    let worst = (0..cfg.grid.len())
        .map(|i| (u_plus.get(i) + pendulum_barrier(node_x(&cfg.grid, i))).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.05, "sup |u+ + h(., 0)| = {worst}");
    let u_minus = sweep.u0_minus().unwrap();
    let worst = (0..cfg.grid.len())
        .map(|i| (u_minus.get(i) - pendulum_barrier(node_x(&cfg.grid, i))).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.05, "sup |u- - h(0, .)| = {worst}");
}

#[test]
fn two_bump_limit_is_the_nearer_well_barrier() {
    let (model, cfg) = setup(ModelSpec::two_bump(), 128);
    let sweep = discount_sweep(&SCHEDULE, &cfg, &model).unwrap();
    let u = sweep.u0_minus().unwrap();
    let grid = cfg.grid;
    let (u0, u_half) = (u.get(0), u.get(64));
    // the potential is invariant under x -> x + 1/2
    assert!((u0 - u_half).abs() < 1e-6, "{u0} vs {u_half}");
    for i in 0..grid.len() {
        let x = node_x(&grid, i);
        let d = dist(x, 0.0).min(dist(x, 0.5));
        let oracle = u0 + (1.0 - (2.0 * PI * d).cos()) / PI;
        assert!((u.get(i) - oracle).abs() < 0.05, "x = {x}: {} vs {oracle}", u.get(i));
    }

    let cfg = cfg.with_c(sweep.critical.value);
    let from_zero = peierls_barrier(&TorusPoint::new(&[0.0]).unwrap(), &cfg, &model).unwrap().field;
    let from_half = peierls_barrier(&TorusPoint::new(&[0.5]).unwrap(), &cfg, &model).unwrap().field;
    for i in (1..grid.len()).filter(|&i| (0.05..0.2).contains(&dist(node_x(&grid, i), 0.0))) {
        assert!(u0 + from_zero.get(i) < u_half + from_half.get(i), "node {i}");
    }
    for i in (1..grid.len()).filter(|&i| (0.05..0.2).contains(&dist(node_x(&grid, i), 0.5))) {
        assert!(u_half + from_half.get(i) < u0 + from_zero.get(i), "node {i}");
    }
}

#[test]
fn free_sweep_is_identically_zero() {
    let (model, cfg) = setup(ModelSpec::free(1), 32);
    let sweep = discount_sweep(&SCHEDULE, &cfg, &model).unwrap();
    assert!(sweep.critical.value.abs() < 1e-6, "c = {}", sweep.critical.value);
    for (up, um) in sweep.u_plus.iter().zip(&sweep.u_minus) {
        assert!(up.max().abs().max(up.min().abs()) < 1e-6);
        assert!(um.max().abs().max(um.min().abs()) < 1e-6);
    }
    assert!(sweep.cauchy.iter().all(|&d| d < 1e-6));
    assert!(sweep.calibrated.iter().all(|g| g.len() == cfg.grid.len()));
}
