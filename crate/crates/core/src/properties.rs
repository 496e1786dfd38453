//! Structural laws of the discrete backward operator, checked on random
//! smooth probe fields: semigroup law, scaled nonexpansiveness,
//! monotonicity, the uniform Lipschitz bound, ordering of the ground state
//! and domination by the action.

use std::f64::consts::TAU;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::Result;
use crate::grid::{GridField, GridSpec};
use crate::limits::CheckReport;
use crate::model::LagrangianModel;
use crate::solver::{backward_step, forward_solution, ground_state, lipschitz_bound, SolverConfig};
use crate::torus::{TorusPoint, Velocity};

/// Slack allowed on the exact laws (floating-point noise only).
pub const EXACT_SLACK: f64 = 1e-12;

/// A random trigonometric polynomial with at most `modes` terms of total
/// amplitude about `amplitude`.
pub fn random_smooth_field<R: Rng + ?Sized>(
    grid: GridSpec,
    rng: &mut R,
    modes: usize,
    amplitude: f64,
) -> GridField {
    let d = grid.dim();
    let terms: Vec<([f64; 2], f64, f64)> = (0..modes.max(1))
        .map(|_| {
            let mut k = [0.0; 2];
            for kj in k.iter_mut().take(d) {
                *kj = rng.gen_range(-3i32..=3) as f64;
            }
            if k.iter().all(|&kj| kj == 0.0) {
                k[0] = 1.0;
            }
            let norm2: f64 = k.iter().map(|x| x * x).sum();
            let a = amplitude * rng.gen_range(-1.0..1.0) / norm2;
            (k, a, rng.gen_range(0.0..TAU))
        })
        .collect();
    let offset = rng.gen_range(-1.0..1.0);
    GridField::from_fn(grid, |p| {
        let x = p.coords();
        offset
            + terms
                .iter()
                .map(|(k, a, ph)| {
                    let arg: f64 = x.iter().zip(k).map(|(xi, ki)| xi * ki).sum();
                    a * (TAU * arg + ph).cos()
                })
                .sum::<f64>()
    })
    .expect("finite trigonometric field")
}

/// [`random_smooth_field`] rescaled to discrete Lipschitz constant `lip`.
pub fn random_probe<R: Rng + ?Sized>(grid: GridSpec, rng: &mut R, lip: f64) -> GridField {
    let f = random_smooth_field(grid, rng, 4, 1.0);
    let scale = lip / f.lipschitz_constant().max(f64::MIN_POSITIVE);
    f.map(|x| x * scale)
}

/// `T_dt T_dt phi` against `T_{2dt} phi`; tolerance `20 dx dt`. The base
/// step is shortened if needed so that the doubled step stays local.
pub fn semigroup_check(
    probes: &[GridField],
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<CheckReport> {
    let mut single = cfg.clone();
    single.dt = cfg.dt.min(0.25 / cfg.v_max);
    let mut double = single.clone();
    double.dt = 2.0 * single.dt;
    let tol = 20.0 * cfg.grid.dx() * single.dt;
    let mut report = CheckReport::new("semigroup", tol);
    for (k, phi) in probes.iter().enumerate() {
        let twice = backward_step(&backward_step(phi, &single, model)?, &single, model)?;
        let once = backward_step(phi, &double, model)?;
        let gap = twice.sup_distance(&once)?;
        report.margin = report.margin.max(gap);
        if gap > tol {
            report.violate(format!("probe {k}: gap {gap:.3e}"));
        }
    }
    report.notes.push(format!("dt = {:.4e}, {} probes", single.dt, probes.len()));
    Ok(report)
}

/// `|T phi1 - T phi2| <= e^{lambda dt} |phi1 - phi2|` in sup norm. The
/// margin is the largest excess over the bound (negative when slack).
pub fn nonexpansive_check(
    pairs: &[(GridField, GridField)],
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("nonexpansive", EXACT_SLACK);
    report.margin = f64::NEG_INFINITY;
    let factor = (cfg.lambda * cfg.dt).exp();
    for (k, (a, b)) in pairs.iter().enumerate() {
        let lhs = backward_step(a, cfg, model)?.sup_distance(&backward_step(b, cfg, model)?)?;
        let excess = lhs - factor * a.sup_distance(b)?;
        report.margin = report.margin.max(excess);
        if excess > EXACT_SLACK {
            report.violate(format!("pair {k}: excess {excess:.3e}"));
        }
    }
    Ok(report)
}

/// Pairs must satisfy `lo <= hi` pointwise; then `T lo <= T hi`. The margin
/// is the largest value of `T lo - T hi`.
pub fn monotone_check(
    pairs: &[(GridField, GridField)],
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("monotone", EXACT_SLACK);
    report.margin = f64::NEG_INFINITY;
    for (k, (lo, hi)) in pairs.iter().enumerate() {
        debug_assert!(lo.values().iter().zip(hi.values()).all(|(a, b)| a <= b));
        let diff = backward_step(lo, cfg, model)?.sub(&backward_step(hi, cfg, model)?)?;
        let worst = diff.max();
        report.margin = report.margin.max(worst);
        if worst > EXACT_SLACK {
            report.violate(format!("pair {k}: T lo exceeds T hi by {worst:.3e}"));
        }
    }
    Ok(report)
}

/// After one unit of time of backward steps from `phi`, the discrete
/// Lipschitz constant stays below `kappa` for every discount in `lambdas`.
pub fn lipschitz_check(
    phi: &GridField,
    lambdas: &[f64],
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<CheckReport> {
    let kappa = lipschitz_bound(model);
    let mut report = CheckReport::new("lipschitz", kappa);
    let steps = (1.0 / cfg.dt).ceil() as usize;
    for &lambda in lambdas {
        let local = cfg.clone().with_lambda(lambda);
        let mut u = phi.clone();
        for _ in 0..steps {
            u = backward_step(&u, &local, model)?;
        }
        let lip = u.lipschitz_constant();
        report.margin = report.margin.max(lip);
        if lip > kappa {
            report.violate(format!("lambda {lambda}: Lipschitz {lip:.3e}"));
        }
        report.notes.push(format!("lambda {lambda}: Lipschitz {lip:.4}"));
    }
    Ok(report)
}

/// `u_minus >= u_plus - 2 dx`; the margin is `max(u_plus - u_minus)`.
pub fn ordering_check(u_minus: &GridField, u_plus: &GridField) -> Result<CheckReport> {
    let tol = 2.0 * u_minus.grid().dx();
    let mut report = CheckReport::new("ordering", tol);
    let diff = u_plus.sub(u_minus)?;
    report.margin = diff.max();
    if report.margin > tol {
        let worst = diff
            .values()
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        report.violate(format!(
            "u+ - u- = {:.3e} at x = {:?}",
            worst.1,
            u_minus.grid().node_point(worst.0).coords()
        ));
    }
    Ok(report)
}

/// On straight curves `gamma(t) = x0 + v t`, `t` in `[0, 1]`:
/// `e^{-lambda} u(gamma(1)) - u(gamma(0)) <= int_0^1 e^{-lambda t} (L + c) dt + 5 dx`
/// with 64-panel trapezoid quadrature.
pub fn domination_check(
    u: &GridField,
    curves: &[(TorusPoint, Velocity)],
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<CheckReport> {
    const PANELS: usize = 64;
    let tol = 5.0 * cfg.grid.dx();
    let mut report = CheckReport::new("domination", tol);
    report.margin = f64::NEG_INFINITY;
    let lambda = cfg.lambda;
    for (k, (x0, v)) in curves.iter().enumerate() {
        let h = 1.0 / PANELS as f64;
        let integrand = |t: f64| (-lambda * t).exp() * (model.lagrangian(&x0.advance(v, t), v) + cfg.c);
        let mut integral = 0.5 * (integrand(0.0) + integrand(1.0));
        for j in 1..PANELS {
            integral += integrand(j as f64 * h);
        }
        integral *= h;
        let lhs = (-lambda).exp() * u.interpolate(&x0.advance(v, 1.0)) - u.interpolate(x0);
        let excess = lhs - integral;
        report.margin = report.margin.max(excess);
        if excess > tol {
            report.violate(format!("curve {k}: excess {excess:.3e}"));
        }
    }
    Ok(report)
}

/// Random straight curves with speeds up to `speed`.
pub fn random_curves<R: Rng + ?Sized>(
    dim: usize,
    count: usize,
    speed: f64,
    rng: &mut R,
) -> Vec<(TorusPoint, Velocity)> {
    (0..count)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-speed..speed)).collect();
            (
                TorusPoint::new(&x).expect("unit coordinates"),
                Velocity::new(&v).expect("finite velocity"),
            )
        })
        .collect()
}

/// Sizes of the default property suite.
#[derive(Clone, Debug)]
pub struct SuiteSize {
    pub semigroup_probes: usize,
    pub pairs: usize,
    pub lipschitz_lambdas: Vec<f64>,
    pub curves: usize,
}

impl Default for SuiteSize {
    fn default() -> Self {
        Self {
            semigroup_probes: 5,
            pairs: 50,
            lipschitz_lambdas: vec![0.1, 0.5, 1.0],
            curves: 100,
        }
    }
}

/// Runs the six properties at `cfg.lambda` and `cfg.c`. Random probes are
/// drawn from `seed`; the solutions themselves do not depend on it.
///
/// The semigroup defect of the rectangle rule grows like
/// `dt^2 |v| |L_x|`, so its probes are normalized to unit slope.
pub fn property_suite(
    cfg: &SolverConfig,
    model: &LagrangianModel,
    seed: u64,
    size: &SuiteSize,
) -> Result<Vec<CheckReport>> {
    cfg.validate()?;
    let mut rng = StdRng::seed_from_u64(seed);
    let grid = cfg.grid;
    let probes: Vec<GridField> = (0..size.semigroup_probes)
        .map(|_| random_probe(grid, &mut rng, 1.0))
        .collect();
    let pairs: Vec<(GridField, GridField)> = (0..size.pairs)
        .map(|_| {
            (
                random_smooth_field(grid, &mut rng, 4, 1.0),
                random_smooth_field(grid, &mut rng, 4, 1.0),
            )
        })
        .collect();
    let ordered: Vec<(GridField, GridField)> = pairs
        .iter()
        .map(|(a, b)| {
            let gap = b.map(|x| x.abs());
            let hi = GridField::from_values(
                grid,
                a.values().iter().zip(gap.values()).map(|(x, g)| x + g).collect(),
            )
            .expect("finite");
            (a.clone(), hi)
        })
        .collect();
    let lip_probe = random_smooth_field(grid, &mut rng, 4, 1.0);
    let curves = random_curves(grid.dim(), size.curves, 2.0, &mut rng);

    let u_plus = forward_solution(cfg, model)?;
    let u_minus = ground_state(&u_plus, cfg, model)?;
    Ok(vec![
        semigroup_check(&probes, cfg, model)?,
        nonexpansive_check(&pairs, cfg, model)?,
        monotone_check(&ordered, cfg, model)?,
        lipschitz_check(&lip_probe, &size.lipschitz_lambdas, cfg, model)?,
        ordering_check(&u_minus, &u_plus)?,
        domination_check(&u_minus, &curves, cfg, model)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelSpec};

    #[test]
    fn random_fields_are_periodic_and_seeded() {
        let grid = GridSpec::new(1, 32).unwrap();
        let a = random_smooth_field(grid, &mut StdRng::seed_from_u64(7), 4, 1.0);
        let b = random_smooth_field(grid, &mut StdRng::seed_from_u64(7), 4, 1.0);
        assert_eq!(a, b);
        let p = TorusPoint::new(&[0.28125]).unwrap();
        let q = TorusPoint::new(&[1.28125]).unwrap();
        assert_eq!(a.interpolate(&p), a.interpolate(&q));
    }

    #[test]
    fn free_suite_passes() {
        let model = build_model(&ModelSpec::free(1)).unwrap();
        let grid = GridSpec::new(1, 32).unwrap();
        let cfg = SolverConfig::new(grid, &model).with_lambda(0.2);
        let size = SuiteSize {
            pairs: 10,
            curves: 20,
            ..SuiteSize::default()
        };
        let reports = property_suite(&cfg, &model, 42, &size).unwrap();
        assert_eq!(reports.len(), 6);
        for r in &reports {
            assert!(r.passed, "{r}: {:?}", r.violations);
        }
    }

    #[test]
    fn broken_ordering_is_reported() {
        let grid = GridSpec::new(1, 16).unwrap();
        let r = ordering_check(&GridField::constant(grid, 0.0), &GridField::constant(grid, 1.0)).unwrap();
        assert!(!r.passed);
        assert_eq!(r.margin, 1.0);
    }
}
