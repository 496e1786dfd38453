//! Semi-Lagrangian discretization of the discounted Lax-Oleinik operators.
//!
//! One backward step of length `dt` reads
//!
//! ```text
//! (S phi)(x) = min_v  e^{lambda dt} I[phi](x - v dt) + w (L(x, v) + c),
//! w = (e^{lambda dt} - 1) / lambda          (w = dt when lambda = 0)
//! ```
//!
//! where `I` is periodic multilinear interpolation. `w` integrates the
//! discount weight exactly and `L` is frozen at the node, so the step is
//! exactly monotone and expands sup-distances by exactly `e^{lambda dt}`.
//!
//! The forward solution goes through the reflected contraction
//!
//! ```text
//! u <- min_v  e^{-lambda dt} I[u](x - v dt) + (1 - e^{-lambda dt})/lambda (L(x, -v) + c)
//! ```
//!
//! whose fixed point is `-u_lambda^+`. The ground state is the monotone
//! limit of backward steps started at `u_lambda^+`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{interpolate_raw, FieldMeta, GridField, GridSpec};
use crate::model::{Fiber, LagrangianModel};
use crate::search::VelocitySearch;
use crate::torus::{Coords, MAX_DIM};

/// Discretization and stopping parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: GridSpec,
    /// Time step.
    pub dt: f64,
    /// Velocity search box `[-v_max, v_max]^d`.
    pub v_max: f64,
    /// Velocity lattice points per dimension (odd).
    pub lattice: usize,
    /// Golden-section refinement rounds around the lattice argmin.
    pub refinements: usize,
    /// Stopping tolerance of the forward contraction.
    pub tol_fix: f64,
    /// Iteration cap; `None` picks `ceil(60 / (lambda dt))` for the
    /// contraction and `ceil(20 / (lambda dt))` for the ground state.
    pub max_iter: Option<usize>,
    /// Envelope stopping tolerance; `None` means `1e-6 (1 + 1/lambda)`.
    pub tol_envelope: Option<f64>,
    /// Every this many sweeps the full lattice search runs; in between the
    /// search is restarted from the previous minimizers. 1 disables warm
    /// starts. Convergence is only declared on a full sweep.
    pub full_search_every: usize,
    pub lambda: f64,
    pub c: f64,
}

impl SolverConfig {
    /// Defaults for `model` on `grid`: `v_max = 4 (1 + max|grad V| + max|w|)`,
    /// `dt = min(dx, 0.5 / v_max)`, 17-point lattice, 2 refinement rounds.
    pub fn new(grid: GridSpec, model: &LagrangianModel) -> Self {
        let v_max = model.default_v_max();
        let dt = grid.dx().min(0.5 / v_max);
        Self {
            grid,
            dt,
            v_max,
            lattice: 17,
            refinements: 2,
            tol_fix: 1e-9,
            max_iter: None,
            tol_envelope: None,
            full_search_every: 8,
            lambda: 0.0,
            c: 0.0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return bad(format!("v_max must be positive, got {}", self.v_max));
        }
        if self.dt * self.v_max > 0.5 + 1e-12 {
            return bad(format!(
                "dt * v_max = {} exceeds 0.5 (interpolation stencil locality)",
                self.dt * self.v_max
            ));
        }
        if self.lattice < 3 || self.lattice % 2 == 0 {
            return bad(format!("velocity lattice must be odd and >= 3, got {}", self.lattice));
        }
        if !(self.tol_fix > 0.0) {
            return bad(format!("tol_fix must be positive, got {}", self.tol_fix));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !self.c.is_finite() {
            return bad("critical value must be finite".into());
        }
        if self.full_search_every == 0 {
            return bad("full_search_every must be >= 1".into());
        }
        Ok(())
    }

    fn check_model(&self, model: &LagrangianModel) -> Result<()> {
        if model.dim() != self.grid.dim() {
            return Err(Error::DimensionMismatch {
                left: model.dim(),
                right: self.grid.dim(),
            });
        }
        Ok(())
    }

    /// Discount-weight integral `(e^{lambda dt} - 1)/lambda`.
    pub fn backward_weight(&self) -> f64 {
        discount_integral(self.lambda, self.dt)
    }

    /// `(1 - e^{-lambda dt})/lambda`.
    pub fn forward_weight(&self) -> f64 {
        discount_integral(-self.lambda, self.dt)
    }

    fn ground_tolerance(&self) -> f64 {
        self.tol_envelope
            .unwrap_or(1e-6 * (1.0 + 1.0 / self.lambda))
    }
}

/// `int_0^dt e^{lambda s} ds`, continuous at `lambda = 0`.
pub(crate) fn discount_integral(lambda: f64, dt: f64) -> f64 {
    if lambda == 0.0 {
        dt
    } else {
        (lambda * dt).exp_m1() / lambda
    }
}

/// Coefficients of one step: `factor * I[phi] + weight * (L + c)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StepParams {
    pub factor: f64,
    pub weight: f64,
    /// Evaluate `L(x, -v)` instead of `L(x, v)`.
    pub reflect: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum SearchMode {
    Full,
    Warm,
}

/// Precomputed per-node data for repeated steps on one grid.
pub(crate) struct Stepper<'a> {
    grid: GridSpec,
    dt: f64,
    c: f64,
    search: VelocitySearch,
    nodes: Vec<(Coords, Fiber<'a>)>,
    warm_width: f64,
    /// Cells either side of a node reachable within `v_max dt` (1-d).
    full_reach: isize,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(cfg: &SolverConfig, model: &'a LagrangianModel) -> Result<Self> {
        cfg.validate()?;
        cfg.check_model(model)?;
        let grid = cfg.grid;
        let nodes = (0..grid.len())
            .map(|i| {
                let x = grid.node_coords(i);
                (x, model.fiber(&x))
            })
            .collect();
        // two cells of displacement either side of the previous minimizer
        let warm_width = 2.0 * grid.dx() / cfg.dt;
        let full_reach = (cfg.v_max * cfg.dt / grid.dx()).ceil() as isize + 1;
        Ok(Self {
            grid,
            dt: cfg.dt,
            c: cfg.c,
            search: VelocitySearch::new(grid.dim(), cfg.v_max, cfg.lattice, cfg.refinements),
            nodes,
            warm_width,
            full_reach,
        })
    }

    pub(crate) fn fiber(&self, idx: usize) -> &Fiber<'a> {
        &self.nodes[idx].1
    }

    /// One sweep over all nodes. `policy` receives the minimizing velocity
    /// per node; in warm mode it also supplies the starting guesses.
    pub(crate) fn step(
        &self,
        phi: &[f64],
        params: StepParams,
        mode: SearchMode,
        policy: &mut [Coords],
        out: &mut [f64],
    ) -> Result<()> {
        let grid = self.grid;
        let dim = grid.dim();
        let dt = self.dt;
        let c = self.c;
        let sign = if params.reflect { -1.0 } else { 1.0 };
        out.par_iter_mut()
            .zip(policy.par_iter_mut())
            .enumerate()
            .with_min_len(64)
            .for_each(|(idx, (slot, pol))| {
                let (x, fiber) = &self.nodes[idx];
                let objective = |v: &Coords| {
                    let mut foot = [0.0; MAX_DIM];
                    let mut lv = [0.0; MAX_DIM];
                    for k in 0..dim {
                        foot[k] = x[k] - v[k] * dt;
                        lv[k] = sign * v[k];
                    }
                    params.factor * interpolate_raw(&grid, phi, &foot)
                        + params.weight * (fiber.eval(&lv) + c)
                };
                let (v, val) = match (mode, fiber) {
                    (mode, Fiber::Quadratic { drift, offset, .. }) if dim == 1 => {
                        let cells = CellQuadratic {
                            phi,
                            params,
                            node: idx as isize,
                            drift: sign * drift[0],
                            offset: *offset + c,
                        };
                        // a full sweep scans every cell the velocity box can reach
                        let (hint, reach) = match mode {
                            SearchMode::Full => (([0.0; MAX_DIM], f64::INFINITY), self.full_reach),
                            SearchMode::Warm => ((*pol, f64::INFINITY), 2),
                        };
                        self.polish_1d(&cells, hint, reach)
                    }
                    (SearchMode::Full, _) => self.search.minimize(&objective),
                    (SearchMode::Warm, _) => {
                        self.search.minimize_near(&objective, *pol, self.warm_width)
                    }
                };
                *slot = val;
                *pol = v;
            });
        if let Some(node) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                node,
                stage: "semi-Lagrangian step",
            });
        }
        Ok(())
    }
}

/// In 1-d with `L = |v - w|^2 / 2 + offset` the step objective is a
/// quadratic in `v` on every interpolation cell, so each cell has a
/// closed-form minimizer.
struct CellQuadratic<'p> {
    phi: &'p [f64],
    params: StepParams,
    node: isize,
    drift: f64,
    /// Fiber offset plus the critical value.
    offset: f64,
}

impl Stepper<'_> {
    /// Exact minimum over the cells within `reach` of the foot of
    /// `hint.0`, compared against `hint.1`.
    #[inline]
    fn polish_1d(&self, cells: &CellQuadratic<'_>, hint: (Coords, f64), reach: isize) -> (Coords, f64) {
        let n = self.grid.n() as isize;
        let dx = self.grid.dx();
        let dt = self.dt;
        let v_max = self.search.v_max();
        let (factor, weight) = (cells.params.factor, cells.params.weight);
        let (mut best_v, mut best) = hint;
        let foot_cell = (cells.node as f64 - hint.0[0] * dt / dx).floor() as isize;
        for j in foot_cell - reach..=foot_cell + reach {
            // foot in [j dx, (j + 1) dx] <=> v in [lo, hi]
            let lo = ((cells.node - j - 1) as f64 * dx / dt).max(-v_max);
            let hi = ((cells.node - j) as f64 * dx / dt).min(v_max);
            if lo > hi {
                continue;
            }
            let left = cells.phi[j.rem_euclid(n) as usize];
            let right = cells.phi[(j + 1).rem_euclid(n) as usize];
            let slope = (right - left) / dx;
            let v = (cells.drift + factor * dt * slope / weight).clamp(lo, hi);
            let offset_in_cell = (cells.node - j) as f64 * dx - v * dt;
            let d = v - cells.drift;
            let val = factor * (left + slope * offset_in_cell) + weight * (0.5 * d * d + cells.offset);
            if val < best {
                best = val;
                best_v = [v, 0.0];
            }
        }
        (best_v, best)
    }
}

fn check_field(phi: &GridField, cfg: &SolverConfig) -> Result<()> {
    if *phi.grid() != cfg.grid {
        return Err(Error::FieldMismatch(format!(
            "field grid {:?} vs config grid {:?}",
            phi.grid(),
            cfg.grid
        )));
    }
    Ok(())
}

fn sup_increment(new: &[f64], old: &[f64]) -> f64 {
    new.iter()
        .zip(old)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// One discrete application of the backward operator `T_dt^{lambda,-}`.
pub fn backward_step(
    phi: &GridField,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<GridField> {
    backward_step_with_policy(phi, cfg, model).map(|(f, _)| f)
}

/// [`backward_step`] that also returns the minimizing velocity per node.
pub fn backward_step_with_policy(
    phi: &GridField,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<(GridField, Vec<Coords>)> {
    check_field(phi, cfg)?;
    let stepper = Stepper::new(cfg, model)?;
    let params = StepParams {
        factor: (cfg.lambda * cfg.dt).exp(),
        weight: cfg.backward_weight(),
        reflect: false,
    };
    let mut out = vec![0.0; cfg.grid.len()];
    let mut policy = vec![[0.0; MAX_DIM]; cfg.grid.len()];
    stepper.step(phi.values(), params, SearchMode::Full, &mut policy, &mut out)?;
    let meta = FieldMeta {
        lambda: cfg.lambda,
        c: cfg.c,
        iterations: 1,
        last_increment: sup_increment(&out, phi.values()),
        converged: false,
    };
    Ok((GridField::from_parts(cfg.grid, out, meta), policy))
}

/// The forward solution `u_lambda^+`, computed as `-u_hat` where `u_hat`
/// is the fixed point of the reflected contraction started from zero.
pub fn forward_solution(cfg: &SolverConfig, model: &LagrangianModel) -> Result<GridField> {
    if !(cfg.lambda > 0.0) {
        return Err(Error::Config(format!(
            "forward solution needs lambda > 0, got {}",
            cfg.lambda
        )));
    }
    let stepper = Stepper::new(cfg, model)?;
    let params = StepParams {
        factor: (-cfg.lambda * cfg.dt).exp(),
        weight: cfg.forward_weight(),
        reflect: true,
    };
    let max_iter = cfg
        .max_iter
        .unwrap_or_else(|| (60.0 / (cfg.lambda * cfg.dt)).ceil() as usize);
    let n = cfg.grid.len();
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut policy = vec![[0.0; MAX_DIM]; n];
    let mut increment = f64::INFINITY;
    let mut want_full = true;
    for it in 1..=max_iter {
        let mode = if want_full || cfg.full_search_every == 1 || it % cfg.full_search_every == 0 {
            SearchMode::Full
        } else {
            SearchMode::Warm
        };
        stepper.step(&cur, params, mode, &mut policy, &mut next)?;
        increment = sup_increment(&next, &cur);
        let jump = if mode == SearchMode::Full && increment >= cfg.tol_fix {
            constant_mode_jump(&next, &cur, params.factor)
        } else {
            None
        };
        std::mem::swap(&mut cur, &mut next);
        want_full = false;
        if let Some(shift) = jump {
            cur.iter_mut().for_each(|v| *v += shift);
            want_full = true;
            continue;
        }
        if increment < cfg.tol_fix {
            if mode == SearchMode::Full {
                let meta = FieldMeta {
                    lambda: cfg.lambda,
                    c: cfg.c,
                    iterations: it,
                    last_increment: increment,
                    converged: true,
                };
                let values = cur.into_iter().map(|v| -v).collect();
                return Ok(GridField::from_parts(cfg.grid, values, meta));
            }
            want_full = true;
        }
    }
    Err(Error::NotConverged {
        stage: "forward contraction",
        iterations: max_iter,
        increment,
    })
}

/// Once the increment field of the contraction is nearly uniform, the
/// remaining error is dominated by a constant decaying by `rho` per step.
/// Constants commute with the step, so the geometric tail can be summed:
/// returns the shift `mean(d) rho / (1 - rho)`.
fn constant_mode_jump(new: &[f64], old: &[f64], rho: f64) -> Option<f64> {
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for (a, b) in new.iter().zip(old) {
        let d = a - b;
        lo = lo.min(d);
        hi = hi.max(d);
        sum += d;
    }
    let mean = sum / new.len() as f64;
    if hi - lo <= 1e-3 * mean.abs() {
        Some(mean * rho / (1.0 - rho))
    } else {
        None
    }
}

/// `kappa = C_{alpha_0 + 1} + C(0) + 1`, the uniform Lipschitz bound of
/// backward-operator outputs, with `alpha_0 = 1 + max|grad V| + max|w|`
/// as the calibrated-speed bound, `C_k = max_{|v| <= k} L` and
/// `C(0) = -min L`.
pub fn lipschitz_bound(model: &LagrangianModel) -> f64 {
    let alpha0 = 1.0 + model.speed_scale();
    model.max_lagrangian_on_ball(alpha0 + 1.0) - model.min_lagrangian() + 1.0
}

/// A-priori upper bound for the ground state,
/// `max u_plus + (C_{k0} + c) e^lambda / lambda + 1` with `k0 = 2 diam`.
pub fn ground_state_bound(u_plus: &GridField, cfg: &SolverConfig, model: &LagrangianModel) -> f64 {
    let k0 = (cfg.grid.dim() as f64).sqrt();
    let c_k0 = model.max_lagrangian_on_ball(k0);
    u_plus.max() + (c_k0 + cfg.c) * cfg.lambda.exp() / cfg.lambda + 1.0
}

/// The ground state `u_lambda^- = lim T_t^{lambda,-} u_lambda^+`.
///
/// Iterates backward steps on the running pointwise maximum of the
/// iterates. Stops once the envelope moves less than the envelope
/// tolerance between consecutive full-search sweeps, or after the
/// iteration cap with `meta.converged = false`.
pub fn ground_state(
    u_plus: &GridField,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<GridField> {
    if !(cfg.lambda > 0.0) {
        return Err(Error::Config(format!(
            "ground state needs lambda > 0, got {}",
            cfg.lambda
        )));
    }
    check_field(u_plus, cfg)?;
    let stepper = Stepper::new(cfg, model)?;
    let params = StepParams {
        factor: (cfg.lambda * cfg.dt).exp(),
        weight: cfg.backward_weight(),
        reflect: false,
    };
    let bound = ground_state_bound(u_plus, cfg, model);
    let tol = cfg.ground_tolerance();
    let max_iter = cfg
        .max_iter
        .unwrap_or_else(|| (20.0 / (cfg.lambda * cfg.dt)).ceil() as usize);
    let n = cfg.grid.len();
    let mut env = u_plus.values().to_vec();
    let mut stepped = vec![0.0; n];
    let mut policy = vec![[0.0; MAX_DIM]; n];
    let mut checkpoint = env.clone();
    let mut increment = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=max_iter {
        iterations = it;
        let mode = if it == 1 || cfg.full_search_every == 1 || it % cfg.full_search_every == 0 {
            SearchMode::Full
        } else {
            SearchMode::Warm
        };
        stepper.step(&env, params, mode, &mut policy, &mut stepped)?;
        let mut top = f64::NEG_INFINITY;
        for (e, &s) in env.iter_mut().zip(&stepped) {
            if s > *e {
                *e = s;
            }
            top = top.max(*e);
        }
        if top > bound {
            return Err(Error::EnvelopeBlowUp { bound, value: top });
        }
        if mode == SearchMode::Full && it > 1 {
            // movement since the previous full sweep
            increment = env
                .iter()
                .zip(&checkpoint)
                .map(|(e, c)| e - c)
                .fold(0.0, f64::max);
            if increment < tol {
                converged = true;
                break;
            }
            checkpoint.copy_from_slice(&env);
        }
    }
    let meta = FieldMeta {
        lambda: cfg.lambda,
        c: cfg.c,
        iterations,
        last_increment: increment,
        converged,
    };
    Ok(GridField::from_parts(cfg.grid, env, meta))
}

/// Critical value estimate with per-discount diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    /// Extrapolated `c(H)`.
    pub value: f64,
    pub schedule: Vec<f64>,
    /// `lambda * mean(u_lambda^+)` at `c = 0` for each discount.
    pub estimates: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Minimal average action from the closed-measure linear program,
    /// filled in by [`crate::aubry::cross_check_critical`].
    pub lp_value: Option<f64>,
}

pub const CRITICAL_SCHEDULE: [f64; 3] = [0.1, 0.05, 0.025];

/// Estimate `c(H)` from `lambda u + H_hat(x, du) = 0` along
/// [`CRITICAL_SCHEDULE`], extrapolated polynomially to `lambda = 0`.
pub fn critical_value(model: &LagrangianModel, cfg: &SolverConfig) -> Result<CriticalValue> {
    critical_value_with_schedule(model, cfg, &CRITICAL_SCHEDULE)
}

pub fn critical_value_with_schedule(
    model: &LagrangianModel,
    cfg: &SolverConfig,
    schedule: &[f64],
) -> Result<CriticalValue> {
    if schedule.is_empty() || schedule.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Config("critical-value schedule must be positive".into()));
    }
    let mut estimates = Vec::with_capacity(schedule.len());
    let mut iterations = Vec::with_capacity(schedule.len());
    for &lambda in schedule {
        let local = cfg.clone().with_lambda(lambda).with_c(0.0);
        let u_plus = forward_solution(&local, model)?;
        estimates.push(lambda * u_plus.mean());
        iterations.push(u_plus.meta.iterations);
    }
    let value = extrapolate_to_zero(schedule, &estimates);
    Ok(CriticalValue {
        value,
        schedule: schedule.to_vec(),
        estimates,
        iterations,
        lp_value: None,
    })
}

/// Neville evaluation at 0 of the interpolating polynomial through
/// `(xs[i], ys[i])`.
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (xs[i + m] * p[i] - xs[i] * p[i + 1]) / (xs[i + m] - xs[i]);
        }
    }
    p[0]
}

/// Upwind residual `-lambda u + H(x, Du) - c`: among the `2^d` one-sided
/// difference combinations the one maximizing `H` is used.
pub fn residual(u: &GridField, cfg: &SolverConfig, model: &LagrangianModel) -> Result<GridField> {
    check_field(u, cfg)?;
    cfg.check_model(model)?;
    let grid = cfg.grid;
    let dim = grid.dim();
    let dx = grid.dx();
    let vals = u.values();
    let out: Result<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let x = grid.node_coords(idx);
            let mut minus = [0.0; MAX_DIM];
            let mut plus = [0.0; MAX_DIM];
            for k in 0..dim {
                minus[k] = (vals[idx] - vals[grid.shifted(idx, k, -1)]) / dx;
                plus[k] = (vals[grid.shifted(idx, k, 1)] - vals[idx]) / dx;
            }
            let mut best = f64::NEG_INFINITY;
            for combo in 0..(1usize << dim) {
                let mut p = [0.0; MAX_DIM];
                for k in 0..dim {
                    p[k] = if combo >> k & 1 == 0 { minus[k] } else { plus[k] };
                }
                let (h, _) = model.raw_hamiltonian(&x, &p)?;
                best = best.max(h);
            }
            Ok(-cfg.lambda * vals[idx] + best - cfg.c)
        })
        .collect();
    let mut field = GridField::from_parts(grid, out?, u.meta.clone());
    field.meta.iterations = 0;
    Ok(field)
}

/// Nodes where one-sided differences jump by more than `jump` along some
/// axis, widened by `collar` nodes on every side.
pub fn kink_collar(u: &GridField, jump: f64, collar: usize) -> Vec<bool> {
    let grid = *u.grid();
    let dx = grid.dx();
    let vals = u.values();
    let kinks: Vec<usize> = (0..grid.len())
        .filter(|&idx| {
            (0..grid.dim()).any(|k| {
                let m = (vals[idx] - vals[grid.shifted(idx, k, -1)]) / dx;
                let p = (vals[grid.shifted(idx, k, 1)] - vals[idx]) / dx;
                (p - m).abs() > jump
            })
        })
        .collect();
    let mut mask = vec![false; grid.len()];
    let c = collar as isize;
    for &idx in &kinks {
        match grid.dim() {
            1 => {
                for o in -c..=c {
                    mask[grid.shifted(idx, 0, o)] = true;
                }
            }
            _ => {
                for a in -c..=c {
                    let row = grid.shifted(idx, 0, a);
                    for b in -c..=c {
                        mask[grid.shifted(row, 1, b)] = true;
                    }
                }
            }
        }
    }
    mask
}

/// Largest `|residual|` over nodes outside `mask`.
pub fn max_residual_outside(res: &GridField, mask: &[bool]) -> f64 {
    res.values()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| !m)
        .map(|(r, _)| r.abs())
        .fold(0.0, f64::max)
}
