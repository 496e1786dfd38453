//! Finite-time and discounted action functions by dynamic programming,
//! the Peierls barrier, minimizer backtracking and the Euler-Lagrange flow.
//!
//! The action DP propagates `V_k(y) = h^{tau_k}(x, y)` forward in time:
//!
//! ```text
//! V_{k+1}(y) = min_v  I[V_k](y - v delta) + w_k (L(y, v) + c)
//! ```
//!
//! with `w_k = delta` undiscounted and `w_k = int_{tau_k}^{tau_k + delta} e^{-lambda s} ds`
//! otherwise. The point-mass start is resolved exactly on the first step:
//! `V_1(y) = w_0 (L(y, (y - x) / delta) + c)`, or [`BIG`] when that velocity
//! leaves the search box.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{interpolate_raw, FieldMeta, GridField, GridSpec};
use crate::model::LagrangianModel;
use crate::solver::{discount_integral, SearchMode, SolverConfig, StepParams, Stepper};
use crate::torus::{circle_delta, wrap_unit, Coords, TorusPoint, Velocity, MAX_DIM};

/// Value standing in for `+infinity` away from the source.
pub const BIG: f64 = 1e6;

/// Default Peierls horizon; the window is `[T/2, T]` in unit steps.
pub const DEFAULT_BARRIER_HORIZON: f64 = 16.0;

/// `h^t(x, .)` at a list of horizons from one DP sweep.
#[derive(Clone, Debug)]
pub struct ActionTable {
    source: usize,
    grid: GridSpec,
    /// Start time `a` of the DP; nonzero only for discounted tables.
    start: f64,
    lambda: f64,
    step: f64,
    horizons: Vec<f64>,
    steps: Vec<usize>,
    fields: Vec<GridField>,
    /// `policy[k][y]`: velocity used on step `k + 1` to reach node `y`.
    policy: Option<Vec<Vec<Coords>>>,
}

impl ActionTable {
    pub fn source(&self) -> usize {
        self.source
    }

    pub fn source_point(&self) -> TorusPoint {
        self.grid.node_point(self.source)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// DP time step actually used (the configured step shrunk so that the
    /// horizons are reached exactly).
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizons(&self) -> &[f64] {
        &self.horizons
    }

    pub fn fields(&self) -> &[GridField] {
        &self.fields
    }

    pub fn field(&self, k: usize) -> &GridField {
        &self.fields[k]
    }

    pub fn has_policy(&self) -> bool {
        self.policy.is_some()
    }

    /// Index of the horizon closest to `t`.
    pub fn horizon_index(&self, t: f64) -> Option<usize> {
        self.horizons
            .iter()
            .position(|&h| (h - t).abs() <= 0.5 * self.step)
    }

    /// Rows `t, y-coords, h^t(x, y)`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header = if self.grid.dim() == 1 { "t,y,value" } else { "t,y0,y1,value" };
        writeln!(w, "{header}")?;
        for (t, field) in self.horizons.iter().zip(&self.fields) {
            for idx in 0..self.grid.len() {
                let p = self.grid.node_point(idx);
                let coords: Vec<String> = p.coords().iter().map(|c| format!("{c}")).collect();
                writeln!(w, "{t},{},{}", coords.join(","), field.get(idx))?;
            }
        }
        Ok(())
    }
}

/// A sampled curve; `x_{k+1} = x_k + v_k (t_{k+1} - t_k)` modulo 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub lambda: f64,
    pub times: Vec<f64>,
    pub points: Vec<TorusPoint>,
    pub velocities: Vec<Velocity>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest `|x_{k+1} - x_k - v_k dt|` over consecutive samples.
    pub fn consistency_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.len().saturating_sub(1) {
            let dt = self.times[k + 1] - self.times[k];
            let a = self.points[k].coords();
            let b = self.points[k + 1].coords();
            let v = self.velocities[k].components();
            for i in 0..a.len() {
                let moved = circle_delta(a[i], b[i]);
                let expect = v[i] * dt;
                worst = worst.max(circle_delta(0.0, moved - expect).abs());
            }
        }
        worst
    }

    /// Action `int e^{-lambda t} (L + c) dt` by the left rectangle rule.
    pub fn action(&self, model: &LagrangianModel, c: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.len().saturating_sub(1) {
            let t0 = self.times[k];
            let dt = self.times[k + 1] - t0;
            let w = (-self.lambda * t0).exp() * discount_integral(-self.lambda, dt);
            total += w * (model.lagrangian(&self.points[k], &self.velocities[k]) + c);
        }
        total
    }

    /// Rows `time, coords, velocity components`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.points.first().map_or(1, |p| p.dim());
        if dim == 1 {
            writeln!(w, "t,x,v")?;
        } else {
            writeln!(w, "t,x0,x1,v0,v1")?;
        }
        for k in 0..self.len() {
            let x: Vec<String> = self.points[k].coords().iter().map(|c| format!("{c}")).collect();
            let v: Vec<String> = self.velocities[k]
                .components()
                .iter()
                .map(|c| format!("{c}"))
                .collect();
            writeln!(w, "{},{},{}", self.times[k], x.join(","), v.join(","))?;
        }
        Ok(())
    }
}

struct DpRequest<'a> {
    source: usize,
    start: f64,
    lambda: f64,
    step: f64,
    /// Sorted step counts at which to record the value field.
    record: &'a [usize],
    keep_policy: bool,
}

/// Largest step `<= dt` that divides `unit` evenly.
fn fitted_step(unit: f64, dt: f64) -> f64 {
    unit / (unit / dt).ceil()
}

fn run_dp(
    req: &DpRequest<'_>,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<(Vec<GridField>, Option<Vec<Vec<Coords>>>)> {
    let mut local = cfg.clone();
    local.dt = req.step;
    let stepper = Stepper::new(&local, model)?;
    let grid = cfg.grid;
    let dim = grid.dim();
    let n = grid.len();
    let total = *req.record.last().expect("at least one horizon");
    let delta = req.step;
    let weight_at = |k: usize| {
        let tau = req.start + k as f64 * delta;
        (-req.lambda * tau).exp() * discount_integral(-req.lambda, delta)
    };

    // exact point-mass step
    let src = grid.node_coords(req.source);
    let w0 = weight_at(0);
    let mut first_policy = vec![[0.0; MAX_DIM]; n];
    let mut cur: Vec<f64> = (0..n)
        .map(|idx| {
            let y = grid.node_coords(idx);
            let mut v = [0.0; MAX_DIM];
            let mut inside = true;
            for k in 0..dim {
                v[k] = circle_delta(src[k], y[k]) / delta;
                inside &= v[k].abs() <= cfg.v_max;
            }
            first_policy[idx] = v;
            if inside {
                w0 * (stepper.fiber(idx).eval(&v) + cfg.c)
            } else {
                BIG
            }
        })
        .collect();

    let mut policies = req.keep_policy.then(|| vec![first_policy]);
    let mut fields = Vec::with_capacity(req.record.len());
    let meta = |k: usize| FieldMeta {
        lambda: req.lambda,
        c: cfg.c,
        iterations: k,
        last_increment: 0.0,
        converged: true,
    };
    let mut next_record = 0;
    while next_record < req.record.len() && req.record[next_record] == 1 {
        fields.push(GridField::from_parts(grid, cur.clone(), meta(1)));
        next_record += 1;
    }

    let mut next = vec![0.0; n];
    let mut policy = vec![[0.0; MAX_DIM]; n];
    for k in 1..total {
        let params = StepParams {
            factor: 1.0,
            weight: weight_at(k),
            reflect: false,
        };
        // the reachable set is still growing for the first unit of time
        let warm_ok = k as f64 * delta > 1.0 && cfg.full_search_every > 1;
        let mode = if warm_ok && k % cfg.full_search_every != 0 {
            SearchMode::Warm
        } else {
            SearchMode::Full
        };
        stepper.step(&cur, params, mode, &mut policy, &mut next)?;
        std::mem::swap(&mut cur, &mut next);
        if let Some(p) = policies.as_mut() {
            p.push(policy.clone());
        }
        while next_record < req.record.len() && req.record[next_record] == k + 1 {
            fields.push(GridField::from_parts(grid, cur.clone(), meta(k + 1)));
            next_record += 1;
        }
    }
    Ok((fields, policies))
}

fn snap(x: &TorusPoint, cfg: &SolverConfig) -> Result<usize> {
    if x.dim() != cfg.grid.dim() {
        return Err(Error::DimensionMismatch {
            left: x.dim(),
            right: cfg.grid.dim(),
        });
    }
    Ok(cfg.grid.nearest_node(x))
}

/// Builds `h^t(x, .)` for every `t` in `horizons` (increasing, each `>= dt`)
/// from one undiscounted DP sweep.
pub fn action_table(
    x: &TorusPoint,
    horizons: &[f64],
    cfg: &SolverConfig,
    model: &LagrangianModel,
    keep_policy: bool,
) -> Result<ActionTable> {
    if horizons.is_empty() {
        return Err(Error::Horizon("no horizons requested".into()));
    }
    if horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Horizon("horizons must be strictly increasing".into()));
    }
    if !(horizons[0] >= cfg.dt) {
        return Err(Error::Horizon(format!(
            "horizon {} shorter than dt = {}",
            horizons[0], cfg.dt
        )));
    }
    let source = snap(x, cfg)?;
    let integral = horizons.iter().all(|t| (t - t.round()).abs() < 1e-12);
    let unit = if integral { 1.0 } else { horizons[0] };
    let step = fitted_step(unit, cfg.dt);
    let steps: Vec<usize> = horizons
        .iter()
        .map(|t| ((t / step).round() as usize).max(1))
        .collect();
    let req = DpRequest {
        source,
        start: 0.0,
        lambda: 0.0,
        step,
        record: &steps,
        keep_policy,
    };
    let (fields, policy) = run_dp(&req, cfg, model)?;
    Ok(ActionTable {
        source,
        grid: cfg.grid,
        start: 0.0,
        lambda: 0.0,
        step,
        horizons: steps.iter().map(|&k| k as f64 * step).collect(),
        steps,
        fields,
        policy,
    })
}

/// `h^t(x, .)`, the minimal action of curves from `x` of duration `t`.
pub fn finite_action(
    x: &TorusPoint,
    t: f64,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<GridField> {
    let table = action_table(x, &[t], cfg, model, false)?;
    Ok(table.fields.into_iter().next().expect("one horizon"))
}

/// Discounted action table `h_lambda^{a,b}(x, .)`; keeps the policy so the
/// minimizer can be backtracked.
pub fn discounted_action_table(
    x: &TorusPoint,
    a: f64,
    b: f64,
    lambda: f64,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<ActionTable> {
    if !(a < b) {
        return Err(Error::Horizon(format!("need a < b, got a = {a}, b = {b}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let source = snap(x, cfg)?;
    let step = fitted_step(b - a, cfg.dt);
    let steps = [((b - a) / step).round() as usize];
    let req = DpRequest {
        source,
        start: a,
        lambda,
        step,
        record: &steps,
        keep_policy: true,
    };
    let (fields, policy) = run_dp(&req, cfg, model)?;
    Ok(ActionTable {
        source,
        grid: cfg.grid,
        start: a,
        lambda,
        step,
        horizons: vec![b - a],
        steps: steps.to_vec(),
        fields,
        policy,
    })
}

/// `h_lambda^{a,b}(x, y) = inf int_a^b e^{-lambda s} (L + c) ds` over
/// curves from `x` at time `a` to `y` at time `b`.
pub fn discounted_action(
    x: &TorusPoint,
    y: &TorusPoint,
    a: f64,
    b: f64,
    lambda: f64,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<f64> {
    let table = discounted_action_table(x, a, b, lambda, cfg, model)?;
    Ok(table.fields[0].interpolate(y))
}

/// Peierls barrier surrogate with the per-horizon values it came from.
#[derive(Clone, Debug)]
pub struct PeierlsBarrier {
    /// Pointwise minimum of `h^t(x, .)` over the horizon window.
    pub field: GridField,
    pub table: ActionTable,
    /// Largest per-node spread of `h^t` across the window.
    pub oscillation: f64,
    /// Set when `oscillation > 5 dx`: the window minimum may not have
    /// settled onto the liminf.
    pub unsettled: bool,
}

impl PeierlsBarrier {
    pub fn source(&self) -> usize {
        self.table.source
    }

    pub fn horizons(&self) -> &[f64] {
        &self.table.horizons
    }

    pub fn per_horizon(&self) -> &[GridField] {
        &self.table.fields
    }
}

/// `h^infinity(x, .)` as the minimum of `h^t(x, .)` over integer
/// `t in [T/2, T]`.
pub fn peierls_barrier(
    x: &TorusPoint,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<PeierlsBarrier> {
    peierls_barrier_with_horizon(x, DEFAULT_BARRIER_HORIZON, cfg, model)
}

pub fn peierls_barrier_with_horizon(
    x: &TorusPoint,
    big_t: f64,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<PeierlsBarrier> {
    if !(big_t >= 2.0) {
        return Err(Error::Horizon(format!("barrier horizon must be >= 2, got {big_t}")));
    }
    let lo = (big_t / 2.0).ceil() as usize;
    let hi = big_t.floor() as usize;
    let horizons: Vec<f64> = (lo..=hi).map(|t| t as f64).collect();
    let table = action_table(x, &horizons, cfg, model, false)?;
    Ok(barrier_from_table(table))
}

fn barrier_from_table(table: ActionTable) -> PeierlsBarrier {
    let grid = table.grid;
    let mut lo = vec![f64::INFINITY; grid.len()];
    let mut hi = vec![f64::NEG_INFINITY; grid.len()];
    for f in &table.fields {
        for (i, &v) in f.values().iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    let oscillation = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| b - a)
        .fold(0.0, f64::max);
    let meta = FieldMeta {
        lambda: 0.0,
        c: table.fields[0].meta.c,
        iterations: table.steps.last().copied().unwrap_or(0),
        last_increment: oscillation,
        converged: oscillation <= 5.0 * grid.dx(),
    };
    PeierlsBarrier {
        field: GridField::from_parts(grid, lo, meta),
        unsettled: oscillation > 5.0 * grid.dx(),
        oscillation,
        table,
    }
}

/// Follows the stored policy from `y` at horizon `t` back to the source.
pub fn backtrack_minimizer(table: &ActionTable, y: &TorusPoint, t: f64) -> Result<Trajectory> {
    let policy = table
        .policy
        .as_ref()
        .ok_or_else(|| Error::Horizon("action table was built without a policy".into()))?;
    let k = table
        .horizon_index(t)
        .ok_or_else(|| Error::Horizon(format!("horizon {t} not in table")))?;
    if y.dim() != table.grid.dim() {
        return Err(Error::DimensionMismatch {
            left: y.dim(),
            right: table.grid.dim(),
        });
    }
    let steps = table.steps[k];
    let end_node = table.grid.nearest_node(y);
    if table.fields[k].get(end_node) >= 0.5 * BIG {
        return Err(Error::Horizon(format!("target not reachable within horizon {t}")));
    }
    let grid = table.grid;
    let dim = grid.dim();
    let delta = table.step;
    let src = grid.node_coords(table.source);

    // walk backward, collecting points and velocities in reverse
    let mut pts = Vec::with_capacity(steps + 1);
    let mut vels = Vec::with_capacity(steps + 1);
    let mut cur = y.raw();
    pts.push(cur);
    let mut component = vec![0.0; grid.len()];
    for s in (1..steps).rev() {
        let layer = &policy[s];
        let mut v = [0.0; MAX_DIM];
        for (axis, vi) in v.iter_mut().enumerate().take(dim) {
            for (c, p) in component.iter_mut().zip(layer) {
                *c = p[axis];
            }
            *vi = interpolate_raw(&grid, &component, &cur);
        }
        let mut prev = [0.0; MAX_DIM];
        for i in 0..dim {
            prev[i] = wrap_unit(cur[i] - v[i] * delta);
        }
        vels.push(v);
        pts.push(prev);
        cur = prev;
    }
    // first step lands exactly on the source
    let mut v = [0.0; MAX_DIM];
    for i in 0..dim {
        v[i] = circle_delta(src[i], cur[i]) / delta;
    }
    vels.push(v);
    pts.push(src);
    pts.reverse();
    vels.reverse();
    // landing velocity repeated on the terminal sample
    let last = *vels.last().expect("at least one step");
    vels.push(last);

    let times = (0..pts.len())
        .map(|i| table.start + i as f64 * delta)
        .collect();
    Ok(Trajectory {
        lambda: table.lambda,
        times,
        points: pts.into_iter().map(|p| TorusPoint::from_raw(dim, p)).collect(),
        velocities: vels.into_iter().map(|v| Velocity::from_raw(dim, v)).collect(),
    })
}

/// Acceleration from `d/dt L_v - lambda L_v = L_x`:
/// `L_vv a = lambda L_v + L_x - L_vx v`.
fn el_acceleration(model: &LagrangianModel, lambda: f64, x: &Coords, v: &Coords) -> Coords {
    let dim = model.dim();
    let lv = model.raw_grad_v(x, v);
    let lx = model.raw_grad_x(x, v);
    let mixed = model.raw_mixed(x, v);
    let mut rhs = [0.0; MAX_DIM];
    for j in 0..dim {
        let mut mv = 0.0;
        for k in 0..dim {
            mv += mixed[j][k] * v[k];
        }
        rhs[j] = lambda * lv[j] + lx[j] - mv;
    }
    let h = model.raw_hess_v(x, v);
    crate::model::solve_small(dim, &h, &rhs).unwrap_or(rhs)
}

/// Integrates the discounted Euler-Lagrange flow with classical RK4 at step
/// `min(dt, 1e-2)`, sampling every step.
pub fn el_flow(
    start: (&TorusPoint, &Velocity),
    lambda: f64,
    horizon: f64,
    dt: f64,
    model: &LagrangianModel,
) -> Result<Trajectory> {
    if !(horizon > 0.0) {
        return Err(Error::Horizon(format!("horizon must be positive, got {horizon}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let (x0, v0) = start;
    let dim = model.dim();
    if x0.dim() != dim || v0.dim() != dim {
        return Err(Error::DimensionMismatch {
            left: x0.dim(),
            right: dim,
        });
    }
    let h_max = dt.min(1e-2);
    let steps = (horizon / h_max).ceil() as usize;
    let h = horizon / steps as f64;

    // integrate on the universal cover and wrap only when sampling
    let mut x = x0.raw();
    let mut v = v0.raw();
    let mut times = vec![0.0];
    let mut points = vec![*x0];
    let mut vels = vec![*v0];
    let add = |a: &Coords, b: &Coords, s: f64| {
        let mut r = *a;
        for i in 0..dim {
            r[i] += s * b[i];
        }
        r
    };
    for step in 1..=steps {
        let a1 = el_acceleration(model, lambda, &x, &v);
        let (x2, v2) = (add(&x, &v, 0.5 * h), add(&v, &a1, 0.5 * h));
        let a2 = el_acceleration(model, lambda, &x2, &v2);
        let (x3, v3) = (add(&x, &v2, 0.5 * h), add(&v, &a2, 0.5 * h));
        let a3 = el_acceleration(model, lambda, &x3, &v3);
        let (x4, v4) = (add(&x, &v3, h), add(&v, &a3, h));
        let a4 = el_acceleration(model, lambda, &x4, &v4);
        for i in 0..dim {
            x[i] += h / 6.0 * (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
            v[i] += h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
        }
        let mut wrapped = [0.0; MAX_DIM];
        for i in 0..dim {
            wrapped[i] = wrap_unit(x[i]);
        }
        times.push(step as f64 * h);
        points.push(TorusPoint::from_raw(dim, wrapped));
        vels.push(Velocity::from_raw(dim, v));
    }
    Ok(Trajectory {
        lambda,
        times,
        points,
        velocities: vels,
    })
}
