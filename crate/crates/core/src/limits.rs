//! Vanishing-discount sweeps and report-based checks of the limit
//! structure: conjugate pairs, the representation formula, condition
//! (star) and upper semicontinuity of the calibrated sets.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{action_table, backtrack_minimizer};
use crate::aubry::{calibrated_set, default_calibrated_threshold, BarrierCache, PointSet};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::model::LagrangianModel;
use crate::solver::{critical_value, forward_solution, ground_state, CriticalValue, SolverConfig};

/// Smallest discount accepted by [`discount_sweep`].
pub const LAMBDA_FLOOR: f64 = 0.01;

/// Fields and calibrated sets along a decreasing discount schedule.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub schedule: Vec<f64>,
    pub critical: CriticalValue,
    pub u_plus: Vec<GridField>,
    pub u_minus: Vec<GridField>,
    pub calibrated: Vec<PointSet>,
    /// `sup |u_{lambda_k}^- - u_{lambda_{k+1}}^-|`.
    pub cauchy: Vec<f64>,
    pub calibrated_threshold: f64,
}

impl SweepResult {
    fn empty(critical: CriticalValue, threshold: f64) -> Self {
        Self {
            schedule: Vec::new(),
            critical,
            u_plus: Vec::new(),
            u_minus: Vec::new(),
            calibrated: Vec::new(),
            cauchy: Vec::new(),
            calibrated_threshold: threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.schedule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedule.is_empty()
    }

    /// `u_0^-`, taken as the smallest-discount ground state.
    pub fn u0_minus(&self) -> Option<&GridField> {
        self.u_minus.last()
    }

    /// `u_0^+`, taken as the smallest-discount forward solution.
    pub fn u0_plus(&self) -> Option<&GridField> {
        self.u_plus.last()
    }

    pub fn cauchy_non_increasing(&self) -> bool {
        self.cauchy.windows(2).all(|w| w[1] <= w[0])
    }
}

/// A sweep that stopped at `lambda`; `partial` holds the completed steps.
#[derive(Debug)]
pub struct SweepError {
    pub lambda: f64,
    pub error: Error,
    pub partial: Box<SweepResult>,
}

impl fmt::Display for SweepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sweep failed at lambda = {}: {}", self.lambda, self.error)
    }
}

impl std::error::Error for SweepError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::Config("empty discount schedule".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("discount schedule must be strictly decreasing".into()));
    }
    if let Some(&l) = schedule.iter().find(|&&l| !(l >= LAMBDA_FLOOR) || !l.is_finite()) {
        return Err(Error::Config(format!(
            "discount {l} below the floor {LAMBDA_FLOOR}"
        )));
    }
    Ok(())
}

/// Estimates `c(H)` and then runs [`discount_sweep_with_critical`].
pub fn discount_sweep(
    schedule: &[f64],
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> std::result::Result<SweepResult, SweepError> {
    let threshold = default_calibrated_threshold(&cfg.grid);
    let fail = |lambda: f64, error: Error, critical: CriticalValue| SweepError {
        lambda,
        error,
        partial: Box::new(SweepResult::empty(critical, threshold)),
    };
    let blank = CriticalValue {
        value: f64::NAN,
        schedule: Vec::new(),
        estimates: Vec::new(),
        iterations: Vec::new(),
        lp_value: None,
    };
    if let Err(e) = validate_schedule(schedule) {
        return Err(fail(f64::NAN, e, blank));
    }
    let critical = critical_value(model, cfg).map_err(|e| fail(f64::NAN, e, blank))?;
    discount_sweep_with_critical(schedule, critical, threshold, cfg, model)
}

/// Forward solution, ground state and calibrated set per discount at the
/// given critical value.
pub fn discount_sweep_with_critical(
    schedule: &[f64],
    critical: CriticalValue,
    calibrated_threshold: f64,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> std::result::Result<SweepResult, SweepError> {
    let mut out = SweepResult::empty(critical, calibrated_threshold);
    if let Err(e) = validate_schedule(schedule) {
        return Err(SweepError {
            lambda: f64::NAN,
            error: e,
            partial: Box::new(out),
        });
    }
    let c = out.critical.value;
    for &lambda in schedule {
        let local = cfg.clone().with_lambda(lambda).with_c(c);
        let step = || -> Result<(GridField, GridField, PointSet)> {
            let up = forward_solution(&local, model)?;
            let um = ground_state(&up, &local, model)?;
            let g = calibrated_set(&um, &up, calibrated_threshold)?;
            Ok((up, um, g))
        };
        match step() {
            Ok((up, um, g)) => {
                if let Some(prev) = out.u_minus.last() {
                    out.cauchy.push(prev.sup_distance(&um).expect("same grid"));
                }
                out.schedule.push(lambda);
                out.u_plus.push(up);
                out.u_minus.push(um);
                out.calibrated.push(g);
            }
            Err(error) => {
                return Err(SweepError {
                    lambda,
                    error,
                    partial: Box::new(out),
                })
            }
        }
    }
    Ok(out)
}

/// Outcome of one report-based check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub tolerance: f64,
    /// Worst measured quantity compared against `tolerance`.
    pub margin: f64,
    pub violations: Vec<String>,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub(crate) fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: true,
            tolerance,
            margin: 0.0,
            violations: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub(crate) fn violate(&mut self, msg: String) {
        self.passed = false;
        // keep reports readable on badly failing runs
        if self.violations.len() < 20 {
            self.violations.push(msg);
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} {}  margin {:.3e}  tol {:.3e}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.margin,
            self.tolerance
        )
    }
}

/// `u_minus >= u_plus - eps` everywhere and `|u_minus - u_plus| <= eps` on
/// the Mather set (which may live on a coarser grid).
pub fn conjugate_check(
    u_minus: &GridField,
    u_plus: &GridField,
    mather: &PointSet,
    eps: f64,
) -> Result<CheckReport> {
    let diff = u_minus.sub(u_plus)?;
    let mut report = CheckReport::new("conjugate", eps);
    let grid = *diff.grid();
    let mut worst_order = 0.0f64;
    for (i, &d) in diff.values().iter().enumerate() {
        worst_order = worst_order.max(-d);
        if d < -eps {
            report.violate(format!(
                "ordering: u- - u+ = {d:.3e} at x = {:?}",
                grid.node_point(i).coords()
            ));
        }
    }
    let mut worst_mather = 0.0f64;
    for p in mather.points() {
        let gap = (u_minus.interpolate(&p) - u_plus.interpolate(&p)).abs();
        worst_mather = worst_mather.max(gap);
        if gap > eps {
            report.violate(format!("Mather node {:?}: |u- - u+| = {gap:.3e}", p.coords()));
        }
    }
    if mather.is_empty() {
        report.violate("empty Mather set".into());
    }
    report.margin = worst_order.max(worst_mather);
    report.notes.push(format!(
        "ordering defect {worst_order:.3e}, Mather-set gap {worst_mather:.3e}"
    ));
    Ok(report)
}

/// Compares `u` with `min_{x0} u(x0) + h^infinity(x0, .)` over Aubry nodes
/// with cached barriers, then checks that `u - other` is constant within
/// `eps` on every static class. `other` defaults to `h^infinity(r, .)` for
/// the first class representative `r`, itself a backward weak KAM
/// solution.
pub fn representation_check(
    u: &GridField,
    aubry: &PointSet,
    cache: &BarrierCache,
    eps: f64,
    other: Option<&GridField>,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("representation", eps);
    let sources: Vec<usize> = aubry
        .members()
        .iter()
        .copied()
        .filter(|&m| cache.get(m).is_some())
        .collect();
    if sources.is_empty() {
        return Err(Error::MissingBarrier(aubry.members().first().copied().unwrap_or(0)));
    }
    let grid = *u.grid();
    if *cache.grid() != grid {
        return Err(Error::FieldMismatch("barriers and field on different grids".into()));
    }
    let mut rhs = vec![f64::INFINITY; grid.len()];
    let mut argmin = vec![0usize; grid.len()];
    for &s in &sources {
        let h = cache.get(s).expect("filtered");
        let base = u.get(s);
        for (i, r) in rhs.iter_mut().enumerate() {
            let cand = base + h.get(i);
            if cand < *r {
                *r = cand;
                argmin[i] = s;
            }
        }
    }
    let mut gap = 0.0f64;
    for i in 0..grid.len() {
        let g = (u.get(i) - rhs[i]).abs();
        if g > gap {
            gap = g;
        }
        if g > eps {
            report.violate(format!(
                "formula gap {g:.3e} at x = {:?} (source {:?})",
                grid.node_point(i).coords(),
                grid.node_point(argmin[i]).coords()
            ));
        }
    }
    report
        .notes
        .push(format!("{} sources, formula gap {gap:.3e}", sources.len()));

    let reps = aubry.representatives();
    let fallback;
    let second = match other {
        Some(f) => Some(f),
        None => match reps.first().and_then(|&r| cache.get(r)) {
            Some(f) => {
                fallback = f.clone();
                Some(&fallback)
            }
            None => None,
        },
    };
    let mut spread_worst = 0.0f64;
    if let Some(w) = second {
        let labels: BTreeSet<i64> = aubry.labels().iter().copied().filter(|&l| l >= 0).collect();
        for l in labels {
            let diffs: Vec<f64> = aubry
                .class_members(l)
                .iter()
                .map(|&m| u.get(m) - w.get(m))
                .collect();
            let hi = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
            spread_worst = spread_worst.max(hi - lo);
            if hi - lo > eps {
                report.violate(format!("class {l}: u - u' varies by {:.3e}", hi - lo));
            }
        }
        report
            .notes
            .push(format!("class-constancy spread {spread_worst:.3e}"));
    } else {
        report.notes.push("class-constancy skipped: no second solution".into());
    }
    report.margin = gap.max(spread_worst);
    Ok(report)
}

/// For every static class, the distance from the class to `G_{lambda_n}`
/// must be non-increasing along the schedule and end within `eps`.
pub fn star_condition_check(sweep: &SweepResult, classes: &PointSet, eps: f64) -> Result<CheckReport> {
    let mut report = CheckReport::new("star_condition", eps);
    if sweep.len() < 3 {
        return Err(Error::Config(format!(
            "condition (star) needs at least 3 discounts, got {}",
            sweep.len()
        )));
    }
    report.notes.push(
        "a finite schedule certifies one sequence lambda_n -> 0 only, not all sequences".into(),
    );
    let labels: BTreeSet<i64> = classes.labels().iter().copied().filter(|&l| l >= 0).collect();
    if labels.is_empty() {
        report.violate("no labelled static classes".into());
    }
    let slack = 0.5 * classes.grid().dx();
    let mut worst = 0.0f64;
    for l in labels {
        let members = classes.class_members(l);
        let dists: Vec<f64> = sweep
            .calibrated
            .iter()
            .map(|g| {
                members
                    .iter()
                    .map(|&m| g.distance_to(&classes.grid().node_point(m)))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let last = *dists.last().expect("non-empty sweep");
        worst = worst.max(last);
        if dists.windows(2).any(|w| w[1] > w[0] + slack) {
            report.violate(format!("class {l}: distances {dists:?} increase"));
        }
        if !(last <= eps) {
            report.violate(format!("class {l}: final distance {last:.3e} > {eps:.3e}"));
        }
        report.notes.push(format!("class {l}: distances {:?}", dists));
    }
    report.margin = worst;
    Ok(report)
}

/// Every node of `G_{lambda_min}` lies within `eps` of `g0` (one-sided).
pub fn usc_check(sweep: &SweepResult, g0: &PointSet, eps: f64) -> Result<CheckReport> {
    let mut report = CheckReport::new("usc", eps);
    let g = sweep
        .calibrated
        .last()
        .ok_or_else(|| Error::Config("empty sweep".into()))?;
    let mut worst = 0.0f64;
    for p in g.points() {
        let d = g0.distance_to(&p);
        worst = worst.max(d);
        if !(d <= eps) {
            report.violate(format!("node {:?} at distance {d:.3e} from G", p.coords()));
        }
    }
    report.margin = worst;
    report
        .notes
        .push(format!("|G_lambda| = {}, |G| = {}", g.len(), g0.len()));
    Ok(report)
}

/// Horizons used to look for calibrated connections between classes.
pub const CONNECTION_HORIZONS: [f64; 5] = [4.0, 5.0, 6.0, 7.0, 8.0];

/// The undiscounted calibrated set. For one static class this is the Aubry
/// set itself; otherwise nodes on DP minimizers between class
/// representatives whose action is within `10 dx` of the barrier are added.
pub fn undiscounted_calibrated_set(
    classes: &PointSet,
    cache: &BarrierCache,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<PointSet> {
    let reps = classes.representatives();
    let grid = cfg.grid;
    let slack = 10.0 * grid.dx();
    let mut entries: Vec<(usize, f64)> = classes
        .members()
        .iter()
        .zip(classes.scores())
        .map(|(&m, &s)| (m, s))
        .collect();
    if reps.len() > 1 {
        let mut extra: BTreeSet<usize> = BTreeSet::new();
        for &a in &reps {
            let table = action_table(&grid.node_point(a), &CONNECTION_HORIZONS, cfg, model, true)?;
            let barrier = cache.get(a).ok_or(Error::MissingBarrier(a))?;
            for &b in reps.iter().filter(|&&b| b != a) {
                for (k, &t) in table.horizons().iter().enumerate() {
                    if table.field(k).get(b) - barrier.get(b) <= slack {
                        let traj = backtrack_minimizer(&table, &grid.node_point(b), t)?;
                        extra.extend(traj.points.iter().map(|p| grid.nearest_node(p)));
                    }
                }
            }
        }
        for node in extra {
            if !classes.contains(node) {
                entries.push((node, f64::NAN));
            }
        }
    }
    PointSet::new(grid, classes.threshold(), entries)
}

/// Writes per-discount binary fields, calibrated sets, a Cauchy table and
/// `manifest.json` (the caller's `manifest` object extended with the
/// schedule and check outcomes).
pub fn export_sweep(
    sweep: &SweepResult,
    reports: &[CheckReport],
    manifest: serde_json::Value,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (k, &lambda) in sweep.schedule.iter().enumerate() {
        let tag = format!("{lambda}");
        for (name, field) in [("u_plus", &sweep.u_plus[k]), ("u_minus", &sweep.u_minus[k])] {
            let file = format!("{name}_{tag}.wkf");
            field.write_binary(BufWriter::new(File::create(dir.join(&file))?))?;
            let csv = format!("{name}_{tag}.csv");
            field.write_csv(BufWriter::new(File::create(dir.join(&csv))?))?;
            files.push(file);
            files.push(csv);
        }
        let file = format!("calibrated_{tag}.csv");
        sweep.calibrated[k].write_csv(BufWriter::new(File::create(dir.join(&file))?))?;
        files.push(file);
    }
    {
        use std::io::Write;
        let mut w = BufWriter::new(File::create(dir.join("cauchy.csv"))?);
        writeln!(w, "lambda_k,lambda_k1,sup_diff")?;
        for (k, d) in sweep.cauchy.iter().enumerate() {
            writeln!(w, "{},{},{d}", sweep.schedule[k], sweep.schedule[k + 1])?;
        }
    }
    let mut root = match manifest {
        serde_json::Value::Object(m) => m,
        other => {
            let mut m = serde_json::Map::new();
            m.insert("config".into(), other);
            m
        }
    };
    root.insert("schedule".into(), serde_json::json!(sweep.schedule));
    root.insert("critical".into(), serde_json::to_value(&sweep.critical)?);
    root.insert("cauchy".into(), serde_json::json!(sweep.cauchy));
    root.insert(
        "calibrated_threshold".into(),
        serde_json::json!(sweep.calibrated_threshold),
    );
    root.insert(
        "iterations".into(),
        serde_json::json!(sweep
            .u_minus
            .iter()
            .zip(&sweep.u_plus)
            .map(|(m, p)| serde_json::json!({
                "forward": p.meta.iterations,
                "ground_state": m.meta.iterations,
                "ground_state_converged": m.meta.converged,
            }))
            .collect::<Vec<_>>()),
    );
    root.insert("checks".into(), serde_json::to_value(reports)?);
    root.insert("files".into(), serde_json::json!(files));
    let f = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(f, &serde_json::Value::Object(root))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aubry::{aubry_set, static_classes, AubryOptions, DEFAULT_CLASS_THRESHOLD};
    use crate::grid::GridSpec;
    use crate::model::{build_model, ModelSpec};

    #[test]
    fn schedule_validation() {
        assert!(validate_schedule(&[0.4, 0.2, 0.1]).is_ok());
        assert!(validate_schedule(&[0.1, 0.2]).is_err());
        assert!(validate_schedule(&[0.1, 0.005]).is_err());
        assert!(validate_schedule(&[]).is_err());
    }

    #[test]
    fn free_sweep_and_checks() {
        let model = build_model(&ModelSpec::free(1)).unwrap();
        let grid = GridSpec::new(1, 32).unwrap();
        let cfg = SolverConfig::new(grid, &model);
        let sweep = discount_sweep(&[0.4, 0.2, 0.1, 0.05], &cfg, &model).unwrap();
        assert!(sweep.cauchy.iter().all(|&d| d == 0.0));
        assert!(sweep.u_minus.iter().all(|u| u.values().iter().all(|v| *v == 0.0)));
        assert!(sweep.calibrated.iter().all(|g| g.len() == 32));

        let cfg = cfg.with_c(sweep.critical.value);
        let mut cache = BarrierCache::with_horizon(grid, 4.0);
        let a = aubry_set(&cfg, &model, &AubryOptions::for_grid(&grid), &mut cache).unwrap();
        let classes = static_classes(&a, &cache, DEFAULT_CLASS_THRESHOLD).unwrap();
        assert_eq!(classes.class_count(), 1);
        let u0 = sweep.u0_minus().unwrap();
        let up = sweep.u0_plus().unwrap();
        assert!(conjugate_check(u0, up, &a, 0.05).unwrap().passed);
        assert!(representation_check(u0, &classes, &cache, 0.05, None).unwrap().passed);
        assert!(star_condition_check(&sweep, &classes, 0.05).unwrap().passed);
        let g0 = undiscounted_calibrated_set(&classes, &cache, &cfg, &model).unwrap();
        assert!(usc_check(&sweep, &g0, 0.05).unwrap().passed);
    }

    #[test]
    fn swapped_conjugate_arguments_fail() {
        let grid = GridSpec::new(1, 16).unwrap();
        let lo = GridField::constant(grid, 0.0);
        let hi = GridField::constant(grid, 1.0);
        let m = PointSet::new(grid, 1.0, vec![(0, 0.0)]).unwrap();
        let ok = conjugate_check(&hi, &lo, &m, 0.05).unwrap();
        assert!(!ok.passed, "Mather gap of 1 must fail");
        let swapped = conjugate_check(&lo, &hi, &m, 0.05).unwrap();
        assert!(!swapped.passed);
        assert!(swapped.violations.iter().any(|v| v.starts_with("ordering")));
    }
}
