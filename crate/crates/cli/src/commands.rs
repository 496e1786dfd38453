//! Subcommand pipelines. Every command computes (or reuses) the critical
//! value first and writes a manifest echoing the resolved configuration.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde_json::{json, Value};
use weakkam::action::peierls_barrier_with_horizon;
use weakkam::aubry::{
    aubry_set, calibrated_set, cross_check_critical, mather_set, pseudo_metric, static_classes,
    BarrierCache, PointSet,
};
use weakkam::limits::{
    conjugate_check, discount_sweep_with_critical, export_sweep, representation_check,
    star_condition_check, undiscounted_calibrated_set, usc_check, CheckReport,
};
use weakkam::properties::{property_suite, SuiteSize};
use weakkam::solver::{kink_collar, max_residual_outside};
use weakkam::{
    critical_value, forward_solution, ground_state, residual, CriticalValue, Error, GridField,
    SolverConfig,
};

use crate::config::Resolved;

/// Exit-code classes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Solver(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Solver(e) => e,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownFamily(_)
            | Error::Dimension(_)
            | Error::DimensionMismatch { .. }
            | Error::NotTonelli(_)
            | Error::Grid(_)
            | Error::Config(_)
            | Error::Horizon(_)
            | Error::LpTooLarge(_)
            | Error::Format(_)
            | Error::Json(_) => Failure::Config(e.into()),
            _ => Failure::Solver(e.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Solver(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Solver(e.into())
    }
}

pub fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(anyhow::anyhow!(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    ChecksFailed,
}

impl Outcome {
    fn from_reports(reports: &[CheckReport]) -> Self {
        if reports.iter().all(|r| r.passed) {
            Outcome::Pass
        } else {
            Outcome::ChecksFailed
        }
    }
}

type CmdResult = Result<Outcome, Failure>;

fn out_dir(r: &Resolved) -> Result<&Path, Failure> {
    let dir = r.config.out.as_path();
    fs::create_dir_all(dir)?;
    Ok(dir)
}

fn write_field(dir: &Path, name: &str, field: &GridField) -> Result<(), Failure> {
    field.write_binary(BufWriter::new(File::create(dir.join(format!("{name}.wkf")))?))?;
    field.write_csv(BufWriter::new(File::create(dir.join(format!("{name}.csv")))?))?;
    Ok(())
}

fn write_points(dir: &Path, name: &str, set: &PointSet) -> Result<(), Failure> {
    set.write_csv(BufWriter::new(File::create(dir.join(format!("{name}.csv")))?))?;
    Ok(())
}

fn write_manifest(dir: &Path, command: &str, r: &Resolved, body: Value) -> Result<(), Failure> {
    let mut root = json!({
        "command": command,
        "config": r.config,
        "solver": r.solver,
    });
    if let (Value::Object(root), Value::Object(body)) = (&mut root, body) {
        root.extend(body);
    }
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("manifest.json"))?), &root)?;
    Ok(())
}

fn fingerprint(r: &Resolved) -> Value {
    json!({ "model": r.config.model, "solver": r.solver })
}

const CRITICAL_FILE: &str = "critical.json";

fn store_critical(dir: &Path, r: &Resolved, cv: &CriticalValue) -> Result<(), Failure> {
    let body = json!({ "fingerprint": fingerprint(r), "critical": cv });
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join(CRITICAL_FILE))?), &body)?;
    Ok(())
}

/// `c(H)` from the output directory when it was computed for the same
/// model and solver settings, otherwise freshly.
fn critical(r: &Resolved) -> Result<CriticalValue, Failure> {
    let dir = out_dir(r)?;
    if let Ok(text) = fs::read_to_string(dir.join(CRITICAL_FILE)) {
        if let Ok(v) = serde_json::from_str::<Value>(&text) {
            if v.get("fingerprint") == Some(&fingerprint(r)) {
                if let Some(cv) = v
                    .get("critical")
                    .and_then(|c| serde_json::from_value::<CriticalValue>(c.clone()).ok())
                {
                    eprintln!("using cached c = {:.6}", cv.value);
                    return Ok(cv);
                }
            }
        }
    }
    let cv = critical_value(&r.model, &r.solver)?;
    store_critical(dir, r, &cv)?;
    Ok(cv)
}

pub fn cmd_critical(r: &Resolved) -> CmdResult {
    let dir = out_dir(r)?;
    let mut cv = critical_value(&r.model, &r.solver)?;
    let lp_cfg = r.solver.clone().with_c(cv.value);
    let lp = cross_check_critical(&mut cv, &lp_cfg, &r.model);
    let lp_note = match &lp {
        Ok(mu) => json!({ "value": mu.objective(), "grid": mu.grid().n(), "closedness_defect": mu.closedness_defect() }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    store_critical(dir, r, &cv)?;
    // avoid printing a signed zero
    let shown = if cv.value.abs() < 5e-7 { 0.0 } else { cv.value };
    println!("c = {shown:.6}");
    for (l, e) in cv.schedule.iter().zip(&cv.estimates) {
        println!("  lambda {l:<6} estimate {e:.6}");
    }
    if let Some(v) = cv.lp_value {
        println!("  LP value {v:.6} (|LP + c| = {:.2e})", (v + cv.value).abs());
    }
    write_manifest(dir, "critical", r, json!({ "critical": cv, "lp": lp_note }))?;
    Ok(Outcome::Pass)
}

pub fn cmd_solve(r: &Resolved) -> CmdResult {
    let lambda = r.config.lambda;
    if !(lambda > 0.0) {
        return Err(config_error("λ must be positive; use sweep for the limit"));
    }
    let dir = out_dir(r)?;
    let cv = critical(r)?;
    let cfg = r.solver.clone().with_lambda(lambda).with_c(cv.value);
    let tag = format!("{lambda}");
    let u_plus = forward_solution(&cfg, &r.model)?;
    write_field(dir, &format!("u_plus_{tag}"), &u_plus)?;
    let u_minus = match ground_state(&u_plus, &cfg, &r.model) {
        Ok(u) => u,
        Err(e) => {
            write_manifest(dir, "solve", r, json!({ "c": cv.value, "error": e.to_string() }))?;
            return Err(e.into());
        }
    };
    write_field(dir, &format!("u_minus_{tag}"), &u_minus)?;
    let g = calibrated_set(&u_minus, &u_plus, r.calibrated_threshold())?;
    write_points(dir, &format!("calibrated_{tag}"), &g)?;
    let res = residual(&u_minus, &cfg, &r.model)?;
    write_field(dir, &format!("residual_{tag}"), &res)?;
    let collar = kink_collar(&u_minus, 1.0, 3);
    let res_max = max_residual_outside(&res, &collar);
    write_manifest(
        dir,
        "solve",
        r,
        json!({
            "c": cv.value,
            "lambda": lambda,
            "forward": { "iterations": u_plus.meta.iterations, "last_increment": u_plus.meta.last_increment },
            "ground_state": {
                "iterations": u_minus.meta.iterations,
                "last_increment": u_minus.meta.last_increment,
                "converged": u_minus.meta.converged,
            },
            "calibrated_nodes": g.len(),
            "max_residual_outside_collar": res_max,
        }),
    )?;
    println!("c = {:.6}, lambda = {lambda}", cv.value);
    println!(
        "u+: {} iterations; u-: {} iterations (converged: {})",
        u_plus.meta.iterations, u_minus.meta.iterations, u_minus.meta.converged
    );
    println!("|G_lambda| = {}, max residual outside collar = {res_max:.3e}", g.len());
    if !u_minus.meta.converged {
        return Err(Failure::Solver(anyhow::anyhow!(
            "ground state did not converge within {} iterations (last increment {:.3e}); partial fields saved",
            u_minus.meta.iterations,
            u_minus.meta.last_increment
        )));
    }
    Ok(Outcome::Pass)
}

struct AubryResult {
    cfg0: SolverConfig,
    cache: BarrierCache,
    aubry: PointSet,
    classes: PointSet,
}

fn aubry_pipeline(r: &Resolved, c: f64) -> Result<AubryResult, Failure> {
    let cfg0 = r.solver.clone().with_lambda(0.0).with_c(c);
    let mut cache = BarrierCache::with_horizon(r.grid(), r.config.checks.barrier_horizon);
    let aubry = aubry_set(&cfg0, &r.model, &r.aubry_options(), &mut cache)?;
    let classes = static_classes(&aubry, &cache, r.config.checks.class_threshold)?;
    Ok(AubryResult {
        cfg0,
        cache,
        aubry,
        classes,
    })
}

fn class_summary(a: &AubryResult) -> Result<Value, Failure> {
    let grid = a.classes.grid();
    let reps = a.classes.representatives();
    let mut dc = Vec::new();
    for &x in &reps {
        let mut row = Vec::new();
        for &y in &reps {
            row.push(pseudo_metric(x, y, &a.cache)?);
        }
        dc.push(row);
    }
    Ok(json!({
        "aubry_nodes": a.aubry.len(),
        "classes": a.classes.class_count(),
        "representatives": reps.iter().map(|&m| grid.node_point(m).coords().to_vec()).collect::<Vec<_>>(),
        "pseudo_metric": dc,
        "near_degenerate": a.classes.near_degenerate(),
        "unsettled_sources": a.cache.unsettled().len(),
        "barrier_sources": a.cache.len(),
    }))
}

fn mather(r: &Resolved, cv: &mut CriticalValue) -> Result<(PointSet, Value), Failure> {
    let lp_cfg = r.solver.clone().with_c(cv.value);
    let mu = cross_check_critical(cv, &lp_cfg, &r.model)?;
    let m = mather_set(&mu, r.config.checks.support_threshold)?;
    let info = json!({
        "lp_value": mu.objective(),
        "lp_grid": mu.grid().n(),
        "closedness_defect": mu.closedness_defect(),
        "support": m.points().iter().map(|p| p.coords().to_vec()).collect::<Vec<_>>(),
    });
    Ok((m, info))
}

pub fn cmd_aubry(r: &Resolved) -> CmdResult {
    let dir = out_dir(r)?;
    let mut cv = critical(r)?;
    let a = aubry_pipeline(r, cv.value)?;
    let (m, m_info) = mather(r, &mut cv)?;
    write_points(dir, "aubry", &a.classes)?;
    write_points(dir, "mather", &m)?;
    let summary = class_summary(&a)?;
    println!("c = {:.6}", cv.value);
    println!(
        "Aubry set: {} nodes, {} static classes",
        a.aubry.len(),
        a.classes.class_count()
    );
    let grid = r.grid();
    for (k, rep) in a.classes.representatives().iter().enumerate() {
        println!("  class {k}: representative {:?}", grid.node_point(*rep).coords());
    }
    if a.classes.near_degenerate() {
        println!("  warning: classes within 4 dx of each other");
    }
    println!("Mather support: {} nodes, LP value {:.6}", m.len(), m_info["lp_value"]);
    write_manifest(
        dir,
        "aubry",
        r,
        json!({ "c": cv.value, "aubry": summary, "mather": m_info }),
    )?;
    Ok(Outcome::Pass)
}

pub fn cmd_barrier(r: &Resolved) -> CmdResult {
    let dir = out_dir(r)?;
    let cv = critical(r)?;
    let cfg0 = r.solver.clone().with_lambda(0.0).with_c(cv.value);
    let x = r.barrier_source().map_err(Failure::Config)?;
    let b = peierls_barrier_with_horizon(&x, r.config.checks.barrier_horizon, &cfg0, &r.model)?;
    write_field(dir, "barrier", &b.field)?;
    b.table
        .write_csv(BufWriter::new(File::create(dir.join("barrier_horizons.csv"))?))?;
    println!("c = {:.6}", cv.value);
    println!(
        "barrier from {:?}: min {:.6}, max {:.6}, horizon spread {:.3e}{}",
        x.coords(),
        b.field.min(),
        b.field.max(),
        b.oscillation,
        if b.unsettled { " (unsettled)" } else { "" }
    );
    write_manifest(
        dir,
        "barrier",
        r,
        json!({
            "c": cv.value,
            "source": x.coords(),
            "horizons": b.horizons(),
            "oscillation": b.oscillation,
            "unsettled": b.unsettled,
            "self_barrier": b.field.get(r.grid().nearest_node(&x)),
        }),
    )?;
    Ok(Outcome::Pass)
}

fn print_reports(reports: &[CheckReport]) {
    for rep in reports {
        println!("{rep}");
        for v in &rep.violations {
            println!("    {v}");
        }
    }
}

pub fn cmd_sweep(r: &Resolved) -> CmdResult {
    let dir = out_dir(r)?;
    let eps = r.config.checks.epsilon;
    let mut cv = critical(r)?;
    let sweep = match discount_sweep_with_critical(
        &r.config.schedule,
        cv.clone(),
        r.calibrated_threshold(),
        &r.solver,
        &r.model,
    ) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}; writing {} completed discounts", e.partial.len());
            export_sweep(
                &e.partial,
                &[],
                json!({ "command": "sweep", "config": r.config, "error": e.to_string() }),
                dir,
            )?;
            return Err(Failure::from(e.error));
        }
    };
    let a = aubry_pipeline(r, cv.value)?;
    let (m, m_info) = mather(r, &mut cv)?;
    let u0m = sweep.u0_minus().expect("non-empty sweep");
    let u0p = sweep.u0_plus().expect("non-empty sweep");
    let g0 = undiscounted_calibrated_set(&a.classes, &a.cache, &a.cfg0, &r.model)?;
    let reports = vec![
        conjugate_check(u0m, u0p, &m, eps)?,
        representation_check(u0m, &a.classes, &a.cache, eps, None)?,
        star_condition_check(&sweep, &a.classes, eps)?,
        usc_check(&sweep, &g0, eps)?,
    ];
    write_points(dir, "aubry", &a.classes)?;
    write_points(dir, "mather", &m)?;
    write_points(dir, "calibrated_limit", &g0)?;

    println!("c = {:.6}", cv.value);
    println!("{:<10} {:>12}", "lambda", "sup|du-|");
    for (k, lambda) in sweep.schedule.iter().enumerate() {
        let d = if k == 0 {
            "-".to_string()
        } else {
            format!("{:.4e}", sweep.cauchy[k - 1])
        };
        println!("{lambda:<10} {d:>12}");
    }
    if !sweep.cauchy_non_increasing() {
        println!("note: Cauchy table is not non-increasing");
    }
    println!(
        "Aubry set: {} nodes, {} classes; Mather support: {} nodes",
        a.aubry.len(),
        a.classes.class_count(),
        m.len()
    );
    print_reports(&reports);
    let manifest = json!({
        "command": "sweep",
        "config": r.config,
        "solver": r.solver,
        "tolerance": eps,
        "aubry": class_summary(&a)?,
        "mather": m_info,
        "cauchy_non_increasing": sweep.cauchy_non_increasing(),
    });
    let mut sweep = sweep;
    sweep.critical = cv;
    export_sweep(&sweep, &reports, manifest, dir)?;
    Ok(Outcome::from_reports(&reports))
}

pub fn cmd_check(r: &Resolved) -> CmdResult {
    let lambda = r.config.lambda;
    if !(lambda > 0.0) {
        return Err(config_error("λ must be positive for the property suite"));
    }
    let dir = out_dir(r)?;
    let cv = critical(r)?;
    let cfg = r.solver.clone().with_lambda(lambda).with_c(cv.value);
    let reports = property_suite(&cfg, &r.model, r.config.seed, &SuiteSize::default())?;
    println!("c = {:.6}, lambda = {lambda}, n = {}", cv.value, r.config.n);
    print_reports(&reports);
    write_manifest(dir, "check", r, json!({ "c": cv.value, "checks": reports }))?;
    Ok(Outcome::from_reports(&reports))
}
