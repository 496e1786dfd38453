//! JSON run configuration with default filling.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weakkam::aubry::{default_aubry_threshold, default_calibrated_threshold, AubryOptions};
use weakkam::limits::validate_schedule;
use weakkam::{build_model, GridSpec, LagrangianModel, ModelSpec, SolverConfig, TorusPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub dt: Option<f64>,
    pub v_max: Option<f64>,
    pub lattice: usize,
    pub refinements: usize,
    pub tol_fix: f64,
    pub tol_envelope: Option<f64>,
    pub max_iter: Option<usize>,
    pub full_search_every: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            dt: None,
            v_max: None,
            lattice: 17,
            refinements: 2,
            tol_fix: 1e-9,
            tol_envelope: None,
            max_iter: None,
            full_search_every: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckParams {
    /// Tolerance of the four limit checks.
    pub epsilon: f64,
    pub aubry_threshold: Option<f64>,
    pub calibrated_threshold: Option<f64>,
    pub class_threshold: f64,
    pub support_threshold: f64,
    pub barrier_horizon: f64,
    pub aubry_stride: usize,
}

impl Default for CheckParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            aubry_threshold: None,
            calibrated_threshold: None,
            class_threshold: weakkam::aubry::DEFAULT_CLASS_THRESHOLD,
            support_threshold: weakkam::aubry::DEFAULT_SUPPORT_THRESHOLD,
            barrier_horizon: weakkam::action::DEFAULT_BARRIER_HORIZON,
            aubry_stride: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Nodes per dimension.
    pub n: usize,
    pub solver: SolverParams,
    /// Discount used by `solve` and `check`.
    pub lambda: f64,
    pub schedule: Vec<f64>,
    pub out: PathBuf,
    pub checks: CheckParams,
    /// Source point of the `barrier` command; the origin when absent.
    pub barrier_source: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::pendulum(),
            n: 256,
            solver: SolverParams::default(),
            lambda: 0.1,
            schedule: vec![0.4, 0.2, 0.1, 0.05, 0.025],
            out: PathBuf::from("weakkam-out"),
            checks: CheckParams::default(),
            barrier_source: None,
            seed: 42,
        }
    }
}

/// A configuration with every default filled in, plus the objects built
/// from it.
pub struct Resolved {
    pub config: RunConfig,
    pub model: LagrangianModel,
    /// Solver settings at `lambda = 0`, `c = 0`.
    pub solver: SolverConfig,
}

impl Resolved {
    pub fn grid(&self) -> GridSpec {
        self.solver.grid
    }

    pub fn aubry_options(&self) -> AubryOptions {
        AubryOptions {
            threshold: self.config.checks.aubry_threshold.expect("resolved"),
            stride: self.config.checks.aubry_stride,
        }
    }

    pub fn calibrated_threshold(&self) -> f64 {
        self.config.checks.calibrated_threshold.expect("resolved")
    }

    pub fn barrier_source(&self) -> anyhow::Result<TorusPoint> {
        Ok(TorusPoint::new(self.config.barrier_source.as_deref().expect("resolved"))?)
    }
}

pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

impl RunConfig {
    pub fn resolve(mut self) -> anyhow::Result<Resolved> {
        let model = build_model(&self.model)?;
        let grid = GridSpec::new(self.model.dim, self.n)?;
        let mut solver = SolverConfig::new(grid, &model);
        let s = &mut self.solver;
        solver.v_max = *s.v_max.get_or_insert(solver.v_max);
        let default_dt = grid.dx().min(0.5 / solver.v_max);
        solver.dt = *s.dt.get_or_insert(default_dt);
        solver.lattice = s.lattice;
        solver.refinements = s.refinements;
        solver.tol_fix = s.tol_fix;
        solver.tol_envelope = s.tol_envelope;
        solver.max_iter = s.max_iter;
        solver.full_search_every = s.full_search_every;
        solver.validate()?;

        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            anyhow::bail!("lambda must be finite and non-negative, got {}", self.lambda);
        }
        validate_schedule(&self.schedule)?;
        let c = &mut self.checks;
        if !(c.epsilon > 0.0) {
            anyhow::bail!("checks.epsilon must be positive, got {}", c.epsilon);
        }
        c.aubry_threshold.get_or_insert(default_aubry_threshold(&grid));
        c.calibrated_threshold
            .get_or_insert(default_calibrated_threshold(&grid));
        if c.aubry_stride == 0 || self.n % c.aubry_stride != 0 {
            anyhow::bail!("checks.aubry_stride must divide n = {}", self.n);
        }
        if !(c.barrier_horizon >= 2.0) {
            anyhow::bail!("checks.barrier_horizon must be >= 2");
        }
        let source = self
            .barrier_source
            .get_or_insert_with(|| vec![0.0; self.model.dim]);
        if source.len() != self.model.dim {
            anyhow::bail!(
                "barrier_source has {} coordinates, model dimension is {}",
                source.len(),
                self.model.dim
            );
        }
        Ok(Resolved {
            config: self,
            model,
            solver,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_filled_and_echoed() {
        let r = RunConfig::default().resolve().unwrap();
        assert_eq!(r.config.seed, 42);
        assert_eq!(r.config.solver.dt, Some(r.solver.dt));
        assert_eq!(r.config.checks.aubry_threshold, Some(20.0 / 256.0 / 256.0));
        assert_eq!(r.config.barrier_source, Some(vec![0.0]));
        let json = serde_json::to_string(&r.config).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r.config);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"model": {"family": "mechanical", "dim": 1, "potential": {"id": "two_bump"}}, "n": 64}"#,
        )
        .unwrap();
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.lambda, 0.1);
        assert_eq!(cfg.model, ModelSpec::two_bump());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let bad_n = RunConfig {
            n: 100,
            ..RunConfig::default()
        };
        assert!(bad_n.resolve().is_err());
        let bad_schedule = RunConfig {
            schedule: vec![0.1, 0.2],
            ..RunConfig::default()
        };
        assert!(bad_schedule.resolve().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
