//! Tonelli Lagrangians on the flat torus and their Legendre duals.
//!
//! Built-in families are quadratic in the velocity,
//!
//! ```text
//! L(x, v) = 1/2 |v - w(x)|^2 - V(x) + f(x)
//! H(x, p) = 1/2 |p|^2 + <p, w(x)> + V(x) - f(x)
//! ```
//!
//! with potential `V`, drift `w` and an additive perturbation `f`. Custom
//! Lagrangians plug in through [`CustomLagrangian`] and are inverted with a
//! damped Newton iteration.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{check_dim, Coords, TorusPoint, Velocity, MAX_DIM};

const TWO_PI: f64 = 2.0 * PI;

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

/// Potential (or perturbation) formula.
///
/// In two dimensions `cos` is the product `amp cos(2 pi k x) cos(2 pi k y)`;
/// `cos_sum`, `two_bump` and `asym` sum their one-dimensional profile over
/// the coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Cos {
        #[serde(default = "one_u32")]
        k: u32,
        #[serde(default = "one")]
        amp: f64,
    },
    CosSum {
        #[serde(default = "one_u32")]
        k: u32,
        #[serde(default = "one")]
        amp: f64,
    },
    TwoBump {
        #[serde(default = "one")]
        amp: f64,
    },
    Asym {
        #[serde(default = "one")]
        amp: f64,
    },
}

impl PotentialSpec {
    pub fn value(&self, dim: usize, x: &Coords) -> f64 {
        match *self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Cos { k, amp } => {
                let w = TWO_PI * k as f64;
                amp * (0..dim).map(|i| (w * x[i]).cos()).product::<f64>()
            }
            PotentialSpec::CosSum { k, amp } => {
                let w = TWO_PI * k as f64;
                amp * (0..dim).map(|i| (w * x[i]).cos()).sum::<f64>()
            }
            PotentialSpec::TwoBump { amp } => {
                amp * (0..dim).map(|i| (2.0 * TWO_PI * x[i]).cos()).sum::<f64>()
            }
            PotentialSpec::Asym { amp } => {
                amp * (0..dim)
                    .map(|i| (TWO_PI * x[i]).cos() + 0.3 * (2.0 * TWO_PI * x[i]).sin())
                    .sum::<f64>()
            }
        }
    }

    pub fn gradient(&self, dim: usize, x: &Coords) -> Coords {
        let mut g = [0.0; MAX_DIM];
        match *self {
            PotentialSpec::Zero => {}
            PotentialSpec::Cos { k, amp } => {
                let w = TWO_PI * k as f64;
                for i in 0..dim {
                    let mut term = -amp * w * (w * x[i]).sin();
                    for j in 0..dim {
                        if j != i {
                            term *= (w * x[j]).cos();
                        }
                    }
                    g[i] = term;
                }
            }
            PotentialSpec::CosSum { k, amp } => {
                let w = TWO_PI * k as f64;
                for i in 0..dim {
                    g[i] = -amp * w * (w * x[i]).sin();
                }
            }
            PotentialSpec::TwoBump { amp } => {
                let w = 2.0 * TWO_PI;
                for i in 0..dim {
                    g[i] = -amp * w * (w * x[i]).sin();
                }
            }
            PotentialSpec::Asym { amp } => {
                for i in 0..dim {
                    g[i] = amp
                        * (-TWO_PI * (TWO_PI * x[i]).sin()
                            + 0.3 * 2.0 * TWO_PI * (2.0 * TWO_PI * x[i]).cos());
                }
            }
        }
        g
    }
}

/// Drift field `w(x)` of the mechanical-with-drift family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    /// Constant vector field.
    Const { omega: Vec<f64> },
    /// `w_i(x) = amp cos(2 pi k x_i)`.
    Cos {
        #[serde(default = "one_u32")]
        k: u32,
        #[serde(default = "one")]
        amp: f64,
    },
}

impl DriftSpec {
    fn value(&self, dim: usize, x: &Coords) -> Coords {
        let mut w = [0.0; MAX_DIM];
        match self {
            DriftSpec::Const { omega } => {
                for i in 0..dim {
                    w[i] = omega.get(i).copied().unwrap_or(0.0);
                }
            }
            DriftSpec::Cos { k, amp } => {
                let f = TWO_PI * *k as f64;
                for i in 0..dim {
                    w[i] = amp * (f * x[i]).cos();
                }
            }
        }
        w
    }

    /// `jac[j][k] = d w_j / d x_k`.
    fn jacobian(&self, dim: usize, x: &Coords) -> [[f64; MAX_DIM]; MAX_DIM] {
        let mut jac = [[0.0; MAX_DIM]; MAX_DIM];
        if let DriftSpec::Cos { k, amp } = self {
            let f = TWO_PI * *k as f64;
            for i in 0..dim {
                jac[i][i] = -amp * f * (f * x[i]).sin();
            }
        }
        jac
    }
}

/// JSON model description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: String,
    pub dim: usize,
    #[serde(default = "default_potential")]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub perturbation: Option<PotentialSpec>,
    #[serde(default)]
    pub drift: Option<DriftSpec>,
}

fn default_potential() -> PotentialSpec {
    PotentialSpec::Zero
}

impl ModelSpec {
    pub fn mechanical(dim: usize, potential: PotentialSpec) -> Self {
        Self {
            family: "mechanical".into(),
            dim,
            potential,
            perturbation: None,
            drift: None,
        }
    }

    pub fn free(dim: usize) -> Self {
        Self::mechanical(dim, PotentialSpec::Zero)
    }

    pub fn pendulum() -> Self {
        Self::mechanical(1, PotentialSpec::Cos { k: 1, amp: 1.0 })
    }

    pub fn two_bump() -> Self {
        Self::mechanical(1, PotentialSpec::TwoBump { amp: 1.0 })
    }

    /// `V(x, y) = cos 2 pi x + cos 2 pi y`.
    pub fn pendulum_2d() -> Self {
        Self::mechanical(2, PotentialSpec::CosSum { k: 1, amp: 1.0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mechanical,
    MechanicalWithDrift,
    Custom,
}

impl Family {
    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "mechanical" => Ok(Family::Mechanical),
            "mechanical_with_drift" | "mechanical-with-drift" => Ok(Family::MechanicalWithDrift),
            "custom" => Ok(Family::Custom),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// User-supplied Lagrangian with analytic derivatives. Must be strictly
/// convex and superlinear in `v`.
pub trait CustomLagrangian: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64], v: &[f64]) -> f64;
    fn grad_x(&self, x: &[f64], v: &[f64]) -> Coords;
    fn grad_v(&self, x: &[f64], v: &[f64]) -> Coords;
    fn hess_v(&self, x: &[f64], v: &[f64]) -> [[f64; MAX_DIM]; MAX_DIM];
}

/// `H(x, p)` together with the velocity attaining the supremum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianValue {
    pub value: f64,
    pub velocity: Velocity,
}

/// An immutable Tonelli Lagrangian on `T^d`.
#[derive(Clone)]
pub struct LagrangianModel {
    dim: usize,
    family: Family,
    potential: PotentialSpec,
    perturbation: Option<PotentialSpec>,
    drift: Option<DriftSpec>,
    custom: Option<Arc<dyn CustomLagrangian>>,
}

impl fmt::Debug for LagrangianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianModel")
            .field("dim", &self.dim)
            .field("family", &self.family)
            .field("potential", &self.potential)
            .field("perturbation", &self.perturbation)
            .field("drift", &self.drift)
            .field("custom", &self.custom)
            .finish()
    }
}

/// Build and validate a model from its description.
pub fn build_model(spec: &ModelSpec) -> Result<LagrangianModel> {
    let family = Family::parse(&spec.family)?;
    check_dim(spec.dim)?;
    let drift = match family {
        Family::Mechanical => None,
        Family::MechanicalWithDrift => Some(spec.drift.clone().ok_or_else(|| {
            Error::Config("mechanical_with_drift requires a `drift` entry".into())
        })?),
        Family::Custom => {
            return Err(Error::Config(
                "custom models carry code evaluators and cannot be built from a description"
                    .into(),
            ))
        }
    };
    if let Some(DriftSpec::Const { omega }) = &drift {
        if omega.len() != spec.dim {
            return Err(Error::DimensionMismatch {
                left: omega.len(),
                right: spec.dim,
            });
        }
    }
    let model = LagrangianModel {
        dim: spec.dim,
        family,
        potential: spec.potential.clone(),
        perturbation: spec.perturbation.clone(),
        drift,
        custom: None,
    };
    model.validate()?;
    Ok(model)
}

impl LagrangianModel {
    /// Wrap a custom Lagrangian after sampling the Tonelli conditions.
    pub fn custom(inner: Arc<dyn CustomLagrangian>) -> Result<Self> {
        let model = Self::custom_unchecked(inner)?;
        model.validate()?;
        Ok(model)
    }

    /// Wrap a custom Lagrangian without the convexity sample, e.g. for
    /// Lagrangians like `|v|^4 / 4` whose Hessian degenerates at `v = 0`.
    pub fn custom_unchecked(inner: Arc<dyn CustomLagrangian>) -> Result<Self> {
        check_dim(inner.dim())?;
        Ok(Self {
            dim: inner.dim(),
            family: Family::Custom,
            potential: PotentialSpec::Zero,
            perturbation: None,
            drift: None,
            custom: Some(inner),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    /// Description of a built-in model; `None` for custom models.
    pub fn spec(&self) -> Option<ModelSpec> {
        let family = match self.family {
            Family::Mechanical => "mechanical",
            Family::MechanicalWithDrift => "mechanical_with_drift",
            Family::Custom => return None,
        };
        Some(ModelSpec {
            family: family.into(),
            dim: self.dim,
            potential: self.potential.clone(),
            perturbation: self.perturbation.clone(),
            drift: self.drift.clone(),
        })
    }

    /// `U = V - f`, so that built-in families read `1/2 |v - w|^2 - U`.
    #[inline]
    pub(crate) fn effective_potential(&self, x: &Coords) -> f64 {
        let mut u = self.potential.value(self.dim, x);
        if let Some(p) = &self.perturbation {
            u -= p.value(self.dim, x);
        }
        u
    }

    #[inline]
    fn effective_potential_gradient(&self, x: &Coords) -> Coords {
        let mut g = self.potential.gradient(self.dim, x);
        if let Some(p) = &self.perturbation {
            let gp = p.gradient(self.dim, x);
            for i in 0..self.dim {
                g[i] -= gp[i];
            }
        }
        g
    }

    #[inline]
    fn drift_at(&self, x: &Coords) -> Coords {
        match &self.drift {
            Some(d) => d.value(self.dim, x),
            None => [0.0; MAX_DIM],
        }
    }

    pub fn lagrangian(&self, x: &TorusPoint, v: &Velocity) -> f64 {
        self.raw_lagrangian(&x.raw(), &v.raw())
    }

    pub(crate) fn raw_lagrangian(&self, x: &Coords, v: &Coords) -> f64 {
        if let Some(c) = &self.custom {
            return c.value(&x[..self.dim], &v[..self.dim]);
        }
        let w = self.drift_at(x);
        let mut kin = 0.0;
        for i in 0..self.dim {
            let d = v[i] - w[i];
            kin += d * d;
        }
        0.5 * kin - self.effective_potential(x)
    }

    pub(crate) fn raw_grad_v(&self, x: &Coords, v: &Coords) -> Coords {
        if let Some(c) = &self.custom {
            return c.grad_v(&x[..self.dim], &v[..self.dim]);
        }
        let w = self.drift_at(x);
        let mut g = [0.0; MAX_DIM];
        for i in 0..self.dim {
            g[i] = v[i] - w[i];
        }
        g
    }

    pub(crate) fn raw_grad_x(&self, x: &Coords, v: &Coords) -> Coords {
        if let Some(c) = &self.custom {
            return c.grad_x(&x[..self.dim], &v[..self.dim]);
        }
        let mut g = self.effective_potential_gradient(x);
        for gi in g.iter_mut().take(self.dim) {
            *gi = -*gi;
        }
        if let Some(d) = &self.drift {
            let w = d.value(self.dim, x);
            let jac = d.jacobian(self.dim, x);
            for k in 0..self.dim {
                for j in 0..self.dim {
                    g[k] -= (v[j] - w[j]) * jac[j][k];
                }
            }
        }
        g
    }

    pub(crate) fn raw_hess_v(&self, x: &Coords, v: &Coords) -> [[f64; MAX_DIM]; MAX_DIM] {
        if let Some(c) = &self.custom {
            return c.hess_v(&x[..self.dim], &v[..self.dim]);
        }
        let mut h = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in h.iter_mut().enumerate().take(self.dim) {
            row[i] = 1.0;
        }
        h
    }

    /// `m[j][k] = d^2 L / dv_j dx_k`.
    pub(crate) fn raw_mixed(&self, x: &Coords, v: &Coords) -> [[f64; MAX_DIM]; MAX_DIM] {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        if self.custom.is_some() {
            // custom models only supply dL/dv, difference it in x
            let h = 1e-6;
            for k in 0..self.dim {
                let mut xp = *x;
                let mut xm = *x;
                xp[k] += h;
                xm[k] -= h;
                let gp = self.raw_grad_v(&xp, v);
                let gm = self.raw_grad_v(&xm, v);
                for j in 0..self.dim {
                    m[j][k] = (gp[j] - gm[j]) / (2.0 * h);
                }
            }
        } else if let Some(d) = &self.drift {
            let jac = d.jacobian(self.dim, x);
            for j in 0..self.dim {
                for k in 0..self.dim {
                    m[j][k] = -jac[j][k];
                }
            }
        }
        m
    }

    pub fn grad_v(&self, x: &TorusPoint, v: &Velocity) -> Velocity {
        Velocity::from_raw(self.dim, self.raw_grad_v(&x.raw(), &v.raw()))
    }

    pub fn grad_x(&self, x: &TorusPoint, v: &Velocity) -> Vec<f64> {
        self.raw_grad_x(&x.raw(), &v.raw())[..self.dim].to_vec()
    }

    /// Energy `dL/dv . v - L`, i.e. `H(x, dL/dv)`.
    pub fn energy(&self, x: &TorusPoint, v: &Velocity) -> f64 {
        let xr = x.raw();
        let vr = v.raw();
        let p = self.raw_grad_v(&xr, &vr);
        let pv: f64 = (0..self.dim).map(|i| p[i] * vr[i]).sum();
        pv - self.raw_lagrangian(&xr, &vr)
    }

    /// Fast evaluator of `v -> L(x, v)` at a fixed base point.
    pub(crate) fn fiber(&self, x: &Coords) -> Fiber<'_> {
        match &self.custom {
            Some(c) => Fiber::Custom {
                inner: c.as_ref(),
                x: *x,
                dim: self.dim,
            },
            None => Fiber::Quadratic {
                drift: self.drift_at(x),
                offset: -self.effective_potential(x),
                dim: self.dim,
            },
        }
    }

    /// Legendre transform `H(x, p) = sup_v <p, v> - L(x, v)`.
    pub fn hamiltonian(&self, x: &TorusPoint, p: &[f64]) -> Result<HamiltonianValue> {
        if p.len() != self.dim || x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: p.len(),
                right: self.dim,
            });
        }
        let mut pr = [0.0; MAX_DIM];
        pr[..self.dim].copy_from_slice(p);
        let (value, v) = self.raw_hamiltonian(&x.raw(), &pr)?;
        Ok(HamiltonianValue {
            value,
            velocity: Velocity::from_raw(self.dim, v),
        })
    }

    pub(crate) fn raw_hamiltonian(&self, x: &Coords, p: &Coords) -> Result<(f64, Coords)> {
        if self.custom.is_none() {
            let w = self.drift_at(x);
            let mut h = self.effective_potential(x);
            let mut v = [0.0; MAX_DIM];
            for i in 0..self.dim {
                h += 0.5 * p[i] * p[i] + p[i] * w[i];
                v[i] = p[i] + w[i];
            }
            return Ok((h, v));
        }
        let v = self.newton_legendre(x, p)?;
        let pv: f64 = (0..self.dim).map(|i| p[i] * v[i]).sum();
        Ok((pv - self.raw_lagrangian(x, &v), v))
    }

    /// Solve `dL/dv (x, v) = p` by damped Newton from `v = p`.
    fn newton_legendre(&self, x: &Coords, p: &Coords) -> Result<Coords> {
        const MAX_ITER: usize = 100;
        const TOL: f64 = 1e-10;
        let dim = self.dim;
        let objective = |v: &Coords| -> f64 {
            let pv: f64 = (0..dim).map(|i| p[i] * v[i]).sum();
            pv - self.raw_lagrangian(x, v)
        };
        let residual = |v: &Coords| -> (Coords, f64) {
            let g = self.raw_grad_v(x, v);
            let mut r = [0.0; MAX_DIM];
            let mut n = 0.0;
            for i in 0..dim {
                r[i] = g[i] - p[i];
                n += r[i] * r[i];
            }
            (r, n.sqrt())
        };

        let mut v = *p;
        let (mut r, mut rn) = residual(&v);
        for _ in 0..MAX_ITER {
            if rn <= TOL {
                return Ok(v);
            }
            let h = self.raw_hess_v(x, &v);
            let step = match solve_small(dim, &h, &r) {
                Some(s) => s,
                None => break,
            };
            // backtrack on the concave objective <p, v> - L
            let f0 = objective(&v);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let mut cand = v;
                for i in 0..dim {
                    cand[i] -= t * step[i];
                }
                let (rc, rcn) = residual(&cand);
                if objective(&cand) >= f0 - 1e-14 * (1.0 + f0.abs()) || rcn < rn {
                    v = cand;
                    r = rc;
                    rn = rcn;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if rn <= TOL {
            return Ok(v);
        }
        if dim == 1 {
            if let Some(v1) = self.bisect_gradient(x, p[0]) {
                return Ok(v1);
            }
        }
        Err(Error::NewtonNonConvergence {
            iterations: MAX_ITER,
            residual: rn,
        })
    }

    /// One-dimensional fallback: `dL/dv` is increasing, bisect on it.
    fn bisect_gradient(&self, x: &Coords, p: f64) -> Option<Coords> {
        let g = |v: f64| self.raw_grad_v(x, &[v, 0.0])[0] - p;
        let mut lo = -1.0;
        let mut hi = 1.0;
        let mut grow = 0;
        while g(lo) > 0.0 {
            lo *= 2.0;
            grow += 1;
            if grow > 200 {
                return None;
            }
        }
        while g(hi) < 0.0 {
            hi *= 2.0;
            grow += 1;
            if grow > 200 {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v = 0.5 * (lo + hi);
        if g(v).abs() <= 1e-10 {
            Some([v, 0.0])
        } else {
            None
        }
    }

    /// Sampled `max |grad U| + max |w|` over a `64^d` lattice.
    pub fn speed_scale(&self) -> f64 {
        if self.custom.is_some() {
            // no structural information: probe |dL/dx| at v = 0
            return self
                .sample_points(64)
                .map(|x| norm(self.dim, &self.raw_grad_x(&x, &[0.0; MAX_DIM])))
                .fold(0.0, f64::max);
        }
        let mut grad = 0.0f64;
        let mut drift = 0.0f64;
        for x in self.sample_points(64) {
            grad = grad.max(norm(self.dim, &self.effective_potential_gradient(&x)));
            drift = drift.max(norm(self.dim, &self.drift_at(&x)));
        }
        grad + drift
    }

    /// Default search box `4 (1 + max |grad V| + max |w|)`.
    pub fn default_v_max(&self) -> f64 {
        4.0 * (1.0 + self.speed_scale())
    }

    /// Sampled `max { L(x, v) : |v| <= k }`.
    pub fn max_lagrangian_on_ball(&self, k: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let vs = ball_samples(self.dim, k, 33);
        for x in self.sample_points(64) {
            for v in &vs {
                best = best.max(self.raw_lagrangian(&x, v));
            }
        }
        best
    }

    /// Sampled `min L` (velocities from a ball wide enough to contain the
    /// fiberwise minimizers of the built-in families).
    pub fn min_lagrangian(&self) -> f64 {
        let radius = 2.0 * (1.0 + self.speed_scale());
        let vs = ball_samples(self.dim, radius, 65);
        let mut best = f64::INFINITY;
        for x in self.sample_points(64) {
            if self.custom.is_none() {
                // fiber minimum is at v = w(x)
                let w = self.drift_at(&x);
                best = best.min(self.raw_lagrangian(&x, &w));
            } else {
                for v in &vs {
                    best = best.min(self.raw_lagrangian(&x, v));
                }
            }
        }
        best
    }

    pub(crate) fn sample_points(&self, per_dim: usize) -> impl Iterator<Item = Coords> + '_ {
        let total = per_dim.pow(self.dim as u32);
        let dim = self.dim;
        (0..total).map(move |idx| {
            let mut x = [0.0; MAX_DIM];
            let mut rem = idx;
            for xi in x.iter_mut().take(dim) {
                *xi = (rem % per_dim) as f64 / per_dim as f64;
                rem /= per_dim;
            }
            x
        })
    }

    /// Sample the Tonelli conditions: positive definite `d^2L/dv^2` on a
    /// `16^d` x velocity lattice, and superlinear growth along each axis.
    pub fn validate(&self) -> Result<()> {
        let v_box = if self.custom.is_some() {
            8.0
        } else {
            self.default_v_max()
        };
        let vs = ball_samples(self.dim, v_box, 17);
        for x in self.sample_points(16) {
            for v in &vs {
                let h = self.raw_hess_v(&x, v);
                if !positive_definite(self.dim, &h) {
                    return Err(Error::NotTonelli(format!(
                        "d2L/dv2 not positive definite at x={:?}, v={:?}",
                        &x[..self.dim],
                        &v[..self.dim]
                    )));
                }
            }
            for axis in 0..self.dim {
                for sign in [1.0, -1.0] {
                    let mut prev = f64::NEG_INFINITY;
                    for r in [10.0, 100.0, 1000.0] {
                        let mut v = [0.0; MAX_DIM];
                        v[axis] = sign * r;
                        let ratio = self.raw_lagrangian(&x, &v) / r;
                        if !(ratio > prev) || !ratio.is_finite() {
                            return Err(Error::NotTonelli(format!(
                                "L(x, R e)/R not increasing along axis {axis} at x={:?}",
                                &x[..self.dim]
                            )));
                        }
                        prev = ratio;
                    }
                }
            }
        }
        Ok(())
    }
}

/// `L(x, .)` with everything that depends only on `x` precomputed.
pub(crate) enum Fiber<'a> {
    Quadratic {
        drift: Coords,
        offset: f64,
        dim: usize,
    },
    Custom {
        inner: &'a dyn CustomLagrangian,
        x: Coords,
        dim: usize,
    },
}

impl Fiber<'_> {
    #[inline]
    pub(crate) fn eval(&self, v: &Coords) -> f64 {
        match self {
            Fiber::Quadratic { drift, offset, dim } => {
                let mut kin = 0.0;
                for i in 0..*dim {
                    let d = v[i] - drift[i];
                    kin += d * d;
                }
                0.5 * kin + offset
            }
            Fiber::Custom { inner, x, dim } => inner.value(&x[..*dim], &v[..*dim]),
        }
    }
}

fn norm(dim: usize, v: &Coords) -> f64 {
    (0..dim).map(|i| v[i] * v[i]).sum::<f64>().sqrt()
}

/// Uniform lattice of `m^d` velocities in the box `[-r, r]^d`.
pub(crate) fn ball_samples(dim: usize, r: f64, m: usize) -> Vec<Coords> {
    let step = 2.0 * r / (m - 1) as f64;
    let total = m.pow(dim as u32);
    (0..total)
        .map(|idx| {
            let mut v = [0.0; MAX_DIM];
            let mut rem = idx;
            for vi in v.iter_mut().take(dim) {
                *vi = -r + (rem % m) as f64 * step;
                rem /= m;
            }
            v
        })
        .collect()
}

fn positive_definite(dim: usize, h: &[[f64; MAX_DIM]; MAX_DIM]) -> bool {
    match dim {
        1 => h[0][0] > 0.0,
        _ => {
            let sym = 0.5 * (h[0][1] + h[1][0]);
            h[0][0] > 0.0 && h[0][0] * h[1][1] - sym * sym > 0.0
        }
    }
}

/// Solve `h x = r` for `d <= 2`.
pub(crate) fn solve_small(dim: usize, h: &[[f64; MAX_DIM]; MAX_DIM], r: &Coords) -> Option<Coords> {
    match dim {
        1 => {
            if h[0][0] == 0.0 {
                None
            } else {
                Some([r[0] / h[0][0], 0.0])
            }
        }
        _ => {
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            Some([
                (h[1][1] * r[0] - h[0][1] * r[1]) / det,
                (h[0][0] * r[1] - h[1][0] * r[0]) / det,
            ])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Quartic;

    impl CustomLagrangian for Quartic {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, _x: &[f64], v: &[f64]) -> f64 {
            v[0].powi(4) / 4.0
        }
        fn grad_x(&self, _x: &[f64], _v: &[f64]) -> Coords {
            [0.0; MAX_DIM]
        }
        fn grad_v(&self, _x: &[f64], v: &[f64]) -> Coords {
            [v[0].powi(3), 0.0]
        }
        fn hess_v(&self, _x: &[f64], v: &[f64]) -> [[f64; MAX_DIM]; MAX_DIM] {
            [[3.0 * v[0] * v[0], 0.0], [0.0, 0.0]]
        }
    }

    fn pt(c: &[f64]) -> TorusPoint {
        TorusPoint::new(c).unwrap()
    }

    fn vel(c: &[f64]) -> Velocity {
        Velocity::new(c).unwrap()
    }

    #[test]
    fn lagrangian_examples() {
        let free = build_model(&ModelSpec::free(1)).unwrap();
        assert_eq!(free.lagrangian(&pt(&[0.3]), &vel(&[0.0])), 0.0);
        let pend = build_model(&ModelSpec::pendulum()).unwrap();
        assert!((pend.lagrangian(&pt(&[0.0]), &vel(&[0.0])) + 1.0).abs() < 1e-15);
        assert!((pend.lagrangian(&pt(&[0.25]), &vel(&[2.0])) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_pendulum() {
        let m = build_model(&ModelSpec::pendulum_2d()).unwrap();
        let l = m.lagrangian(&pt(&[0.0, 0.0]), &vel(&[0.0, 0.0]));
        assert!((l + 2.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_family_rejected() {
        let mut spec = ModelSpec::pendulum();
        spec.family = "relativistic".into();
        assert!(matches!(build_model(&spec), Err(Error::UnknownFamily(_))));
        spec.family = "mechanical".into();
        spec.dim = 3;
        assert!(matches!(build_model(&spec), Err(Error::Dimension(3))));
    }

    #[test]
    fn degenerate_custom_model_rejected() {
        let err = LagrangianModel::custom(Arc::new(Quartic)).unwrap_err();
        assert!(matches!(err, Error::NotTonelli(_)));
    }

    #[test]
    fn mechanical_hamiltonian_closed_form() {
        let m = build_model(&ModelSpec::pendulum()).unwrap();
        let h = m.hamiltonian(&pt(&[0.1]), &[1.5]).unwrap();
        let expect = 0.5 * 1.5 * 1.5 + (2.0 * PI * 0.1).cos();
        assert!((h.value - expect).abs() < 1e-14);
        let free = build_model(&ModelSpec::free(1)).unwrap();
        let h0 = free.hamiltonian(&pt(&[0.7]), &[0.0]).unwrap();
        assert_eq!(h0.value, 0.0);
        assert_eq!(h0.velocity.components(), &[0.0]);
    }

    /// Golden-section maximization of `p v - v^4/4` on `[-10, 10]`.
    fn golden_oracle(p: f64) -> (f64, f64) {
        let f = |v: f64| p * v - v.powi(4) / 4.0;
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (-10.0f64, 10.0f64);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        while b - a > 1e-12 {
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            d = a + g * (b - a);
        }
        let v = 0.5 * (a + b);
        (f(v), v)
    }

    #[test]
    fn quartic_hamiltonian_matches_golden_oracle() {
        let (h_ref, v_ref) = golden_oracle(1.0);
        assert!((h_ref - 0.75).abs() < 1e-12);
        assert!((v_ref - 1.0).abs() < 1e-5);
        let m = LagrangianModel::custom_unchecked(Arc::new(Quartic)).unwrap();
        for p in [1.0, -2.0, 0.3] {
            let h = m.hamiltonian(&pt(&[0.2]), &[p]).unwrap();
            let (h_ref, _) = golden_oracle(p);
            assert!((h.value - h_ref).abs() < 1e-10, "p={p}");
            assert!((h.value - 0.75 * f64::powf(p.abs(), 4.0 / 3.0)).abs() < 1e-10);
            let g = m.grad_v(&pt(&[0.2]), &h.velocity).components()[0];
            assert!((g - p).abs() < 1e-10);
        }
    }

    #[test]
    fn drift_hamiltonian_maximizer() {
        let spec = ModelSpec {
            family: "mechanical_with_drift".into(),
            dim: 2,
            potential: PotentialSpec::Cos { k: 1, amp: 0.5 },
            perturbation: Some(PotentialSpec::CosSum { k: 2, amp: 0.1 }),
            drift: Some(DriftSpec::Cos { k: 1, amp: 0.3 }),
        };
        let m = build_model(&spec).unwrap();
        let x = pt(&[0.13, 0.71]);
        let p = [0.4, -1.1];
        let h = m.hamiltonian(&x, &p).unwrap();
        let g = m.grad_v(&x, &h.velocity);
        for i in 0..2 {
            assert!((g.components()[i] - p[i]).abs() < 1e-12);
        }
        // Fenchel equality at the maximizer
        let pv = p[0] * h.velocity.components()[0] + p[1] * h.velocity.components()[1];
        assert!((h.value - (pv - m.lagrangian(&x, &h.velocity))).abs() < 1e-12);
    }

    #[test]
    fn drift_requires_field() {
        let spec = ModelSpec {
            family: "mechanical-with-drift".into(),
            dim: 1,
            potential: PotentialSpec::Zero,
            perturbation: None,
            drift: None,
        };
        assert!(matches!(build_model(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn potential_gradients_match_differences() {
        let specs = [
            PotentialSpec::Cos { k: 2, amp: 0.7 },
            PotentialSpec::CosSum { k: 1, amp: 1.3 },
            PotentialSpec::TwoBump { amp: 1.0 },
            PotentialSpec::Asym { amp: 0.9 },
        ];
        let h = 1e-6;
        for spec in &specs {
            for dim in 1..=2 {
                let x = [0.137, 0.61];
                let g = spec.gradient(dim, &x);
                for i in 0..dim {
                    let mut xp = x;
                    let mut xm = x;
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (spec.value(dim, &xp) - spec.value(dim, &xm)) / (2.0 * h);
                    assert!((fd - g[i]).abs() < 1e-6, "{spec:?} dim {dim}");
                }
            }
        }
    }

    #[test]
    fn model_spec_json() {
        let json = r#"{"family": "mechanical", "dim": 1, "potential": {"id": "cos", "k": 1, "amp": 1.0}, "perturbation": null}"#;
        let spec: ModelSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec, ModelSpec::pendulum());
        let m = build_model(&spec).unwrap();
        assert!((m.default_v_max() - 4.0 * (1.0 + 2.0 * PI)).abs() < 1e-9);
        assert_eq!(m.spec().unwrap(), spec);
    }
}
