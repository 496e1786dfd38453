//! Aubry set, static classes, Mather measures and calibrated sets on the
//! grid.

mod simplex;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::action::{peierls_barrier_with_horizon, DEFAULT_BARRIER_HORIZON};
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::model::{ball_samples, LagrangianModel};
use crate::solver::{CriticalValue, SolverConfig};
use crate::torus::{raw_metric, Coords, TorusPoint};

/// Grid nodes with a score below a threshold, optionally labelled.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    grid: GridSpec,
    threshold: f64,
    members: Vec<usize>,
    scores: Vec<f64>,
    /// Class id per member, `-1` when unlabelled.
    labels: Vec<i64>,
}

impl PointSet {
    /// Members are sorted by node index; duplicates and out-of-range
    /// indices are rejected.
    pub fn new(grid: GridSpec, threshold: f64, entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut entries = entries;
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("duplicate point-set member".into()));
        }
        if let Some(&(idx, _)) = entries.iter().find(|e| e.0 >= grid.len()) {
            return Err(Error::Config(format!("node {idx} outside the grid")));
        }
        let labels = vec![-1; entries.len()];
        let (members, scores) = entries.into_iter().unzip();
        Ok(Self {
            grid,
            threshold,
            members,
            scores,
            labels,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.members.binary_search(&node).is_ok()
    }

    pub fn points(&self) -> Vec<TorusPoint> {
        self.members.iter().map(|&i| self.grid.node_point(i)).collect()
    }

    /// Distance from `p` to the nearest member (infinite when empty).
    pub fn distance_to(&self, p: &TorusPoint) -> f64 {
        let raw = p.raw();
        self.members
            .iter()
            .map(|&i| raw_metric(self.grid.dim(), &self.grid.node_coords(i), &raw))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest distance from a member of `self` to `other`.
    pub fn excess_over(&self, other: &PointSet) -> f64 {
        self.members
            .iter()
            .map(|&i| other.distance_to(&self.grid.node_point(i)))
            .fold(0.0, f64::max)
    }

    pub fn hausdorff(&self, other: &PointSet) -> f64 {
        self.excess_over(other).max(other.excess_over(self))
    }

    pub fn class_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l >= 0)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Members carrying `label`.
    pub fn class_members(&self, label: i64) -> Vec<usize> {
        self.members
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == label)
            .map(|(&m, _)| m)
            .collect()
    }

    /// Lowest-score member of every class, ordered by label.
    pub fn representatives(&self) -> Vec<usize> {
        let mut best: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        for ((&m, &s), &l) in self.members.iter().zip(&self.scores).zip(&self.labels) {
            if l < 0 {
                continue;
            }
            let e = best.entry(l).or_insert((s, m));
            if s < e.0 {
                *e = (s, m);
            }
        }
        best.values().map(|&(_, m)| m).collect()
    }

    /// Smallest distance between members of different classes.
    pub fn min_class_separation(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for a in 0..self.len() {
            for b in a + 1..self.len() {
                if self.labels[a] >= 0 && self.labels[b] >= 0 && self.labels[a] != self.labels[b] {
                    let d = self.grid.node_distance(self.members[a], self.members[b]);
                    best = Some(best.map_or(d, |x| x.min(d)));
                }
            }
        }
        best
    }

    /// Two classes within `4 dx` of each other: threshold clustering and
    /// connectedness may disagree at grid scale.
    pub fn near_degenerate(&self) -> bool {
        self.min_class_separation()
            .is_some_and(|d| d < 4.0 * self.grid.dx() + 1e-12)
    }

    /// Rows `coords, score, label`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header = if self.grid.dim() == 1 { "x,score,label" } else { "x,y,score,label" };
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            let p = self.grid.node_point(self.members[k]);
            let c: Vec<String> = p.coords().iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{},{},{}", c.join(","), self.scores[k], self.labels[k])?;
        }
        Ok(())
    }
}

/// Default Aubry threshold `20 dx^2`.
///
/// The self-barrier grows quadratically away from the Aubry set, so a
/// threshold linear in `dx` would admit a band of width `O(sqrt(dx))`.
pub fn default_aubry_threshold(grid: &GridSpec) -> f64 {
    20.0 * grid.dx() * grid.dx()
}

/// Default calibrated-set threshold `10 dx^2`, quadratic for the same
/// reason as [`default_aubry_threshold`].
pub fn default_calibrated_threshold(grid: &GridSpec) -> f64 {
    10.0 * grid.dx() * grid.dx()
}

/// Peierls barriers `h^infinity(x, .)` keyed by source node.
#[derive(Clone, Debug)]
pub struct BarrierCache {
    grid: GridSpec,
    horizon: f64,
    fields: BTreeMap<usize, GridField>,
    unsettled: BTreeSet<usize>,
}

impl BarrierCache {
    pub fn new(grid: GridSpec) -> Self {
        Self::with_horizon(grid, DEFAULT_BARRIER_HORIZON)
    }

    pub fn with_horizon(grid: GridSpec, horizon: f64) -> Self {
        Self {
            grid,
            horizon,
            fields: BTreeMap::new(),
            unsettled: BTreeSet::new(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Computes the barrier from `node` unless cached.
    pub fn ensure(&mut self, node: usize, cfg: &SolverConfig, model: &LagrangianModel) -> Result<&GridField> {
        if cfg.grid != self.grid {
            return Err(Error::FieldMismatch("barrier cache grid differs from config".into()));
        }
        if !self.fields.contains_key(&node) {
            let b = peierls_barrier_with_horizon(&self.grid.node_point(node), self.horizon, cfg, model)?;
            if b.unsettled {
                self.unsettled.insert(node);
            }
            self.fields.insert(node, b.field);
        }
        Ok(&self.fields[&node])
    }

    pub fn get(&self, node: usize) -> Option<&GridField> {
        self.fields.get(&node)
    }

    pub fn insert(&mut self, node: usize, field: GridField) -> Result<()> {
        if *field.grid() != self.grid {
            return Err(Error::FieldMismatch("barrier on a different grid".into()));
        }
        self.fields.insert(node, field);
        Ok(())
    }

    pub fn sources(&self) -> impl Iterator<Item = usize> + '_ {
        self.fields.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Sources whose horizon window had not settled within `5 dx`.
    pub fn unsettled(&self) -> &BTreeSet<usize> {
        &self.unsettled
    }
}

/// Parameters of the Aubry-set search.
#[derive(Clone, Debug, PartialEq)]
pub struct AubryOptions {
    pub threshold: f64,
    /// Coarse source stride in nodes per axis.
    pub stride: usize,
}

impl AubryOptions {
    pub fn for_grid(grid: &GridSpec) -> Self {
        Self {
            threshold: default_aubry_threshold(grid),
            stride: 4,
        }
    }

    /// Coarse-pass threshold: a node within `stride / 2 + 1` cells of the
    /// set still passes under quadratic growth.
    pub fn coarse_threshold(&self) -> f64 {
        let r = (self.stride / 2 + 1) as f64;
        self.threshold * r * r
    }
}

fn box_around(grid: &GridSpec, node: usize, radius: usize) -> Vec<usize> {
    let r = radius as isize;
    let mut out = Vec::new();
    match grid.dim() {
        1 => {
            for a in -r..=r {
                out.push(grid.shifted(node, 0, a));
            }
        }
        _ => {
            for a in -r..=r {
                let row = grid.shifted(node, 0, a);
                for b in -r..=r {
                    out.push(grid.shifted(row, 1, b));
                }
            }
        }
    }
    out
}

/// `{x : h^infinity(x, x) < threshold}` from self-barriers on a stride
/// sub-grid, refined on every node within one stride of a coarse hit.
pub fn aubry_set(
    cfg: &SolverConfig,
    model: &LagrangianModel,
    opts: &AubryOptions,
    cache: &mut BarrierCache,
) -> Result<PointSet> {
    let grid = cfg.grid;
    if opts.stride == 0 || grid.n() % opts.stride != 0 {
        return Err(Error::Config(format!(
            "stride {} must divide n = {}",
            opts.stride,
            grid.n()
        )));
    }
    let coarse: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.multi_index(i)[..grid.dim()].iter().all(|m| m % opts.stride == 0))
        .collect();
    let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
    let mut hits = Vec::new();
    for &node in &coarse {
        let s = cache.ensure(node, cfg, model)?.get(node);
        scores.insert(node, s);
        if s < opts.coarse_threshold() {
            hits.push(node);
        }
    }
    let mut refine: BTreeSet<usize> = BTreeSet::new();
    for &h in &hits {
        refine.extend(box_around(&grid, h, opts.stride - 1));
    }
    for node in refine {
        if let std::collections::btree_map::Entry::Vacant(e) = scores.entry(node) {
            e.insert(cache.ensure(node, cfg, model)?.get(node));
        }
    }
    let entries = scores
        .into_iter()
        .filter(|&(_, s)| s < opts.threshold)
        .collect();
    PointSet::new(grid, opts.threshold, entries)
}

/// `d_c(x, y) = h^infinity(x, y) + h^infinity(y, x)`.
pub fn pseudo_metric(x: usize, y: usize, cache: &BarrierCache) -> Result<f64> {
    let hx = cache.get(x).ok_or(Error::MissingBarrier(x))?;
    let hy = cache.get(y).ok_or(Error::MissingBarrier(y))?;
    Ok(hx.get(y) + hy.get(x))
}

/// Union-find clustering of the Aubry set: nodes join when
/// `d_c < eps_class`.
pub fn static_classes(aubry: &PointSet, cache: &BarrierCache, eps_class: f64) -> Result<PointSet> {
    let m = aubry.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for a in 0..m {
        for b in a + 1..m {
            if pseudo_metric(aubry.members[a], aubry.members[b], cache)? < eps_class {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut ids: BTreeMap<usize, i64> = BTreeMap::new();
    let mut out = aubry.clone();
    for k in 0..m {
        let root = find(&mut parent, k);
        let next = ids.len() as i64;
        out.labels[k] = *ids.entry(root).or_insert(next);
    }
    Ok(out)
}

/// Default class-merging threshold.
pub const DEFAULT_CLASS_THRESHOLD: f64 = 0.1;

/// Nodes where `u_minus - u_plus < eps` (the discrete calibrated set).
pub fn calibrated_set(u_minus: &GridField, u_plus: &GridField, eps: f64) -> Result<PointSet> {
    if u_minus.grid() != u_plus.grid() {
        return Err(Error::FieldMismatch("calibrated set: grids differ".into()));
    }
    if u_minus.meta.lambda != u_plus.meta.lambda {
        return Err(Error::FieldMismatch(format!(
            "calibrated set: lambda {} vs {}",
            u_minus.meta.lambda, u_plus.meta.lambda
        )));
    }
    let entries = u_minus
        .values()
        .iter()
        .zip(u_plus.values())
        .enumerate()
        .map(|(i, (a, b))| (i, a - b))
        .filter(|&(_, d)| d < eps)
        .collect();
    PointSet::new(*u_minus.grid(), eps, entries)
}

/// Probability weights on nodes x velocity lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    grid: GridSpec,
    velocities: Vec<Coords>,
    /// Node-major: `weights[i * velocities.len() + j]`.
    weights: Vec<f64>,
    objective: f64,
}

impl DiscreteMeasure {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn velocity_count(&self) -> usize {
        self.velocities.len()
    }

    pub fn velocity(&self, j: usize) -> &[f64] {
        &self.velocities[j][..self.grid.dim()]
    }

    pub fn weight(&self, node: usize, j: usize) -> f64 {
        self.weights[node * self.velocities.len() + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum L dmu`.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Position marginal.
    pub fn marginal(&self) -> Vec<f64> {
        self.weights
            .chunks(self.velocities.len())
            .map(|c| c.iter().sum())
            .collect()
    }

    /// `max_k |sum_ij mu_ij <grad phi_k(x_i), v_j>|` over grid hat functions
    /// with central-difference gradients.
    pub fn closedness_defect(&self) -> f64 {
        let grid = self.grid;
        let m = self.velocities.len();
        let scale = 1.0 / (2.0 * grid.dx());
        (0..grid.len())
            .map(|k| {
                let mut acc = 0.0;
                for axis in 0..grid.dim() {
                    // grad phi_k(x_i) is +1/2dx at i = k - e, -1/2dx at i = k + e
                    let below = grid.shifted(k, axis, -1);
                    let above = grid.shifted(k, axis, 1);
                    for j in 0..m {
                        let v = self.velocities[j][axis];
                        acc += v * (self.weights[below * m + j] - self.weights[above * m + j]);
                    }
                }
                (acc * scale).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Nonnegative, unit mass within `1e-9`, closed within `1e-7`.
    pub fn check(&self) -> Result<()> {
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Config("measure has negative weights".into()));
        }
        let mass = self.total_mass();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("measure mass {mass} differs from 1")));
        }
        let defect = self.closedness_defect();
        if defect > 1e-7 {
            return Err(Error::Config(format!("closedness defect {defect:e}")));
        }
        Ok(())
    }

    /// Rows `x coords, v components, weight` for positive weights.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.grid.dim();
        if dim == 1 {
            writeln!(w, "x,v,weight")?;
        } else {
            writeln!(w, "x,y,v0,v1,weight")?;
        }
        let m = self.velocities.len();
        for (idx, &wt) in self.weights.iter().enumerate() {
            if wt <= 0.0 {
                continue;
            }
            let p = self.grid.node_point(idx / m);
            let x: Vec<String> = p.coords().iter().map(|c| format!("{c}")).collect();
            let v: Vec<String> = self.velocity(idx % m).iter().map(|c| format!("{c}")).collect();
            writeln!(w, "{},{},{wt}", x.join(","), v.join(","))?;
        }
        Ok(())
    }
}

/// Largest grid per dimension accepted by [`mather_lp`].
pub fn lp_grid_limit(dim: usize) -> usize {
    if dim == 1 {
        64
    } else {
        16
    }
}

/// Minimizes `sum L(x_i, v_j) mu_ij` over discrete closed probability
/// measures on the grid times the `cfg.lattice^d` velocity lattice.
pub fn mather_lp(cfg: &SolverConfig, model: &LagrangianModel) -> Result<DiscreteMeasure> {
    let grid = cfg.grid;
    let dim = grid.dim();
    if model.dim() != dim {
        return Err(Error::DimensionMismatch {
            left: model.dim(),
            right: dim,
        });
    }
    if grid.n() > lp_grid_limit(dim) {
        return Err(Error::LpTooLarge(format!(
            "n = {} exceeds {} in dimension {dim}",
            grid.n(),
            lp_grid_limit(dim)
        )));
    }
    let velocities = ball_samples(dim, cfg.v_max, cfg.lattice);
    let m = velocities.len();
    let nodes = grid.len();
    let mut columns = Vec::with_capacity(nodes * m);
    let mut cost = Vec::with_capacity(nodes * m);
    for i in 0..nodes {
        let x = grid.node_coords(i);
        for v in &velocities {
            // row 0: mass; row 1 + k: closedness against hat k
            let mut col: BTreeMap<usize, f64> = BTreeMap::new();
            col.insert(0, 1.0);
            for axis in 0..dim {
                if v[axis] != 0.0 {
                    *col.entry(1 + grid.shifted(i, axis, 1)).or_insert(0.0) += v[axis];
                    *col.entry(1 + grid.shifted(i, axis, -1)).or_insert(0.0) -= v[axis];
                }
            }
            columns.push(col.into_iter().filter(|&(_, a)| a != 0.0).collect());
            cost.push(model.raw_lagrangian(&x, v));
        }
    }
    let mut rhs = vec![0.0; 1 + nodes];
    rhs[0] = 1.0;
    let lp = simplex::StandardLp {
        rows: 1 + nodes,
        columns,
        cost,
        rhs,
    };
    let sol = simplex::solve(&lp, 200 * (lp.rows + lp.columns.len()))?;
    let measure = DiscreteMeasure {
        grid,
        velocities,
        weights: sol.x,
        objective: sol.objective,
    };
    Ok(measure)
}

/// Nodes whose marginal exceeds `eps_supp` times the largest marginal.
pub fn mather_set(mu: &DiscreteMeasure, eps_supp: f64) -> Result<PointSet> {
    let marginal = mu.marginal();
    let top = marginal.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::Config("measure has no mass".into()));
    }
    // score 1 - marginal/top, member iff score < 1 - eps_supp
    let threshold = 1.0 - eps_supp;
    let entries = marginal
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > eps_supp * top)
        .map(|(i, &w)| (i, 1.0 - w / top))
        .collect();
    PointSet::new(mu.grid, threshold, entries)
}

pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-3;

/// Solves the closed-measure LP on the largest admissible grid not finer
/// than `cfg.grid` and stores `-value` comparison data in `cv`.
pub fn cross_check_critical(
    cv: &mut CriticalValue,
    cfg: &SolverConfig,
    model: &LagrangianModel,
) -> Result<DiscreteMeasure> {
    let dim = cfg.grid.dim();
    let n = cfg.grid.n().min(lp_grid_limit(dim));
    let mut local = cfg.clone();
    local.grid = GridSpec::new(dim, n)?;
    let mu = mather_lp(&local, model)?;
    cv.lp_value = Some(mu.objective);
    Ok(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelSpec};
    use crate::solver::forward_solution;

    fn setup(spec: ModelSpec, n: usize, c: f64) -> (LagrangianModel, SolverConfig) {
        let model = build_model(&spec).unwrap();
        let grid = GridSpec::new(spec.dim, n).unwrap();
        let cfg = SolverConfig::new(grid, &model).with_c(c);
        (model, cfg)
    }

    #[test]
    fn point_set_basics() {
        let g = GridSpec::new(1, 16).unwrap();
        assert!(PointSet::new(g, 1.0, vec![(1, 0.0), (1, 0.0)]).is_err());
        assert!(PointSet::new(g, 1.0, vec![(16, 0.0)]).is_err());
        let a = PointSet::new(g, 1.0, vec![(0, 0.0), (15, 0.0)]).unwrap();
        let b = PointSet::new(g, 1.0, vec![(2, 0.0)]).unwrap();
        assert!(a.contains(15) && !a.contains(1));
        assert!((a.hausdorff(&b) - 3.0 / 16.0).abs() < 1e-15);
        assert!((b.excess_over(&a) - 2.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn free_lp_value_zero_on_rest_slice() {
        let (model, cfg) = setup(ModelSpec::free(1), 16, 0.0);
        let mu = mather_lp(&cfg, &model).unwrap();
        assert!(mu.objective().abs() < 1e-12);
        mu.check().unwrap();
        let m = mu.velocity_count();
        for i in 0..16 {
            for j in 0..m {
                if mu.weight(i, j) > 1e-12 {
                    assert_eq!(mu.velocity(j)[0], 0.0);
                }
            }
        }
    }

    #[test]
    fn pendulum_lp_is_dirac_at_maximum() {
        let (model, cfg) = setup(ModelSpec::pendulum(), 32, 1.0);
        let mu = mather_lp(&cfg, &model).unwrap();
        assert!((mu.objective() + 1.0).abs() < 1e-9, "{}", mu.objective());
        mu.check().unwrap();
        let set = mather_set(&mu, DEFAULT_SUPPORT_THRESHOLD).unwrap();
        assert_eq!(set.members(), &[0]);
    }

    #[test]
    fn lp_guard() {
        let (model, cfg) = setup(ModelSpec::pendulum(), 128, 1.0);
        assert!(matches!(mather_lp(&cfg, &model), Err(Error::LpTooLarge(_))));
    }

    #[test]
    fn free_calibrated_set_is_everything() {
        let (model, cfg) = setup(ModelSpec::free(1), 32, 0.0);
        let cfg = cfg.with_lambda(0.3);
        let up = forward_solution(&cfg, &model).unwrap();
        let set = calibrated_set(&up, &up, default_calibrated_threshold(&cfg.grid)).unwrap();
        assert_eq!(set.len(), 32);
        let other = GridField::constant(GridSpec::new(1, 64).unwrap(), 0.0);
        assert!(calibrated_set(&other, &up, 1.0).is_err());
    }

    #[test]
    fn pendulum_aubry_set_and_single_class() {
        let (model, cfg) = setup(ModelSpec::pendulum(), 32, 1.0);
        let mut cache = BarrierCache::with_horizon(cfg.grid, 8.0);
        let opts = AubryOptions::for_grid(&cfg.grid);
        let a = aubry_set(&cfg, &model, &opts, &mut cache).unwrap();
        assert!(a.contains(0));
        for &m in a.members() {
            assert!(cfg.grid.node_distance(m, 0) <= 2.0 * cfg.grid.dx() + 1e-12);
        }
        let classes = static_classes(&a, &cache, DEFAULT_CLASS_THRESHOLD).unwrap();
        assert_eq!(classes.class_count(), 1);
        assert!(pseudo_metric(0, 0, &cache).unwrap().abs() < 0.02);
        assert!(matches!(pseudo_metric(0, 17, &cache), Err(Error::MissingBarrier(17))));
    }
}
