//! Dense revised simplex for `min c.x, A x = b, x >= 0` with sparse
//! columns, an explicit basis inverse and Bland's anti-cycling rule.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;

/// Standard-form problem; `b` must be nonnegative.
#[derive(Clone, Debug)]
pub(crate) struct StandardLp {
    pub rows: usize,
    /// Sparse columns `(row, value)`.
    pub columns: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    #[allow(dead_code)]
    pub pivots: usize,
}

struct Tableau<'a> {
    lp: &'a StandardLp,
    /// Row-major `rows x rows` inverse of the basis matrix.
    binv: Vec<f64>,
    /// Basic variable per row; indices `>= n` are artificials.
    basis: Vec<usize>,
    xb: Vec<f64>,
    pivots: usize,
    limit: usize,
    /// Columns of the artificial variables.
    unit: Vec<[(usize, f64); 1]>,
}

impl<'a> Tableau<'a> {
    fn n(&self) -> usize {
        self.lp.columns.len()
    }

    fn column(&self, j: usize) -> &[(usize, f64)] {
        if j < self.n() {
            &self.lp.columns[j]
        } else {
            &self.unit[j - self.n()]
        }
    }

    /// `B^{-1} A_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.lp.rows;
        let mut out = vec![0.0; m];
        for &(r, a) in self.column(j) {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.binv[i * m + r] * a;
            }
        }
        out
    }

    /// Simplex multipliers `c_B^T B^{-1}`.
    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.lp.rows;
        let mut y = vec![0.0; m];
        for (i, &bv) in self.basis.iter().enumerate() {
            let cb = cost(bv);
            if cb != 0.0 {
                for (r, yr) in y.iter_mut().enumerate() {
                    *yr += cb * self.binv[i * m + r];
                }
            }
        }
        y
    }

    fn pivot(&mut self, row: usize, entering: usize, dir: &[f64]) {
        let m = self.lp.rows;
        let p = dir[row];
        for r in 0..m {
            self.binv[row * m + r] /= p;
        }
        self.xb[row] /= p;
        let (pivot_row, xr) = (self.binv[row * m..(row + 1) * m].to_vec(), self.xb[row]);
        for i in 0..m {
            if i != row && dir[i] != 0.0 {
                let f = dir[i];
                for r in 0..m {
                    self.binv[i * m + r] -= f * pivot_row[r];
                }
                self.xb[i] -= f * xr;
            }
        }
        self.basis[row] = entering;
        self.pivots += 1;
    }

    /// Runs Bland's rule over candidate columns `0..upto` until optimal.
    fn optimize(&mut self, cost: &dyn Fn(usize) -> f64, upto: usize) -> Result<()> {
        loop {
            if self.pivots >= self.limit {
                return Err(Error::LpIterationLimit(self.limit));
            }
            let y = self.duals(cost);
            let mut in_basis = vec![false; self.n() + self.lp.rows];
            for &b in &self.basis {
                in_basis[b] = true;
            }
            let entering = (0..upto).find(|&j| {
                if in_basis[j] {
                    return false;
                }
                let reduced = cost(j) - self.column(j).iter().map(|&(r, a)| y[r] * a).sum::<f64>();
                reduced < -COST_TOL
            });
            let Some(q) = entering else {
                return Ok(());
            };
            let dir = self.ftran(q);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.lp.rows {
                if dir[i] > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / dir[i];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::LpUnbounded);
            };
            self.pivot(row, q, &dir);
        }
    }
}

/// Two-phase solve. Redundant equality rows keep their artificial basic at
/// zero level.
pub(crate) fn solve(lp: &StandardLp, pivot_limit: usize) -> Result<LpSolution> {
    let m = lp.rows;
    let n = lp.columns.len();
    debug_assert!(lp.rhs.iter().all(|&b| b >= 0.0));
    let mut binv = vec![0.0; m * m];
    for i in 0..m {
        binv[i * m + i] = 1.0;
    }
    let mut t = Tableau {
        lp,
        binv,
        basis: (n..n + m).collect(),
        xb: lp.rhs.clone(),
        pivots: 0,
        limit: pivot_limit,
        unit: (0..m).map(|i| [(i, 1.0)]).collect(),
    };

    // phase I: minimize the sum of artificials
    let phase1 = |j: usize| if j >= n { 1.0 } else { 0.0 };
    t.optimize(&phase1, n + m)?;
    let infeasibility: f64 = t
        .basis
        .iter()
        .zip(&t.xb)
        .filter(|(&b, _)| b >= n)
        .map(|(_, &x)| x)
        .sum();
    if infeasibility > 1e-8 {
        return Err(Error::LpInfeasible);
    }
    // drive remaining artificials out where a structural column allows it
    for row in 0..m {
        if t.basis[row] < n {
            continue;
        }
        let mut candidate = None;
        for j in 0..n {
            if t.basis.contains(&j) {
                continue;
            }
            let dir = t.ftran(j);
            if dir[row].abs() > PIVOT_TOL {
                candidate = Some((j, dir));
                break;
            }
        }
        if let Some((j, dir)) = candidate {
            t.pivot(row, j, &dir);
        }
    }

    // phase II over structural columns only
    let phase2 = |j: usize| if j >= n { 0.0 } else { lp.cost[j] };
    t.optimize(&phase2, n)?;

    // recompute the basic solution from the final inverse
    let mut x = vec![0.0; n];
    for (i, &bv) in t.basis.iter().enumerate() {
        if bv < n {
            let v: f64 = (0..m).map(|r| t.binv[i * m + r] * lp.rhs[r]).sum();
            x[bv] = v.max(0.0);
        }
    }
    let objective = x.iter().zip(&lp.cost).map(|(a, c)| a * c).sum();
    Ok(LpSolution {
        x,
        objective,
        pivots: t.pivots,
    })
}
