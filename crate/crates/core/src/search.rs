//! Inner velocity minimization of the semi-Lagrangian steps: a coarse
//! lattice scan followed by coordinate-wise golden-section refinement.

use crate::torus::{Coords, MAX_DIM};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Clone, Debug)]
pub(crate) struct VelocitySearch {
    dim: usize,
    v_max: f64,
    spacing: f64,
    rounds: usize,
    tol: f64,
    lattice: Vec<Coords>,
}

impl VelocitySearch {
    /// `m` points per dimension on `[-v_max, v_max]` (m odd keeps `v = 0`
    /// on the lattice) and `rounds` refinement sweeps.
    pub(crate) fn new(dim: usize, v_max: f64, m: usize, rounds: usize) -> Self {
        let spacing = 2.0 * v_max / (m - 1) as f64;
        let lattice = crate::model::ball_samples(dim, v_max, m);
        Self {
            dim,
            v_max,
            spacing,
            rounds,
            tol: 1e-9 * v_max.max(1.0),
            lattice,
        }
    }

    pub(crate) fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Lattice scan, then `rounds` coordinate sweeps of golden-section
    /// search; the bracket half-width starts at one lattice spacing and
    /// halves every round.
    #[inline]
    pub(crate) fn minimize<F: Fn(&Coords) -> f64>(&self, f: &F) -> (Coords, f64) {
        let mut best_v = [0.0; MAX_DIM];
        let mut best = f64::INFINITY;
        for v in &self.lattice {
            let val = f(v);
            if val < best {
                best = val;
                best_v = *v;
            }
        }
        self.refine(f, best_v, best, self.spacing, self.rounds)
    }

    /// Local search around a previous minimizer.
    #[inline]
    pub(crate) fn minimize_near<F: Fn(&Coords) -> f64>(
        &self,
        f: &F,
        hint: Coords,
        half_width: f64,
    ) -> (Coords, f64) {
        let start = f(&hint);
        self.refine(f, hint, start, half_width.min(self.spacing), self.rounds)
    }

    #[inline]
    fn refine<F: Fn(&Coords) -> f64>(
        &self,
        f: &F,
        mut best_v: Coords,
        mut best: f64,
        mut half: f64,
        rounds: usize,
    ) -> (Coords, f64) {
        for _ in 0..rounds {
            for axis in 0..self.dim {
                let center = best_v[axis];
                let lo = (center - half).max(-self.v_max);
                let hi = (center + half).min(self.v_max);
                if hi - lo <= self.tol {
                    continue;
                }
                let base = best_v;
                let line = |s: f64| {
                    let mut v = base;
                    v[axis] = s;
                    f(&v)
                };
                let (s, val) = golden(&line, lo, hi, self.tol);
                if val < best {
                    best = val;
                    best_v[axis] = s;
                }
            }
            half *= 0.5;
        }
        (best_v, best)
    }
}

/// Golden-section search on `[a, b]`; returns the best point evaluated.
#[inline]
pub(crate) fn golden<G: Fn(f64) -> f64>(g: &G, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = g(c);
    let mut fd = g(d);
    let (mut best_s, mut best) = if fc < fd { (c, fc) } else { (d, fd) };
    let mut iter = 0;
    while b - a > tol && iter < 200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = g(c);
            if fc < best {
                best = fc;
                best_s = c;
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = g(d);
            if fd < best {
                best = fd;
                best_s = d;
            }
        }
        iter += 1;
    }
    (best_s, best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let (s, v) = golden(&|x: f64| (x - 0.3).powi(2) + 1.0, -2.0, 2.0, 1e-12);
        assert!((s - 0.3).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_plus_refinement_beats_lattice() {
        let s = VelocitySearch::new(2, 4.0, 17, 2);
        let f = |v: &Coords| (v[0] - 0.37).powi(2) + 2.0 * (v[1] + 1.21).powi(2);
        let (v, val) = s.minimize(&f);
        assert!(val < 1e-12, "val={val}");
        assert!((v[0] - 0.37).abs() < 1e-6 && (v[1] + 1.21).abs() < 1e-6);
    }

    #[test]
    fn search_respects_box() {
        let s = VelocitySearch::new(1, 2.0, 17, 2);
        let (v, _) = s.minimize(&|v: &Coords| (v[0] - 5.0).powi(2));
        assert!((v[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn kinked_objective() {
        // piecewise linear + quadratic, minimum at the kink
        let s = VelocitySearch::new(1, 10.0, 17, 2);
        let f = |v: &Coords| 3.0 * (v[0] - 1.1).abs() + 0.01 * v[0] * v[0];
        let (v, _) = s.minimize(&f);
        assert!((v[0] - 1.1).abs() < 1e-7);
    }
}
