//! Points, velocities and the periodic metric on the unit flat torus.

use crate::error::{Error, Result};

/// Maximum supported torus dimension.
pub const MAX_DIM: usize = 2;

/// Fixed-size coordinate storage; unused trailing components are zero.
pub type Coords = [f64; MAX_DIM];

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::Dimension(dim));
    }
    Ok(())
}

/// Reduce a real number to `[0, 1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    // `x - floor(x)` can round up to exactly 1.0 for tiny negative x.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Shortest signed displacement `b - a` on the circle, in `[-1/2, 1/2]`.
#[inline]
pub fn circle_delta(a: f64, b: f64) -> f64 {
    let d = b - a;
    d - d.round()
}

/// A point on the unit flat torus `T^d`, every coordinate in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusPoint {
    dim: usize,
    coords: Coords,
}

impl TorusPoint {
    pub fn new(coords: &[f64]) -> Result<Self> {
        check_dim(coords.len())?;
        let mut c = [0.0; MAX_DIM];
        for (dst, &src) in c.iter_mut().zip(coords) {
            if !src.is_finite() {
                return Err(Error::Config(format!("non-finite coordinate {src}")));
            }
            *dst = wrap_unit(src);
        }
        Ok(Self {
            dim: coords.len(),
            coords: c,
        })
    }

    pub(crate) fn from_raw(dim: usize, coords: Coords) -> Self {
        let mut c = [0.0; MAX_DIM];
        for i in 0..dim {
            c[i] = wrap_unit(coords[i]);
        }
        Self { dim, coords: c }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub(crate) fn raw(&self) -> Coords {
        self.coords
    }

    /// Translate by `v * t` and wrap back onto the torus.
    pub fn advance(&self, v: &Velocity, t: f64) -> TorusPoint {
        let mut c = self.coords;
        for i in 0..self.dim {
            c[i] += v.components[i] * t;
        }
        Self::from_raw(self.dim, c)
    }
}

/// A tangent vector at a torus point (unit distance per unit time).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Velocity {
    dim: usize,
    components: Coords,
}

impl Velocity {
    pub fn new(components: &[f64]) -> Result<Self> {
        check_dim(components.len())?;
        let mut c = [0.0; MAX_DIM];
        c[..components.len()].copy_from_slice(components);
        Ok(Self {
            dim: components.len(),
            components: c,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            components: [0.0; MAX_DIM],
        }
    }

    pub(crate) fn from_raw(dim: usize, components: Coords) -> Self {
        let mut c = [0.0; MAX_DIM];
        c[..dim].copy_from_slice(&components[..dim]);
        Self { dim, components: c }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[f64] {
        &self.components[..self.dim]
    }

    pub(crate) fn raw(&self) -> Coords {
        self.components
    }

    pub fn norm(&self) -> f64 {
        self.components().iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Periodic Euclidean distance on the unit torus.
pub fn torus_metric(x: &TorusPoint, y: &TorusPoint) -> Result<f64> {
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch {
            left: x.dim,
            right: y.dim,
        });
    }
    Ok(raw_metric(x.dim, &x.coords, &y.coords))
}

#[inline]
pub(crate) fn raw_metric(dim: usize, a: &Coords, b: &Coords) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        let d = (a[i] - b[i]).abs();
        let d = d - d.floor();
        let m = d.min(1.0 - d);
        s += m * m;
    }
    s.sqrt()
}
