//! Uniform periodic grids and scalar fields on them.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{check_dim, Coords, TorusPoint, MAX_DIM};

const MAGIC: &[u8; 4] = b"WKF1";
const MAX_NODES: usize = 1 << 22;

/// `n^d` nodes at spacing `1/n` on the unit torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        check_dim(dim)?;
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Grid(format!(
                "nodes per dimension must be a power of two >= 16, got {n}"
            )));
        }
        match n.checked_pow(dim as u32) {
            Some(total) if total <= MAX_NODES => Ok(Self { dim, n }),
            _ => Err(Error::Grid(format!(
                "{n}^{dim} nodes exceeds the memory guard of {MAX_NODES}"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of a flat node index; the first coordinate varies slowest.
    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.n, idx % self.n],
        }
    }

    #[inline]
    pub fn flat_index(&self, mi: [usize; MAX_DIM]) -> usize {
        match self.dim {
            1 => mi[0],
            _ => mi[0] * self.n + mi[1],
        }
    }

    #[inline]
    pub(crate) fn node_coords(&self, idx: usize) -> Coords {
        let mi = self.multi_index(idx);
        let dx = self.dx();
        let mut c = [0.0; MAX_DIM];
        for k in 0..self.dim {
            c[k] = mi[k] as f64 * dx;
        }
        c
    }

    pub fn node_point(&self, idx: usize) -> TorusPoint {
        TorusPoint::from_raw(self.dim, self.node_coords(idx))
    }

    /// Flat index of the node nearest to `p`.
    pub fn nearest_node(&self, p: &TorusPoint) -> usize {
        self.nearest_raw(&p.raw())
    }

    pub(crate) fn nearest_raw(&self, p: &Coords) -> usize {
        let mut mi = [0usize; MAX_DIM];
        for k in 0..self.dim {
            let s = (p[k] * self.n as f64).round() as i64;
            mi[k] = s.rem_euclid(self.n as i64) as usize;
        }
        self.flat_index(mi)
    }

    /// Neighbor of `idx` shifted by `offset` nodes along `axis`.
    #[inline]
    pub fn shifted(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let mut mi = self.multi_index(idx);
        let n = self.n as isize;
        mi[axis] = (mi[axis] as isize + offset).rem_euclid(n) as usize;
        self.flat_index(mi)
    }

    /// Periodic distance between two nodes.
    pub fn node_distance(&self, a: usize, b: usize) -> f64 {
        crate::torus::raw_metric(self.dim, &self.node_coords(a), &self.node_coords(b))
    }
}

/// Provenance carried alongside a field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub lambda: f64,
    pub c: f64,
    pub iterations: usize,
    pub last_increment: f64,
    pub converged: bool,
}

/// Periodic scalar field sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    values: Vec<f64>,
    pub meta: FieldMeta,
}

impl GridField {
    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
            meta: FieldMeta::default(),
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                node,
                stage: "field construction",
            });
        }
        Ok(Self {
            grid,
            values,
            meta: FieldMeta::default(),
        })
    }

    /// Sample `f` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&TorusPoint) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.node_point(i))).collect();
        Self::from_values(grid, values)
    }

    pub(crate) fn from_parts(grid: GridSpec, values: Vec<f64>, meta: FieldMeta) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values, meta }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            meta: self.meta.clone(),
        }
    }

    fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::FieldMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// Node-wise `self - other`.
    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            meta: FieldMeta::default(),
        })
    }

    pub fn sup_distance(&self, other: &GridField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Largest adjacent-node difference divided by the spacing.
    pub fn lipschitz_constant(&self) -> f64 {
        let dx = self.grid.dx();
        let mut best = 0.0f64;
        for idx in 0..self.values.len() {
            for axis in 0..self.grid.dim {
                let j = self.grid.shifted(idx, axis, 1);
                best = best.max((self.values[j] - self.values[idx]).abs() / dx);
            }
        }
        best
    }

    /// Periodic multilinear interpolation.
    pub fn interpolate(&self, p: &TorusPoint) -> f64 {
        interpolate_raw(&self.grid, &self.values, &p.raw())
    }

    /// Little-endian binary: `WKF1`, `d` and `n` as u32, `lambda` and `c`
    /// as f64, then `n^d` f64 values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.grid.dim as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n as u32).to_le_bytes())?;
        w.write_all(&self.meta.lambda.to_le_bytes())?;
        w.write_all(&self.meta.c.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        let grid = GridSpec::new(dim, n).map_err(|e| Error::Format(e.to_string()))?;
        r.read_exact(&mut b8)?;
        let lambda = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let c = f64::from_le_bytes(b8);
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        let mut field = Self::from_values(grid, values)?;
        field.meta.lambda = lambda;
        field.meta.c = c;
        Ok(field)
    }

    /// CSV with header `i,x,value` (d = 1) or `i,j,x,y,value` (d = 2).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        match self.grid.dim {
            1 => writeln!(w, "i,x,value")?,
            _ => writeln!(w, "i,j,x,y,value")?,
        }
        for (idx, v) in self.values.iter().enumerate() {
            let mi = self.grid.multi_index(idx);
            let x = self.grid.node_coords(idx);
            match self.grid.dim {
                1 => writeln!(w, "{},{},{}", mi[0], x[0], v)?,
                _ => writeln!(w, "{},{},{},{},{}", mi[0], mi[1], x[0], x[1], v)?,
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, grid: GridSpec) -> Result<Self> {
        let mut values = vec![f64::NAN; grid.len()];
        for (lineno, line) in r.lines().enumerate().skip(1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let parse_idx = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
            };
            let (mi, v) = match (grid.dim, cols.len()) {
                (1, 3) => ([parse_idx(cols[0])?, 0], cols[2]),
                (2, 5) => ([parse_idx(cols[0])?, parse_idx(cols[1])?], cols[4]),
                _ => {
                    return Err(Error::Format(format!(
                        "line {}: unexpected column count {}",
                        lineno + 1,
                        cols.len()
                    )))
                }
            };
            if mi[0] >= grid.n || mi[1] >= grid.n {
                return Err(Error::Format(format!("line {}: index out of range", lineno + 1)));
            }
            values[grid.flat_index(mi)] = v
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        }
        Self::from_values(grid, values)
    }
}

/// Periodic multilinear interpolation of nodal `values` at raw coordinates.
#[inline]
pub(crate) fn interpolate_raw(grid: &GridSpec, values: &[f64], p: &Coords) -> f64 {
    let n = grid.n;
    let mask = (n - 1) as i64;
    let nf = n as f64;
    match grid.dim {
        1 => {
            let s = p[0] * nf;
            let fl = s.floor();
            let t = s - fl;
            let i0 = (fl as i64 & mask) as usize;
            let i1 = (i0 + 1) & (n - 1);
            let a = values[i0];
            a + t * (values[i1] - a)
        }
        _ => {
            let s0 = p[0] * nf;
            let s1 = p[1] * nf;
            let f0 = s0.floor();
            let f1 = s1.floor();
            let t0 = s0 - f0;
            let t1 = s1 - f1;
            let i0 = (f0 as i64 & mask) as usize;
            let j0 = (f1 as i64 & mask) as usize;
            let i1 = (i0 + 1) & (n - 1);
            let j1 = (j0 + 1) & (n - 1);
            let v00 = values[i0 * n + j0];
            let v01 = values[i0 * n + j1];
            let v10 = values[i1 * n + j0];
            let v11 = values[i1 * n + j1];
            let a = v00 + t1 * (v01 - v00);
            let b = v10 + t1 * (v11 - v10);
            a + t0 * (b - a)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_guards() {
        assert!(GridSpec::new(1, 8).is_err());
        assert!(GridSpec::new(1, 48).is_err());
        assert!(GridSpec::new(2, 4096).is_err());
        assert!(GridSpec::new(2, 2048).is_ok());
        assert!(GridSpec::new(3, 16).is_err());
    }

    #[test]
    fn interpolation_reproduces_nodes_and_is_periodic() {
        let g = GridSpec::new(2, 16).unwrap();
        let f = GridField::from_fn(g, |p| {
            (2.0 * PI * p.coords()[0]).sin() + (2.0 * PI * p.coords()[1]).cos()
        })
        .unwrap();
        for idx in [0, 5, 17, 255] {
            let p = g.node_point(idx);
            assert!((f.interpolate(&p) - f.get(idx)).abs() < 1e-14);
        }
        // dyadic points: the unit translate is exact in floating point
        for &(x, y) in &[(0.03125, 0.5625), (0.984375, 0.0078125)] {
            let a = interpolate_raw(&g, f.values(), &[x, y]);
            let b = interpolate_raw(&g, f.values(), &[x + 1.0, y - 1.0]);
            assert_eq!(a, b);
        }
        let a = interpolate_raw(&g, f.values(), &[0.1234, 0.777]);
        let b = interpolate_raw(&g, f.values(), &[1.1234, -0.223]);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_linear_between_nodes() {
        let g = GridSpec::new(1, 16).unwrap();
        let f = GridField::from_fn(g, |p| p.coords()[0]).unwrap();
        let v = interpolate_raw(&g, f.values(), &[0.5 + 0.25 / 16.0, 0.0]);
        assert!((v - (0.5 + 0.25 / 16.0)).abs() < 1e-14);
        // wrap segment between the last node and node 0
        let v = interpolate_raw(&g, f.values(), &[15.5 / 16.0, 0.0]);
        assert!((v - 0.5 * 15.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn binary_round_trip() {
        let g = GridSpec::new(2, 16).unwrap();
        let mut f = GridField::from_fn(g, |p| p.coords()[0] * 3.0 - p.coords()[1]).unwrap();
        f.meta.lambda = 0.25;
        f.meta.c = 1.5;
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"WKF1");
        assert_eq!(buf.len(), 4 + 4 + 4 + 8 + 8 + 8 * 256);
        let back = GridField::read_binary(&buf[..]).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.meta.lambda, 0.25);
        assert_eq!(back.meta.c, 1.5);
        buf[0] = b'X';
        assert!(GridField::read_binary(&buf[..]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = GridSpec::new(1, 16).unwrap();
        let f = GridField::from_fn(g, |p| (p.coords()[0] * 7.0).sin()).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,x,value\n0,0,0\n"));
        let back = GridField::read_csv(&buf[..], g).unwrap();
        assert_eq!(back.values(), f.values());
    }

    #[test]
    fn non_finite_values_rejected() {
        let g = GridSpec::new(1, 16).unwrap();
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(matches!(
            GridField::from_values(g, v),
            Err(Error::NonFinite { node: 3, .. })
        ));
    }

    #[test]
    fn nearest_node_wraps() {
        let g = GridSpec::new(1, 16).unwrap();
        let p = TorusPoint::new(&[0.99]).unwrap();
        assert_eq!(g.nearest_node(&p), 0);
        assert_eq!(g.shifted(0, 0, -1), 15);
        assert!((g.node_distance(0, 15) - 1.0 / 16.0).abs() < 1e-15);
    }
}
