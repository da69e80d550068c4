//! Periodic 1D grid and spatial fields with 4th-order finite differences.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub length: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::InvalidParameter(format!("grid length {length} must be > 0")));
        }
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidParameter(format!("grid size {n} must be even and >= 16")));
        }
        Ok(Grid1D { length, n })
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.point(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialField {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl SpatialField {
    pub fn constant(grid: Grid1D, v: f64) -> Self {
        SpatialField { grid, values: vec![v; grid.n] }
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        SpatialField { grid, values: grid.points().map(f).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SpatialField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid.n, other.grid.n);
        SpatialField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn div(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a / b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// 4th-order central first derivative on the periodic grid.
    pub fn dx(&self) -> Self {
        let n = self.grid.n;
        let h = self.grid.spacing();
        let v = &self.values;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let m2 = v[(i + n - 2) % n];
            let m1 = v[(i + n - 1) % n];
            let p1 = v[(i + 1) % n];
            let p2 = v[(i + 2) % n];
            out[i] = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
        }
        SpatialField { grid: self.grid, values: out }
    }

    /// 4th-order central second derivative on the periodic grid.
    pub fn dxx(&self) -> Self {
        let n = self.grid.n;
        let h = self.grid.spacing();
        let v = &self.values;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let m2 = v[(i + n - 2) % n];
            let m1 = v[(i + n - 1) % n];
            let p1 = v[(i + 1) % n];
            let p2 = v[(i + 2) % n];
            out[i] = (-m2 + 16.0 * m1 - 30.0 * v[i] + 16.0 * p1 - p2) / (12.0 * h * h);
        }
        SpatialField { grid: self.grid, values: out }
    }

    /// Grid L² norm, `sqrt(h Σ v²)`.
    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.spacing();
        (h * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.grid.n as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Project onto Fourier modes `|k| ≤ k_max` (direct summation; the grids
    /// here are small). Removes grid-scale noise before operations that
    /// amplify high wavenumbers, such as repeated differentiation.
    pub fn low_pass(&self, k_max: usize) -> Self {
        let n = self.grid.n;
        if 2 * k_max >= n {
            return self.clone();
        }
        let mut out = vec![self.mean(); n];
        let step = 2.0 * std::f64::consts::PI / n as f64;
        for k in 1..=k_max {
            let mut a = 0.0;
            let mut b = 0.0;
            for (j, &v) in self.values.iter().enumerate() {
                let th = step * (k * j) as f64;
                a += v * th.cos();
                b += v * th.sin();
            }
            a *= 2.0 / n as f64;
            b *= 2.0 / n as f64;
            for (j, o) in out.iter_mut().enumerate() {
                let th = step * (k * j) as f64;
                *o += a * th.cos() + b * th.sin();
            }
        }
        SpatialField { grid: self.grid, values: out }
    }

    /// Periodic shift by `k` grid points (positive shifts move data rightward).
    pub fn shift(&self, k: isize) -> Self {
        let n = self.grid.n as isize;
        let kk = ((k % n) + n) % n;
        let mut out = vec![0.0; self.grid.n];
        for i in 0..self.grid.n {
            out[(i + kk as usize) % self.grid.n] = self.values[i];
        }
        SpatialField { grid: self.grid, values: out }
    }
}
