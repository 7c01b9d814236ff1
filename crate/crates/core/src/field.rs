//! Two-channel per-pixel vector fields.
//!
//! Both types store an `x` plane followed by a `y` plane, in pixels, over a
//! `height × width` grid.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Per-pixel displacement `(dx, dy)` driving a backward warp.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DisplacementField {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 2 * width * height {
            return Err(Error::contract("displacement field length does not match its grid"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("displacement field contains non-finite values"));
        }
        Ok(DisplacementField { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        DisplacementField {
            width,
            height,
            data: alloc::vec![0.0; 2 * width * height],
        }
    }

    pub fn constant(width: usize, height: usize, dx: f64, dy: f64) -> Self {
        Self::from_fn(width, height, |_, _| (dx, dy))
    }

    /// Builds a field from `f(row, col) -> (dx, dy)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let n = width * height;
        let mut data = alloc::vec![0.0; 2 * n];
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = f(y, x);
                data[y * width + x] = dx;
                data[n + y * width + x] = dy;
            }
        }
        DisplacementField { width, height, data }
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), 2 * width * height);
        DisplacementField { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn dx(&self) -> &[f64] {
        &self.data[..self.width * self.height]
    }

    pub fn dy(&self) -> &[f64] {
        &self.data[self.width * self.height..]
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        let n = self.width * self.height;
        let i = y * self.width + x;
        (self.data[i], self.data[n + i])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &DisplacementField) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::contract("adding displacement fields of different grids"));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> DisplacementField {
        DisplacementField {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Mean displacement magnitude over the grid.
    pub fn mean_magnitude(&self) -> f64 {
        let n = self.width * self.height;
        (0..n).map(|i| libm::hypot(self.data[i], self.data[n + i])).sum::<f64>() / n as f64
    }
}

/// A point on the learned configuration manifold: a per-pixel 2-vector state
/// whose finite differences are displacement fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationPoint {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ConfigurationPoint {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 2 * width * height {
            return Err(Error::contract("configuration point length does not match its grid"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("configuration point contains non-finite values"));
        }
        Ok(ConfigurationPoint { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Finite-difference link between consecutive configuration points:
/// `u = xb - xa`.
pub fn displacement_between(xa: &ConfigurationPoint, xb: &ConfigurationPoint) -> Result<DisplacementField> {
    if (xa.width, xa.height) != (xb.width, xb.height) {
        return Err(Error::contract("configuration points have different grids"));
    }
    let data = xb.data.iter().zip(&xa.data).map(|(b, a)| b - a).collect();
    Ok(DisplacementField::from_raw(xa.width, xa.height, data))
}
