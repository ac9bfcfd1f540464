//! Nodal scalar and vector fields with bilinear interpolation.

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// Scalar values attached to the cell centers of a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    grid: Grid2D,
    data: Vec<f64>,
}

impl ScalarField2D {
    pub fn new(grid: Grid2D, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "scalar field has {} values for a {}-cell grid",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn constant(grid: Grid2D, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// Evaluate `f` at every cell center.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let n = grid.n();
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..n {
            for i in 0..n {
                data.push(f(grid.cell_center(i, j)));
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Bilinear interpolation over the 4 surrounding cell centers.
    ///
    /// Queries may overshoot the box by at most one cell spacing (they are
    /// clamped back); farther out is `OutOfDomain`. Exact for fields affine
    /// in `x` on the hull of the cell centers.
    pub fn interpolate(&self, p: [f64; 2]) -> Result<f64> {
        let q = self.grid.clamp_with_tolerance(p, "scalar interpolation")?;
        Ok(self.interpolate_clamped(q))
    }

    /// Interpolation for a point already inside the box.
    #[inline]
    pub fn interpolate_clamped(&self, p: [f64; 2]) -> f64 {
        let (i0, tx) = self.grid.lower_cell_and_weight(p[0]);
        let (j0, ty) = self.grid.lower_cell_and_weight(p[1]);
        let n = self.grid.n();
        let base = j0 * n + i0;
        let f00 = self.data[base];
        let f10 = self.data[base + 1];
        let f01 = self.data[base + n];
        let f11 = self.data[base + n + 1];
        let fx0 = f00 + tx * (f10 - f00);
        let fx1 = f01 + tx * (f11 - f01);
        fx0 + ty * (fx1 - fx0)
    }
}

/// Interpolate a nodal scalar field at a point (bilinear).
pub fn interpolate_scalar(field: &ScalarField2D, p: [f64; 2]) -> Result<f64> {
    field.interpolate(p)
}

/// Planar vectors attached to the cell centers of a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2D {
    grid: Grid2D,
    data: Vec<[f64; 2]>,
}

impl VectorField2D {
    pub fn new(grid: Grid2D, data: Vec<[f64; 2]>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "vector field has {} values for a {}-cell grid",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            data: vec![[0.0; 2]; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut([f64; 2]) -> [f64; 2]) -> Self {
        let n = grid.n();
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..n {
            for i in 0..n {
                data.push(f(grid.cell_center(i, j)));
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> [f64; 2] {
        self.data[self.grid.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v[0].is_finite() && v[1].is_finite())
    }

    /// Largest Euclidean norm over the nodes.
    pub fn max_norm(&self) -> f64 {
        self.data
            .iter()
            .fold(0.0_f64, |m, v| m.max(v[0].hypot(v[1])))
    }

    pub fn interpolate(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let q = self.grid.clamp_with_tolerance(p, "vector interpolation")?;
        Ok(self.interpolate_clamped(q))
    }

    #[inline]
    pub fn interpolate_clamped(&self, p: [f64; 2]) -> [f64; 2] {
        let (i0, tx) = self.grid.lower_cell_and_weight(p[0]);
        let (j0, ty) = self.grid.lower_cell_and_weight(p[1]);
        let n = self.grid.n();
        let base = j0 * n + i0;
        let mut out = [0.0; 2];
        for (c, slot) in out.iter_mut().enumerate() {
            let f00 = self.data[base][c];
            let f10 = self.data[base + 1][c];
            let f01 = self.data[base + n][c];
            let f11 = self.data[base + n + 1][c];
            let fx0 = f00 + tx * (f10 - f00);
            let fx1 = f01 + tx * (f11 - f01);
            *slot = fx0 + ty * (fx1 - fx0);
        }
        out
    }
}
