//! Cell-centered spatial grid and uniform time grid.
//!
//! The square box `[-L, L]^2` replaces the whole plane; it must be sized so
//! that the transported density keeps its support well inside (the solver
//! warns when mass reaches the outermost two-cell ring).

use crate::error::{Error, Result};
use serde::Serialize;

/// Uniform cell-centered grid on `[-L, L]^2` with `n` cells per axis.
///
/// Cell centers sit at `x_i = (2i + 1 - n) * h / 2`, which is exact in
/// floating point whenever `h` is a dyadic rational and makes the grid
/// exactly symmetric about the origin for any `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid2D {
    half_width: f64,
    n: usize,
}

impl Grid2D {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !half_width.is_finite() || half_width <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "grid half_width must be positive and finite, got {half_width}"
            )));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "grid n must be even and >= 8, got {n}"
            )));
        }
        Ok(Self { half_width, n })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total cell count `n^2`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell spacing `h = 2L/n`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Row-major index of cell `(i, j)`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        j * self.n + i
    }

    /// 1D center coordinate of cell index `i`.
    #[inline]
    pub fn center_1d(&self, i: usize) -> f64 {
        0.5 * self.spacing() * (2 * i as i64 + 1 - self.n as i64) as f64
    }

    /// Center of cell `(i, j)`.
    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [self.center_1d(i), self.center_1d(j)]
    }

    /// True if `p` lies in the closed box.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0].abs() <= self.half_width && p[1].abs() <= self.half_width
    }

    /// Clamp `p` to the box, allowing an overshoot of at most `h` per axis
    /// (RK substeps may momentarily leave the box). Farther out is an error.
    pub fn clamp_with_tolerance(&self, p: [f64; 2], context: &str) -> Result<[f64; 2]> {
        let l = self.half_width;
        let h = self.spacing();
        if p[0].abs() > l + h || p[1].abs() > l + h || !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::OutOfDomain {
                x: p[0],
                y: p[1],
                half_width: l,
                context: context.to_string(),
            });
        }
        Ok([p[0].clamp(-l, l), p[1].clamp(-l, l)])
    }

    /// Continuous cell coordinate: `u = x/h + (n-1)/2`, so `u = i` exactly at
    /// the center of cell `i` on dyadic grids.
    #[inline]
    pub fn cell_coord(&self, x: f64) -> f64 {
        x / self.spacing() + 0.5 * (self.n - 1) as f64
    }

    /// Bilinear stencil for a point: lower cell index and weight along one
    /// axis, with the weight clamped to [0, 1] so boundary cells absorb the
    /// outer half-cell ring. Interpolation and deposit share this, which
    /// makes them exactly adjoint.
    #[inline]
    pub fn lower_cell_and_weight(&self, x: f64) -> (usize, f64) {
        let u = self.cell_coord(x);
        let i0 = (u.floor() as i64).clamp(0, self.n as i64 - 2) as usize;
        let t = (u - i0 as f64).clamp(0.0, 1.0);
        (i0, t)
    }

    /// Mass in the outermost two-cell ring (diagnostic for box sizing).
    pub fn ring_band(&self) -> usize {
        2
    }
}

/// Uniform partition of the horizon `[0, T]` into `n_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        if n_steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "time grid needs at least 2 steps, got {n_steps}"
            )));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of time nodes, `n_steps + 1`.
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Node `t_k = k * dt`.
    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.n_steps);
        k as f64 * self.dt()
    }
}
