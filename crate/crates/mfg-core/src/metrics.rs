//! Wasserstein-1 distances.
//!
//! Two routes: an exact optimal-assignment solver for small equal-weight
//! atom sets (the test oracle) and a sliced lower-bound estimator for grid
//! densities and clouds (the convergence monitor). Projections are
//! 1-Lipschitz, so every sliced value is a lower bound for the true W1; the
//! fixed-point stopping tolerance is therefore quoted in estimator units.

use crate::error::{Error, Result};
use crate::measure::{DensityField, MeasureCurve, ParticleCloud};

/// Equal-weight atoms in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSet {
    points: Vec<[f64; 2]>,
}

impl AtomSet {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("atom set must be non-empty".into()));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidParameter("atom coordinates must be finite".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn from_cloud(cloud: &ParticleCloud) -> Self {
        Self {
            points: cloud.positions().to_vec(),
        }
    }
}

/// Largest atom count accepted by the exact assignment solver.
pub const W1_EXACT_CAP: usize = 12;

/// Exact W1 between equal-weight atom sets of equal size, by optimal
/// assignment (bitmask dynamic programming over matched targets).
pub fn w1_exact_small(a: &AtomSet, b: &AtomSet) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::SizeMismatch(n, b.len()));
    }
    if n > W1_EXACT_CAP {
        return Err(Error::TooLarge(n, W1_EXACT_CAP));
    }
    let mut cost = vec![0.0_f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let dx = a.points[i][0] - b.points[j][0];
            let dy = a.points[i][1] - b.points[j][1];
            cost[i * n + j] = dx.hypot(dy);
        }
    }
    let full = (1_usize << n) - 1;
    let mut dp = vec![f64::INFINITY; full + 1];
    dp[0] = 0.0;
    for mask in 1..=full {
        let i = (mask as u32).count_ones() as usize - 1;
        let mut best = f64::INFINITY;
        let mut rest = mask;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            let prev = dp[mask & !(1 << j)];
            let c = prev + cost[i * n + j];
            if c < best {
                best = c;
            }
            rest &= rest - 1;
        }
        dp[mask] = best;
    }
    Ok(dp[full] / n as f64)
}

/// Deterministic direction lattice: `n_dirs` angles evenly spaced over
/// `[0, pi)` starting at 0 (opposite directions give equal 1D distances).
fn directions(n_dirs: usize) -> Vec<[f64; 2]> {
    (0..n_dirs)
        .map(|d| {
            let th = std::f64::consts::PI * d as f64 / n_dirs as f64;
            [th.cos(), th.sin()]
        })
        .collect()
}

fn check_dirs(n_dirs: usize) -> Result<()> {
    if n_dirs < 8 {
        return Err(Error::InvalidParameter(format!(
            "sliced W1 needs at least 8 directions, got {n_dirs}"
        )));
    }
    Ok(())
}

/// Exact 1D W1 between two weighted point lists sharing a sorted ordering of
/// their union: integral of |CDF_a - CDF_b|.
fn w1_1d_sorted(points: &[(f64, f64, f64)]) -> f64 {
    // points: (position, mass_a, mass_b), sorted by position
    let mut total = 0.0;
    let mut diff = 0.0_f64;
    let mut prev = 0.0;
    for (idx, &(p, ma, mb)) in points.iter().enumerate() {
        if idx > 0 {
            total += diff.abs() * (p - prev);
        }
        diff += ma - mb;
        prev = p;
    }
    total
}

/// Sliced W1 between equal-weight atom sets (sizes may differ): max over the
/// direction lattice of the exact 1D distance between projections.
pub fn w1_sliced_atoms(a: &AtomSet, b: &AtomSet, n_dirs: usize) -> Result<f64> {
    check_dirs(n_dirs)?;
    let wa = 1.0 / a.len() as f64;
    let wb = 1.0 / b.len() as f64;
    let mut best = 0.0_f64;
    for dir in directions(n_dirs) {
        let mut pts: Vec<(f64, f64, f64)> = Vec::with_capacity(a.len() + b.len());
        for p in &a.points {
            pts.push((p[0] * dir[0] + p[1] * dir[1], wa, 0.0));
        }
        for p in &b.points {
            pts.push((p[0] * dir[0] + p[1] * dir[1], 0.0, wb));
        }
        pts.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        best = best.max(w1_1d_sorted(&pts));
    }
    Ok(best)
}

/// Cached projection machinery for repeated sliced distances between
/// densities on one grid: per direction, the cell order sorted by projected
/// coordinate.
pub struct SlicedProjector {
    grid: crate::grid::Grid2D,
    /// per direction: (sorted cell indices, projected coordinates in order)
    per_dir: Vec<(Vec<u32>, Vec<f64>)>,
}

impl SlicedProjector {
    pub fn new(grid: crate::grid::Grid2D, n_dirs: usize) -> Result<Self> {
        check_dirs(n_dirs)?;
        let n = grid.n();
        let mut per_dir = Vec::with_capacity(n_dirs);
        for dir in directions(n_dirs) {
            let mut proj: Vec<(f64, u32)> = Vec::with_capacity(grid.len());
            for j in 0..n {
                for i in 0..n {
                    let c = grid.cell_center(i, j);
                    proj.push((c[0] * dir[0] + c[1] * dir[1], grid.index(i, j) as u32));
                }
            }
            proj.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let order: Vec<u32> = proj.iter().map(|p| p.1).collect();
            let coords: Vec<f64> = proj.iter().map(|p| p.0).collect();
            per_dir.push((order, coords));
        }
        Ok(Self { grid, per_dir })
    }

    pub fn grid(&self) -> crate::grid::Grid2D {
        self.grid
    }

    /// Sliced W1 between two mass vectors on this projector's grid.
    pub fn distance(&self, a: &DensityField, b: &DensityField) -> Result<f64> {
        if a.grid() != self.grid || b.grid() != self.grid {
            return Err(Error::GridMismatch(
                "sliced projector grid differs from density grids".into(),
            ));
        }
        let ma = a.mass();
        let mb = b.mass();
        let mut best = 0.0_f64;
        for (order, coords) in &self.per_dir {
            let mut total = 0.0;
            let mut diff = 0.0_f64;
            let mut prev = coords[0];
            for (idx, &cell) in order.iter().enumerate() {
                let p = coords[idx];
                total += diff.abs() * (p - prev);
                let c = cell as usize;
                diff += ma[c] - mb[c];
                prev = p;
            }
            best = best.max(total);
        }
        Ok(best)
    }
}

/// Sliced W1 between two densities on the same grid.
pub fn w1_sliced_fields(a: &DensityField, b: &DensityField, n_dirs: usize) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch(
            "sliced W1 needs both densities on one grid".into(),
        ));
    }
    SlicedProjector::new(a.grid(), n_dirs)?.distance(a, b)
}

/// Sup-over-time sliced distance between two measure curves.
pub fn curve_distance(a: &MeasureCurve, b: &MeasureCurve, n_dirs: usize) -> Result<f64> {
    if a.grid() != b.grid() || a.time() != b.time() {
        return Err(Error::GridMismatch(
            "curve distance needs matching space and time grids".into(),
        ));
    }
    let projector = SlicedProjector::new(a.grid(), n_dirs)?;
    let mut worst = 0.0_f64;
    for k in 0..a.time().n_nodes() {
        worst = worst.max(projector.distance(a.snapshot(k), b.snapshot(k))?);
    }
    Ok(worst)
}
