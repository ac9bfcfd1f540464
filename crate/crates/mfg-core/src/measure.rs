//! Discrete probability measures: particle clouds, grid densities, and
//! time-indexed measure curves.
//!
//! The forward solver is Lagrangian: measures travel as equal-weight atom
//! clouds and are deposited onto the grid (cloud-in-cell) only for coupling
//! and output. Deposit and interpolation share their bilinear weights, so
//! the pair is exactly adjoint and deposit conserves mass by construction.

use crate::error::{Error, Result};
use crate::field::ScalarField2D;
use crate::grid::{Grid2D, TimeGrid};
use crate::rng::{mix, SplitMix64};

/// Equal-weight atom representation of a probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    positions: Vec<[f64; 2]>,
}

impl ParticleCloud {
    pub fn new(positions: Vec<[f64; 2]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter(
                "particle cloud needs at least one particle".into(),
            ));
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Uniform weight `1/N`.
    pub fn weight(&self) -> f64 {
        1.0 / self.positions.len() as f64
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.positions
    }
}

/// Summation with a Kahan compensation term; used wherever a mass budget is
/// checked against the 1e-12 conservation tolerance.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Probability masses per grid cell plus the physical scale they stand for.
///
/// `mass[idx]` is the probability carried by the cell; the number density is
/// `mass / h^2` and the physical (persons per area) density is `m_tot` times
/// that.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid2D,
    mass: Vec<f64>,
    m_tot: f64,
}

impl DensityField {
    pub const MASS_TOL: f64 = 1e-12;

    pub fn new(grid: Grid2D, mass: Vec<f64>, m_tot: f64) -> Result<Self> {
        if mass.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "density has {} cells for a {}-cell grid",
                mass.len(),
                grid.len()
            )));
        }
        if mass.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(Error::InvalidParameter(
                "density masses must be finite and nonnegative".into(),
            ));
        }
        let field = Self { grid, mass, m_tot };
        let err = field.mass_error();
        if err > Self::MASS_TOL {
            return Err(Error::InvalidParameter(format!(
                "density mass deviates from 1 by {err:e}"
            )));
        }
        Ok(field)
    }

    /// Build from a nonnegative (not necessarily normalized) density profile
    /// sampled at cell centers; masses are normalized to total exactly 1 up
    /// to one final rounding correction.
    pub fn from_profile(grid: Grid2D, m_tot: f64, mut f: impl FnMut([f64; 2]) -> f64) -> Result<Self> {
        let n = grid.n();
        let mut mass = Vec::with_capacity(grid.len());
        for j in 0..n {
            for i in 0..n {
                let v = f(grid.cell_center(i, j));
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidParameter(
                        "density profile must be finite and nonnegative".into(),
                    ));
                }
                mass.push(v);
            }
        }
        let total = kahan_sum(mass.iter().copied());
        if total <= 0.0 {
            return Err(Error::InvalidParameter(
                "density profile has zero total mass on the grid".into(),
            ));
        }
        for m in &mut mass {
            *m /= total;
        }
        // absorb the last few ulps of normalization error into the peak cell
        let resid = 1.0 - kahan_sum(mass.iter().copied());
        let peak = mass
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        mass[peak] += resid;
        Self::new(grid, mass, m_tot)
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn m_tot(&self) -> f64 {
        self.m_tot
    }

    pub fn with_physical_mass(mut self, m_tot: f64) -> Self {
        self.m_tot = m_tot;
        self
    }

    #[inline]
    pub fn mass_at(&self, i: usize, j: usize) -> f64 {
        self.mass[self.grid.index(i, j)]
    }

    /// Probability density `mass / h^2` of a cell.
    pub fn density_at(&self, i: usize, j: usize) -> f64 {
        let h = self.grid.spacing();
        self.mass_at(i, j) / (h * h)
    }

    /// `|sum(mass) - 1|`, measured with compensated summation.
    pub fn mass_error(&self) -> f64 {
        (kahan_sum(self.mass.iter().copied()) - 1.0).abs()
    }

    /// Largest probability density over the cells.
    pub fn max_density(&self) -> f64 {
        let h2 = self.grid.spacing() * self.grid.spacing();
        self.mass.iter().fold(0.0_f64, |m, v| m.max(*v)) / h2
    }

    /// Probability mass in the outermost `band`-cell ring of the box.
    pub fn ring_mass(&self, band: usize) -> f64 {
        let n = self.grid.n();
        let mut total = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i < band || j < band || i >= n - band || j >= n - band {
                    total += self.mass[self.grid.index(i, j)];
                }
            }
        }
        total
    }

    /// Second moment `sum m_c |y_c|^2` about the origin.
    pub fn second_moment(&self) -> f64 {
        let n = self.grid.n();
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                let c = self.grid.cell_center(i, j);
                acc += self.mass[self.grid.index(i, j)] * (c[0] * c[0] + c[1] * c[1]);
            }
        }
        acc
    }

    /// View the masses as a scalar field (shares the grid, copies data).
    pub fn to_scalar_field(&self) -> ScalarField2D {
        ScalarField2D::new(self.grid, self.mass.clone()).expect("same grid")
    }
}

/// Cloud-in-cell deposit: split each particle's weight bilinearly over the 4
/// surrounding cell centers.
///
/// Every particle must lie inside the closed box. Total mass is 1 up to a
/// rounding of order 1e-15 per particle.
pub fn deposit(cloud: &ParticleCloud, grid: Grid2D) -> Result<DensityField> {
    let n = grid.n();
    let w = cloud.weight();
    let mut mass = vec![0.0_f64; grid.len()];
    for (idx, &p) in cloud.positions().iter().enumerate() {
        if !grid.contains(p) {
            return Err(Error::OutOfDomain {
                x: p[0],
                y: p[1],
                half_width: grid.half_width(),
                context: format!("deposit of particle {idx}"),
            });
        }
        let (i0, tx) = grid.lower_cell_and_weight(p[0]);
        let (j0, ty) = grid.lower_cell_and_weight(p[1]);
        let base = j0 * n + i0;
        mass[base] += w * (1.0 - tx) * (1.0 - ty);
        mass[base + 1] += w * tx * (1.0 - ty);
        mass[base + n] += w * (1.0 - tx) * ty;
        mass[base + n + 1] += w * tx * ty;
    }
    DensityField::new(grid, mass, 1.0)
}

/// Deterministic stratified sampling of a grid density into `n_particles`
/// equal-weight atoms.
///
/// Cell counts come from largest-remainder apportionment of `m_ij * N`; each
/// cell lays its particles on a jittered sub-lattice, with the jitter drawn
/// from a counter-based stream keyed by `(seed, populated-cell ordinal,
/// slot)`. Keying by the ordinal (row-major rank among populated cells)
/// rather than the absolute cell index makes the sampling equivariant under
/// grid-aligned translations of the density.
pub fn seed_cloud(density: &DensityField, n_particles: usize, seed: u64) -> Result<ParticleCloud> {
    if n_particles == 0 {
        return Err(Error::InvalidParameter(
            "cannot seed a cloud with zero particles".into(),
        ));
    }
    let grid = density.grid();
    let n = grid.n();
    let np = n_particles as f64;

    let mut counts = vec![0_usize; grid.len()];
    let mut assigned = 0_usize;
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(grid.len());
    for (idx, &m) in density.mass().iter().enumerate() {
        let target = m * np;
        let base = target.floor() as usize;
        counts[idx] = base;
        assigned += base;
        remainders.push((target - base as f64, idx));
    }
    let deficit = n_particles.saturating_sub(assigned);
    // largest remainder first; ties resolved by cell index
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, idx) in remainders.iter().take(deficit) {
        counts[idx] += 1;
    }

    let h = grid.spacing();
    let mut positions = Vec::with_capacity(n_particles);
    let mut ordinal = 0_u64;
    for j in 0..n {
        for i in 0..n {
            let idx = grid.index(i, j);
            let count = counts[idx];
            if count == 0 {
                continue;
            }
            let center = grid.cell_center(i, j);
            let side = (count as f64).sqrt().ceil() as usize;
            let sub = h / side as f64;
            for q in 0..count {
                let qi = q % side;
                let qj = q / side;
                let mut stream = SplitMix64::new(mix(seed, (ordinal << 24) ^ q as u64));
                let jx = stream.range(-0.25, 0.25) * sub;
                let jy = stream.range(-0.25, 0.25) * sub;
                let x = center[0] + ((qi as f64 + 0.5) * sub - 0.5 * h) + jx;
                let y = center[1] + ((qj as f64 + 0.5) * sub - 0.5 * h) + jy;
                positions.push([x, y]);
            }
            ordinal += 1;
        }
    }
    debug_assert_eq!(positions.len(), n_particles);
    ParticleCloud::new(positions)
}

/// A density snapshot per time node, optionally with the particle clouds
/// that generated the snapshots.
#[derive(Debug, Clone)]
pub struct MeasureCurve {
    time: TimeGrid,
    snapshots: Vec<DensityField>,
    clouds: Option<Vec<ParticleCloud>>,
}

impl MeasureCurve {
    pub fn new(
        time: TimeGrid,
        snapshots: Vec<DensityField>,
        clouds: Option<Vec<ParticleCloud>>,
    ) -> Result<Self> {
        if snapshots.len() != time.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "curve has {} snapshots for {} time nodes",
                snapshots.len(),
                time.n_nodes()
            )));
        }
        let grid = snapshots[0].grid();
        if snapshots.iter().any(|s| s.grid() != grid) {
            return Err(Error::GridMismatch(
                "curve snapshots live on different grids".into(),
            ));
        }
        if let Some(clouds) = &clouds {
            if clouds.len() != time.n_nodes() {
                return Err(Error::GridMismatch(format!(
                    "curve has {} clouds for {} time nodes",
                    clouds.len(),
                    time.n_nodes()
                )));
            }
        }
        Ok(Self {
            time,
            snapshots,
            clouds,
        })
    }

    /// Curve frozen at a single density (the Picard starting guess).
    pub fn frozen(time: TimeGrid, density: DensityField) -> Self {
        let snapshots = vec![density; time.n_nodes()];
        Self {
            time,
            snapshots,
            clouds: None,
        }
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn grid(&self) -> Grid2D {
        self.snapshots[0].grid()
    }

    pub fn snapshot(&self, k: usize) -> &DensityField {
        &self.snapshots[k]
    }

    pub fn snapshots(&self) -> &[DensityField] {
        &self.snapshots
    }

    pub fn clouds(&self) -> Option<&[ParticleCloud]> {
        self.clouds.as_deref()
    }

    pub fn max_mass_error(&self) -> f64 {
        self.snapshots
            .iter()
            .map(|s| s.mass_error())
            .fold(0.0, f64::max)
    }

    pub fn max_density(&self) -> f64 {
        self.snapshots
            .iter()
            .map(|s| s.max_density())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid2D {
        Grid2D::new(1.0, 16).unwrap()
    }

    #[test]
    fn deposit_at_cell_center_is_a_point_mass() {
        let g = grid();
        let cloud = ParticleCloud::new(vec![g.cell_center(5, 9)]).unwrap();
        let d = deposit(&cloud, g).unwrap();
        assert_eq!(d.mass_at(5, 9), 1.0);
        assert_eq!(kahan_sum(d.mass().iter().copied()), 1.0);
        assert_eq!(d.mass().iter().filter(|&&m| m != 0.0).count(), 1);
    }

    #[test]
    fn deposit_equidistant_splits_in_four() {
        let g = grid();
        let c0 = g.cell_center(4, 4);
        let h = g.spacing();
        let cloud = ParticleCloud::new(vec![[c0[0] + 0.5 * h, c0[1] + 0.5 * h]]).unwrap();
        let d = deposit(&cloud, g).unwrap();
        for (i, j) in [(4, 4), (5, 4), (4, 5), (5, 5)] {
            assert!((d.mass_at(i, j) - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn deposit_quarter_offset_splits_three_to_one() {
        let g = grid();
        let c0 = g.cell_center(7, 3);
        let h = g.spacing();
        let cloud = ParticleCloud::new(vec![[c0[0] + 0.25 * h, c0[1]]]).unwrap();
        let d = deposit(&cloud, g).unwrap();
        assert!((d.mass_at(7, 3) - 0.75).abs() < 1e-15);
        assert!((d.mass_at(8, 3) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn deposit_rejects_outside_particles() {
        let g = grid();
        let cloud = ParticleCloud::new(vec![[1.0001, 0.0]]).unwrap();
        assert!(deposit(&cloud, g).is_err());
    }

    #[test]
    fn seeded_cloud_is_deterministic_and_exact_count() {
        let g = grid();
        let d = DensityField::from_profile(g, 1.0, |p| (-(p[0] * p[0] + p[1] * p[1]) / 0.08).exp())
            .unwrap();
        let a = seed_cloud(&d, 1234, 99).unwrap();
        let b = seed_cloud(&d, 1234, 99).unwrap();
        assert_eq!(a.len(), 1234);
        assert_eq!(a.positions(), b.positions());
        let c = seed_cloud(&d, 1234, 100).unwrap();
        assert_ne!(a.positions(), c.positions());
        // all particles inside the box, deposit conserves mass
        let dep = deposit(&a, g).unwrap();
        assert!(dep.mass_error() <= 1234.0 * 1e-15);
    }

    #[test]
    fn deposit_and_interpolation_are_adjoint() {
        // sum_ij phi_ij deposit(P)_ij == sum_p w interpolate(phi, x_p):
        // both sides contract the same bilinear weights
        use crate::field::ScalarField2D;
        let g = grid();
        let phi = ScalarField2D::from_fn(g, |p| (2.3 * p[0]).sin() + 0.7 * p[1] * p[1]);
        let mut rng = crate::rng::SplitMix64::new(31);
        let positions: Vec<[f64; 2]> = (0..500)
            .map(|_| [rng.range(-0.99, 0.99), rng.range(-0.99, 0.99)])
            .collect();
        let cloud = ParticleCloud::new(positions).unwrap();
        let d = deposit(&cloud, g).unwrap();
        let lhs = kahan_sum(
            phi.data()
                .iter()
                .zip(d.mass())
                .map(|(p, m)| p * m),
        );
        let w = cloud.weight();
        let rhs = kahan_sum(
            cloud
                .positions()
                .iter()
                .map(|&x| w * phi.interpolate(x).unwrap()),
        );
        assert!((lhs - rhs).abs() <= 1e-12, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn deposit_translation_equivariance_is_exact_on_dyadic_grids() {
        // h = 0.125 and particle coordinates on the h/4 sub-lattice: every
        // shifted coordinate is exactly representable, so the mass array
        // shifts bitwise
        let g = grid();
        let h = g.spacing();
        let q = h / 4.0;
        let mut rng = crate::rng::SplitMix64::new(77);
        let positions: Vec<[f64; 2]> = (0..200)
            .map(|_| {
                [
                    (rng.next_u64() % 33) as f64 * q - 0.5,
                    (rng.next_u64() % 33) as f64 * q - 0.5,
                ]
            })
            .collect();
        let cloud = ParticleCloud::new(positions.clone()).unwrap();
        let (a, b) = (2_i64, -3_i64);
        let shifted = ParticleCloud::new(
            positions
                .iter()
                .map(|p| [p[0] + a as f64 * h, p[1] + b as f64 * h])
                .collect(),
        )
        .unwrap();
        let d0 = deposit(&cloud, g).unwrap();
        let d1 = deposit(&shifted, g).unwrap();
        let n = g.n();
        for j in 0..n {
            for i in 0..n {
                let ii = i as i64 + a;
                let jj = j as i64 + b;
                if ii < 0 || jj < 0 || ii >= n as i64 || jj >= n as i64 {
                    continue;
                }
                assert_eq!(
                    d0.mass_at(i, j),
                    d1.mass_at(ii as usize, jj as usize),
                    "cell ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn profile_normalization_is_tight() {
        let g = Grid2D::new(3.0, 128).unwrap();
        let d = DensityField::from_profile(g, 1.0, |p| {
            if p[0].abs() <= 1.0 && p[1].abs() <= 1.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        assert!(d.mass_error() <= 1e-15);
    }
}
