//! Forward continuity-equation solver: push the initial particle cloud
//! along `dy/dt = -D_x u + f` and deposit every snapshot.
//!
//! The continuum solution is literally a push-forward of the initial
//! measure along this flow, so a Lagrangian discretization conserves mass
//! exactly; the grid densities exist only for coupling and output.

use crate::error::{Error, Result};
use crate::field::VectorField2D;
use crate::grid::{Grid2D, TimeGrid};
use crate::hjb::HjbSolution;
use crate::measure::{deposit, DensityField, MeasureCurve, ParticleCloud};
use crate::metrics::w1_sliced_fields;
use crate::model::{FrozenFields, ModelParams};

/// Velocity sampler for one time node: `-grad u + f` with both fields
/// interpolated bilinearly.
#[derive(Debug, Clone, Copy)]
pub struct FlowVelocitySampler<'a> {
    gradient: &'a VectorField2D,
    drift: &'a VectorField2D,
}

impl<'a> FlowVelocitySampler<'a> {
    pub fn new(gradient: &'a VectorField2D, drift: &'a VectorField2D) -> Self {
        Self { gradient, drift }
    }

    /// Flow velocity at a point (box overshoot up to one cell tolerated).
    pub fn velocity_at(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let q = self
            .gradient
            .grid()
            .clamp_with_tolerance(x, "flow velocity sample")?;
        Ok(self.velocity_clamped(q))
    }

    #[inline]
    fn velocity_clamped(&self, x: [f64; 2]) -> [f64; 2] {
        let g = self.gradient.interpolate_clamped(x);
        let f = self.drift.interpolate_clamped(x);
        [f[0] - g[0], f[1] - g[1]]
    }
}

/// Midpoint (RK2) step against the step's frozen velocity sampler.
///
/// The fields are frozen per step at `t_k`, matching the semi-Lagrangian
/// value step, so the coupled discretization is first-order consistent in
/// time throughout.
#[inline]
pub(crate) fn rk2_step(
    x: [f64; 2],
    sampler: &FlowVelocitySampler,
    dt: f64,
    context: &str,
) -> Result<[f64; 2]> {
    let grid = sampler.gradient.grid();
    let k1 = sampler.velocity_clamped(grid.clamp_with_tolerance(x, context)?);
    let xm = grid.clamp_with_tolerance([x[0] + 0.5 * dt * k1[0], x[1] + 0.5 * dt * k1[1]], context)?;
    let k2 = sampler.velocity_clamped(xm);
    Ok([x[0] + dt * k2[0], x[1] + dt * k2[1]])
}

/// Advance every particle one RK2 step; weights never change.
///
/// A particle whose updated position leaves the box is an error (the box is
/// too small to hold the support bound).
pub fn advect(cloud: &ParticleCloud, sampler: &FlowVelocitySampler, dt: f64) -> Result<ParticleCloud> {
    let grid = sampler.gradient.grid();
    let mut out = Vec::with_capacity(cloud.len());
    for (idx, &p) in cloud.positions().iter().enumerate() {
        let ctx = format!("advect of particle {idx}");
        let next = rk2_step(p, sampler, dt, &ctx)?;
        if !grid.contains(next) {
            return Err(Error::OutOfDomain {
                x: next[0],
                y: next[1],
                half_width: grid.half_width(),
                context: ctx,
            });
        }
        out.push(next);
    }
    ParticleCloud::new(out)
}

/// Push the initial cloud through the whole horizon against a solved value
/// function and the frozen interaction fields, depositing every snapshot.
pub fn push_forward_curve(
    mu0_cloud: &ParticleCloud,
    hjb: &HjbSolution,
    m: &MeasureCurve,
    mp: &ModelParams,
) -> Result<MeasureCurve> {
    if hjb.grid() != m.grid() || hjb.time() != m.time() {
        return Err(Error::GridMismatch(
            "HJB solution and measure curve live on different grids".into(),
        ));
    }
    // the cloud must stand for the curve's configured initial density;
    // the bound is the cloud-in-cell smear plus stratified sampling noise
    let dep0 = deposit(mu0_cloud, m.grid())?;
    let tol = 3.0 * m.grid().spacing() + 1e-9;
    let gap = w1_sliced_fields(&dep0, m.snapshot(0), 16)?;
    if gap > tol {
        return Err(Error::InvalidParameter(format!(
            "initial cloud deposits {gap:.3e} away (sliced W1) from the curve's initial density; tolerance {tol:.3e}"
        )));
    }
    let ff = FrozenFields::compute(m, mp);
    push_forward_with_fields(mu0_cloud, hjb, &ff, m.grid(), m.time(), mp.m_tot)
}

/// Solver core against precomputed frozen fields (skips the initial-density
/// consistency check; the fixed-point driver holds it by construction).
pub fn push_forward_with_fields(
    mu0_cloud: &ParticleCloud,
    hjb: &HjbSolution,
    ff: &FrozenFields,
    grid: Grid2D,
    tg: TimeGrid,
    m_tot: f64,
) -> Result<MeasureCurve> {
    let dt = tg.dt();
    let mut clouds = Vec::with_capacity(tg.n_nodes());
    clouds.push(mu0_cloud.clone());
    for k in 0..tg.n_steps() {
        let sampler = FlowVelocitySampler::new(hjb.gradient(k), &ff.drift[k]);
        let next = advect(clouds.last().unwrap(), &sampler, dt)?;
        clouds.push(next);
    }
    let mut snapshots = Vec::with_capacity(tg.n_nodes());
    for cloud in &clouds {
        snapshots.push(deposit(cloud, grid)?.with_physical_mass(m_tot));
    }
    MeasureCurve::new(tg, snapshots, Some(clouds))
}

/// Smallest radius such that cells outside the centered ball carry at most
/// `mass_tol` of the total mass.
pub fn support_radius(rho: &DensityField, mass_tol: f64) -> f64 {
    if mass_tol >= 1.0 {
        return 0.0;
    }
    let grid = rho.grid();
    let n = grid.n();
    let mut cells: Vec<(f64, f64)> = Vec::with_capacity(grid.len());
    for j in 0..n {
        for i in 0..n {
            let c = grid.cell_center(i, j);
            cells.push((c[0].hypot(c[1]), rho.mass_at(i, j)));
        }
    }
    // discard the farthest cells while their cumulative mass stays under tol
    cells.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut discarded = 0.0;
    for &(r, m) in &cells {
        if discarded + m > mass_tol {
            return r;
        }
        discarded += m;
    }
    0.0
}

/// Largest per-step mean particle displacement divided by dt: an upper bound
/// for the W1 Lipschitz constant of the curve (common coupling).
pub fn curve_lipschitz_estimate(mu: &MeasureCurve) -> Result<f64> {
    let clouds = mu
        .clouds()
        .ok_or_else(|| Error::MissingParticles("curve Lipschitz estimate".into()))?;
    let dt = mu.time().dt();
    let mut worst = 0.0_f64;
    for pair in clouds.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let mut acc = 0.0;
        for (p, q) in a.positions().iter().zip(b.positions()) {
            acc += (q[0] - p[0]).hypot(q[1] - p[1]);
        }
        worst = worst.max(acc / a.len() as f64 / dt);
    }
    Ok(worst)
}
