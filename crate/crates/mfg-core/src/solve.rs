//! Damped Picard iteration on the mean-field map: solve the backward HJB
//! against a frozen curve, push the initial cloud forward, relax, repeat.
//!
//! Fixed points of that map are solution pairs, but no convergence guarantee
//! exists (uniqueness is open), so non-convergence is a first-class outcome:
//! the flag is set, every artifact is still produced, and the diagnostics
//! carry the full residual history.

use crate::control::{nash_gap_with_fields, DeviationFamily, NashGapReport};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hjb::{solve_hjb_with_fields, ControlGrid, HjbSolution};
use crate::measure::{deposit, seed_cloud, DensityField, MeasureCurve, ParticleCloud};
use crate::metrics::SlicedProjector;
use crate::model::{FrozenFields, ModelParams};
use crate::transport::{curve_lipschitz_estimate, push_forward_with_fields, support_radius};
use serde::Serialize;
use std::time::Instant;

/// Fixed-point iteration controls and verification thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveConfig {
    /// Damping weight on the mapped curve, in (0, 1].
    pub theta: f64,
    /// Stopping tolerance for the curve residual (sliced-W1 units).
    pub tol_fp: f64,
    /// Cap on damped updates; one extra consistency evaluation always runs.
    pub max_iter: usize,
    /// Particle count of the transported cloud.
    pub n_particles: usize,
    /// Seed for the stratified cloud jitter and probe starts.
    pub seed: u64,
    /// Support radius cap (the compact-support diagnostic).
    pub support_cap: f64,
    /// Probability-density cap (the L-infinity diagnostic).
    pub density_cap: f64,
    /// Nash probe: allowed relative improvement.
    pub eps_nash_rel: f64,
    /// Nash probe: allowed absolute improvement.
    pub eps_nash_abs: f64,
    /// Run the verification suite after the solve.
    pub verify: bool,
    /// Direction count of the sliced-W1 monitor.
    pub n_dirs: usize,
    /// Number of probe starts for the Nash gap.
    pub nash_starts: usize,
    /// Side of the constant-control deviation lattice.
    pub deviation_lattice: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            theta: 1.0,
            tol_fp: 5e-3,
            max_iter: 40,
            n_particles: 40_000,
            seed: 1,
            support_cap: 2.5,
            density_cap: 10.0,
            eps_nash_rel: 0.05,
            eps_nash_abs: 0.05,
            verify: true,
            n_dirs: 64,
            nash_starts: 20,
            deviation_lattice: 9,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() || self.theta <= 0.0 || self.theta > 1.0 {
            return Err(Error::InvalidParameter("theta must lie in (0, 1]".into()));
        }
        if !self.tol_fp.is_finite() || self.tol_fp <= 0.0 {
            return Err(Error::InvalidParameter("tol_fp must be > 0".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if self.n_particles < 100 {
            return Err(Error::InvalidParameter("need at least 100 particles".into()));
        }
        if self.n_dirs < 8 {
            return Err(Error::InvalidParameter("n_dirs must be >= 8".into()));
        }
        if !self.support_cap.is_finite()
            || self.support_cap <= 0.0
            || !self.density_cap.is_finite()
            || self.density_cap <= 0.0
        {
            return Err(Error::InvalidParameter("diagnostic caps must be > 0".into()));
        }
        Ok(())
    }
}

/// Outcome of the verification suite (violations flag, they do not abort).
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub mass_ok: bool,
    pub support_ok: bool,
    pub density_ok: bool,
    pub c2_finite: bool,
    pub nash_ok: Option<bool>,
}

/// Per-iteration histories and the empirical stand-ins for the regularity
/// constants (semiconcavity, support radius, curve Lipschitz bound).
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub residuals: Vec<f64>,
    pub c2_hat: Vec<f64>,
    pub support_radii: Vec<f64>,
    pub max_densities: Vec<f64>,
    pub mass_errors: Vec<f64>,
    pub curve_lipschitz: Vec<f64>,
    pub boundary_ring_mass: Vec<f64>,
    pub wall_times_s: Vec<f64>,
    pub support_cap_exceeded: bool,
    pub density_cap_exceeded: bool,
    pub nash: Option<NashGapReport>,
    pub verification: Option<VerificationReport>,
}

impl Diagnostics {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }

    pub fn max_mass_error(&self) -> f64 {
        self.mass_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_support_radius(&self) -> f64 {
        self.support_radii.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_c2_hat(&self) -> f64 {
        self.c2_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A converged (or best-effort) solution pair with its diagnostics.
#[derive(Debug, Clone)]
pub struct Solution {
    pub value: HjbSolution,
    pub density: MeasureCurve,
    pub control_grid: ControlGrid,
    pub diagnostics: Diagnostics,
    pub converged: bool,
}

/// One population of a multi-population run.
#[derive(Debug, Clone)]
pub struct Population {
    pub model: ModelParams,
    pub mu0: DensityField,
    /// Control discretization; estimated from the data when absent.
    pub control: Option<ControlGrid>,
}

/// Apply the mean-field map once: HJB solve against `m`, then push-forward
/// of the seeded initial cloud.
///
/// A curve that already carries particle clouds (every solver iterate does)
/// contributes its own initial cloud, so re-applying the map to a returned
/// solution reproduces the reported residual exactly; a density-only curve
/// gets a fresh cloud seeded from its initial snapshot.
pub fn apply_t(
    m: &MeasureCurve,
    mp: &ModelParams,
    cfg: &SolveConfig,
    cg: &ControlGrid,
) -> Result<(MeasureCurve, HjbSolution)> {
    cfg.validate()?;
    mp.validate()?;
    let cloud = match m.clouds() {
        Some(clouds) => clouds[0].clone(),
        None => seed_cloud(m.snapshot(0), cfg.n_particles, cfg.seed)?,
    };
    let ff = FrozenFields::compute(m, mp);
    let hjb = solve_hjb_with_fields(&ff, m.grid(), m.time(), cg)?;
    let curve = push_forward_with_fields(&cloud, &hjb, &ff, m.grid(), m.time(), mp.m_tot)?;
    Ok((curve, hjb))
}

/// Cellwise convex combination `(1 - theta) m_old + theta m_new`; the clouds
/// of `m_new` are carried forward (clouds cannot be averaged).
pub fn damp(m_old: &MeasureCurve, m_new: &MeasureCurve, theta: f64) -> Result<MeasureCurve> {
    if m_old.grid() != m_new.grid() || m_old.time() != m_new.time() {
        return Err(Error::GridMismatch(
            "damping needs curves on matching grids".into(),
        ));
    }
    if theta == 1.0 {
        return Ok(m_new.clone());
    }
    let grid = m_old.grid();
    let mut snapshots = Vec::with_capacity(m_old.time().n_nodes());
    for k in 0..m_old.time().n_nodes() {
        let a = m_old.snapshot(k);
        let b = m_new.snapshot(k);
        let mass: Vec<f64> = a
            .mass()
            .iter()
            .zip(b.mass())
            .map(|(ma, mb)| (1.0 - theta) * ma + theta * mb)
            .collect();
        snapshots.push(DensityField::new(grid, mass, b.m_tot())?);
    }
    let clouds = m_new.clouds().map(|c| c.to_vec());
    MeasureCurve::new(m_old.time(), snapshots, clouds)
}

/// Solve a single-population game by damped Picard iteration.
pub fn picard_solve(
    mp: &ModelParams,
    mu0: &DensityField,
    tg: TimeGrid,
    cg: Option<ControlGrid>,
    cfg: &SolveConfig,
) -> Result<Solution> {
    let pop = Population {
        model: *mp,
        mu0: mu0.clone(),
        control: cg,
    };
    let coupling = vec![vec![mp.kernel.kappa]];
    let mut solutions = solve_multi(&[pop], &coupling, tg, cfg)?;
    Ok(solutions.pop().expect("one population"))
}

/// Solve the coupled multi-population system; all curves update together
/// with a common damping weight and the residual is the worst population.
pub fn solve_multi(
    pops: &[Population],
    coupling: &[Vec<f64>],
    tg: TimeGrid,
    cfg: &SolveConfig,
) -> Result<Vec<Solution>> {
    cfg.validate()?;
    if pops.is_empty() {
        return Err(Error::InvalidParameter("need at least one population".into()));
    }
    let n_pops = pops.len();
    if coupling.len() != n_pops || coupling.iter().any(|row| row.len() != n_pops) {
        return Err(Error::InvalidParameter(format!(
            "coupling matrix must be {n_pops} x {n_pops}"
        )));
    }
    let grid = pops[0].mu0.grid();
    for (j, pop) in pops.iter().enumerate() {
        pop.model.validate()?;
        if pop.mu0.grid() != grid {
            return Err(Error::GridMismatch(
                "all populations must share one grid".into(),
            ));
        }
        if coupling[j][j] != pop.model.kernel.kappa {
            return Err(Error::InvalidParameter(format!(
                "coupling diagonal entry {j} must equal the population's own kappa"
            )));
        }
        let r0 = support_radius(&pop.mu0, 1e-6);
        if r0 > cfg.support_cap {
            return Err(Error::InvalidParameter(format!(
                "initial density of population {j} has support radius {r0:.3} beyond the cap {:.3}",
                cfg.support_cap
            )));
        }
    }

    // one seeded cloud per population; its deposit is the working initial
    // density, so snapshot 0 never changes across iterates
    let mut clouds = Vec::with_capacity(n_pops);
    let mut curves = Vec::with_capacity(n_pops);
    for pop in pops {
        let cloud = seed_cloud(&pop.mu0, cfg.n_particles, cfg.seed)?;
        let mu0_d = deposit(&cloud, grid)?.with_physical_mass(pop.model.m_tot);
        curves.push(MeasureCurve::frozen(tg, mu0_d));
        clouds.push(cloud);
    }

    let projector = SlicedProjector::new(grid, cfg.n_dirs)?;
    let mut control_grids: Vec<Option<ControlGrid>> = pops.iter().map(|p| p.control).collect();
    let mut diagnostics: Vec<Diagnostics> = vec![Diagnostics::default(); n_pops];
    let mut converged = false;

    let mut it = 0_usize;
    let (final_curves, final_hjbs) = loop {
        it += 1;
        let t0 = Instant::now();

        let mut mapped = Vec::with_capacity(n_pops);
        let mut hjbs = Vec::with_capacity(n_pops);
        let mut residual = 0.0_f64;
        for j in 0..n_pops {
            let ff = FrozenFields::compute_coupled(&curves, j, &pops[j].model, &coupling[j]);
            let cg = *control_grids[j].get_or_insert_with(|| {
                let a_max = ControlGrid::estimate_a_max(&ff, grid, tg);
                log::info!("population {j}: estimated a_max = {a_max:.3}");
                ControlGrid::new(a_max, 6, 12).expect("estimated control grid")
            });
            let hjb = solve_hjb_with_fields(&ff, grid, tg, &cg)?;
            let out = push_forward_with_fields(
                &clouds[j],
                &hjb,
                &ff,
                grid,
                tg,
                pops[j].model.m_tot,
            )?;
            let mut r_j = 0.0_f64;
            for k in 0..tg.n_nodes() {
                r_j = r_j.max(projector.distance(curves[j].snapshot(k), out.snapshot(k))?);
            }
            residual = residual.max(r_j);
            mapped.push(out);
            hjbs.push(hjb);
        }

        let wall = t0.elapsed().as_secs_f64();
        for j in 0..n_pops {
            let d = &mut diagnostics[j];
            d.residuals.push(residual);
            d.c2_hat.push(hjbs[j].max_c2_hat());
            let support = mapped[j]
                .snapshots()
                .iter()
                .map(|s| support_radius(s, 1e-6))
                .fold(0.0, f64::max);
            d.support_radii.push(support);
            d.max_densities.push(mapped[j].max_density());
            d.mass_errors.push(mapped[j].max_mass_error());
            d.curve_lipschitz.push(curve_lipschitz_estimate(&mapped[j])?);
            let ring = mapped[j]
                .snapshots()
                .iter()
                .map(|s| s.ring_mass(grid.ring_band()))
                .fold(0.0, f64::max);
            d.boundary_ring_mass.push(ring);
            d.wall_times_s.push(wall);
            if support > cfg.support_cap {
                d.support_cap_exceeded = true;
            }
            if mapped[j].max_density() > cfg.density_cap {
                d.density_cap_exceeded = true;
            }
            if ring > 1e-9 {
                log::warn!(
                    "population {j}: {ring:.3e} mass in the outer two-cell ring at iteration {it}; the box may be too small"
                );
            }
        }
        log::info!("iteration {it}: residual {residual:.6e}");

        if residual <= cfg.tol_fp {
            converged = true;
            break (curves, hjbs);
        }
        if it > cfg.max_iter {
            break (curves, hjbs);
        }
        let mut next = Vec::with_capacity(n_pops);
        for (cur, out) in curves.iter().zip(&mapped) {
            next.push(damp(cur, out, cfg.theta)?);
        }
        curves = next;
    };

    let mut solutions = Vec::with_capacity(n_pops);
    for (j, hjb) in final_hjbs.into_iter().enumerate() {
        let cg = control_grids[j].expect("filled on first iteration");
        let mut diag = std::mem::take(&mut diagnostics[j]);
        if cfg.verify {
            let ff = FrozenFields::compute_coupled(&final_curves, j, &pops[j].model, &coupling[j]);
            let report = run_verification(&hjb, &ff, &final_curves[j], &pops[j].model, &cg, cfg)?;
            diag.nash = report.1;
            if let Some(n) = &diag.nash {
                log::info!(
                    "population {j}: nash probe over {} starts, max gap {:?}",
                    n.per_start.len(),
                    n.max_gap
                );
            }
            diag.verification = Some(report.0);
        }
        solutions.push(Solution {
            value: hjb,
            density: final_curves[j].clone(),
            control_grid: cg,
            diagnostics: diag,
            converged,
        });
    }
    Ok(solutions)
}

fn run_verification(
    hjb: &HjbSolution,
    ff: &FrozenFields,
    curve: &MeasureCurve,
    mp: &ModelParams,
    cg: &ControlGrid,
    cfg: &SolveConfig,
) -> Result<(VerificationReport, Option<NashGapReport>)> {
    let mass_ok = curve.max_mass_error() <= DensityField::MASS_TOL;
    let support_ok = curve
        .snapshots()
        .iter()
        .all(|s| support_radius(s, 1e-6) <= cfg.support_cap);
    let density_ok = curve.max_density() <= cfg.density_cap;
    let c2_finite = hjb.c2_hat().iter().all(|c| c.is_finite());

    let nash = if cfg.nash_starts > 0 {
        let starts = probe_starts(curve, cfg.nash_starts);
        let report = nash_gap_with_fields(
            hjb,
            ff,
            curve,
            mp,
            cg,
            &starts,
            &DeviationFamily::ConstantLattice {
                size: cfg.deviation_lattice,
            },
        )?;
        Some(report)
    } else {
        None
    };
    let nash_ok = nash.as_ref().map(|r| {
        r.per_start.iter().all(|s| match s.gap {
            Some(g) => g <= cfg.eps_nash_rel * s.cost_feedback.abs() + cfg.eps_nash_abs,
            None => true,
        })
    });
    Ok((
        VerificationReport {
            mass_ok,
            support_ok,
            density_ok,
            c2_finite,
            nash_ok,
        },
        nash,
    ))
}

/// Deterministic probe starts: particles of the initial cloud, strided so
/// the sample spreads across the support.
pub fn probe_starts(curve: &MeasureCurve, count: usize) -> Vec<[f64; 2]> {
    match curve.clouds() {
        Some(clouds) if !clouds.is_empty() => {
            let cloud = &clouds[0];
            let n = cloud.len();
            (0..count.min(n))
                .map(|i| cloud.positions()[i * n / count.min(n).max(1)])
                .collect()
        }
        _ => Vec::new(),
    }
}

/// Convenience for tests: seed a cloud and return its deposit, the solver's
/// working initial density.
pub fn working_initial_density(
    mu0: &DensityField,
    cfg: &SolveConfig,
) -> Result<(ParticleCloud, DensityField)> {
    let cloud = seed_cloud(mu0, cfg.n_particles, cfg.seed)?;
    let dep = deposit(&cloud, mu0.grid())?.with_physical_mass(mu0.m_tot());
    Ok((cloud, dep))
}
