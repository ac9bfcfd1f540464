//! Concrete crowd model: mollified repulsion kernel, non-local interaction
//! velocity, and congestion-aware running/terminal costs.
//!
//! The repulsion `-kappa * xi / |xi|^2` is cut off below the body radius
//! `r_o` and mollified to vanish beyond the interaction radius `R`; both
//! transitions use quintic smoothsteps, so the kernel is C^2 everywhere and
//! Lipschitz in the measure argument (the running cost keeps a strictly
//! positive floor for the same reason: both are what the existence theory
//! asks of the data).

use crate::error::{Error, Result};
use crate::field::{ScalarField2D, VectorField2D};
use crate::grid::Grid2D;
use crate::measure::{DensityField, MeasureCurve};
use serde::Serialize;

/// Parameters of the pairwise repulsion kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelParams {
    /// Repulsion strength `kappa` (length^2/time per unit mass).
    pub kappa: f64,
    /// Interaction radius `R`; the kernel vanishes beyond it.
    pub radius: f64,
    /// Inner cutoff radius `r_o` (pedestrian body scale).
    pub inner_radius: f64,
    /// Width of the smoothstep transition at the outer edge.
    pub moll_width: f64,
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::InvalidParameter("kernel kappa must be >= 0".into()));
        }
        if !self.inner_radius.is_finite()
            || self.inner_radius <= 0.0
            || self.inner_radius >= self.radius
        {
            return Err(Error::InvalidParameter(
                "kernel radii must satisfy 0 < r_o < R".into(),
            ));
        }
        if !self.moll_width.is_finite()
            || self.moll_width <= 0.0
            || self.moll_width >= self.inner_radius
        {
            return Err(Error::InvalidParameter(
                "mollifier width must satisfy 0 < w < r_o".into(),
            ));
        }
        Ok(())
    }
}

/// Terminal cost shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TerminalShape {
    /// `c_T * |x - x_T|^2 / 2`; unbounded on the plane but exact for the
    /// linear-quadratic benchmark.
    Quadratic,
    /// `c_T * (sqrt(1 + |x - x_T|^2) - 1)`; bounded gradient, the default.
    SoftTarget,
}

/// Running and terminal cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostParams {
    /// Strictly positive floor of the running cost.
    pub eps_run: f64,
    /// Congestion weight on the smoothed density.
    pub c_cong: f64,
    /// Congestion smoothing width (Gaussian, truncated at 3 sigma).
    pub sigma_cong: f64,
    /// Terminal cost shape.
    pub terminal: TerminalShape,
    /// Target point.
    pub target: [f64; 2],
    /// Terminal cost weight.
    pub c_term: f64,
    /// Optional congestion term in the terminal cost.
    pub c_cong_term: f64,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !self.eps_run.is_finite() || self.eps_run <= 0.0 {
            return Err(Error::InvalidParameter(
                "eps_run must be > 0 (positive running cost floor)".into(),
            ));
        }
        if !self.sigma_cong.is_finite() || self.sigma_cong <= 0.0 {
            return Err(Error::InvalidParameter("sigma_cong must be > 0".into()));
        }
        if self.c_cong.is_nan() || self.c_cong < 0.0 || self.c_cong_term.is_nan() || self.c_cong_term < 0.0 {
            return Err(Error::InvalidParameter(
                "congestion weights must be >= 0".into(),
            ));
        }
        if !self.c_term.is_finite() || self.c_term < 0.0 {
            return Err(Error::InvalidParameter("c_term must be >= 0".into()));
        }
        if !self.target[0].is_finite() || !self.target[1].is_finite() {
            return Err(Error::InvalidParameter("target must be finite".into()));
        }
        Ok(())
    }
}

/// Full model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub kernel: KernelParams,
    pub cost: CostParams,
    /// Physical crowd size carried through to outputs (persons).
    pub m_tot: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.cost.validate()?;
        if !self.m_tot.is_finite() || self.m_tot <= 0.0 {
            return Err(Error::InvalidParameter("total mass must be > 0".into()));
        }
        Ok(())
    }
}

/// Quintic smoothstep: 0 at 0, 1 at 1, with two vanishing derivatives at
/// both ends; clamped outside [0, 1].
#[inline]
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Mollified repulsion kernel `eta_R(|xi|) * F_cut(xi)`.
///
/// `F_cut` equals `-kappa xi / |xi|^2` for `|xi| >= r_o` and decays to zero
/// below `r_o` through a squared smoothstep, which keeps the field C^2 at the
/// origin. Odd by construction.
pub fn kernel_f(xi: [f64; 2], kp: &KernelParams) -> [f64; 2] {
    let r2 = xi[0] * xi[0] + xi[1] * xi[1];
    if r2 == 0.0 {
        return [0.0, 0.0];
    }
    let r = r2.sqrt();
    if r >= kp.radius {
        return [0.0, 0.0];
    }
    let outer_edge = kp.radius - kp.moll_width;
    let eta = if r <= outer_edge {
        1.0
    } else {
        smoothstep((kp.radius - r) / kp.moll_width)
    };
    let inner = if r >= kp.inner_radius {
        1.0
    } else {
        let s = smoothstep(r / kp.inner_radius);
        s * s
    };
    let scale = -kp.kappa * inner * eta / r2;
    [scale * xi[0], scale * xi[1]]
}

/// Stencil radius in cells for a kernel with physical reach `reach`.
fn stencil_radius(reach: f64, h: f64) -> usize {
    (reach / h).ceil() as usize + 1
}

/// Index window of half-width `rad` around the node nearest to `x`,
/// intersected with the grid.
fn window_1d(grid: Grid2D, x: f64, rad: usize) -> (usize, usize) {
    let n = grid.n() as i64;
    let i0 = (grid.cell_coord(x) + 0.5).floor() as i64;
    let lo = (i0 - rad as i64).clamp(0, n - 1) as usize;
    let hi = (i0 + rad as i64).clamp(0, n - 1) as usize;
    (lo, hi)
}

/// Interaction velocity at a point: midpoint quadrature of the kernel
/// against the cell masses within reach.
pub fn interaction_velocity(rho: &DensityField, x: [f64; 2], kp: &KernelParams) -> [f64; 2] {
    if kp.kappa == 0.0 {
        return [0.0, 0.0];
    }
    let grid = rho.grid();
    let h = grid.spacing();
    let rad = stencil_radius(kp.radius + h, h) - 1; // = ceil((R + h)/h)
    let (i_lo, i_hi) = window_1d(grid, x[0], rad);
    let (j_lo, j_hi) = window_1d(grid, x[1], rad);
    let mut acc = [0.0_f64; 2];
    for j in j_lo..=j_hi {
        for i in i_lo..=i_hi {
            let m = rho.mass_at(i, j);
            if m == 0.0 {
                continue;
            }
            let c = grid.cell_center(i, j);
            let k = kernel_f([c[0] - x[0], c[1] - x[1]], kp);
            acc[0] += m * k[0];
            acc[1] += m * k[1];
        }
    }
    acc
}

/// Precomputed kernel stencil: values of a radial kernel at integer cell
/// offsets, used to evaluate non-local fields as truncated convolutions.
struct Stencil<T> {
    rad: usize,
    values: Vec<T>,
}

impl<T: Copy + Default> Stencil<T> {
    fn build(rad: usize, h: f64, mut k: impl FnMut([f64; 2]) -> T) -> Self {
        let side = 2 * rad + 1;
        let mut values = vec![T::default(); side * side];
        for dj in -(rad as i64)..=rad as i64 {
            for di in -(rad as i64)..=rad as i64 {
                let idx = (dj + rad as i64) as usize * side + (di + rad as i64) as usize;
                values[idx] = k([di as f64 * h, dj as f64 * h]);
            }
        }
        Self { rad, values }
    }

    #[inline]
    fn at(&self, di: i64, dj: i64) -> T {
        let side = 2 * self.rad + 1;
        self.values[(dj + self.rad as i64) as usize * side + (di + self.rad as i64) as usize]
    }
}

/// Interaction velocity evaluated at every node: truncated discrete
/// convolution with a precomputed kernel stencil.
pub fn interaction_field(rho: &DensityField, kp: &KernelParams) -> VectorField2D {
    let grid = rho.grid();
    if kp.kappa == 0.0 {
        return VectorField2D::zeros(grid);
    }
    let h = grid.spacing();
    let rad = stencil_radius(kp.radius + h, h) - 1;
    let stencil = Stencil::build(rad, h, |xi| kernel_f(xi, kp));
    let n = grid.n() as i64;
    let mut data = vec![[0.0_f64; 2]; grid.len()];
    for j in 0..n {
        for i in 0..n {
            let j_lo = (j - rad as i64).max(0);
            let j_hi = (j + rad as i64).min(n - 1);
            let i_lo = (i - rad as i64).max(0);
            let i_hi = (i + rad as i64).min(n - 1);
            let mut acc = [0.0_f64; 2];
            for jj in j_lo..=j_hi {
                for ii in i_lo..=i_hi {
                    let m = rho.mass_at(ii as usize, jj as usize);
                    if m == 0.0 {
                        continue;
                    }
                    let k = stencil.at(ii - i, jj - j);
                    acc[0] += m * k[0];
                    acc[1] += m * k[1];
                }
            }
            data[(j * n + i) as usize] = acc;
        }
    }
    VectorField2D::new(grid, data).expect("grid-sized buffer")
}

/// Truncated normalized Gaussian used by the congestion costs: support
/// `|x| <= 3 sigma`, renormalized so its integral over the disc is 1.
#[derive(Debug, Clone, Copy)]
pub struct CongestionKernel {
    sigma: f64,
    peak: f64,
}

impl CongestionKernel {
    pub fn new(sigma: f64) -> Self {
        let norm = 2.0 * std::f64::consts::PI * sigma * sigma * (1.0 - (-4.5_f64).exp());
        Self {
            sigma,
            peak: 1.0 / norm,
        }
    }

    /// Kernel value at displacement `xi`.
    pub fn eval(&self, xi: [f64; 2]) -> f64 {
        let r2 = xi[0] * xi[0] + xi[1] * xi[1];
        let cut = 3.0 * self.sigma;
        if r2 > cut * cut {
            return 0.0;
        }
        self.peak * (-r2 / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Peak value (at zero displacement).
    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn reach(&self) -> f64 {
        3.0 * self.sigma
    }
}

/// Smoothed density `(G_sigma * rho)(x)` by midpoint quadrature.
pub fn smoothed_density(rho: &DensityField, x: [f64; 2], sigma: f64) -> f64 {
    let kernel = CongestionKernel::new(sigma);
    let grid = rho.grid();
    let h = grid.spacing();
    let rad = stencil_radius(kernel.reach(), h);
    let (i_lo, i_hi) = window_1d(grid, x[0], rad);
    let (j_lo, j_hi) = window_1d(grid, x[1], rad);
    let mut acc = 0.0;
    for j in j_lo..=j_hi {
        for i in i_lo..=i_hi {
            let m = rho.mass_at(i, j);
            if m == 0.0 {
                continue;
            }
            let c = grid.cell_center(i, j);
            acc += m * kernel.eval([c[0] - x[0], c[1] - x[1]]);
        }
    }
    acc
}

/// Running cost `eps + c_cong * (G_sigma * rho)(x)`; never below `eps`.
pub fn running_cost(rho: &DensityField, x: [f64; 2], cp: &CostParams) -> f64 {
    if cp.c_cong == 0.0 {
        return cp.eps_run;
    }
    cp.eps_run + cp.c_cong * smoothed_density(rho, x, cp.sigma_cong)
}

/// Running cost at every node (stencil convolution).
pub fn running_cost_field(rho: &DensityField, cp: &CostParams) -> ScalarField2D {
    let grid = rho.grid();
    if cp.c_cong == 0.0 {
        return ScalarField2D::constant(grid, cp.eps_run);
    }
    let kernel = CongestionKernel::new(cp.sigma_cong);
    let smoothed = convolve_scalar(rho, &kernel);
    let mut field = smoothed;
    for v in field.data_mut() {
        *v = cp.eps_run + cp.c_cong * *v;
    }
    field
}

fn convolve_scalar(rho: &DensityField, kernel: &CongestionKernel) -> ScalarField2D {
    let grid = rho.grid();
    let h = grid.spacing();
    let rad = stencil_radius(kernel.reach(), h);
    let stencil = Stencil::build(rad, h, |xi| kernel.eval(xi));
    let n = grid.n() as i64;
    let mut data = vec![0.0_f64; grid.len()];
    for j in 0..n {
        for i in 0..n {
            let j_lo = (j - rad as i64).max(0);
            let j_hi = (j + rad as i64).min(n - 1);
            let i_lo = (i - rad as i64).max(0);
            let i_hi = (i + rad as i64).min(n - 1);
            let mut acc = 0.0;
            for jj in j_lo..=j_hi {
                for ii in i_lo..=i_hi {
                    let m = rho.mass_at(ii as usize, jj as usize);
                    if m == 0.0 {
                        continue;
                    }
                    acc += m * stencil.at(ii - i, jj - j);
                }
            }
            data[(j * n + i) as usize] = acc;
        }
    }
    ScalarField2D::new(grid, data).expect("grid-sized buffer")
}

/// Terminal cost shape term at a point (no congestion part).
fn terminal_shape(x: [f64; 2], cp: &CostParams) -> f64 {
    let dx = x[0] - cp.target[0];
    let dy = x[1] - cp.target[1];
    let d2 = dx * dx + dy * dy;
    match cp.terminal {
        TerminalShape::Quadratic => cp.c_term * 0.5 * d2,
        TerminalShape::SoftTarget => cp.c_term * ((1.0 + d2).sqrt() - 1.0),
    }
}

/// Terminal cost `h[rho_T](x)`.
pub fn terminal_cost(rho_t: &DensityField, x: [f64; 2], cp: &CostParams) -> f64 {
    let mut v = terminal_shape(x, cp);
    if cp.c_cong_term > 0.0 {
        v += cp.c_cong_term * smoothed_density(rho_t, x, cp.sigma_cong);
    }
    v
}

/// Terminal cost at every node.
pub fn terminal_cost_field(rho_t: &DensityField, cp: &CostParams) -> ScalarField2D {
    let grid = rho_t.grid();
    let mut field = ScalarField2D::from_fn(grid, |p| terminal_shape(p, cp));
    if cp.c_cong_term > 0.0 {
        let kernel = CongestionKernel::new(cp.sigma_cong);
        let smoothed = convolve_scalar(rho_t, &kernel);
        for (v, s) in field.data_mut().iter_mut().zip(smoothed.data()) {
            *v += cp.c_cong_term * s;
        }
    }
    field
}

/// The frozen-curve data of the control problem: drift `f(t_k, .)`, running
/// cost `g(t_k, .)`, and terminal cost `psi`, all evaluated against a fixed
/// measure curve.
#[derive(Debug, Clone)]
pub struct FrozenFields {
    pub drift: Vec<VectorField2D>,
    pub run_cost: Vec<ScalarField2D>,
    pub terminal: ScalarField2D,
}

impl FrozenFields {
    /// Realize the model against a frozen curve.
    pub fn compute(m: &MeasureCurve, mp: &ModelParams) -> Self {
        let n_nodes = m.time().n_nodes();
        let mut drift = Vec::with_capacity(n_nodes);
        let mut run_cost = Vec::with_capacity(n_nodes);
        for k in 0..n_nodes {
            drift.push(interaction_field(m.snapshot(k), &mp.kernel));
            run_cost.push(running_cost_field(m.snapshot(k), &mp.cost));
        }
        let terminal = terminal_cost_field(m.snapshot(n_nodes - 1), &mp.cost);
        Self {
            drift,
            run_cost,
            terminal,
        }
    }

    /// Multi-population drift: each population k contributes the interaction
    /// field of its curve with the cross-coupling strength `kappa_jk`; costs
    /// come from the population's own curve.
    pub fn compute_coupled(
        curves: &[MeasureCurve],
        own: usize,
        mp: &ModelParams,
        coupling_row: &[f64],
    ) -> Self {
        let m = &curves[own];
        let n_nodes = m.time().n_nodes();
        let grid = m.grid();
        let mut drift = Vec::with_capacity(n_nodes);
        for k in 0..n_nodes {
            let mut total = VectorField2D::zeros(grid);
            for (other, &kappa) in curves.iter().zip(coupling_row) {
                if kappa == 0.0 {
                    continue;
                }
                let kp = KernelParams {
                    kappa,
                    ..mp.kernel
                };
                let part = interaction_field(other.snapshot(k), &kp);
                for (t, p) in total.data_mut().iter_mut().zip(part.data()) {
                    t[0] += p[0];
                    t[1] += p[1];
                }
            }
            drift.push(total);
        }
        let mut run_cost = Vec::with_capacity(n_nodes);
        for k in 0..n_nodes {
            run_cost.push(running_cost_field(m.snapshot(k), &mp.cost));
        }
        let terminal = terminal_cost_field(m.snapshot(n_nodes - 1), &mp.cost);
        Self {
            drift,
            run_cost,
            terminal,
        }
    }

    /// Largest drift magnitude over all time nodes.
    pub fn max_drift_norm(&self) -> f64 {
        self.drift.iter().map(|f| f.max_norm()).fold(0.0, f64::max)
    }
}
