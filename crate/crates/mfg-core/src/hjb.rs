//! Backward semi-Lagrangian solver for the frozen-curve HJB equation with
//! Hamiltonian `H(t,x,p) = |p|^2/2 - p.f - g`.
//!
//! Each step minimizes the one-step cost plus the interpolated future value
//! over a polar control grid, sharpened by one gradient-based candidate
//! (the analytic minimizer is `-D_x u` wherever the value is smooth).

use crate::error::{Error, Result};
use crate::field::{ScalarField2D, VectorField2D};
use crate::grid::{Grid2D, TimeGrid};
use crate::measure::MeasureCurve;
use crate::model::{FrozenFields, ModelParams};
use serde::Serialize;

/// Polar discretization of the control space plus the scheme's box-edge
/// penalty slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlGrid {
    /// Control magnitude cap.
    pub a_max: f64,
    /// Radial resolution.
    pub n_radial: usize,
    /// Angular resolution.
    pub n_angular: usize,
    /// Cost slope per unit distance for characteristic feet that leave the
    /// box (mimics coercive growth outside the region of interest).
    pub edge_penalty: f64,
}

impl ControlGrid {
    pub fn new(a_max: f64, n_radial: usize, n_angular: usize) -> Result<Self> {
        if !a_max.is_finite() || a_max <= 0.0 {
            return Err(Error::InvalidParameter("a_max must be > 0".into()));
        }
        if n_radial < 4 {
            return Err(Error::InvalidParameter("control grid needs n_radial >= 4".into()));
        }
        if n_angular < 8 {
            return Err(Error::InvalidParameter("control grid needs n_angular >= 8".into()));
        }
        Ok(Self {
            a_max,
            n_radial,
            n_angular,
            edge_penalty: a_max,
        })
    }

    pub fn with_edge_penalty(mut self, slope: f64) -> Self {
        self.edge_penalty = slope;
        self
    }

    /// Zero control followed by the polar rings, radius-major then
    /// angle-major; this ordering realizes the deterministic tie-break
    /// (smallest magnitude first, then smallest angle index).
    pub fn controls(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(1 + self.n_radial * self.n_angular);
        out.push([0.0, 0.0]);
        for ir in 1..=self.n_radial {
            let r = self.a_max * ir as f64 / self.n_radial as f64;
            for ia in 0..self.n_angular {
                let th = 2.0 * std::f64::consts::PI * ia as f64 / self.n_angular as f64;
                out.push([r * th.cos(), r * th.sin()]);
            }
        }
        out
    }

    /// Radial clamp to the magnitude cap.
    pub fn clamp(&self, a: [f64; 2]) -> [f64; 2] {
        let norm = a[0].hypot(a[1]);
        if norm <= self.a_max {
            a
        } else {
            let s = self.a_max / norm;
            [a[0] * s, a[1] * s]
        }
    }

    /// Gronwall-style data-driven cap for the optimal control magnitude:
    /// `2 (max|grad psi| + T max|grad g|) exp(T max|grad f|) + 1`, clamped to
    /// the step bound `L/4 >= dt (a_max + max|f|)` the scheme needs.
    ///
    /// The exponential makes the proxy wildly pessimistic for peaked
    /// interaction kernels; the clamp keeps the default usable (the true
    /// optimal controls of the crowd model are drift-scale, far below
    /// either bound). Explicit configuration overrides both.
    pub fn estimate_a_max(ff: &FrozenFields, grid: Grid2D, tg: TimeGrid) -> f64 {
        let grad_psi = gradient_field(&ff.terminal).max_norm();
        let grad_g = ff
            .run_cost
            .iter()
            .map(|g| gradient_field(g).max_norm())
            .fold(0.0, f64::max);
        let grad_f = ff
            .drift
            .iter()
            .map(jacobian_frobenius_max)
            .fold(0.0, f64::max);
        let t = tg.horizon();
        let gronwall = 2.0 * (grad_psi + t * grad_g) * (t * grad_f).exp() + 1.0;
        let cfl = grid.half_width() / (4.0 * tg.dt()) - ff.max_drift_norm();
        gronwall.min(cfl).max(1.0)
    }
}

/// The explicit Hamiltonian `|p|^2/2 - p.f - g`.
pub fn hamiltonian(p: [f64; 2], f: [f64; 2], g: f64) -> f64 {
    0.5 * (p[0] * p[0] + p[1] * p[1]) - (p[0] * f[0] + p[1] * f[1]) - g
}

/// Feedback synthesis: the minimizer of the Hamiltonian is `-p`, clamped
/// radially to the control cap.
pub fn optimal_control_from_gradient(p: [f64; 2], cg: &ControlGrid) -> [f64; 2] {
    cg.clamp([-p[0], -p[1]])
}

/// Spatial gradient by central differences, second-order one-sided at the
/// box edge. Exact on quadratics.
pub fn gradient_field(u: &ScalarField2D) -> VectorField2D {
    let grid = u.grid();
    let n = grid.n();
    let inv2h = 1.0 / (2.0 * grid.spacing());
    let mut data = vec![[0.0_f64; 2]; grid.len()];
    let d1 = |a: f64, b: f64| (b - a) * inv2h;
    let one_sided = |u0: f64, u1: f64, u2: f64| (-3.0 * u0 + 4.0 * u1 - u2) * inv2h;
    for j in 0..n {
        for i in 0..n {
            let gx = if i == 0 {
                one_sided(u.at(0, j), u.at(1, j), u.at(2, j))
            } else if i == n - 1 {
                -one_sided(u.at(n - 1, j), u.at(n - 2, j), u.at(n - 3, j))
            } else {
                d1(u.at(i - 1, j), u.at(i + 1, j))
            };
            let gy = if j == 0 {
                one_sided(u.at(i, 0), u.at(i, 1), u.at(i, 2))
            } else if j == n - 1 {
                -one_sided(u.at(i, n - 1), u.at(i, n - 2), u.at(i, n - 3))
            } else {
                d1(u.at(i, j - 1), u.at(i, j + 1))
            };
            data[grid.index(i, j)] = [gx, gy];
        }
    }
    VectorField2D::new(grid, data).expect("grid-sized buffer")
}

/// Largest Frobenius norm of the central-difference Jacobian of a vector
/// field (an upper bound for the operator norm).
pub fn jacobian_frobenius_max(f: &VectorField2D) -> f64 {
    let grid = f.grid();
    let n = grid.n();
    let inv2h = 1.0 / (2.0 * grid.spacing());
    let mut worst = 0.0_f64;
    for j in 1..n.saturating_sub(1) {
        for i in 1..n - 1 {
            let dx = [
                (f.at(i + 1, j)[0] - f.at(i - 1, j)[0]) * inv2h,
                (f.at(i + 1, j)[1] - f.at(i - 1, j)[1]) * inv2h,
            ];
            let dy = [
                (f.at(i, j + 1)[0] - f.at(i, j - 1)[0]) * inv2h,
                (f.at(i, j + 1)[1] - f.at(i, j - 1)[1]) * inv2h,
            ];
            let frob = (dx[0] * dx[0] + dx[1] * dx[1] + dy[0] * dy[0] + dy[1] * dy[1]).sqrt();
            worst = worst.max(frob);
        }
    }
    worst
}

/// Largest directional second difference over interior nodes: an empirical
/// semiconcavity constant (may be negative for concave slices).
pub fn semiconcavity_estimate(u: &ScalarField2D) -> f64 {
    semiconcavity_estimate_with_margin(u, 1)
}

/// Semiconcavity estimate over nodes at least `margin` cells from the box
/// edge. The solver excludes the boundary buffer layer (characteristic feet
/// clamp there and pay the edge penalty), which is an artifact of truncating
/// the plane and says nothing about the value function proper.
pub fn semiconcavity_estimate_with_margin(u: &ScalarField2D, margin: usize) -> f64 {
    let grid = u.grid();
    let n = grid.n();
    let margin = margin.max(1).min(n / 2 - 2);
    let h2 = grid.spacing() * grid.spacing();
    let mut worst = f64::NEG_INFINITY;
    for j in margin..n - margin {
        for i in margin..n - margin {
            let c = 2.0 * u.at(i, j);
            let ax = (u.at(i + 1, j) + u.at(i - 1, j) - c) / h2;
            let ay = (u.at(i, j + 1) + u.at(i, j - 1) - c) / h2;
            let d1 = (u.at(i + 1, j + 1) + u.at(i - 1, j - 1) - c) / (2.0 * h2);
            let d2 = (u.at(i + 1, j - 1) + u.at(i - 1, j + 1) - c) / (2.0 * h2);
            worst = worst.max(ax).max(ay).max(d1).max(d2);
        }
    }
    worst
}

/// Value lookup of the semi-Lagrangian step: bilinear interpolation plus a
/// minmod-limited curvature correction that removes the bilinear overshoot
/// on smooth value functions.
///
/// Plain bilinear interpolation overestimates a convex value function by
/// `(D2 u / 2) t (1-t) h^2` per axis inside every cell. That bias is
/// one-signed, accumulates over the backward sweep, and its cell-wrap kinks
/// wreck the second-difference (semiconcavity) diagnostics. Correcting with
/// the limited nodal second difference makes the lookup exact on quadratics
/// while the limiter drops the correction at kinks, where the scheme falls
/// back to plain (monotone) bilinear interpolation.
struct ValueLookup<'a> {
    field: &'a ScalarField2D,
    /// per-cell limited second differences, (n-1)^2 each
    cxx: Vec<f64>,
    cyy: Vec<f64>,
}

impl<'a> ValueLookup<'a> {
    fn new(field: &'a ScalarField2D) -> Self {
        let grid = field.grid();
        let n = grid.n();
        let h2 = grid.spacing() * grid.spacing();
        let d2 = |a: f64, b: f64, c: f64| (a - 2.0 * b + c) / h2;
        // nodal second differences, zero on the affected boundary bands
        let mut d2x = vec![0.0_f64; grid.len()];
        let mut d2y = vec![0.0_f64; grid.len()];
        for j in 0..n {
            for i in 0..n {
                let idx = grid.index(i, j);
                if i > 0 && i < n - 1 {
                    d2x[idx] = d2(field.at(i - 1, j), field.at(i, j), field.at(i + 1, j));
                }
                if j > 0 && j < n - 1 {
                    d2y[idx] = d2(field.at(i, j - 1), field.at(i, j), field.at(i, j + 1));
                }
            }
        }
        let minmod4 = |a: f64, b: f64, c: f64, d: f64| -> f64 {
            if a > 0.0 && b > 0.0 && c > 0.0 && d > 0.0 {
                a.min(b).min(c).min(d)
            } else if a < 0.0 && b < 0.0 && c < 0.0 && d < 0.0 {
                a.max(b).max(c).max(d)
            } else {
                0.0
            }
        };
        let side = n - 1;
        let mut cxx = vec![0.0_f64; side * side];
        let mut cyy = vec![0.0_f64; side * side];
        for jc in 0..side {
            for ic in 0..side {
                let c00 = grid.index(ic, jc);
                let c10 = grid.index(ic + 1, jc);
                let c01 = grid.index(ic, jc + 1);
                let c11 = grid.index(ic + 1, jc + 1);
                cxx[jc * side + ic] = minmod4(d2x[c00], d2x[c10], d2x[c01], d2x[c11]);
                cyy[jc * side + ic] = minmod4(d2y[c00], d2y[c10], d2y[c01], d2y[c11]);
            }
        }
        Self { field, cxx, cyy }
    }

    /// Corrected value at a point already inside the box.
    #[inline]
    fn eval(&self, p: [f64; 2]) -> f64 {
        let grid = self.field.grid();
        let (i0, tx) = grid.lower_cell_and_weight(p[0]);
        let (j0, ty) = grid.lower_cell_and_weight(p[1]);
        let n = grid.n();
        let base = j0 * n + i0;
        let data = self.field.data();
        let f00 = data[base];
        let f10 = data[base + 1];
        let f01 = data[base + n];
        let f11 = data[base + n + 1];
        let fx0 = f00 + tx * (f10 - f00);
        let fx1 = f01 + tx * (f11 - f01);
        let bilinear = fx0 + ty * (fx1 - fx0);
        let cell = j0 * (n - 1) + i0;
        let h2 = grid.spacing() * grid.spacing();
        bilinear
            - 0.5 * h2 * (self.cxx[cell] * tx * (1.0 - tx) + self.cyy[cell] * ty * (1.0 - ty))
    }
}

/// One backward semi-Lagrangian step: minimize the one-step cost plus the
/// interpolated future value over the control candidates.
///
/// Feet that leave the box are clamped back and charged
/// `edge_penalty * distance`. Candidates are scanned in tie-break order and
/// replaced only on strict improvement; the gradient refinement candidate is
/// tried last.
pub fn sl_step(
    u_next: &ScalarField2D,
    f_k: &VectorField2D,
    g_k: &ScalarField2D,
    dt: f64,
    cg: &ControlGrid,
    grid: Grid2D,
) -> Result<ScalarField2D> {
    let controls = cg.controls();
    sl_step_with_controls(u_next, f_k, g_k, dt, cg, &controls, grid)
}

pub(crate) fn sl_step_with_controls(
    u_next: &ScalarField2D,
    f_k: &VectorField2D,
    g_k: &ScalarField2D,
    dt: f64,
    cg: &ControlGrid,
    controls: &[[f64; 2]],
    grid: Grid2D,
) -> Result<ScalarField2D> {
    let n = grid.n();
    let l = grid.half_width();
    let grad_next = gradient_field(u_next);
    let lookup = ValueLookup::new(u_next);
    let half_sq: Vec<f64> = controls
        .iter()
        .map(|a| 0.5 * (a[0] * a[0] + a[1] * a[1]))
        .collect();
    let mut out = vec![0.0_f64; grid.len()];

    let eval = |x: [f64; 2], a: [f64; 2], f: [f64; 2], half: f64| -> f64 {
        let foot = [x[0] + dt * (a[0] + f[0]), x[1] + dt * (a[1] + f[1])];
        let fx = foot[0].clamp(-l, l);
        let fy = foot[1].clamp(-l, l);
        let overshoot = ((foot[0] - fx).powi(2) + (foot[1] - fy).powi(2)).sqrt();
        dt * half + lookup.eval([fx, fy]) + cg.edge_penalty * overshoot
    };

    for j in 0..n {
        for i in 0..n {
            let x = grid.cell_center(i, j);
            let f = f_k.at(i, j);
            let mut best = f64::INFINITY;
            for (a, &half) in controls.iter().zip(&half_sq) {
                let v = eval(x, *a, f, half);
                if v < best {
                    best = v;
                }
            }
            let g = grad_next.at(i, j);
            let refine = cg.clamp([-g[0], -g[1]]);
            let v = eval(x, refine, f, 0.5 * (refine[0] * refine[0] + refine[1] * refine[1]));
            if v < best {
                best = v;
            }
            out[grid.index(i, j)] = best + dt * g_k.at(i, j);
        }
    }
    let field = ScalarField2D::new(grid, out)?;
    if !field.is_finite() {
        return Err(Error::NonFinite("semi-Lagrangian step".into()));
    }
    Ok(field)
}

/// Value function, cached gradients, and per-slice semiconcavity estimates.
#[derive(Debug, Clone)]
pub struct HjbSolution {
    time: TimeGrid,
    values: Vec<ScalarField2D>,
    gradients: Vec<VectorField2D>,
    c2_hat: Vec<f64>,
}

impl HjbSolution {
    /// Rebuild a solution from stored value slices (gradients and
    /// semiconcavity estimates are recomputed; used when reloading saved
    /// artifacts).
    pub fn from_values(time: TimeGrid, values: Vec<ScalarField2D>) -> Result<Self> {
        if values.len() != time.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "{} value slices for {} time nodes",
                values.len(),
                time.n_nodes()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stored value slices".into()));
        }
        let gradients: Vec<VectorField2D> = values.iter().map(gradient_field).collect();
        let c2_hat: Vec<f64> = values.iter().map(semiconcavity_estimate).collect();
        Ok(Self {
            time,
            values,
            gradients,
            c2_hat,
        })
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn grid(&self) -> Grid2D {
        self.values[0].grid()
    }

    pub fn value(&self, k: usize) -> &ScalarField2D {
        &self.values[k]
    }

    pub fn values(&self) -> &[ScalarField2D] {
        &self.values
    }

    pub fn gradient(&self, k: usize) -> &VectorField2D {
        &self.gradients[k]
    }

    pub fn c2_hat(&self) -> &[f64] {
        &self.c2_hat
    }

    pub fn max_c2_hat(&self) -> f64 {
        self.c2_hat.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    /// Interpolated value `u(t_k, x)`.
    pub fn value_at(&self, k: usize, x: [f64; 2]) -> Result<f64> {
        self.values[k].interpolate(x)
    }
}

/// Solve the frozen-curve HJB equation backward from the terminal cost.
pub fn solve_hjb_backward(
    m: &MeasureCurve,
    mp: &ModelParams,
    cg: &ControlGrid,
) -> Result<HjbSolution> {
    let ff = FrozenFields::compute(m, mp);
    solve_hjb_with_fields(&ff, m.grid(), m.time(), cg)
}

/// Solver core against precomputed frozen fields.
pub fn solve_hjb_with_fields(
    ff: &FrozenFields,
    grid: Grid2D,
    tg: TimeGrid,
    cg: &ControlGrid,
) -> Result<HjbSolution> {
    let dt = tg.dt();
    let reach = dt * (cg.a_max + ff.max_drift_norm());
    if reach > grid.half_width() / 4.0 {
        return Err(Error::TimeStepTooLarge(reach, grid.half_width() / 4.0));
    }
    if !ff.terminal.is_finite() {
        return Err(Error::NonFinite("terminal cost".into()));
    }
    let controls = cg.controls();
    let n_nodes = tg.n_nodes();
    let mut values = vec![ff.terminal.clone()];
    for k in (0..tg.n_steps()).rev() {
        let next = values.last().unwrap();
        let slice = sl_step_with_controls(
            next,
            &ff.drift[k],
            &ff.run_cost[k],
            dt,
            cg,
            &controls,
            grid,
        )?;
        values.push(slice);
    }
    values.reverse();
    debug_assert_eq!(values.len(), n_nodes);
    let gradients: Vec<VectorField2D> = values.iter().map(gradient_field).collect();
    // skip the clamp-affected edge layer: foot reach plus the stencil band
    let margin = (reach / grid.spacing()).ceil() as usize + 3;
    let c2_hat: Vec<f64> = values
        .iter()
        .map(|u| semiconcavity_estimate_with_margin(u, margin))
        .collect();
    Ok(HjbSolution {
        time: tg,
        values,
        gradients,
        c2_hat,
    })
}
