//! Trajectory-level verification: optimal paths, realized costs, Pontryagin
//! adjoint residuals, and the approximate-Nash probe.
//!
//! Dynamics sample the same discrete fields the solvers use; costs evaluate
//! the model functions directly at the trajectory points, so the probe
//! measures the actual cost functional and not its grid projection.

use crate::error::{Error, Result};
use crate::field::{ScalarField2D, VectorField2D};
use crate::grid::TimeGrid;
use crate::hjb::{gradient_field, ControlGrid, HjbSolution};
use crate::measure::MeasureCurve;
use crate::model::{running_cost, terminal_cost, FrozenFields, ModelParams};
use crate::transport::FlowVelocitySampler;
use serde::Serialize;

/// A simulated path with its recorded feedback controls and realized cost.
#[derive(Debug, Clone)]
pub struct Trajectory {
    start_index: usize,
    states: Vec<[f64; 2]>,
    controls: Vec<[f64; 2]>,
    /// Control applied at each step's RK2 midpoint; lets an open-loop replay
    /// reproduce the path exactly.
    mid_controls: Vec<[f64; 2]>,
    cost: f64,
}

impl Trajectory {
    pub fn start_index(&self) -> usize {
        self.start_index
    }

    /// States at nodes `t_k`, `k = start_index ..= n_steps`.
    pub fn states(&self) -> &[[f64; 2]] {
        &self.states
    }

    /// Clamped feedback controls recorded at the same nodes.
    pub fn controls(&self) -> &[[f64; 2]] {
        &self.controls
    }

    /// Clamped midpoint controls, one per step.
    pub fn mid_controls(&self) -> &[[f64; 2]] {
        &self.mid_controls
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn final_state(&self) -> [f64; 2] {
        *self.states.last().unwrap()
    }
}

/// Simulate the feedback trajectory `dy/dt = -D_x u + f` from `x0` at node
/// `t0`, recording `alpha(t_k) = -D_x u(t_k, y(t_k))` clamped to the cap.
pub fn simulate_trajectory(
    hjb: &HjbSolution,
    m: &MeasureCurve,
    mp: &ModelParams,
    cg: &ControlGrid,
    t0: usize,
    x0: [f64; 2],
) -> Result<Trajectory> {
    let ff = FrozenFields::compute(m, mp);
    simulate_with_fields(hjb, &ff, m, mp, cg, t0, x0)
}

pub fn simulate_with_fields(
    hjb: &HjbSolution,
    ff: &FrozenFields,
    m: &MeasureCurve,
    mp: &ModelParams,
    cg: &ControlGrid,
    t0: usize,
    x0: [f64; 2],
) -> Result<Trajectory> {
    let grid = hjb.grid();
    let tg = hjb.time();
    if !grid.contains(x0) {
        return Err(Error::OutOfDomain {
            x: x0[0],
            y: x0[1],
            half_width: grid.half_width(),
            context: "trajectory start".into(),
        });
    }
    let dt = tg.dt();
    let feedback = |k: usize, y: [f64; 2]| -> [f64; 2] {
        let g = hjb.gradient(k).interpolate_clamped(y);
        cg.clamp([-g[0], -g[1]])
    };
    let mut states = vec![x0];
    let mut controls = vec![feedback(t0, x0)];
    let mut mid_controls = Vec::with_capacity(tg.n_steps() - t0);
    let mut y = x0;
    for k in t0..tg.n_steps() {
        // same stepping as transport::advect, with the midpoint control
        // recorded on the side
        let sampler = FlowVelocitySampler::new(hjb.gradient(k), &ff.drift[k]);
        let ctx = format!("trajectory step {k}");
        let k1 = sampler.velocity_at(y)?;
        let xm = grid.clamp_with_tolerance([y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]], &ctx)?;
        mid_controls.push(feedback(k, xm));
        let k2 = sampler.velocity_at(xm)?;
        y = [y[0] + dt * k2[0], y[1] + dt * k2[1]];
        if !grid.contains(y) {
            return Err(Error::OutOfDomain {
                x: y[0],
                y: y[1],
                half_width: grid.half_width(),
                context: ctx,
            });
        }
        states.push(y);
        controls.push(feedback(k + 1, y));
    }
    let mut traj = Trajectory {
        start_index: t0,
        states,
        controls,
        mid_controls,
        cost: 0.0,
    };
    traj.cost = evaluate_cost(&traj, m, mp);
    Ok(traj)
}

/// Trapezoidal quadrature of the cost functional along a trajectory:
/// integral of `|alpha|^2/2 + l[m](y)` plus the terminal cost.
pub fn evaluate_cost(traj: &Trajectory, m: &MeasureCurve, mp: &ModelParams) -> f64 {
    let tg = m.time();
    let dt = tg.dt();
    let n = traj.states.len();
    let mut acc = 0.0;
    for i in 0..n {
        let k = traj.start_index + i;
        let a = traj.controls[i];
        let y = traj.states[i];
        let stage = 0.5 * (a[0] * a[0] + a[1] * a[1]) + running_cost(m.snapshot(k), y, &mp.cost);
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += w * stage * dt;
    }
    acc + terminal_cost(m.snapshot(tg.n_steps()), traj.final_state(), &mp.cost)
}

/// Discrete residuals of the Pontryagin adjoint system along a trajectory:
/// the L^2 defect of `alpha' = D_x g - alpha . D_x f` over interior nodes
/// (derivatives by central differences of the discrete fields) and the
/// terminal defect `|alpha(T) + grad psi(y(T))|`.
pub fn pontryagin_residual(
    traj: &Trajectory,
    m: &MeasureCurve,
    mp: &ModelParams,
) -> Result<(f64, f64)> {
    let ff = FrozenFields::compute(m, mp);
    pontryagin_with_fields(traj, &ff, m.time())
}

pub fn pontryagin_with_fields(
    traj: &Trajectory,
    ff: &FrozenFields,
    tg: TimeGrid,
) -> Result<(f64, f64)> {
    let n = traj.states.len();
    if n < 3 {
        return Err(Error::TooShort(n.saturating_sub(1), 2));
    }
    let dt = tg.dt();
    let grid = ff.terminal.grid();
    let has_drift = ff.max_drift_norm() > 0.0;

    let mut sq = 0.0;
    for i in 1..n - 1 {
        let k = traj.start_index + i;
        let y = grid.clamp_with_tolerance(traj.states[i], "adjoint residual")?;
        let a = traj.controls[i];
        let dadt = [
            (traj.controls[i + 1][0] - traj.controls[i - 1][0]) / (2.0 * dt),
            (traj.controls[i + 1][1] - traj.controls[i - 1][1]) / (2.0 * dt),
        ];
        let grad_g = gradient_field(&ff.run_cost[k]).interpolate_clamped(y);
        let mut rhs = grad_g;
        if has_drift {
            let (fx, fy) = split_components(&ff.drift[k]);
            // (alpha . D_x f)_j = alpha_x d(f_x)/dx_j + alpha_y d(f_y)/dx_j
            let gfx = gradient_field(&fx).interpolate_clamped(y);
            let gfy = gradient_field(&fy).interpolate_clamped(y);
            rhs[0] -= a[0] * gfx[0] + a[1] * gfy[0];
            rhs[1] -= a[0] * gfx[1] + a[1] * gfy[1];
        }
        let rx = dadt[0] - rhs[0];
        let ry = dadt[1] - rhs[1];
        sq += (rx * rx + ry * ry) * dt;
    }
    let ode_residual = sq.sqrt();

    let y_t = grid.clamp_with_tolerance(traj.final_state(), "terminal residual")?;
    let grad_psi = gradient_field(&ff.terminal).interpolate_clamped(y_t);
    let a_t = traj.controls[n - 1];
    let terminal_residual = (a_t[0] + grad_psi[0]).hypot(a_t[1] + grad_psi[1]);
    Ok((ode_residual, terminal_residual))
}

fn split_components(f: &VectorField2D) -> (ScalarField2D, ScalarField2D) {
    let grid = f.grid();
    let fx: Vec<f64> = f.data().iter().map(|v| v[0]).collect();
    let fy: Vec<f64> = f.data().iter().map(|v| v[1]).collect();
    (
        ScalarField2D::new(grid, fx).expect("same grid"),
        ScalarField2D::new(grid, fy).expect("same grid"),
    )
}

/// Open-loop deviation strategies for the Nash probe.
#[derive(Debug, Clone)]
pub enum DeviationFamily {
    /// Constant controls on a `size x size` lattice over `[-a_max, a_max]^2`.
    ConstantLattice { size: usize },
    /// Explicit list of constant controls.
    Constants(Vec<[f64; 2]>),
    /// Piecewise-constant controls with `switches` equispaced switch times,
    /// each segment drawn from a `size x size` lattice.
    PiecewiseLattice { size: usize, switches: usize },
    /// The trajectory's own recorded control sequence replayed open-loop
    /// (self-comparison; the gap should vanish to quadrature tolerance).
    ReplayFeedback,
}

/// Gap statistics for one start.
#[derive(Debug, Clone, Serialize)]
pub struct StartGap {
    pub start: [f64; 2],
    pub cost_feedback: f64,
    /// Best deviation cost, when at least one deviation stayed in the box.
    pub best_deviation: Option<f64>,
    /// `cost_feedback - best_deviation`; positive means a deviation wins.
    pub gap: Option<f64>,
}

/// Aggregate Nash-gap report.
#[derive(Debug, Clone, Serialize)]
pub struct NashGapReport {
    pub per_start: Vec<StartGap>,
    pub max_gap: Option<f64>,
    pub mean_gap: Option<f64>,
    pub n_deviations: usize,
    pub skipped_deviations: usize,
    pub note: Option<String>,
}

/// Evaluate how much any deviation from the feedback strategy improves the
/// cost, start by start, against the frozen measure curve.
pub fn nash_gap(
    hjb: &HjbSolution,
    m: &MeasureCurve,
    mp: &ModelParams,
    cg: &ControlGrid,
    starts: &[[f64; 2]],
    family: &DeviationFamily,
) -> Result<NashGapReport> {
    let ff = FrozenFields::compute(m, mp);
    nash_gap_with_fields(hjb, &ff, m, mp, cg, starts, family)
}

pub fn nash_gap_with_fields(
    hjb: &HjbSolution,
    ff: &FrozenFields,
    m: &MeasureCurve,
    mp: &ModelParams,
    cg: &ControlGrid,
    starts: &[[f64; 2]],
    family: &DeviationFamily,
) -> Result<NashGapReport> {
    let tg = m.time();
    let constant_plans = match family {
        DeviationFamily::ConstantLattice { size } => lattice_controls(cg.a_max, *size)
            .into_iter()
            .map(|a| vec![a])
            .collect::<Vec<_>>(),
        DeviationFamily::Constants(list) => list.iter().map(|a| vec![*a]).collect(),
        DeviationFamily::PiecewiseLattice { size, switches } => {
            piecewise_plans(cg.a_max, *size, *switches)
        }
        DeviationFamily::ReplayFeedback => Vec::new(),
    };
    let replay = matches!(family, DeviationFamily::ReplayFeedback);
    let n_deviations = if replay { 1 } else { constant_plans.len() };

    let mut per_start = Vec::with_capacity(starts.len());
    let mut skipped_total = 0;
    for &x0 in starts {
        let traj = simulate_with_fields(hjb, ff, m, mp, cg, 0, x0)?;
        let c_fb = traj.cost();
        let mut best: Option<f64> = None;
        let mut skipped = 0;
        if replay {
            let nodes = traj.controls().to_vec();
            let mids = traj.mid_controls().to_vec();
            match open_loop_cost(&nodes, &mids, ff, m, mp, tg, x0) {
                Some(c) => best = Some(c),
                None => skipped += 1,
            }
        } else {
            for plan in &constant_plans {
                let (nodes, mids) = plan_controls(plan, tg);
                match open_loop_cost(&nodes, &mids, ff, m, mp, tg, x0) {
                    Some(c) => best = Some(best.map_or(c, |b: f64| b.min(c))),
                    None => skipped += 1,
                }
            }
        }
        skipped_total += skipped;
        per_start.push(StartGap {
            start: x0,
            cost_feedback: c_fb,
            best_deviation: best,
            gap: best.map(|b| c_fb - b),
        });
    }
    let gaps: Vec<f64> = per_start.iter().filter_map(|s| s.gap).collect();
    let note = if n_deviations == 0 {
        Some("no deviations tested".to_string())
    } else {
        None
    };
    Ok(NashGapReport {
        max_gap: gaps.iter().copied().fold(None, |m: Option<f64>, g| {
            Some(m.map_or(g, |v| v.max(g)))
        }),
        mean_gap: if gaps.is_empty() {
            None
        } else {
            Some(gaps.iter().sum::<f64>() / gaps.len() as f64)
        },
        per_start,
        n_deviations,
        skipped_deviations: skipped_total,
        note,
    })
}

fn lattice_controls(a_max: f64, size: usize) -> Vec<[f64; 2]> {
    let size = size.max(1);
    let mut out = Vec::with_capacity(size * size);
    for jy in 0..size {
        for jx in 0..size {
            let frac = |j: usize| {
                if size == 1 {
                    0.0
                } else {
                    -1.0 + 2.0 * j as f64 / (size - 1) as f64
                }
            };
            out.push([a_max * frac(jx), a_max * frac(jy)]);
        }
    }
    out
}

fn piecewise_plans(a_max: f64, size: usize, switches: usize) -> Vec<Vec<[f64; 2]>> {
    let base = lattice_controls(a_max, size);
    let segments = switches + 1;
    let mut plans: Vec<Vec<[f64; 2]>> = vec![Vec::new()];
    for _ in 0..segments {
        let mut next = Vec::with_capacity(plans.len() * base.len());
        for plan in &plans {
            for &a in &base {
                let mut p = plan.clone();
                p.push(a);
                next.push(p);
            }
        }
        plans = next;
    }
    plans
}

/// Node and midpoint control sequences of a piecewise-constant plan with
/// equispaced segments.
fn plan_controls(plan: &[[f64; 2]], tg: TimeGrid) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let n_nodes = tg.n_nodes();
    let segments = plan.len();
    let at = |t_frac: f64| -> [f64; 2] {
        let seg = ((t_frac * segments as f64).floor() as usize).min(segments - 1);
        plan[seg]
    };
    let nodes = (0..n_nodes)
        .map(|k| at(k as f64 / tg.n_steps() as f64))
        .collect();
    let mids = (0..tg.n_steps())
        .map(|k| at((k as f64 + 0.5) / tg.n_steps() as f64))
        .collect();
    (nodes, mids)
}

/// Cost of an open-loop control (node values plus per-step midpoint values)
/// integrated against the frozen drift with the same stepping as the
/// feedback path; `None` if the path leaves the box (the deviation is
/// infeasible at this resolution and cannot improve anything).
fn open_loop_cost(
    node_controls: &[[f64; 2]],
    mid_controls: &[[f64; 2]],
    ff: &FrozenFields,
    m: &MeasureCurve,
    mp: &ModelParams,
    tg: TimeGrid,
    x0: [f64; 2],
) -> Option<f64> {
    let grid = ff.terminal.grid();
    let dt = tg.dt();
    let mut y = x0;
    let mut states = vec![x0];
    for k in 0..tg.n_steps() {
        let a_k = node_controls[k];
        let f_k = ff.drift[k].interpolate(y).ok()?;
        let k1 = [a_k[0] + f_k[0], a_k[1] + f_k[1]];
        let xm = grid
            .clamp_with_tolerance([y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]], "deviation")
            .ok()?;
        let fm = ff.drift[k].interpolate_clamped(xm);
        let a_m = mid_controls[k];
        let k2 = [a_m[0] + fm[0], a_m[1] + fm[1]];
        y = [y[0] + dt * k2[0], y[1] + dt * k2[1]];
        if !grid.contains(y) {
            return None;
        }
        states.push(y);
    }
    let mut acc = 0.0;
    let n = states.len();
    for (i, (y_i, a)) in states.iter().zip(node_controls).enumerate() {
        let stage =
            0.5 * (a[0] * a[0] + a[1] * a[1]) + running_cost(m.snapshot(i), *y_i, &mp.cost);
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += w * stage * dt;
    }
    Some(acc + terminal_cost(m.snapshot(tg.n_steps()), states[n - 1], &mp.cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid2D, TimeGrid};
    use crate::hjb::solve_hjb_with_fields;
    use crate::measure::DensityField;
    use crate::model::{CostParams, KernelParams, TerminalShape};

    fn grid() -> Grid2D {
        Grid2D::new(2.0, 32).unwrap()
    }

    fn decoupled_model(c_term: f64, eps: f64) -> ModelParams {
        ModelParams {
            kernel: KernelParams {
                kappa: 0.0,
                radius: 0.5,
                inner_radius: 0.1,
                moll_width: 0.05,
            },
            cost: CostParams {
                eps_run: eps,
                c_cong: 0.0,
                sigma_cong: 0.2,
                terminal: TerminalShape::Quadratic,
                target: [0.0, 0.0],
                c_term,
                c_cong_term: 0.0,
            },
            m_tot: 1.0,
        }
    }

    fn uniform_curve(g: Grid2D, tg: TimeGrid) -> MeasureCurve {
        let d = DensityField::from_profile(g, 1.0, |p| {
            if p[0].abs() <= 1.0 && p[1].abs() <= 1.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        MeasureCurve::frozen(tg, d)
    }

    #[test]
    fn constant_costs_give_stationary_trajectory() {
        let g = grid();
        let tg = TimeGrid::new(1.0, 20).unwrap();
        let m = uniform_curve(g, tg);
        let mp = decoupled_model(0.0, 0.1); // c_term = 0: constant terminal cost
        let cg = ControlGrid::new(2.0, 4, 8).unwrap();
        let ff = FrozenFields::compute(&m, &mp);
        let hjb = solve_hjb_with_fields(&ff, g, tg, &cg).unwrap();
        let traj = simulate_with_fields(&hjb, &ff, &m, &mp, &cg, 0, [0.5, -0.3]).unwrap();
        for (y, a) in traj.states().iter().zip(traj.controls()) {
            assert_eq!(*y, [0.5, -0.3]);
            assert_eq!(*a, [0.0, 0.0]);
        }
        // alpha = 0, l = 0.1, h = 0 -> cost = 0.1 exactly
        assert!((traj.cost() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mirror_symmetric_starts() {
        let g = grid();
        let tg = TimeGrid::new(1.0, 40).unwrap();
        let m = uniform_curve(g, tg);
        let mp = decoupled_model(1.0, 0.1);
        let cg = ControlGrid::new(6.0, 6, 12).unwrap();
        let ff = FrozenFields::compute(&m, &mp);
        let hjb = solve_hjb_with_fields(&ff, g, tg, &cg).unwrap();
        let a = simulate_with_fields(&hjb, &ff, &m, &mp, &cg, 0, [0.6, 0.25]).unwrap();
        let b = simulate_with_fields(&hjb, &ff, &m, &mp, &cg, 0, [-0.6, 0.25]).unwrap();
        for (p, q) in a.states().iter().zip(b.states()) {
            assert!((p[0] + q[0]).abs() < 1e-9, "{} vs {}", p[0], q[0]);
            assert!((p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn recorded_controls_match_gradient_bitwise() {
        let g = grid();
        let tg = TimeGrid::new(1.0, 20).unwrap();
        let m = uniform_curve(g, tg);
        let mp = decoupled_model(1.0, 0.1);
        let cg = ControlGrid::new(8.0, 4, 8).unwrap();
        let ff = FrozenFields::compute(&m, &mp);
        let hjb = solve_hjb_with_fields(&ff, g, tg, &cg).unwrap();
        let traj = simulate_with_fields(&hjb, &ff, &m, &mp, &cg, 0, [0.8, 0.4]).unwrap();
        for (i, (y, a)) in traj.states().iter().zip(traj.controls()).enumerate() {
            let grad = hjb.gradient(i).interpolate_clamped(*y);
            let expect = cg.clamp([-grad[0], -grad[1]]);
            assert_eq!(*a, expect, "node {i}");
        }
    }

    #[test]
    fn cost_of_synthetic_constant_control() {
        // alpha = (1,0) on [0,1], l = 1, h = 0 -> cost 1.5 exactly
        let g = grid();
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let m = uniform_curve(g, tg);
        let mp = decoupled_model(0.0, 1.0);
        let n = tg.n_nodes();
        let traj = Trajectory {
            start_index: 0,
            states: vec![[0.0, 0.0]; n],
            controls: vec![[1.0, 0.0]; n],
            mid_controls: vec![[1.0, 0.0]; n - 1],
            cost: 0.0,
        };
        let c = evaluate_cost(&traj, &m, &mp);
        assert!((c - 1.5).abs() < 1e-12, "cost {c}");
    }

    #[test]
    fn adjoint_residual_for_affine_terminal() {
        // f = 0, g constant, psi affine: alpha is constant and the adjoint
        // system is satisfied to rounding
        let g = grid();
        let tg = TimeGrid::new(1.0, 20).unwrap();
        let p = [0.7, -0.2];
        let ff = FrozenFields {
            drift: vec![VectorField2D::zeros(g); tg.n_nodes()],
            run_cost: vec![ScalarField2D::constant(g, 0.3); tg.n_nodes()],
            terminal: ScalarField2D::from_fn(g, |x| p[0] * x[0] + p[1] * x[1]),
        };
        // optimal control is -grad psi = -p; trajectory drifts linearly
        let x0 = [0.5, 0.5];
        let n = tg.n_nodes();
        let states: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let t = tg.node(k);
                [x0[0] - p[0] * t, x0[1] - p[1] * t]
            })
            .collect();
        let traj = Trajectory {
            start_index: 0,
            states,
            controls: vec![[-p[0], -p[1]]; n],
            mid_controls: vec![[-p[0], -p[1]]; n - 1],
            cost: 0.0,
        };
        let (ode, term) = pontryagin_with_fields(&traj, &ff, tg).unwrap();
        assert!(ode <= 1e-10, "ode residual {ode}");
        assert!(term <= 1e-10, "terminal residual {term}");
    }

    #[test]
    fn too_short_trajectory_rejected() {
        let g = grid();
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let ff = FrozenFields {
            drift: vec![VectorField2D::zeros(g); tg.n_nodes()],
            run_cost: vec![ScalarField2D::constant(g, 0.1); tg.n_nodes()],
            terminal: ScalarField2D::constant(g, 0.0),
        };
        let traj = Trajectory {
            start_index: 0,
            states: vec![[0.0, 0.0]; 2],
            controls: vec![[0.0, 0.0]; 2],
            mid_controls: vec![[0.0, 0.0]; 1],
            cost: 0.0,
        };
        assert!(matches!(
            pontryagin_with_fields(&traj, &ff, tg),
            Err(Error::TooShort(..))
        ));
    }

    #[test]
    fn empty_deviation_family_is_reported() {
        let g = grid();
        let tg = TimeGrid::new(1.0, 10).unwrap();
        let m = uniform_curve(g, tg);
        let mp = decoupled_model(1.0, 0.1);
        let cg = ControlGrid::new(4.0, 4, 8).unwrap();
        let ff = FrozenFields::compute(&m, &mp);
        let hjb = solve_hjb_with_fields(&ff, g, tg, &cg).unwrap();
        let report = nash_gap_with_fields(
            &hjb,
            &ff,
            &m,
            &mp,
            &cg,
            &[[0.2, 0.1]],
            &DeviationFamily::Constants(vec![]),
        )
        .unwrap();
        assert_eq!(report.n_deviations, 0);
        assert!(report.max_gap.is_none());
        assert_eq!(report.note.as_deref(), Some("no deviations tested"));
    }

    #[test]
    fn lattice_has_expected_shape() {
        let c = lattice_controls(4.0, 3);
        assert_eq!(c.len(), 9);
        assert!(c.contains(&[0.0, 0.0]));
        assert!(c.contains(&[-4.0, -4.0]));
        assert!(c.contains(&[4.0, 0.0]));
        let plans = piecewise_plans(2.0, 2, 1);
        assert_eq!(plans.len(), 16); // (2x2)^2 two-segment plans
        assert!(plans.iter().all(|p| p.len() == 2));
    }
}
