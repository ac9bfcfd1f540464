//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them).
//!
//! The linear-quadratic configuration admits closed forms (value
//! u(t,x) = |x|^2 / (2(1+T-t)) + eps (T-t), characteristics
//! x(s) = x0 (1+T-s)/(1+T), Riccati semiconcavity 1/(1+T-t)), so every
//! tolerance below is pinned against an analytic oracle; the coupled run is
//! checked against the qualitative regularity and equilibrium properties.

use mfg_core::*;
use std::sync::OnceLock;
use std::time::Instant;

mod tolerances {
    /// Criterion 1: max relative value error over probes |x| <= 1.
    pub const LQ_VALUE_REL: f64 = 0.02;
    /// Criterion 1: single-threaded wall-clock budget for the LQ solve.
    pub const LQ_RUNTIME_S: f64 = 60.0;
    /// Criterion 2: second-moment relative error at the probe times.
    pub const LQ_MOMENT_REL: f64 = 0.02;
    /// Criterion 2: landing distance of the (1,0) particle from (0.5,0),
    /// 1% of the target displacement.
    pub const LQ_LANDING: f64 = 0.005;
    /// Criterion 3: mass conservation per snapshot.
    pub const MASS: f64 = 1e-12;
    /// Criterion 4: decoupled residual at iteration 2.
    pub const DECOUPLED_RESIDUAL: f64 = 1e-12;
    /// Criterion 5: assignment solver vs brute force, and the lower-bound
    /// slack of the sliced estimator.
    pub const W1_ORACLE: f64 = 1e-9;
    /// Criterion 6: terminal adjoint defect at n_t = 100.
    pub const PMP_TERMINAL: f64 = 0.05;
    /// Criterion 6: residual decay band under h, dt halving.
    pub const PMP_RATIO: (f64, f64) = (1.6, 2.4);
    /// Criterion 7: Nash probe band: gap <= rel |C_fb| + abs.
    pub const NASH_REL: f64 = 0.05;
    pub const NASH_ABS: f64 = 0.05;
    /// Criterion 7: coupled run wall-clock budget.
    pub const COUPLED_RUNTIME_S: f64 = 600.0;
    /// Criterion 8: LQ semiconcavity match to 1/(1+T-t).
    pub const LQ_C2: f64 = 5e-3;
    /// Criterion 9: mirror asymmetry per snapshot (sliced W1).
    pub const MIRROR_W1: f64 = 5e-3;
}

fn lq_model() -> ModelParams {
    ModelParams {
        kernel: KernelParams {
            kappa: 0.0,
            radius: 0.5,
            inner_radius: 0.2,
            moll_width: 0.1,
        },
        cost: CostParams {
            eps_run: 0.1,
            c_cong: 0.0,
            sigma_cong: 0.3,
            terminal: TerminalShape::Quadratic,
            target: [0.0, 0.0],
            c_term: 1.0,
            c_cong_term: 0.0,
        },
        m_tot: 1.0,
    }
}

fn lq_mu0(grid: Grid2D) -> DensityField {
    DensityField::from_profile(grid, 1.0, |p| {
        if p[0].abs() <= 1.0 && p[1].abs() <= 1.0 {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

fn u_exact(t: f64, x: [f64; 2]) -> f64 {
    (x[0] * x[0] + x[1] * x[1]) / (2.0 * (2.0 - t)) + 0.1 * (1.0 - t)
}

struct LqRun {
    solution: Solution,
    time: TimeGrid,
    wall_s: f64,
}

fn lq_run() -> &'static LqRun {
    static RUN: OnceLock<LqRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let grid = Grid2D::new(3.0, 128).unwrap();
        let time = TimeGrid::new(1.0, 100).unwrap();
        let cfg = SolveConfig {
            n_particles: 40_000,
            seed: 1,
            verify: false,
            nash_starts: 0,
            ..SolveConfig::default()
        };
        let t0 = Instant::now();
        let solution = picard_solve(&lq_model(), &lq_mu0(grid), time, None, &cfg).unwrap();
        LqRun {
            solution,
            time,
            wall_s: t0.elapsed().as_secs_f64(),
        }
    })
}

fn coupled_model() -> ModelParams {
    ModelParams {
        kernel: KernelParams {
            kappa: 0.5,
            radius: 0.5,
            inner_radius: 0.2,
            moll_width: 0.1,
        },
        cost: CostParams {
            eps_run: 0.1,
            c_cong: 0.5,
            sigma_cong: 0.5,
            terminal: TerminalShape::SoftTarget,
            target: [0.6, 0.0],
            c_term: 0.6,
            c_cong_term: 0.5,
        },
        m_tot: 100.0,
    }
}

fn blob(grid: Grid2D, center: [f64; 2]) -> DensityField {
    let sigma = 0.5_f64;
    DensityField::from_profile(grid, 100.0, |p| {
        let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
        if d2 <= (3.0 * sigma) * (3.0 * sigma) {
            (-d2 / (2.0 * sigma * sigma)).exp()
        } else {
            0.0
        }
    })
    .unwrap()
}

fn coupled_config() -> SolveConfig {
    SolveConfig {
        theta: 0.5,
        tol_fp: 5e-3,
        max_iter: 40,
        n_particles: 40_000,
        seed: 1,
        support_cap: 2.4,
        density_cap: 6.0,
        eps_nash_rel: tolerances::NASH_REL,
        eps_nash_abs: tolerances::NASH_ABS,
        verify: true,
        n_dirs: 64,
        nash_starts: 20,
        deviation_lattice: 9,
    }
}

struct CoupledRun {
    solution: Solution,
    wall_s: f64,
}

fn coupled_run() -> &'static CoupledRun {
    static RUN: OnceLock<CoupledRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let grid = Grid2D::new(3.0, 96).unwrap();
        let time = TimeGrid::new(1.0, 80).unwrap();
        let cg = ControlGrid::new(6.0, 6, 12).unwrap();
        let t0 = Instant::now();
        let solution = picard_solve(
            &coupled_model(),
            &blob(grid, [-0.6, 0.0]),
            time,
            Some(cg),
            &coupled_config(),
        )
        .unwrap();
        CoupledRun {
            solution,
            wall_s: t0.elapsed().as_secs_f64(),
        }
    })
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_01_lq_value_benchmark() {
    let run = lq_run();
    let mut worst = 0.0_f64;
    let probes = 21;
    for jy in 0..probes {
        for jx in 0..probes {
            let x = [
                -1.0 + 2.0 * jx as f64 / (probes - 1) as f64,
                -1.0 + 2.0 * jy as f64 / (probes - 1) as f64,
            ];
            if x[0].hypot(x[1]) > 1.0 {
                continue;
            }
            let got = run.solution.value.value_at(0, x).unwrap();
            worst = worst.max((got - u_exact(0.0, x)).abs() / u_exact(0.0, x));
        }
    }
    let in_budget = run.wall_s <= tolerances::LQ_RUNTIME_S;
    report(
        "1 (LQ value)",
        worst <= tolerances::LQ_VALUE_REL && in_budget,
        &format!(
            "max relative error {worst:.4} <= {}, solve {:.1}s <= {}s",
            tolerances::LQ_VALUE_REL,
            run.wall_s,
            tolerances::LQ_RUNTIME_S
        ),
    );
}

#[test]
fn criterion_02_lq_transport_benchmark() {
    let run = lq_run();
    let m0 = run.solution.density.snapshot(0).second_moment();
    let mut worst = 0.0_f64;
    for k in [25usize, 50, 75, 100] {
        let s = run.time.node(k);
        let expect = ((2.0 - s) / 2.0).powi(2);
        let got = run.solution.density.snapshot(k).second_moment() / m0;
        worst = worst.max((got - expect).abs() / expect);
    }
    let traj = simulate_trajectory(
        &run.solution.value,
        &run.solution.density,
        &lq_model(),
        &run.solution.control_grid,
        0,
        [1.0, 0.0],
    )
    .unwrap();
    let y = traj.final_state();
    let landing = ((y[0] - 0.5).powi(2) + y[1].powi(2)).sqrt();
    report(
        "2 (LQ transport)",
        worst <= tolerances::LQ_MOMENT_REL && landing <= tolerances::LQ_LANDING,
        &format!(
            "second-moment rel err {worst:.4} <= {}, landing {landing:.4} <= {}",
            tolerances::LQ_MOMENT_REL,
            tolerances::LQ_LANDING
        ),
    );
}

#[test]
fn criterion_03_mass_conservation() {
    let lq = lq_run();
    let coupled = coupled_run();
    let mut worst = 0.0_f64;
    for run_mass in [
        lq.solution.density.max_mass_error(),
        lq.solution.diagnostics.max_mass_error(),
        coupled.solution.density.max_mass_error(),
        coupled.solution.diagnostics.max_mass_error(),
    ] {
        worst = worst.max(run_mass);
    }
    report(
        "3 (mass conservation)",
        worst <= tolerances::MASS,
        &format!("max |sum(mass) - 1| = {worst:.3e} <= {:.0e}", tolerances::MASS),
    );
}

#[test]
fn criterion_04_decoupled_fixed_point() {
    let run = lq_run();
    let residuals = &run.solution.diagnostics.residuals;
    let pass = run.solution.converged
        && residuals.len() >= 2
        && residuals[1] <= tolerances::DECOUPLED_RESIDUAL;
    report(
        "4 (decoupled fixed point)",
        pass,
        &format!(
            "converged = {}, residual at iteration 2 = {:.3e}",
            run.solution.converged,
            residuals.get(1).copied().unwrap_or(f64::NAN)
        ),
    );
}

#[test]
fn criterion_05_w1_oracle_equivalence() {
    fn brute_force(a: &AtomSet, b: &AtomSet) -> f64 {
        fn recurse(a: &[[f64; 2]], b: &[[f64; 2]], used: &mut Vec<bool>, i: usize) -> f64 {
            if i == a.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..b.len() {
                if used[j] {
                    continue;
                }
                used[j] = true;
                let dx = a[i][0] - b[j][0];
                let dy = a[i][1] - b[j][1];
                let c = dx.hypot(dy) + recurse(a, b, used, i + 1);
                used[j] = false;
                best = best.min(c);
            }
            best
        }
        let mut used = vec![false; b.len()];
        recurse(a.points(), b.points(), &mut used, 0) / a.len() as f64
    }

    let mut rng = rng::SplitMix64::new(20_240_501);
    let sample = |n: usize, rng: &mut rng::SplitMix64| {
        AtomSet::new(
            (0..n)
                .map(|_| [rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)])
                .collect(),
        )
        .unwrap()
    };
    let mut worst_solver = 0.0_f64;
    let mut worst_bound = f64::NEG_INFINITY;
    let mut worst_sym = 0.0_f64;
    let mut worst_tri = f64::NEG_INFINITY;
    for _ in 0..200 {
        let n = 1 + (rng.next_u64() % 6) as usize;
        let a = sample(n, &mut rng);
        let b = sample(n, &mut rng);
        let c = sample(n, &mut rng);
        let dab = w1_exact_small(&a, &b).unwrap();
        worst_solver = worst_solver.max((dab - brute_force(&a, &b)).abs());
        worst_sym = worst_sym.max((dab - w1_exact_small(&b, &a).unwrap()).abs());
        let dac = w1_exact_small(&a, &c).unwrap();
        let dcb = w1_exact_small(&c, &b).unwrap();
        worst_tri = worst_tri.max(dab - (dac + dcb));
        assert_eq!(w1_exact_small(&a, &a).unwrap(), 0.0);
        let sliced = w1_sliced_atoms(&a, &b, 16).unwrap();
        worst_bound = worst_bound.max(sliced - dab);
    }
    let pass = worst_solver <= tolerances::W1_ORACLE
        && worst_bound <= tolerances::W1_ORACLE
        && worst_sym <= 1e-12
        && worst_tri <= 1e-9;
    report(
        "5 (W1 oracle equivalence)",
        pass,
        &format!(
            "200 instances: |solver - brute force| <= {worst_solver:.2e}, sliced - exact <= {worst_bound:.2e}, symmetry {worst_sym:.2e}, triangle excess {worst_tri:.2e}"
        ),
    );
}

/// Adjoint residuals for the decoupled LQ config at a given resolution; the
/// value solve is enough (costs do not depend on the curve).
fn lq_adjoint(n: usize, n_t: usize) -> (f64, f64) {
    let grid = Grid2D::new(3.0, n).unwrap();
    let tg = TimeGrid::new(1.0, n_t).unwrap();
    let mp = lq_model();
    let m = MeasureCurve::frozen(tg, lq_mu0(grid));
    let ff = FrozenFields::compute(&m, &mp);
    let cg = ControlGrid::new(9.42, 6, 12).unwrap();
    let sol = solve_hjb_with_fields(&ff, grid, tg, &cg).unwrap();
    let traj = simulate_trajectory(&sol, &m, &mp, &cg, 0, [1.0, 0.0]).unwrap();
    pontryagin_residual(&traj, &m, &mp).unwrap()
}

#[test]
fn criterion_06_pontryagin_consistency() {
    let (ode_coarse, terminal) = lq_adjoint(128, 100);
    let (ode_fine, _) = lq_adjoint(256, 200);
    let ratio = ode_coarse / ode_fine;
    let (lo, hi) = tolerances::PMP_RATIO;
    let pass = terminal <= tolerances::PMP_TERMINAL && ratio >= lo && ratio <= hi;
    report(
        "6 (Pontryagin consistency)",
        pass,
        &format!(
            "terminal residual {terminal:.3e} <= {}, halving ratio {ratio:.3} in [{lo}, {hi}]",
            tolerances::PMP_TERMINAL
        ),
    );
}

#[test]
fn criterion_07_approximate_nash_probe() {
    let run = coupled_run();
    let nash = run
        .solution
        .diagnostics
        .nash
        .as_ref()
        .expect("nash probe enabled");
    assert_eq!(nash.per_start.len(), 20, "20 seeded starts");
    let mut worst_excess = f64::NEG_INFINITY;
    for s in &nash.per_start {
        if let Some(gap) = s.gap {
            worst_excess = worst_excess.max(
                gap - (tolerances::NASH_REL * s.cost_feedback.abs() + tolerances::NASH_ABS),
            );
        }
    }
    let pass = run.solution.converged
        && worst_excess <= 0.0
        && run.wall_s <= tolerances::COUPLED_RUNTIME_S;
    report(
        "7 (approximate Nash probe)",
        pass,
        &format!(
            "converged = {}, worst gap excess over 5%|C_fb|+0.05 band = {worst_excess:.3e}, run {:.0}s <= {}s",
            run.solution.converged,
            run.wall_s,
            tolerances::COUPLED_RUNTIME_S
        ),
    );
}

#[test]
fn criterion_08_qualitative_regularity() {
    let coupled = coupled_run();
    let cfg = coupled_config();
    let d = &coupled.solution.diagnostics;
    let support_ok = d.max_support_radius() <= cfg.support_cap && !d.support_cap_exceeded;
    let density_ok = d
        .max_densities
        .iter()
        .all(|&v| v <= cfg.density_cap)
        && !d.density_cap_exceeded;
    let c2_finite = d.c2_hat.iter().all(|c| c.is_finite())
        && coupled.solution.value.c2_hat().iter().all(|c| c.is_finite());

    // LQ semiconcavity across refinement: both resolutions must match the
    // Riccati profile and stay within a factor 2 of each other slice-wise
    let fine = lq_run();
    let coarse = {
        let grid = Grid2D::new(3.0, 64).unwrap();
        let tg = TimeGrid::new(1.0, 100).unwrap();
        let m = MeasureCurve::frozen(tg, lq_mu0(grid));
        let ff = FrozenFields::compute(&m, &lq_model());
        let cg = ControlGrid::new(9.42, 6, 12).unwrap();
        solve_hjb_with_fields(&ff, grid, tg, &cg).unwrap()
    };
    let mut worst_c2 = 0.0_f64;
    let mut worst_factor = 1.0_f64;
    for k in 0..=100 {
        let expect = 1.0 / (2.0 - fine.time.node(k));
        let f = fine.solution.value.c2_hat()[k];
        let c = coarse.c2_hat()[k];
        worst_c2 = worst_c2.max((f - expect).abs()).max((c - expect).abs());
        let ratio = (f / c).max(c / f);
        worst_factor = worst_factor.max(ratio);
    }
    let pass = support_ok
        && density_ok
        && c2_finite
        && worst_c2 <= tolerances::LQ_C2
        && worst_factor <= 2.0;
    report(
        "8 (Theorem-1 qualitative checks)",
        pass,
        &format!(
            "support max {:.3} <= {}, density max {:.3} <= {}, C2 finite = {c2_finite}, LQ C2 error {worst_c2:.2e} <= {:.0e}, refinement factor {worst_factor:.3} <= 2",
            d.max_support_radius(),
            cfg.support_cap,
            d.max_densities.iter().copied().fold(0.0_f64, f64::max),
            cfg.density_cap,
            tolerances::LQ_C2
        ),
    );
}

#[test]
fn criterion_09_multi_population() {
    // decoupled M = 2 must equal two single-population runs bitwise
    let grid = Grid2D::new(3.0, 64).unwrap();
    let tg = TimeGrid::new(1.0, 40).unwrap();
    let cfg = SolveConfig {
        n_particles: 5_000,
        verify: false,
        nash_starts: 0,
        ..SolveConfig::default()
    };
    let mk = |target: [f64; 2]| ModelParams {
        cost: CostParams {
            target,
            ..lq_model().cost
        },
        ..lq_model()
    };
    let m1 = mk([0.5, 0.0]);
    let m2 = mk([-0.5, 0.25]);
    let mu1 = blob(grid, [-0.5, 0.0]).with_physical_mass(1.0);
    let mu2 = blob(grid, [0.5, -0.25]).with_physical_mass(1.0);
    let single1 = picard_solve(&m1, &mu1, tg, None, &cfg).unwrap();
    let single2 = picard_solve(&m2, &mu2, tg, None, &cfg).unwrap();
    let multi = solve_multi(
        &[
            Population {
                model: m1,
                mu0: mu1,
                control: None,
            },
            Population {
                model: m2,
                mu0: mu2,
                control: None,
            },
        ],
        &[vec![0.0, 0.0], vec![0.0, 0.0]],
        tg,
        &cfg,
    )
    .unwrap();
    let mut bitwise = true;
    for (single, joint) in [(&single1, &multi[0]), (&single2, &multi[1])] {
        for k in 0..=tg.n_steps() {
            bitwise &= single.density.snapshot(k).mass() == joint.density.snapshot(k).mass();
            bitwise &= single.value.value(k).data() == joint.value.value(k).data();
        }
    }

    // mirror-symmetric M = 2: densities are reflections of each other
    let grid = Grid2D::new(3.0, 96).unwrap();
    let tg = TimeGrid::new(1.0, 80).unwrap();
    let cfg = coupled_config();
    let cg = ControlGrid::new(6.0, 6, 12).unwrap();
    let pops = [
        Population {
            model: coupled_model(),
            mu0: blob(grid, [-0.6, 0.0]),
            control: Some(cg),
        },
        Population {
            model: ModelParams {
                cost: CostParams {
                    target: [-0.6, 0.0],
                    ..coupled_model().cost
                },
                ..coupled_model()
            },
            mu0: blob(grid, [0.6, 0.0]),
            control: Some(cg),
        },
    ];
    let coupling = vec![vec![0.5, 0.3], vec![0.3, 0.5]];
    let sols = solve_multi(&pops, &coupling, tg, &cfg).unwrap();
    let n = grid.n();
    let mut worst_mirror = 0.0_f64;
    for k in 0..=tg.n_steps() {
        let pop2 = sols[1].density.snapshot(k);
        let mut mirrored = vec![0.0; grid.len()];
        for j in 0..n {
            for i in 0..n {
                mirrored[grid.index(i, j)] = pop2.mass_at(n - 1 - i, j);
            }
        }
        let mirrored = DensityField::new(grid, mirrored, pop2.m_tot()).unwrap();
        let d = w1_sliced_fields(sols[0].density.snapshot(k), &mirrored, 64).unwrap();
        worst_mirror = worst_mirror.max(d);
    }
    let pass = bitwise && sols[0].converged && worst_mirror <= tolerances::MIRROR_W1;
    report(
        "9 (multi-population)",
        pass,
        &format!(
            "decoupled M=2 bitwise = {bitwise}, mirror asymmetry {worst_mirror:.3e} <= {:.0e}",
            tolerances::MIRROR_W1
        ),
    );
}
