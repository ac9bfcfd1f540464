//! Command-line front end: config parsing, run orchestration, and bit-stable
//! artifact emission.
//!
//! Exit codes: 0 success, 1 configuration error, 2 fixed-point iteration did
//! not converge (artifacts are still written), 3 numerical failure.

mod artifacts;
mod config;

use clap::{Parser, Subcommand};
use config::{parse_config, RunConfig};
use mfg_core::{
    picard_solve, simulate_trajectory, solve_multi, ControlGrid, CostParams, DensityField,
    FrozenFields, Grid2D, HjbSolution, KernelParams, MeasureCurve, ModelParams, Population,
    Solution, SolveConfig, TerminalShape, TimeGrid, Trajectory,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_NO_CONVERGENCE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "mfg", version, about = "First-order mean field game solver for crowd dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    /// Configuration file (flat `key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, default_value = "mfg-out")]
    output: PathBuf,
    /// Override the config's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker count; recorded in the summary. Execution is sequential, so
    /// artifacts are identical for every value.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single-population game.
    Solve(RunArgs),
    /// Solve a coupled multi-population game.
    SolveMulti(RunArgs),
    /// Run the linear-quadratic benchmark and print an error table.
    ValidateLq {
        /// Cells per axis.
        #[arg(long, default_value_t = 128)]
        n: usize,
        /// Time steps.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Transported particle count.
        #[arg(long, default_value_t = 40_000)]
        particles: usize,
    },
    /// Sliced W1 distance between two density CSV files.
    W1 {
        file_a: PathBuf,
        file_b: PathBuf,
        /// Projection direction count.
        #[arg(long, default_value_t = 64)]
        dirs: usize,
    },
    /// Re-simulate optimal trajectories from saved solve artifacts.
    Trajectories(RunArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MFG_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve(args) => run_solve(&args, false),
        Command::SolveMulti(args) => run_solve(&args, true),
        Command::ValidateLq { n, steps, particles } => run_validate_lq(n, steps, particles),
        Command::W1 { file_a, file_b, dirs } => run_w1(&file_a, &file_b, dirs),
        Command::Trajectories(args) => run_trajectories(&args),
    };
    ExitCode::from(code)
}

fn load_config(args: &RunArgs) -> Result<(RunConfig, usize), u8> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        eprintln!("error: cannot read config {}: {e}", args.config.display());
        EXIT_CONFIG
    })?;
    let mut cfg = parse_config(&text).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    if let Some(seed) = args.seed {
        cfg.solve.seed = seed;
        cfg.effective.insert("solve.seed".into(), seed.to_string());
    }
    let threads = match args.threads {
        Some(0) => {
            eprintln!("error: --threads must be >= 1");
            return Err(EXIT_CONFIG);
        }
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |p| p.get()),
    };
    Ok((cfg, threads))
}

fn numerical_exit(e: &mfg_core::Error) -> u8 {
    eprintln!("error: {e}");
    EXIT_NUMERICAL
}

fn pop_prefix(multi: bool, j: usize) -> String {
    if multi {
        format!("pop{}_", j + 1)
    } else {
        String::new()
    }
}

fn run_solve(args: &RunArgs, multi: bool) -> u8 {
    let (cfg, threads) = match load_config(args) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if !multi && cfg.populations.len() != 1 {
        eprintln!(
            "error: `solve` handles one population (config has {}); use `solve-multi`",
            cfg.populations.len()
        );
        return EXIT_CONFIG;
    }
    if let Err(e) = std::fs::create_dir_all(&args.output) {
        eprintln!("error: cannot create {}: {e}", args.output.display());
        return EXIT_CONFIG;
    }
    let echo = args.output.join("effective_config");
    if let Err(e) = artifacts::write_effective_config(&echo, &cfg.effective, cfg.solve.seed, threads)
    {
        eprintln!("error: cannot write {}: {e}", echo.display());
        return EXIT_CONFIG;
    }

    let t0 = Instant::now();
    let solutions = match solve_from_config(&cfg) {
        Ok(s) => s,
        Err(e) => return numerical_exit(&e),
    };
    let wall = t0.elapsed().as_secs_f64();
    log::info!(
        "solve finished in {wall:.1}s, converged = {}",
        solutions.iter().all(|s| s.converged)
    );

    // trajectories from the converged pair, per population
    let mut traj_costs: Vec<Vec<f64>> = Vec::new();
    let mut traj_rows: Vec<(usize, Trajectory)> = Vec::new();
    if !cfg.trajectory_starts.is_empty() {
        for (j, sol) in solutions.iter().enumerate() {
            let mut costs = Vec::new();
            for (s, start) in cfg.trajectory_starts.iter().enumerate() {
                match simulate_trajectory(
                    &sol.value,
                    &sol.density,
                    &cfg.populations[j].model,
                    &sol.control_grid,
                    0,
                    *start,
                ) {
                    Ok(traj) => {
                        costs.push(traj.cost());
                        traj_rows.push((j * cfg.trajectory_starts.len() + s, traj));
                    }
                    Err(e) => return numerical_exit(&e),
                }
            }
            traj_costs.push(costs);
        }
    }

    if let Err(e) = write_all_artifacts(&args.output, &cfg, &solutions, multi, &traj_rows, wall) {
        eprintln!("error: cannot write artifacts: {e}");
        return EXIT_NUMERICAL;
    }

    let summary = artifacts::build_summary(
        if multi { "solve-multi" } else { "solve" },
        &solutions,
        cfg.solve.seed,
        threads,
        &traj_costs,
    );
    if let Err(e) = artifacts::write_summary(&args.output.join("summary.json"), &summary) {
        eprintln!("error: cannot write summary: {e}");
        return EXIT_NUMERICAL;
    }

    if solutions.iter().all(|s| s.converged) {
        EXIT_OK
    } else {
        eprintln!(
            "warning: fixed-point iteration did not reach tolerance {} (final residual {}); artifacts written",
            cfg.solve.tol_fp,
            solutions[0].diagnostics.final_residual()
        );
        EXIT_NO_CONVERGENCE
    }
}

fn solve_from_config(cfg: &RunConfig) -> mfg_core::Result<Vec<Solution>> {
    let mut pops = Vec::with_capacity(cfg.populations.len());
    for (j, pc) in cfg.populations.iter().enumerate() {
        let mu0 = cfg
            .initial_density(j)
            .map_err(|e| mfg_core::Error::InvalidParameter(e.to_string()))?;
        pops.push(Population {
            model: pc.model,
            mu0,
            control: cfg.control,
        });
    }
    solve_multi(&pops, &cfg.coupling, cfg.time, &cfg.solve)
}

fn write_all_artifacts(
    out: &Path,
    cfg: &RunConfig,
    solutions: &[Solution],
    multi: bool,
    traj_rows: &[(usize, Trajectory)],
    wall: f64,
) -> std::io::Result<()> {
    let n_t = cfg.time.n_steps();
    for (j, sol) in solutions.iter().enumerate() {
        let prefix = pop_prefix(multi, j);
        let mut ks: Vec<usize> = (0..=n_t).step_by(cfg.snapshot_stride).collect();
        if *ks.last().unwrap() != n_t {
            ks.push(n_t);
        }
        for &k in &ks {
            artifacts::write_density_csv(
                &out.join(format!("{prefix}density_{k:04}.csv")),
                sol.density.snapshot(k),
            )?;
            artifacts::write_value_csv(
                &out.join(format!("{prefix}value_{k:04}.csv")),
                sol.value.value(k),
            )?;
        }
        artifacts::write_convergence_csv(
            &out.join(format!("{prefix}convergence.csv")),
            &(j + 1).to_string(),
            &sol.diagnostics,
        )?;
    }
    if !traj_rows.is_empty() {
        artifacts::write_trajectories_csv(&out.join("trajectories.csv"), traj_rows, cfg.time.dt())?;
    }
    artifacts::write_timings(
        &out.join("timings.txt"),
        &solutions[0].diagnostics.wall_times_s,
        wall,
    )
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

fn run_validate_lq(n: usize, steps: usize, particles: usize) -> u8 {
    let run = || -> mfg_core::Result<u8> {
        let grid = Grid2D::new(3.0, n)?;
        let tg = TimeGrid::new(1.0, steps)?;
        let mp = lq_model();
        let mu0 = DensityField::from_profile(grid, 1.0, |p| {
            if p[0].abs() <= 1.0 && p[1].abs() <= 1.0 {
                1.0
            } else {
                0.0
            }
        })?;
        let cfg = SolveConfig {
            n_particles: particles,
            verify: false,
            nash_starts: 0,
            ..SolveConfig::default()
        };
        let t0 = Instant::now();
        let sol = picard_solve(&mp, &mu0, tg, None, &cfg)?;
        let wall = t0.elapsed().as_secs_f64();

        let u_exact =
            |t: f64, x: [f64; 2]| (x[0] * x[0] + x[1] * x[1]) / (2.0 * (2.0 - t)) + 0.1 * (1.0 - t);
        let mut max_rel = 0.0_f64;
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
                let got = sol.value.value_at(0, x)?;
                max_rel = max_rel.max((got - u_exact(0.0, x)).abs() / u_exact(0.0, x));
            }
        }
        let mut max_c2_err = 0.0_f64;
        for (k, c2) in sol.value.c2_hat().iter().enumerate() {
            max_c2_err = max_c2_err.max((c2 - 1.0 / (2.0 - tg.node(k))).abs());
        }
        let m0 = sol.density.snapshot(0).second_moment();
        let mut max_moment_rel = 0.0_f64;
        for k in [steps / 4, steps / 2, 3 * steps / 4, steps] {
            let s = tg.node(k);
            let expect = ((2.0 - s) / 2.0).powi(2);
            let got = sol.density.snapshot(k).second_moment() / m0;
            max_moment_rel = max_moment_rel.max((got - expect).abs() / expect);
        }
        let traj = simulate_trajectory(
            &sol.value,
            &sol.density,
            &mp,
            &sol.control_grid,
            0,
            [1.0, 0.0],
        )?;
        let y = traj.final_state();
        let landing = ((y[0] - 0.5).powi(2) + y[1].powi(2)).sqrt();
        let cost_rel = (traj.cost() - u_exact(0.0, [1.0, 0.0])).abs() / u_exact(0.0, [1.0, 0.0]);
        let (ode, term) = mfg_core::pontryagin_residual(&traj, &sol.density, &mp)?;

        let line = |label: &str, value: f64, bound: f64| {
            println!(
                "{:<44} {:>12.4e}  (bound {:>8.1e})  {}",
                label,
                value,
                bound,
                if value <= bound { "PASS" } else { "FAIL" }
            );
        };
        println!("linear-quadratic benchmark: n = {n}, steps = {steps}, particles = {particles}");
        println!("solve wall time: {wall:.1} s");
        line("max relative value error (|x| <= 1)", max_rel, 0.02);
        line("max |C2_hat - 1/(1+T-t)|", max_c2_err, 5e-3);
        line("max second-moment relative error", max_moment_rel, 0.02);
        line("particle landing error from (1,0)", landing, 0.005);
        line("trajectory cost vs u(0,x0), relative", cost_rel, 0.05);
        line("adjoint ODE residual", ode, 0.05);
        line("adjoint terminal residual", term, 0.05);
        let all_ok = max_rel <= 0.02
            && max_c2_err <= 5e-3
            && max_moment_rel <= 0.02
            && landing <= 0.005
            && cost_rel <= 0.05
            && term <= 0.05;
        Ok(if all_ok { EXIT_OK } else { EXIT_NUMERICAL })
    };
    match run() {
        Ok(code) => code,
        Err(e) => numerical_exit(&e),
    }
}

fn run_w1(a: &Path, b: &Path, dirs: usize) -> u8 {
    let da = match artifacts::read_density_csv(a) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let db = match artifacts::read_density_csv(b) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match mfg_core::w1_sliced_fields(&da, &db, dirs) {
        Ok(d) => {
            println!("{d:?}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn run_trajectories(args: &RunArgs) -> u8 {
    let (cfg, _threads) = match load_config(args) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if cfg.trajectory_starts.is_empty() {
        eprintln!("error: config has no traj.starts to simulate");
        return EXIT_CONFIG;
    }
    let multi = cfg.populations.len() > 1;
    let n_t = cfg.time.n_steps();
    let run = || -> Result<Vec<(usize, Trajectory)>, u8> {
        let mut rows = Vec::new();
        for (j, pc) in cfg.populations.iter().enumerate() {
            let prefix = pop_prefix(multi, j);
            let mut densities = Vec::with_capacity(n_t + 1);
            let mut values = Vec::with_capacity(n_t + 1);
            for k in 0..=n_t {
                let dpath = args.output.join(format!("{prefix}density_{k:04}.csv"));
                let vpath = args.output.join(format!("{prefix}value_{k:04}.csv"));
                let d = artifacts::read_density_csv(&dpath).map_err(|e| {
                    eprintln!("error: {e} (the run must be saved with output.snapshot_stride = 1)");
                    EXIT_CONFIG
                })?;
                let v = artifacts::read_value_csv(&vpath).map_err(|e| {
                    eprintln!("error: {e}");
                    EXIT_CONFIG
                })?;
                densities.push(d);
                values.push(v);
            }
            let curve = MeasureCurve::new(cfg.time, densities, None).map_err(|e| {
                eprintln!("error: {e}");
                EXIT_CONFIG
            })?;
            let hjb = HjbSolution::from_values(cfg.time, values).map_err(|e| {
                eprintln!("error: {e}");
                EXIT_NUMERICAL
            })?;
            let cg = match cfg.control {
                Some(cg) => cg,
                None => {
                    let ff = FrozenFields::compute(&curve, &pc.model);
                    let a_max = ControlGrid::estimate_a_max(&ff, cfg.grid, cfg.time);
                    ControlGrid::new(a_max, 6, 12).map_err(|e| {
                        eprintln!("error: {e}");
                        EXIT_NUMERICAL
                    })?
                }
            };
            for (s, start) in cfg.trajectory_starts.iter().enumerate() {
                let traj = simulate_trajectory(&hjb, &curve, &pc.model, &cg, 0, *start)
                    .map_err(|e| {
                        eprintln!("error: {e}");
                        EXIT_NUMERICAL
                    })?;
                rows.push((j * cfg.trajectory_starts.len() + s, traj));
            }
        }
        Ok(rows)
    };
    match run() {
        Ok(rows) => {
            let path = args.output.join("trajectories.csv");
            match artifacts::write_trajectories_csv(&path, &rows, cfg.time.dt()) {
                Ok(()) => {
                    println!("wrote {} trajectories to {}", rows.len(), path.display());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    EXIT_NUMERICAL
                }
            }
        }
        Err(code) => code,
    }
}
