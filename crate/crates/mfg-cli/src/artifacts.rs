//! Bit-stable CSV and JSON artifact emission, plus the readers the `w1` and
//! `trajectories` subcommands use.
//!
//! Floating-point values are written with Rust's shortest-round-trip
//! formatting, so identical runs produce byte-identical files and readers
//! recover the exact bits.

use mfg_core::{
    DensityField, Diagnostics, Grid2D, NashGapReport, ScalarField2D, Solution, Trajectory,
};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// Shortest-round-trip float that always carries a decimal point or exponent.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_density_csv(path: &Path, d: &DensityField) -> io::Result<()> {
    let grid = d.grid();
    let n = grid.n();
    let h = grid.spacing();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# half_width = {}, n = {}, m_tot = {}",
        fmt_f64(grid.half_width()),
        n,
        fmt_f64(d.m_tot())
    );
    out.push_str("i,j,x,y,mass,physical_density\n");
    let scale = d.m_tot() / (h * h);
    for j in 0..n {
        for i in 0..n {
            let c = grid.cell_center(i, j);
            let m = d.mass_at(i, j);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                i,
                j,
                fmt_f64(c[0]),
                fmt_f64(c[1]),
                fmt_f64(m),
                fmt_f64(m * scale)
            );
        }
    }
    fs::write(path, out)
}

pub fn write_value_csv(path: &Path, u: &ScalarField2D) -> io::Result<()> {
    let grid = u.grid();
    let n = grid.n();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# half_width = {}, n = {}",
        fmt_f64(grid.half_width()),
        n
    );
    out.push_str("i,j,x,y,value\n");
    for j in 0..n {
        for i in 0..n {
            let c = grid.cell_center(i, j);
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i,
                j,
                fmt_f64(c[0]),
                fmt_f64(c[1]),
                fmt_f64(u.at(i, j))
            );
        }
    }
    fs::write(path, out)
}

fn parse_header(line: &str, path: &Path) -> io::Result<(f64, usize, Option<f64>)> {
    let body = line.trim_start_matches('#').trim();
    let mut half_width = None;
    let mut n = None;
    let mut m_tot = None;
    for part in body.split(',') {
        let Some((key, value)) = part.split_once('=') else {
            continue;
        };
        match key.trim() {
            "half_width" => half_width = value.trim().parse::<f64>().ok(),
            "n" => n = value.trim().parse::<usize>().ok(),
            "m_tot" => m_tot = value.trim().parse::<f64>().ok(),
            _ => {}
        }
    }
    match (half_width, n) {
        (Some(h), Some(n)) => Ok((h, n, m_tot)),
        _ => Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{}: missing grid header line", path.display()),
        )),
    }
}

fn bad_data(path: &Path, msg: &str) -> io::Error {
    io::Error::new(
        io::ErrorKind::InvalidData,
        format!("{}: {msg}", path.display()),
    )
}

pub fn read_density_csv(path: &Path) -> io::Result<DensityField> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad_data(path, "empty file"))?;
    let (half_width, n, m_tot) = parse_header(header, path)?;
    let grid = Grid2D::new(half_width, n)
        .map_err(|e| bad_data(path, &format!("bad grid header: {e}")))?;
    let mut mass = vec![0.0_f64; grid.len()];
    for line in lines {
        if line.starts_with('#') || line.starts_with('i') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad_data(path, "density rows need 6 columns"));
        }
        let i: usize = cols[0].parse().map_err(|_| bad_data(path, "bad i"))?;
        let j: usize = cols[1].parse().map_err(|_| bad_data(path, "bad j"))?;
        let m: f64 = cols[4].parse().map_err(|_| bad_data(path, "bad mass"))?;
        if i >= n || j >= n {
            return Err(bad_data(path, "cell index out of range"));
        }
        mass[grid.index(i, j)] = m;
    }
    DensityField::new(grid, mass, m_tot.unwrap_or(1.0))
        .map_err(|e| bad_data(path, &format!("invalid density: {e}")))
}

pub fn read_value_csv(path: &Path) -> io::Result<ScalarField2D> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad_data(path, "empty file"))?;
    let (half_width, n, _) = parse_header(header, path)?;
    let grid = Grid2D::new(half_width, n)
        .map_err(|e| bad_data(path, &format!("bad grid header: {e}")))?;
    let mut data = vec![f64::NAN; grid.len()];
    for line in lines {
        if line.starts_with('#') || line.starts_with('i') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad_data(path, "value rows need 5 columns"));
        }
        let i: usize = cols[0].parse().map_err(|_| bad_data(path, "bad i"))?;
        let j: usize = cols[1].parse().map_err(|_| bad_data(path, "bad j"))?;
        let v: f64 = cols[4].parse().map_err(|_| bad_data(path, "bad value"))?;
        if i >= n || j >= n {
            return Err(bad_data(path, "cell index out of range"));
        }
        data[grid.index(i, j)] = v;
    }
    if data.iter().any(|v| v.is_nan()) {
        return Err(bad_data(path, "value file does not cover the grid"));
    }
    ScalarField2D::new(grid, data).map_err(|e| bad_data(path, &format!("invalid field: {e}")))
}

pub fn write_convergence_csv(path: &Path, label: &str, d: &Diagnostics) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(
        "population,iteration,residual,c2_hat,support_radius,max_density,mass_error,curve_lipschitz,ring_mass\n",
    );
    for it in 0..d.residuals.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            label,
            it + 1,
            fmt_f64(d.residuals[it]),
            fmt_f64(d.c2_hat[it]),
            fmt_f64(d.support_radii[it]),
            fmt_f64(d.max_densities[it]),
            fmt_f64(d.mass_errors[it]),
            fmt_f64(d.curve_lipschitz[it]),
            fmt_f64(d.boundary_ring_mass[it])
        );
    }
    fs::write(path, out)
}

pub fn write_trajectories_csv(path: &Path, trajectories: &[(usize, Trajectory)], dt: f64) -> io::Result<()> {
    let mut out = String::new();
    out.push_str("traj,k,t,x,y,control_x,control_y\n");
    for (id, traj) in trajectories {
        for (offset, (y, a)) in traj.states().iter().zip(traj.controls()).enumerate() {
            let k = traj.start_index() + offset;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                id,
                k,
                fmt_f64(k as f64 * dt),
                fmt_f64(y[0]),
                fmt_f64(y[1]),
                fmt_f64(a[0]),
                fmt_f64(a[1])
            );
        }
    }
    fs::write(path, out)
}

#[derive(Serialize)]
pub struct PopulationSummary {
    pub support_radius_max: f64,
    pub max_density: f64,
    pub curve_lipschitz_max: f64,
    pub c2_hat_max: f64,
    pub mass_error_max: f64,
    pub support_cap_exceeded: bool,
    pub density_cap_exceeded: bool,
    pub nash_gap: Option<NashGapReport>,
    pub verification: Option<mfg_core::solve::VerificationReport>,
    pub trajectory_costs: Vec<f64>,
}

#[derive(Serialize)]
pub struct Summary {
    pub command: String,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
    pub mass_error_max: f64,
    pub c2_hat_max: f64,
    pub support_radius_max: f64,
    pub nash_gap: Option<NashGapReport>,
    pub seed: u64,
    pub threads: usize,
    pub populations: Vec<PopulationSummary>,
}

pub fn build_summary(
    command: &str,
    solutions: &[Solution],
    seed: u64,
    threads: usize,
    trajectory_costs: &[Vec<f64>],
) -> Summary {
    let d0 = &solutions[0].diagnostics;
    let populations = solutions
        .iter()
        .enumerate()
        .map(|(j, s)| PopulationSummary {
            support_radius_max: s.diagnostics.max_support_radius(),
            max_density: s
                .diagnostics
                .max_densities
                .iter()
                .copied()
                .fold(0.0, f64::max),
            curve_lipschitz_max: s
                .diagnostics
                .curve_lipschitz
                .iter()
                .copied()
                .fold(0.0, f64::max),
            c2_hat_max: s.diagnostics.max_c2_hat(),
            mass_error_max: s.diagnostics.max_mass_error(),
            support_cap_exceeded: s.diagnostics.support_cap_exceeded,
            density_cap_exceeded: s.diagnostics.density_cap_exceeded,
            nash_gap: s.diagnostics.nash.clone(),
            verification: s.diagnostics.verification.clone(),
            trajectory_costs: trajectory_costs.get(j).cloned().unwrap_or_default(),
        })
        .collect();
    Summary {
        command: command.to_string(),
        converged: solutions.iter().all(|s| s.converged),
        iterations: d0.iterations(),
        final_residual: d0.final_residual(),
        residual_history: d0.residuals.clone(),
        mass_error_max: solutions
            .iter()
            .map(|s| s.diagnostics.max_mass_error())
            .fold(0.0, f64::max),
        c2_hat_max: solutions
            .iter()
            .map(|s| s.diagnostics.max_c2_hat())
            .fold(f64::NEG_INFINITY, f64::max),
        support_radius_max: solutions
            .iter()
            .map(|s| s.diagnostics.max_support_radius())
            .fold(0.0, f64::max),
        nash_gap: solutions[0].diagnostics.nash.clone(),
        seed,
        threads,
        populations,
    }
}

pub fn write_summary(path: &Path, summary: &Summary) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    fs::write(path, text)
}

/// Wall-clock timings: the one deliberately non-deterministic artifact, kept
/// out of every CSV/JSON file so those stay byte-identical across runs.
pub fn write_timings(path: &Path, per_iteration: &[f64], total_s: f64) -> io::Result<()> {
    let mut out = String::new();
    for (it, w) in per_iteration.iter().enumerate() {
        let _ = writeln!(out, "iteration {} wall_s {}", it + 1, fmt_f64(*w));
    }
    let _ = writeln!(out, "total wall_s {}", fmt_f64(total_s));
    fs::write(path, out)
}

pub fn write_effective_config(
    path: &Path,
    effective: &std::collections::BTreeMap<String, String>,
    seed: u64,
    threads: usize,
) -> io::Result<()> {
    let mut out = String::new();
    out.push_str("# effective configuration (resolved)\n");
    for (k, v) in effective {
        let _ = writeln!(out, "{k} = {v}");
    }
    let _ = writeln!(out, "# runtime: seed = {seed}, threads = {threads}");
    fs::write(path, out)
}
