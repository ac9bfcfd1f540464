//! Flat dotted-key configuration: `section.key = value` lines with `#`
//! comments, no nesting, unknown keys rejected.

use mfg_core::{
    ControlGrid, CostParams, DensityField, Grid2D, KernelParams, ModelParams, ParticleCloud,
    SolveConfig, TerminalShape, TimeGrid,
};
use std::collections::BTreeMap;
use std::fmt;

/// Configuration failure: either the text does not parse or a value violates
/// a model invariant.
#[derive(Debug)]
pub enum ConfigError {
    Parse { line: usize, message: String },
    Validation(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, message } => write!(f, "config line {line}: {message}"),
            ConfigError::Validation(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

/// Initial-density specification.
#[derive(Debug, Clone)]
pub enum InitialDensity {
    /// Gaussian of width `sigma`, truncated at `3 sigma` (compact support).
    Gaussian { center: [f64; 2], sigma: f64 },
    /// Uniform on an axis-aligned box `[x0, y0, x1, y1]`.
    UniformBox { corners: [f64; 4] },
    /// Cloud-in-cell deposit of an explicit atom list.
    Atoms { points: Vec<[f64; 2]> },
}

impl InitialDensity {
    pub fn realize(&self, grid: Grid2D, m_tot: f64) -> Result<DensityField> {
        let field = match self {
            InitialDensity::Gaussian { center, sigma } => {
                let cut2 = (3.0 * sigma) * (3.0 * sigma);
                DensityField::from_profile(grid, m_tot, |p| {
                    let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                    if d2 <= cut2 {
                        (-d2 / (2.0 * sigma * sigma)).exp()
                    } else {
                        0.0
                    }
                })
            }
            InitialDensity::UniformBox { corners } => DensityField::from_profile(grid, m_tot, |p| {
                if p[0] >= corners[0] && p[0] <= corners[2] && p[1] >= corners[1] && p[1] <= corners[3]
                {
                    1.0
                } else {
                    0.0
                }
            }),
            InitialDensity::Atoms { points } => {
                let cloud = ParticleCloud::new(points.clone())
                    .map_err(|e| ConfigError::Validation(e.to_string()))?;
                mfg_core::deposit(&cloud, grid).map(|d| d.with_physical_mass(m_tot))
            }
        };
        field.map_err(|e| ConfigError::Validation(e.to_string()))
    }
}

/// One population's full parameter set.
#[derive(Debug, Clone)]
pub struct PopulationConfig {
    pub model: ModelParams,
    pub init: InitialDensity,
}

/// Everything a run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: Grid2D,
    pub time: TimeGrid,
    pub solve: SolveConfig,
    pub control: Option<ControlGrid>,
    pub populations: Vec<PopulationConfig>,
    /// Cross-coupling strengths; `coupling[j][k]`, diagonal = own kappa.
    pub coupling: Vec<Vec<f64>>,
    pub trajectory_starts: Vec<[f64; 2]>,
    /// Write every `snapshot_stride`-th snapshot (plus the final one).
    pub snapshot_stride: usize,
    /// The resolved key/value view for the effective-config echo.
    pub effective: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn initial_density(&self, pop: usize) -> Result<DensityField> {
        self.populations[pop]
            .init
            .realize(self.grid, self.populations[pop].model.m_tot)
    }
}

struct KeyMap {
    values: BTreeMap<String, (usize, String)>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KeyMap {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: line_no,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            if values.contains_key(&key) {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("duplicate key '{key}'"),
                });
            }
            values.insert(key, (line_no, value.trim().to_string()));
        }
        Ok(Self {
            values,
            consumed: Default::default(),
        })
    }

    fn get(&self, key: &str) -> Option<&str> {
        if let Some((_, v)) = self.values.get(key) {
            self.consumed.borrow_mut().insert(key.to_string());
            Some(v.as_str())
        } else {
            None
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<f64>().map(Some).map_err(|_| self.bad(key, "a number")),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<usize>().map_err(|_| self.bad(key, "a nonnegative integer")),
        }
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<u64>().map_err(|_| self.bad(key, "an integer seed")),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(_) => Err(self.bad(key, "true or false")),
        }
    }

    fn point(&self, key: &str) -> Result<Option<[f64; 2]>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(self.bad(key, "'x, y'"));
                }
                let x = parts[0].parse().map_err(|_| self.bad(key, "'x, y'"))?;
                let y = parts[1].parse().map_err(|_| self.bad(key, "'x, y'"))?;
                Ok(Some([x, y]))
            }
        }
    }

    fn point_list(&self, key: &str) -> Result<Vec<[f64; 2]>> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(v) => {
                let mut out = Vec::new();
                for part in v.split(';') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    let nums: Vec<&str> = part.split(',').map(str::trim).collect();
                    if nums.len() != 2 {
                        return Err(self.bad(key, "'x,y; x,y; ...'"));
                    }
                    let x = nums[0].parse().map_err(|_| self.bad(key, "'x,y; ...'"))?;
                    let y = nums[1].parse().map_err(|_| self.bad(key, "'x,y; ...'"))?;
                    out.push([x, y]);
                }
                Ok(out)
            }
        }
    }

    fn bad(&self, key: &str, expected: &str) -> ConfigError {
        let line = self.values.get(key).map(|(l, _)| *l).unwrap_or(0);
        ConfigError::Parse {
            line,
            message: format!("key '{key}' expects {expected}"),
        }
    }

    fn reject_unknown(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        for (key, (line, _)) in &self.values {
            if !consumed.contains(key) {
                return Err(ConfigError::Parse {
                    line: *line,
                    message: format!("unknown key '{key}'"),
                });
            }
        }
        Ok(())
    }
}

fn model_from_keys(map: &KeyMap, prefix: &str, base: Option<&ModelParams>) -> Result<ModelParams> {
    let k = |name: &str| format!("{prefix}{name}");
    let dk = |field: fn(&ModelParams) -> f64, fallback: f64| -> f64 {
        base.map(field).unwrap_or(fallback)
    };
    let kernel = KernelParams {
        kappa: map.f64_or(&k("kernel.kappa"), dk(|m| m.kernel.kappa, 0.0))?,
        radius: map.f64_or(&k("kernel.radius"), dk(|m| m.kernel.radius, 0.5))?,
        inner_radius: map.f64_or(&k("kernel.inner_radius"), dk(|m| m.kernel.inner_radius, 0.2))?,
        moll_width: map.f64_or(&k("kernel.moll_width"), dk(|m| m.kernel.moll_width, 0.1))?,
    };
    let terminal = match map.get(&k("cost.terminal")) {
        None => base.map(|m| m.cost.terminal).unwrap_or(TerminalShape::SoftTarget),
        Some("quadratic") => TerminalShape::Quadratic,
        Some("soft_target") => TerminalShape::SoftTarget,
        Some(_) => {
            return Err(map.bad(&k("cost.terminal"), "'quadratic' or 'soft_target'"));
        }
    };
    let cost = CostParams {
        eps_run: map.f64_or(&k("cost.eps_run"), dk(|m| m.cost.eps_run, 0.1))?,
        c_cong: map.f64_or(&k("cost.c_cong"), dk(|m| m.cost.c_cong, 0.0))?,
        sigma_cong: map.f64_or(&k("cost.sigma_cong"), dk(|m| m.cost.sigma_cong, 0.3))?,
        terminal,
        target: map
            .point(&k("cost.target"))?
            .unwrap_or_else(|| base.map(|m| m.cost.target).unwrap_or([0.0, 0.0])),
        c_term: map.f64_or(&k("cost.c_term"), dk(|m| m.cost.c_term, 1.0))?,
        c_cong_term: map.f64_or(&k("cost.c_cong_term"), dk(|m| m.cost.c_cong_term, 0.0))?,
    };
    let m_tot = map.f64_or(&k("model.total_mass"), dk(|m| m.m_tot, 1.0))?;
    let model = ModelParams { kernel, cost, m_tot };
    if cost.eps_run <= 0.0 || !cost.eps_run.is_finite() {
        return Err(ConfigError::Validation(format!(
            "{} must be > 0 (the running cost needs a strictly positive floor); eps_run must be > 0",
            k("cost.eps_run")
        )));
    }
    model
        .validate()
        .map_err(|e| ConfigError::Validation(format!("{e}")))?;
    Ok(model)
}

fn init_from_keys(map: &KeyMap, prefix: &str, base: Option<&InitialDensity>) -> Result<InitialDensity> {
    let k = |name: &str| format!("{prefix}{name}");
    let kind = map.get(&k("init.kind"));
    let kind = match (kind, base) {
        (Some(s), _) => s.to_string(),
        (None, Some(init)) => {
            // inherit the base population's choice, allowing field overrides
            match init {
                InitialDensity::Gaussian { .. } => "gaussian".to_string(),
                InitialDensity::UniformBox { .. } => "uniform_box".to_string(),
                InitialDensity::Atoms { .. } => "atoms".to_string(),
            }
        }
        (None, None) => "gaussian".to_string(),
    };
    match kind.as_str() {
        "gaussian" => {
            let (base_center, base_sigma) = match base {
                Some(InitialDensity::Gaussian { center, sigma }) => (*center, *sigma),
                _ => ([0.0, 0.0], 0.4),
            };
            let center = map.point(&k("init.center"))?.unwrap_or(base_center);
            let sigma = map.f64_or(&k("init.sigma"), base_sigma)?;
            if sigma <= 0.0 {
                return Err(ConfigError::Validation(format!(
                    "{} must be > 0",
                    k("init.sigma")
                )));
            }
            Ok(InitialDensity::Gaussian { center, sigma })
        }
        "uniform_box" => {
            let corners = match map.get(&k("init.box")) {
                Some(v) => {
                    let nums: Vec<f64> = v
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| map.bad(&k("init.box"), "'x0, y0, x1, y1'"))?;
                    if nums.len() != 4 {
                        return Err(map.bad(&k("init.box"), "'x0, y0, x1, y1'"));
                    }
                    [nums[0], nums[1], nums[2], nums[3]]
                }
                None => match base {
                    Some(InitialDensity::UniformBox { corners }) => *corners,
                    _ => [-1.0, -1.0, 1.0, 1.0],
                },
            };
            if corners[0] >= corners[2] || corners[1] >= corners[3] {
                return Err(ConfigError::Validation(format!(
                    "{} must satisfy x0 < x1 and y0 < y1",
                    k("init.box")
                )));
            }
            Ok(InitialDensity::UniformBox { corners })
        }
        "atoms" => {
            let points = map.point_list(&k("init.atoms"))?;
            if points.is_empty() {
                match base {
                    Some(InitialDensity::Atoms { points }) => Ok(InitialDensity::Atoms {
                        points: points.clone(),
                    }),
                    _ => Err(ConfigError::Validation(format!(
                        "{} needs at least one atom",
                        k("init.atoms")
                    ))),
                }
            } else {
                Ok(InitialDensity::Atoms { points })
            }
        }
        other => Err(ConfigError::Validation(format!(
            "{} must be gaussian, uniform_box, or atoms (got '{other}')",
            k("init.kind")
        ))),
    }
}

/// Parse and fully validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let map = KeyMap::parse(text)?;

    let half_width = map.f64_or("grid.half_width", 3.0)?;
    let n = map.usize_or("grid.n", 96)?;
    let grid = Grid2D::new(half_width, n).map_err(|e| ConfigError::Validation(e.to_string()))?;
    let horizon = map.f64_or("time.horizon", 1.0)?;
    let steps = map.usize_or("time.steps", 80)?;
    let time = TimeGrid::new(horizon, steps).map_err(|e| ConfigError::Validation(e.to_string()))?;

    let defaults = SolveConfig::default();
    let solve = SolveConfig {
        theta: map.f64_or("solve.theta", defaults.theta)?,
        tol_fp: map.f64_or("solve.tol", defaults.tol_fp)?,
        max_iter: map.usize_or("solve.max_iter", defaults.max_iter)?,
        n_particles: map.usize_or("solve.particles", defaults.n_particles)?,
        seed: map.u64_or("solve.seed", defaults.seed)?,
        support_cap: map.f64_or("solve.support_cap", defaults.support_cap)?,
        density_cap: map.f64_or("solve.density_cap", defaults.density_cap)?,
        eps_nash_rel: map.f64_or("solve.eps_nash_rel", defaults.eps_nash_rel)?,
        eps_nash_abs: map.f64_or("solve.eps_nash_abs", defaults.eps_nash_abs)?,
        verify: map.bool_or("solve.verify", defaults.verify)?,
        n_dirs: map.usize_or("solve.w1_dirs", defaults.n_dirs)?,
        nash_starts: map.usize_or("solve.nash_starts", defaults.nash_starts)?,
        deviation_lattice: map.usize_or("solve.deviation_lattice", defaults.deviation_lattice)?,
    };
    solve
        .validate()
        .map_err(|e| ConfigError::Validation(e.to_string()))?;

    let control = match map.f64("control.a_max")? {
        None => {
            // the radial/angular keys still apply when a_max is estimated
            let _ = map.usize_or("control.n_radial", 6)?;
            let _ = map.usize_or("control.n_angular", 12)?;
            None
        }
        Some(a_max) => {
            let n_radial = map.usize_or("control.n_radial", 6)?;
            let n_angular = map.usize_or("control.n_angular", 12)?;
            let cg = ControlGrid::new(a_max, n_radial, n_angular)
                .map_err(|e| ConfigError::Validation(e.to_string()))?;
            let cg = match map.f64("control.edge_penalty")? {
                Some(slope) => cg.with_edge_penalty(slope),
                None => cg,
            };
            Some(cg)
        }
    };

    let n_pops = map.usize_or("populations", 1)?;
    if n_pops == 0 {
        return Err(ConfigError::Validation("populations must be >= 1".into()));
    }
    let base_model = model_from_keys(&map, "", None)?;
    let base_init = init_from_keys(&map, "", None)?;
    let mut populations = Vec::with_capacity(n_pops);
    if n_pops == 1 {
        populations.push(PopulationConfig {
            model: base_model,
            init: base_init,
        });
    } else {
        for j in 1..=n_pops {
            let prefix = format!("pop{j}.");
            let model = model_from_keys(&map, &prefix, Some(&base_model))?;
            let init = init_from_keys(&map, &prefix, Some(&base_init))?;
            populations.push(PopulationConfig { model, init });
        }
    }

    let mut coupling = vec![vec![0.0; n_pops]; n_pops];
    for (j, row) in coupling.iter_mut().enumerate() {
        for (k, entry) in row.iter_mut().enumerate() {
            if j == k {
                *entry = populations[j].model.kernel.kappa;
            } else {
                *entry = map.f64_or(&format!("coupling.k_{}_{}", j + 1, k + 1), 0.0)?;
                if *entry < 0.0 {
                    return Err(ConfigError::Validation(format!(
                        "coupling.k_{}_{} must be >= 0",
                        j + 1,
                        k + 1
                    )));
                }
            }
        }
    }

    let trajectory_starts = map.point_list("traj.starts")?;
    let snapshot_stride = map.usize_or("output.snapshot_stride", 1)?;
    if snapshot_stride == 0 {
        return Err(ConfigError::Validation("output.snapshot_stride must be >= 1".into()));
    }

    // box sizing sanity: the buffer must hold the support cap plus the
    // interaction reach
    for (j, pop) in populations.iter().enumerate() {
        if solve.support_cap + pop.model.kernel.radius > grid.half_width() {
            return Err(ConfigError::Validation(format!(
                "grid.half_width ({}) must exceed solve.support_cap + kernel.radius ({} + {}) for population {}",
                grid.half_width(),
                solve.support_cap,
                pop.model.kernel.radius,
                j + 1
            )));
        }
    }

    map.reject_unknown()?;

    let effective = map
        .values
        .iter()
        .map(|(k, (_, v))| (k.clone(), v.clone()))
        .collect();

    Ok(RunConfig {
        grid,
        time,
        solve,
        control,
        populations,
        coupling,
        trajectory_starts,
        snapshot_stride,
        effective,
    })
}
