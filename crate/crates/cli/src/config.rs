//! Scenario configuration: TOML with a versioned schema key and no unknown keys.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use terrace_lab::pde::{heaviside_ic, sandwich_ic, steps_per_period, Field, Grid, MovingWindow, Shape, SimParams};
use terrace_lab::periodic::OdeConfig;
use terrace_lab::terrace::TerraceConfig;
use terrace_lab::NonlinearitySpec;

use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "terrace-lab/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub nonlinearity: NonlinearitySpec,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub platforms: PlatformSearch,
    #[serde(default)]
    pub ode: OdeConfig,
    #[serde(default)]
    pub terrace: TerraceConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub certification: CertificationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub xmin: f64,
    pub xmax: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub stride_window: Option<f64>,
    #[serde(default)]
    pub moving_window: Option<MovingWindow>,
}

/// Initial data, tagged by the hypothesis it is meant to satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "hypothesis", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialConfig {
    /// Heaviside data `p(0)·H(a − x)`.
    H1 { a: f64 },
    /// Data squeezed between two Heaviside steps; `shape` or `random` fills the gap.
    H2 {
        a_minus: f64,
        a_plus: f64,
        #[serde(default)]
        shape: Option<Shape>,
        #[serde(default)]
        random: Option<RandomShape>,
    },
    /// Front-like data with limits in the basins of `p` and `0`.
    H3 { a_minus: f64, a_plus: f64, left: f64, right: f64, bump: f64 },
}

/// Seeded random samples: a linear ramp plus uniform noise of relative size `noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomShape {
    pub n: usize,
    pub noise: f64,
}

impl InitialConfig {
    /// Jump location of the steepest data this IC is compared against.
    pub fn left_jump(&self) -> f64 {
        match *self {
            InitialConfig::H1 { a } => a,
            InitialConfig::H2 { a_minus, .. } | InitialConfig::H3 { a_minus, .. } => a_minus,
        }
    }

    pub fn right_jump(&self) -> f64 {
        match *self {
            InitialConfig::H1 { a } => a,
            InitialConfig::H2 { a_plus, .. } | InitialConfig::H3 { a_plus, .. } => a_plus,
        }
    }

    fn validate(&self) -> CliResult<()> {
        match self {
            InitialConfig::H1 { a } if !a.is_finite() => Err(CliError::config("initial.a must be finite")),
            InitialConfig::H1 { .. } => Ok(()),
            InitialConfig::H2 { a_minus, a_plus, shape, random } => {
                if !(a_minus < a_plus) {
                    return Err(CliError::config("initial: need a_minus < a_plus"));
                }
                match (shape, random) {
                    (Some(Shape::GeneralH3 { .. }), _) => {
                        Err(CliError::config("initial: general_h3 shapes belong to hypothesis h3"))
                    }
                    (Some(_), Some(_)) => Err(CliError::config("initial: give either shape or random, not both")),
                    (None, Some(r)) if r.n < 2 || !(r.noise >= 0.0) => {
                        Err(CliError::config("initial.random: need n ≥ 2 and noise ≥ 0"))
                    }
                    _ => Ok(()),
                }
            }
            InitialConfig::H3 { a_minus, a_plus, left, right, bump } => {
                if !(a_minus < a_plus) {
                    return Err(CliError::config("initial: need a_minus < a_plus"));
                }
                if !(left.is_finite() && right.is_finite() && bump.is_finite()) {
                    return Err(CliError::config("initial: left, right and bump must be finite"));
                }
                Ok(())
            }
        }
    }

    /// Build the field; random shapes draw from `seed`.
    pub fn build(&self, grid: &Grid, p0: f64, seed: u64) -> CliResult<Field> {
        let field = match self {
            InitialConfig::H1 { a } => heaviside_ic(grid, *a, p0),
            InitialConfig::H2 { a_minus, a_plus, shape, random } => {
                let shape = match (shape, random) {
                    (Some(s), _) => s.clone(),
                    (None, Some(r)) => random_samples(r, p0, seed),
                    (None, None) => Shape::LinearRamp,
                };
                sandwich_ic(grid, *a_minus, *a_plus, p0, &shape)?
            }
            InitialConfig::H3 { a_minus, a_plus, left, right, bump } => {
                let shape = Shape::GeneralH3 { left: *left, right: *right, bump: *bump };
                sandwich_ic(grid, *a_minus, *a_plus, p0, &shape)?
            }
        };
        Ok(field)
    }
}

pub fn random_samples(r: &RandomShape, p0: f64, seed: u64) -> Shape {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..r.n)
        .map(|j| {
            let s = j as f64 / (r.n - 1) as f64;
            (p0 * (1.0 - s) + r.noise * p0 * rng.gen_range(-1.0..=1.0)).clamp(0.0, p0)
        })
        .collect();
    Shape::Samples { values }
}

/// Which analyses a scenario asks for.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Levels whose crossings are tracked; each must lie in `(0, p(0))`.
    pub levels: Vec<f64>,
    pub terrace: bool,
    /// Require `0` and `p` to be linearly stable in the structure check.
    pub multistable: bool,
    pub minimality: bool,
    pub residual: bool,
    pub shift_convergence: bool,
    pub exponential_rate: bool,
    pub sandwich: bool,
    pub zero_number: bool,
    pub steepness: bool,
    pub spreading: bool,
    pub certification: bool,
}

/// Search window for periodic solutions; the upper state is the largest
/// linearly stable one found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformSearch {
    pub lo: f64,
    pub hi: f64,
    pub n_seed: usize,
}

impl Default for PlatformSearch {
    fn default() -> Self {
        Self { lo: 0.0, hi: 1.5, n_seed: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Distance from each grid end excluded from residuals.
    pub residual_margin: f64,
    /// Trailing fraction of snapshots over which the residual must not grow.
    pub monotone_tail: f64,
    /// Allowed growth over the running minimum, relative to `p(0)`.
    pub monotone_noise_rel: f64,
    pub rate_burn_in: f64,
    pub r2_min: f64,
    pub zero_number_shift: f64,
    pub zero_number_lag: usize,
    pub steepness_tol: f64,
    /// Extra distance of the bounding Heaviside jumps beyond `a_∓`.
    pub sandwich_offset: f64,
    pub spreading_eps: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            residual_margin: 20.0,
            monotone_tail: 0.25,
            monotone_noise_rel: 5e-5,
            rate_burn_in: 0.2,
            r2_min: 0.95,
            zero_number_shift: 0.0,
            zero_number_lag: 0,
            steepness_tol: 1e-6,
            sandwich_offset: 10.0,
            spreading_eps: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificationConfig {
    /// `cert_tol = cert_tol_rel · sup|f|`.
    pub cert_tol_rel: f64,
    pub refine: usize,
    pub wave: usize,
    /// Frame speed above the wave speed.
    pub speed_offset: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub eps_min: f64,
    /// Half-width of the scan window around the origin.
    pub window: f64,
    pub scan_dx: f64,
    pub scan_dt: f64,
    pub horizon: f64,
    /// Time over which the flattening fronts are built and checked.
    pub flattening_horizon: f64,
    pub domination_tol: f64,
}

impl Default for CertificationConfig {
    fn default() -> Self {
        Self {
            cert_tol_rel: terrace_lab::supersub::CERT_TOL_REL,
            refine: terrace_lab::supersub::REFINE,
            wave: 0,
            speed_offset: 0.1,
            k: 0.0,
            eps_min: 1e-4,
            window: 30.0,
            scan_dx: 0.1,
            scan_dt: 0.25,
            horizon: 4.0,
            flattening_horizon: 10.0,
            domination_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    Csv,
    #[default]
    Columnar,
    Both,
    None,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub snapshots: SnapshotFormat,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text)?;
        Ok((cfg, config_hash(&text)?))
    }

    /// Checks that need no periodic-solution search.
    pub fn validate(&self) -> CliResult<()> {
        if self.schema != SCHEMA {
            return Err(CliError::config(format!("schema {:?} not supported; expected {SCHEMA:?}", self.schema)));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::config("name must be non-empty and free of path separators"));
        }
        let g = &self.grid;
        if !(g.xmin < g.xmax && g.dx > 0.0 && g.dx < g.xmax - g.xmin) {
            return Err(CliError::config("grid: need xmin < xmax and 0 < dx < xmax − xmin"));
        }
        let t = &self.time;
        if !(t.dt > 0.0 && t.t_end > 0.0) {
            return Err(CliError::config("time: dt and t_end must be positive"));
        }
        steps_per_period(self.nonlinearity.period(), t.dt).map_err(|e| CliError::config(e.to_string()))?;
        self.initial.validate()?;
        if self.analysis.levels.iter().any(|l| !l.is_finite()) {
            return Err(CliError::config("analysis.levels must be finite"));
        }
        Ok(())
    }

    pub fn grid(&self) -> CliResult<Grid> {
        Ok(Grid::with_spacing(self.grid.xmin, self.grid.xmax, self.grid.dx)?)
    }

    pub fn sim_params(&self) -> SimParams {
        let t = &self.time;
        let mut p = SimParams::new(t.dt, t.t_end).with_stride(t.snapshot_stride, t.stride_window);
        p.moving_window = t.moving_window;
        p
    }
}

/// SHA-256 of the document rewritten as JSON with sorted keys, so the hash
/// ignores key order, whitespace and comments.
pub fn config_hash(text: &str) -> CliResult<String> {
    let value: toml::Value = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
    let canonical = serde_json::to_string(&serde_json::to_value(&value)?)?;
    Ok(format!("{:x}", Sha256::digest(canonical.as_bytes())))
}

/// Hash of the settings a terrace extraction depends on.
pub fn terrace_key(cfg: &ScenarioConfig) -> CliResult<String> {
    let v = serde_json::json!({
        "nonlinearity": cfg.nonlinearity,
        "grid": cfg.grid,
        "time": { "dt": cfg.time.dt, "t_end": cfg.time.t_end, "moving_window": cfg.time.moving_window },
        "platforms": cfg.platforms,
        "ode": cfg.ode,
        "terrace": cfg.terrace,
    });
    // serde_json maps are ordered, so this string is canonical.
    Ok(format!("{:x}", Sha256::digest(serde_json::to_string(&v)?.as_bytes())))
}
