//! Run configuration: TOML parsing, defaults and validation.
//!
//! Every section is optional; missing keys take the defaults below and the
//! resolved configuration is echoed into the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fracdrift_core::fraclap::StableParams;
use fracdrift_core::grid::{Field, GridSpec};
use fracdrift_core::initial::{from_expression, InitialData, Preset};
use fracdrift_core::io::read_field;
use fracdrift_core::mild::Drift;
use fracdrift_core::singular::CzKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Decay,
    Eta,
    Solve,
    Particles,
    Compare,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Decay => "decay",
            Experiment::Eta => "eta",
            Experiment::Solve => "solve",
            Experiment::Particles => "particles",
            Experiment::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridCfg {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

impl Default for GridCfg {
    fn default() -> Self {
        Self { dim: 1, n: 256, length: 16.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StableCfg {
    pub alpha: f64,
}

impl Default for StableCfg {
    fn default() -> Self {
        Self { alpha: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelCfg {
    /// `zero`, `hilbert`, `riesz:<j>`, `smooth_h0:<expr>` or `riesz-pair` (d = 2).
    /// Defaults to `hilbert` in d = 1 and `riesz-pair` in d = 2.
    pub name: Option<String>,
    /// Drift direction for scalar kernels in d = 2.
    pub direction: Option<[f64; 2]>,
}

impl Default for KernelCfg {
    fn default() -> Self {
        Self { name: None, direction: None }
    }
}

/// Initial data; which keys apply depends on `preset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialCfg {
    /// `gaussian`, `signed-double-bump`, `random-band-limited`, `tent`, `box`, `expression` or `file`.
    pub preset: String,
    pub center: Option<[f64; 2]>,
    pub width: f64,
    pub amplitude: f64,
    pub half_width: f64,
    pub height: f64,
    pub k_max: usize,
    pub offset: f64,
    /// Seed of the random preset; falls back to the run seed.
    pub seed: Option<u64>,
    /// Expression in `x`, `y` and `L` for the `expression` preset.
    pub expression: Option<String>,
    /// Field file for the `file` preset; its grid must match `[grid]`.
    pub file: Option<PathBuf>,
}

impl Default for InitialCfg {
    fn default() -> Self {
        Self {
            preset: "gaussian".into(),
            center: None,
            width: 1.0,
            amplitude: 0.5,
            half_width: 1.0,
            height: 1.0,
            k_max: 4,
            offset: 0.0,
            seed: None,
            expression: None,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayCfg {
    pub alphas: Vec<f64>,
    /// `(q, m)` exponent pairs; `inf` is allowed for `m`.
    pub pairs: Vec<[f64; 2]>,
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
    pub tolerance: f64,
}

impl Default for DecayCfg {
    fn default() -> Self {
        Self {
            alphas: vec![1.2, 1.5, 1.8],
            pairs: vec![[1.0, 2.0], [1.0, f64::INFINITY], [2.0, 4.0]],
            t_min: 0.05,
            t_max: 2.0,
            count: 8,
            tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EtaCfg {
    pub p: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
    pub steps: usize,
    pub trials: usize,
    pub max_fit_residual: f64,
}

impl Default for EtaCfg {
    fn default() -> Self {
        Self { p: 3.0, t_min: 0.05, t_max: 0.8, count: 6, steps: 16, trials: 32, max_fit_residual: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveCfg {
    pub p: f64,
    pub t_end: f64,
    pub steps: usize,
    pub nodes: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Weight of the new iterate; omit for plain iteration.
    pub relaxation: Option<f64>,
    /// Measure eta with the `[eta]` settings and certify a local horizon.
    pub certify: bool,
    pub horizon_candidates: usize,
    pub weak_tests: usize,
    pub weak_max_mode: i64,
}

impl Default for SolveCfg {
    fn default() -> Self {
        Self {
            p: 3.0,
            t_end: 0.5,
            steps: 64,
            nodes: 64,
            max_iter: 30,
            tol: 1e-10,
            relaxation: None,
            certify: true,
            horizon_candidates: 24,
            weak_tests: 5,
            weak_max_mode: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticlesCfg {
    pub n: usize,
    pub t_end: f64,
    pub steps: usize,
    /// Interaction length; defaults to `L N^(-1/(d+2))`.
    pub eps_kernel: Option<f64>,
    /// Picard iterations on path laws; `0` runs only the interacting march.
    pub iterations: usize,
    pub tol: f64,
    pub p: f64,
    /// KDE bandwidth; defaults to the rule-of-thumb on the free paths.
    pub bandwidth: Option<f64>,
}

impl Default for ParticlesCfg {
    fn default() -> Self {
        Self { n: 5000, t_end: 0.5, steps: 25, eps_kernel: None, iterations: 8, tol: 0.0, p: 2.0, bandwidth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareCfg {
    /// Output directory of a completed `solve` run.
    pub solve_run: PathBuf,
    /// Output directories of completed `particles` runs.
    pub particle_runs: Vec<PathBuf>,
}

impl Default for CompareCfg {
    fn default() -> Self {
        Self { solve_run: PathBuf::new(), particle_runs: Vec::new() }
    }
}

/// The configuration file as written, after defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must agree with the subcommand when given.
    #[serde(default)]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridCfg,
    #[serde(default)]
    pub stable: StableCfg,
    #[serde(default)]
    pub kernel: KernelCfg,
    #[serde(default)]
    pub initial: InitialCfg,
    #[serde(default)]
    pub decay: DecayCfg,
    #[serde(default)]
    pub eta: EtaCfg,
    #[serde(default)]
    pub solve: SolveCfg,
    #[serde(default)]
    pub particles: ParticlesCfg,
    #[serde(default)]
    pub compare: CompareCfg,
}

/// Invalid configuration, with the 1-based line of the offending key when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Locates `key` inside `[section]` (or at top level when `section` is empty).
fn line_of(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Everything a suite needs, built and checked before any output is written.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub grid: GridSpec,
    pub stable: StableParams,
    pub kernel: CzKernel,
    pub drift: Drift,
    pub initial: InitialData,
}

impl Resolved {
    pub fn u0(&self) -> &Field {
        &self.initial.field
    }
}

struct Checker<'a> {
    source: &'a str,
}

impl Checker<'_> {
    fn fail<T>(&self, section: &str, key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
        let line = line_of(self.source, section, key).or_else(|| line_of(self.source, section, ""));
        let name = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        Err(ConfigError { line, message: format!("{name}: {}", message.into()) })
    }

    fn require(&self, ok: bool, section: &str, key: &str, message: impl Into<String>) -> Result<(), ConfigError> {
        if ok {
            Ok(())
        } else {
            self.fail(section, key, message)
        }
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

/// Parses and validates a configuration for `experiment`. `seed_override`
/// replaces the file's seed.
pub fn load(source: &str, experiment: Experiment, seed_override: Option<u64>) -> Result<Resolved, ConfigError> {
    let mut config: RunConfig = toml::from_str(source).map_err(|e| {
        let line = e.span().map(|s| source[..s.start].matches('\n').count() + 1);
        ConfigError { line, message: e.message().to_string() }
    })?;
    if let Some(s) = seed_override {
        config.seed = s;
    }
    let c = Checker { source };
    if let Some(e) = config.experiment {
        c.require(
            e == experiment,
            "",
            "experiment",
            format!("file is for '{}', command is '{}'", e.name(), experiment.name()),
        )?;
    }
    config.experiment = Some(experiment);

    let g = &config.grid;
    let grid = GridSpec::new(g.dim, g.n, g.length).or_else(|e| c.fail("grid", "n", e.to_string()))?;
    let stable = StableParams::new(config.stable.alpha, g.dim).or_else(|e| c.fail("stable", "alpha", e.to_string()))?;

    let default_kernel = if g.dim == 2 { "riesz-pair" } else { "hilbert" };
    let kernel_name = config.kernel.name.as_deref().unwrap_or(default_kernel).trim().to_string();
    config.kernel.name = Some(kernel_name.clone());
    let (kernel, drift) = if kernel_name == "riesz-pair" {
        c.require(g.dim == 2, "kernel", "name", "riesz-pair needs grid.dim = 2")?;
        c.require(config.kernel.direction.is_none(), "kernel", "direction", "riesz-pair takes no direction")?;
        (CzKernel::parse("riesz:1", 2, g.length).expect("riesz:1 parses in d = 2"), Drift::RieszPair)
    } else {
        let kernel =
            CzKernel::parse(&kernel_name, g.dim, g.length).or_else(|e| c.fail("kernel", "name", e.to_string()))?;
        let drift = Drift::from_kernel(&kernel, g.dim, config.kernel.direction)
            .or_else(|e| c.fail("kernel", "name", e.to_string()))?;
        (kernel, drift)
    };

    let initial = resolve_initial(&c, &config, grid)?;
    check_sections(&c, &config, &drift)?;
    Ok(Resolved { config, grid, stable, kernel, drift, initial })
}

fn resolve_initial(c: &Checker, config: &RunConfig, grid: GridSpec) -> Result<InitialData, ConfigError> {
    let ini = &config.initial;
    let mid = 0.5 * grid.length();
    let center = ini.center.unwrap_or([mid, mid]);
    let preset = match ini.preset.as_str() {
        "gaussian" => Preset::Gaussian { center, width: ini.width, amplitude: ini.amplitude },
        "signed-double-bump" => {
            let center = ini.center.unwrap_or([0.25 * grid.length(), mid]);
            Preset::SignedDoubleBump { center, width: ini.width, amplitude: ini.amplitude }
        }
        "random-band-limited" => Preset::RandomBandLimited {
            k_max: ini.k_max,
            amplitude: ini.amplitude,
            offset: ini.offset,
            seed: ini.seed.unwrap_or(config.seed),
        },
        "tent" => Preset::Tent { center, half_width: ini.half_width, height: ini.height },
        "box" => Preset::Box { center, half_width: ini.half_width, height: ini.height },
        "expression" => {
            let Some(src) = &ini.expression else {
                return c.fail("initial", "expression", "preset 'expression' needs an expression");
            };
            return from_expression(grid, src).or_else(|e| c.fail("initial", "expression", e.to_string()));
        }
        "file" => {
            let Some(path) = &ini.file else {
                return c.fail("initial", "file", "preset 'file' needs a file");
            };
            let field = std::fs::File::open(path)
                .map_err(|e| e.to_string())
                .and_then(|f| read_field(&mut std::io::BufReader::new(f)).map_err(|e| e.to_string()))
                .or_else(|e| c.fail("initial", "file", format!("{}: {e}", path.display())))?;
            if let Err(e) = field.grid().check_same(&grid) {
                return c.fail("initial", "file", e.to_string());
            }
            return Ok(InitialData::new(field));
        }
        other => {
            return c.fail(
                "initial",
                "preset",
                format!("unknown preset '{other}' (gaussian, signed-double-bump, random-band-limited, tent, box, expression, file)"),
            )
        }
    };
    if ini.file.is_some() {
        return c.fail("initial", "file", "only the 'file' preset takes a file");
    }
    if ini.expression.is_some() {
        return c.fail("initial", "expression", "only the 'expression' preset takes an expression");
    }
    preset.sample(grid).or_else(|e| c.fail("initial", "preset", e.to_string()))
}

fn check_sections(c: &Checker, config: &RunConfig, drift: &Drift) -> Result<(), ConfigError> {
    let alpha = config.stable.alpha;
    let d = config.grid.dim as f64;
    match config.experiment.expect("experiment is resolved before section checks") {
        Experiment::Decay => {
            let dc = &config.decay;
            c.require(!dc.alphas.is_empty(), "decay", "alphas", "needs at least one alpha")?;
            for &a in &dc.alphas {
                StableParams::new(a, config.grid.dim).or_else(|e| c.fail("decay", "alphas", e.to_string()))?;
            }
            c.require(!dc.pairs.is_empty(), "decay", "pairs", "needs at least one (q, m) pair")?;
            for &[q, m] in &dc.pairs {
                c.require(
                    q >= 1.0 && q.is_finite() && m >= q,
                    "decay",
                    "pairs",
                    format!("pair ({q}, {m}) needs m >= q >= 1"),
                )?;
            }
            c.require(
                positive(dc.t_min) && dc.t_max > dc.t_min && dc.t_max.is_finite(),
                "decay",
                "t_max",
                "needs 0 < t_min < t_max",
            )?;
            c.require(dc.count >= 4, "decay", "count", "needs at least 4 times")?;
            c.require(positive(dc.tolerance), "decay", "tolerance", "must be positive")?;
        }
        Experiment::Eta => check_eta(c, &config.eta, "eta", config.eta.p, alpha, d)?,
        Experiment::Solve => {
            let s = &config.solve;
            c.require(s.p > 2.0 && s.p.is_finite(), "solve", "p", "needs p > 2")?;
            c.require(positive(s.t_end), "solve", "t_end", "must be positive")?;
            c.require(s.steps >= 2, "solve", "steps", "needs at least 2 steps")?;
            c.require(s.nodes >= 2 && s.nodes % 2 == 0, "solve", "nodes", "needs an even count >= 2")?;
            c.require(s.max_iter >= 1, "solve", "max_iter", "needs at least one iteration")?;
            c.require(s.tol >= 0.0 && s.tol.is_finite(), "solve", "tol", "must be finite and nonnegative")?;
            if let Some(w) = s.relaxation {
                c.require(w > 0.0 && w <= 1.0, "solve", "relaxation", "must lie in (0, 1]")?;
            }
            c.require(s.weak_max_mode >= 1, "solve", "weak_max_mode", "must be at least 1")?;
            if s.certify {
                c.require(s.horizon_candidates >= 2, "solve", "horizon_candidates", "needs at least 2")?;
                check_eta(c, &config.eta, "solve", s.p, alpha, d)?;
            }
        }
        Experiment::Particles => {
            let pc = &config.particles;
            c.require(pc.n >= 2, "particles", "n", "needs at least 2 particles")?;
            c.require(positive(pc.t_end), "particles", "t_end", "must be positive")?;
            c.require(pc.steps >= 1, "particles", "steps", "needs at least one step")?;
            if let Some(e) = pc.eps_kernel {
                c.require(positive(e), "particles", "eps_kernel", "must be positive")?;
            }
            c.require(pc.iterations == 0 || pc.iterations >= 2, "particles", "iterations", "must be 0 or at least 2")?;
            c.require(pc.tol >= 0.0 && pc.tol.is_finite(), "particles", "tol", "must be finite and nonnegative")?;
            c.require(pc.p >= 1.0 && pc.p.is_finite(), "particles", "p", "needs finite p >= 1")?;
            if let Some(h) = pc.bandwidth {
                let dx = config.grid.length / config.grid.n as f64;
                c.require(h >= dx, "particles", "bandwidth", format!("must be at least the grid spacing {dx}"))?;
            }
            if !drift.is_zero() {
                let l = config.grid.length;
                drift.pointwise_components(l).or_else(|e| c.fail("kernel", "name", e.to_string()))?;
            }
        }
        Experiment::Compare => {
            let cc = &config.compare;
            c.require(
                !cc.solve_run.as_os_str().is_empty(),
                "compare",
                "solve_run",
                "must name a solve output directory",
            )?;
            c.require(
                !cc.particle_runs.is_empty(),
                "compare",
                "particle_runs",
                "must name at least one particles output directory",
            )?;
        }
    }
    Ok(())
}

/// `p` is the exponent the probe will run with (`solve.p` inside the solve suite).
/// `section` names where `p` came from.
fn check_eta(c: &Checker, e: &EtaCfg, section: &str, p: f64, alpha: f64, d: f64) -> Result<(), ConfigError> {
    c.require(p >= 2.0 && p.is_finite(), section, "p", "needs p >= 2")?;
    if alpha < 2.0 {
        c.require(p > d / (alpha - 1.0), section, "p", format!("needs p > d/(alpha - 1) = {}", d / (alpha - 1.0)))?;
    }
    c.require(
        positive(e.t_min) && e.t_max > e.t_min && e.t_max.is_finite(),
        "eta",
        "t_max",
        "needs 0 < t_min < t_max",
    )?;
    c.require(e.count >= 2, "eta", "count", "needs at least 2 horizons")?;
    c.require(e.steps >= 2, "eta", "steps", "needs at least 2 steps")?;
    c.require(e.trials >= 16, "eta", "trials", "needs at least 16 trials")?;
    Ok(())
}

/// Reads and validates a configuration file.
pub fn load_file(path: &Path, experiment: Experiment, seed_override: Option<u64>) -> Result<Resolved, ConfigError> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
    load(&source, experiment, seed_override)
}
