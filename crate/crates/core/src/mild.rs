//! Mild solutions of `du/dt = -(-Delta)^(alpha/2) u - div(u B(u))` on the torus.
//!
//! The Duhamel form is `u = y - B(u, u)` with `y(t) = p_t * u0` and
//! `B(u, v)(t) = int_0^t div p_{t-s} * (u_s B(v_s)) ds`. Trajectories carry the
//! `sup_t ||u(t)||_p` norm.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config, param, Error, Result};
use crate::fraclap::StableParams;
use crate::grid::{Field, GridSpec, SpectralField};
use crate::semigroup::Semigroup;
use crate::singular::{CzKernel, Multiplier, PointwiseKernel};
use crate::special::{fit_power_law, simpson_weights};
use crate::spectral::{from_spectral, to_spectral, SymbolTable};

/// Fields sampled at increasing times starting from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrajectory {
    grid: GridSpec,
    times: Vec<f64>,
    frames: Vec<Field>,
}

impl FieldTrajectory {
    pub fn new(times: Vec<f64>, frames: Vec<Field>) -> Result<Self> {
        if frames.is_empty() || times.len() != frames.len() {
            return param("trajectory needs one or more frames, one per time");
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return param("trajectory times must start at 0 and increase strictly");
        }
        let grid = *frames[0].grid();
        for f in &frames[1..] {
            grid.check_same(f.grid())?;
        }
        Ok(Self { grid, times, frames })
    }

    /// The same field at every time.
    pub fn constant(f: &Field, times: &[f64]) -> Result<Self> {
        Self::new(times.to_vec(), vec![f.clone(); times.len()])
    }

    pub fn zeros(grid: GridSpec, times: &[f64]) -> Result<Self> {
        Self::constant(&Field::zeros(grid), times)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[Field] {
        &self.frames
    }

    pub fn last(&self) -> &Field {
        self.frames.last().expect("trajectory is never empty")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.times != other.times {
            return config("trajectories live on different time grids");
        }
        Ok(())
    }

    fn zip(&self, other: &Self, op: impl Fn(&Field, &Field) -> Result<Field>) -> Result<Self> {
        self.check_compatible(other)?;
        let frames = self.frames.iter().zip(&other.frames).map(|(a, b)| op(a, b)).collect::<Result<_>>()?;
        Ok(Self { grid: self.grid, times: self.times.clone(), frames })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { grid: self.grid, times: self.times.clone(), frames: self.frames.iter().map(|f| f.scale(a)).collect() }
    }
}

/// `sup_t ||u(t)||_p` over the frames.
pub fn traj_norm(u: &FieldTrajectory, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return param(format!("trajectory norm needs p >= 1, got {p}"));
    }
    Ok(u.frames.iter().map(|f| f.lp_norm(p)).fold(0.0, f64::max))
}

/// `steps + 1` equally spaced times on `[0, t_end]`.
pub fn uniform_times(t_end: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| t_end * i as f64 / steps as f64).collect()
}

/// How the scalar operator `B` becomes a drift vector field.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    /// One dimension: the drift is `u B(u)`.
    Scalar(Multiplier),
    /// Two dimensions: the drift is `u B(u) e` for a unit vector `e`.
    Directed { multiplier: Multiplier, direction: [f64; 2] },
    /// Two dimensions: the drift is `u (R_1 u, R_2 u)`.
    RieszPair,
}

impl Drift {
    /// Builds the drift for a multiplier kernel. In two dimensions a scalar
    /// kernel needs a direction.
    pub fn from_kernel(kern: &CzKernel, dim: usize, direction: Option<[f64; 2]>) -> Result<Self> {
        let multiplier = kern.multiplier_form().ok_or_else(|| {
            Error::UnsupportedForm(format!("{} has no multiplier form for the mild solver", kern.descriptor()))
        })?;
        match (dim, direction) {
            (1, None) => Ok(Drift::Scalar(multiplier)),
            (1, Some(_)) => param("a drift direction is only meaningful in d = 2"),
            (_, Some(e)) => {
                let r = (e[0] * e[0] + e[1] * e[1]).sqrt();
                if !(r > 0.0 && r.is_finite()) {
                    return param(format!("drift direction {e:?} must be a nonzero vector"));
                }
                Ok(Drift::Directed { multiplier, direction: [e[0] / r, e[1] / r] })
            }
            (_, None) => param(format!(
                "kernel {} is scalar; in d = 2 give a drift direction or use riesz-pair",
                kern.descriptor()
            )),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Drift::Scalar(_) => 1,
            _ => 2,
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            Drift::Scalar(m) => CzKernel::Multiplier(m.clone()).descriptor(),
            Drift::Directed { multiplier, direction } => {
                format!(
                    "{} along ({}, {})",
                    CzKernel::Multiplier(multiplier.clone()).descriptor(),
                    direction[0],
                    direction[1]
                )
            }
            Drift::RieszPair => "riesz-pair".into(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Drift::Scalar(Multiplier::Zero) | Drift::Directed { multiplier: Multiplier::Zero, .. })
    }

    /// Symbol of each velocity component `B_j`.
    pub fn component_tables(&self, grid: GridSpec) -> Result<Vec<SymbolTable>> {
        if grid.dim() != self.dim() {
            return config(format!(
                "drift {} needs d = {}, grid has d = {}",
                self.descriptor(),
                self.dim(),
                grid.dim()
            ));
        }
        Ok(match self {
            Drift::Scalar(m) => vec![m.table(grid)],
            Drift::Directed { multiplier, direction } => {
                direction.iter().map(|&e| SymbolTable::new(grid, |k| e * multiplier.symbol(k))).collect()
            }
            Drift::RieszPair => vec![Multiplier::Riesz(0).table(grid), Multiplier::Riesz(1).table(grid)],
        })
    }

    /// Pointwise kernel and coefficient of each velocity component.
    pub fn pointwise_components(&self, length: f64) -> Result<Vec<(PointwiseKernel, f64)>> {
        let missing = |m: &Multiplier| {
            Error::UnsupportedForm(format!(
                "{} has no tabulated pointwise kernel",
                CzKernel::Multiplier(m.clone()).descriptor()
            ))
        };
        match self {
            Drift::Scalar(m) => {
                let b = CzKernel::Multiplier(m.clone()).pointwise_form(1, length).ok_or_else(|| missing(m))?;
                Ok(vec![(b, 1.0)])
            }
            Drift::Directed { multiplier, direction } => {
                let b = CzKernel::Multiplier(multiplier.clone())
                    .pointwise_form(2, length)
                    .ok_or_else(|| missing(multiplier))?;
                Ok(vec![(b, direction[0]), (b, direction[1])])
            }
            Drift::RieszPair => (0..2)
                .map(|j| {
                    let m = Multiplier::Riesz(j);
                    let b = CzKernel::Multiplier(m.clone()).pointwise_form(2, length).ok_or_else(|| missing(&m))?;
                    Ok((b, 1.0))
                })
                .collect(),
        }
    }
}

/// Default number of graded quadrature intervals per Duhamel integral.
pub const DEFAULT_NODES: usize = 32;

/// Spectral operators for one grid, stable index and drift.
#[derive(Debug, Clone)]
pub struct MildSolver {
    grid: GridSpec,
    semigroup: Semigroup,
    drift: Drift,
    velocity: Vec<SymbolTable>,
    /// `i k_j` per axis.
    divergence: Vec<Vec<Complex64>>,
    nodes: usize,
}

impl MildSolver {
    pub fn new(grid: GridSpec, s: &StableParams, drift: Drift) -> Result<Self> {
        let velocity = drift.component_tables(grid)?;
        let semigroup = Semigroup::new(grid, s);
        let divergence = (0..grid.dim()).map(|j| semigroup.derivative_symbol(j).to_vec()).collect();
        Ok(Self { grid, semigroup, drift, velocity, divergence, nodes: DEFAULT_NODES })
    }

    /// Sets the number of graded intervals (even, at least 2).
    pub fn with_nodes(mut self, nodes: usize) -> Result<Self> {
        if nodes < 2 || nodes % 2 != 0 {
            return param(format!("graded quadrature needs an even number of intervals >= 2, got {nodes}"));
        }
        self.nodes = nodes;
        Ok(self)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.semigroup.alpha()
    }

    pub fn drift(&self) -> &Drift {
        &self.drift
    }

    pub fn semigroup(&self) -> &Semigroup {
        &self.semigroup
    }

    /// Velocity components `B_j(v)`.
    pub fn velocity(&self, v: &Field) -> Result<Vec<Field>> {
        let spec = to_spectral(v);
        self.velocity.iter().map(|t| Ok(from_spectral(&t.apply_spectral(&spec)?))).collect()
    }

    /// `y(t) = p_t * u0` at the given times.
    pub fn heat_trajectory(&self, u0: &Field, times: &[f64]) -> Result<FieldTrajectory> {
        self.grid.check_same(u0.grid())?;
        let spec = to_spectral(u0);
        let frames = times
            .iter()
            .map(|&t| Ok(from_spectral(&self.semigroup.apply_spectral(&spec, t)?)))
            .collect::<Result<_>>()?;
        FieldTrajectory::new(times.to_vec(), frames)
    }

    /// Spectrum of `div(u B(v))`.
    fn divergence_spectrum(&self, u: &Field, v: &Field) -> Result<Vec<Complex64>> {
        let vel = self.velocity(v)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (bj, dj) in vel.iter().zip(&self.divergence) {
            let flux = to_spectral(&u.mul(bj)?);
            for ((o, f), d) in out.iter_mut().zip(flux.coeffs()).zip(dj) {
                *o += f * d;
            }
        }
        Ok(out)
    }

    /// `B(u, v)` at every time of the common grid.
    ///
    /// The source `div(u_s B(v_s))` is interpolated in time with 4-point
    /// Lagrange stencils in spectral space. For each output time `t` the
    /// integral over `s` uses the graded nodes `s_j = t (1 - (1 - j/J)^g)`,
    /// `g = alpha/(alpha - 1)`, with composite Simpson weights in `j/J`.
    pub fn duhamel(&self, u: &FieldTrajectory, v: &FieldTrajectory) -> Result<FieldTrajectory> {
        u.check_compatible(v)?;
        self.grid.check_same(u.grid())?;
        let times = u.times();
        let sources = u
            .frames()
            .iter()
            .zip(v.frames())
            .map(|(a, b)| self.divergence_spectrum(a, b))
            .collect::<Result<Vec<_>>>()?;
        let alpha = self.alpha();
        let gamma = if alpha < 2.0 { alpha / (alpha - 1.0) } else { 2.0 };
        let j_max = self.nodes;
        let sigma: Vec<f64> = (0..=j_max).map(|j| j as f64 / j_max as f64).collect();
        let w_sigma = simpson_weights(&sigma);
        let symbol = self.semigroup.symbol();
        let len = self.grid.len();

        let mut frames = Vec::with_capacity(times.len());
        frames.push(Field::zeros(self.grid));
        let mut acc = vec![Complex64::new(0.0, 0.0); len];
        for &t in &times[1..] {
            acc.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for j in 0..j_max {
                let rest = 1.0 - sigma[j];
                let s = t * (1.0 - rest.powf(gamma));
                let weight = w_sigma[j] * t * gamma * rest.powf(gamma - 1.0);
                let (start, coef) = lagrange_stencil(times, s);
                let lag = t - s;
                for q in 0..len {
                    let mut g = Complex64::new(0.0, 0.0);
                    for (l, c) in coef.iter().enumerate() {
                        g += sources[start + l][q] * *c;
                    }
                    acc[q] += g * (weight * (-lag * symbol[q]).exp());
                }
            }
            // the sigma = 1 node carries zero Jacobian for alpha < 2
            if gamma == 1.0 {
                let (start, coef) = lagrange_stencil(times, t);
                for q in 0..len {
                    for (l, c) in coef.iter().enumerate() {
                        acc[q] += sources[start + l][q] * (*c * w_sigma[j_max] * t);
                    }
                }
            }
            frames.push(from_spectral(&SpectralField::new(self.grid, acc.clone())?));
        }
        FieldTrajectory::new(times.to_vec(), frames)
    }
}

/// First frame index and weights of the (up to) 4-point Lagrange stencil around `s`.
fn lagrange_stencil(times: &[f64], s: f64) -> (usize, Vec<f64>) {
    let m = times.len();
    let width = m.min(4);
    let i = match times.iter().position(|&t| t > s) {
        Some(0) => 0,
        Some(k) => k - 1,
        None => m - 1,
    };
    let start = i.saturating_sub(1).min(m - width);
    let nodes = &times[start..start + width];
    let coef = (0..width)
        .map(|a| (0..width).filter(|&b| b != a).map(|b| (s - nodes[b]) / (nodes[a] - nodes[b])).product::<f64>())
        .collect();
    (start, coef)
}

pub fn duhamel_bilinear(
    u: &FieldTrajectory,
    v: &FieldTrajectory,
    drift: &Drift,
    s: &StableParams,
) -> Result<FieldTrajectory> {
    MildSolver::new(*u.grid(), s, drift.clone())?.duhamel(u, v)
}

/// Which candidate exponent of `eta(T)` a fit matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentMatch {
    /// `1 - 1/alpha`.
    Stated,
    /// `1 - 1/alpha - d/(alpha p)`.
    Sharp,
    Neither,
}

impl ExponentMatch {
    pub fn label(&self) -> &'static str {
        match self {
            ExponentMatch::Stated => "1-1/alpha",
            ExponentMatch::Sharp => "1-1/alpha-d/(alpha p)",
            ExponentMatch::Neither => "neither",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaPoint {
    pub t: f64,
    pub eta: f64,
}

/// Measured bilinear constants and their power-law fit.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaEstimate {
    pub points: Vec<EtaPoint>,
    pub exponent: f64,
    /// Natural log of the fitted prefactor.
    pub intercept: f64,
    /// RMS residual of the log-log fit.
    pub fit_residual: f64,
    pub stated_exponent: f64,
    pub sharp_exponent: f64,
    pub matched: ExponentMatch,
}

/// Tolerance for declaring that a fitted exponent matches a candidate.
pub const EXPONENT_MATCH_TOL: f64 = 0.1;

/// Width factors `c` of the deterministic bump ladder, width `c T^(1/alpha)`.
const WIDTH_LADDER: [f64; 7] = [0.35, 0.5, 0.7, 1.0, 1.4, 2.0, 2.8];

fn bump_field<R: Rng>(grid: GridSpec, width: f64, count: usize, rng: &mut R, centered: bool) -> Result<Field> {
    let mut centers = Vec::new();
    for i in 0..count {
        let c = if centered && i == 0 {
            [0.5 * grid.length(); 2]
        } else {
            [rng.random_range(0.0..grid.length()), rng.random_range(0.0..grid.length())]
        };
        let sign = if centered && i == 0 || rng.random::<bool>() { 1.0 } else { -1.0 };
        centers.push((c, sign));
    }
    Field::from_fn(grid, |x| {
        centers
            .iter()
            .map(|(c, sign)| {
                let z0 = grid.wrap(x[0] - c[0]);
                let z1 = if grid.dim() == 2 { grid.wrap(x[1] - c[1]) } else { 0.0 };
                sign * (-(z0 * z0 + z1 * z1) / (2.0 * width * width)).exp()
            })
            .sum()
    })
}

/// Measures `eta(T) = max ||B(u, v)|| / (||u|| ||v||)` for each horizon.
///
/// Test pairs are time-constant. The first trials run a deterministic ladder
/// of centered Gaussian bumps (`u = v`, widths `c T^(1/alpha)`); the rest use
/// one or two bumps with random centers, signs and log-uniform width factors
/// in `[1/4, 4]`, with `v` independent of `u` half of the time.
pub fn eta_estimate(
    solver: &MildSolver,
    p: f64,
    t_list: &[f64],
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<EtaEstimate> {
    let grid = *solver.grid();
    let alpha = solver.alpha();
    let d = grid.dim() as f64;
    if !(p >= 2.0) {
        return param(format!("eta estimate needs p >= 2, got {p}"));
    }
    if alpha < 2.0 && !(p > d / (alpha - 1.0)) {
        return param(format!("eta estimate needs p > d/(alpha - 1) = {}, got {p}", d / (alpha - 1.0)));
    }
    if trials < 16 {
        return param(format!("eta estimate needs at least 16 trials, got {trials}"));
    }
    if t_list.len() < 2 || t_list.iter().any(|&t| !(t > 0.0)) || t_list.windows(2).any(|w| !(w[1] > w[0])) {
        return param("eta estimate needs two or more positive increasing horizons");
    }
    if steps < 2 {
        return param("eta estimate needs at least 2 time steps");
    }
    let mut points = Vec::with_capacity(t_list.len());
    for &t_end in t_list {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times = uniform_times(t_end, steps);
        let scale = t_end.powf(1.0 / alpha);
        let mut best = 0.0_f64;
        for trial in 0..trials {
            let (u, v) = if trial < WIDTH_LADDER.len() {
                let f = bump_field(grid, WIDTH_LADDER[trial] * scale, 1, &mut rng, true)?;
                (f.clone(), f)
            } else {
                let c = (rng.random_range((0.25f64).ln()..(4.0f64).ln())).exp();
                let count = rng.random_range(1..=2);
                let f = bump_field(grid, c * scale, count, &mut rng, false)?;
                let g = if rng.random::<bool>() {
                    let c2 = (rng.random_range((0.25f64).ln()..(4.0f64).ln())).exp();
                    bump_field(grid, c2 * scale, count, &mut rng, false)?
                } else {
                    f.clone()
                };
                (f, g)
            };
            let (nu, nv) = (u.lp_norm(p), v.lp_norm(p));
            if nu == 0.0 || nv == 0.0 {
                continue;
            }
            let ut = FieldTrajectory::constant(&u, &times)?;
            let vt = FieldTrajectory::constant(&v, &times)?;
            let out = solver.duhamel(&ut, &vt)?;
            best = best.max(traj_norm(&out, p)? / (nu * nv));
        }
        points.push(EtaPoint { t: t_end, eta: best });
    }
    let stated = 1.0 - 1.0 / alpha;
    let sharp = stated - d / (alpha * p);
    let (exponent, intercept, fit_residual) = if points.iter().all(|pt| pt.eta > 0.0) {
        let ts: Vec<f64> = points.iter().map(|pt| pt.t).collect();
        let es: Vec<f64> = points.iter().map(|pt| pt.eta).collect();
        let fit = fit_power_law(&ts, &es);
        (fit.slope, fit.intercept, fit.rms_residual)
    } else {
        // the zero operator: no power law to fit
        (0.0, f64::NEG_INFINITY, 0.0)
    };
    let matched = if (exponent - stated).abs() <= EXPONENT_MATCH_TOL {
        ExponentMatch::Stated
    } else if (exponent - sharp).abs() <= EXPONENT_MATCH_TOL {
        ExponentMatch::Sharp
    } else {
        ExponentMatch::Neither
    };
    Ok(EtaEstimate {
        points,
        exponent,
        intercept,
        fit_residual,
        stated_exponent: stated,
        sharp_exponent: sharp,
        matched,
    })
}

/// `eta(T) = safety * coefficient * T^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaModel {
    pub coefficient: f64,
    pub exponent: f64,
    pub safety: f64,
}

impl EtaModel {
    pub const DEFAULT_SAFETY: f64 = 1.5;

    pub fn from_estimate(e: &EtaEstimate) -> Self {
        Self { coefficient: e.intercept.exp(), exponent: e.exponent, safety: Self::DEFAULT_SAFETY }
    }

    pub fn eta(&self, t: f64) -> f64 {
        self.safety * self.coefficient * t.powf(self.exponent)
    }
}

/// Radius `(1 - sqrt(1 - 4 eta y)) / (2 eta)` of the invariant ball, if `4 eta y < 1`.
pub fn ball_radius(eta: f64, y_norm: f64) -> Option<f64> {
    let q = 4.0 * eta * y_norm;
    if !(q < 1.0) {
        return None;
    }
    if eta == 0.0 {
        return Some(y_norm);
    }
    // rationalized form avoids cancellation for small 4 eta y
    Some(2.0 * y_norm / (1.0 + (1.0 - q).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalExistenceCert {
    pub t_star: f64,
    pub eta_at_t_star: f64,
    pub y_norm: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Certified(LocalExistenceCert),
    /// Even the smallest searched horizon gives `4 eta ||y|| >= 1`.
    NotCertified {
        t_min: f64,
        product: f64,
    },
}

/// Largest horizon on `search` with `4 eta(T) ||y||_T < 1`, where `y = p_t * u0`
/// is sampled with `steps` uniform steps on `[0, T]`.
pub fn local_horizon(
    solver: &MildSolver,
    u0: &Field,
    p: f64,
    model: &EtaModel,
    search: &[f64],
    steps: usize,
) -> Result<Horizon> {
    if !(p > 2.0) {
        return param(format!("local horizon needs p > 2, got {p}"));
    }
    if search.is_empty() || search.iter().any(|&t| !(t > 0.0)) {
        return param("horizon search grid must hold positive times");
    }
    let mut ts = search.to_vec();
    ts.sort_by(f64::total_cmp);
    let mut best = None;
    let mut first_product = f64::NAN;
    for (i, &t) in ts.iter().enumerate() {
        let y = traj_norm(&solver.heat_trajectory(u0, &uniform_times(t, steps))?, p)?;
        let eta = model.eta(t);
        if i == 0 {
            first_product = 4.0 * eta * y;
        }
        if let Some(radius) = ball_radius(eta, y) {
            best = Some(LocalExistenceCert { t_star: t, eta_at_t_star: eta, y_norm: y, radius });
        }
    }
    Ok(match best {
        Some(c) => Horizon::Certified(c),
        None => Horizon::NotCertified { t_min: ts[0], product: first_product },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Weight of the new iterate; `None` means plain iteration.
    pub relaxation: Option<f64>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { max_iter: 30, tol: 1e-10, relaxation: None }
    }
}

#[derive(Debug, Clone)]
pub struct PicardResult {
    pub trajectory: FieldTrajectory,
    /// `||u^(n+1) - u^(n)||` per iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// `||u^(0)||`, the norm of the free evolution.
    pub initial_norm: f64,
}

/// Iterates `u^(n+1) = y - B(u^(n), u^(n))` from `u^(0) = y`.
///
/// Fails with a divergence error once an iterate exceeds ten times the
/// guaranteed bound `2 ||y||`.
pub fn picard_solve(
    solver: &MildSolver,
    u0: &Field,
    p: f64,
    times: &[f64],
    opts: &PicardOptions,
) -> Result<PicardResult> {
    if opts.max_iter == 0 {
        return param("picard iteration needs max_iter >= 1");
    }
    if let Some(w) = opts.relaxation {
        if !(w > 0.0 && w <= 1.0) {
            return param(format!("relaxation weight must lie in (0, 1], got {w}"));
        }
    }
    let y = solver.heat_trajectory(u0, times)?;
    let y_norm = traj_norm(&y, p)?;
    let limit = 10.0 * 2.0 * y_norm;
    let mut u = y.clone();
    let mut residuals = Vec::new();
    let mut converged = false;
    for iteration in 1..=opts.max_iter {
        let mut next = y.sub(&solver.duhamel(&u, &u)?)?;
        if let Some(w) = opts.relaxation {
            next = u.scale(1.0 - w).add(&next.scale(w))?;
        }
        let norm = traj_norm(&next, p)?;
        if !(norm <= limit) {
            return Err(Error::Divergence { iteration, norm, limit });
        }
        let r = traj_norm(&next.sub(&u)?, p)?;
        residuals.push(r);
        u = next;
        if r < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(PicardResult { trajectory: u, residuals, converged, initial_norm: y_norm })
}

/// One real Fourier mode `a cos(k.x) + b sin(k.x)`, `k = 2 pi m / L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigMode {
    pub m: [i64; 2],
    pub cos: f64,
    pub sin: f64,
}

/// Test function `psi(x, s) = phi(x) chi(s)` with `phi` a trigonometric
/// polynomial and `chi` a polynomial of degree at most 4.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub modes: Vec<TrigMode>,
    /// Coefficients of `chi`, lowest degree first.
    pub chi: Vec<f64>,
}

impl TestFunction {
    pub fn new(modes: Vec<TrigMode>, chi: Vec<f64>) -> Result<Self> {
        if chi.is_empty() || chi.len() > 5 {
            return param("temporal factor must have degree 0..=4");
        }
        Ok(Self { modes, chi })
    }

    /// `psi = 1`.
    pub fn constant() -> Self {
        Self { modes: vec![TrigMode { m: [0, 0], cos: 1.0, sin: 0.0 }], chi: vec![1.0] }
    }

    /// One to three nonconstant modes with `|m_i| <= max_mode` and a random quartic `chi`.
    pub fn random<R: Rng>(dim: usize, max_mode: i64, rng: &mut R) -> Self {
        let max_mode = max_mode.max(1);
        let count = rng.random_range(1..=3);
        let modes = (0..count)
            .map(|_| {
                let m = loop {
                    let m1 = if dim == 2 { rng.random_range(-max_mode..=max_mode) } else { 0 };
                    let m = [rng.random_range(0..=max_mode), m1];
                    if m != [0, 0] {
                        break m;
                    }
                };
                TrigMode { m, cos: rng.random_range(-1.0..1.0), sin: rng.random_range(-1.0..1.0) }
            })
            .collect();
        let chi = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { modes, chi }
    }

    fn chi(&self, s: f64) -> f64 {
        self.chi.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    fn chi_dot(&self, s: f64) -> f64 {
        self.chi.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, c)| acc * s + i as f64 * c)
    }

    fn wavevector(&self, grid: &GridSpec, mode: &TrigMode) -> [f64; 2] {
        let f = 2.0 * std::f64::consts::PI / grid.length();
        [f * mode.m[0] as f64, if grid.dim() == 2 { f * mode.m[1] as f64 } else { 0.0 }]
    }

    /// `(phi, (-Delta)^(alpha/2) phi, grad phi)` on the grid.
    fn spatial(&self, grid: GridSpec, alpha: f64) -> Result<(Field, Field, Vec<Field>)> {
        let mut phi = vec![0.0; grid.len()];
        let mut lap = vec![0.0; grid.len()];
        let mut grad = vec![vec![0.0; grid.len()]; grid.dim()];
        for mode in &self.modes {
            let k = self.wavevector(&grid, mode);
            let kk = (k[0] * k[0] + k[1] * k[1]).sqrt().powf(alpha);
            for i in 0..grid.len() {
                let x = grid.coords(i);
                let (sn, cs) = (k[0] * x[0] + k[1] * x[1]).sin_cos();
                let v = mode.cos * cs + mode.sin * sn;
                phi[i] += v;
                lap[i] += kk * v;
                let dv = -mode.cos * sn + mode.sin * cs;
                for (j, g) in grad.iter_mut().enumerate() {
                    g[i] += k[j] * dv;
                }
            }
        }
        Ok((
            Field::new(grid, phi)?,
            Field::new(grid, lap)?,
            grad.into_iter().map(|g| Field::new(grid, g)).collect::<Result<_>>()?,
        ))
    }
}

fn inner(a: &Field, b: &Field) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>() * a.grid().cell_volume()
}

/// `| int psi(t) u_t - int psi(0) u_0 - int_0^t int [d_s psi - (-Delta)^(alpha/2) psi + B(u_s).grad psi] u_s |`
/// with the time integral by composite Simpson on the trajectory times.
pub fn weak_residual(solver: &MildSolver, u: &FieldTrajectory, psi: &TestFunction) -> Result<f64> {
    solver.grid().check_same(u.grid())?;
    let (phi, lap, grad) = psi.spatial(*u.grid(), solver.alpha())?;
    let times = u.times();
    let w = simpson_weights(times);
    let mut integral = 0.0;
    for ((&s, f), wk) in times.iter().zip(u.frames()).zip(&w) {
        let vel = solver.velocity(f)?;
        let mut bracket: Vec<f64> = lap.values().iter().map(|v| -psi.chi(s) * v).collect();
        for (bj, gj) in vel.iter().zip(&grad) {
            for ((o, b), g) in bracket.iter_mut().zip(bj.values()).zip(gj.values()) {
                *o += psi.chi(s) * b * g;
            }
        }
        let bracket = Field::new(*u.grid(), bracket)?;
        integral += wk * (psi.chi_dot(s) * inner(&phi, f) + inner(&bracket, f));
    }
    let t = u.horizon();
    let lhs = psi.chi(t) * inner(&phi, u.last()) - psi.chi(0.0) * inner(&phi, &u.frames()[0]);
    Ok((lhs - integral).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn hilbert_solver(n: usize, alpha: f64) -> MildSolver {
        let g = GridSpec::new(1, n, 2.0 * PI).unwrap();
        MildSolver::new(g, &StableParams::new(alpha, 1).unwrap(), Drift::Scalar(Multiplier::Hilbert)).unwrap()
    }

    fn zero_solver(n: usize, alpha: f64) -> MildSolver {
        let g = GridSpec::new(1, n, 2.0 * PI).unwrap();
        MildSolver::new(g, &StableParams::new(alpha, 1).unwrap(), Drift::Scalar(Multiplier::Zero)).unwrap()
    }

    #[test]
    fn trajectory_norm_cases() {
        let g = GridSpec::new(1, 16, 1.0).unwrap();
        let z = FieldTrajectory::zeros(g, &[0.0, 1.0]).unwrap();
        assert_eq!(traj_norm(&z, 2.0).unwrap(), 0.0);
        let one = FieldTrajectory::new(vec![0.0], vec![Field::constant(g, 2.5)]).unwrap();
        assert!((traj_norm(&one, 3.0).unwrap() - 2.5).abs() < 1e-14);
        let two = FieldTrajectory::new(vec![0.0, 0.5], vec![Field::constant(g, 1.0), Field::constant(g, 3.0)]).unwrap();
        assert_eq!(traj_norm(&two, 1.0).unwrap(), 3.0);
        assert!(traj_norm(&two, 0.5).is_err());
        assert!(FieldTrajectory::new(vec![], vec![]).is_err());
        assert!(FieldTrajectory::new(vec![0.1], vec![Field::zeros(g)]).is_err());
        assert!(FieldTrajectory::new(vec![0.0, 0.0], vec![Field::zeros(g), Field::zeros(g)]).is_err());
    }

    #[test]
    fn duhamel_matches_two_mode_oracle() {
        // u_s = v_s = e^{-s} sin x, Hilbert drift:
        // B(u,u)(t) = -cos(2x) e^{-t 2^a} (e^{(2^a - 2) t} - 1) / (2^a - 2)
        let alpha = 1.5;
        let solver = hilbert_solver(64, alpha);
        let g = *solver.grid();
        let times = uniform_times(0.5, 64);
        let frames = times.iter().map(|&s| Field::from_fn(g, |x| (-s).exp() * x[0].sin()).unwrap()).collect();
        let u = FieldTrajectory::new(times.clone(), frames).unwrap();
        let out = solver.duhamel(&u, &u).unwrap();
        let lam = 2f64.powf(alpha);
        let mut worst = 0.0_f64;
        for (t, f) in times.iter().zip(out.frames()) {
            let amp = (-t * lam).exp() * (((lam - 2.0) * t).exp() - 1.0) / (lam - 2.0);
            let expect = Field::from_fn(g, |x| -amp * (2.0 * x[0]).cos()).unwrap();
            worst = worst.max(f.sub(&expect).unwrap().max_abs());
        }
        assert!(worst < 1e-5, "max error {worst}");
        assert_eq!(out.frames()[0].max_abs(), 0.0);
    }

    #[test]
    fn duhamel_vanishes_on_zero_input() {
        let solver = hilbert_solver(32, 1.5);
        let g = *solver.grid();
        let times = uniform_times(0.3, 8);
        let u = FieldTrajectory::constant(&Field::from_fn(g, |x| x[0].cos()).unwrap(), &times).unwrap();
        let z = FieldTrajectory::zeros(g, &times).unwrap();
        assert_eq!(traj_norm(&solver.duhamel(&u, &z).unwrap(), 2.0).unwrap(), 0.0);
        assert_eq!(traj_norm(&solver.duhamel(&z, &u).unwrap(), 2.0).unwrap(), 0.0);
        let other = FieldTrajectory::zeros(g, &uniform_times(0.3, 4)).unwrap();
        assert!(solver.duhamel(&u, &other).is_err());
    }

    #[test]
    fn lagrange_stencil_reproduces_cubics() {
        let t = [0.0, 0.1, 0.25, 0.3, 0.5, 0.8];
        for s in [0.0, 0.05, 0.27, 0.49, 0.8] {
            let (start, c) = lagrange_stencil(&t, s);
            let approx: f64 = c.iter().enumerate().map(|(l, w)| w * t[start + l].powi(3)).sum();
            assert!((approx - s.powi(3)).abs() < 1e-14);
        }
    }

    #[test]
    fn riesz_pair_drift_in_two_dimensions() {
        let g = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let s = StableParams::new(1.5, 2).unwrap();
        let solver = MildSolver::new(g, &s, Drift::RieszPair).unwrap();
        let f = Field::from_fn(g, |x| 1.0 + 0.3 * (x[0] + x[1]).sin()).unwrap();
        let times = uniform_times(0.2, 8);
        let res = picard_solve(&solver, &f, 3.0, &times, &PicardOptions::default()).unwrap();
        assert!(res.converged);
        for fr in res.trajectory.frames() {
            assert!((fr.mean() - f.mean()).abs() < 1e-12);
        }
        let kern = CzKernel::parse("hilbert", 1, 1.0).unwrap();
        assert!(Drift::from_kernel(&kern, 2, None).is_err());
        let riesz = CzKernel::parse("riesz:1", 2, 1.0).unwrap();
        assert!(
            matches!(Drift::from_kernel(&riesz, 2, Some([0.0, 2.0])).unwrap(), Drift::Directed { direction, .. } if direction == [0.0, 1.0])
        );
    }

    #[test]
    fn ball_radius_cases() {
        assert!((ball_radius(1.0, 3.0 / 16.0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(ball_radius(2.0, 0.0), Some(0.0));
        assert_eq!(ball_radius(0.0, 1.5), Some(1.5));
        assert_eq!(ball_radius(1.0, 0.25), None);
    }

    #[test]
    fn horizon_scaling_and_zero_data() {
        let solver = hilbert_solver(64, 1.5);
        let g = *solver.grid();
        let model = EtaModel { coefficient: 0.5, exponent: 1.0 - 1.0 / 1.5, safety: 1.0 };
        let search: Vec<f64> = crate::semigroup::log_spaced(1e-4, 10.0, 4000);
        let z = local_horizon(&solver, &Field::zeros(g), 3.0, &model, &search, 4).unwrap();
        assert!(matches!(z, Horizon::Certified(c) if c.radius == 0.0 && (c.t_star - 10.0).abs() < 1e-9));
        // constant data: ||p_t * u0||_p is constant in t, so T* solves 4 C T^e ||u0|| = 1
        let u1 = Field::constant(g, 0.3);
        let u2 = Field::constant(g, 0.6);
        let t1 = match local_horizon(&solver, &u1, 3.0, &model, &search, 4).unwrap() {
            Horizon::Certified(c) => c.t_star,
            h => panic!("{h:?}"),
        };
        let t2 = match local_horizon(&solver, &u2, 3.0, &model, &search, 4).unwrap() {
            Horizon::Certified(c) => c.t_star,
            h => panic!("{h:?}"),
        };
        assert!((t2 / t1 - 0.125).abs() < 0.01, "ratio {}", t2 / t1);
        let big = Field::constant(g, 1e6);
        assert!(matches!(local_horizon(&solver, &big, 3.0, &model, &search, 4).unwrap(), Horizon::NotCertified { .. }));
    }

    #[test]
    fn picard_zero_data_and_zero_kernel() {
        let solver = hilbert_solver(32, 1.5);
        let g = *solver.grid();
        let times = uniform_times(0.5, 16);
        let r = picard_solve(&solver, &Field::zeros(g), 3.0, &times, &PicardOptions::default()).unwrap();
        assert_eq!(r.residuals, vec![0.0]);
        let heat = zero_solver(32, 1.5);
        let u0 = Field::from_fn(g, |x| x[0].sin() + 0.5 * (3.0 * x[0]).cos()).unwrap();
        let r = picard_solve(&heat, &u0, 3.0, &times, &PicardOptions::default()).unwrap();
        assert!(r.converged && r.residuals.len() == 1);
        assert_eq!(r.trajectory, heat.heat_trajectory(&u0, &times).unwrap());
    }

    #[test]
    fn picard_contracts_and_conserves_mass() {
        let solver = hilbert_solver(64, 1.5);
        let g = *solver.grid();
        let u0 = Field::from_fn(g, |x| 1.0 + 0.5 * x[0].sin() + 0.2 * (2.0 * x[0]).cos()).unwrap();
        let times = uniform_times(0.3, 32);
        let r = picard_solve(&solver, &u0, 3.0, &times, &PicardOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r.residuals);
        for w in r.residuals.windows(2) {
            assert!(w[1] < w[0], "{:?}", r.residuals);
        }
        assert!(traj_norm(&r.trajectory, 3.0).unwrap() <= 2.0 * r.initial_norm + 1e-6);
        for f in r.trajectory.frames() {
            assert!((f.mean() - u0.mean()).abs() < 1e-8);
        }
    }

    #[test]
    fn picard_reports_divergence() {
        let solver = hilbert_solver(32, 1.5);
        let g = *solver.grid();
        let u0 = Field::from_fn(g, |x| 400.0 * (x[0].sin() + (3.0 * x[0]).cos())).unwrap();
        let err = picard_solve(&solver, &u0, 3.0, &uniform_times(1.0, 16), &PicardOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
        assert!(err.to_string().contains("2||y||"));
    }

    #[test]
    fn time_refinement_converges_monotonically() {
        let solver = hilbert_solver(32, 1.5);
        let g = *solver.grid();
        let u0 = Field::from_fn(g, |x| 1.0 + 0.6 * x[0].sin()).unwrap();
        let finals: Vec<Field> = [8, 16, 32, 64]
            .iter()
            .map(|&m| {
                let r = picard_solve(&solver, &u0, 3.0, &uniform_times(0.4, m), &PicardOptions::default()).unwrap();
                r.trajectory.last().clone()
            })
            .collect();
        let diffs: Vec<f64> = finals.windows(2).map(|w| w[1].sub(&w[0]).unwrap().lp_norm(3.0)).collect();
        assert!(diffs[0] > diffs[1] && diffs[1] > diffs[2], "{diffs:?}");
    }

    #[test]
    fn weak_residual_constant_and_heat_oracle() {
        let solver = hilbert_solver(64, 1.5);
        let g = *solver.grid();
        let u0 = Field::from_fn(g, |x| 1.0 + 0.5 * x[0].sin()).unwrap();
        let times = uniform_times(0.5, 64);
        let r = picard_solve(&solver, &u0, 3.0, &times, &PicardOptions::default()).unwrap();
        assert!(weak_residual(&solver, &r.trajectory, &TestFunction::constant()).unwrap() < 1e-8);

        let heat = zero_solver(64, 1.5);
        let exact = heat.heat_trajectory(&u0, &times).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let psi = TestFunction::random(1, 3, &mut rng);
            assert!(weak_residual(&heat, &exact, &psi).unwrap() < 1e-6);
        }
        // a wrong trajectory is detected
        let psi = TestFunction::new(vec![TrigMode { m: [1, 0], cos: 0.0, sin: 1.0 }], vec![1.0]).unwrap();
        let stale = FieldTrajectory::constant(&u0, &times).unwrap();
        assert!(weak_residual(&heat, &stale, &psi).unwrap() > 1e-2);
    }

    #[test]
    fn eta_estimate_validation_and_monotone_growth() {
        let g = GridSpec::new(1, 256, 16.0).unwrap();
        let s = StableParams::new(1.5, 1).unwrap();
        let solver = MildSolver::new(g, &s, Drift::Scalar(Multiplier::Hilbert)).unwrap();
        assert!(eta_estimate(&solver, 1.5, &[0.1, 0.2], 8, 16, 1).is_err());
        assert!(eta_estimate(&solver, 3.0, &[0.1, 0.2], 8, 8, 1).is_err());
        let e = eta_estimate(&solver, 3.0, &[0.1, 0.2, 0.4], 8, 16, 1).unwrap();
        assert!(e.points.windows(2).all(|w| w[1].eta >= w[0].eta), "{:?}", e.points);
        let zero = MildSolver::new(g, &s, Drift::Scalar(Multiplier::Zero)).unwrap();
        let ez = eta_estimate(&zero, 3.0, &[0.1, 0.2], 8, 16, 1).unwrap();
        assert!(ez.points.iter().all(|p| p.eta == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn duhamel_is_bilinear(seed in any::<u64>(), a in -2.0f64..2.0) {
            let solver = hilbert_solver(32, 1.5);
            let g = *solver.grid();
            let times = uniform_times(0.2, 6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut traj = || {
                let frames = times.iter().map(|_| crate::spectral::random_band_limited(g, 6, 0.5, &mut rng)).collect();
                FieldTrajectory::new(times.clone(), frames).unwrap()
            };
            let (u, w, v) = (traj(), traj(), traj());
            let lhs = solver.duhamel(&u.scale(a).add(&w).unwrap(), &v).unwrap();
            let rhs = solver.duhamel(&u, &v).unwrap().scale(a).add(&solver.duhamel(&w, &v).unwrap()).unwrap();
            prop_assert!(traj_norm(&lhs.sub(&rhs).unwrap(), 2.0).unwrap() < 1e-10);
            let lhs = solver.duhamel(&v, &u.scale(a).add(&w).unwrap()).unwrap();
            let rhs = solver.duhamel(&v, &u).unwrap().scale(a).add(&solver.duhamel(&v, &w).unwrap()).unwrap();
            prop_assert!(traj_norm(&lhs.sub(&rhs).unwrap(), 2.0).unwrap() < 1e-10);
        }
    }
}
