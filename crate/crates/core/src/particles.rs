//! Interacting particles driven by symmetric alpha-stable noise.
//!
//! Particles start from `|u0| / ||u0||_1` and carry the fixed sign of `u0` at
//! their starting cell; the signed empirical measure `mass/N sum_j w_j
//! delta_{X_j}` represents `u`. Positions are kept unwrapped in `R^d` and
//! reduced to the torus only inside kernels and density estimates.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{config, param, Error, Result};
use crate::fraclap::StableParams;
use crate::grid::{Field, GridSpec};
use crate::metrics::{distance_profile, DistanceReport};
use crate::mild::Drift;
use crate::singular::{cot_poly, PointwiseKernel, PointwiseKind};

/// One standard symmetric stable draw with `E exp(i xi S) = exp(-|xi|^alpha)`
/// (Chambers–Mallows–Stuck).
pub fn standard_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = rng.sample(Exp1);
    let a = alpha;
    (a * v).sin() / v.cos().powf(1.0 / a) * (((1.0 - a) * v).cos() / w).powf((1.0 - a) / a)
}

/// Positive `a`-stable draw with `E exp(-l A) = exp(-l^a)`, `0 < a <= 1` (Kanter).
fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a >= 1.0 {
        return 1.0;
    }
    let u = PI * rng.random::<f64>();
    let w: f64 = rng.sample(Exp1);
    (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a)
}

/// Isotropic standard stable vector with `E exp(i xi.S) = exp(-|xi|^alpha)`.
///
/// In two dimensions this is the sub-Gaussian form `sqrt(A) G`, `G ~ N(0, 2I)`.
pub fn stable_vector<R: Rng + ?Sized>(alpha: f64, dim: usize, rng: &mut R) -> [f64; 2] {
    if dim == 1 {
        return [standard_stable(alpha, rng), 0.0];
    }
    let a = positive_stable(0.5 * alpha, rng).sqrt() * std::f64::consts::SQRT_2;
    let g0: f64 = rng.sample(StandardNormal);
    let g1: f64 = rng.sample(StandardNormal);
    [a * g0, a * g1]
}

/// `n` i.i.d. standard symmetric stable draws.
pub fn sample_stable(s: &StableParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| standard_stable(s.alpha(), &mut rng)).collect()
}

/// Initial positions (flat, `dim` per particle), signs and total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSample {
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
    pub mass: f64,
}

/// Draws cells with probability `|u0| vol / ||u0||_1` and jitters uniformly
/// inside the cell centered on the grid point.
pub fn sample_initial<R: Rng + ?Sized>(u0: &Field, n: usize, rng: &mut R) -> Result<InitialSample> {
    let grid = *u0.grid();
    let mass = u0.lp_norm(1.0);
    if !(mass > 0.0) {
        return param("initial data must have nonzero L^1 norm to be sampled");
    }
    let mut cdf = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    for v in u0.values() {
        acc += v.abs();
        cdf.push(acc);
    }
    let h = grid.spacing();
    let dim = grid.dim();
    let mut positions = Vec::with_capacity(n * dim);
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * acc;
        let cell = cdf.partition_point(|&c| c <= target).min(grid.len() - 1);
        let x = grid.coords(cell);
        for xi in x.iter().take(dim) {
            positions.push(xi + h * (rng.random::<f64>() - 0.5));
        }
        weights.push(if u0.values()[cell] < 0.0 { -1.0 } else { 1.0 });
    }
    Ok(InitialSample { positions, weights, mass })
}

fn fnv1a(words: impl Iterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Pregenerated randomness shared by every Picard iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    seed: u64,
    dim: usize,
    n: usize,
    times: Vec<f64>,
    initial: InitialSample,
    /// `increments[k]` holds the stable increments over `[t_k, t_{k+1}]`, `dim` per particle.
    increments: Vec<Vec<f64>>,
    lineage: u64,
}

impl NoiseBundle {
    /// Initial sample from stream 0 of the seeded generator, increments
    /// `(t_{k+1} - t_k)^(1/alpha) S` from stream 1 in time-major order.
    pub fn generate(u0: &Field, s: &StableParams, n: usize, times: &[f64], seed: u64) -> Result<Self> {
        if n == 0 {
            return param("particle count must be positive");
        }
        if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return param("particle time grid must start at 0 and increase strictly");
        }
        let dim = u0.grid().dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial = sample_initial(u0, n, &mut rng)?;
        rng.set_stream(1);
        let alpha = s.alpha();
        let increments = times
            .windows(2)
            .map(|w| {
                let scale = (w[1] - w[0]).powf(1.0 / alpha);
                let mut step = Vec::with_capacity(n * dim);
                for _ in 0..n {
                    let v = stable_vector(alpha, dim, &mut rng);
                    step.extend(v.iter().take(dim).map(|x| scale * x));
                }
                step
            })
            .collect();
        let lineage = fnv1a(
            [seed, n as u64, dim as u64]
                .into_iter()
                .chain(times.iter().map(|t| t.to_bits()))
                .chain(initial.positions.iter().map(|x| x.to_bits())),
        );
        Ok(Self { seed, dim, n, times: times.to_vec(), initial, increments, lineage })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn initial(&self) -> &InitialSample {
        &self.initial
    }

    pub fn increments(&self, step: usize) -> &[f64] {
        &self.increments[step]
    }

    pub fn lineage(&self) -> u64 {
        self.lineage
    }

    /// Zero-drift paths `X_0 + S_t`.
    pub fn free_paths(&self) -> ParticleEnsemble {
        let mut slices = vec![self.initial.positions.clone()];
        for inc in &self.increments {
            let next = slices.last().unwrap().iter().zip(inc).map(|(x, d)| x + d).collect();
            slices.push(next);
        }
        self.ensemble(slices)
    }

    fn ensemble(&self, slices: Vec<Vec<f64>>) -> ParticleEnsemble {
        ParticleEnsemble {
            dim: self.dim,
            times: self.times.clone(),
            slices,
            weights: self.initial.weights.clone(),
            mass: self.initial.mass,
            lineage: self.lineage,
        }
    }
}

/// Particle paths on a time grid with fixed signs.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    times: Vec<f64>,
    /// `slices[k]` holds all positions at `t_k`, `dim` per particle.
    slices: Vec<Vec<f64>>,
    weights: Vec<f64>,
    mass: f64,
    lineage: u64,
}

impl ParticleEnsemble {
    /// Assembles an ensemble from time-major slices; `lineage` tags the noise it came from.
    pub fn new(
        dim: usize,
        times: Vec<f64>,
        slices: Vec<Vec<f64>>,
        weights: Vec<f64>,
        mass: f64,
        lineage: u64,
    ) -> Result<Self> {
        let n = weights.len();
        if !(1..=2).contains(&dim) || n == 0 {
            return param("ensemble needs d in 1..=2 and at least one particle");
        }
        if times.is_empty() || slices.len() != times.len() || slices.iter().any(|s| s.len() != n * dim) {
            return config("ensemble needs one slice of N * d positions per time");
        }
        if weights.iter().any(|w| w.abs() != 1.0) || !(mass >= 0.0 && mass.is_finite()) {
            return param("ensemble weights must be +-1 and the mass finite and nonnegative");
        }
        Ok(Self { dim, times, slices, weights, mass, lineage })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn lineage(&self) -> u64 {
        self.lineage
    }

    /// Positions at time index `k`, `dim` per particle.
    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    pub fn position(&self, i: usize, k: usize) -> [f64; 2] {
        let s = &self.slices[k];
        if self.dim == 1 {
            [s[i], 0.0]
        } else {
            [s[2 * i], s[2 * i + 1]]
        }
    }

    /// Total signed mass `mass * mean(weights)`.
    pub fn signed_mass(&self) -> f64 {
        self.mass * self.weights.iter().sum::<f64>() / self.n() as f64
    }

    /// Same paths translated by `shift` at every time.
    pub fn shifted(&self, shift: [f64; 2]) -> Self {
        let mut out = self.clone();
        for s in &mut out.slices {
            for (i, x) in s.iter_mut().enumerate() {
                *x += shift[i % self.dim];
            }
        }
        out
    }

    /// Particle-major copy for the path container.
    pub fn to_path_data(&self) -> crate::io::PathData {
        let positions = (0..self.n())
            .map(|i| self.slices.iter().flat_map(|s| s[i * self.dim..(i + 1) * self.dim].iter().copied()).collect())
            .collect();
        crate::io::PathData { dim: self.dim, times: self.times.clone(), positions }
    }
}

/// Default interaction length `L N^(-1/(d+2))`.
pub fn default_eps_kernel(length: f64, dim: usize, n: usize) -> f64 {
    length * (n as f64).powf(-1.0 / (dim as f64 + 2.0))
}

/// Parameters of one particle simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub stable: StableParams,
    pub drift: Drift,
    pub length: f64,
    pub eps_kernel: f64,
}

/// Drift kernel prepared for repeated summation.
#[derive(Debug, Clone)]
pub struct Interaction {
    dim: usize,
    length: f64,
    eps: f64,
    components: Vec<(PointwiseKernel, f64)>,
    zero: bool,
}

impl Interaction {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        if !(cfg.eps_kernel > 0.0 && cfg.eps_kernel.is_finite()) {
            return param(format!("eps_kernel must be positive, got {}", cfg.eps_kernel));
        }
        let zero = cfg.drift.is_zero();
        let components = if zero { Vec::new() } else { cfg.drift.pointwise_components(cfg.length)? };
        Ok(Self { dim: cfg.drift.dim(), length: cfg.length, eps: cfg.eps_kernel, components, zero })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Upper bound on `|drift|` from the kernel size constant at distance `eps`.
    pub fn drift_bound(&self, mass: f64) -> f64 {
        let c: f64 = self.components.iter().map(|(b, a)| (b.size_constant() * a).powi(2)).sum::<f64>().sqrt();
        mass * c / self.eps.powi(self.dim as i32)
    }

    fn periodic_hilbert(&self) -> bool {
        self.components.len() == 1 && self.components[0].0.kind() == PointwiseKind::PeriodicHilbert
    }

    /// `sum_j w_j b_eps(x - y_j)` per component, all sources included.
    fn raw_sum(&self, x: [f64; 2], ys: &[f64], ws: &[f64]) -> [f64; 2] {
        if self.zero {
            return [0.0, 0.0];
        }
        if self.periodic_hilbert() {
            let a = self.components[0].1;
            return [a * hilbert_sum(x[0], ys, ws, self.length, self.eps), 0.0];
        }
        let mut out = [0.0; 2];
        for (j, w) in ws.iter().enumerate() {
            let y = if self.dim == 1 { [ys[j], 0.0] } else { [ys[2 * j], ys[2 * j + 1]] };
            for (axis, (b, a)) in self.components.iter().enumerate() {
                out[axis] += w * a * b.eval_mollified(x, y, self.eps);
            }
        }
        out
    }

    fn single(&self, x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        if self.zero {
            return out;
        }
        for (axis, (b, a)) in self.components.iter().enumerate() {
            out[axis] = a * b.eval_mollified(x, y, self.eps);
        }
        out
    }
}

const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

/// `sum_j w_j (1/L) cot(pi z_j / L) min(1, |z_j|/eps)` at mollified distance
/// `max(|z_j|, eps)`, with `z_j` the minimal image of `x - y_j`.
fn hilbert_sum(x: f64, ys: &[f64], ws: &[f64], length: f64, eps: f64) -> f64 {
    let inv_l = 1.0 / length;
    let pi_l = PI / length;
    let inv_eps = 1.0 / eps;
    let term = |y: f64, w: f64| -> f64 {
        let z = x - y;
        // round-to-nearest through the 1.5 * 2^52 trick keeps the loop branch-free
        let r = (z * inv_l + ROUND_MAGIC) - ROUND_MAGIC;
        let z = z - r * length;
        let az = z.abs();
        let zc = az.max(eps).copysign(z);
        let taper = (az * inv_eps).min(1.0);
        w * taper * cot_poly(pi_l * zc)
    };
    let mut acc = [0.0f64; 4];
    let ys4 = ys.chunks_exact(4);
    let ws4 = ws.chunks_exact(4);
    let (yr, wr) = (ys4.remainder(), ws4.remainder());
    for (y, w) in ys4.zip(ws4) {
        for l in 0..4 {
            acc[l] += term(y[l], w[l]);
        }
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (y, w) in yr.iter().zip(wr) {
        total += term(*y, *w);
    }
    total * inv_l
}

/// `(mass/N) sum_j w_j b_eps(x, X_j)` over the ensemble at time index `k`,
/// leaving out particle `exclude`.
pub fn drift_eval(
    x: [f64; 2],
    ens: &ParticleEnsemble,
    k: usize,
    interaction: &Interaction,
    exclude: Option<usize>,
) -> [f64; 2] {
    let n = ens.n();
    if n == 0 {
        return [0.0, 0.0];
    }
    let mut v = interaction.raw_sum(x, ens.slice(k), ens.weights());
    if let Some(i) = exclude {
        let own = interaction.single(x, ens.position(i, k));
        v[0] -= ens.weights()[i] * own[0];
        v[1] -= ens.weights()[i] * own[1];
    }
    let c = ens.mass() / n as f64;
    [c * v[0], c * v[1]]
}

/// Result of one application of the path map.
#[derive(Debug, Clone)]
pub struct PsiOutput {
    pub ensemble: ParticleEnsemble,
    /// Set when `dt * drift_bound >= eps/2` on some step.
    pub step_warning: Option<String>,
}

fn step_check(noise: &NoiseBundle, interaction: &Interaction, mass: f64) -> Option<String> {
    let bound = interaction.drift_bound(mass);
    let dt = noise.times().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if dt * bound >= 0.5 * interaction.eps() {
        Some(format!(
            "explicit step bound violated: dt * drift bound = {:.3e} >= eps/2 = {:.3e}",
            dt * bound,
            0.5 * interaction.eps()
        ))
    } else {
        None
    }
}

fn check_lineage(y: &ParticleEnsemble, noise: &NoiseBundle) -> Result<()> {
    if y.n() != noise.n() || y.times() != noise.times() || y.dim() != noise.dim() {
        return config("ensemble and noise bundle differ in N, time grid or dimension");
    }
    if y.lineage() != noise.lineage() {
        return Err(Error::Lineage("ensemble was not generated from this noise bundle".into()));
    }
    Ok(())
}

/// Euler scheme `X_{k+1} = X_k + dS_k + dt drift(X_k; Y at t_k)` on the shared noise.
pub fn psi_apply(y: &ParticleEnsemble, noise: &NoiseBundle, cfg: &SimConfig) -> Result<PsiOutput> {
    check_lineage(y, noise)?;
    let interaction = Interaction::new(cfg)?;
    let step_warning = step_check(noise, &interaction, y.mass());
    let dim = noise.dim();
    let n = noise.n();
    let mut slices = Vec::with_capacity(noise.times().len());
    slices.push(noise.initial().positions.clone());
    for (k, w) in noise.times().windows(2).enumerate() {
        let dt = w[1] - w[0];
        let cur = &slices[k];
        let inc = noise.increments(k);
        let mut next = Vec::with_capacity(n * dim);
        for i in 0..n {
            let x = if dim == 1 { [cur[i], 0.0] } else { [cur[2 * i], cur[2 * i + 1]] };
            let v = drift_eval(x, y, k, &interaction, Some(i));
            for a in 0..dim {
                next.push(x[a] + inc[i * dim + a] + dt * v[a]);
            }
        }
        slices.push(next);
    }
    Ok(PsiOutput { ensemble: noise.ensemble(slices), step_warning })
}

/// The fixed point of the path map on this noise: the interacting Euler
/// march where each particle feels the others at the current step.
pub fn fixed_point_march(noise: &NoiseBundle, cfg: &SimConfig) -> Result<PsiOutput> {
    let interaction = Interaction::new(cfg)?;
    let step_warning = step_check(noise, &interaction, noise.initial().mass);
    let dim = noise.dim();
    let n = noise.n();
    let c = noise.initial().mass / n as f64;
    let weights = &noise.initial().weights;
    let mut slices = Vec::with_capacity(noise.times().len());
    slices.push(noise.initial().positions.clone());
    for (k, w) in noise.times().windows(2).enumerate() {
        let dt = w[1] - w[0];
        let cur = &slices[k];
        let inc = noise.increments(k);
        let mut next = Vec::with_capacity(n * dim);
        for i in 0..n {
            let x = if dim == 1 { [cur[i], 0.0] } else { [cur[2 * i], cur[2 * i + 1]] };
            let mut v = interaction.raw_sum(x, cur, weights);
            let own = interaction.single(x, x);
            v[0] = c * (v[0] - weights[i] * own[0]);
            v[1] = c * (v[1] - weights[i] * own[1]);
            for a in 0..dim {
                next.push(x[a] + inc[i * dim + a] + dt * v[a]);
            }
        }
        slices.push(next);
    }
    Ok(PsiOutput { ensemble: noise.ensemble(slices), step_warning })
}

/// Signed Gaussian density estimate `mass/N sum_j w_j K_h(x - X_j(t_k))` on
/// the grid, periodized over every image within `8h`.
pub fn density_from_ensemble(ens: &ParticleEnsemble, k: usize, bandwidth: f64, grid: GridSpec) -> Result<Field> {
    if grid.dim() != ens.dim() {
        return config("density grid and ensemble differ in dimension");
    }
    let dx = grid.spacing();
    if !(bandwidth >= dx * (1.0 - 1e-12)) {
        return param(format!("bandwidth {bandwidth} is below the grid spacing {dx}"));
    }
    let n = grid.n() as i64;
    let reach = (8.0 * bandwidth / dx).ceil() as i64;
    let norm = 1.0 / ((2.0 * PI).sqrt() * bandwidth);
    let inv2h2 = 0.5 / (bandwidth * bandwidth);
    let scale = ens.mass() / ens.n() as f64;
    let mut out = vec![0.0; grid.len()];
    let slice = ens.slice(k);
    // per-axis kernel weights, reused for the 2-d product
    let axis_weights = |x: f64| -> (i64, Vec<f64>) {
        let c = (x / dx).floor() as i64;
        let w = (-reach..=reach + 1)
            .map(|o| {
                let z = (c + o) as f64 * dx - x;
                norm * (-z * z * inv2h2).exp()
            })
            .collect();
        (c - reach, w)
    };
    for (i, &wt) in ens.weights().iter().enumerate() {
        let a = scale * wt;
        if ens.dim() == 1 {
            let (start, w0) = axis_weights(slice[i]);
            for (o, w) in w0.iter().enumerate() {
                out[(start + o as i64).rem_euclid(n) as usize] += a * w;
            }
        } else {
            let (s0, w0) = axis_weights(slice[2 * i]);
            let (s1, w1) = axis_weights(slice[2 * i + 1]);
            for (o0, p) in w0.iter().enumerate() {
                let r = (s0 + o0 as i64).rem_euclid(n) as usize * grid.n();
                for (o1, q) in w1.iter().enumerate() {
                    out[r + (s1 + o1 as i64).rem_euclid(n) as usize] += a * p * q;
                }
            }
        }
    }
    Field::new(grid, out)
}

/// `max(dx, 1.06 MAD N^(-1/5))` from the positions at time index `k`, using
/// the largest per-axis median absolute deviation.
pub fn default_bandwidth(ens: &ParticleEnsemble, k: usize, grid: &GridSpec) -> f64 {
    let slice = ens.slice(k);
    let dim = ens.dim();
    let mad = (0..dim)
        .map(|a| {
            let mut v: Vec<f64> = slice.iter().skip(a).step_by(dim).copied().collect();
            let med = median(&mut v);
            let mut dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
            median(&mut dev)
        })
        .fold(0.0, f64::max);
    (1.06 * mad * (ens.n() as f64).powf(-0.2)).max(grid.spacing())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Settings of the Picard iteration on path laws.
#[derive(Debug, Clone, Copy)]
pub struct ProcessOptions {
    pub iterations: usize,
    pub tol: f64,
    /// Exponent of both metric components.
    pub p: f64,
    /// KDE bandwidth; `None` picks [`default_bandwidth`] on the final marginal of `Y^0`.
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ProcessOutput {
    /// `Y^0, Y^1, ...`.
    pub ensembles: Vec<ParticleEnsemble>,
    /// Time-resolved `d(Y^n, Y^{n+1})` at every horizon `t_k`, one row per `n`.
    pub profiles: Vec<Vec<DistanceReport>>,
    pub bandwidth: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl ProcessOutput {
    /// `d_{T,p}(Y^n, Y^{n+1})` at the full horizon.
    pub fn terminal(&self) -> Vec<DistanceReport> {
        self.profiles.iter().map(|p| *p.last().expect("profiles are never empty")).collect()
    }
}

/// Iterates `Y^{n+1} = Psi(Y^n)` from the free paths `Y^0`, recording the
/// time-resolved distance between consecutive iterates.
pub fn picard_processes(
    noise: &NoiseBundle,
    cfg: &SimConfig,
    grid: GridSpec,
    opts: &ProcessOptions,
) -> Result<ProcessOutput> {
    if opts.iterations < 2 {
        return param(format!("picard on path laws needs at least 2 iterations, got {}", opts.iterations));
    }
    let y0 = noise.free_paths();
    let last = y0.times().len() - 1;
    let bandwidth = match opts.bandwidth {
        Some(h) => h,
        None => default_bandwidth(&y0, last, &grid),
    };
    let mut ensembles = vec![y0];
    let mut profiles = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut rises = 0;
    for n in 0..opts.iterations {
        let out = psi_apply(&ensembles[n], noise, cfg)?;
        if let Some(w) = out.step_warning {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        let profile = distance_profile(&ensembles[n], &out.ensemble, opts.p, bandwidth, grid)?;
        let d = profile.last().unwrap().d_tp;
        if let Some(prev) = profiles.last().map(|p: &Vec<DistanceReport>| p.last().unwrap().d_tp) {
            rises = if d > prev { rises + 1 } else { 0 };
            if rises == 3 {
                let ratios: Vec<String> = profiles
                    .windows(2)
                    .map(|w| format!("{:.3}", w[1].last().unwrap().d_tp / w[0].last().unwrap().d_tp))
                    .collect();
                warnings.push(format!("distance increased three times in a row; ratios {}", ratios.join(", ")));
            }
        }
        profiles.push(profile);
        ensembles.push(out.ensemble);
        if d <= opts.tol {
            converged = true;
            break;
        }
    }
    Ok(ProcessOutput { ensembles, profiles, bandwidth, converged, warnings })
}
