//! Distances between particle ensembles and the Picard contraction diagnostic.
//!
//! The path distance uses the synchronous coupling given by a shared noise
//! bundle, so it is an upper bound for the infimum over couplings.

use crate::error::{config, param, Error, Result};
use crate::grid::GridSpec;
use crate::particles::{density_from_ensemble, ParticleEnsemble};
use crate::special::fit_line;

/// Components of `d_{T,p}` at one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    pub rho: f64,
    pub lp_density: f64,
    pub d_tp: f64,
    pub p: f64,
    pub t: f64,
}

impl DistanceReport {
    pub fn new(rho: f64, lp_density: f64, p: f64, t: f64) -> Self {
        Self { rho, lp_density, d_tp: rho.max(lp_density), p, t }
    }
}

fn check_coupled(a: &ParticleEnsemble, b: &ParticleEnsemble) -> Result<()> {
    if a.n() != b.n() || a.dim() != b.dim() || a.times() != b.times() {
        return config("ensembles differ in N, dimension or time grid");
    }
    if a.lineage() != b.lineage() {
        return Err(Error::Lineage(
            "ensembles come from different noise bundles; the coupling bound does not apply".into(),
        ));
    }
    if a.slice(0) != b.slice(0) {
        return Err(Error::Lineage("coupled ensembles must share initial positions".into()));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return param(format!("distance exponent must be finite and >= 1, got {p}"));
    }
    Ok(())
}

fn separation(a: &ParticleEnsemble, b: &ParticleEnsemble, i: usize, k: usize) -> f64 {
    let x = a.position(i, k);
    let y = b.position(i, k);
    ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt()
}

/// `rho` for every horizon `t_k`: `((1/N) sum_j [sup_{t <= t_k} |X_j - Y_j| ^ 1]^p)^(1/p)`.
pub fn coupled_rho_profile(a: &ParticleEnsemble, b: &ParticleEnsemble, p: f64) -> Result<Vec<f64>> {
    check_coupled(a, b)?;
    check_p(p)?;
    let n = a.n();
    let mut running = vec![0.0f64; n];
    let mut out = Vec::with_capacity(a.times().len());
    for k in 0..a.times().len() {
        let mut acc = 0.0;
        for (i, r) in running.iter_mut().enumerate() {
            *r = r.max(separation(a, b, i, k).min(1.0));
            acc += r.powf(p);
        }
        out.push((acc / n as f64).powf(1.0 / p));
    }
    Ok(out)
}

/// Coupled path distance over the full horizon.
pub fn coupled_rho(a: &ParticleEnsemble, b: &ParticleEnsemble, p: f64) -> Result<f64> {
    Ok(*coupled_rho_profile(a, b, p)?.last().expect("time grid is never empty"))
}

/// Untruncated coupled distance `(1/N) sum_j |X_j(t_k) - Y_j(t_k)|` at one time.
pub fn coupled_slice(a: &ParticleEnsemble, b: &ParticleEnsemble, k: usize) -> Result<f64> {
    check_coupled(a, b)?;
    Ok((0..a.n()).map(|i| separation(a, b, i, k)).sum::<f64>() / a.n() as f64)
}

/// Exact `W_1` between the empirical marginals at time index `k` (d = 1,
/// positive weights), from sorted samples.
pub fn exact_w1_slice(a: &ParticleEnsemble, b: &ParticleEnsemble, k: usize) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::UnsupportedForm("exact slice distance is implemented for d = 1 only".into()));
    }
    if a.weights().iter().chain(b.weights()).any(|&w| w < 0.0) {
        return Err(Error::UnsupportedForm("exact slice distance needs nonnegative weights".into()));
    }
    if a.n() != b.n() {
        return config("exact slice distance needs equal particle counts");
    }
    let sorted = |e: &ParticleEnsemble| {
        let mut v = e.slice(k).to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (x, y) = (sorted(a), sorted(b));
    Ok(x.iter().zip(&y).map(|(u, v)| (u - v).abs()).sum::<f64>() / x.len() as f64)
}

fn density_gaps(
    a: &ParticleEnsemble,
    b: &ParticleEnsemble,
    p: f64,
    bandwidth: f64,
    grid: GridSpec,
) -> Result<Vec<f64>> {
    if a.times() != b.times() {
        return config("ensembles differ in their time grids");
    }
    check_p(p)?;
    (0..a.times().len())
        .map(|k| {
            let fa = density_from_ensemble(a, k, bandwidth, grid)?;
            let fb = density_from_ensemble(b, k, bandwidth, grid)?;
            Ok(fa.sub(&fb)?.lp_norm(p))
        })
        .collect()
}

/// `max_k ||f_a(t_k) - f_b(t_k)||_p` with both densities estimated at the same bandwidth.
pub fn lp_density_distance(
    a: &ParticleEnsemble,
    b: &ParticleEnsemble,
    p: f64,
    bandwidth: f64,
    grid: GridSpec,
) -> Result<f64> {
    Ok(density_gaps(a, b, p, bandwidth, grid)?.into_iter().fold(0.0, f64::max))
}

/// Report at every horizon `t_k`, each component a sup over `t <= t_k`.
pub fn distance_profile(
    a: &ParticleEnsemble,
    b: &ParticleEnsemble,
    p: f64,
    bandwidth: f64,
    grid: GridSpec,
) -> Result<Vec<DistanceReport>> {
    let rho = coupled_rho_profile(a, b, p)?;
    let gaps = density_gaps(a, b, p, bandwidth, grid)?;
    let mut sup = 0.0f64;
    Ok(a.times()
        .iter()
        .zip(rho.iter().zip(&gaps))
        .map(|(&t, (&r, &g))| {
            sup = sup.max(g);
            DistanceReport::new(r, sup, p, t)
        })
        .collect())
}

/// `d_{T,p}` over the full horizon of the ensembles.
pub fn d_metric(
    a: &ParticleEnsemble,
    b: &ParticleEnsemble,
    p: f64,
    bandwidth: f64,
    grid: GridSpec,
) -> Result<DistanceReport> {
    Ok(*distance_profile(a, b, p, bandwidth, grid)?.last().expect("time grid is never empty"))
}

/// Outcome of checking a distance sequence against the Gronwall iteration bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// `C_hat[n-1]`: smallest `C` with `d_n(t) <= C int_0^t d_{n-1}` on the grid, for `n >= 1`.
    pub c_hat: Vec<f64>,
    /// Ratios `d_{n+1}(T) / d_n(T)`.
    pub ratios: Vec<f64>,
    /// `C` from the fit `log d_n + log n! = a + n log(C T)`.
    pub fitted_c: f64,
    /// Largest relative misfit `|exp(residual) - 1|` of that fit.
    pub shape_residual: f64,
    pub decreasing: bool,
    pub factorial_consistent: bool,
    /// Iterations whose time-resolved distance is not monotone in `t`.
    pub non_monotone: Vec<usize>,
}

/// Tolerance on the relative misfit of the factorial shape.
pub const FACTORIAL_TOL: f64 = 0.2;

fn trapezoid_prefix(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    for k in 1..times.len() {
        let prev = out[k - 1];
        out.push(prev + 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]));
    }
    out
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Per-step Gronwall constants and the factorial-shape fit.
///
/// `profiles[n][k]` is `d(Y^n, Y^{n+1})` over `[0, t_k]`; every row shares `times`.
pub fn contraction_diagnostic(profiles: &[Vec<f64>], times: &[f64]) -> Result<ContractionReport> {
    if profiles.len() < 3 {
        return param(format!("contraction diagnostic needs at least 3 iterations, got {}", profiles.len()));
    }
    if profiles.iter().any(|p| p.len() != times.len()) || times.len() < 2 {
        return config("every distance profile needs one value per time");
    }
    let horizon = *times.last().unwrap();
    let non_monotone =
        profiles.iter().enumerate().filter(|(_, p)| p.windows(2).any(|w| w[1] < w[0])).map(|(n, _)| n).collect();
    let c_hat = profiles
        .windows(2)
        .map(|w| {
            let integral = trapezoid_prefix(times, &w[0]);
            w[1].iter()
                .zip(&integral)
                .map(|(&d, &i)| {
                    if d == 0.0 {
                        0.0
                    } else if i > 0.0 {
                        d / i
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let terminal: Vec<f64> = profiles.iter().map(|p| *p.last().unwrap()).collect();
    let ratios: Vec<f64> = terminal.windows(2).map(|w| w[1] / w[0]).collect();
    let decreasing = terminal.windows(2).all(|w| w[1] < w[0]);
    let (xs, ys): (Vec<f64>, Vec<f64>) = terminal
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 0.0)
        .map(|(n, &d)| (n as f64, d.ln() + ln_factorial(n)))
        .unzip();
    let (fitted_c, shape_residual) = if xs.len() >= 3 {
        let fit = fit_line(&xs, &ys);
        let misfit = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| ((y - fit.intercept - fit.slope * x).exp() - 1.0).abs())
            .fold(0.0, f64::max);
        (fit.slope.exp() / horizon, misfit)
    } else {
        (f64::NAN, f64::INFINITY)
    };
    let factorial_consistent = decreasing && shape_residual < FACTORIAL_TOL;
    Ok(ContractionReport { c_hat, ratios, fitted_c, shape_residual, decreasing, factorial_consistent, non_monotone })
}
