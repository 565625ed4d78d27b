//! The fractional heat semigroup `p_t = exp(-t (-Delta)^(alpha/2))`, its gradient,
//! and log-log probes of its `L^q -> L^m` smoothing rate.

use num_complex::Complex64;

use crate::error::{param, Result};
use crate::fraclap::{fractional_symbol, StableParams};
use crate::grid::{Field, GridSpec, SpectralField};
use crate::special::{fit_power_law, LineFit};
use crate::spectral::{from_spectral, to_spectral, SymbolTable};

/// Semigroup on a fixed grid; caches `|k|^alpha` and the derivative symbols.
#[derive(Debug, Clone)]
pub struct Semigroup {
    grid: GridSpec,
    alpha: f64,
    symbol: Vec<f64>,
    derivatives: Vec<SymbolTable>,
}

impl Semigroup {
    pub fn new(grid: GridSpec, s: &StableParams) -> Self {
        let symbol = fractional_symbol(grid, s.alpha()).values().iter().map(|c| c.re).collect();
        let derivatives =
            (0..grid.dim()).map(|axis| SymbolTable::new(grid, move |k| Complex64::new(0.0, k[axis]))).collect();
        Self { grid, alpha: s.alpha(), symbol, derivatives }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `|k|^alpha` per spectral index.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    /// `i k_axis` per spectral index (Nyquist zeroed).
    pub fn derivative_symbol(&self, axis: usize) -> &[Complex64] {
        self.derivatives[axis].values()
    }

    fn check_time(t: f64) -> Result<()> {
        if !(t >= 0.0) || !t.is_finite() {
            return param(format!("semigroup time must be finite and >= 0, got {t}"));
        }
        Ok(())
    }

    pub fn apply_spectral(&self, spec: &SpectralField, t: f64) -> Result<SpectralField> {
        Self::check_time(t)?;
        self.grid.check_same(spec.grid())?;
        let coeffs = spec.coeffs().iter().zip(&self.symbol).map(|(c, s)| c * (-t * s).exp()).collect();
        SpectralField::new(self.grid, coeffs)
    }

    pub fn apply(&self, f: &Field, t: f64) -> Result<Field> {
        Ok(from_spectral(&self.apply_spectral(&to_spectral(f), t)?))
    }

    /// Components `F^-1(i k_j e^{-t|k|^alpha} F f)`, one per axis.
    pub fn gradient(&self, f: &Field, t: f64) -> Result<Vec<Field>> {
        let smoothed = self.apply_spectral(&to_spectral(f), t)?;
        self.derivatives.iter().map(|d| Ok(from_spectral(&d.apply_spectral(&smoothed)?))).collect()
    }
}

pub fn semigroup_apply(f: &Field, t: f64, s: &StableParams) -> Result<Field> {
    Semigroup::new(*f.grid(), s).apply(f, t)
}

pub fn semigroup_gradient(f: &Field, t: f64, s: &StableParams) -> Result<Vec<Field>> {
    Semigroup::new(*f.grid(), s).gradient(f, t)
}

/// Pointwise Euclidean length of a vector field.
pub fn vector_magnitude(components: &[Field]) -> Field {
    let grid = *components[0].grid();
    let values =
        (0..grid.len()).map(|i| components.iter().map(|c| c.values()[i].powi(2)).sum::<f64>().sqrt()).collect();
    Field::from_raw(grid, values)
}

/// Exponent of `t` in the smoothing bound `||p_t * f||_m <= C t^e ||f||_q`
/// (or its gradient version).
pub fn theoretical_decay_slope(dim: usize, alpha: f64, q: f64, m: f64, gradient: bool) -> f64 {
    let base = -(dim as f64 / alpha) * (1.0 / q - 1.0 / m);
    if gradient {
        base - 1.0 / alpha
    } else {
        base
    }
}

/// Outcome of a smoothing-rate probe.
#[derive(Debug, Clone)]
pub struct DecayFit {
    pub slope: f64,
    pub fit: LineFit,
    pub times: Vec<f64>,
    /// Probed operator ratio at each time.
    pub ratios: Vec<f64>,
    pub theoretical: f64,
}

/// Pre-smoothing fractions used to build the self-similar test family.
const PRESMOOTH: [f64; 5] = [0.0, 0.25, 0.5, 1.0, 2.0];

/// Fits the log-log slope of the `L^q -> L^m` ratio of `p_t` (or `grad p_t`).
///
/// For each `t` the ratio is maximized over the test family `g_c = p_{ct} * f`,
/// `c` in `{0, 1/4, 1/2, 1, 2}`. With `f` close to a point mass, `g_c` is the
/// stable profile dilated to width `(ct)^(1/alpha)`, so the family contains a
/// near-extremal input for every `(q, m)` pair and `t`.
pub fn decay_rate_probe(
    f: &Field,
    q: f64,
    m: f64,
    s: &StableParams,
    t_grid: &[f64],
    gradient: bool,
) -> Result<DecayFit> {
    if t_grid.len() < 4 {
        return param(format!("decay probe needs at least 4 times, got {}", t_grid.len()));
    }
    if !(q >= 1.0 && m >= q) {
        return param(format!("decay probe needs m >= q >= 1, got q = {q}, m = {m}"));
    }
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return param("decay probe times must be positive");
    }
    let sg = Semigroup::new(*f.grid(), s);
    let spec = to_spectral(f);
    let mut ratios = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut best = 0.0_f64;
        for c in PRESMOOTH {
            let input = if c == 0.0 { f.clone() } else { from_spectral(&sg.apply_spectral(&spec, c * t)?) };
            let denom = input.lp_norm(q);
            if denom == 0.0 {
                continue;
            }
            let num = if gradient {
                vector_magnitude(&sg.gradient(&input, t)?).lp_norm(m)
            } else {
                sg.apply(&input, t)?.lp_norm(m)
            };
            best = best.max(num / denom);
        }
        ratios.push(best);
    }
    if ratios.iter().any(|r| !(*r > 0.0)) {
        return param("decay probe produced a vanishing ratio (zero input field?)");
    }
    let fit = fit_power_law(t_grid, &ratios);
    Ok(DecayFit {
        slope: fit.slope,
        fit,
        times: t_grid.to_vec(),
        ratios,
        theoretical: theoretical_decay_slope(f.grid().dim(), s.alpha(), q, m, gradient),
    })
}

/// Discrete unit point mass at the grid point nearest `center` (integral one).
pub fn point_mass(grid: GridSpec, center: [f64; 2]) -> Field {
    let h = grid.spacing();
    let n = grid.n() as i64;
    let i0 = ((center[0] / h).round() as i64).rem_euclid(n) as usize;
    let i1 = if grid.dim() == 2 { ((center[1] / h).round() as i64).rem_euclid(n) as usize } else { 0 };
    let mut values = vec![0.0; grid.len()];
    values[grid.ravel([i0, i1])] = 1.0 / grid.cell_volume();
    Field::from_raw(grid, values)
}

/// `n` log-spaced times from `t_min` to `t_max` inclusive.
pub fn log_spaced(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn setup() -> (GridSpec, StableParams) {
        (GridSpec::new(1, 64, 2.0 * PI).unwrap(), StableParams::new(1.5, 1).unwrap())
    }

    #[test]
    fn identity_at_zero_time() {
        let (g, s) = setup();
        let f = Field::from_fn(g, |x| (3.0 * x[0]).sin() + x[0].cos()).unwrap();
        let out = semigroup_apply(&f, 0.0, &s).unwrap();
        assert!(out.sub(&f).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn eigenfunction_decay() {
        let (g, s) = setup();
        let f = Field::from_fn(g, |x| x[0].sin()).unwrap();
        let out = semigroup_apply(&f, 1.0, &s).unwrap();
        assert!(out.sub(&f.scale((-1.0f64).exp())).unwrap().max_abs() < 1e-13);
        let grad = semigroup_gradient(&f, 1.0, &s).unwrap();
        let expect = Field::from_fn(g, |x| (-1.0f64).exp() * x[0].cos()).unwrap();
        assert!(grad[0].sub(&expect).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn gaussian_limit_matches_heat_kernel_mode() {
        // at alpha = 2 a single mode cos(kx) decays as exp(-k^2 t), the heat-kernel convolution
        let g = GridSpec::new(1, 64, 2.0 * PI).unwrap();
        let s = StableParams::new(2.0, 1).unwrap();
        let f = Field::from_fn(g, |x| (3.0 * x[0]).cos()).unwrap();
        let out = semigroup_apply(&f, 0.1, &s).unwrap();
        let expect = f.scale((-0.9f64).exp());
        assert!(out.sub(&expect).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn negative_time_rejected() {
        let (g, s) = setup();
        let f = Field::zeros(g);
        assert!(semigroup_apply(&f, -0.1, &s).is_err());
        assert!(semigroup_gradient(&f, -0.1, &s).is_err());
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let (g, s) = setup();
        let grad = semigroup_gradient(&Field::constant(g, 4.0), 0.3, &s).unwrap();
        assert!(grad[0].max_abs() < 1e-13);
    }

    #[test]
    fn divergence_commutes_with_semigroup_2d() {
        let g = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let s = StableParams::new(1.5, 2).unwrap();
        let f = Field::from_fn(g, |x| (x[0] + 2.0 * x[1]).sin()).unwrap();
        let sg = Semigroup::new(g, &s);
        let grad = sg.gradient(&f, 0.2).unwrap();
        let div_after: Field = grad[0].add(&grad[1]).unwrap();
        let smoothed = sg.apply(&f, 0.2).unwrap();
        let d0 = crate::spectral::derivative(&smoothed, 0).unwrap();
        let d1 = crate::spectral::derivative(&smoothed, 1).unwrap();
        let div_before = d0.add(&d1).unwrap();
        assert!(div_after.sub(&div_before).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn probe_rejects_short_grid() {
        let (g, s) = setup();
        let f = point_mass(g, [PI, 0.0]);
        assert!(decay_rate_probe(&f, 1.0, 2.0, &s, &[0.1, 0.2, 0.3], false).is_err());
        assert!(decay_rate_probe(&f, 2.0, 1.0, &s, &[0.1, 0.2, 0.3, 0.4], false).is_err());
    }

    #[test]
    fn probe_slopes_one_dimension() {
        let g = GridSpec::new(1, 4096, 64.0).unwrap();
        let s = StableParams::new(1.5, 1).unwrap();
        let f = point_mass(g, [32.0, 0.0]);
        let t = log_spaced(0.05, 2.0, 8);
        let plain = decay_rate_probe(&f, 1.0, 2.0, &s, &t, false).unwrap();
        assert!((plain.slope + 1.0 / 3.0).abs() < 0.1 / 3.0, "slope {}", plain.slope);
        let grad = decay_rate_probe(&f, 1.0, 2.0, &s, &t, true).unwrap();
        assert!((grad.slope + 1.0).abs() < 0.1, "gradient slope {}", grad.slope);
        let flat = decay_rate_probe(&f, 2.0, 2.0, &s, &t, false).unwrap();
        assert!(flat.slope.abs() < 0.02, "q = m slope {}", flat.slope);
    }
}
