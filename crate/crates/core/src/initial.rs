//! Named initial data on the periodic grid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{param, Result};
use crate::expr::Expr;
use crate::grid::{Field, GridSpec};
use crate::spectral::random_band_limited;

/// Built-in initial profiles. Positions are absolute coordinates on `[0, L)`;
/// bumps are periodized through the minimal-image distance to `center`.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    /// `amplitude * exp(-|x - c|^2 / (2 width^2))`.
    Gaussian { center: [f64; 2], width: f64, amplitude: f64 },
    /// Positive bump at `center`, negative bump at `center + L/2` (along axis 0).
    SignedDoubleBump { center: [f64; 2], width: f64, amplitude: f64 },
    /// Random zero-mean field with Fourier support `|k| <= k_max`, rescaled to
    /// sup norm `amplitude`, plus `offset`.
    RandomBandLimited { k_max: usize, amplitude: f64, offset: f64, seed: u64 },
    /// `height * max(0, 1 - |x - c| / half_width)` (product over axes in d = 2).
    Tent { center: [f64; 2], half_width: f64, height: f64 },
    /// Indicator of the cube `|x - c|_inf < half_width`, times `height`.
    Box { center: [f64; 2], half_width: f64, height: f64 },
}

/// Sampled initial data and its Lipschitz classification.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub field: Field,
    /// Largest one-step difference quotient over all axes.
    pub lipschitz_estimate: f64,
}

impl InitialData {
    pub fn new(field: Field) -> Self {
        let lipschitz_estimate = grid_lipschitz(&field);
        Self { field, lipschitz_estimate }
    }

    /// True when the sampled data are 1-Lipschitz.
    pub fn is_lip1(&self) -> bool {
        self.lipschitz_estimate <= 1.0 + 1e-12
    }
}

fn grid_lipschitz(f: &Field) -> f64 {
    let g = f.grid();
    let n = g.n();
    let v = f.values();
    let mut best = 0.0_f64;
    for i in 0..g.len() {
        let idx = g.unravel(i);
        for axis in 0..g.dim() {
            let mut next = idx;
            next[axis] = (idx[axis] + 1) % n;
            best = best.max((v[g.ravel(next)] - v[i]).abs());
        }
    }
    best / g.spacing()
}

fn min_image(grid: &GridSpec, x: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    let z1 = if grid.dim() == 2 { grid.wrap(x[1] - c[1]) } else { 0.0 };
    [grid.wrap(x[0] - c[0]), z1]
}

impl Preset {
    pub fn sample(&self, grid: GridSpec) -> Result<InitialData> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if !(v > 0.0 && v.is_finite()) {
                return param(format!("{name} must be positive, got {v}"));
            }
            Ok(())
        };
        let field = match *self {
            Preset::Gaussian { center, width, amplitude } => {
                positive("width", width)?;
                Field::from_fn(grid, |x| {
                    let z = min_image(&grid, x, center);
                    amplitude * (-(z[0] * z[0] + z[1] * z[1]) / (2.0 * width * width)).exp()
                })?
            }
            Preset::SignedDoubleBump { center, width, amplitude } => {
                positive("width", width)?;
                let other = [center[0] + 0.5 * grid.length(), center[1]];
                Field::from_fn(grid, |x| {
                    let a = min_image(&grid, x, center);
                    let b = min_image(&grid, x, other);
                    let s = 2.0 * width * width;
                    amplitude * ((-(a[0] * a[0] + a[1] * a[1]) / s).exp() - (-(b[0] * b[0] + b[1] * b[1]) / s).exp())
                })?
            }
            Preset::RandomBandLimited { k_max, amplitude, offset, seed } => {
                if k_max == 0 {
                    return param("k_max must be at least 1");
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let f = random_band_limited(grid, k_max, 1.0, &mut rng);
                let scale = amplitude / f.max_abs();
                Field::new(grid, f.values().iter().map(|v| v * scale + offset).collect())?
            }
            Preset::Tent { center, half_width, height } => {
                positive("half_width", half_width)?;
                Field::from_fn(grid, |x| {
                    let z = min_image(&grid, x, center);
                    let mut v = height;
                    for zi in z.iter().take(grid.dim()) {
                        v *= (1.0 - zi.abs() / half_width).max(0.0);
                    }
                    v
                })?
            }
            Preset::Box { center, half_width, height } => {
                positive("half_width", half_width)?;
                Field::from_fn(grid, |x| {
                    let z = min_image(&grid, x, center);
                    let inside = z.iter().take(grid.dim()).all(|zi| zi.abs() < half_width);
                    if inside {
                        height
                    } else {
                        0.0
                    }
                })?
            }
        };
        Ok(InitialData::new(field))
    }
}

/// Samples an expression in `x`, `y` (coordinates) and `L` on the grid.
pub fn from_expression(grid: GridSpec, source: &str) -> Result<InitialData> {
    let e = Expr::parse(source, &["x", "y", "L"])?;
    let l = grid.length();
    Ok(InitialData::new(Field::from_fn(grid, |x| e.eval(&[x[0], x[1], l]))?))
}
