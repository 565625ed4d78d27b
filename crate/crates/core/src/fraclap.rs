//! The fractional Laplacian `-(-Delta)^(alpha/2)` in its Fourier-multiplier and
//! jump-integral forms.
//!
//! The spectral form multiplies by `-|k|^alpha`. The quadrature form evaluates
//!
//! ```text
//! K * PV int (v(x+y) - v(x)) |y|^(-d-alpha) dy
//! ```
//!
//! over the fundamental cell with the periodic image sum folded into the
//! kernel. The ball `|y| < eps` is integrated from a local Taylor model of
//! `v`, the odd part cancels by pairing `y` with `-y`, and the remaining
//! cell is summed with a trapezoid rule carrying Gregory end corrections at
//! `|y| = eps` (one dimension).

use crate::error::{param, Result};
use crate::grid::{Field, GridSpec};
use crate::special::{gamma, image_sum};
use crate::spectral::{modulus, SymbolTable};

/// Stability index of the driving process and the jump-form normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    alpha: f64,
    k_norm: f64,
}

impl StableParams {
    /// `alpha` must lie in `(1, 2]`; `alpha = 2` is the Gaussian validation limit.
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return param(format!("alpha must lie in (1, 2], got {alpha}"));
        }
        Ok(Self { alpha, k_norm: jump_normalization(alpha, dim) })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Closed-form `K_{alpha,d}`; zero in the Gaussian limit where the jump form degenerates.
    pub fn k_norm(&self) -> f64 {
        self.k_norm
    }

    pub fn is_gaussian(&self) -> bool {
        self.alpha == 2.0
    }
}

/// `K_{alpha,d} = alpha 2^(alpha-1) Gamma((d+alpha)/2) / (pi^(d/2) Gamma(1-alpha/2))`.
pub fn jump_normalization(alpha: f64, dim: usize) -> f64 {
    if alpha >= 2.0 {
        return 0.0;
    }
    let d = dim as f64;
    alpha * 2f64.powf(alpha - 1.0) * gamma(0.5 * (d + alpha))
        / (std::f64::consts::PI.powf(0.5 * d) * gamma(1.0 - 0.5 * alpha))
}

/// Which definition of the operator to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaplacianForm {
    Spectral,
    /// Jump-integral quadrature with inner cutoff length `eps`.
    Quadrature {
        eps: f64,
    },
}

/// Symbol table of `|k|^alpha`.
pub fn fractional_symbol(grid: GridSpec, alpha: f64) -> SymbolTable {
    SymbolTable::real(grid, move |k| modulus(k).powf(alpha))
}

pub fn frac_laplacian(f: &Field, s: &StableParams, form: LaplacianForm) -> Result<Field> {
    match form {
        LaplacianForm::Spectral => {
            let grid = *f.grid();
            let alpha = s.alpha();
            SymbolTable::real(grid, move |k| -modulus(k).powf(alpha)).apply(f)
        }
        LaplacianForm::Quadrature { eps } => QuadratureLaplacian::new(*f.grid(), s, eps)?.apply(f),
    }
}

/// Precomputed real-space stencil for the jump-integral form.
#[derive(Debug, Clone)]
pub struct QuadratureLaplacian {
    grid: GridSpec,
    eps: f64,
    /// Offsets (in grid steps, per axis) and weights, without the `K` factor.
    stencil: Vec<([i64; 2], f64)>,
    k_fitted: f64,
    k_closed: f64,
}

impl QuadratureLaplacian {
    /// Builds the stencil and calibrates `K` on the first plane wave.
    ///
    /// `eps` is snapped to the nearest positive multiple of the grid spacing.
    pub fn new(grid: GridSpec, s: &StableParams, eps: f64) -> Result<Self> {
        if s.is_gaussian() {
            return param("the jump-integral form is undefined at alpha = 2");
        }
        let l = grid.length();
        if !(eps > 0.0) || eps >= 0.5 * l {
            return param(format!("quadrature cutoff eps must lie in (0, L/2), got {eps}"));
        }
        let h = grid.spacing();
        let m = ((eps / h).round() as usize).max(1);
        if grid.n() / 2 < m + 3 {
            return param(format!("cutoff eps = {eps} leaves fewer than three outer nodes"));
        }
        let alpha = s.alpha();
        let stencil = match grid.dim() {
            1 => stencil_1d(grid, alpha, m),
            _ => stencil_2d(grid, alpha, m),
        };
        let mut op = Self { grid, eps: m as f64 * h, stencil, k_fitted: 1.0, k_closed: s.k_norm() };
        // plane wave cos(2 pi x_0 / L) is an eigenfunction of the periodic stencil
        let k1 = 2.0 * std::f64::consts::PI / l;
        let raw: f64 = op.stencil.iter().map(|(o, w)| w * (k1 * o[0] as f64 * h).cos()).sum();
        op.k_fitted = -k1.powf(alpha) / raw;
        Ok(op)
    }

    /// Effective (grid-snapped) inner cutoff.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `K` fitted by plane-wave matching.
    pub fn k_fitted(&self) -> f64 {
        self.k_fitted
    }

    /// Closed-form `K_{alpha,d}` for comparison with the fitted value.
    pub fn k_closed_form(&self) -> f64 {
        self.k_closed
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        self.apply_with(f, self.k_fitted)
    }

    /// Applies the stencil with an explicit normalization constant.
    pub fn apply_with(&self, f: &Field, k_norm: f64) -> Result<Field> {
        self.grid.check_same(f.grid())?;
        let n = self.grid.n() as i64;
        let v = f.values();
        let out: Vec<f64> = (0..self.grid.len())
            .map(|flat| {
                let idx = self.grid.unravel(flat);
                let acc: f64 = self
                    .stencil
                    .iter()
                    .map(|(o, w)| {
                        let i0 = (idx[0] as i64 + o[0]).rem_euclid(n) as usize;
                        let i1 = (idx[1] as i64 + o[1]).rem_euclid(n) as usize;
                        w * v[self.grid.ravel([i0, i1])]
                    })
                    .sum();
                k_norm * acc
            })
            .collect();
        Field::new(self.grid, out)
    }
}

fn push_pair(weights: &mut std::collections::BTreeMap<[i64; 2], f64>, o: [i64; 2], w: f64) {
    *weights.entry(o).or_insert(0.0) += w;
}

/// One dimension: weights on `D_j(x) = v(x+jh) + v(x-jh) - 2 v(x)`.
fn stencil_1d(grid: GridSpec, alpha: f64, m: usize) -> Vec<([i64; 2], f64)> {
    let h = grid.spacing();
    let l = grid.length();
    let half = grid.n() / 2;
    let s = 1.0 + alpha;
    let kernel = |y: f64| y.powf(-s) + image_sum(1, [y, 0.0], l, s);
    let mut a = vec![0.0; half + 1];

    // outer region [eps, L/2]: trapezoid with third-order Gregory start weights
    let gregory = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    for j in m..=half {
        let mut w = if j == half { 0.5 } else { 1.0 };
        if j - m < 3 {
            w = gregory[j - m];
        }
        a[j] += w * h * kernel(j as f64 * h);
    }

    // inner ball: D(y) ~ c1 y^2 + c2 y^4 + c3 y^6 fitted through D_1, D_2, D_3,
    // integrated against y^(-1-alpha) + c0 with c0 the image sum at y = 0
    let eps = m as f64 * h;
    let c0 = image_sum(1, [0.0, 0.0], l, s);
    let moments: Vec<f64> = (1..=3)
        .map(|p| {
            let e = 2.0 * p as f64;
            eps.powf(e - alpha) / (e - alpha) + c0 * eps.powf(e + 1.0) / (e + 1.0)
        })
        .collect();
    // solve M^T beta = moments with M[r][c] = ((r+1)h)^(2(c+1))
    let mt = |r: usize, c: usize| ((c + 1) as f64 * h).powi(2 * (r as i32 + 1));
    let beta = solve3(
        [[mt(0, 0), mt(0, 1), mt(0, 2)], [mt(1, 0), mt(1, 1), mt(1, 2)], [mt(2, 0), mt(2, 1), mt(2, 2)]],
        [moments[0], moments[1], moments[2]],
    );
    for (j, b) in beta.iter().enumerate() {
        a[j + 1] += b;
    }

    let mut weights = std::collections::BTreeMap::new();
    for (j, aj) in a.iter().enumerate().skip(1) {
        let j = j as i64;
        push_pair(&mut weights, [j, 0], *aj);
        push_pair(&mut weights, [-j, 0], *aj);
        push_pair(&mut weights, [0, 0], -2.0 * aj);
    }
    weights.into_iter().filter(|(_, w)| *w != 0.0).collect()
}

/// Two dimensions: lattice sum over the periodic cell outside the ball, with
/// a finite-difference Taylor model (Laplacian and bi-Laplacian) inside.
fn stencil_2d(grid: GridSpec, alpha: f64, m: usize) -> Vec<([i64; 2], f64)> {
    let h = grid.spacing();
    let l = grid.length();
    let n = grid.n() as i64;
    let s = 2.0 + alpha;
    let eps = m as f64 * h;
    let mut weights = std::collections::BTreeMap::new();
    for o0 in -n / 2..n / 2 {
        for o1 in -n / 2..n / 2 {
            let y = [o0 as f64 * h, o1 as f64 * h];
            let r = modulus(y);
            if r <= eps * (1.0 + 1e-12) {
                continue;
            }
            let w = h * h * (r.powf(-s) + image_sum(2, y, l, s));
            push_pair(&mut weights, [o0, o1], w);
            push_pair(&mut weights, [0, 0], -w);
        }
    }
    let pi = std::f64::consts::PI;
    let c0 = image_sum(2, [0.0, 0.0], l, s);
    let lap_coeff = 0.5 * pi * eps.powf(2.0 - alpha) / (2.0 - alpha) + c0 * pi * eps.powi(4) / 8.0;
    let bilap_coeff = pi / 32.0 * eps.powf(4.0 - alpha) / (4.0 - alpha);

    // fourth-order Laplacian
    let d2 = [-1.0, 16.0, -30.0, 16.0, -1.0];
    for (i, c) in d2.iter().enumerate() {
        let o = i as i64 - 2;
        let w = lap_coeff * c / (12.0 * h * h);
        push_pair(&mut weights, [o, 0], w);
        push_pair(&mut weights, [0, o], w);
    }
    // bi-Laplacian as the square of the five-point Laplacian
    let five: [([i64; 2], f64); 5] = [([0, 0], -4.0), ([1, 0], 1.0), ([-1, 0], 1.0), ([0, 1], 1.0), ([0, -1], 1.0)];
    for (a, wa) in &five {
        for (b, wb) in &five {
            let w = bilap_coeff * wa * wb / h.powi(4);
            push_pair(&mut weights, [a[0] + b[0], a[1] + b[1]], w);
        }
    }
    weights.into_iter().filter(|(_, w)| *w != 0.0).collect()
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut ac = a;
        for r in 0..3 {
            ac[r][c] = b[r];
        }
        *xc = det(ac) / d;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel_l2(a: &Field, b: &Field) -> f64 {
        a.sub(b).unwrap().lp_norm(2.0) / b.lp_norm(2.0)
    }

    #[test]
    fn alpha_range() {
        assert!(StableParams::new(1.0, 1).is_err());
        assert!(StableParams::new(2.1, 1).is_err());
        assert!(StableParams::new(2.0, 1).is_ok());
    }

    #[test]
    fn closed_form_normalization_values() {
        // alpha = 1, d = 1 gives the Cauchy normalization 1/pi
        assert!((jump_normalization(1.0, 1) - 1.0 / PI).abs() < 1e-14);
        assert!((jump_normalization(1.5, 1) - 0.2992067103010746).abs() < 1e-12);
    }

    #[test]
    fn constant_maps_to_zero() {
        let g = GridSpec::new(1, 64, 2.0 * PI).unwrap();
        let s = StableParams::new(1.5, 1).unwrap();
        let c = Field::constant(g, 2.5);
        assert!(frac_laplacian(&c, &s, LaplacianForm::Spectral).unwrap().max_abs() < 1e-12);
        let q = frac_laplacian(&c, &s, LaplacianForm::Quadrature { eps: 4.0 * g.spacing() });
        assert!(q.unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn sine_is_eigenfunction() {
        let g = GridSpec::new(1, 64, 2.0 * PI).unwrap();
        let s = StableParams::new(1.5, 1).unwrap();
        let f = Field::from_fn(g, |x| x[0].sin()).unwrap();
        let out = frac_laplacian(&f, &s, LaplacianForm::Spectral).unwrap();
        assert!(out.add(&f).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn plane_wave_eigenrelation_every_mode_2d() {
        let g = GridSpec::new(2, 16, 3.0).unwrap();
        let s = StableParams::new(1.3, 2).unwrap();
        for (a, b) in [(1.0, 0.0), (2.0, -3.0), (7.0, 5.0)] {
            let k = [2.0 * PI * a / 3.0, 2.0 * PI * b / 3.0];
            let f = Field::from_fn(g, |x| (k[0] * x[0] + k[1] * x[1]).cos()).unwrap();
            let out = frac_laplacian(&f, &s, LaplacianForm::Spectral).unwrap();
            let expect = f.scale(-modulus(k).powf(1.3));
            assert!(out.sub(&expect).unwrap().max_abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_matches_spectral_1d() {
        let g = GridSpec::new(1, 256, 2.0 * PI).unwrap();
        let f = Field::from_fn(g, |x| x[0].sin() + 0.3 * (2.0 * x[0]).cos()).unwrap();
        for alpha in [1.2, 1.5, 1.8] {
            let s = StableParams::new(alpha, 1).unwrap();
            let spec = frac_laplacian(&f, &s, LaplacianForm::Spectral).unwrap();
            let op = QuadratureLaplacian::new(g, &s, 2.0 * g.length() / 256.0).unwrap();
            let quad = op.apply(&f).unwrap();
            let err = rel_l2(&quad, &spec);
            assert!(err < 1e-4, "alpha {alpha}: relative error {err}");
            // the fitted constant reproduces the closed form
            let kerr = (op.k_fitted() / op.k_closed_form() - 1.0).abs();
            assert!(kerr < 2e-3, "alpha {alpha}: fitted K off by {kerr}");
        }
    }

    #[test]
    fn quadrature_matches_spectral_2d() {
        let g = GridSpec::new(2, 32, 2.0 * PI).unwrap();
        let s = StableParams::new(1.5, 2).unwrap();
        let f = Field::from_fn(g, |x| x[0].sin() * x[1].cos() + 0.2 * (2.0 * x[1]).sin()).unwrap();
        let spec = frac_laplacian(&f, &s, LaplacianForm::Spectral).unwrap();
        let op = QuadratureLaplacian::new(g, &s, 2.0 * g.spacing()).unwrap();
        let err = rel_l2(&op.apply(&f).unwrap(), &spec);
        assert!(err < 2e-2, "2-d relative error {err}");
        assert!((op.k_fitted() / op.k_closed_form() - 1.0).abs() < 5e-2);
    }

    #[test]
    fn quadrature_parameter_errors() {
        let g = GridSpec::new(1, 64, 2.0 * PI).unwrap();
        let s = StableParams::new(1.5, 1).unwrap();
        assert!(QuadratureLaplacian::new(g, &s, PI).is_err());
        assert!(QuadratureLaplacian::new(g, &s, 0.0).is_err());
        let gauss = StableParams::new(2.0, 1).unwrap();
        assert!(QuadratureLaplacian::new(g, &gauss, 0.2).is_err());
    }
}
