//! Periodic grids and sampled fields.
//!
//! A [`GridSpec`] describes the torus `[0, L)^d` sampled at `n` points per
//! axis; grid point `j` sits at `x_j = j L / n`. Multi-dimensional arrays are
//! stored row-major with axis 0 varying slowest.

use num_complex::Complex64;

use crate::error::{config, param, Result};

/// Sampling of the periodic torus of side `length` in `dim` dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return param(format!("dimension must be 1 or 2, got {dim}"));
        }
        if n < 8 || !n.is_power_of_two() {
            return param(format!("points per axis must be a power of two >= 8, got {n}"));
        }
        if !(length.is_finite() && length > 0.0) {
            return param(format!("torus length must be positive, got {length}"));
        }
        Ok(Self { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Total number of samples, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Signed frequency index of storage position `i` along one axis, in `-n/2..n/2`.
    pub fn freq_index(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Wavenumber `2 pi k / L` of storage position `i` along one axis.
    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.freq_index(i) as f64 / self.length
    }

    /// Per-axis storage indices of a flat index.
    pub fn unravel(&self, flat: usize) -> [usize; 2] {
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / self.n, flat % self.n]
        }
    }

    pub fn ravel(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.n + idx[1]
        }
    }

    /// Coordinates of a flat grid index (unused axes are zero).
    pub fn coords(&self, flat: usize) -> [f64; 2] {
        let h = self.spacing();
        let idx = self.unravel(flat);
        [idx[0] as f64 * h, idx[1] as f64 * h]
    }

    /// Wavevector of a flat spectral index (unused axes are zero).
    pub fn wavevector(&self, flat: usize) -> [f64; 2] {
        let idx = self.unravel(flat);
        if self.dim == 1 {
            [self.wavenumber(idx[0]), 0.0]
        } else {
            [self.wavenumber(idx[0]), self.wavenumber(idx[1])]
        }
    }

    /// Flat index of the Hermitian partner `-k` of a flat spectral index.
    pub fn partner(&self, flat: usize) -> usize {
        let n = self.n;
        let idx = self.unravel(flat);
        self.ravel([(n - idx[0]) % n, (n - idx[1]) % n])
    }

    /// Minimal-image displacement `a - b` on the torus, componentwise in `[-L/2, L/2)`.
    pub fn wrap(&self, z: f64) -> f64 {
        let l = self.length;
        z - l * (z / l + 0.5).floor()
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return config(format!("grid mismatch: {self:?} vs {other:?}"));
        }
        Ok(())
    }
}

/// Real samples of a function on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return config(format!("field has {} values but the grid holds {}", values.len(), grid.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return param(format!("non-finite field value at index {i}"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f` at every grid point; `f` receives `[x0, x1]` (x1 = 0 in 1-d).
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self::new(grid, values)
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Riemann-sum integral over the torus.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// `L^p` norm with cell-volume weights; `p = inf` gives the grid maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm(&self.values, self.grid.cell_volume(), p)
    }

    pub fn max_abs(&self) -> f64 {
        self.lp_norm(f64::INFINITY)
    }

    pub fn scale(&self, a: f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|v| a * v).collect())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a * b)
    }

    fn zip(&self, other: &Field, op: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| op(*a, *b)).collect();
        Ok(Field::from_raw(self.grid, values))
    }
}

/// Weighted discrete `L^p` norm; `p = inf` returns the max modulus.
pub fn lp_norm(values: &[f64], cell_volume: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    }
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().map(|v| (v.abs() / scale).powf(p)).sum();
    scale * (s * cell_volume).powf(1.0 / p)
}

/// Fourier coefficients of a field, stored in FFT order (see [`GridSpec::freq_index`]).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return config(format!("spectrum has {} coefficients but the grid holds {}", coeffs.len(), grid.len()));
        }
        Ok(Self { grid, coeffs })
    }

    pub(crate) fn from_raw(grid: GridSpec, coeffs: Vec<Complex64>) -> Self {
        Self { grid, coeffs }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Largest violation of `c(-k) = conj(c(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[self.grid.partner(i)] - self.coeffs[i].conj()).norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(3, 16, 1.0).is_err());
        assert!(GridSpec::new(1, 12, 1.0).is_err());
        assert!(GridSpec::new(1, 4, 1.0).is_err());
        assert!(GridSpec::new(1, 16, 0.0).is_err());
        assert!(GridSpec::new(2, 16, 1.0).is_ok());
    }

    #[test]
    fn frequency_layout() {
        let g = GridSpec::new(1, 8, 2.0 * std::f64::consts::PI).unwrap();
        let ks: Vec<i64> = (0..8).map(|i| g.freq_index(i)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert!((g.wavenumber(1) - 1.0).abs() < 1e-15);
        assert_eq!(g.partner(1), 7);
        assert_eq!(g.partner(4), 4);
        assert_eq!(g.partner(0), 0);
    }

    #[test]
    fn norms() {
        let g = GridSpec::new(1, 8, 8.0).unwrap();
        let f = Field::constant(g, 2.0);
        assert!((f.lp_norm(1.0) - 16.0).abs() < 1e-12);
        assert!((f.lp_norm(2.0) - (4.0 * 8.0_f64).sqrt()).abs() < 1e-12);
        assert_eq!(f.max_abs(), 2.0);
        assert_eq!(Field::zeros(g).lp_norm(3.0), 0.0);
    }

    #[test]
    fn rejects_nonfinite_and_bad_length() {
        let g = GridSpec::new(1, 8, 1.0).unwrap();
        assert!(Field::new(g, vec![0.0; 7]).is_err());
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(Field::new(g, v).is_err());
    }

    #[test]
    fn wrap_is_minimal_image() {
        let g = GridSpec::new(1, 8, 4.0).unwrap();
        assert!((g.wrap(3.0) + 1.0).abs() < 1e-15);
        assert!((g.wrap(-3.0) - 1.0).abs() < 1e-15);
        assert!((g.wrap(1.5) - 1.5).abs() < 1e-15);
    }
}
