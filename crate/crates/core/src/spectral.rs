//! Discrete Fourier transforms on the periodic grid and Fourier-multiplier calculus.
//!
//! The forward transform is unnormalized and the inverse carries the `1/n^d`
//! factor, so `from_spectral(to_spectral(f)) == f`. FFT plans are cached per
//! thread.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::grid::{Field, GridSpec, SpectralField};

thread_local! {
    static PLANS: RefCell<PlanCache> = RefCell::new(PlanCache::default());
}

struct PlanCache {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

impl Default for PlanCache {
    fn default() -> Self {
        Self { planner: FftPlanner::new(), forward: HashMap::new(), inverse: HashMap::new() }
    }
}

impl PlanCache {
    fn plan(&mut self, n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
        let PlanCache { planner, forward, inverse: inv } = self;
        if inverse {
            inv.entry(n).or_insert_with(|| planner.plan_fft_inverse(n)).clone()
        } else {
            forward.entry(n).or_insert_with(|| planner.plan_fft_forward(n)).clone()
        }
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// In-place unnormalized transform over all axes of `grid`.
pub(crate) fn fft_in_place(grid: &GridSpec, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let plan = PLANS.with(|p| p.borrow_mut().plan(n, inverse));
    // rustfft processes every length-n chunk of the buffer.
    plan.process(data);
    if grid.dim() == 2 {
        transpose(data, n);
        plan.process(data);
        transpose(data, n);
    }
}

pub fn to_spectral(f: &Field) -> SpectralField {
    let mut data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(f.grid(), &mut data, false);
    SpectralField::from_raw(*f.grid(), data)
}

/// Inverse transform; the imaginary residue of a Hermitian spectrum is discarded.
pub fn from_spectral(spec: &SpectralField) -> Field {
    let grid = *spec.grid();
    let mut data = spec.coeffs().to_vec();
    fft_in_place(&grid, &mut data, true);
    let scale = 1.0 / grid.len() as f64;
    Field::from_raw(grid, data.iter().map(|c| c.re * scale).collect())
}

/// Symbol of a Fourier multiplier sampled at every grid wavevector.
///
/// The table is symmetrized as `(m(k) + conj(m(-k))) / 2` using the storage
/// partner of each index. This zeroes the odd part at self-conjugate
/// (Nyquist) indices, so real fields stay real.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl SymbolTable {
    pub fn new(grid: GridSpec, symbol: impl Fn([f64; 2]) -> Complex64) -> Self {
        let raw: Vec<Complex64> = (0..grid.len()).map(|i| symbol(grid.wavevector(i))).collect();
        let values = (0..grid.len()).map(|i| 0.5 * (raw[i] + raw[grid.partner(i)].conj())).collect();
        Self { grid, values }
    }

    /// Real symbol, no symmetrization needed for even functions of `k`.
    pub fn real(grid: GridSpec, symbol: impl Fn([f64; 2]) -> f64) -> Self {
        Self::new(grid, |k| Complex64::new(symbol(k), 0.0))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn sup_modulus(&self) -> f64 {
        self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn apply_spectral(&self, spec: &SpectralField) -> Result<SpectralField> {
        self.grid.check_same(spec.grid())?;
        let coeffs = spec.coeffs().iter().zip(&self.values).map(|(c, m)| c * m).collect();
        Ok(SpectralField::from_raw(self.grid, coeffs))
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        Ok(from_spectral(&self.apply_spectral(&to_spectral(f))?))
    }
}

/// `|k|` at a wavevector.
pub fn modulus(k: [f64; 2]) -> f64 {
    (k[0] * k[0] + k[1] * k[1]).sqrt()
}

/// Symbol `i k_axis` of the partial derivative along `axis`.
pub fn derivative_symbol(grid: GridSpec, axis: usize) -> SymbolTable {
    SymbolTable::new(grid, move |k| Complex64::new(0.0, k[axis]))
}

/// Random real field with Fourier support `|k_i| <= k_max` (integer indices)
/// and zero mean; amplitudes are standard normal scaled by `(1 + |k|)^-decay`.
pub fn random_band_limited<R: Rng + ?Sized>(grid: GridSpec, k_max: usize, decay: f64, rng: &mut R) -> Field {
    let k_max = k_max.min(grid.n() / 2 - 1) as i64;
    let mut raw = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (i, c) in raw.iter_mut().enumerate() {
        let idx = grid.unravel(i);
        let k0 = grid.freq_index(idx[0]);
        let k1 = if grid.dim() == 2 { grid.freq_index(idx[1]) } else { 0 };
        if (k0 == 0 && k1 == 0) || k0.abs() > k_max || k1.abs() > k_max {
            continue;
        }
        let amp = (1.0 + ((k0 * k0 + k1 * k1) as f64).sqrt()).powf(-decay);
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *c = amp * Complex64::new(re, im);
    }
    let coeffs = (0..grid.len()).map(|i| 0.5 * (raw[i] + raw[grid.partner(i)].conj())).collect();
    from_spectral(&SpectralField::from_raw(grid, coeffs))
}

/// Spectral partial derivative.
pub fn derivative(f: &Field, axis: usize) -> Result<Field> {
    derivative_symbol(*f.grid(), axis).apply(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid1(n: usize) -> GridSpec {
        GridSpec::new(1, n, 2.0 * PI).unwrap()
    }

    #[test]
    fn constant_has_only_dc() {
        let g = grid1(32);
        let s = to_spectral(&Field::constant(g, 3.0));
        assert!((s.coeffs()[0].re - 96.0).abs() < 1e-12);
        assert!(s.coeffs()[1..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn cosine_has_two_modes() {
        let g = grid1(32);
        let f = Field::from_fn(g, |x| x[0].cos()).unwrap();
        let s = to_spectral(&f);
        let nonzero: Vec<i64> = (0..32).filter(|&i| s.coeffs()[i].norm() > 1e-9).map(|i| g.freq_index(i)).collect();
        assert_eq!(nonzero, vec![1, -1]);
    }

    #[test]
    fn roundtrip_random_1d_and_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in [grid1(64), GridSpec::new(2, 32, 3.0).unwrap()] {
            let vals: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = Field::new(g, vals).unwrap();
            let back = from_spectral(&to_spectral(&f));
            let err = back.sub(&f).unwrap().lp_norm(2.0) / f.lp_norm(2.0);
            assert!(err < 1e-12, "roundtrip error {err}");
            assert!(to_spectral(&f).hermitian_defect() < 1e-9);
        }
    }

    #[test]
    fn derivative_of_sine_2d() {
        let g = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let f = Field::from_fn(g, |x| (x[0] + 2.0 * x[1]).sin()).unwrap();
        let d1 = derivative(&f, 1).unwrap();
        let expect = Field::from_fn(g, |x| 2.0 * (x[0] + 2.0 * x[1]).cos()).unwrap();
        assert!(d1.sub(&expect).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn band_limited_support_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid1(64);
        let f = random_band_limited(g, 5, 1.0, &mut rng);
        assert!(f.mean().abs() < 1e-14);
        let s = to_spectral(&f);
        for i in 0..64 {
            if g.freq_index(i).abs() > 5 {
                assert!(s.coeffs()[i].norm() < 1e-10);
            }
        }
        assert!(f.max_abs() > 0.0);
    }

    #[test]
    fn nyquist_derivative_is_zeroed() {
        let g = grid1(8);
        let f = Field::from_fn(g, |x| (4.0 * x[0]).cos()).unwrap();
        assert!(derivative(&f, 0).unwrap().max_abs() < 1e-12);
    }
}
