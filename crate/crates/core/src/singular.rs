//! Calderón–Zygmund kernels in multiplier and pointwise form, their action on
//! periodic fields, and randomized lower-bound probes of operator norms.
//!
//! Multiplier kernels are homogeneous of degree zero with `m(0) = 0`, so they
//! annihilate constants. Pointwise kernels `b(x, y)` are evaluated on the
//! torus through the minimal-image displacement `x - y`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param, Error, Result};
use crate::expr::Expr;
use crate::grid::{Field, GridSpec};
use crate::spectral::{modulus, random_band_limited, SymbolTable};

fn wrap(z: f64, length: f64) -> f64 {
    z - length * (z / length + 0.5).floor()
}

/// `cot(theta)` for `|theta| <= pi/2` from truncated sine and cosine series.
///
/// Branch-free so the particle drift loop vectorizes; relative error below 1e-13.
#[inline(always)]
pub(crate) fn cot_poly(theta: f64) -> f64 {
    let t2 = theta * theta;
    // sin(t)/t, Horner in t^2, through t^16 / 17!
    let mut s = -1.0 / 355_687_428_096_000.0;
    s = s * t2 + 1.0 / 1_307_674_368_000.0;
    s = s * t2 - 1.0 / 6_227_020_800.0;
    s = s * t2 + 1.0 / 39_916_800.0;
    s = s * t2 - 1.0 / 362_880.0;
    s = s * t2 + 1.0 / 5_040.0;
    s = s * t2 - 1.0 / 120.0;
    s = s * t2 + 1.0 / 6.0;
    s = 1.0 - s * t2;
    // cos(t) through t^18 / 18!
    let mut c = -1.0 / 6_402_373_705_728_000.0;
    c = c * t2 + 1.0 / 20_922_789_888_000.0;
    c = c * t2 - 1.0 / 87_178_291_200.0;
    c = c * t2 + 1.0 / 479_001_600.0;
    c = c * t2 - 1.0 / 3_628_800.0;
    c = c * t2 + 1.0 / 40_320.0;
    c = c * t2 - 1.0 / 720.0;
    c = c * t2 + 1.0 / 24.0;
    c = c * t2 - 0.5;
    c = 1.0 + c * t2;
    c / (theta * s)
}

/// User-supplied degree-zero symbol in the unit-vector variables `w1, w2`
/// (components of `k/|k|`) and `theta = atan2(w2, w1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSymbol {
    re: Expr,
    im: Option<Expr>,
}

impl SmoothSymbol {
    pub const VARS: [&'static str; 3] = ["w1", "w2", "theta"];

    pub fn parse(re: &str, im: Option<&str>) -> Result<Self> {
        Ok(Self { re: Expr::parse(re, &Self::VARS)?, im: im.map(|s| Expr::parse(s, &Self::VARS)).transpose()? })
    }

    fn eval(&self, w: [f64; 2]) -> Complex64 {
        let args = [w[0], w[1], w[1].atan2(w[0])];
        Complex64::new(self.re.eval(&args), self.im.as_ref().map_or(0.0, |e| e.eval(&args)))
    }

    fn descriptor(&self) -> String {
        match &self.im {
            Some(im) => format!("smooth_h0:{}|{}", self.re.source(), im.source()),
            None => format!("smooth_h0:{}", self.re.source()),
        }
    }
}

/// Bounded homogeneous degree-zero Fourier multiplier with `m(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Multiplier {
    Zero,
    /// `-i sgn(k)`, one dimension only.
    Hilbert,
    /// `-i k_j / |k|` for the zero-based axis `j`.
    Riesz(usize),
    Smooth(SmoothSymbol),
}

impl Multiplier {
    pub fn symbol(&self, k: [f64; 2]) -> Complex64 {
        let r = modulus(k);
        if r == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        match self {
            Multiplier::Zero => Complex64::new(0.0, 0.0),
            Multiplier::Hilbert => Complex64::new(0.0, -k[0].signum()),
            Multiplier::Riesz(j) => Complex64::new(0.0, -k[*j] / r),
            Multiplier::Smooth(s) => s.eval([k[0] / r, k[1] / r]),
        }
    }

    pub fn table(&self, grid: GridSpec) -> SymbolTable {
        SymbolTable::new(grid, |k| self.symbol(k))
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Multiplier::Zero => Ok(()),
            Multiplier::Hilbert if dim != 1 => param("hilbert kernel is defined for d = 1 only; use riesz:j"),
            Multiplier::Hilbert => Ok(()),
            Multiplier::Riesz(j) if *j >= dim => param(format!("riesz:{} needs j <= d = {dim}", j + 1)),
            Multiplier::Riesz(_) => Ok(()),
            Multiplier::Smooth(s) => {
                let dirs: Vec<[f64; 2]> = if dim == 1 {
                    vec![[1.0, 0.0], [-1.0, 0.0]]
                } else {
                    (0..720).map(|i| (i as f64 * PI / 360.0).sin_cos()).map(|(s, c)| [c, s]).collect()
                };
                for w in dirs {
                    let m = s.eval(w);
                    let mirror = s.eval([-w[0], -w[1]]);
                    if !(m.re.is_finite() && m.im.is_finite()) {
                        return param(format!("{} is not finite at direction {w:?}", s.descriptor()));
                    }
                    if (m - mirror.conj()).norm() > 1e-9 * (1.0 + m.norm()) {
                        return param(format!(
                            "{} violates m(-k) = conj(m(k)) at direction {w:?}; the operator would not preserve real fields",
                            s.descriptor()
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    fn descriptor(&self) -> String {
        match self {
            Multiplier::Zero => "zero".into(),
            Multiplier::Hilbert => "hilbert".into(),
            Multiplier::Riesz(j) => format!("riesz:{}", j + 1),
            Multiplier::Smooth(s) => s.descriptor(),
        }
    }
}

/// Built-in pointwise kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointwiseKind {
    /// `(1/L) cot(pi z / L)`, the full periodic image sum of `1/(pi z)`.
    PeriodicHilbert,
    /// `1/(pi z)` on the nearest image only.
    NearestHilbert,
    /// `z_j / (2 pi |z|^3)` on the nearest image (d = 2).
    NearestRiesz(usize),
    /// `(1 + a cos(2 pi y / L))` times the periodic Hilbert kernel; not odd in `x - y`.
    ModulatedHilbert(f64),
}

/// Pointwise kernel `b(x, y)` on a torus of given side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseKernel {
    kind: PointwiseKind,
    dim: usize,
    length: f64,
}

impl PointwiseKernel {
    pub fn new(kind: PointwiseKind, dim: usize, length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return param(format!("kernel torus length must be positive, got {length}"));
        }
        match kind {
            PointwiseKind::NearestRiesz(j) if dim != 2 || j > 1 => {
                return param(format!("pv:riesz:{} needs d = 2 and j in 1..=2", j + 1));
            }
            PointwiseKind::PeriodicHilbert | PointwiseKind::NearestHilbert | PointwiseKind::ModulatedHilbert(_)
                if dim != 1 =>
            {
                return param("pointwise hilbert kernels are defined for d = 1 only");
            }
            PointwiseKind::ModulatedHilbert(a) if !a.is_finite() => {
                return param("modulation amplitude must be finite");
            }
            _ => {}
        }
        Ok(Self { kind, dim, length })
    }

    pub fn kind(&self) -> PointwiseKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Minimal-image displacement `x - y`.
    pub fn displacement(&self, x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
        let z0 = wrap(x[0] - y[0], self.length);
        let z1 = if self.dim == 2 { wrap(x[1] - y[1], self.length) } else { 0.0 };
        [z0, z1]
    }

    /// Kernel at wrapped displacement `z = x - y`; `y` enters only for
    /// kernels that are not of convolution type. Zero at `z = 0`.
    pub fn at(&self, z: [f64; 2], y: [f64; 2]) -> f64 {
        let r = modulus(z);
        if r == 0.0 {
            return 0.0;
        }
        let l = self.length;
        match self.kind {
            PointwiseKind::PeriodicHilbert => cot_poly(PI * z[0] / l) / l,
            PointwiseKind::NearestHilbert => 1.0 / (PI * z[0]),
            PointwiseKind::NearestRiesz(j) => z[j] / (2.0 * PI * r * r * r),
            PointwiseKind::ModulatedHilbert(a) => (1.0 + a * (2.0 * PI * y[0] / l).cos()) * cot_poly(PI * z[0] / l) / l,
        }
    }

    pub fn eval(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        self.at(self.displacement(x, y), y)
    }

    /// Kernel mollified at scale `eps`: exact for `|x - y| >= eps`, and
    /// `b` at distance `eps` along the same direction scaled by `|x - y|/eps` inside.
    pub fn eval_mollified(&self, x: [f64; 2], y: [f64; 2], eps: f64) -> f64 {
        let z = self.displacement(x, y);
        let r = modulus(z);
        if r >= eps {
            return self.at(z, y);
        }
        if r == 0.0 {
            return 0.0;
        }
        let s = eps / r;
        self.at([z[0] * s, z[1] * s], y) / s
    }

    /// Constant `C` in `|b(x, y)| <= C / |x - y|^d`.
    pub fn size_constant(&self) -> f64 {
        match self.kind {
            PointwiseKind::PeriodicHilbert | PointwiseKind::NearestHilbert => 1.0 / PI,
            PointwiseKind::NearestRiesz(_) => 0.5 / PI,
            PointwiseKind::ModulatedHilbert(a) => (1.0 + a.abs()) / PI,
        }
    }

    /// Regularity exponent for the smoothness conditions in the form
    /// `C |x - x'| / (|x - y| + |x' - y|)^delta`, which these kernels meet with `delta = d + 1`.
    pub fn delta(&self) -> f64 {
        self.dim as f64 + 1.0
    }

    /// Whether the kernel both annihilates constants and is of convolution type.
    pub fn is_experimental(&self) -> bool {
        !matches!(self.kind, PointwiseKind::PeriodicHilbert)
    }

    /// Multiplier with the same action on the torus, when one exists exactly.
    pub fn multiplier_companion(&self) -> Option<Multiplier> {
        match self.kind {
            PointwiseKind::PeriodicHilbert => Some(Multiplier::Hilbert),
            _ => None,
        }
    }

    pub fn descriptor(&self) -> String {
        match self.kind {
            PointwiseKind::PeriodicHilbert => "pv:hilbert".into(),
            PointwiseKind::NearestHilbert => "pv:hilbert-nearest".into(),
            PointwiseKind::NearestRiesz(j) => format!("pv:riesz:{}", j + 1),
            PointwiseKind::ModulatedHilbert(a) => format!("pv:modulated-hilbert:{a}"),
        }
    }
}

/// A Calderón–Zygmund kernel in one of its two representations.
#[derive(Debug, Clone, PartialEq)]
pub enum CzKernel {
    Multiplier(Multiplier),
    Pointwise(PointwiseKernel),
}

impl CzKernel {
    /// Parses a kernel descriptor.
    ///
    /// Multiplier forms: `zero`, `hilbert`, `riesz:j` (1-based), and
    /// `smooth_h0:<re>[|<im>]` with expressions in `w1, w2, theta`.
    /// Pointwise forms: `pv:hilbert`, `pv:hilbert-nearest`, `pv:riesz:j`,
    /// `pv:modulated-hilbert:<a>`.
    pub fn parse(desc: &str, dim: usize, length: f64) -> Result<Self> {
        let desc = desc.trim();
        let axis = |s: &str| -> Result<usize> {
            match s.trim().parse::<usize>() {
                Ok(j) if j >= 1 => Ok(j - 1),
                _ => param(format!("bad Riesz index `{s}` in kernel `{desc}`")),
            }
        };
        let kernel = if desc == "zero" {
            CzKernel::Multiplier(Multiplier::Zero)
        } else if desc == "hilbert" {
            CzKernel::Multiplier(Multiplier::Hilbert)
        } else if let Some(j) = desc.strip_prefix("riesz:") {
            CzKernel::Multiplier(Multiplier::Riesz(axis(j)?))
        } else if let Some(body) = desc.strip_prefix("smooth_h0:") {
            let (re, im) = match body.split_once('|') {
                Some((re, im)) => (re, Some(im)),
                None => (body, None),
            };
            CzKernel::Multiplier(Multiplier::Smooth(SmoothSymbol::parse(re, im)?))
        } else if desc == "pv:hilbert" {
            CzKernel::Pointwise(PointwiseKernel::new(PointwiseKind::PeriodicHilbert, dim, length)?)
        } else if desc == "pv:hilbert-nearest" {
            CzKernel::Pointwise(PointwiseKernel::new(PointwiseKind::NearestHilbert, dim, length)?)
        } else if let Some(j) = desc.strip_prefix("pv:riesz:") {
            CzKernel::Pointwise(PointwiseKernel::new(PointwiseKind::NearestRiesz(axis(j)?), dim, length)?)
        } else if let Some(a) = desc.strip_prefix("pv:modulated-hilbert:") {
            let a: f64 = a.trim().parse().map_err(|_| Error::Parameter(format!("bad amplitude in `{desc}`")))?;
            CzKernel::Pointwise(PointwiseKernel::new(PointwiseKind::ModulatedHilbert(a), dim, length)?)
        } else {
            return param(format!(
                "unknown kernel `{desc}` (expected zero | hilbert | riesz:j | smooth_h0:<expr>[|<expr>] | pv:hilbert | pv:hilbert-nearest | pv:riesz:j | pv:modulated-hilbert:<a>)"
            ));
        };
        if let CzKernel::Multiplier(m) = &kernel {
            m.validate(dim)?;
        }
        Ok(kernel)
    }

    pub fn descriptor(&self) -> String {
        match self {
            CzKernel::Multiplier(m) => m.descriptor(),
            CzKernel::Pointwise(p) => p.descriptor(),
        }
    }

    /// The multiplier form, directly or through the exact companion of a pointwise kernel.
    pub fn multiplier_form(&self) -> Option<Multiplier> {
        match self {
            CzKernel::Multiplier(m) => Some(m.clone()),
            CzKernel::Pointwise(p) => p.multiplier_companion(),
        }
    }

    /// The pointwise form, directly or as the catalog companion of a multiplier.
    /// `None` for the zero kernel and user symbols, whose kernels are not tabulated.
    pub fn pointwise_form(&self, dim: usize, length: f64) -> Option<PointwiseKernel> {
        match self {
            CzKernel::Pointwise(p) => Some(*p),
            CzKernel::Multiplier(Multiplier::Hilbert) => {
                PointwiseKernel::new(PointwiseKind::PeriodicHilbert, dim, length).ok()
            }
            CzKernel::Multiplier(Multiplier::Riesz(j)) if dim == 2 => {
                PointwiseKernel::new(PointwiseKind::NearestRiesz(*j), dim, length).ok()
            }
            CzKernel::Multiplier(Multiplier::Riesz(0)) => {
                PointwiseKernel::new(PointwiseKind::PeriodicHilbert, dim, length).ok()
            }
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, CzKernel::Multiplier(Multiplier::Zero))
    }
}

/// `F^-1(m(k) F f)` for multiplier kernels.
pub fn cz_apply(kern: &CzKernel, f: &Field) -> Result<Field> {
    match kern {
        CzKernel::Multiplier(m) => m.table(*f.grid()).apply(f),
        CzKernel::Pointwise(p) => {
            Err(Error::UnsupportedForm(format!("{} is a pointwise kernel; use cz_apply_pv", p.descriptor())))
        }
    }
}

/// Principal-value quadrature of `int b(x, y) f(y) dy` on the grid.
///
/// Points farther than `eps` contribute `b f(y)`; nearer points (other than
/// `y = x`) contribute `b (f(y) - f(x))`. Cost is `O(len^2)`.
pub fn cz_apply_pv(kern: &PointwiseKernel, f: &Field, eps: f64) -> Result<Field> {
    let grid = *f.grid();
    if kern.dim() != grid.dim() || (kern.length() - grid.length()).abs() > 1e-12 * grid.length() {
        return Err(Error::Config(format!(
            "kernel {} lives on d = {}, L = {}, field on d = {}, L = {}",
            kern.descriptor(),
            kern.dim(),
            kern.length(),
            grid.dim(),
            grid.length()
        )));
    }
    if !(eps >= grid.spacing() * (1.0 - 1e-12)) {
        return param(format!("cutoff eps = {eps} is below the grid spacing {}", grid.spacing()));
    }
    let vals = f.values();
    let coords: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.coords(i)).collect();
    let vol = grid.cell_volume();
    // grid distances equal to eps must classify identically on both sides of x
    let cutoff = eps * (1.0 + 1e-9);
    let out = (0..grid.len())
        .map(|i| {
            let x = coords[i];
            let fx = vals[i];
            let mut acc = 0.0;
            for (j, &y) in coords.iter().enumerate() {
                if j == i {
                    continue;
                }
                let z = kern.displacement(x, y);
                let b = kern.at(z, y);
                acc += if modulus(z) > cutoff { b * vals[j] } else { b * (vals[j] - fx) };
            }
            acc * vol
        })
        .collect();
    Field::new(grid, out)
}

fn apply_any(kern: &CzKernel, f: &Field) -> Result<Field> {
    match kern {
        CzKernel::Multiplier(_) => cz_apply(kern, f),
        CzKernel::Pointwise(p) => cz_apply_pv(p, f, f.grid().spacing()),
    }
}

/// Lower bound on the `L^p` operator norm: the largest ratio
/// `||K f||_p / ||f||_p` over random mean-zero band-limited fields
/// (Fourier support within `n/4`). Pointwise kernels use the PV quadrature
/// with cutoff one grid spacing.
pub fn operator_norm_probe(kern: &CzKernel, grid: GridSpec, p: f64, trials: usize, seed: u64) -> Result<f64> {
    if !(1.1..=16.0).contains(&p) {
        return param(format!("operator norm probe needs p in [1.1, 16], got {p}"));
    }
    if trials < 32 {
        return param(format!("operator norm probe needs at least 32 trials, got {trials}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0_f64;
    for _ in 0..trials {
        let k_max = rng.random_range(1..=grid.n() / 4);
        let decay = rng.random_range(0.0..2.0);
        let f = random_band_limited(grid, k_max, decay, &mut rng);
        let denom = f.lp_norm(p);
        if denom == 0.0 {
            continue;
        }
        best = best.max(apply_any(kern, &f)?.lp_norm(p) / denom);
    }
    Ok(best)
}

/// Discrete Hölder seminorm: the largest `|g(x) - g(y)| / |x - y|^e` over
/// grid pairs at torus distance at most `L/4`.
pub fn holder_seminorm(g: &Field, exponent: f64) -> f64 {
    let grid = *g.grid();
    let reach = 0.25 * grid.length();
    let coords: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.coords(i)).collect();
    let v = g.values();
    let mut best = 0.0_f64;
    for i in 0..grid.len() {
        for j in (i + 1)..grid.len() {
            let z0 = grid.wrap(coords[i][0] - coords[j][0]);
            let z1 = grid.wrap(coords[i][1] - coords[j][1]);
            let r = (z0 * z0 + z1 * z1).sqrt();
            if r <= reach {
                best = best.max((v[i] - v[j]).abs() / r.powf(exponent));
            }
        }
    }
    best
}

/// Lower bound on the `Lip(e)` operator norm over random smooth fields
/// (Fourier support within 8 modes, `(1 + |k|)^-2` amplitudes).
pub fn lipschitz_probe(kern: &CzKernel, grid: GridSpec, exponent: f64, trials: usize, seed: u64) -> Result<f64> {
    let delta = match kern {
        CzKernel::Pointwise(p) => p.delta(),
        CzKernel::Multiplier(_) => grid.dim() as f64 + 1.0,
    };
    if !(exponent > 0.0 && exponent <= delta.min(1.0)) {
        return param(format!("Hölder exponent must lie in (0, {}], got {exponent}", delta.min(1.0)));
    }
    if trials == 0 {
        return param("lipschitz probe needs at least one trial");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0_f64;
    for _ in 0..trials {
        let k_max = rng.random_range(1..=8usize);
        let f = random_band_limited(grid, k_max, 2.0, &mut rng);
        let denom = holder_seminorm(&f, exponent);
        if denom == 0.0 {
            continue;
        }
        best = best.max(holder_seminorm(&apply_any(kern, &f)?, exponent) / denom);
    }
    Ok(best)
}

/// Largest constants observed for the size and smoothness conditions on a
/// random pair set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConditions {
    /// `max |b(x, y)| |x - y|^d`.
    pub size: f64,
    /// `max |b(x, y) - b(x', y)| (|x - y| + |x' - y|)^delta / |x - x'|`.
    pub smooth_x: f64,
    /// `max |b(x, y') - b(x, y)| (|x - y| + |x - y'|)^delta / |y - y'|`.
    pub smooth_y: f64,
    pub pairs: usize,
}

/// Samples `pairs` configurations with separations between `1e-4 L` and
/// `L/4` and measures the kernel-condition constants. Fails if the size bound
/// is exceeded.
pub fn kernel_conditions(kern: &PointwiseKernel, pairs: usize, seed: u64) -> Result<KernelConditions> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = kern.length();
    let d = kern.dim();
    let delta = kern.delta();
    let mut out = KernelConditions { size: 0.0, smooth_x: 0.0, smooth_y: 0.0, pairs };
    let offset = |rng: &mut ChaCha8Rng, max: f64| -> [f64; 2] {
        let r = max * (1e-4f64).powf(rng.random::<f64>());
        if d == 1 {
            [if rng.random::<bool>() { r } else { -r }, 0.0]
        } else {
            let a = rng.random_range(0.0..2.0 * PI);
            [r * a.cos(), r * a.sin()]
        }
    };
    for _ in 0..pairs {
        let x = [rng.random_range(0.0..l), if d == 2 { rng.random_range(0.0..l) } else { 0.0 }];
        let z = offset(&mut rng, 0.25 * l);
        let y = [x[0] - z[0], x[1] - z[1]];
        let r = modulus(z);
        let b = kern.eval(x, y);
        out.size = out.size.max(b.abs() * r.powi(d as i32));

        // perturbation of length at most half the separation keeps the pair admissible
        let w = offset(&mut rng, 0.5 * r);
        let xp = [x[0] + w[0], x[1] + w[1]];
        let rp = modulus(kern.displacement(xp, y));
        let dx = (b - kern.eval(xp, y)).abs() * (r + rp).powf(delta) / modulus(w);
        out.smooth_x = out.smooth_x.max(dx);

        let yp = [y[0] + w[0], y[1] + w[1]];
        let ryp = modulus(kern.displacement(x, yp));
        let dy = (kern.eval(x, yp) - b).abs() * (r + ryp).powf(delta) / modulus(w);
        out.smooth_y = out.smooth_y.max(dy);
    }
    if out.size > kern.size_constant() * (1.0 + 1e-9) {
        return param(format!(
            "{} violates |b| <= C/|x-y|^d: observed {} > C = {}",
            kern.descriptor(),
            out.size,
            kern.size_constant()
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid1(n: usize) -> GridSpec {
        GridSpec::new(1, n, 2.0 * PI).unwrap()
    }

    fn kernel(desc: &str, dim: usize) -> CzKernel {
        CzKernel::parse(desc, dim, 2.0 * PI).unwrap()
    }

    #[test]
    fn cot_poly_accuracy() {
        for i in 1..2000 {
            let t = -PI / 2.0 + PI * i as f64 / 2000.0;
            if t.abs() < 1e-12 {
                continue;
            }
            let exact = t.cos() / t.sin();
            assert!((cot_poly(t) - exact).abs() <= 1e-13 * exact.abs().max(1.0), "theta {t}");
        }
        assert!(cot_poly(PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn hilbert_of_sine_is_minus_cosine() {
        let g = grid1(64);
        let f = Field::from_fn(g, |x| x[0].sin()).unwrap();
        let out = cz_apply(&kernel("hilbert", 1), &f).unwrap();
        let expect = Field::from_fn(g, |x| -x[0].cos()).unwrap();
        assert!(out.sub(&expect).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn riesz_in_two_dimensions_maps_cos_to_sin() {
        let g = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let f = Field::from_fn(g, |x| x[0].cos()).unwrap();
        let out = cz_apply(&kernel("riesz:1", 2), &f).unwrap();
        let expect = Field::from_fn(g, |x| x[0].sin()).unwrap();
        assert!(out.sub(&expect).unwrap().max_abs() < 1e-13);
        assert!(cz_apply(&kernel("riesz:2", 2), &f).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn constants_are_annihilated() {
        let g1 = grid1(64);
        let g2 = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        for (desc, g) in [
            ("hilbert", g1),
            ("zero", g1),
            ("smooth_h0:0.5", g1),
            ("riesz:1", g2),
            ("riesz:2", g2),
            ("smooth_h0:w1^2-w2^2|0", g2),
        ] {
            let out = cz_apply(&kernel(desc, g.dim()), &Field::constant(g, 3.7)).unwrap();
            assert!(out.max_abs() < 1e-14, "{desc}: {}", out.max_abs());
        }
    }

    #[test]
    fn hilbert_squared_is_minus_identity_on_mean_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = grid1(128);
        let f = random_band_limited(g, 40, 0.5, &mut rng).add(&Field::constant(g, 2.0)).unwrap();
        let h = kernel("hilbert", 1);
        let hh = cz_apply(&h, &cz_apply(&h, &f).unwrap()).unwrap();
        let expect = f.sub(&Field::constant(g, f.mean())).unwrap().scale(-1.0);
        assert!(hh.sub(&expect).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn pointwise_kernel_refused_by_multiplier_apply() {
        let f = Field::zeros(grid1(16));
        let err = cz_apply(&kernel("pv:hilbert", 1), &f).unwrap_err();
        assert!(matches!(err, Error::UnsupportedForm(_)));
        assert!(err.to_string().contains("cz_apply_pv"));
    }

    #[test]
    fn descriptor_parsing() {
        for bad in ["hilbrt", "riesz:0", "riesz:x", "pv:modulated-hilbert:q", "smooth_h0:foo(w1)"] {
            assert!(CzKernel::parse(bad, 1, 1.0).is_err(), "{bad}");
        }
        assert!(CzKernel::parse("hilbert", 2, 1.0).is_err());
        assert!(CzKernel::parse("riesz:3", 2, 1.0).is_err());
        assert!(CzKernel::parse("pv:riesz:1", 1, 1.0).is_err());
        // real and odd in k: not Hermitian
        assert!(CzKernel::parse("smooth_h0:w1", 2, 1.0).is_err());
        // -i w1 is the first Riesz symbol
        assert!(CzKernel::parse("smooth_h0:0|-w1", 2, 1.0).is_ok());
        for desc in ["zero", "hilbert", "riesz:1", "smooth_h0:0.5", "pv:hilbert", "pv:modulated-hilbert:0.5"] {
            assert_eq!(kernel(desc, 1).descriptor(), desc);
        }
        assert_eq!(kernel("pv:riesz:2", 2).descriptor(), "pv:riesz:2");
    }

    #[test]
    fn smooth_symbol_reproduces_riesz() {
        let g = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let f = Field::from_fn(g, |x| (x[0] + 2.0 * x[1]).cos() + x[1].sin()).unwrap();
        let a = cz_apply(&kernel("smooth_h0:0|-w2", 2), &f).unwrap();
        let b = cz_apply(&kernel("riesz:2", 2), &f).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn pv_hilbert_matches_multiplier_with_monotone_error() {
        let mut errors = Vec::new();
        for n in [128, 256, 512] {
            let g = grid1(n);
            let f = Field::from_fn(g, |x| x[0].sin()).unwrap();
            let pv =
                cz_apply_pv(&kernel("pv:hilbert", 1).pointwise_form(1, 2.0 * PI).unwrap(), &f, g.spacing()).unwrap();
            let exact = cz_apply(&kernel("hilbert", 1), &f).unwrap();
            errors.push(pv.sub(&exact).unwrap().lp_norm(2.0) / exact.lp_norm(2.0));
        }
        assert!(errors[2] < 1e-2, "{errors:?}");
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    }

    #[test]
    fn pv_on_constant_vanishes() {
        let g = grid1(256);
        let p = PointwiseKernel::new(PointwiseKind::PeriodicHilbert, 1, 2.0 * PI).unwrap();
        let out = cz_apply_pv(&p, &Field::constant(g, 1.5), 4.0 * g.spacing()).unwrap();
        assert!(out.max_abs() < 1e-3);
        assert!(cz_apply_pv(&p, &Field::constant(g, 1.5), 0.5 * g.spacing()).is_err());
    }

    #[test]
    fn pv_refinement_for_non_odd_kernel() {
        // b(x, y) = (1 + a cos y) cot((x - y)/2) / (2 pi): the PV limit is H((1 + a cos) f)
        let a = 0.5;
        let g = grid1(512);
        let p = PointwiseKernel::new(PointwiseKind::ModulatedHilbert(a), 1, 2.0 * PI).unwrap();
        let f = Field::from_fn(g, |x| (x[0]).sin() + 0.3 * (2.0 * x[0]).cos()).unwrap();
        let outs: Vec<Field> =
            [16.0, 8.0, 4.0, 2.0].iter().map(|m| cz_apply_pv(&p, &f, m * g.spacing()).unwrap()).collect();
        let steps: Vec<f64> = outs.windows(2).map(|w| w[0].sub(&w[1]).unwrap().lp_norm(2.0)).collect();
        assert!(steps[0] > steps[1] && steps[1] > steps[2], "{steps:?}");
        let weighted = f.mul(&Field::from_fn(g, |x| 1.0 + a * x[0].cos()).unwrap()).unwrap();
        let limit = cz_apply(&kernel("hilbert", 1), &weighted).unwrap();
        let err = outs[3].sub(&limit).unwrap().lp_norm(2.0) / limit.lp_norm(2.0);
        assert!(err < 2e-2, "relative error {err}");
    }

    #[test]
    fn operator_norm_probe_cases() {
        let g = grid1(128);
        let h = operator_norm_probe(&kernel("hilbert", 1), g, 2.0, 64, 1).unwrap();
        assert!(h <= 1.0 + 1e-10 && h >= 0.99, "{h}");
        assert_eq!(operator_norm_probe(&kernel("zero", 1), g, 2.0, 32, 1).unwrap(), 0.0);
        let s = operator_norm_probe(&kernel("smooth_h0:0.75", 1), g, 2.0, 32, 2).unwrap();
        assert!(s <= 0.75 + 1e-12);
        let h4 = operator_norm_probe(&kernel("hilbert", 1), g, 4.0, 32, 3).unwrap();
        assert!(h4 > 1.0, "L^4 probe {h4}");
        assert!(operator_norm_probe(&kernel("hilbert", 1), g, 1.0, 64, 1).is_err());
        assert!(operator_norm_probe(&kernel("hilbert", 1), g, 2.0, 16, 1).is_err());
    }

    #[test]
    fn lipschitz_probe_cases() {
        let g = grid1(128);
        assert_eq!(lipschitz_probe(&kernel("zero", 1), g, 0.5, 8, 1).unwrap(), 0.0);
        let c = lipschitz_probe(&kernel("smooth_h0:-0.4", 1), g, 0.5, 8, 1).unwrap();
        assert!(c <= 0.4 + 1e-9, "{c}");
        let a = lipschitz_probe(&kernel("hilbert", 1), g, 0.5, 64, 1).unwrap();
        let b = lipschitz_probe(&kernel("hilbert", 1), g, 0.5, 64, 2).unwrap();
        assert!(a.is_finite() && (a - b).abs() < 0.2 * a.max(b), "{a} vs {b}");
        assert!(lipschitz_probe(&kernel("hilbert", 1), g, 1.5, 8, 1).is_err());
    }

    #[test]
    fn kernel_conditions_hold_for_catalog() {
        for desc in ["pv:hilbert", "pv:hilbert-nearest", "pv:modulated-hilbert:0.5"] {
            let CzKernel::Pointwise(p) = kernel(desc, 1) else { unreachable!() };
            let c = kernel_conditions(&p, 4000, 7).unwrap();
            assert!(c.size > 0.0 && c.smooth_x.is_finite() && c.smooth_y.is_finite(), "{desc}: {c:?}");
        }
        let CzKernel::Pointwise(r) = kernel("pv:riesz:1", 2) else { unreachable!() };
        let c = kernel_conditions(&r, 4000, 7).unwrap();
        assert!(c.smooth_x < 50.0 && c.smooth_y < 50.0, "{c:?}");
    }

    #[test]
    fn mollified_kernel_is_tapered_and_odd() {
        let p = PointwiseKernel::new(PointwiseKind::PeriodicHilbert, 1, 2.0 * PI).unwrap();
        let eps = 0.2;
        assert_eq!(p.eval_mollified([1.0, 0.0], [1.0, 0.0], eps), 0.0);
        let inside = p.eval_mollified([1.0, 0.0], [0.95, 0.0], eps);
        assert!((inside - 0.25 * p.eval([1.0, 0.0], [0.8, 0.0])).abs() < 1e-14);
        let far = p.eval_mollified([1.0, 0.0], [0.5, 0.0], eps);
        assert_eq!(far, p.eval([1.0, 0.0], [0.5, 0.0]));
        assert!((p.eval_mollified([0.5, 0.0], [1.0, 0.0], eps) + far).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn plancherel_bound(seed in any::<u64>(), k_max in 1usize..31, which in 0usize..4) {
            let desc = ["hilbert", "zero", "smooth_h0:cos(theta)^2|0", "smooth_h0:0.3|sgn(w1)"][which];
            let kern = kernel(desc, 1);
            let g = grid1(64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_band_limited(g, k_max, 0.0, &mut rng);
            let sup = kern.multiplier_form().unwrap().table(g).sup_modulus();
            let out = cz_apply(&kern, &f).unwrap();
            prop_assert!(out.lp_norm(2.0) <= sup * f.lp_norm(2.0) * (1.0 + 1e-12) + 1e-15);
        }

        #[test]
        fn cz_apply_is_linear(seed in any::<u64>(), a in -3.0f64..3.0) {
            let g = GridSpec::new(2, 16, 3.0).unwrap();
            let kern = CzKernel::parse("riesz:2", 2, 3.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_band_limited(g, 7, 0.5, &mut rng);
            let h = random_band_limited(g, 7, 0.5, &mut rng);
            let lhs = cz_apply(&kern, &f.scale(a).add(&h).unwrap()).unwrap();
            let rhs = cz_apply(&kern, &f).unwrap().scale(a).add(&cz_apply(&kern, &h).unwrap()).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
        }
    }
}
