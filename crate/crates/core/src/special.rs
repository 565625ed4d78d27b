//! Small numerical helpers: lattice power sums and least-squares line fits.

pub use statrs::function::gamma::gamma;

/// Hurwitz zeta `sum_{k>=0} (k + a)^(-s)` for `s > 1`, `a > 0`, by Euler-Maclaurin.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    debug_assert!(s > 1.0 && a > 0.0);
    const M: usize = 12;
    // B_{2j} / (2j)!
    const B: [f64; 6] =
        [1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0, -1.0 / 1209600.0, 1.0 / 47900160.0, -691.0 / 1307674368000.0];
    let mut sum: f64 = (0..M).map(|k| (k as f64 + a).powf(-s)).sum();
    let x = M as f64 + a;
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // rising factorial s (s+1) ... (s+2j-2), times x^(-s-2j+1)
    let mut rising = s;
    let mut pow = x.powf(-s - 1.0);
    for (j, b) in B.iter().enumerate() {
        sum += b * rising * pow;
        let m = 2 * j as u32 + 1;
        rising *= (s + m as f64) * (s + m as f64 + 1.0);
        pow /= x * x;
    }
    sum
}

/// `sum_{m in Z^d, m != 0} |y + m L|^(-s)` for a displacement `y` in the fundamental cell.
///
/// In one dimension the sum is exact through Hurwitz zeta; in two dimensions
/// images with `|m|_inf <= 8` are summed directly and the remainder is
/// replaced by its equal-area continuum tail.
pub fn image_sum(dim: usize, y: [f64; 2], length: f64, s: f64) -> f64 {
    if dim == 1 {
        let a = y[0].abs() / length;
        return length.powf(-s) * (hurwitz_zeta(s, 1.0 + a) + hurwitz_zeta(s, 1.0 - a));
    }
    const M: i64 = 8;
    let mut sum = 0.0;
    for m0 in -M..=M {
        for m1 in -M..=M {
            if m0 == 0 && m1 == 0 {
                continue;
            }
            let z0 = y[0] + m0 as f64 * length;
            let z1 = y[1] + m1 as f64 * length;
            sum += (z0 * z0 + z1 * z1).powf(-0.5 * s);
        }
    }
    let r = (2 * M + 1) as f64 * length / std::f64::consts::PI.sqrt();
    sum + 2.0 * std::f64::consts::PI * r.powf(2.0 - s) / ((s - 2.0) * length * length)
}

/// Ordinary least-squares fit `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub rms_residual: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    LineFit { slope, intercept, rms_residual: (ss / n).sqrt() }
}

/// Log-log fit of `y` against `x` (natural logarithms).
pub fn fit_power_law(x: &[f64], y: &[f64]) -> LineFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

/// Composite weights for integrating samples on an increasing grid.
///
/// Pairs of intervals use the (possibly non-uniform) three-point Simpson rule;
/// a leftover final interval uses the trapezoid rule.
pub fn simpson_weights(t: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    let mut i = 0;
    while i + 2 < n {
        let h0 = t[i + 1] - t[i];
        let h1 = t[i + 2] - t[i + 1];
        let hs = h0 + h1;
        w[i] += hs / 6.0 * (2.0 - h1 / h0);
        w[i + 1] += hs.powi(3) / (6.0 * h0 * h1);
        w[i + 2] += hs / 6.0 * (2.0 - h0 / h1);
        i += 2;
    }
    if i + 1 < n {
        let h = t[i + 1] - t[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_matches_known_values() {
        // zeta(2) = pi^2 / 6, zeta(4) = pi^4 / 90
        let pi = std::f64::consts::PI;
        assert!((hurwitz_zeta(2.0, 1.0) - pi * pi / 6.0).abs() < 1e-13);
        assert!((hurwitz_zeta(4.0, 1.0) - pi.powi(4) / 90.0).abs() < 1e-14);
        // zeta(s, 1/2) = (2^s - 1) zeta(s)
        assert!((hurwitz_zeta(3.0, 0.5) - 7.0 * hurwitz_zeta(3.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn zeta_fractional_order_reference() {
        // reference values from an arbitrary-precision evaluation
        assert!((hurwitz_zeta(2.5, 0.3) - 21.0692392022477).abs() < 1e-12);
        assert!((hurwitz_zeta(2.5, 1.3) - 0.783218553908237).abs() < 1e-13);
    }

    #[test]
    fn line_fit_exact() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!(f.rms_residual < 1e-14);
    }

    #[test]
    fn simpson_integrates_quadratics_on_nonuniform_grid() {
        let t = [0.0, 0.1, 0.35, 0.5, 0.9];
        let w = simpson_weights(&t);
        let approx: f64 = t.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((approx - 0.9f64.powi(3) / 3.0).abs() < 1e-14);
    }
}
