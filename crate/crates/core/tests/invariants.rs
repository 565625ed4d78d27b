use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fracdrift_core::fraclap::{frac_laplacian, LaplacianForm, StableParams};
use fracdrift_core::grid::{Field, GridSpec};
use fracdrift_core::metrics::distance_profile;
use fracdrift_core::mild::{ball_radius, uniform_times, Drift};
use fracdrift_core::particles::{fixed_point_march, NoiseBundle, SimConfig};
use fracdrift_core::semigroup::Semigroup;
use fracdrift_core::singular::{CzKernel, Multiplier};
use fracdrift_core::spectral::{from_spectral, random_band_limited, to_spectral};

fn inner(a: &Field, b: &Field) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>() * a.grid().cell_volume()
}

fn grid(dim: usize) -> GridSpec {
    GridSpec::new(dim, if dim == 1 { 64 } else { 16 }, 2.0 * PI).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn real_fields_have_hermitian_spectra(seed in any::<u64>(), dim in 1usize..=2) {
        let g = grid(dim);
        let f = random_band_limited(g, 6, 0.5, &mut ChaCha8Rng::seed_from_u64(seed));
        let spec = to_spectral(&f);
        prop_assert!(spec.hermitian_defect() < 1e-12);
        prop_assert!(from_spectral(&spec).sub(&f).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn catalog_multipliers_vanish_at_zero_and_are_bounded(j in 1usize..=2, which in 0usize..3) {
        let (desc, dim) = [("hilbert", 1), ("zero", 1), ("riesz:j", 2)][which];
        let desc = desc.replace('j', &j.to_string());
        let g = grid(dim);
        let m = CzKernel::parse(&desc, dim, g.length()).unwrap().multiplier_form().unwrap();
        let table = m.table(g);
        prop_assert_eq!(table.values()[0].norm(), 0.0);
        prop_assert!(table.sup_modulus() <= 1.0 + 1e-15);
    }

    #[test]
    fn semigroup_is_a_mass_preserving_l2_contraction(seed in any::<u64>(), t in 0.0f64..1.0, s in 0.0f64..1.0, alpha in 1.05f64..2.0) {
        let g = grid(1);
        let f = random_band_limited(g, 12, 0.3, &mut ChaCha8Rng::seed_from_u64(seed));
        let sg = Semigroup::new(g, &StableParams::new(alpha, 1).unwrap());
        let ts = sg.apply(&f, t).unwrap();
        let composed = sg.apply(&ts, s).unwrap();
        prop_assert!(composed.sub(&sg.apply(&f, t + s).unwrap()).unwrap().max_abs() < 1e-12);
        prop_assert!((ts.integral() - f.integral()).abs() < 1e-12);
        prop_assert!(ts.lp_norm(2.0) <= f.lp_norm(2.0) * (1.0 + 1e-12));
    }

    #[test]
    fn fractional_laplacian_is_symmetric_and_dissipative(seed in any::<u64>(), alpha in 1.05f64..2.0) {
        let g = grid(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, h) = (random_band_limited(g, 10, 0.3, &mut rng), random_band_limited(g, 10, 0.3, &mut rng));
        let s = StableParams::new(alpha, 1).unwrap();
        let (lf, lh) = (
            frac_laplacian(&f, &s, LaplacianForm::Spectral).unwrap(),
            frac_laplacian(&h, &s, LaplacianForm::Spectral).unwrap(),
        );
        prop_assert!((inner(&lf, &h) - inner(&f, &lh)).abs() < 1e-9 * (1.0 + inner(&lf, &f).abs()));
        prop_assert!(inner(&lf, &f) <= 1e-12);
    }

    #[test]
    fn ball_radius_solves_the_quadratic(eta in 1e-3f64..10.0, frac in 0.0f64..0.999) {
        let y = frac / (4.0 * eta);
        let r = ball_radius(eta, y).unwrap();
        prop_assert!((eta * r * r - r + y).abs() < 1e-12 * (1.0 + y));
        prop_assert!(r >= y && r <= 2.0 * y + 1e-15);
        prop_assert!(ball_radius(eta, 1.000001 / (4.0 * eta)).is_none());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ensembles_keep_signed_mass_and_metric_shape(seed in any::<u64>()) {
        let g = GridSpec::new(1, 64, 2.0 * PI).unwrap();
        let u0 = Field::from_fn(g, |x| x[0].sin() + 0.3).unwrap();
        let s = StableParams::new(1.5, 1).unwrap();
        let times = uniform_times(0.3, 6);
        let noise = NoiseBundle::generate(&u0, &s, 300, &times, seed).unwrap();
        let cfg = SimConfig { stable: s, drift: Drift::Scalar(Multiplier::Hilbert), length: g.length(), eps_kernel: 0.5 };
        let free = noise.free_paths();
        let interacting = fixed_point_march(&noise, &cfg).unwrap().ensemble;
        for e in [&free, &interacting] {
            let mean_w = e.weights().iter().sum::<f64>() / e.n() as f64;
            prop_assert!((e.signed_mass() - e.mass() * mean_w).abs() <= 1e-14 * e.mass());
            prop_assert!(e.signed_mass().abs() <= e.mass());
            prop_assert!(e.weights().iter().all(|w| *w == 1.0 || *w == -1.0));
        }
        for r in distance_profile(&free, &interacting, 2.0, 0.3, g).unwrap() {
            prop_assert!(r.rho >= 0.0 && r.rho <= 1.0 && r.lp_density >= 0.0);
            prop_assert_eq!(r.d_tp, r.rho.max(r.lp_density));
        }
    }
}
