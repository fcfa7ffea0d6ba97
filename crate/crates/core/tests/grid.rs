use std::f64::consts::PI;

use brlab::fields::{pure_mode, random_field};
use brlab::grid::*;
use brlab::Complex64;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn plancherel_and_round_trip(n in 1usize..=3, log_n in 2u32..=5, period in 0.1f64..10.0, seed in 0u64..1000) {
        let spec = GridSpec::new(n, 1 << log_n, period).unwrap();
        let f = random_field(spec, seed);
        let s = dft(&f);
        let ex: f64 = f.values.iter().map(|v| v.norm_sqr()).sum();
        let ek: f64 = s.coeffs.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((ex - ek).abs() <= 1e-12 * ex);
        prop_assert!(relative_l2(&idft(&s), &f) <= 1e-12);
    }

    #[test]
    fn diagonal_of_tensor_is_product(seed in 0u64..1000) {
        let spec = GridSpec::new(1, 16, 2.0).unwrap();
        let u = random_field(spec, seed);
        let v = random_field(spec, seed + 1);
        let d = restrict_diagonal(&tensor(&u, &v).unwrap()).unwrap();
        for i in 0..spec.len() {
            prop_assert!((d.values[i] - u.values[i] * v.values[i]).norm() == 0.0);
        }
    }
}

#[test]
fn pure_mode_is_one_coefficient() {
    let spec = GridSpec::new(2, 16, 3.0).unwrap();
    let s = dft(&pure_mode(spec, &[3, -5]));
    let peak = spec.flat_index(&[3, 11]);
    for (i, c) in s.coeffs.iter().enumerate() {
        let want = if i == peak { 16.0 } else { 0.0 };
        assert!((c - want).norm() < 1e-12, "coefficient {i}: {c}");
    }
}

#[test]
fn gaussian_coefficients_follow_the_transform() {
    // exp(-pi x^2/s^2) has transform s exp(-pi s^2 xi^2); the period is wide
    // enough that wrap-around is below double precision.
    let (s, period, points) = (0.25, 4.0, 256);
    let spec = GridSpec::new(1, points, period).unwrap();
    let f = sample(|x: &[f64]| Complex64::new((-PI * x[0] * x[0] / (s * s)).exp(), 0.0), spec).unwrap();
    let c = dft(&f);
    for i in 0..points {
        let xi = spec.frequency(i)[0];
        let want = (points as f64).sqrt() * s * (-PI * s * s * xi * xi).exp() / period;
        assert!((c.coeffs[i] - want).norm() < 1e-12, "k = {}", spec.wavenumber(i));
    }
}

#[test]
fn weak_quasinorm_of_a_plateau() {
    let spec = GridSpec::new(1, 64, 1.0).unwrap();
    let mut f = ComplexField::zeros(spec);
    for v in f.values.iter_mut().take(10) {
        *v = Complex64::new(3.0, 0.0);
    }
    let h = spec.spacing();
    let w = weak_quasinorm(&f, 0.5).unwrap();
    assert!((w - 3.0 * (10.0 * h).powi(2)).abs() < 1e-14);
    let l = lp_quasinorm(&f, 0.5).unwrap();
    assert!((l - (10.0 * 3f64.sqrt() * h).powi(2)).abs() < 1e-14);
    assert!(weak_quasinorm(&f, 0.0).is_err());
}

#[test]
fn invalid_grids_are_rejected() {
    assert!(GridSpec::new(1, 0, 1.0).is_err());
    assert!(GridSpec::new(0, 16, 1.0).is_err());
    assert!(GridSpec::new(1, 16, -1.0).is_err());
}

#[test]
fn non_finite_samples_are_reported() {
    let spec = GridSpec::new(1, 8, 1.0).unwrap();
    let e = sample(|x: &[f64]| Complex64::new(1.0 / (x[0] + 0.5), 0.0), spec).unwrap_err();
    assert!(matches!(e, brlab::Error::NonFinite { index: 0, .. }));
}
