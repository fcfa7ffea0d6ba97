//! Seeded test inputs: random fields, band-limited fields and smooth spectra.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{idft, ComplexField, GridSpec, Spectrum};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_pair<R: Rng>(r: &mut R) -> Complex64 {
    // Box-Muller
    let u1: f64 = r.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = r.gen();
    let m = (-2.0 * u1.ln()).sqrt();
    let a = 2.0 * std::f64::consts::PI * u2;
    Complex64::new(m * a.cos(), m * a.sin())
}

/// Independent complex Gaussian samples.
pub fn random_field(spec: GridSpec, seed: u64) -> ComplexField {
    let mut r = rng(seed);
    let values = (0..spec.len()).map(|_| gaussian_pair(&mut r)).collect();
    ComplexField { spec, values }
}

/// Random spectrum supported in `|k / L| <= cutoff`.
pub fn random_band_limited(spec: GridSpec, cutoff: f64, seed: u64) -> ComplexField {
    let mut r = rng(seed);
    let q = spec.frequency_norms_sq();
    let c2 = cutoff * cutoff;
    let coeffs = q
        .iter()
        .map(|&qi| {
            let v = gaussian_pair(&mut r);
            if qi <= c2 {
                v
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    idft(&Spectrum { spec, coeffs })
}

/// Random spectrum with a smooth radial envelope `exp(-|xi|^2 / (2 w^2))`
/// cut at `cutoff`.
pub fn smooth_random(spec: GridSpec, width: f64, cutoff: f64, seed: u64) -> ComplexField {
    let mut r = rng(seed);
    let q = spec.frequency_norms_sq();
    let c2 = cutoff * cutoff;
    let coeffs = q
        .iter()
        .map(|&qi| {
            let v = gaussian_pair(&mut r);
            if qi <= c2 {
                v * (-qi / (2.0 * width * width)).exp()
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    idft(&Spectrum { spec, coeffs })
}

/// Pure mode `exp(2 pi i k.x / L)`.
pub fn pure_mode(spec: GridSpec, k: &[i64]) -> ComplexField {
    let values = (0..spec.len())
        .map(|idx| {
            let x = spec.node(idx);
            let phase: f64 = x
                .iter()
                .zip(k)
                .map(|(xi, &ki)| 2.0 * std::f64::consts::PI * ki as f64 * xi / spec.period)
                .sum();
            Complex64::from_polar(1.0, phase)
        })
        .collect();
    ComplexField { spec, values }
}
