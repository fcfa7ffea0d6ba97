use brlab::bilinear::*;
use brlab::fields::{pure_mode, random_band_limited};
use brlab::grid::*;
use brlab::symbols::{br_symbol, Order};
use brlab::Complex64;
use proptest::prelude::*;

#[test]
fn modes_pick_up_the_symbol() {
    // B_R(e_k, e_l) = m(k/L, l/L) e_{k+l}
    let spec = GridSpec::new(1, 32, 2.0).unwrap();
    let o = Order::new(0.5, 0.3, 0.6);
    let r = 6.1;
    for (k, l) in [(3i64, 4i64), (-5, 2), (0, 11), (7, -7)] {
        let want_c = br_symbol(o.z, r, &[k as f64 / 2.0], &[l as f64 / 2.0]);
        let mode = pure_mode(spec, &[k + l]);
        for engine in [Engine::Fft2n, Engine::Pairs] {
            let got = br_mean_with(engine, o, r, &pure_mode(spec, &[k]), &pure_mode(spec, &[l])).unwrap();
            for (a, b) in got.values.iter().zip(&mode.values) {
                assert!((a - want_c * b).norm() < 1e-12, "{engine:?} k={k} l={l}");
            }
        }
    }
}

#[test]
fn constants_are_fixed() {
    let spec = GridSpec::new(2, 8, 1.0).unwrap();
    let one = ComplexField::constant(spec, Complex64::new(1.0, 0.0));
    let m = br_mean(Order::real(0.5), 0.3, &one, &one).unwrap();
    assert!(m.values.iter().all(|v| (v - 1.0).norm() < 1e-13));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn engines_agree(r in 1.0f64..40.0, seed in 0u64..100) {
        let spec = GridSpec::new(1, 64, 1.0).unwrap();
        let f = random_band_limited(spec, 20.0, seed);
        let g = random_band_limited(spec, 20.0, seed + 7);
        let o = Order::real(0.5);
        let a = br_mean_with(Engine::Fft2n, o, r, &f, &g).unwrap();
        let b = br_mean_with(Engine::Pairs, o, r, &f, &g).unwrap();
        prop_assert!(relative_l2(&b, &a) < 1e-11 || a.l2_norm() < 1e-14);
    }
}

#[test]
fn maximal_dominates_every_mean() {
    let spec = GridSpec::new(1, 64, 1.0).unwrap();
    let f = random_band_limited(spec, 20.0, 2);
    let g = random_band_limited(spec, 20.0, 3);
    let grid = DilationGrid::log_spaced(2.0, 30.0, 12).unwrap();
    let o = Order::real(0.5);
    let m = br_maximal(o, &grid, &f, &g).unwrap();
    let mut hit = vec![false; spec.len()];
    for &r in &grid.values {
        let b = br_mean(o, r, &f, &g).unwrap();
        for (i, (v, s)) in b.values.iter().zip(&m.values).enumerate() {
            assert!(v.norm() <= s.re + 1e-14);
            hit[i] |= (v.norm() - s.re).abs() < 1e-14;
        }
    }
    assert!(hit.iter().all(|&h| h), "the sup is attained on the grid");
}

#[test]
fn decomposition_path_matches_direct_mean() {
    let spec = GridSpec::new(1, 128, 1.0).unwrap();
    let f = random_band_limited(spec, 30.0, 4);
    let g = random_band_limited(spec, 30.0, 5);
    let o = Order::new(0.5, 0.0, 0.6);
    let r = 33.7;
    let j = covering_depth(&spec, r, 40);
    let direct = br_mean(o, r, &f, &g).unwrap();
    let fact = br_mean_factorized(o, r, &f, &g, j, QuadratureRule::PanelProduct { panels: 512 }).unwrap();
    assert!(relative_l2(&fact, &direct) < 1e-5);
}

#[test]
fn square_function_settles_under_refinement() {
    let spec = GridSpec::new(1, 128, 1.0).unwrap();
    let f = random_band_limited(spec, 30.0, 6);
    let g = random_band_limited(spec, 30.0, 7);
    let grid = DilationGrid::log_spaced(1.0, 60.0, 64).unwrap();
    let alpha = Complex64::new(0.5, 0.0);
    let (fine, delta) = sq_function_with_error(alpha, &grid, &f, &g).unwrap();
    assert!(delta < 0.05 * fine.sup_norm());
}

#[test]
fn bad_arguments() {
    let spec = GridSpec::new(1, 16, 1.0).unwrap();
    let f = random_band_limited(spec, 4.0, 1);
    let other = random_band_limited(GridSpec::new(1, 32, 1.0).unwrap(), 4.0, 1);
    assert!(br_mean(Order::real(0.5), -1.0, &f, &f).is_err());
    assert!(br_mean(Order::real(0.5), 2.0, &f, &other).is_err());
    assert!(DilationGrid::log_spaced(3.0, 1.0, 4).is_err());
}
