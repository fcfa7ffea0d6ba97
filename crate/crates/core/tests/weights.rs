use brlab::bilinear::DilationGrid;
use brlab::fields::random_band_limited;
use brlab::grid::GridSpec;
use brlab::symbols::Order;
use brlab::weights::*;
use brlab::Complex64;
use proptest::prelude::*;

fn e22() -> ExponentTriple {
    ExponentTriple::new(2.0, 2.0).unwrap()
}

/// Corner cube `[0, r]` for `(|x|^a1, |x|^a2)`, `p1 = p2 = 2`: `v = |x|^{(a1+a2)/2}`
/// and each dual factor is `(avg |x|^{-a_j})^{1/2}`.
fn corner_value(a1: f64, a2: f64) -> f64 {
    let v = 1.0 / (1.0 + 0.5 * (a1 + a2));
    v * (1.0 / (1.0 - a1)).sqrt() * (1.0 / (1.0 - a2)).sqrt()
}

#[test]
fn one_cube_oracle() {
    for (a1, a2) in [(0.5, -0.5), (0.2, 0.3), (-1.0, 0.9)] {
        let got = power_interval_value(&e22(), a1, a2, 0.0);
        assert!((got - corner_value(a1, a2)).abs() < 1e-9 * got, "({a1}, {a2})");
        assert!(power_interval_sup(&e22(), a1, a2) >= got);
    }
    assert!(power_interval_value(&e22(), 1.0, 0.0, 0.0).is_infinite());
}

#[test]
fn unit_pair_is_exactly_one() {
    let spec = GridSpec::new(2, 32, 1.0).unwrap();
    for (p1, p2) in [(2.0, 2.0), (1.0, 1.0), (3.0, f64::INFINITY)] {
        let e = ExponentTriple::new(p1, p2).unwrap();
        let c = ap_characteristic(&WeightPair::unit(spec).unwrap(), &e, &CubeFamily::default()).unwrap();
        assert_eq!(c.value, 1.0);
    }
}

#[test]
fn exponent_validation() {
    assert!(ExponentTriple::new(f64::INFINITY, f64::INFINITY).is_err());
    assert!(ExponentTriple::new(0.5, 2.0).is_err());
    assert_eq!(conjugate(1.0), f64::INFINITY);
    assert_eq!(conjugate(2.0), 2.0);
}

#[test]
fn translation_invariance() {
    let spec = GridSpec::new(1, 256, 1.0).unwrap();
    let family = CubeFamily {
        min_side: 2,
        shifts: Shifts::All,
    };
    let pair = WeightPair::powers(spec, vec![0.0], 0.4, -0.3).unwrap();
    let base = ap_characteristic(&pair, &e22(), &family).unwrap().value;
    for by in [1usize, 17, 128] {
        let moved = ap_characteristic(&pair.shifted(&[by]), &e22(), &family).unwrap().value;
        assert!((moved - base).abs() <= 1e-12 * base, "shift {by}");
    }
}

#[test]
fn richer_families_see_more() {
    let spec = GridSpec::new(1, 512, 1.0).unwrap();
    let pair = WeightPair::powers(spec, vec![0.013], 0.7, -0.4).unwrap();
    let value = |shifts| {
        ap_characteristic(&pair, &e22(), &CubeFamily { min_side: 2, shifts })
            .unwrap()
            .value
    };
    let (a, h, all) = (value(Shifts::Aligned), value(Shifts::Half), value(Shifts::All));
    assert!(a <= h && h <= all, "{a} {h} {all}");
}

#[test]
fn refinement_is_stable_for_finite_weights() {
    let c = |points| {
        let spec = GridSpec::new(1, points, 1.0).unwrap();
        let pair = WeightPair::powers(spec, vec![0.0], 0.5, -0.5).unwrap();
        ap_characteristic(&pair, &e22(), &CubeFamily::default()).unwrap().value
    };
    let (a, b) = (c(1024), c(2048));
    assert!((a - b).abs() < 1e-3 * a, "{a} vs {b}");
}

#[test]
fn infinite_characteristic_serializes_as_text() {
    let spec = GridSpec::new(1, 64, 1.0).unwrap();
    let pair = WeightPair::powers(spec, vec![0.0], 1.5, 0.0).unwrap();
    let c = ap_characteristic(&pair, &e22(), &CubeFamily::default()).unwrap();
    let text = serde_json::to_string(&c).unwrap();
    assert!(text.contains("\"inf\""));
    let back: Characteristic = serde_json::from_str(&text).unwrap();
    assert!(back.value.is_infinite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ratio_is_homogeneous(s1 in 0.01f64..100.0, s2 in 0.01f64..100.0, phase in 0.0f64..6.0, seed in 0u64..50) {
        let spec = GridSpec::new(1, 128, 1.0).unwrap();
        let f = random_band_limited(spec, 20.0, seed);
        let g = random_band_limited(spec, 20.0, seed + 1);
        let grid = DilationGrid::log_spaced(2.0, 40.0, 8).unwrap();
        let pair = WeightPair::powers(spec, vec![0.1], 0.3, -0.2).unwrap();
        let o = Order::real(0.5);
        for op in [Operator::Maximal, Operator::Square] {
            let a = weighted_ratio(op, o, &grid, &f, &g, &pair, &e22()).unwrap();
            let b = weighted_ratio(
                op, o, &grid,
                &f.scaled(Complex64::from_polar(s1, phase)),
                &g.scaled(Complex64::new(s2, 0.0)),
                &pair, &e22(),
            ).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }
}
