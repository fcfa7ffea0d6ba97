use brlab::special::*;
use brlab::Complex64;
use proptest::prelude::*;

// reference values from an arbitrary-precision library
const BESSEL: [(f64, f64, f64); 8] = [
    (0.0, 1.0, 0.76519768655796655145),
    (0.5, 7.3, 0.25114271474902147417),
    (1.5, 0.02, 0.00075222268838240807195),
    (2.5, 45.0, -0.10522340517418438782),
    (3.25, 12.5, 0.16953506976144187945),
    (10.0, 3.0, 0.000012928351645715883778),
    (1.5, 800.0, 0.012672966775643470597),
    (0.25, 150.0, -0.025631556184634809042),
];

const GAMMA: [((f64, f64), (f64, f64), (f64, f64)); 4] = [
    ((0.5, 0.0), (1.7724538509055160273, 0.0), (-1.9635100260214234794, 0.0)),
    ((2.5, 1.3), (0.49165633901835103734, 0.75282593348509702118), (0.87246021553346330388, 0.56985346610158318779)),
    ((-1.7, 0.4), (1.1356438824316395205, -0.26890799072916941431), (0.3542083372521227139, 2.776637934464401426)),
    ((0.1, -6.0), (-0.000055507026005502744315, 0.000081738194572979471857), (1.7928292216775005127, -1.6375189492493213168)),
];

#[test]
fn bessel_reference_values() {
    for (nu, x, want) in BESSEL {
        let got = bessel_j(nu, x).unwrap();
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-3), "J_{nu}({x}) = {got}, want {want}");
    }
}

#[test]
fn gamma_and_digamma_reference_values() {
    for ((zr, zi), (gr, gi), (dr, di)) in GAMMA {
        let z = Complex64::new(zr, zi);
        let g = gamma_complex(z).unwrap();
        let want = Complex64::new(gr, gi);
        assert!((g - want).norm() <= 1e-12 * want.norm(), "Gamma({z}) = {g}");
        let d = digamma_complex(z).unwrap();
        let want = Complex64::new(dr, di);
        assert!((d - want).norm() <= 1e-12 * want.norm(), "digamma({z}) = {d}");
    }
}

#[test]
fn stein_constant_reference_value() {
    let c = stein_constant(Complex64::new(0.5, 0.0), 0.6).unwrap();
    assert!((c.re - 1.1137746646208464326).abs() < 1e-13 && c.im == 0.0);
    assert!(stein_constant(Complex64::new(0.5, 0.0), 0.5).is_err());
    assert!(stein_constant(Complex64::new(0.05, 0.0), 0.6).is_err());
}

proptest! {
    #[test]
    fn bessel_recurrence(nu in 1.0f64..12.0, x in 0.05f64..600.0) {
        let lhs = bessel_j(nu - 1.0, x).unwrap() + bessel_j(nu + 1.0, x).unwrap();
        let rhs = 2.0 * nu / x * bessel_j(nu, x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9, "nu {} x {}: {} vs {}", nu, x, lhs, rhs);
    }

    #[test]
    fn gamma_recurrence(re in -6.0f64..8.0, im in -5.0f64..5.0) {
        let z = Complex64::new(re, im);
        prop_assume!((z - z.re.round()).norm() > 1e-3 || z.re > 0.5);
        let a = gamma_complex(z + 1.0).unwrap();
        let b = z * gamma_complex(z).unwrap();
        prop_assert!((a - b).norm() <= 1e-11 * a.norm());
    }

    #[test]
    fn smooth_step_is_antisymmetric(u in -0.5f64..1.5) {
        prop_assert!((smooth_step(u) + smooth_step(1.0 - u) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dyadic_partition_covers(t in 0.0f64..1.0) {
        prop_assume!(1.0 - t >= 2f64.powi(-14));
        prop_assert!(partition_defect(t, 14) < 1e-12);
    }
}

#[test]
fn bump_supports() {
    for kind in [BumpKind::Psi, BumpKind::Psi0, BumpKind::Psi01, BumpKind::Psi02, BumpKind::PhiHat] {
        let (lo, hi) = kind.support();
        for k in 1..=50 {
            let d = k as f64 * 0.01;
            assert_eq!(bump(kind, lo - d), 0.0, "{kind:?} below support");
            assert_eq!(bump(kind, hi + d), 0.0, "{kind:?} above support");
        }
    }
}
