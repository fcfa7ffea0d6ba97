use std::f64::consts::PI;

use brlab::kernels::*;

fn j_three_halves(x: f64) -> f64 {
    (2.0 / (PI * x)).sqrt() * (x.sin() / x - x.cos())
}

#[test]
fn kernel_at_origin_is_the_symbol_mass() {
    // int_{|zeta| < R} (1 - |zeta|^2/R^2)^alpha over R^2 is pi R^2/(alpha + 1)
    for (alpha, r) in [(0.5, 3.0), (1.0, 10.0), (2.5, 0.7)] {
        let k = kernel_br(alpha, r, &[0.0, 0.0]);
        let want = PI * r * r / (alpha + 1.0);
        assert!((k - want).abs() < 1e-12 * want, "alpha {alpha}");
    }
}

#[test]
fn half_integer_kernel_is_elementary() {
    let r = 4.0;
    for y in [0.05, 0.3, 1.1, 7.9, 40.0] {
        let u = 2.0 * PI * r * y;
        let want = 0.5 * r * r * j_three_halves(u) / (r * y).powf(1.5);
        let got = kernel_br(0.5, r, &[y / 2f64.sqrt(), y / 2f64.sqrt()]);
        assert!((got - want).abs() < 1e-10 * r * r, "y = {y}: {got} vs {want}");
    }
}

#[test]
fn square_kernel_approaches_its_asymptotic() {
    let (y1, y2) = ([0.3], [0.4]);
    let mut prev = f64::INFINITY;
    for t in [50.0, 200.0, 800.0] {
        // compare envelopes over a period to avoid zeros of the cosine
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for k in 0..16 {
            let tt = t + k as f64 / 8.0;
            let a = kernel_sq(0.5, tt, &y1, &y2);
            let b = kernel_sq_asymptotic(0.5, tt, &y1, &y2);
            err = err.max((a - b).abs());
            scale = scale.max(b.abs());
        }
        let rel = err / scale;
        assert!(rel < prev, "t = {t}: {rel}");
        prev = rel;
    }
    assert!(prev < 1e-2);
}

#[test]
fn lambda_set_matches_brute_force() {
    let x0 = default_x0(1);
    let ls = lambda_set(&x0, LatticeCutoff::new(12).unwrap());
    let mut d: Vec<f64> = Vec::new();
    for m1 in -12i64..=12 {
        for m2 in -12i64..=12 {
            if m1 * m1 + m2 * m2 <= 144 {
                d.push(((x0[0] - m1 as f64).powi(2) + (x0[0] - m2 as f64).powi(2)).sqrt());
            }
        }
    }
    d.sort_by(f64::total_cmp);
    let mut vals: Vec<(f64, usize)> = Vec::new();
    for v in d {
        match vals.last_mut() {
            Some((u, c)) if (v - *u).abs() < 1e-12 => *c += 1,
            _ => vals.push((v, 1)),
        }
    }
    for (j, (v, c)) in vals.iter().take_while(|(v, _)| *v < ls.complete_below()).enumerate() {
        assert!((ls.values[j] - v).abs() < 1e-12);
        assert_eq!(ls.multiplicity[j], *c);
    }
}

#[test]
fn riesz_expansion_reproduces_the_product() {
    let lams = [0.41, 0.93, 1.37];
    let terms = riesz_expansion(1, &lams);
    assert_eq!(terms.len(), 27);
    for r in [0.0, 1.3, 17.25] {
        let prod: f64 = lams.iter().map(|l| 1.0 - (2.0 * PI * l * r).cos()).product();
        let sum: brlab::Complex64 = terms
            .iter()
            .map(|(mu, c)| c * brlab::Complex64::from_polar(1.0, 2.0 * PI * mu * r))
            .sum();
        assert!((sum.re - prod).abs() < 1e-12 && sum.im.abs() < 1e-12);
    }
}

#[test]
fn tail_bound_shrinks_with_the_cutoff() {
    let x0 = default_x0(1);
    let mut prev = f64::INFINITY;
    for m in [8, 16, 64, 256] {
        let b = LatticeCutoff::new(m).unwrap().tail_bound(1.0, 7.5, &x0);
        assert!(b < prev);
        prev = b;
    }
}

#[test]
fn dual_paths_agree_within_the_bound() {
    let x0 = default_x0(1);
    for r in [2.5, 6.0] {
        let d = periodic_kernel(1.0, r, &x0, LatticeCutoff::new(64).unwrap()).unwrap();
        assert!(d.agrees());
        assert!((periodic_kernel_binned(1.0, r, &x0) - d.frequency).abs() < 1e-11 * d.frequency.abs().max(1.0));
    }
    assert!(periodic_kernel(0.5, 3.0, &x0, LatticeCutoff::new(16).unwrap()).is_err());
}

#[test]
fn window_average_of_unit_product_is_one() {
    for w in [Window::Sharp, Window::Fejer] {
        let a = riesz_weight_average(1, &[], 1000.0, w);
        // (1/T) int_1^T dR and the Fejer analogue
        let want = match w {
            Window::Sharp => 999.0 / 1000.0,
            Window::Fejer => 2.0 * (999.0 - 0.5 * (1000.0f64.powi(2) - 1.0) / 1000.0) / 1000.0,
        };
        assert!((a.re - want).abs() < 1e-12 && a.im.abs() < 1e-12);
    }
}
