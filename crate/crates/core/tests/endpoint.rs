use brlab::endpoint::*;

#[test]
fn psi_at_zero_is_the_mass_of_its_transform() {
    // hat psi = 1 on [0, 1] and 1 - theta(xi/2) on [1, 2]; the step is
    // antisymmetric about xi = 3/2, so int_R hat psi = 3.
    assert!((PsiNFamily::psi(0.0) - 3.0).abs() < 1e-12);
    assert_eq!(PsiNFamily::psi_hat(2.5), 0.0);
    assert_eq!(PsiNFamily::psi_hat(-0.7), 1.0);
}

#[test]
fn l1_norm_is_scale_free() {
    let base = PsiNFamily::l1_norm(1.0);
    for s in [4.0, 32.0, 256.0] {
        assert!((PsiNFamily::l1_norm(s) - base).abs() < 1e-9 * base);
    }
}

#[test]
fn families_must_increase() {
    assert!(PsiNFamily::new(vec![4, 4]).is_err());
    assert!(PsiNFamily::new(vec![]).is_err());
    assert_eq!(PsiNFamily::dyadic(4, 40).unwrap().scales, vec![4, 8, 16, 32]);
}

#[test]
fn blowup_config_checks() {
    let mut c = BlowupConfig::standard();
    assert!(c.validate().is_ok());
    c.annulus = [0.5, 0.25];
    assert!(c.validate().is_err());
    let mut c = BlowupConfig::standard();
    c.scales.push(2048);
    assert!(c.validate().is_err());
}

#[test]
fn small_blowup_curve_grows() {
    let mut c = BlowupConfig::standard();
    c.scales = vec![4, 8, 16, 32];
    c.grid.points = 2048;
    let curve = blowup_curve(&c).unwrap();
    assert_eq!(curve.rows.len(), 4);
    assert!(curve.stat_fit.slope > 0.0);
    assert!(curve.rows.windows(2).all(|w| w[1].weak_halfnorm > w[0].weak_halfnorm));
}

#[test]
fn construction_reports_where_it_stops() {
    let c = construct_divergent(&ConstructionConfig::default()).unwrap();
    assert!(c.levels[0].checks.iter().all(|ch| ch.holds));
    let s = c.stopped.expect("level 2 cannot reach its threshold on this grid");
    assert_eq!(s.k, 2);
    assert!(s.top < s.threshold);
    assert_eq!(c.masks.len(), c.levels.len());
}
