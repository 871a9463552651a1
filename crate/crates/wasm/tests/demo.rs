use nnqr_wasm::demo;

#[test]
fn prox_curve_matches_closed_form() {
    let pts = demo::prox_curve(0.3, 0.5, -2.0, 2.0, 41).unwrap();
    assert_eq!(pts.len(), 41);
    assert_eq!(pts[0][0], -2.0);
    assert_eq!(pts[40][0], 2.0);
    for [g, p, _] in pts {
        let expected = if g >= 0.0 { (g - 0.15).max(0.0) } else { -(-g - 0.35).max(0.0) };
        assert!((p - expected).abs() < 1e-12);
    }
    assert!(demo::prox_curve(1.0, 0.5, -1.0, 1.0, 5).is_err());
    assert!(demo::prox_curve(0.5, 0.5, 1.0, -1.0, 5).is_err());
}

#[test]
fn fit_summary_is_consistent() {
    let s = demo::simulate_and_fit(25, 20, 0.8, 0.2, false, 3, 1.0).unwrap();
    assert_eq!(s.beta.len(), 3);
    assert_eq!(s.singulars.len(), 20);
    assert_eq!(s.r_true, 4);
    assert_eq!(s.r_hat, s.singulars.iter().filter(|&&v| v >= s.threshold).count());
    assert!(s.mse_l.is_finite());
}

#[test]
fn lambda_path_has_one_row_per_scale() {
    let rows = demo::lambda_path(15, 15, 0.5, 1, &[0.1, 1.0, 100.0]).unwrap();
    assert_eq!(rows.len(), 3);
    // a very large penalty removes the low-rank part entirely
    assert_eq!(rows[2][1], 0.0);
}
