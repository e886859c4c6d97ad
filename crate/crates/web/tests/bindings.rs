use vacuumflow_web::{alpha_curve_rows, profile_rows, regime_scan_rows, ALPHA_STRIDE, PROFILE_STRIDE, REGIME_STRIDE};

#[test]
fn alpha_rows_follow_closed_form() {
    let flat = alpha_curve_rows(5.0 / 3.0, 1.0, 1.0, 0.0, 10.0, 101).unwrap();
    assert_eq!(flat.len(), 101 * ALPHA_STRIDE);
    for row in flat.chunks(ALPHA_STRIDE) {
        let exact = (1.0 + row[0] * row[0]).sqrt();
        assert!((row[1] - exact).abs() <= 1e-7 * exact, "{row:?}");
    }
    assert_eq!(flat[flat.len() - ALPHA_STRIDE], 10.0);
}

#[test]
fn regime_rows_agree_with_scan() {
    let flat = regime_scan_rows(1.1, 2.5, 15, 120).unwrap();
    assert_eq!(flat.len(), 15 * REGIME_STRIDE);
    for row in flat.chunks(REGIME_STRIDE) {
        assert_eq!(row[1..4], row[4..7], "gamma {}", row[0]);
    }
}

#[test]
fn profile_rows_have_vacuum_boundary() {
    let flat = profile_rows("power", 1.0, 1.5, 1.0, 64).unwrap();
    assert_eq!(flat.len(), 65 * PROFILE_STRIDE);
    let last = &flat[flat.len() - PROFILE_STRIDE..];
    assert_eq!(last[0], 1.0);
    assert_eq!(last[1], 0.0);
    assert_eq!(last[2], 0.0);
}

#[test]
fn bad_inputs_are_messages() {
    assert!(alpha_curve_rows(1.5, 1.0, 1.0, 1.0, 5.0, 1).is_err());
    assert!(regime_scan_rows(2.0, 1.0, 10, 100).is_err());
    assert!(profile_rows("lumpy", 1.0, 1.5, 1.0, 64).unwrap_err().contains("lumpy"));
}
