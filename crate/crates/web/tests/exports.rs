use slowlight_web::{erf_envelope, round_trip_delay, sideband_weights};
use std::f64::consts::PI;

#[test]
fn delay_matches_tight_binding_group_velocity() {
    let (n, j) = (50, 33.5e6);
    let curve = round_trip_delay(n, j, 41).unwrap();
    let centre = 4.744e9; // design passband centre
    for pair in curve.chunks(2) {
        let (f, tau_ns) = (pair[0], pair[1]);
        let k = ((f - centre) / (2.0 * j)).acos();
        let expect = 2.0 * n as f64 / (2.0 * 2.0 * PI * j * k.sin()) * 1e9;
        assert!(
            (tau_ns / expect - 1.0).abs() < 1e-9,
            "{f}: {tau_ns} vs {expect}"
        );
    }
    // Middle sample sits at band centre: τ = N/J.
    let mid = curve[2 * 20 + 1];
    assert!((mid / (n as f64 / (2.0 * PI * j) * 1e9) - 1.0).abs() < 1e-9);
}

#[test]
fn delay_rejects_bad_geometry() {
    assert!(round_trip_delay(0, 33.5e6, 10).is_err());
    assert!(round_trip_delay(50, -1.0, 10).is_err());
}

#[test]
fn sideband_weights_sum_to_one() {
    let w = sideband_weights(0.2, 0.1, 300e6, 30).unwrap();
    assert_eq!(w.len(), 61);
    let total: f64 = w.iter().sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");
    let unmodulated = sideband_weights(0.2, 0.0, 300e6, 3).unwrap();
    assert!((unmodulated[3] - 1.0).abs() < 1e-12);
}

#[test]
fn envelope_bounded_by_peak() {
    let env = erf_envelope(15.0, 0.33, 0.53, 30.0, 0.05).unwrap();
    assert_eq!(env.len(), 601); // both window ends sampled
    assert!(env.iter().all(|&v| (0.0..=0.53 + 1e-12).contains(&v)));
    assert!(erf_envelope(-1.0, 0.33, 0.53, 30.0, 0.05).is_err());
}
