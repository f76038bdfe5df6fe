use proptest::prelude::*;
use slowlight::flux::*;
use slowlight::units::{ghz, mhz, NS, TWO_PI};

fn square(n: usize, on: usize, off: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i >= on && i < off { 1.0 } else { 0.0 })
        .collect()
}

/// Independent distortion oracle: direct convolution of the continuous-time model's
/// impulse response (sampled differences of the step response) with the waveform.
fn distort(model: &DistortionModel, dt: f64, x: &[f64]) -> Vec<f64> {
    let s = |t: f64| 1.0 + model.kernels.iter().map(|k| k.value(t)).sum::<f64>();
    let h: Vec<f64> = (0..x.len())
        .map(|i| s(i as f64 * dt) - if i == 0 { 0.0 } else { s((i - 1) as f64 * dt) })
        .collect();
    (0..x.len())
        .map(|n| (0..=n).map(|k| h[k] * x[n - k]).sum())
        .collect()
}

fn plateau_error(out: &[f64], on: usize, off: usize) -> f64 {
    out[on..off]
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max)
}

#[test]
fn single_pole_droop_flattened() {
    let dt = NS;
    let model = DistortionModel::new(vec![Kernel::exponential(-0.05, 200.0 * NS)]);
    let step = model.step_response(dt, 3000);
    let target = square(2500, 50, 1550);
    let p = predistort_square(&step, dt, &target, &PredistortOptions::default()).unwrap();
    let out = distort(&model, dt, &p.waveform);
    let err = plateau_error(&out, 52, 1550);
    assert!(err < 0.002, "plateau error {err}");
    assert_eq!(p.kernels.len(), 1);
    assert!((p.kernels[0].tau / (200.0 * NS) - 1.0).abs() < 1e-3);
}

#[test]
fn two_component_with_oscillation_flattened() {
    let dt = NS;
    let model = DistortionModel::new(vec![
        Kernel::exponential(0.04, 350.0 * NS),
        Kernel {
            amplitude: 0.02,
            tau: 80.0 * NS,
            omega: TWO_PI * 12e6,
            phase: 0.3,
        },
    ]);
    let step = model.step_response(dt, 3000);
    let target = square(2500, 50, 1550);
    let p = predistort_square(&step, dt, &target, &PredistortOptions::default()).unwrap();
    let out = distort(&model, dt, &p.waveform);
    let err = plateau_error(&out, 52, 1550);
    assert!(err < 0.002, "plateau error {err}");
    let uncorrected = plateau_error(&distort(&model, dt, &target), 52, 1550);
    assert!(uncorrected > 0.02);
}

#[test]
fn predistortion_is_idempotent() {
    let dt = NS;
    let model = DistortionModel::new(vec![Kernel::exponential(-0.05, 200.0 * NS)]);
    let step = model.step_response(dt, 3000);
    let unit = vec![1.0; 3000];
    let opts = PredistortOptions::default();
    // Compensated channel: distortion applied to the pre-distorted step.
    let comp = predistort_square(&step, dt, &unit, &opts).unwrap();
    let compensated_step = distort(&model, dt, &comp.waveform);
    let target = square(2500, 50, 1550);
    let again = predistort_square(&compensated_step, dt, &target, &opts).unwrap();
    let rms = (again
        .waveform
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / target.len() as f64)
        .sqrt();
    let ref_rms = (target.iter().map(|v| v * v).sum::<f64>() / target.len() as f64).sqrt();
    assert!(rms / ref_rms < 5e-4, "relative change {}", rms / ref_rms);
}

#[test]
fn dc_correction_monotone_on_operating_bias() {
    let spec = TransmonSpec::emitter();
    let grid: Vec<f64> = (0..=15).map(|i| 0.01 * i as f64).collect();
    let dc = dc_correction_grid(&spec, 0.234, &grid, mhz(450.0)).unwrap();
    assert_eq!(dc[0], 0.0);
    for w in dc.windows(2) {
        assert!(w[1].abs() >= w[0].abs());
    }
    // Oracle: dense scan of the mean frequency over Φ_DC at one amplitude.
    let a = 0.1;
    let target = spec.omega_ef(0.234);
    let mean = |d: f64| {
        let n = 4096;
        (0..n)
            .map(|k| spec.omega_ef(0.234 + d + a * (TWO_PI * k as f64 / n as f64).sin()))
            .sum::<f64>()
            / n as f64
    };
    let best = (0..4001)
        .map(|i| -0.04 + 0.04 * i as f64 / 4000.0)
        .min_by(|x, y| {
            (mean(*x) - target)
                .abs()
                .partial_cmp(&(mean(*y) - target).abs())
                .unwrap()
        })
        .unwrap();
    let got = dc_correction(&spec, 0.234, a, mhz(450.0)).unwrap();
    assert!((got - best).abs() < 2e-5, "{got} vs {best}");
}

#[test]
fn corrected_carrier_stays_fixed() {
    let spec = TransmonSpec::emitter();
    for a in [0.02, 0.06, 0.1, 0.13] {
        let mut p = ModulationPoint::new(0.234, a, mhz(450.0));
        p.phi_dc = dc_correction(&spec, 0.234, a, mhz(450.0)).unwrap();
        let s = sideband_spectrum(&spec, &p, SidebandWindow::default()).unwrap();
        assert!(s.dc_shift.abs() < TWO_PI * 1e3);
    }
}

#[test]
fn working_amplitude_reachable_and_round_trips() {
    let spec = TransmonSpec::emitter();
    let table = XiTable::cached(&spec, 0.234, mhz(450.0)).unwrap();
    assert!(
        table.max_xi() > 0.5 && table.max_xi() < 0.6,
        "{}",
        table.max_xi()
    );
    let levels = [0.0, 0.1, 0.22, 0.4, 0.5];
    let target: Vec<f64> = levels
        .iter()
        .flat_map(|&x| std::iter::repeat_n(x, 4))
        .collect();
    let drive = drive_from_envelope(&spec, 0.234, mhz(450.0), &target, NS).unwrap();
    assert!(drive.phi_ac[..4].iter().all(|&a| a == 0.0));
    for (i, &x) in target.iter().enumerate().skip(4) {
        let s = sideband_spectrum(&spec, &drive.point(i), SidebandWindow::default()).unwrap();
        let got = s.emission().norm();
        assert!((got / x - 1.0).abs() < 0.01, "ξ*={x}: got {got}");
    }
    assert!(matches!(
        drive_from_envelope(&spec, 0.234, mhz(450.0), &[0.9], NS),
        Err(slowlight::Error::Unreachable { .. })
    ));
}

#[test]
fn fast_pulse_drive_has_two_track_shape() {
    let spec = TransmonSpec::emitter();
    let phi_b = spec.bias_for_ge(ghz(5.55)).unwrap();
    let env = erf_envelope(15.0 * NS, 0.33, 0.5, 60.0 * NS, 0.25 * NS).unwrap();
    let drive = drive_from_envelope(&spec, phi_b, mhz(450.0), &env.values, env.dt).unwrap();
    // AC envelope rises with ξ; DC track moves opposite and stays small.
    assert!(drive.phi_ac.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    let last = drive.len() - 1;
    assert!(drive.phi_ac[last] > 0.03);
    assert!(drive.phi_dc[last].signum() != 0.0 && drive.phi_dc[last].abs() < drive.phi_ac[last]);
    let csv = drive.to_csv();
    assert!(csv.starts_with("t_s,phi_ac_phi0,phi_dc_phi0\n"));
    assert_eq!(csv.lines().count(), drive.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sideband_weights_sum_to_one(phi_b in 0.0f64..0.4, frac in 0.0f64..1.0, fmod in 200.0f64..800.0) {
        let spec = TransmonSpec::emitter();
        let a = frac * (0.49 - phi_b).min(0.2);
        let s = sideband_spectrum(&spec, &ModulationPoint::new(phi_b, a, mhz(fmod)), SidebandWindow::default()).unwrap();
        prop_assert!((s.total_weight() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_curves_follow_bessel(beta in 0.0f64..4.0, offset in 4.0f64..7.0) {
        let wm = mhz(300.0);
        let (_, min, xi) = slowlight::flux::sideband_spectrum_of(
            |th| ghz(offset) + beta * wm * th.sin(), wm, SidebandWindow::default()).unwrap();
        for s in -5i32..=5 {
            // Oracle: Bessel integral by trapezoid rule.
            let k = 2000;
            let h = std::f64::consts::PI / k as f64;
            let j: f64 = (0..=k).map(|i| {
                let t = i as f64 * h;
                let w = if i == 0 || i == k { 0.5 } else { 1.0 };
                w * (s as f64 * t - beta * t.sin()).cos()
            }).sum::<f64>() * h / std::f64::consts::PI;
            prop_assert!((xi[(s - min) as usize].norm() - j.abs()).abs() < 1e-6);
        }
    }

    #[test]
    fn erf_envelope_monotone(t_r in 5.0f64..80.0, d1 in -0.5f64..1.0, dd in 0.0f64..1.0) {
        let a = erf_envelope(t_r * NS, d1, 0.5, 200.0 * NS, NS).unwrap();
        let b = erf_envelope(t_r * NS, d1 + dd, 0.5, 200.0 * NS, NS).unwrap();
        prop_assert!(a.values.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| y >= x));
    }

    #[test]
    fn dc_fixed_point(a in 0.0f64..0.14) {
        let spec = TransmonSpec::emitter();
        let mut p = ModulationPoint::new(0.234, a, mhz(450.0));
        p.phi_dc = dc_correction(&spec, 0.234, a, mhz(450.0)).unwrap();
        let s = sideband_spectrum(&spec, &p, SidebandWindow::default()).unwrap();
        prop_assert!(s.dc_shift.abs() < TWO_PI * 1e3);
    }
}
