use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slowlight::linalg::{CMat, C64};
use slowlight::noise::*;
use slowlight::protocol::*;
use slowlight::Error;

fn spec() -> OneOverFSpec {
    OneOverFSpec::default()
}

fn random_dm(dim: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::Rng;
    let a = CMat::from_fn(dim, dim, |_, _| {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let m = &a * a.adjoint();
    let tr = m.trace();
    m / tr
}

fn min_eig(m: &CMat) -> f64 {
    slowlight::linalg::min_eig(m)
}

#[test]
fn record_resolves_fifty_hertz() {
    let s = spec();
    assert!(s.lowest_bin() <= MAX_LOWEST_BIN_HZ);
    assert!(OneOverFSpec {
        f_low: 100.0,
        ..spec()
    }
    .validate()
    .is_err());
}

#[test]
fn periodogram_follows_power_law() {
    for seed in [1, 2, 3] {
        let n = OneOverFSpec { seed, ..spec() }.calibrate().unwrap();
        let a = periodogram_exponent(&n.record(0).unwrap(), n.spec.sample_rate);
        assert!((a - 1.0).abs() < 0.1, "seed {seed}: {a}");
    }
    let white = OneOverFSpec {
        exponent: 0.0,
        ..spec()
    }
    .calibrate()
    .unwrap();
    let a = periodogram_exponent(&white.record(0).unwrap(), white.spec.sample_rate);
    assert!(a.abs() < 0.1, "{a}");
}

#[test]
fn ramsey_is_gaussian_at_calibrated_time_and_echo_is_slower() {
    let noise = spec().calibrate().unwrap();
    let times: Vec<f64> = (0..36).map(|i| i as f64 * 25e-9).collect();
    let c = simulate_coherence(&noise, &times, 1000).unwrap();
    let t1e = c.ramsey_1e().unwrap();
    assert!((t1e / 561e-9 - 1.0).abs() < 0.03, "{t1e}");
    let (_, r2) = c.gaussian_fit();
    assert!(r2 > 0.99, "{r2}");
    let i = times.iter().position(|&t| t >= 561e-9).unwrap();
    assert!(
        c.echo[i] > c.ramsey[i] + 0.3,
        "{} vs {}",
        c.echo[i],
        c.ramsey[i]
    );
}

#[test]
fn segment_budget_is_enforced() {
    let noise = spec().calibrate().unwrap();
    let n = noise.spec.record_len();
    assert!(noise.segments(4, n).is_err());
    assert_eq!(noise.segments(10, 16).unwrap().len(), 10);
}

#[test]
fn uncalibrated_noise_is_rejected() {
    let steps = circuit(Target::Cluster2);
    let err = dephased_protocol_run(&steps, &spec().uncalibrated(), 10, &Durations::default())
        .unwrap_err();
    assert_eq!(err, Error::Uncalibrated);
}

#[test]
fn zero_noise_gives_ideal_state() {
    let steps = circuit(Target::Cluster42d);
    let quiet = OneOverF::with_amplitude(&spec(), 0.0);
    let r = simulate(
        &steps,
        &ChannelStack::none(),
        Some(&quiet),
        16,
        &Durations::default(),
    )
    .unwrap();
    assert!((r.fidelity - 1.0).abs() < 1e-12);
}

#[test]
fn longer_coherence_reduces_dephasing_error() {
    let steps = timed_circuit(Target::Cluster42d, &Durations::default(), 234e-9).unwrap();
    let run = |t2: f64| {
        let n = OneOverFSpec {
            t2_star: t2,
            ..spec()
        }
        .calibrate()
        .unwrap();
        simulate(
            &steps,
            &ChannelStack::none(),
            Some(&n),
            400,
            &Durations::default(),
        )
        .unwrap()
        .fidelity
    };
    let (f1, f2) = (run(561e-9), run(1122e-9));
    assert!(f2 > f1, "{f1} {f2}");
}

#[test]
fn loss_free_channels_leave_state_unchanged() {
    let rho = target_state("cluster4_2d").unwrap().density();
    let out = apply_channels(
        &rho,
        &ChannelStack {
            loss: 0.0,
            ..ChannelStack::none()
        },
        &[1],
    )
    .unwrap();
    assert!((out.rho - rho.rho).norm() < 1e-15);
}

#[test]
fn loss_on_graph_vertex_matches_closed_form() {
    // For a graph-state vertex ⟨σ₋⟩ = 0, so F = ((1 + √(1−L))/2)².
    let ideal = target_state("cluster4_2d").unwrap();
    for l in [0.05, 0.13, 0.3] {
        let out = apply_channels(
            &ideal.density(),
            &ChannelStack {
                loss: l,
                ..ChannelStack::none()
            },
            &[1],
        )
        .unwrap();
        let f = fidelity(&out, &ideal.density()).unwrap();
        let want = (0.5 * (1.0 + (1.0 - l).sqrt())).powi(2);
        assert!((f - want).abs() < 1e-6, "{l}: {f} vs {want}");
    }
}

#[test]
fn kraus_sets_are_complete() {
    for g in [0.0, 0.13, 0.7] {
        let [k0, k1] = amplitude_damping_kraus(g);
        let s = k0.adjoint() * &k0 + k1.adjoint() * &k1;
        assert!((s - CMat::identity(2, 2)).norm() < 1e-12);
    }
}

#[test]
fn readout_correction_inverts_confusion() {
    let x = [C64::new(0.3, -0.1), C64::new(-0.2, 0.25)];
    let id = [[1.0, 0.0], [0.0, 1.0]];
    assert_eq!(confuse_moments(x, &id), x);
    assert_eq!(correct_readout(x, &id).unwrap(), x);
    for c in [symmetric_confusion(0.976), [[0.98, 0.05], [0.02, 0.95]]] {
        let back = correct_readout(confuse_moments(x, &c), &c).unwrap();
        assert!((back[0] - x[0]).norm() < 1e-14 && (back[1] - x[1]).norm() < 1e-14);
    }
    assert!(matches!(
        correct_readout(x, &[[0.5, 0.5], [0.5, 0.5]]),
        Err(Error::Singular(_))
    ));
}

#[test]
fn sampled_confusion_is_corrected_within_sampling_error() {
    // Emitter label e with probability 0.4; photon field a = +1 when e, −1 when g.
    let c = symmetric_confusion(0.976);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    use rand::Rng;
    let n = 200_000;
    let truth: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.4).collect();
    let mut seen = truth.clone();
    confuse_readout(&mut seen, &c, &mut rng);
    let field = |e: bool| if e { 1.0 } else { -1.0 };
    let mut m = [C64::new(0.0, 0.0); 2];
    for (t, s) in truth.iter().zip(&seen) {
        m[usize::from(*s)] += C64::new(field(*t) / n as f64, 0.0);
    }
    let corrected = correct_readout(m, &c).unwrap();
    assert!((corrected[0].re + 0.6).abs() < 0.01, "{corrected:?}");
    assert!((corrected[1].re - 0.4).abs() < 0.01, "{corrected:?}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let steps = timed_circuit(Target::Cluster2, &Durations::default(), 234e-9).unwrap();
    let noise = spec().calibrate().unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                simulate(
                    &steps,
                    &ChannelStack::default(),
                    Some(&noise),
                    64,
                    &Durations::default(),
                )
                .unwrap()
            })
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.rho, b.rho);
    assert_eq!(a.fidelity.to_bits(), b.fidelity.to_bits());
}

#[test]
fn reference_budget_point() {
    let r = error_budget(&BudgetConfig::default()).unwrap();
    let deph = r.isolated["dephasing"];
    assert!((deph - 0.15).abs() <= 0.03, "{r:?}");
    assert!((r.marginal["loss"] - 0.05).abs() <= 0.01, "{r:?}");
    assert!((r.combined_fidelity - 0.76).abs() <= 0.03, "{r:?}");
    assert!(r.additivity_gap < 0.03, "{r:?}");
    assert!(
        r.dephasing_std_error < 0.005 && r.combined_std_error < 0.005,
        "{r:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn channels_are_trace_preserving_and_positive(seed in any::<u64>(), k in 1usize..=3, g in 0.0f64..0.99, p in 0.0f64..0.99) {
        let n = 3;
        let rho = random_dm(3 << n, seed);
        let mut a = rho.clone();
        amplitude_damp(&mut a, n, k, g);
        let mut b = rho.clone();
        depolarize_emitter_photon(&mut b, n, k, p);
        for m in [&a, &b] {
            prop_assert!((m.trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
            prop_assert!(min_eig(m) > -1e-12);
        }
        let t = trace_emitter(&rho, n);
        prop_assert!((t.trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn budget_runs_are_seed_reproducible(seed in 0u64..1000) {
        let steps = circuit(Target::Cluster2);
        let noise = OneOverFSpec { seed, ..spec() }.calibrate().unwrap();
        let a = simulate(&steps, &ChannelStack::default(), Some(&noise), 8, &Durations::default()).unwrap();
        let b = simulate(&steps, &ChannelStack::default(), Some(&noise), 8, &Durations::default()).unwrap();
        prop_assert_eq!(a.rho, b.rho);
    }
}
