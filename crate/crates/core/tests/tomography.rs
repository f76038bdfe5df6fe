use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slowlight::linalg::{c, kron, min_eig, trace, uhlmann, CMat, C64};
use slowlight::protocol::target_state;
use slowlight::shots::*;
use slowlight::tomo::*;
use slowlight::Error;

fn random_rho(dim: usize, rank: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMat::from_fn(dim, rank, |_, _| {
        c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let m = &a * a.adjoint();
    let t = trace(&m);
    m / t
}

fn random_unitary(dim: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMat::from_fn(dim, dim, |_, _| {
        c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    a.qr().q()
}

fn noisy_table(rho: &CMat, n: usize, shots: usize, seed: u64) -> MomentTable {
    let cfg = ShotConfig {
        shots,
        seed,
        ..Default::default()
    };
    let (b, d) = synthesize_shots(rho, n, None, &cfg).unwrap();
    estimate_moments(&[b], &d, &EstimateOptions::default()).unwrap()
}

fn cz() -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
        c(1.0, 0.0),
        c(1.0, 0.0),
        c(1.0, 0.0),
        c(-1.0, 0.0),
    ]))
}

fn assert_density(rho: &CMat) {
    assert!(min_eig(rho) >= -1e-8, "min eig {}", min_eig(rho));
    assert!((trace(rho).re - 1.0).abs() <= 1e-8);
    assert!((rho - rho.adjoint()).norm() < 1e-10);
}

#[test]
fn single_photon_is_recovered() {
    let mut one = CMat::zeros(2, 2);
    one[(1, 1)] = c(1.0, 0.0);
    let table = exact_moments(&one, 1, false).unwrap();
    assert!((table.mean("I:11").unwrap() - c(1.0, 0.0)).norm() < 1e-15);
    assert!(table.mean("I:01").unwrap().norm() < 1e-15);
    let fit = mle_state(&table, &SolverOptions::default()).unwrap();
    assert!((&fit.rho - &one).norm() < 1e-6);
}

#[test]
fn random_four_photon_states_are_recovered_from_exact_moments() {
    for (seed, rank) in [(1, 1), (2, 3), (3, 16)] {
        let rho = random_rho(16, rank, seed);
        let fit = mle_state(
            &exact_moments(&rho, 4, false).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_density(&fit.rho);
        assert!(uhlmann(&fit.rho, &rho) > 0.999, "rank {rank}");
    }
}

#[test]
fn ideal_cluster_is_recovered() {
    let target = target_state("cluster4_2d").unwrap().density();
    let fit = mle_state(
        &exact_moments(&target.rho, 4, false).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    let est = fit.density().unwrap();
    assert!(slowlight::protocol::fidelity(&est, &target).unwrap() > 0.999);
}

#[test]
fn emitter_correlated_states_are_recovered() {
    let rho = random_rho(8, 2, 9);
    let fit = mle_state(
        &exact_moments(&rho, 2, true).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(uhlmann(&fit.rho, &rho) > 0.999_999);
    assert!(fit.density().is_err());
}

#[test]
fn linear_inversion_solves_the_moment_equations() {
    // Oracle: solve Tr(A_j ρ) = m_j directly as a dense linear system in vec(ρ).
    let rho = random_rho(4, 2, 4);
    let table = noisy_table(&rho, 2, 20_000, 3);
    let sigs = table.required();
    let d = 4;
    let mut a = CMat::zeros(sigs.len(), d * d);
    let mut b = nalgebra::DVector::zeros(sigs.len());
    for (j, s) in sigs.iter().enumerate() {
        let op = MomentOperator::new(s, false).to_dense();
        for r in 0..d {
            for col in 0..d {
                // Tr(Aρ) = Σ A_{r,col} ρ_{col,r}
                a[(j, col * d + r)] = op[(r, col)];
            }
        }
        b[j] = table.get(s).unwrap().mean;
    }
    let x = a.lu().solve(&b).unwrap();
    let direct = CMat::from_fn(d, d, |r, col| x[r * d + col]);
    let lin = linear_inversion(&table).unwrap();
    assert!((&lin - &direct).norm() < 1e-10);
}

#[test]
fn objective_never_increases() {
    let rho = random_rho(16, 2, 5);
    let table = noisy_table(&rho, 4, 50_000, 8);
    let opts = SolverOptions {
        record_history: true,
        ..Default::default()
    };
    let fit = mle_state(&table, &opts).unwrap();
    assert!(fit.history.len() > 2);
    for w in fit.history.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
    assert_density(&fit.rho);
}

#[test]
fn reconstruction_beats_the_true_state_on_its_own_objective() {
    let rho = random_rho(8, 3, 6);
    let table = noisy_table(&rho, 3, 100_000, 2);
    let fit = mle_state(&table, &SolverOptions::default()).unwrap();
    assert!(fit.objective <= state_objective(&table, &rho).unwrap() + 1e-9);
    let exact = exact_moments(&rho, 3, false).unwrap();
    let fit = mle_state(&exact, &SolverOptions::default()).unwrap();
    assert!(fit.objective <= state_objective(&exact, &rho).unwrap() + 1e-9);
    assert!(fit.kkt_residual < 1e-4);
}

#[test]
fn depolarizing_lowers_reconstructed_fidelity_monotonically() {
    let rho = target_state("cluster4_2d").unwrap().density().rho;
    let mixed = CMat::identity(16, 16) / c(16.0, 0.0);
    let mut last = f64::INFINITY;
    for p in [0.0, 0.1, 0.2, 0.4, 0.8] {
        let rp = &rho * c(1.0 - p, 0.0) + &mixed * c(p, 0.0);
        let fit = mle_state(
            &exact_moments(&rp, 4, false).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        let f = uhlmann(&fit.rho, &rho);
        assert!(f < last, "p = {p}: {f} ≥ {last}");
        last = f;
    }
}

#[test]
fn reconstruction_preconditions() {
    let rho = random_rho(4, 1, 1);
    let mut table = exact_moments(&rho, 2, false).unwrap();
    let opts = SolverOptions::default();
    table.entries.remove("I:01.11");
    match mle_state(&table, &opts) {
        Err(Error::Missing(msg)) => assert!(msg.contains("I:01.11"), "{msg}"),
        other => panic!("expected a missing-signature error, got {other:?}"),
    }
    let noisy = noisy_table(&random_rho(16, 2, 2), 4, 20_000, 1);
    let tight = SolverOptions {
        max_iter: 2,
        tol: 1e-15,
        record_history: false,
    };
    assert!(matches!(
        mle_state(&noisy, &tight),
        Err(Error::NoConvergence(_))
    ));
    assert!(matches!(
        mle_state_from(&noisy, CMat::identity(4, 4), &opts),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn chi_of_a_unitary_acts_as_conjugation() {
    let u = random_unitary(4, 12);
    let rho = random_rho(4, 4, 13);
    let chi = ChiMatrix::unitary(&u);
    assert!((chi.apply(&rho) - &u * &rho * u.adjoint()).norm() < 1e-12);
    assert!(chi.tp_residual() < 1e-12);
    assert!((process_fidelity(&chi, &u) - 1.0).abs() < 1e-12);
    assert!((process_fidelity(&cz_chi(), &CMat::identity(4, 4)) - 0.25).abs() < 1e-12);
}

#[test]
fn depolarized_cz_has_the_expected_fidelity() {
    // Each non-identity Pauli after CZ is orthogonal to CZ, so F = 1 − p.
    for p in [0.0, 0.03, 0.2] {
        let chi = true_process(p);
        assert!((process_fidelity(&chi, &cz()) - (1.0 - p)).abs() < 1e-12);
        assert!(chi.tp_residual() < 1e-12);
        let rho = random_rho(4, 4, 2);
        let out = chi.apply(&rho);
        let expect = (&cz() * &rho * cz()) * c(1.0 - 16.0 * p / 15.0, 0.0)
            + CMat::identity(4, 4) * c(16.0 * p / 15.0 / 4.0, 0.0);
        assert!((out - expect).norm() < 1e-12);
    }
}

#[test]
fn cptp_projection_is_feasible_and_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = CMat::from_fn(16, 16, |_, _| {
        c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let h = (&a + a.adjoint()) * c(0.5, 0.0);
    let p = ChiMatrix(project_cptp(&h));
    assert!(p.tp_residual() <= 1e-6);
    assert!(p.min_eig() >= -1e-8);
    let again = project_cptp(&p.0);
    assert!((&again - &p.0).norm() < 1e-6);
    let cz = cz_chi();
    assert!((project_cptp(&cz.0) - &cz.0).norm() < 1e-9);
}

#[test]
fn prepared_states_follow_the_spam_model() {
    let ideal = prepared_states(&PrepSpam::none());
    assert_eq!(ideal.len(), 16);
    for rho in &ideal {
        assert!(
            (rho * rho - rho).norm() < 1e-12,
            "ideal preparations are pure"
        );
    }
    let spam = PrepSpam {
        loss: 0.13,
        thermal: 0.01,
    };
    let noisy = prepared_states(&spam);
    // Emitter in g, photon in 1: photon population 0.87; emitter e population 0.01.
    let rho = &noisy[1];
    let n_photon = rho[(1, 1)].re + rho[(3, 3)].re;
    let p_e = rho[(2, 2)].re + rho[(3, 3)].re;
    assert!((n_photon - 0.87).abs() < 1e-12);
    assert!((p_e - 0.01).abs() < 1e-12);
    // Emitter in |+⟩: coherence shrinks by 1 − 2p.
    let plus = &noisy[8];
    let coh = plus[(0, 2)] + plus[(1, 3)];
    assert!((coh.re - 0.5 * 0.98).abs() < 1e-12);
    for rho in &noisy {
        assert_density(rho);
    }
    assert!(PrepSpam {
        loss: 1.0,
        thermal: 0.0
    }
    .validate()
    .is_err());
}

#[test]
fn ideal_process_data_recovers_cz() {
    let tables = qpt_tables(&cz_chi(), &PrepSpam::none()).unwrap();
    let fit = mle_process(&tables, &PrepSpam::none(), &SolverOptions::default()).unwrap();
    assert!(fit.tp_residual <= 1e-6);
    assert!(fit.min_eig >= -1e-8);
    assert!(process_fidelity(&fit.chi, &cz()) > 0.999);
}

#[test]
fn exact_spam_model_recovers_the_true_channel() {
    let spam = PrepSpam::default();
    let tables = qpt_tables(&true_process(0.03), &spam).unwrap();
    let fit = mle_process(&tables, &spam, &SolverOptions::default()).unwrap();
    assert!((process_fidelity(&fit.chi, &cz()) - 0.97).abs() < 1e-3);
}

#[test]
fn process_grid_must_be_complete() {
    let mut tables = qpt_tables(&cz_chi(), &PrepSpam::none()).unwrap();
    let opts = SolverOptions::default();
    tables.pop();
    assert!(matches!(
        mle_process(&tables, &PrepSpam::none(), &opts),
        Err(Error::Missing(_))
    ));
    let mut tables = qpt_tables(&cz_chi(), &PrepSpam::none()).unwrap();
    tables[3].entries.remove("Z:10");
    match mle_process(&tables, &PrepSpam::none(), &opts) {
        Err(Error::Missing(m)) => assert!(m.contains("preparation 3") && m.contains("Z:10"), "{m}"),
        other => panic!("{other:?}"),
    }
    let bad = PrepSpam {
        loss: -0.1,
        thermal: 0.0,
    };
    assert!(mle_process(
        &qpt_tables(&cz_chi(), &PrepSpam::none()).unwrap(),
        &bad,
        &opts
    )
    .is_err());
}

#[test]
fn spam_correction_recovers_the_gate_from_shot_data() {
    let report = simulate_qpt(&QptConfig::default(), &SolverOptions::default()).unwrap();
    assert!((report.true_fidelity - 0.97).abs() < 1e-12);
    assert!(
        report.fidelity_spam_on >= 0.95,
        "{}",
        report.fidelity_spam_on
    );
    assert!(report.fidelity_spam_on - report.fidelity_spam_off >= 0.05);
    assert!(report.tp_residual <= 1e-6);
    assert!(report.min_eig >= -1e-8);
    assert_eq!(report.basis[1], "IX");
}

#[test]
fn gauge_fix_returns_the_applied_rotation() {
    let aligned = gauge_fix_local_z(&cz_chi());
    assert!(aligned.angles[0].abs() < 1e-6 && aligned.angles[1].abs() < 1e-6);
    assert!((aligned.fidelity - 1.0).abs() < 1e-12);
    for chi in [cz_chi(), true_process(0.05)] {
        // Oracle: χ of Z(0.3) ⊗ Z(−0.7) applied after the channel.
        let z = |t: f64| {
            CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
                c(1.0, 0.0),
                C64::from_polar(1.0, t),
            ]))
        };
        let rotated = chi.then_unitary(&kron(&z(0.3), &z(-0.7)));
        assert!(process_fidelity(&rotated, &cz()) < 0.95);
        let g = gauge_fix_local_z(&rotated);
        assert!((g.angles[0] - 0.3).abs() < 1e-3, "{:?}", g.angles);
        assert!((g.angles[1] + 0.7).abs() < 1e-3, "{:?}", g.angles);
        assert!((g.fidelity - process_fidelity(&chi, &cz())).abs() < 1e-8);
    }
    let lz = local_z_chi(0.3, -0.7);
    assert!(
        (cz_chi().then_unitary(&cz()).0
            - CMat::from_fn(16, 16, |i, j| c(f64::from(u8::from(i == 0 && j == 0)), 0.0)))
        .norm()
            < 1e-12
    );
    assert!((lz.apply(&CMat::identity(4, 4)) - CMat::identity(4, 4)).norm() < 1e-12);
}

#[test]
fn percentile_positions_are_the_25th_and_975th_of_1000() {
    assert_eq!(percentile_indices(1000), (24, 974));
    assert_eq!(percentile_indices(100), (2, 97));
}

#[test]
fn exact_moments_give_a_zero_width_interval() {
    let rho = random_rho(4, 2, 1);
    let table = exact_moments(&rho, 2, false).unwrap();
    let cfg = BootstrapConfig {
        resamples: 100,
        ..Default::default()
    };
    let ci = bootstrap_ci(&table, &rho, &cfg).unwrap();
    assert!(ci.width().abs() < 1e-9);
    assert!(ci.warnings.is_empty());
    assert_eq!((ci.resamples, ci.seed), (100, cfg.seed));
}

#[test]
fn few_resamples_are_flagged() {
    let rho = random_rho(4, 2, 1);
    let table = exact_moments(&rho, 2, false).unwrap();
    let ci = bootstrap_ci(
        &table,
        &rho,
        &BootstrapConfig {
            resamples: 20,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(ci.warnings.len(), 1);
}

#[test]
fn interval_width_scales_as_inverse_root_of_data() {
    // Full-rank truth, scored against a different pure state so the fidelity is
    // first-order sensitive to the data.
    let rho = random_rho(4, 1, 3) * c(0.7, 0.0) + CMat::identity(4, 4) * c(0.075, 0.0);
    let target = random_rho(4, 1, 4);
    let per_shot = noisy_table(&rho, 2, 200_000, 5);
    let cfg = BootstrapConfig {
        resamples: 400,
        ..Default::default()
    };
    let width = |count: u64| {
        let data = gaussian_dataset(&rho, &per_shot, count, 17).unwrap();
        bootstrap_ci(&data, &target, &cfg).unwrap().width()
    };
    let ratio = width(40_000_000) / width(10_000_000);
    assert!((ratio - 0.5).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn bootstrap_does_not_depend_on_thread_count() {
    let rho = random_rho(4, 4, 3);
    let data = noisy_table(&rho, 2, 50_000, 5);
    let cfg = BootstrapConfig {
        resamples: 120,
        seed: 3,
        ..Default::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bootstrap_ci(&data, &rho, &cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_round_trip_for_random_states(seed in 0u64..10_000, rank in 1usize..5, n in 1usize..4) {
        let rho = random_rho(1 << n, rank, seed);
        let fit = mle_state(&exact_moments(&rho, n, false).unwrap(), &SolverOptions::default()).unwrap();
        prop_assert!(uhlmann(&fit.rho, &rho) > 0.999_99);
    }

    #[test]
    fn density_projection_is_a_projection(seed in 0u64..10_000, dim in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMat::from_fn(dim, dim, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let h = (&a + a.adjoint()) * c(0.5, 0.0);
        let p = project_density(&h, 1.0);
        prop_assert!(min_eig(&p) >= -1e-12);
        prop_assert!((trace(&p).re - 1.0).abs() < 1e-12);
        prop_assert!((project_density(&p, 1.0) - &p).norm() < 1e-10);
        let q = project_psd(&h);
        prop_assert!(min_eig(&q) >= -1e-12);
    }

    #[test]
    fn resampled_tables_stay_hermitian(seed in 0u64..10_000) {
        let rho = random_rho(4, 2, seed);
        let mut table = exact_moments(&rho, 2, false).unwrap();
        for m in table.entries.values_mut() {
            m.variance = 0.3;
            m.count = 1000;
        }
        let r = resample_table(&table, seed, 1);
        prop_assert!(r.hermiticity_defect() < 1e-15);
        prop_assert!(r.entries.values().zip(table.entries.values()).any(|(a, b)| a.mean != b.mean));
        prop_assert!(r.mean("I:11.11").unwrap().im == 0.0);
    }
}
