use proptest::prelude::*;
use slowlight::dynamics::*;
use slowlight::flux::erf_envelope;
use slowlight::linalg::C64;
use slowlight::units::*;
use slowlight::waveguide::{gamma_1d, round_trip, Geometry, WaveguideSpec};
use slowlight::Error;
use std::f64::consts::PI;

fn xi_working() -> f64 {
    (40.8f64 / 145.6).sqrt()
}

fn constant_xi(xi: f64, transition: Transition) -> LatticeSystem {
    LatticeSystem {
        xi: Control::Constant(xi),
        transition,
        ..LatticeSystem::fitted()
    }
}

fn wrapped(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

#[test]
fn uncoupled_emitter_keeps_its_population() {
    let sys = constant_xi(0.0, Transition::Ef);
    let rec = evolve(&sys, &Initial::Emitter, 200e-9, None).unwrap();
    assert!(rec.emitter_pop.iter().all(|&p| (p - 1.0).abs() < 1e-12));
    assert_eq!(rec.energy(), 0.0);
}

#[test]
fn weak_coupling_decay_matches_golden_rule() {
    // Small ξ keeps Γ well inside the band; the early decay is then exponential at 2(ξg)²/J.
    let xi = 0.2;
    let sys = constant_xi(xi, Transition::Ge);
    let tau = round_trip(&sys.waveguide);
    let rec = evolve(&sys, &Initial::Emitter, 0.8 * tau, None).unwrap();
    let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &p) in rec.t.iter().zip(&rec.emitter_pop) {
        if t < 30e-9 {
            continue;
        }
        let y = p.ln();
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        n += 1.0;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let expected = 2.0 * (xi * sys.g_uc).powi(2) / sys.waveguide.hop_j;
    assert!(
        ((-slope) / expected - 1.0).abs() < 0.05,
        "fit {} vs {}",
        -slope,
        expected
    );
}

#[test]
fn full_coupling_ef_rate_in_expected_range() {
    let w = WaveguideSpec::fitted();
    let gamma = gamma_1d(2f64.sqrt() * mhz(35.16), w.hop_j, Geometry::EndCoupled).unwrap();
    let f = to_mhz(gamma);
    assert!((130.0..=150.0).contains(&f), "{f}");
}

#[test]
fn coarse_step_is_rejected_with_rate_name() {
    let sys = constant_xi(1.0, Transition::Ef);
    match evolve(&sys, &Initial::Emitter, 10e-9, Some(1e-9)) {
        Err(Error::StepTooCoarse {
            rate_name, limit, ..
        }) => {
            assert!(rate_name.contains("output_load"), "{rate_name}");
            assert!(limit < 1e-9);
        }
        other => panic!("expected StepTooCoarse, got {other:?}"),
    }
}

#[test]
fn envelope_above_unity_rejected() {
    let env = erf_envelope(15e-9, 0.0, 1.2, 30e-9, 0.1e-9).unwrap();
    let err = emit_shaped(&LatticeSystem::fitted(), &env, 40e-9, None).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Invalid {
                field: "envelope",
                ..
            }
        ),
        "{err}"
    );
}

#[test]
fn evolution_is_linear_in_the_initial_state() {
    let sys = constant_xi(0.5, Transition::Ef);
    let dim = sys.dim();
    let run = |amps: Vec<C64>| {
        evolve(&sys, &Initial::Amplitudes(amps), 80e-9, None)
            .unwrap()
            .final_state
    };
    let mut a = vec![C64::new(0.0, 0.0); dim];
    let mut b = a.clone();
    a[0] = C64::new(1.0, 0.0);
    b[20] = C64::new(0.0, 1.0);
    let (ca, cb) = (C64::new(0.6, 0.1), C64::new(-0.3, 0.7));
    let mix: Vec<C64> = a.iter().zip(&b).map(|(x, y)| ca * x + cb * y).collect();
    let (fa, fb, fm) = (run(a), run(b), run(mix));
    for i in 0..dim {
        assert!((fm[i] - (ca * fa[i] + cb * fb[i])).norm() < 1e-12);
    }
}

#[test]
fn residual_population_after_fast_pulse() {
    let sys = LatticeSystem::fitted();
    let env = erf_envelope(15e-9, 0.33, xi_working(), 30e-9, 0.05e-9).unwrap();
    let rec = emit_shaped(&sys, &env, 30e-9, None).unwrap();
    let f = *rec.emitter_pop.last().unwrap();
    assert!(f < 0.01, "residual {f}");
}

#[test]
fn residual_falls_with_offset() {
    let sys = LatticeSystem::fitted();
    for t_r in [10e-9, 15e-9, 20e-9] {
        let res: Vec<f64> = (0..=5)
            .map(|i| {
                let env = erf_envelope(t_r, 0.1 * i as f64, xi_working(), 30e-9, 0.05e-9).unwrap();
                *emit_shaped(&sys, &env, 30e-9, None)
                    .unwrap()
                    .emitter_pop
                    .last()
                    .unwrap()
            })
            .collect();
        for w in res.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "t_R={t_r}: {res:?}");
        }
    }
}

#[test]
fn emitted_flux_accounts_for_emitter_depletion() {
    // Near-matched boundary: after two echoes everything that left the emitter has been absorbed.
    let sys = LatticeSystem {
        waveguide: WaveguideSpec::fitted().matched(),
        ..LatticeSystem::fitted()
    };
    let env = erf_envelope(15e-9, 0.33, xi_working(), 30e-9, 0.05e-9).unwrap();
    let horizon = 30e-9 + 3.0 * round_trip(&sys.waveguide);
    let rec = emit_shaped(&sys, &env, horizon, None).unwrap();
    let i30 = (30e-9 / rec.dt).round() as usize;
    let residual = rec.emitter_pop[i30];
    assert!(
        (rec.energy() - (1.0 - residual)).abs() < 2e-3,
        "{} vs {}",
        rec.energy(),
        1.0 - residual
    );
}

fn operating_pulse(sys: &LatticeSystem) -> (f64, slowlight::flux::Envelope) {
    let t_r = rise_time_for_bandwidth(sys, 9.8e6, xi_working()).unwrap();
    let env = erf_envelope(t_r, 0.0, xi_working(), 2.0 * t_r, 0.1e-9).unwrap();
    (t_r, env)
}

#[test]
fn resonant_mirror_blocks_narrowband_photon() {
    let base = LatticeSystem::fitted();
    let (t_r, env) = operating_pulse(&base);
    let sys = base.with_mirror(mhz(57.0), Control::Constant(0.0));
    let horizon = 2.0 * t_r + round_trip(&sys.waveguide);
    let s = mirror_scatter(&sys, &env, horizon).unwrap();
    assert!(
        (s.transmitted - 0.02).abs() <= 0.01,
        "transmitted {}",
        s.transmitted
    );
}

#[test]
fn far_detuned_mirror_is_transparent() {
    // Matched boundary: with the bare taper the mirror's dispersive shift of the last cell
    // changes the taper reflection itself.
    let base = LatticeSystem {
        waveguide: WaveguideSpec::fitted().matched(),
        ..LatticeSystem::fitted()
    };
    let env = erf_envelope(50e-9, 0.0, xi_working(), 100e-9, 0.1e-9).unwrap();
    let sys = base.with_mirror(mhz(57.0), Control::Constant(mhz(1000.0)));
    let s = mirror_scatter(&sys, &env, 100e-9 + round_trip(&sys.waveguide)).unwrap();
    assert!(s.transmitted > 0.99, "{}", s.transmitted);
}

#[test]
fn released_photon_returns_after_round_trip() {
    let base = LatticeSystem::fitted();
    let (t_r, env) = operating_pulse(&base);
    let tau = round_trip(&base.waveguide);
    let probe = base.clone().with_mirror(mhz(57.0), Control::Constant(0.0));
    let cut = mirror_scatter(&probe, &env, 2.0 * t_r + 0.6 * tau)
        .unwrap()
        .cut;
    let sys = base.with_mirror(
        mhz(57.0),
        Control::Steps(vec![(0.0, 0.0), (cut, mhz(1000.0))]),
    );
    let s = mirror_scatter(&sys, &env, cut + 1.2 * tau).unwrap();
    let delay = s.delay().unwrap();
    assert!((delay / tau - 1.0).abs() < 0.02, "delay {delay} vs {tau}");
}

#[test]
fn excited_emitter_imparts_pi_phase() {
    let spec = WaveguideSpec::fitted();
    let e = cz_phase(
        &spec,
        mhz(35.16),
        EmitterLevel::E,
        9.9e6,
        &CzOptions::default(),
    )
    .unwrap();
    assert!(wrapped(e.phase - PI).abs() < 0.05, "phase {}", e.phase);
    assert!(e.magnitude >= 0.98, "overlap {}", e.magnitude);
    let g = cz_phase(
        &spec,
        mhz(35.16),
        EmitterLevel::G,
        9.9e6,
        &CzOptions::default(),
    )
    .unwrap();
    assert!(g.overlap.re > 0.0 && e.overlap.re < 0.0);
}

#[test]
fn matched_taper_transmits() {
    let spec = WaveguideSpec::fitted().matched();
    let r = taper_transmittance(&spec, 9.9e6, 0.0).unwrap();
    assert!(r.transmittance >= 0.99, "{}", r.transmittance);
}

#[test]
fn fitted_taper_loss_near_measured_value() {
    let r = taper_transmittance(&WaveguideSpec::fitted(), 9.9e6, 0.0).unwrap();
    assert!((r.db + 1.2).abs() <= 0.5, "{} dB", r.db);
}

#[test]
fn narrowband_pulse_approaches_steady_state() {
    let r = taper_transmittance(&WaveguideSpec::fitted(), 1e6, 0.0).unwrap();
    assert!((r.transmittance - r.steady_state).abs() < 2e-3, "{r:?}");
}

/// Reflection off the taper by back-propagating the stationary equations from the load.
fn taper_oracle(spec: &WaveguideSpec, offset: f64) -> (f64, f64) {
    let j = spec.hop_j;
    let w = C64::new(offset, 0.0);
    let k = (offset / (2.0 * j)).acos();
    let psi_b = C64::new(1.0, 0.0);
    let psi_a = (w - C64::new(spec.taper_d2, -0.5 * spec.output_load)) * psi_b / spec.taper_j1;
    let psi_0 = ((w - spec.taper_d1) * psi_a - spec.taper_j1 * psi_b) / j;
    let psi_m1 = (w * psi_0 - j * psi_a) / j;
    // ψ_n = α e^{ikn} + β e^{−ikn}; with +J hopping β moves toward the load.
    let e = C64::from_polar(1.0, k);
    let beta = (psi_0 * e.conj() - psi_m1) / (e.conj() - e);
    let alpha = psi_0 - beta;
    let reflect = 1.0 - (alpha / beta).norm_sqr();
    let flux = spec.output_load * psi_b.norm_sqr() / (2.0 * j * k.sin() * beta.norm_sqr());
    (reflect, flux)
}

#[test]
fn steady_state_matches_transfer_oracle() {
    for spec in [
        WaveguideSpec::fitted(),
        WaveguideSpec::design(),
        WaveguideSpec::fitted().matched(),
    ] {
        for off in [-40.0, -10.0, 0.0, 5.0, 30.0] {
            let (t_r, t_flux) = taper_oracle(&spec, mhz(off));
            let t = steady_state_transmittance(&spec, mhz(off)).unwrap();
            assert!((t - t_r).abs() < 1e-10, "{off}: {t} vs {t_r}");
            assert!((t_r - t_flux).abs() < 1e-10);
        }
    }
}

#[test]
fn side_coupled_mirror_is_reciprocal_and_lorentzian() {
    let spec = WaveguideSpec::fitted();
    let g = mhz(57.0);
    let gamma = gamma_1d(g, spec.hop_j, Geometry::SideCoupled).unwrap();
    let det = 0.5 * gamma;
    let l = mirror_transmission(&spec, g, det, 2e6, true).unwrap();
    let r = mirror_transmission(&spec, g, det, 2e6, false).unwrap();
    assert!((l - r).abs() < 1e-9, "{l} vs {r}");
    assert!((l - 0.5).abs() < 0.01, "{l}");
}

#[test]
fn chevron_fit_recovers_lattice_parameters() {
    let xi = 0.22;
    let base = LatticeSystem::fitted();
    let w = base.waveguide;
    let frequencies: Vec<f64> = (0..41).map(|i| ghz(4.72) + mhz(5.0) * i as f64).collect();
    let times: Vec<f64> = (0..41).map(|i| 5e-9 * i as f64).collect();
    // Data from the full time-domain lattice (taper included); the fit uses the mode expansion.
    let population: Vec<Vec<f64>> = frequencies
        .iter()
        .map(|&f| {
            let sys = LatticeSystem {
                xi: Control::Constant(xi),
                emitter_detuning: Control::Constant(f - w.passband_center),
                ..base.clone()
            };
            let rec = evolve(&sys, &Initial::Emitter, 200e-9, None).unwrap();
            times
                .iter()
                .map(|&t| rec.emitter_pop[((t / rec.dt).round() as usize).min(rec.len() - 1)])
                .collect()
        })
        .collect();
    let map = ChevronMap {
        frequencies,
        times,
        population,
    };
    let fit = fit_chevron(&map, w.n_cells, xi, Transition::Ef).unwrap();
    assert!((to_mhz(fit.omega_p) - 4823.0).abs() < 0.5, "{fit:?}");
    assert!((to_mhz(fit.hop_j) / 33.96 - 1.0).abs() < 0.01, "{fit:?}");
    assert!((to_mhz(fit.g_uc) / 35.16 - 1.0).abs() < 0.02, "{fit:?}");
    assert!((to_mhz(fit.g_nuc) - 2.27).abs() < 0.5, "{fit:?}");
}

#[test]
fn chevron_rejects_times_past_round_trip() {
    let m = ChevronModel::fitted(0.2);
    assert!(chevron(&m, &[ghz(4.82)], &[0.0, 300e-9]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_is_conserved(xi in 0.0f64..1.0, det in -60.0f64..60.0, ef in any::<bool>()) {
        let sys = LatticeSystem {
            emitter_detuning: Control::Constant(mhz(det)),
            ..constant_xi(xi, if ef { Transition::Ef } else { Transition::Ge })
        };
        let rec = evolve(&sys, &Initial::Emitter, 150e-9, None).unwrap();
        prop_assert!(rec.norm_defect() < 1e-8, "{}", rec.norm_defect());
    }

    #[test]
    fn cz_phase_is_pi_for_narrow_pulses(bw in 1.0f64..36.0) {
        let spec = WaveguideSpec::fitted();
        let e = cz_phase(&spec, mhz(35.16), EmitterLevel::E, bw * 1e6, &CzOptions::default()).unwrap();
        let g = cz_phase(&spec, mhz(35.16), EmitterLevel::G, bw * 1e6, &CzOptions::default()).unwrap();
        prop_assert!(wrapped(e.phase - g.phase - PI).abs() < 0.05, "{} {}", e.phase, g.phase);
    }

    #[test]
    fn mirror_scattering_is_reciprocal(g in 20.0f64..70.0, det in -80.0f64..80.0, bw in 3.0f64..20.0) {
        let spec = WaveguideSpec::fitted();
        let l = mirror_transmission(&spec, mhz(g), mhz(det), bw * 1e6, true).unwrap();
        let r = mirror_transmission(&spec, mhz(g), mhz(det), bw * 1e6, false).unwrap();
        prop_assert!((l - r).abs() < 1e-9);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&l));
    }
}
