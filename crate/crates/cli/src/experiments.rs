//! The named experiments. Each returns plain data; nothing here touches the filesystem
//! except reading an input moment table.

use crate::config::{derive_seed, Config};
use crate::output::Artifacts;
use serde_json::{json, Value};
use slowlight::dynamics::{
    chevron, cz_phase, emit_shaped, evolve, fit_chevron, mirror_scatter, rise_time_for_bandwidth,
    ChevronModel, Control, CzOptions, EmitterLevel, Initial, LatticeSystem, Transition,
};
use slowlight::flux::erf_envelope;
use slowlight::linalg::{uhlmann, CMat, C64};
use slowlight::noise::{error_budget, noisy_state, simulate, timed_circuit};
use slowlight::protocol::{
    circuit, compile_and_run, fix_gauge, graph_state, stabilizer_expectations, target_graph,
    DensityMatrix, Target,
};
use slowlight::shots::{estimate_moments, synthesize_shots, EstimateOptions, MomentTable};
use slowlight::tomo::{
    bootstrap_ci, cz_chi, gauge_fix_local_z, gaussian_dataset, mle_process, mle_state, pauli_label,
    process_fidelity, qpt_tables, synthesize_qpt, true_process, BootstrapConfig, PrepSpam,
    ProcessFit,
};
use slowlight::units::{hz, to_hz, TWO_PI};
use slowlight::waveguide::{dispersion, gamma_1d, group_delay, round_trip, Geometry};
use slowlight::{Error, Result};
use std::f64::consts::{PI, SQRT_2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Experiment {
    DispersionReport,
    Chevron,
    ShapedEmission,
    MirrorScatter,
    CzQpt,
    ClusterGenerate,
    ErrorBudget,
    TomographyFromMoments,
    Bootstrap,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::DispersionReport,
        Experiment::Chevron,
        Experiment::ShapedEmission,
        Experiment::MirrorScatter,
        Experiment::CzQpt,
        Experiment::ClusterGenerate,
        Experiment::ErrorBudget,
        Experiment::TomographyFromMoments,
        Experiment::Bootstrap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::DispersionReport => "dispersion-report",
            Experiment::Chevron => "chevron",
            Experiment::ShapedEmission => "shaped-emission",
            Experiment::MirrorScatter => "mirror-scatter",
            Experiment::CzQpt => "cz-qpt",
            Experiment::ClusterGenerate => "cluster-generate",
            Experiment::ErrorBudget => "error-budget",
            Experiment::TomographyFromMoments => "tomography-from-moments",
            Experiment::Bootstrap => "bootstrap",
        }
    }
}

/// Which QPT reconstructions to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Spam {
    /// Generalized preparations and confusion-corrected moments.
    On,
    /// Ideal preparations and raw moments.
    Off,
    #[default]
    Both,
}

/// Per-invocation switches that are not part of the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Overrides `cluster.state` / `tomography.state`.
    pub state: Option<String>,
    pub ideal: bool,
    pub spam: Spam,
    /// Moment table to reconstruct instead of synthesizing one.
    pub moments: Option<MomentTable>,
}

pub fn run(exp: Experiment, cfg: &Config, opts: &RunOptions) -> Result<Artifacts> {
    match exp {
        Experiment::DispersionReport => dispersion_report(cfg),
        Experiment::Chevron => chevron_experiment(cfg),
        Experiment::ShapedEmission => shaped_emission(cfg),
        Experiment::MirrorScatter => mirror_experiment(cfg),
        Experiment::CzQpt => cz_qpt(cfg, opts.spam),
        Experiment::ClusterGenerate => cluster_generate(
            cfg,
            opts.state.as_deref().unwrap_or(&cfg.cluster.state),
            opts.ideal,
        ),
        Experiment::ErrorBudget => budget(cfg),
        Experiment::TomographyFromMoments => tomography(
            cfg,
            opts.state.as_deref().unwrap_or(&cfg.tomography.state),
            opts.moments.as_ref(),
        ),
        Experiment::Bootstrap => {
            bootstrap(cfg, opts.state.as_deref().unwrap_or(&cfg.tomography.state))
        }
    }
}

fn wrap_2pi(a: f64) -> f64 {
    a.rem_euclid(TWO_PI)
}

fn matrix_csv(labels: &[String], m: &CMat) -> String {
    let mut s = String::from("row,col,re,im\n");
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            s.push_str(&format!(
                "{},{},{:.12e},{:.12e}\n",
                labels[r],
                labels[c],
                m[(r, c)].re,
                m[(r, c)].im
            ));
        }
    }
    s
}

fn basis_labels(n: usize) -> Vec<String> {
    (0..1usize << n).map(|i| format!("{i:0n$b}")).collect()
}

pub fn dispersion_report(cfg: &Config) -> Result<Artifacts> {
    let spec = cfg.waveguide();
    spec.validate()?;
    let (lo, hi) = spec.passband();
    let mut a = Artifacts::default();
    a.set("n_cells", spec.n_cells);
    a.set("hop_J_hz", to_hz(spec.hop_j));
    a.set("passband_lower_hz", to_hz(lo));
    a.set("passband_upper_hz", to_hz(hi));
    a.set("bandwidth_hz", to_hz(spec.bandwidth()));
    a.set("round_trip_s", round_trip(&spec));
    a.set(
        "group_delay_per_cell_s",
        group_delay(&spec, spec.passband_center)?,
    );
    let j = spec.hop_j;
    a.set("gamma_1d_ef_hz", to_hz(cfg.gamma_ef()));
    a.set(
        "gamma_1d_ge_hz",
        to_hz(gamma_1d(hz(cfg.coupling.g_uc), j, Geometry::EndCoupled)?),
    );
    a.set(
        "gamma_1d_mirror_hz",
        to_hz(gamma_1d(
            hz(cfg.coupling.mirror_g_uc),
            j,
            Geometry::SideCoupled,
        )?),
    );
    let mut csv = String::from("k,frequency_hz,group_delay_per_cell_s,round_trip_s\n");
    let steps = 200;
    for i in 1..steps {
        let k = PI * i as f64 / steps as f64;
        let w = dispersion(&spec, k)?;
        let d = group_delay(&spec, w)?;
        csv.push_str(&format!(
            "{k:.9},{:.9e},{d:.9e},{:.9e}\n",
            to_hz(w),
            2.0 * spec.n_cells as f64 * d
        ));
    }
    a.trace("dispersion", csv);
    Ok(a)
}

/// Slope of ln P(t) for t ≥ `from`.
fn log_slope(t: &[f64], p: &[f64], from: f64) -> f64 {
    let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &p) in t.iter().zip(p) {
        if t < from || p <= 0.0 {
            continue;
        }
        let y = p.ln();
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        n += 1.0;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub fn chevron_experiment(cfg: &Config) -> Result<Artifacts> {
    let spec = cfg.waveguide();
    spec.validate()?;
    let h = &cfg.chevron;
    let model = ChevronModel {
        n_cells: spec.n_cells,
        omega_p: spec.passband_center,
        hop_j: spec.hop_j,
        g_uc: hz(cfg.coupling.g_uc),
        g_nuc: hz(cfg.coupling.g_nuc),
        xi: h.xi,
        transition: Transition::Ef,
    };
    let freqs: Vec<f64> = (0..h.n_frequencies)
        .map(|i| hz(h.f_start + h.f_step * i as f64))
        .collect();
    let times: Vec<f64> = (0..h.n_times).map(|i| h.t_step * i as f64).collect();
    let map = chevron(&model, &freqs, &times)?;
    let fit = fit_chevron(&map, spec.n_cells, h.xi, Transition::Ef)?;

    // Early-time decay of the full lattice (taper included) at band centre.
    let sys = LatticeSystem {
        xi: Control::Constant(h.decay_xi),
        ..cfg.lattice()
    };
    let tau = round_trip(&spec);
    let rec = evolve(&sys, &Initial::Emitter, 0.8 * tau, None)?;
    let fitted_rate = -log_slope(&rec.t, &rec.emitter_pop, 30e-9);
    let closed = 2.0 * (h.decay_xi * SQRT_2 * sys.g_uc).powi(2) / spec.hop_j;

    let mut a = Artifacts::default();
    a.set("xi", h.xi);
    a.set("fit_passband_center_hz", to_hz(fit.omega_p));
    a.set("fit_hop_J_hz", to_hz(fit.hop_j));
    a.set("fit_g_uc_hz", to_hz(fit.g_uc));
    a.set("fit_g_nuc_hz", to_hz(fit.g_nuc));
    a.set("fit_rms_residual", fit.rms_residual);
    a.set("gamma_1d_ef_hz", to_hz(cfg.gamma_ef()));
    a.set("decay_xi", h.decay_xi);
    a.set("decay_rate_fit_hz", to_hz(fitted_rate));
    a.set("decay_rate_closed_form_hz", to_hz(closed));
    a.set(
        "decay_rate_relative_error",
        (fitted_rate / closed - 1.0).abs(),
    );
    a.trace("map", map.to_csv());
    Ok(a)
}

fn residual_after(cfg: &Config, t_r: f64, delta: f64) -> Result<f64> {
    let e = &cfg.emission;
    let env = erf_envelope(t_r, delta, cfg.xi_max(), e.window, e.dt)?;
    let rec = emit_shaped(&cfg.lattice(), &env, e.bin, None)?;
    Ok(*rec.emitter_pop.last().expect("non-empty record"))
}

pub fn shaped_emission(cfg: &Config) -> Result<Artifacts> {
    let e = &cfg.emission;
    let xi = cfg.xi_max();
    let env = erf_envelope(e.rise_time, e.delta, xi, e.window, e.dt)?;
    let rec = emit_shaped(&cfg.lattice(), &env, e.bin, None)?;
    let residual = *rec.emitter_pop.last().expect("non-empty record");

    let mut grid = Vec::new();
    let mut grid_csv = String::from("rise_time_s,delta,residual_population\n");
    let mut monotone = true;
    for &t_r in &e.grid_rise_times {
        let res = e
            .grid_deltas
            .iter()
            .map(|&d| residual_after(cfg, t_r, d))
            .collect::<Result<Vec<f64>>>()?;
        monotone &= res.windows(2).all(|w| w[1] <= w[0] + 1e-9);
        for (d, r) in e.grid_deltas.iter().zip(&res) {
            grid_csv.push_str(&format!("{t_r:.6e},{d},{r:.9e}\n"));
        }
        grid.push(json!({ "rise_time_s": t_r, "deltas": e.grid_deltas, "residual": res }));
    }

    let mut a = Artifacts::default();
    a.set("xi_max", xi);
    a.set("rise_time_s", e.rise_time);
    a.set("delta", e.delta);
    a.set("bin_s", e.bin);
    a.set("residual_population", residual);
    a.set("residual_grid", Value::Array(grid));
    a.set("residual_monotone_in_delta", monotone);
    a.trace("output", rec.to_csv());
    a.trace("residual_grid", grid_csv);
    Ok(a)
}

pub fn mirror_experiment(cfg: &Config) -> Result<Artifacts> {
    let base = cfg.lattice();
    let xi = cfg.xi_max();
    let m = &cfg.mirror;
    let g_m = hz(cfg.coupling.mirror_g_uc);
    let t_r = rise_time_for_bandwidth(&base, m.bandwidth, xi)?;
    let env = erf_envelope(t_r, 0.0, xi, 2.0 * t_r, 0.1e-9)?;
    let tau = round_trip(&base.waveguide);
    let sys = base
        .clone()
        .with_mirror(g_m, Control::Constant(hz(m.detuning)));
    let s = mirror_scatter(&sys, &env, 2.0 * t_r + tau)?;

    let release = base.with_mirror(
        g_m,
        Control::Steps(vec![(0.0, hz(m.detuning)), (s.cut, hz(m.release_detuning))]),
    );
    let r = mirror_scatter(&release, &env, s.cut + 1.2 * tau)?;
    let delay = r.delay();

    let mut a = Artifacts::default();
    a.set("rise_time_s", t_r);
    a.set("photon_bandwidth_hz", m.bandwidth);
    a.set("transmitted", s.transmitted);
    a.set("first_pass_peak_s", s.first_pass_peak);
    a.set("cut_s", s.cut);
    a.set("round_trip_s", tau);
    a.set("release_delay_s", delay);
    a.set("release_delay_over_round_trip", delay.map(|d| d / tau));
    a.trace("held", s.with_mirror.to_csv());
    a.trace("reference", s.reference.to_csv());
    a.trace("released", r.with_mirror.to_csv());
    Ok(a)
}

fn cz_unitary() -> CMat {
    CMat::from_diagonal(&slowlight::linalg::CVec::from_vec(vec![
        C64::new(1.0, 0.0),
        C64::new(1.0, 0.0),
        C64::new(1.0, 0.0),
        C64::new(-1.0, 0.0),
    ]))
}

fn process_summary(fit: &ProcessFit) -> (Value, CMat) {
    let g = gauge_fix_local_z(&fit.chi);
    (
        json!({
            "fidelity": g.fidelity,
            "gauge_angles_rad": g.angles,
            "tp_residual": fit.tp_residual,
            "min_eig": fit.min_eig,
            "iterations": fit.iterations,
            "objective": fit.objective,
        }),
        g.chi.0,
    )
}

/// Scattering phases of a narrowband photon off the emitter in e and in g.
pub fn cz_scattering(cfg: &Config) -> Result<Value> {
    let spec = cfg.waveguide();
    let opts = CzOptions {
        anharmonicity: hz(cfg.transmon.anharmonicity),
        ..CzOptions::default()
    };
    let g_uc = hz(cfg.coupling.g_uc);
    let e = cz_phase(&spec, g_uc, EmitterLevel::E, cfg.cz.bandwidth, &opts)?;
    let g = cz_phase(&spec, g_uc, EmitterLevel::G, cfg.cz.bandwidth, &opts)?;
    Ok(json!({
        "photon_bandwidth_hz": cfg.cz.bandwidth,
        "phase_e_rad": e.phase,
        "phase_g_rad": g.phase,
        "phase_difference_rad": wrap_2pi(e.phase - g.phase),
        "overlap_e": e.magnitude,
        "overlap_g": g.magnitude,
    }))
}

pub fn cz_qpt(cfg: &Config, spam: Spam) -> Result<Artifacts> {
    let solver = cfg.solver();
    let qcfg = cfg.qpt();
    let mut a = Artifacts::default();
    a.set("scattering", cz_scattering(cfg)?);

    let ideal = mle_process(
        &qpt_tables(&cz_chi(), &PrepSpam::none())?,
        &PrepSpam::none(),
        &solver,
    )?;
    a.set(
        "ideal_data_fidelity",
        process_fidelity(&ideal.chi, &cz_unitary()),
    );
    a.set(
        "true_fidelity",
        process_fidelity(&true_process(qcfg.depolarizing), &cz_unitary()),
    );
    a.set("shots_per_setting", qcfg.shots_per_setting);

    let data = synthesize_qpt(&qcfg)?;
    let mut chi = None;
    if matches!(spam, Spam::Off | Spam::Both) {
        let (v, c) = process_summary(&mle_process(&data.raw, &PrepSpam::none(), &solver)?);
        a.set("spam_off", v);
        chi = Some(c);
    }
    if matches!(spam, Spam::On | Spam::Both) {
        let (v, c) = process_summary(&mle_process(&data.corrected, &qcfg.spam, &solver)?);
        a.set("spam_on", v);
        chi = Some(c);
    }
    if let Some(c) = chi {
        let labels: Vec<String> = (0..16).map(|i| pauli_label(i).to_string()).collect();
        a.trace("chi", matrix_csv(&labels, &c));
    }
    Ok(a)
}

fn parse_target(name: &str) -> Result<Target> {
    name.parse()
}

pub fn cluster_generate(cfg: &Config, state: &str, ideal: bool) -> Result<Artifacts> {
    let target = parse_target(state)?;
    let n = target.n_photons();
    let psi = compile_and_run(&circuit(target))?.photonic()?;
    let (rho, fid, se) = if ideal {
        (psi.density(), 1.0, 0.0)
    } else {
        let r = noisy_state(&cfg.budget(target))?;
        (r.rho, r.fidelity, r.std_error)
    };
    let mut a = Artifacts::default();
    a.set("state", target.name());
    a.set("ideal", ideal);
    a.set("n_photons", n);
    a.set("fidelity", fid);
    a.set("fidelity_std_error", se);
    a.set("purity", rho.purity());
    if let Some(g) = target_graph(target) {
        let stab = stabilizer_expectations(&rho, &g)?;
        let gens: Vec<String> = (1..=n).map(|v| g.generator(v)).collect();
        let gauge = fix_gauge(&rho, &graph_state(&g))?;
        a.set("generators", gens);
        a.set("stabilizers", stab);
        a.set("graph_fidelity_local_z", gauge.fidelity);
        a.set("local_z_phases_rad", gauge.phases);
    }
    a.trace("density", matrix_csv(&basis_labels(n), &rho.rho));
    Ok(a)
}

pub fn budget(cfg: &Config) -> Result<Artifacts> {
    let target = parse_target(&cfg.cluster.state)?;
    let r = error_budget(&cfg.budget(target))?;
    let mut a = Artifacts::default();
    a.set("state", r.target.clone());
    a.set("realizations", r.realizations);
    a.set("t2_star_s", r.t2_star);
    a.set("dephasing", r.marginal["dephasing"]);
    a.set("loss", r.marginal["loss"]);
    a.set("control", r.marginal["control"]);
    a.set("F_limit", r.combined_fidelity);
    a.set("F_limit_std_error", r.combined_std_error);
    a.set("dephasing_std_error", r.dephasing_std_error);
    a.set("additivity_gap", r.additivity_gap);
    a.set("isolated", json!(r.isolated));
    a.set("marginal", json!(r.marginal));
    let mut csv = String::from("channel,isolated_infidelity,marginal_infidelity\n");
    for (k, v) in &r.isolated {
        csv.push_str(&format!("{k},{v:.9},{:.9}\n", r.marginal[k]));
    }
    a.trace("budget", csv);
    Ok(a)
}

/// State produced by the schedule with the incoherent channels (no dephasing noise).
pub fn channel_state(cfg: &Config, target: Target) -> Result<DensityMatrix> {
    let d = cfg.durations();
    let steps = timed_circuit(target, &d, cfg.tau_d())?;
    Ok(simulate(&steps, &cfg.channels(), None, 1, &d)?.rho)
}

/// Moments of `truth` estimated from synthetic heterodyne shots.
pub fn synthetic_moments(cfg: &Config, truth: &DensityMatrix, module: &str) -> Result<MomentTable> {
    let (b, dark) = synthesize_shots(&truth.rho, truth.n_photons, None, &cfg.shot_config(module))?;
    estimate_moments(&[b], &dark, &EstimateOptions::default())
}

pub fn tomography(cfg: &Config, state: &str, input: Option<&MomentTable>) -> Result<Artifacts> {
    let target = parse_target(state)?;
    let ideal = compile_and_run(&circuit(target))?.photonic()?.density();
    let mut a = Artifacts::default();
    let table = match input {
        Some(t) => {
            if t.n_photons != target.n_photons() || t.qubit {
                return Err(Error::Dimension {
                    expected: target.n_photons(),
                    got: t.n_photons,
                });
            }
            a.set("source", "input");
            t.clone()
        }
        None => {
            let truth = channel_state(cfg, target)?;
            let t = synthetic_moments(cfg, &truth, "shots")?;
            a.set("source", "synthetic");
            a.set("shots", cfg.shots.count);
            a.set("n_noise", cfg.shots.n_noise);
            a.set("fidelity_true", uhlmann(&truth.rho, &ideal.rho));
            a.documents.push((
                "moments".into(),
                serde_json::to_value(&t).expect("moment table serializes"),
            ));
            t
        }
    };
    let fit = mle_state(&table, &cfg.solver())?;
    let f = uhlmann(&fit.rho, &ideal.rho);
    a.set("state", target.name());
    a.set("fidelity_estimate", f);
    if let Some(t) = a.summary.get("fidelity_true").and_then(Value::as_f64) {
        a.set("fidelity_abs_error", (f - t).abs());
    }
    a.set("iterations", fit.iterations);
    a.set("objective", fit.objective);
    a.set("kkt_residual", fit.kkt_residual);
    a.trace(
        "density",
        matrix_csv(&basis_labels(target.n_photons()), &fit.rho),
    );
    Ok(a)
}

pub fn bootstrap(cfg: &Config, state: &str) -> Result<Artifacts> {
    let target = parse_target(state)?;
    let ideal = compile_and_run(&circuit(target))?.photonic()?.density();
    let truth = channel_state(cfg, target)?;
    let per_shot = synthetic_moments(cfg, &truth, "shots")?;
    let data = gaussian_dataset(
        &truth.rho,
        &per_shot,
        cfg.bootstrap.dataset_shots,
        derive_seed(cfg.seed, "dataset"),
    )?;
    let ci = bootstrap_ci(
        &data,
        &ideal.rho,
        &BootstrapConfig {
            resamples: cfg.bootstrap.resamples,
            seed: derive_seed(cfg.seed, "bootstrap"),
            solver: cfg.solver(),
        },
    )?;
    let f_true = uhlmann(&truth.rho, &ideal.rho);
    let mut a = Artifacts::default();
    a.set("state", target.name());
    a.set("dataset_shots", cfg.bootstrap.dataset_shots);
    a.set("resamples", ci.resamples);
    a.set("fidelity", ci.fidelity);
    a.set("lower", ci.lower);
    a.set("upper", ci.upper);
    a.set("width", ci.width());
    a.set("fidelity_true", f_true);
    a.set("covers_true", ci.lower <= f_true && f_true <= ci.upper);
    a.set("warnings", ci.warnings);
    Ok(a)
}
