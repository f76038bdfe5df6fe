//! Error channels of the generation protocol: 1/f emitter dephasing, photon loss,
//! thermal preparation error, residual |f⟩, CZ imperfection and readout confusion.

mod channels;
mod onef;

pub use channels::{
    amplitude_damp, amplitude_damping_kraus, apply_channels, confuse_moments, confuse_readout,
    correct_readout, depolarize_emitter_photon, symmetric_confusion, trace_emitter, ChannelStack,
};
pub use onef::{
    integrate, periodogram_exponent, phase_at, simulate_coherence, CoherenceCurve, OneOverF,
    OneOverFSpec, MAX_LOWEST_BIN_HZ,
};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::protocol::{
    align_feedback, circuit, compile_and_run, step_gate, timeline, validate, DensityMatrix,
    Durations, Gate, PureState, Step, Target, E,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Averaged outcome of a noisy protocol simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub rho: DensityMatrix,
    /// ⟨ψ_ideal|ρ|ψ_ideal⟩ against the noiseless output of the same schedule.
    pub fidelity: f64,
    /// Standard error of the fidelity from record-batch means (0 without dephasing).
    pub std_error: f64,
    pub realizations: usize,
}

fn mix_emission(rho: &mut CMat, before: &CMat, r: f64) {
    if r > 0.0 {
        *rho = &*rho * C64::new(1.0 - r, 0.0) + before * C64::new(r, 0.0);
    }
}

/// One density-matrix trajectory; `phase(t0, t1)` gives the accumulated emitter phase.
fn trajectory(
    steps: &[Step],
    n: usize,
    times: &[(f64, f64)],
    stack: &ChannelStack,
    phase: &dyn Fn(f64, f64) -> f64,
) -> CMat {
    let d = 1 << n;
    let dim = 3 * d;
    let mut rho = CMat::zeros(dim, dim);
    rho[(0, 0)] = C64::new(1.0 - stack.thermal_pop, 0.0);
    rho[(E * d, E * d)] = C64::new(stack.thermal_pop, 0.0);
    for (step, &(t0, t1)) in steps.iter().zip(times) {
        if let Step::CzFeedback { photon } = step {
            amplitude_damp(&mut rho, n, *photon, stack.loss);
        }
        if let Some(g) = step_gate(step, n) {
            let before = matches!(step, Step::Emit { .. }).then(|| rho.clone());
            g.apply_dm(n, &mut rho);
            if let Some(b) = before {
                mix_emission(&mut rho, &b, stack.residual_f);
            }
        }
        if let Step::CzFeedback { photon } = step {
            depolarize_emitter_photon(&mut rho, n, *photon, stack.cz_depolarizing);
        }
        let phi = phase(t0, t1);
        if phi != 0.0 {
            Gate::emitter_phase(n, phi).apply_dm(n, &mut rho);
        }
    }
    trace_emitter(&rho, n)
}

fn overlap(target: &PureState, rho: &CMat) -> f64 {
    let a = &target.amps;
    let mut s = C64::new(0.0, 0.0);
    for i in 0..a.len() {
        for j in 0..a.len() {
            s += a[i].conj() * rho[(i, j)] * a[j];
        }
    }
    s.re
}

/// Simulate `steps` with the channel stack and, if given, 1/f dephasing averaged over
/// `realizations` noise segments.
pub fn simulate(
    steps: &[Step],
    stack: &ChannelStack,
    noise: Option<&OneOverF>,
    realizations: usize,
    durations: &Durations,
) -> Result<RunResult> {
    stack.validate()?;
    let n = validate(steps)?;
    let target = compile_and_run(steps)?.photonic()?;
    let tl = timeline(steps, durations)?;
    let times: Vec<(f64, f64)> = tl.iter().map(|t| (t.start, t.end)).collect();
    let total = tl.last().map(|t| t.end).unwrap_or(0.0);

    let Some(noise) = noise else {
        let rho = trajectory(steps, n, &times, stack, &|_, _| 0.0);
        let fidelity = overlap(&target, &rho);
        return Ok(RunResult {
            rho: DensityMatrix { n_photons: n, rho },
            fidelity,
            std_error: 0.0,
            realizations: 1,
        });
    };
    if realizations == 0 {
        return Err(Error::Invalid {
            field: "realizations",
            reason: "must be at least 1".into(),
        });
    }
    let dt = noise.dt();
    let len = (total / dt).ceil() as usize + 2;
    let segments = noise.segments(realizations, len)?;
    let run = |seg: &Vec<f64>| -> CMat {
        let cum = integrate(seg, dt);
        trajectory(steps, n, &times, stack, &|a, b| {
            phase_at(&cum, dt, b) - phase_at(&cum, dt, a)
        })
    };
    #[cfg(feature = "parallel")]
    let rhos: Vec<CMat> = {
        use rayon::prelude::*;
        segments.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rhos: Vec<CMat> = segments.iter().map(run).collect();

    let d = 1 << n;
    let mut sum = CMat::zeros(d, d);
    let mut fids = Vec::with_capacity(rhos.len());
    for r in &rhos {
        sum += r;
        fids.push(overlap(&target, r));
    }
    let rho = sum / C64::new(realizations as f64, 0.0);
    let fidelity = overlap(&target, &rho);
    Ok(RunResult {
        rho: DensityMatrix { n_photons: n, rho },
        fidelity,
        std_error: batch_std_error(&fids, noise.spec.segments_per_record),
        realizations,
    })
}

/// Standard error of the mean from means over consecutive batches of `batch` values.
fn batch_std_error(values: &[f64], batch: usize) -> f64 {
    let means: Vec<f64> = values
        .chunks(batch.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let k = means.len();
    if k < 2 {
        return 0.0;
    }
    let m = means.iter().sum::<f64>() / k as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

/// Protocol under emitter dephasing only.
pub fn dephased_protocol_run(
    steps: &[Step],
    noise: &OneOverF,
    realizations: usize,
    durations: &Durations,
) -> Result<DensityMatrix> {
    if noise.amplitude.is_none() {
        return Err(Error::Uncalibrated);
    }
    Ok(simulate(
        steps,
        &ChannelStack::none(),
        Some(noise),
        realizations,
        durations,
    )?
    .rho)
}

/// Inputs of the infidelity budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub target: Target,
    pub channels: ChannelStack,
    pub noise: OneOverFSpec,
    pub realizations: usize,
    pub durations: Durations,
    /// Round-trip delay used to place the feedback steps.
    pub tau_d: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            target: Target::Cluster42d,
            channels: ChannelStack::default(),
            noise: OneOverFSpec::default(),
            realizations: 2000,
            durations: Durations::default(),
            tau_d: 234e-9,
        }
    }
}

/// Per-channel infidelities and the combined fidelity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub target: String,
    pub seed: u64,
    pub realizations: usize,
    pub t2_star: f64,
    /// Infidelity with only that channel active.
    pub isolated: BTreeMap<String, f64>,
    /// Fidelity drop when the channel is added, in the order dephasing → loss → control.
    pub marginal: BTreeMap<String, f64>,
    pub combined_fidelity: f64,
    pub combined_std_error: f64,
    pub dephasing_std_error: f64,
    /// |F_all − (1 − Σ isolated)|.
    pub additivity_gap: f64,
}

/// Schedule of a target with feedback aligned to photon returns.
pub fn timed_circuit(target: Target, durations: &Durations, tau_d: f64) -> Result<Vec<Step>> {
    align_feedback(&circuit(target), durations, tau_d)
}

/// The target state generated with every channel and the dephasing noise active.
pub fn noisy_state(cfg: &BudgetConfig) -> Result<RunResult> {
    cfg.channels.validate()?;
    let steps = timed_circuit(cfg.target, &cfg.durations, cfg.tau_d)?;
    let noise = cfg.noise.calibrate()?;
    simulate(
        &steps,
        &cfg.channels,
        Some(&noise),
        cfg.realizations,
        &cfg.durations,
    )
}

pub fn error_budget(cfg: &BudgetConfig) -> Result<BudgetReport> {
    cfg.channels.validate()?;
    let steps = timed_circuit(cfg.target, &cfg.durations, cfg.tau_d)?;
    let noise = cfg.noise.calibrate()?;
    let ch = &cfg.channels;
    let loss_only = ChannelStack {
        loss: ch.loss,
        ..ChannelStack::none()
    };
    let control_only = ChannelStack {
        loss: 0.0,
        ..ch.clone()
    };
    let r = cfg.realizations;
    let d = &cfg.durations;
    let deph = simulate(&steps, &ChannelStack::none(), Some(&noise), r, d)?;
    let loss = simulate(&steps, &loss_only, None, 1, d)?;
    let control = simulate(&steps, &control_only, None, 1, d)?;
    let deph_loss = simulate(&steps, &loss_only, Some(&noise), r, d)?;
    let all = simulate(&steps, ch, Some(&noise), r, d)?;

    let isolated = BTreeMap::from([
        ("dephasing".to_string(), 1.0 - deph.fidelity),
        ("loss".to_string(), 1.0 - loss.fidelity),
        ("control".to_string(), 1.0 - control.fidelity),
    ]);
    let marginal = BTreeMap::from([
        ("dephasing".to_string(), 1.0 - deph.fidelity),
        ("loss".to_string(), deph.fidelity - deph_loss.fidelity),
        ("control".to_string(), deph_loss.fidelity - all.fidelity),
    ]);
    let sum: f64 = isolated.values().sum();
    Ok(BudgetReport {
        target: cfg.target.name().to_string(),
        seed: cfg.noise.seed,
        realizations: r,
        t2_star: cfg.noise.t2_star,
        isolated,
        marginal,
        combined_fidelity: all.fidelity,
        combined_std_error: all.std_error,
        dephasing_std_error: deph.std_error,
        additivity_gap: (all.fidelity - (1.0 - sum)).abs(),
    })
}
