use super::{evolve, Control, Initial, LatticeSystem, OutputRecord, DEFAULT_STEP_FRACTION};
use crate::error::{Error, Result};
use crate::flux::Envelope;
use crate::linalg::{C64, ZERO};
use crate::units::{mhz, TWO_PI};
use crate::waveguide::{round_trip, wavevector, WaveguideSpec};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Emission with a shaped coupling envelope; ξ drops to zero after the envelope window.
pub fn emit_shaped(
    system: &LatticeSystem,
    envelope: &Envelope,
    horizon: f64,
    dt: Option<f64>,
) -> Result<OutputRecord> {
    let peak = envelope.peak();
    if peak > 1.0 {
        return Err(Error::Invalid {
            field: "envelope",
            reason: format!("sideband amplitude {peak:.4} exceeds unity"),
        });
    }
    let mut sys = system.clone();
    sys.xi = Control::envelope(envelope, 0.0, 0.0);
    evolve(&sys, &Initial::Emitter, horizon, dt)
}

/// Rise time t_R of an erf² envelope (δ = 0, window 2·t_R) whose emitted photon has the
/// requested power-spectrum FWHM, found by bisection (the width falls monotonically with t_R).
pub fn rise_time_for_bandwidth(
    system: &LatticeSystem,
    bandwidth_hz: f64,
    xi_max: f64,
) -> Result<f64> {
    let tau = round_trip(&system.waveguide);
    let width = |t_r: f64| -> Result<f64> {
        let env =
            crate::flux::erf_envelope(t_r, 0.0, xi_max, 2.0 * t_r, (t_r / 500.0).min(0.1e-9))?;
        let horizon = 2.0 * t_r + 0.5 * tau;
        let rec = emit_shaped(system, &env, horizon, None)?;
        let peak = rec
            .peak_time(0.0, horizon)
            .ok_or_else(|| Error::Missing("no emission".into()))?;
        Ok(rec.power_spectrum_fwhm(0.0, (peak + 0.5 * tau).min(horizon)))
    };
    let (mut lo, mut hi) = (2e-9, 400e-9);
    if width(hi)? > bandwidth_hz || width(lo)? < bandwidth_hz {
        return Err(Error::Domain(format!(
            "bandwidth {bandwidth_hz:.3e} Hz not reachable with rise times in [2, 400] ns"
        )));
    }
    while hi - lo > 0.05e-9 {
        let mid = 0.5 * (lo + hi);
        if width(mid)? > bandwidth_hz {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorScatter {
    pub with_mirror: OutputRecord,
    pub reference: OutputRecord,
    /// First-pass output energy with the mirror present relative to the mirror-free run.
    pub transmitted: f64,
    /// Time separating the first pass from later arrivals.
    pub cut: f64,
    pub first_pass_peak: f64,
    /// Peak of the output flux after `cut` in the mirror run (the released, reflected pulse).
    pub reflected_peak: Option<f64>,
}

impl MirrorScatter {
    pub fn delay(&self) -> Option<f64> {
        self.reflected_peak.map(|t| t - self.first_pass_peak)
    }
}

/// Emit a shaped photon toward the mirror; compare against the same run without the mirror.
pub fn mirror_scatter(
    system: &LatticeSystem,
    envelope: &Envelope,
    horizon: f64,
) -> Result<MirrorScatter> {
    if system.mirror.is_none() {
        return Err(Error::Missing("lattice has no mirror".into()));
    }
    let mut bare = system.clone();
    bare.mirror = None;
    // Same step for both runs so the comparison is sample-aligned.
    let dt = DEFAULT_STEP_FRACTION / system.max_rate().0.max(bare.max_rate().0);
    let reference = emit_shaped(&bare, envelope, horizon, Some(dt))?;
    let with_mirror = emit_shaped(system, envelope, horizon, Some(dt))?;
    let tau = round_trip(&system.waveguide);
    let first_pass_peak = reference
        .peak_time(0.0, horizon.min(envelope.duration() + tau))
        .ok_or_else(|| Error::Missing("no output flux in reference run".into()))?;
    let cut = first_pass_peak + 0.5 * tau;
    let e_ref = reference.energy_between(0.0, cut);
    if e_ref <= 0.0 {
        return Err(Error::Missing(
            "reference run emitted nothing before the cut".into(),
        ));
    }
    let transmitted = with_mirror.energy_between(0.0, cut) / e_ref;
    let reflected_peak = if horizon > cut {
        with_mirror.peak_time(cut, horizon)
    } else {
        None
    };
    Ok(MirrorScatter {
        with_mirror,
        reference,
        transmitted,
        cut,
        first_pass_peak,
        reflected_peak,
    })
}

/// Time-independent tight-binding chain with optional loaded site, integrated by RK4.
struct Chain {
    diag: Vec<C64>,
    hops: Vec<(usize, usize, f64)>,
    load: Option<(usize, f64)>,
}

impl Chain {
    fn uniform(n: usize, j: f64) -> Self {
        Self {
            diag: vec![ZERO; n],
            hops: (0..n - 1).map(|i| (i, i + 1, j)).collect(),
            load: None,
        }
    }

    fn rate(&self) -> f64 {
        let mut row: Vec<f64> = self.diag.iter().map(|d| d.norm()).collect();
        for &(a, b, h) in &self.hops {
            row[a] += h.abs();
            row[b] += h.abs();
        }
        row.into_iter().fold(0.0, f64::max)
    }

    fn apply(&self, psi: &[C64], out: &mut [C64]) {
        for (o, (d, p)) in out.iter_mut().zip(self.diag.iter().zip(psi)) {
            *o = d * p;
        }
        for &(a, b, h) in &self.hops {
            out[a] += h * psi[b];
            out[b] += h * psi[a];
        }
        for o in out.iter_mut() {
            *o *= -C64::i();
        }
    }

    /// Propagate for `horizon`; returns the excitation absorbed by the load.
    fn run(&self, psi: &mut [C64], horizon: f64) -> f64 {
        let n = psi.len();
        let steps = (horizon * self.rate() / DEFAULT_STEP_FRACTION)
            .ceil()
            .max(1.0) as usize;
        let dt = horizon / steps as f64;
        let (load_site, kappa) = self.load.unwrap_or((0, 0.0));
        let mut k = [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]];
        let mut tmp = vec![ZERO; n];
        let mut absorbed = 0.0;
        for _ in 0..steps {
            let f0 = kappa * psi[load_site].norm_sqr();
            self.apply(psi, &mut k[0]);
            for i in 0..n {
                tmp[i] = psi[i] + 0.5 * dt * k[0][i];
            }
            let f1 = kappa * tmp[load_site].norm_sqr();
            self.apply(&tmp, &mut k[1]);
            for i in 0..n {
                tmp[i] = psi[i] + 0.5 * dt * k[1][i];
            }
            let f2 = kappa * tmp[load_site].norm_sqr();
            self.apply(&tmp, &mut k[2]);
            for i in 0..n {
                tmp[i] = psi[i] + dt * k[2][i];
            }
            let f3 = kappa * tmp[load_site].norm_sqr();
            self.apply(&tmp, &mut k[3]);
            for i in 0..n {
                psi[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
            }
            absorbed += dt / 6.0 * (f0 + 2.0 * f1 + 2.0 * f2 + f3);
        }
        absorbed
    }
}

/// Normalised Gaussian wavepacket on `n` sites centred at `x0` with carrier wavevector `k0`.
/// `bandwidth` is the FWHM of the power spectrum in Hz, `v` the group velocity in sites/s.
fn wavepacket(n: usize, x0: f64, k0: f64, bandwidth: f64, v: f64) -> Vec<C64> {
    let sigma_x = v * 2.0 * (2.0 * 2f64.ln()).sqrt() / (2.0 * TWO_PI * bandwidth);
    let mut psi: Vec<C64> = (0..n)
        .map(|i| {
            let x = i as f64 - x0;
            C64::from_polar((-x * x / (4.0 * sigma_x * sigma_x)).exp(), k0 * i as f64)
        })
        .collect();
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in psi.iter_mut() {
        *z /= norm;
    }
    psi
}

fn packet_width(bandwidth: f64, v: f64) -> f64 {
    v * 2.0 * (2.0 * 2f64.ln()).sqrt() / (2.0 * TWO_PI * bandwidth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmitterLevel {
    G,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CzOptions {
    /// Couple the ge transition (detuned by |η| above the photon) when the emitter is in g.
    pub ge_spectator: bool,
    pub anharmonicity: f64,
    /// Multiplier on the ge spectator coupling (e.g. the sideband amplitude if modulated).
    pub spectator_scale: f64,
}

impl Default for CzOptions {
    fn default() -> Self {
        Self {
            ge_spectator: false,
            anharmonicity: mhz(-273.0),
            spectator_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CzScatter {
    pub overlap: C64,
    pub phase: f64,
    pub magnitude: f64,
}

/// Mode-matched overlap of a pulse reflected off the emitter end against the same pulse
/// reflected off a bare end. The emitter sits at the end of a long uniform lattice so that
/// the reflected packet is compared in the bulk, away from taper and load.
pub fn cz_phase(
    spec: &WaveguideSpec,
    g_uc: f64,
    level: EmitterLevel,
    bandwidth_hz: f64,
    opts: &CzOptions,
) -> Result<CzScatter> {
    spec.validate()?;
    if !(bandwidth_hz > 0.0) {
        return Err(Error::Invalid {
            field: "bandwidth",
            reason: "must be positive".into(),
        });
    }
    let j = spec.hop_j;
    let v = 2.0 * j;
    let sigma = packet_width(bandwidth_hz, v);
    let x0 = (5.0 * sigma).max(40.0).ceil();
    let cells = (2.0 * x0) as usize + 20;
    // Site 0 is the emitter excitation, sites 1..=cells the lattice.
    let mut chain = Chain::uniform(cells + 1, j);
    chain.hops[0].2 = 0.0;
    match level {
        EmitterLevel::E => {
            chain.hops[0].2 = std::f64::consts::SQRT_2 * g_uc;
        }
        EmitterLevel::G if opts.ge_spectator => {
            chain.hops[0].2 = g_uc * opts.spectator_scale;
            chain.diag[0] = C64::new(opts.anharmonicity.abs(), 0.0);
        }
        EmitterLevel::G => {}
    }
    let mut reference = Chain::uniform(cells + 1, j);
    reference.hops[0].2 = 0.0;

    // k = π/2 with +J hopping moves toward decreasing index, i.e. toward the emitter.
    let mut packet = vec![ZERO];
    packet.extend(wavepacket(
        cells,
        x0,
        std::f64::consts::FRAC_PI_2,
        bandwidth_hz,
        v,
    ));
    let horizon = 2.0 * x0 / v;
    let mut psi = packet.clone();
    let mut psi_ref = packet;
    chain.run(&mut psi, horizon);
    reference.run(&mut psi_ref, horizon);
    let overlap: C64 = psi_ref[1..]
        .iter()
        .zip(&psi[1..])
        .map(|(r, p)| r.conj() * p)
        .sum();
    Ok(CzScatter {
        overlap,
        phase: overlap.arg(),
        magnitude: overlap.norm(),
    })
}

/// Energy transmitted past a side-coupled two-level mirror in a long uniform lattice, for a
/// Gaussian pulse of the given power-spectrum FWHM at band centre.
pub fn mirror_transmission(
    spec: &WaveguideSpec,
    g_mirror: f64,
    detuning: f64,
    bandwidth_hz: f64,
    from_left: bool,
) -> Result<f64> {
    spec.validate()?;
    let j = spec.hop_j;
    let v = 2.0 * j;
    let sigma = packet_width(bandwidth_hz, v);
    let margin = (6.0 * sigma).max(40.0).ceil() as usize;
    let cells = 4 * margin + 1;
    let mid = 2 * margin;
    // Last index is the mirror, side-coupled to the middle cell.
    let mut chain = Chain::uniform(cells + 1, j);
    chain.hops[cells - 1] = (mid, cells, g_mirror);
    chain.diag[cells] = C64::new(detuning, 0.0);
    let (x0, k0) = if from_left {
        (margin as f64, -std::f64::consts::FRAC_PI_2)
    } else {
        ((cells - 1 - margin) as f64, std::f64::consts::FRAC_PI_2)
    };
    let mut psi = wavepacket(cells, x0, k0, bandwidth_hz, v);
    psi.push(ZERO);
    chain.run(&mut psi, 2.0 * margin as f64 / v);
    let far: f64 = if from_left {
        psi[mid + 1..cells].iter().map(|z| z.norm_sqr()).sum()
    } else {
        psi[..mid].iter().map(|z| z.norm_sqr()).sum()
    };
    Ok(far)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperReport {
    pub transmittance: f64,
    pub db: f64,
    /// Monochromatic transmittance at the carrier.
    pub steady_state: f64,
}

/// Monochromatic transmittance 1 − |r|² of the two-site taper and load terminating a
/// semi-infinite array, at detuning `offset` from ω_p.
pub fn steady_state_transmittance(spec: &WaveguideSpec, offset: f64) -> Result<f64> {
    let j = spec.hop_j;
    wavevector(spec, spec.passband_center + offset)?;
    // With +J hopping e^{ikn} travels toward the taper for k ∈ (−π, 0).
    let k = -(offset / (2.0 * j)).acos();
    let w = C64::new(offset, 0.0);
    let eik = C64::from_polar(1.0, k);
    let m = Matrix3::new(
        w - j * eik,
        C64::new(-j, 0.0),
        ZERO,
        C64::new(-j, 0.0),
        w - spec.taper_d1,
        C64::new(-spec.taper_j1, 0.0),
        ZERO,
        C64::new(-spec.taper_j1, 0.0),
        w - C64::new(spec.taper_d2, -0.5 * spec.output_load),
    );
    let b = Vector3::new(j * eik.conj() - w, C64::new(j, 0.0), ZERO);
    let sol = m
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("taper scattering equations".into()))?;
    Ok(1.0 - sol[0].norm_sqr())
}

/// Energy transmittance of the taper for a Gaussian pulse of the given power-spectrum FWHM.
pub fn taper_transmittance(
    spec: &WaveguideSpec,
    bandwidth_hz: f64,
    offset: f64,
) -> Result<TaperReport> {
    spec.validate()?;
    let k0 = wavevector(spec, spec.passband_center + offset)?;
    let j = spec.hop_j;
    let v = 2.0 * j * k0.sin();
    let sigma = packet_width(bandwidth_hz, v);
    let margin = (6.0 * sigma).max(40.0).ceil();
    let cells = (2.0 * margin) as usize + 20;
    let n = cells + 2;
    let mut chain = Chain::uniform(n, j);
    let (a, b) = (cells, cells + 1);
    chain.hops[a - 1].2 = j;
    chain.hops[a].2 = spec.taper_j1;
    chain.diag[a] = C64::new(spec.taper_d1, 0.0);
    chain.diag[b] = C64::new(spec.taper_d2, -0.5 * spec.output_load);
    chain.load = Some((b, spec.output_load));
    // e^{−ik₀n} propagates toward increasing index (the taper).
    let mut psi = wavepacket(cells, margin, -k0, bandwidth_hz, v);
    psi.extend([ZERO, ZERO]);
    let horizon = (cells as f64 - margin + 4.0 * sigma + 20.0) / v;
    let absorbed = chain.run(&mut psi, horizon);
    Ok(TaperReport {
        transmittance: absorbed,
        db: 10.0 * absorbed.log10(),
        steady_state: steady_state_transmittance(spec, offset)?,
    })
}
