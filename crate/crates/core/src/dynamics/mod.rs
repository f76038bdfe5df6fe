//! Single-excitation time-domain model of emitter + resonator array + taper +
//! mirror, integrated with fixed-step RK4 in the frame rotating at ω_p.

mod chevron;
mod record;
mod scatter;

pub use chevron::{chevron, fit_chevron, ChevronFit, ChevronMap, ChevronModel};
pub use record::OutputRecord;
pub use scatter::{
    cz_phase, emit_shaped, mirror_scatter, mirror_transmission, rise_time_for_bandwidth,
    steady_state_transmittance, taper_transmittance, CzOptions, CzScatter, EmitterLevel,
    MirrorScatter, TaperReport,
};

use crate::error::{Error, Result};
use crate::flux::Envelope;
use crate::linalg::{C64, ZERO};
use crate::units::mhz;
use crate::waveguide::WaveguideSpec;
use serde::{Deserialize, Serialize};

/// Default step as a fraction of 1/(largest Gershgorin row rate).
pub const DEFAULT_STEP_FRACTION: f64 = 0.02;
/// Coarsest step accepted, same units.
pub const MAX_STEP_FRACTION: f64 = 0.05;

/// Time-dependent scalar control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Control {
    Constant(f64),
    /// Linearly interpolated samples starting at `t0`; `head` before, `tail` after.
    Samples {
        t0: f64,
        dt: f64,
        values: Vec<f64>,
        head: f64,
        tail: f64,
    },
    /// Piecewise constant: value of the last `(start, value)` with start ≤ t (first value before).
    Steps(Vec<(f64, f64)>),
}

impl Control {
    pub fn envelope(env: &Envelope, t0: f64, tail: f64) -> Self {
        Control::Samples {
            t0,
            dt: env.dt,
            values: env.values.clone(),
            head: 0.0,
            tail,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            Control::Constant(v) => *v,
            Control::Samples {
                t0,
                dt,
                values,
                head,
                tail,
            } => {
                if t < *t0 || values.is_empty() {
                    return *head;
                }
                let x = (t - t0) / dt;
                let i = x.floor() as usize;
                if i + 1 >= values.len() {
                    if i + 1 == values.len() && x <= i as f64 {
                        return values[i];
                    }
                    return *tail;
                }
                let w = x - i as f64;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
            Control::Steps(steps) => {
                let mut v = steps.first().map(|s| s.1).unwrap_or(0.0);
                for &(start, val) in steps {
                    if t >= start {
                        v = val;
                    } else {
                        break;
                    }
                }
                v
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Control::Constant(v) => v.abs(),
            Control::Samples {
                values, head, tail, ..
            } => values
                .iter()
                .fold(head.abs().max(tail.abs()), |m, v| m.max(v.abs())),
            Control::Steps(s) => s.iter().fold(0.0, |m, v| m.max(v.1.abs())),
        }
    }
}

/// Which emitter transition radiates: ge (matrix element 1) or ef (√2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transition {
    Ge,
    Ef,
}

impl Transition {
    pub fn matrix_element(self) -> f64 {
        match self {
            Transition::Ge => 1.0,
            Transition::Ef => std::f64::consts::SQRT_2,
        }
    }
}

/// Emitter (site 0), array cells 1..=N, taper sites N+1 and N+2 (the latter loaded by κ)
/// and a side-coupled mirror (site N+3) attached to cell N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSystem {
    pub waveguide: WaveguideSpec,
    pub g_uc: f64,
    pub g_nuc: f64,
    pub transition: Transition,
    /// Emitter sideband detuning from ω_p.
    pub emitter_detuning: Control,
    /// Sideband amplitude ξ(t) scaling the emitter couplings.
    pub xi: Control,
    pub mirror: Option<MirrorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorSpec {
    pub g_uc: f64,
    pub detuning: Control,
}

impl LatticeSystem {
    /// Fitted device: g_uc/2π = 35.16 MHz, g_nuc/2π = 2.27 MHz, ef transition, no mirror.
    pub fn fitted() -> Self {
        Self {
            waveguide: WaveguideSpec::fitted(),
            g_uc: mhz(35.16),
            g_nuc: mhz(2.27),
            transition: Transition::Ef,
            emitter_detuning: Control::Constant(0.0),
            xi: Control::Constant(0.0),
            mirror: None,
        }
    }

    pub fn with_mirror(mut self, g_uc: f64, detuning: Control) -> Self {
        self.mirror = Some(MirrorSpec { g_uc, detuning });
        self
    }

    pub fn dim(&self) -> usize {
        self.waveguide.n_cells + 4
    }

    pub fn taper_a(&self) -> usize {
        self.waveguide.n_cells + 1
    }

    pub fn taper_b(&self) -> usize {
        self.waveguide.n_cells + 2
    }

    pub fn mirror_site(&self) -> usize {
        self.waveguide.n_cells + 3
    }

    /// Largest Gershgorin row bound of |H| over the controls' ranges, with the name of its source.
    pub fn max_rate(&self) -> (f64, &'static str) {
        let w = &self.waveguide;
        let c = self.transition.matrix_element() * self.xi.max_abs();
        let mut rows: Vec<(f64, &'static str)> = vec![
            (
                self.emitter_detuning.max_abs() + c * (self.g_uc + self.g_nuc),
                "emitter coupling/detuning",
            ),
            (2.0 * w.hop_j + c * self.g_uc, "hop_J"),
            (w.taper_d1.abs() + w.hop_j + w.taper_j1, "taper_d1/taper_J1"),
            (
                C64::new(w.taper_d2, -0.5 * w.output_load).norm() + w.taper_j1,
                "output_load κ/taper_d2",
            ),
        ];
        if let Some(m) = &self.mirror {
            rows.push((m.detuning.max_abs() + m.g_uc, "mirror detuning"));
            rows.push((2.0 * w.hop_j + m.g_uc, "mirror coupling"));
        }
        rows.into_iter().fold(
            (0.0, "hop_J"),
            |best, r| if r.0 > best.0 { r } else { best },
        )
    }

    /// Resolve the integration step: default fraction of the fastest rate, or check a requested one.
    pub fn step(&self, requested: Option<f64>) -> Result<f64> {
        let (rate, name) = self.max_rate();
        let limit = MAX_STEP_FRACTION / rate;
        match requested {
            None => Ok(DEFAULT_STEP_FRACTION / rate),
            Some(dt) if dt > 0.0 && dt <= limit => Ok(dt),
            Some(dt) => Err(Error::StepTooCoarse {
                dt,
                rate,
                rate_name: name,
                limit,
            }),
        }
    }

    /// dψ/dt = −i H(t) ψ.
    fn deriv(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        let w = &self.waveguide;
        let n = w.n_cells;
        let j = w.hop_j;
        let xi = self.xi.at(t) * self.transition.matrix_element();
        let ge = xi * self.g_uc;
        let gn = xi * self.g_nuc;
        let de = self.emitter_detuning.at(t);
        let mi = -C64::i();

        // H ψ
        out[0] = de * psi[0] + ge * psi[1] + gn * psi[2];
        for c in 1..=n {
            let left = if c == 1 { ge * psi[0] } else { j * psi[c - 1] };
            // cell N hops onto taper site A with the bulk rate
            out[c] = left + j * psi[c + 1];
        }
        out[2] += gn * psi[0];
        let a = n + 1;
        let b = n + 2;
        out[a] = w.taper_d1 * psi[a] + j * psi[n] + w.taper_j1 * psi[b];
        out[b] = C64::new(w.taper_d2, -0.5 * w.output_load) * psi[b] + w.taper_j1 * psi[a];
        let m = n + 3;
        if let Some(mir) = &self.mirror {
            let dm = mir.detuning.at(t);
            out[m] = dm * psi[m] + mir.g_uc * psi[n];
            out[n] += mir.g_uc * psi[m];
        } else {
            out[m] = ZERO;
        }
        for v in out.iter_mut() {
            *v *= mi;
        }
    }
}

/// Initial single-excitation placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Initial {
    Emitter,
    Site(usize),
    Amplitudes(Vec<C64>),
}

/// Propagate the non-Hermitian single-excitation Hamiltonian over [0, horizon].
pub fn evolve(
    system: &LatticeSystem,
    initial: &Initial,
    horizon: f64,
    dt: Option<f64>,
) -> Result<OutputRecord> {
    system.waveguide.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Invalid {
            field: "horizon",
            reason: format!("must be positive, got {horizon}"),
        });
    }
    let dt = system.step(dt)?;
    let dim = system.dim();
    let mut psi = vec![ZERO; dim];
    match initial {
        Initial::Emitter => psi[0] = C64::new(1.0, 0.0),
        Initial::Site(i) if *i < dim => psi[*i] = C64::new(1.0, 0.0),
        Initial::Site(i) => {
            return Err(Error::Dimension {
                expected: dim,
                got: *i,
            })
        }
        Initial::Amplitudes(a) if a.len() == dim => psi.copy_from_slice(a),
        Initial::Amplitudes(a) => {
            return Err(Error::Dimension {
                expected: dim,
                got: a.len(),
            })
        }
    }
    let steps = (horizon / dt).ceil() as usize;
    let dt = horizon / steps as f64;
    let kappa = system.waveguide.output_load;
    let b = system.taper_b();
    let m = system.mirror_site();

    let mut rec = OutputRecord::with_capacity(steps + 1, dt);
    let initial_norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    rec.initial_norm = initial_norm;
    let mut emitted = 0.0;
    rec.push(0.0, &psi, kappa, b, m, emitted);

    let mut k1 = vec![ZERO; dim];
    let mut k2 = vec![ZERO; dim];
    let mut k3 = vec![ZERO; dim];
    let mut k4 = vec![ZERO; dim];
    let mut tmp = vec![ZERO; dim];
    for s in 0..steps {
        let t = s as f64 * dt;
        let f0 = kappa * psi[b].norm_sqr();
        system.deriv(t, &psi, &mut k1);
        for i in 0..dim {
            tmp[i] = psi[i] + 0.5 * dt * k1[i];
        }
        let f1 = kappa * tmp[b].norm_sqr();
        system.deriv(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = psi[i] + 0.5 * dt * k2[i];
        }
        let f2 = kappa * tmp[b].norm_sqr();
        system.deriv(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = psi[i] + dt * k3[i];
        }
        let f3 = kappa * tmp[b].norm_sqr();
        system.deriv(t + dt, &tmp, &mut k4);
        for i in 0..dim {
            psi[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        emitted += dt / 6.0 * (f0 + 2.0 * f1 + 2.0 * f2 + f3);
        rec.push(t + dt, &psi, kappa, b, m, emitted);
    }
    rec.final_state = psi;
    Ok(rec)
}
