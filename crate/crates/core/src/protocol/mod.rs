//! Ideal-circuit layer: schedules over a three-level emitter and single-rail time-bin
//! photons, the published target states, stabilizers and fidelities.
//!
//! Basis index = `level · 2ⁿ + bits`, with photon 1 the most significant bit.

mod circuits;
mod gate;
mod schedule;
mod states;

pub use circuits::{circuit, target_graph, target_state, Target};
pub use gate::{step_gate, Gate};
pub use schedule::{align_feedback, timeline, validate, Durations, MirrorGate, Step, Timed};
pub use states::{
    fidelity, fix_gauge, graph_state, pauli_expectation, stabilizer_expectations, DensityMatrix,
    Gauge, Graph, PureState, StateExport,
};

use crate::dynamics::Transition;
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64, ONE, ZERO};

/// Emitter levels.
pub const G: usize = 0;
pub const E: usize = 1;
pub const F: usize = 2;

/// Population outside |g⟩ tolerated when the emitter is declared reset.
pub const RESET_TOLERANCE: f64 = 1e-9;

/// Bit mask of photon `k` (1-based) in an `n`-photon register.
pub fn photon_bit(n: usize, k: usize) -> usize {
    1 << (n - k)
}

/// Joint emitter ⊗ photon amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub n_photons: usize,
    pub amps: CVec,
}

impl JointState {
    /// Emitter in |g⟩, all time bins empty.
    pub fn vacuum(n_photons: usize) -> Self {
        let mut amps = CVec::zeros(3 << n_photons);
        amps[0] = ONE;
        Self { n_photons, amps }
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// Population of emitter level `level`.
    pub fn level_population(&self, level: usize) -> f64 {
        let d = 1 << self.n_photons;
        self.amps.rows(level * d, d).norm_squared()
    }

    /// Photonic state once the emitter has been returned to |g⟩.
    pub fn photonic(&self) -> Result<PureState> {
        let leak = 1.0 - self.level_population(G) / self.amps.norm_squared();
        if leak > RESET_TOLERANCE {
            return Err(Error::EmitterNotReset { leak });
        }
        let d = 1 << self.n_photons;
        let mut amps: Vec<C64> = self.amps.rows(0, d).iter().copied().collect();
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|z| *z /= norm);
        Ok(PureState {
            n_photons: self.n_photons,
            amps,
        })
    }

    /// ⟨a_k⟩ of photon `k` in the joint state.
    pub fn photon_moment(&self, k: usize) -> C64 {
        let n = self.n_photons;
        let bit = photon_bit(n, k);
        let d = 1 << n;
        let mut s = ZERO;
        for level in 0..3 {
            for bits in (0..d).filter(|b| b & bit == 0) {
                s += self.amps[level * d + bits].conj() * self.amps[level * d + (bits | bit)];
            }
        }
        s
    }
}

/// Unitary of one step on the (3·2ⁿ)-dimensional register; `None` for steps that act
/// trivially on the ideal state (idle, mirror gates).
///
/// Emission is represented by the swap |f,0_k⟩ ↔ |e,1_k⟩, which agrees with the
/// emission isometry on states where time bin k is still empty.
pub fn step_unitary(step: &Step, n_photons: usize) -> Option<CMat> {
    let d = 1 << n_photons;
    let dim = 3 * d;
    match step {
        Step::Rotation {
            transition,
            angle,
            phase,
        } => {
            let (a, b) = match transition {
                Transition::Ge => (G, E),
                Transition::Ef => (E, F),
            };
            let r = rotation(*angle, *phase);
            let mut u = CMat::identity(dim, dim);
            for bits in 0..d {
                let (i, j) = (a * d + bits, b * d + bits);
                u[(i, i)] = r[0][0];
                u[(i, j)] = r[0][1];
                u[(j, i)] = r[1][0];
                u[(j, j)] = r[1][1];
            }
            Some(u)
        }
        Step::Emit { photon, .. } => {
            let bit = photon_bit(n_photons, *photon);
            let mut u = CMat::identity(dim, dim);
            for bits in (0..d).filter(|b| b & bit == 0) {
                let (f0, e1) = (F * d + bits, E * d + (bits | bit));
                u[(f0, f0)] = ZERO;
                u[(e1, e1)] = ZERO;
                u[(f0, e1)] = ONE;
                u[(e1, f0)] = ONE;
            }
            Some(u)
        }
        Step::CzFeedback { photon } => {
            let bit = photon_bit(n_photons, *photon);
            let mut u = CMat::identity(dim, dim);
            for bits in (0..d).filter(|b| b & bit != 0) {
                u[(E * d + bits, E * d + bits)] = -ONE;
            }
            Some(u)
        }
        Step::Mirror { .. } | Step::Idle { .. } => None,
    }
}

/// R(θ, φ) = exp(−iθ/2 (cos φ σx + sin φ σy)) on a two-level subspace.
pub fn rotation(angle: f64, phase: f64) -> [[C64; 2]; 2] {
    let (s, c) = (0.5 * angle).sin_cos();
    let m = C64::new(0.0, -s);
    [
        [C64::new(c, 0.0), m * C64::from_polar(1.0, -phase)],
        [m * C64::from_polar(1.0, phase), C64::new(c, 0.0)],
    ]
}

/// Run a schedule on the ideal register, returning the joint state.
pub fn compile_and_run(steps: &[Step]) -> Result<JointState> {
    let n = validate(steps)?;
    let mut state = JointState::vacuum(n);
    for step in steps {
        if let Some(g) = step_gate(step, n) {
            g.apply_vec(n, state.amps.as_mut_slice());
        }
    }
    Ok(state)
}

/// Phase of ⟨a_k⟩ for every photon as a function of a virtual-Z offset added to all ef
/// rotations. Entries are `None` where |⟨a_k⟩| vanishes for the schedule.
pub fn virtual_z_sweep(steps: &[Step], offsets: &[f64]) -> Result<Vec<Vec<Option<f64>>>> {
    let n = validate(steps)?;
    offsets
        .iter()
        .map(|&off| {
            let shifted: Vec<Step> = steps
                .iter()
                .map(|s| match s {
                    Step::Rotation {
                        transition: Transition::Ef,
                        angle,
                        phase,
                    } => Step::Rotation {
                        transition: Transition::Ef,
                        angle: *angle,
                        phase: phase + off,
                    },
                    other => other.clone(),
                })
                .collect();
            let st = compile_and_run(&shifted)?;
            Ok((1..=n)
                .map(|k| {
                    let m = st.photon_moment(k);
                    (m.norm() > 1e-9).then(|| m.arg())
                })
                .collect())
        })
        .collect()
}
