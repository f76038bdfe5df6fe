use super::schedule::Step;
use super::{photon_bit, rotation, E, F, G};
use crate::dynamics::Transition;
use crate::linalg::{CMat, C64, ONE};

/// Sparse form of a register operation, applied in O(dim) to vectors and O(dim²) to
/// density matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    /// 2×2 block `m` on emitter levels (a, b), identity elsewhere.
    Levels {
        a: usize,
        b: usize,
        m: [[C64; 2]; 2],
    },
    /// U|i⟩ = phase[i] |perm[i]⟩.
    Monomial { perm: Vec<usize>, phase: Vec<C64> },
}

impl Gate {
    pub fn diagonal(phase: Vec<C64>) -> Self {
        Gate::Monomial {
            perm: (0..phase.len()).collect(),
            phase,
        }
    }

    /// Phase e^{-i w_l φ} on emitter level l with weights (0, 1, 2) for (g, e, f).
    pub fn emitter_phase(n_photons: usize, phi: f64) -> Self {
        let d = 1 << n_photons;
        let phase = (0..3 * d)
            .map(|i| C64::from_polar(1.0, -((i / d) as f64) * phi))
            .collect();
        Gate::diagonal(phase)
    }

    pub fn apply_vec(&self, n_photons: usize, v: &mut [C64]) {
        let d = 1 << n_photons;
        match self {
            Gate::Levels { a, b, m } => {
                for bits in 0..d {
                    let (i, j) = (a * d + bits, b * d + bits);
                    let (x, y) = (v[i], v[j]);
                    v[i] = m[0][0] * x + m[0][1] * y;
                    v[j] = m[1][0] * x + m[1][1] * y;
                }
            }
            Gate::Monomial { perm, phase } => {
                let old = v.to_vec();
                for (i, &p) in perm.iter().enumerate() {
                    v[p] = phase[i] * old[i];
                }
            }
        }
    }

    /// ρ → U ρ U†.
    pub fn apply_dm(&self, n_photons: usize, rho: &mut CMat) {
        let d = 1 << n_photons;
        let dim = rho.nrows();
        match self {
            Gate::Levels { a, b, m } => {
                for bits in 0..d {
                    let (i, j) = (a * d + bits, b * d + bits);
                    for c in 0..dim {
                        let (x, y) = (rho[(i, c)], rho[(j, c)]);
                        rho[(i, c)] = m[0][0] * x + m[0][1] * y;
                        rho[(j, c)] = m[1][0] * x + m[1][1] * y;
                    }
                    for r in 0..dim {
                        let (x, y) = (rho[(r, i)], rho[(r, j)]);
                        rho[(r, i)] = x * m[0][0].conj() + y * m[0][1].conj();
                        rho[(r, j)] = x * m[1][0].conj() + y * m[1][1].conj();
                    }
                }
            }
            Gate::Monomial { perm, phase } => {
                let old = rho.clone();
                for i in 0..dim {
                    for j in 0..dim {
                        rho[(perm[i], perm[j])] = phase[i] * old[(i, j)] * phase[j].conj();
                    }
                }
            }
        }
    }
}

/// Sparse gate of a schedule step; `None` for steps without ideal action.
pub fn step_gate(step: &Step, n_photons: usize) -> Option<Gate> {
    let d = 1 << n_photons;
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
            Some(Gate::Levels {
                a,
                b,
                m: rotation(*angle, *phase),
            })
        }
        Step::Emit { photon, .. } => {
            let bit = photon_bit(n_photons, *photon);
            let mut perm: Vec<usize> = (0..3 * d).collect();
            for bits in (0..d).filter(|b| b & bit == 0) {
                let (f0, e1) = (F * d + bits, E * d + (bits | bit));
                perm[f0] = e1;
                perm[e1] = f0;
            }
            Some(Gate::Monomial {
                perm,
                phase: vec![ONE; 3 * d],
            })
        }
        Step::CzFeedback { photon } => {
            let bit = photon_bit(n_photons, *photon);
            let phase = (0..3 * d)
                .map(|i| {
                    if i / d == E && (i % d) & bit != 0 {
                        -ONE
                    } else {
                        ONE
                    }
                })
                .collect();
            Some(Gate::diagonal(phase))
        }
        Step::Mirror { .. } | Step::Idle { .. } => None,
    }
}
