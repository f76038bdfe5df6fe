use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ONE, ZERO};
use crate::protocol::{photon_bit, DensityMatrix, Gate, E, G};
use serde::{Deserialize, Serialize};

/// Incoherent error channels of the generation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelStack {
    /// Energy loss of each fed-back photon during its round trip.
    pub loss: f64,
    /// Emitter |e⟩ population at preparation.
    pub thermal_pop: f64,
    /// Probability that an emission leaves the excitation in |f⟩.
    pub residual_f: f64,
    /// Two-qubit depolarizing probability attached to each feedback CZ.
    pub cz_depolarizing: f64,
    /// Readout confusion C[i][j] = P(read i | true j), i, j ∈ {g, e}.
    pub confusion: [[f64; 2]; 2],
}

impl Default for ChannelStack {
    fn default() -> Self {
        Self {
            loss: 0.13,
            thermal_pop: 0.01,
            residual_f: 0.01,
            cz_depolarizing: 0.01,
            confusion: symmetric_confusion(0.976),
        }
    }
}

impl ChannelStack {
    pub fn none() -> Self {
        Self {
            loss: 0.0,
            thermal_pop: 0.0,
            residual_f: 0.0,
            cz_depolarizing: 0.0,
            confusion: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("loss", self.loss),
            ("thermal_pop", self.thermal_pop),
            ("residual_f", self.residual_f),
            ("cz_depolarizing", self.cz_depolarizing),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Invalid {
                    field: name,
                    reason: format!("must be in [0, 1), got {v}"),
                });
            }
        }
        for j in 0..2 {
            let col = self.confusion[0][j] + self.confusion[1][j];
            if (col - 1.0).abs() > 1e-12 || self.confusion[0][j] < 0.0 || self.confusion[1][j] < 0.0
            {
                return Err(Error::Invalid {
                    field: "confusion",
                    reason: format!("column {j} is not a probability vector (sum {col})"),
                });
            }
        }
        Ok(())
    }
}

/// Confusion matrix with equal assignment fidelity for both states.
pub fn symmetric_confusion(fidelity: f64) -> [[f64; 2]; 2] {
    [[fidelity, 1.0 - fidelity], [1.0 - fidelity, fidelity]]
}

/// Amplitude damping of photon `k` on a register with `levels` emitter levels (1 for a
/// purely photonic matrix). Kraus operators K₀ = diag(1, √(1−γ)), K₁ = √γ |0⟩⟨1|.
pub fn amplitude_damp(rho: &mut CMat, n_photons: usize, k: usize, gamma: f64) {
    if gamma == 0.0 {
        return;
    }
    let bit = photon_bit(n_photons, k);
    let dim = rho.nrows();
    let keep = (1.0 - gamma).sqrt();
    let old = rho.clone();
    for i in 0..dim {
        for j in 0..dim {
            let fi = if i & bit != 0 { keep } else { 1.0 };
            let fj = if j & bit != 0 { keep } else { 1.0 };
            rho[(i, j)] = old[(i, j)] * fi * fj;
        }
    }
    for i in (0..dim).filter(|i| i & bit == 0) {
        for j in (0..dim).filter(|j| j & bit == 0) {
            rho[(i, j)] += old[(i | bit, j | bit)] * gamma;
        }
    }
}

/// Two-qubit Pauli depolarizing channel on (emitter {g, e}) ⊗ photon k:
/// ρ → (1−p)ρ + p/15 Σ_{P≠II} PρP.
pub fn depolarize_emitter_photon(rho: &mut CMat, n_photons: usize, k: usize, p: f64) {
    if p == 0.0 {
        return;
    }
    let d = 1 << n_photons;
    let dim = 3 * d;
    let bit = photon_bit(n_photons, k);
    let acc0 = rho.clone();
    let mut acc = &acc0 * C64::new(1.0 - p, 0.0);
    for pe in 0..4 {
        for pp in 0..4 {
            if pe == 0 && pp == 0 {
                continue;
            }
            let mut perm: Vec<usize> = (0..dim).collect();
            let mut phase = vec![ONE; dim];
            for (i, (pm, ph)) in perm.iter_mut().zip(phase.iter_mut()).enumerate() {
                let (lvl, bits) = (i / d, i % d);
                let (mut nl, mut nb) = (lvl, bits);
                if lvl == G || lvl == E {
                    let s = if lvl == G { 0 } else { 1 };
                    let (flip, c) = pauli_action(pe, s);
                    if flip {
                        nl = if lvl == G { E } else { G };
                    }
                    *ph *= c;
                }
                let s = usize::from(bits & bit != 0);
                let (flip, c) = pauli_action(pp, s);
                if flip {
                    nb ^= bit;
                }
                *ph *= c;
                // Identity on |f⟩ for the emitter factor.
                *pm = nl * d + nb;
            }
            let mut term = acc0.clone();
            Gate::Monomial { perm, phase }.apply_dm(n_photons, &mut term);
            acc += term * C64::new(p / 15.0, 0.0);
        }
    }
    *rho = acc;
}

/// Action of Pauli `idx` on computational state `s`: (flips, phase).
fn pauli_action(idx: usize, s: usize) -> (bool, C64) {
    match idx {
        0 => (false, ONE),
        1 => (true, ONE),
        2 => (
            true,
            if s == 0 {
                C64::new(0.0, 1.0)
            } else {
                C64::new(0.0, -1.0)
            },
        ),
        _ => (false, if s == 0 { ONE } else { -ONE }),
    }
}

/// Partial trace over the emitter of a joint (3·2ⁿ) density matrix.
pub fn trace_emitter(rho: &CMat, n_photons: usize) -> CMat {
    let d = 1 << n_photons;
    CMat::from_fn(d, d, |i, j| {
        (0..3).map(|l| rho[(l * d + i, l * d + j)]).sum()
    })
}

/// Amplitude damping on each listed photon of a photonic state.
pub fn apply_channels(
    rho: &DensityMatrix,
    stack: &ChannelStack,
    fed_back: &[usize],
) -> Result<DensityMatrix> {
    stack.validate()?;
    let mut m = rho.rho.clone();
    for &k in fed_back {
        if k == 0 || k > rho.n_photons {
            return Err(Error::Invalid {
                field: "fed_back",
                reason: format!("photon {k} out of range 1..={}", rho.n_photons),
            });
        }
        amplitude_damp(&mut m, rho.n_photons, k, stack.loss);
    }
    Ok(DensityMatrix {
        n_photons: rho.n_photons,
        rho: m,
    })
}

/// Kraus operators of photon amplitude damping on one qubit (for completeness checks).
pub fn amplitude_damping_kraus(gamma: f64) -> [CMat; 2] {
    [
        CMat::from_row_slice(
            2,
            2,
            &[ONE, ZERO, ZERO, C64::new((1.0 - gamma).sqrt(), 0.0)],
        ),
        CMat::from_row_slice(2, 2, &[ZERO, C64::new(gamma.sqrt(), 0.0), ZERO, ZERO]),
    ]
}

/// Flip single-shot qubit labels (`true` = e) according to C.
pub fn confuse_readout<R: rand::Rng>(outcomes: &mut [bool], c: &[[f64; 2]; 2], rng: &mut R) {
    for o in outcomes.iter_mut() {
        let true_idx = usize::from(*o);
        let p_flip = c[1 - true_idx][true_idx];
        if rng.random::<f64>() < p_flip {
            *o = !*o;
        }
    }
}

/// Apply C⁻¹ to the stacked population-weighted conditional moments
/// (p(g)⟨X⟩|g, p(e)⟨X⟩|e).
pub fn correct_readout(measured: [C64; 2], c: &[[f64; 2]; 2]) -> Result<[C64; 2]> {
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    if det.abs() < 1e-12 {
        return Err(Error::Singular("readout confusion matrix".into()));
    }
    let inv = [
        [c[1][1] / det, -c[0][1] / det],
        [-c[1][0] / det, c[0][0] / det],
    ];
    Ok([
        measured[0] * inv[0][0] + measured[1] * inv[0][1],
        measured[0] * inv[1][0] + measured[1] * inv[1][1],
    ])
}

/// Forward model of `correct_readout`: C applied to true weighted moments.
pub fn confuse_moments(truth: [C64; 2], c: &[[f64; 2]; 2]) -> [C64; 2] {
    [
        truth[0] * c[0][0] + truth[1] * c[0][1],
        truth[0] * c[1][0] + truth[1] * c[1][1],
    ]
}
