use crate::error::{Error, Result};
use crate::linalg::{c, cis, herm_eig, uhlmann, CMat, C64, ONE, ZERO};
use serde::{Deserialize, Serialize};

/// Tolerances on density-matrix validity.
const HERMITIAN_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues below this make the fidelity undefined.
const FIDELITY_PSD_TOL: f64 = 1e-8;

/// Photonic pure state over 2ⁿ single-rail time bins; photon 1 is the most significant bit.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    pub n_photons: usize,
    pub amps: Vec<C64>,
}

/// Serialisable form: basis labels plus real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateExport {
    pub n_photons: usize,
    pub basis: Vec<String>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

fn label(n: usize, i: usize) -> String {
    (0..n)
        .map(|k| if i >> (n - 1 - k) & 1 == 1 { '1' } else { '0' })
        .collect()
}

impl PureState {
    pub fn new(n_photons: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != 1 << n_photons {
            return Err(Error::Dimension {
                expected: 1 << n_photons,
                got: amps.len(),
            });
        }
        Ok(Self { n_photons, amps })
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn density(&self) -> DensityMatrix {
        let d = self.amps.len();
        let rho = CMat::from_fn(d, d, |i, j| self.amps[i] * self.amps[j].conj());
        DensityMatrix {
            n_photons: self.n_photons,
            rho,
        }
    }

    /// Apply diag(1, e^{iθ_k}) to each photon k.
    pub fn with_local_z(&self, phases: &[f64]) -> PureState {
        let n = self.n_photons;
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| a * cis(bit_phase(n, i, phases)))
            .collect();
        PureState { n_photons: n, amps }
    }

    pub fn export(&self) -> StateExport {
        StateExport {
            n_photons: self.n_photons,
            basis: (0..self.amps.len())
                .map(|i| label(self.n_photons, i))
                .collect(),
            re: self.amps.iter().map(|z| z.re).collect(),
            im: self.amps.iter().map(|z| z.im).collect(),
        }
    }
}

fn bit_phase(n: usize, i: usize, phases: &[f64]) -> f64 {
    (0..n)
        .filter(|k| i >> (n - 1 - k) & 1 == 1)
        .map(|k| phases[k])
        .sum()
}

/// Density matrix over n photonic qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub n_photons: usize,
    pub rho: CMat,
}

impl DensityMatrix {
    /// Validated constructor: Hermitian, PSD and unit trace within 1e-10.
    pub fn new(n_photons: usize, rho: CMat) -> Result<Self> {
        let m = Self { n_photons, rho };
        m.validate()?;
        Ok(m)
    }

    pub fn maximally_mixed(n_photons: usize) -> Self {
        let d = 1 << n_photons;
        Self {
            n_photons,
            rho: CMat::identity(d, d) * c(1.0 / d as f64, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = 1 << self.n_photons;
        if self.rho.nrows() != d || self.rho.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                got: self.rho.nrows(),
            });
        }
        let herm = (&self.rho - self.rho.adjoint())
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()));
        if herm > HERMITIAN_TOL {
            return Err(Error::Invalid {
                field: "rho",
                reason: format!("not Hermitian (max deviation {herm:.3e})"),
            });
        }
        let tr = self.rho.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::Invalid {
                field: "rho",
                reason: format!("trace {tr} differs from 1"),
            });
        }
        let min = self.min_eig();
        if min < -PSD_TOL {
            return Err(Error::NotPsd { min_eig: min });
        }
        Ok(())
    }

    pub fn min_eig(&self) -> f64 {
        herm_eig(&self.rho).0.first().copied().unwrap_or(0.0)
    }

    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    /// U ρ U† with U = ⊗_k diag(1, e^{iθ_k}).
    pub fn with_local_z(&self, phases: &[f64]) -> DensityMatrix {
        let n = self.n_photons;
        let d = self.dim();
        let ph: Vec<f64> = (0..d).map(|i| bit_phase(n, i, phases)).collect();
        let rho = CMat::from_fn(d, d, |i, j| self.rho[(i, j)] * cis(ph[i] - ph[j]));
        DensityMatrix { n_photons: n, rho }
    }

    /// Real-valued entries for export, row-major.
    pub fn export(&self) -> (Vec<String>, Vec<Vec<[f64; 2]>>) {
        let d = self.dim();
        let basis = (0..d).map(|i| label(self.n_photons, i)).collect();
        let rows = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| [self.rho[(i, j)].re, self.rho[(i, j)].im])
                    .collect()
            })
            .collect();
        (basis, rows)
    }
}

/// Undirected graph on photons 1..=n.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        for &(a, b) in edges {
            if a == 0 || b == 0 || a > n || b > n || a == b {
                return Err(Error::Invalid {
                    field: "graph",
                    reason: format!("edge ({a}, {b}) invalid for {n} vertices"),
                });
            }
        }
        Ok(Self {
            n,
            edges: edges.to_vec(),
        })
    }

    pub fn path(n: usize) -> Self {
        Self {
            n,
            edges: (1..n).map(|i| (i, i + 1)).collect(),
        }
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Self::path(n);
        g.edges.push((1, n));
        g
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Stabilizer generator of vertex v as a Pauli string (X on v, Z on neighbours).
    pub fn generator(&self, v: usize) -> String {
        let nb = self.neighbors(v);
        (1..=self.n)
            .map(|k| {
                if k == v {
                    'X'
                } else if nb.contains(&k) {
                    'Z'
                } else {
                    'I'
                }
            })
            .collect()
    }
}

/// |G⟩ = Π_{edges} CZ H^{⊗n}|0…0⟩.
pub fn graph_state(graph: &Graph) -> PureState {
    let n = graph.n;
    let d = 1usize << n;
    let amp = 1.0 / (d as f64).sqrt();
    let amps = (0..d)
        .map(|i| {
            let bit = |k: usize| (i >> (n - k)) & 1;
            let parity = graph
                .edges
                .iter()
                .filter(|&&(a, b)| bit(a) & bit(b) == 1)
                .count();
            c(if parity % 2 == 0 { amp } else { -amp }, 0.0)
        })
        .collect();
    PureState { n_photons: n, amps }
}

/// Tr(ρ P) for a Pauli string over {I, X, Y, Z}, photon 1 first.
pub fn pauli_expectation(rho: &DensityMatrix, pauli: &str) -> Result<f64> {
    let n = rho.n_photons;
    let ops: Vec<char> = pauli.chars().collect();
    if ops.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: ops.len(),
        });
    }
    let (mut xm, mut zm, mut ny) = (0usize, 0usize, 0u32);
    for (k, op) in ops.iter().enumerate() {
        let bit = 1 << (n - 1 - k);
        match op.to_ascii_uppercase() {
            'I' => {}
            'X' => xm |= bit,
            'Z' => zm |= bit,
            // Y = i X Z
            'Y' => {
                xm |= bit;
                zm |= bit;
                ny += 1;
            }
            other => {
                return Err(Error::Invalid {
                    field: "pauli",
                    reason: format!("unknown operator '{other}'"),
                })
            }
        }
    }
    // ⟨y⊕x| X^x Z^z |y⟩ = (−1)^{z·y}
    let mut s = ZERO;
    for y in 0..rho.dim() {
        let sign = if (zm & y).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        s += rho.rho[(y, y ^ xm)] * sign;
    }
    let phase = C64::i().powu(ny);
    Ok((phase * s).re)
}

/// ⟨X_i Π_{j∈N(i)} Z_j⟩ for each vertex.
pub fn stabilizer_expectations(rho: &DensityMatrix, graph: &Graph) -> Result<Vec<f64>> {
    if graph.n != rho.n_photons {
        return Err(Error::Dimension {
            expected: rho.n_photons,
            got: graph.n,
        });
    }
    (1..=graph.n)
        .map(|v| pauli_expectation(rho, &graph.generator(v)))
        .collect()
}

/// Uhlmann fidelity (Tr√(√ρ σ √ρ))².
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    for m in [rho, sigma] {
        let e = m.min_eig();
        if e < -FIDELITY_PSD_TOL {
            return Err(Error::NotPsd { min_eig: e });
        }
    }
    Ok(uhlmann(&rho.rho, &sigma.rho))
}

/// Per-photon Z phases that best align a state with a pure target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    pub phases: Vec<f64>,
    pub fidelity: f64,
}

/// Maximise ⟨ψ|U ρ U†|ψ⟩ over U = ⊗ diag(1, e^{iθ_k}) by exact coordinate ascent from a few
/// starting points.
pub fn fix_gauge(rho: &DensityMatrix, target: &PureState) -> Result<Gauge> {
    let n = rho.n_photons;
    if target.n_photons != n {
        return Err(Error::Dimension {
            expected: n,
            got: target.n_photons,
        });
    }
    let d = rho.dim();
    // w_{ij} = ψ_i* ρ_ij ψ_j so that F(θ) = Σ w_ij e^{i(φ_i − φ_j)}.
    let w = CMat::from_fn(d, d, |i, j| {
        target.amps[i].conj() * rho.rho[(i, j)] * target.amps[j]
    });
    let value = |th: &[f64]| -> f64 {
        let ph: Vec<C64> = (0..d).map(|i| cis(bit_phase(n, i, th))).collect();
        let mut s = ZERO;
        for i in 0..d {
            for j in 0..d {
                s += w[(i, j)] * ph[i] * ph[j].conj();
            }
        }
        s.re
    };
    let mut best = Gauge {
        phases: vec![0.0; n],
        fidelity: f64::NEG_INFINITY,
    };
    let starts = [
        0.0,
        std::f64::consts::FRAC_PI_2,
        std::f64::consts::PI,
        -std::f64::consts::FRAC_PI_2,
    ];
    for &s0 in &starts {
        let mut th = vec![s0; n];
        let mut f = value(&th);
        for _ in 0..200 {
            for k in 0..n {
                let bit = 1 << (n - 1 - k);
                let others: Vec<f64> = (0..n).map(|m| if m == k { 0.0 } else { th[m] }).collect();
                let ph: Vec<C64> = (0..d).map(|i| cis(bit_phase(n, i, &others))).collect();
                // Terms with bit k set in i but not in j rotate as e^{iθ_k}.
                let mut a = ZERO;
                for i in (0..d).filter(|i| i & bit != 0) {
                    for j in (0..d).filter(|j| j & bit == 0) {
                        a += w[(i, j)] * ph[i] * ph[j].conj();
                    }
                }
                if a.norm() > 0.0 {
                    th[k] = -a.arg();
                }
            }
            let nf = value(&th);
            let done = (nf - f).abs() < 1e-14;
            f = nf;
            if done {
                break;
            }
        }
        if f > best.fidelity {
            best = Gauge {
                phases: th
                    .iter()
                    .map(|t| {
                        (t + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                            - std::f64::consts::PI
                    })
                    .collect(),
                fidelity: f,
            };
        }
    }
    Ok(best)
}
