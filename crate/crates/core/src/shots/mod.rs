//! Synthetic heterodyne measurement chain: single-shot field records S = a + h†,
//! moment estimation with noise deconvolution, and gain calibration.

mod format;
mod moments;
mod stark;

pub use format::{read_shots, write_shots, SHOT_MAGIC, SHOT_VERSION};
pub use moments::{
    bandwidth_gain_split, estimate_moments, exact_moments, number_squared_moment, raw_moment,
    EstimateOptions, Moment, MomentOperator, MomentTable, QubitOp, Signature,
};
pub use stark::{ac_stark_calibration, stark_shift, AcStarkModel, CalibrationG, StarkFit};

use crate::error::{require, Error, Result};
use crate::linalg::{herm_eig, CMat, C64, ZERO};
use crate::noise::amplitude_damp;
use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Shots drawn from one RNG stream.
const CHUNK: usize = 4096;
/// Stream offset separating dark batches from signal batches.
const DARK_STREAM: u64 = 1 << 40;

/// Basis in which the emitter qubit is read out alongside the photons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QubitBasis {
    X,
    Y,
    Z,
}

impl QubitBasis {
    pub const ALL: [QubitBasis; 3] = [QubitBasis::X, QubitBasis::Y, QubitBasis::Z];

    /// Rotation that maps the basis eigenstates onto |g⟩, |e⟩.
    fn to_z(self) -> [[C64; 2]; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = C64::new(h, 0.0);
        match self {
            QubitBasis::Z => [[C64::new(1.0, 0.0), ZERO], [ZERO, C64::new(1.0, 0.0)]],
            QubitBasis::X => [[r, r], [r, -r]],
            // H·S†
            QubitBasis::Y => [[r, C64::new(0.0, -h)], [r, C64::new(0.0, h)]],
        }
    }

    pub fn code(self) -> u8 {
        match self {
            QubitBasis::X => 1,
            QubitBasis::Y => 2,
            QubitBasis::Z => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(QubitBasis::X),
            2 => Some(QubitBasis::Y),
            3 => Some(QubitBasis::Z),
            _ => None,
        }
    }
}

/// Single-shot records. `fields` is shot-major: shot s, photon k (1-based) lives at
/// `s * n_photons + k - 1`. `outcomes[s]` is `true` when the qubit read |e⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotBatch {
    pub n_photons: usize,
    pub dark: bool,
    pub basis: Option<QubitBasis>,
    pub fields: Vec<Complex32>,
    pub outcomes: Vec<bool>,
}

impl ShotBatch {
    pub fn shots(&self) -> usize {
        self.fields
            .len()
            .checked_div(self.n_photons)
            .unwrap_or(self.outcomes.len())
    }

    pub fn field(&self, shot: usize, photon: usize) -> C64 {
        let z = self.fields[shot * self.n_photons + photon - 1];
        C64::new(z.re as f64, z.im as f64)
    }
}

/// Settings of the synthetic detection chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotConfig {
    pub shots: usize,
    /// Thermal occupancy of each amplifier noise mode h.
    pub n_noise: f64,
    pub seed: u64,
    /// Detection efficiency per photon (empty = unit efficiency).
    #[serde(default)]
    pub efficiency: Vec<f64>,
    /// Qubit readout confusion C[i][j] = P(read i | true j).
    #[serde(default = "identity_confusion")]
    pub confusion: [[f64; 2]; 2],
    /// Dark-batch size; defaults to `shots`.
    #[serde(default)]
    pub dark_shots: Option<usize>,
}

fn identity_confusion() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

impl Default for ShotConfig {
    fn default() -> Self {
        Self {
            shots: 1_000_000,
            n_noise: 3.5,
            seed: 1,
            efficiency: Vec::new(),
            confusion: identity_confusion(),
            dark_shots: None,
        }
    }
}

impl ShotConfig {
    pub fn validate(&self, n_photons: usize) -> Result<()> {
        require(self.shots >= 1, "shots", "must be at least 1")?;
        require(
            self.n_noise >= 0.0 && self.n_noise.is_finite(),
            "n_noise",
            format!("must be ≥ 0, got {}", self.n_noise),
        )?;
        require(
            self.efficiency.is_empty() || self.efficiency.len() == n_photons,
            "efficiency",
            format!(
                "needs one entry per photon ({n_photons}), got {}",
                self.efficiency.len()
            ),
        )?;
        for &e in &self.efficiency {
            require(
                e > 0.0 && e <= 1.0,
                "efficiency",
                format!("must be in (0, 1], got {e}"),
            )?;
        }
        for j in 0..2 {
            let col = self.confusion[0][j] + self.confusion[1][j];
            require(
                (col - 1.0).abs() < 1e-12
                    && self.confusion[0][j] >= 0.0
                    && self.confusion[1][j] >= 0.0,
                "confusion",
                format!("column {j} is not a probability vector"),
            )?;
        }
        Ok(())
    }
}

/// Exact sampler of the photonic Husimi distribution restricted to {|0⟩, |1⟩} per mode,
/// conditioned on a qubit outcome when a basis is given.
struct Sampler {
    n: usize,
    qubit: bool,
    weights: Vec<f64>,
    states: Vec<Vec<C64>>,
    noise_sd: f64,
    confusion: [[f64; 2]; 2],
}

impl Sampler {
    fn new(rho: &CMat, n: usize, basis: Option<QubitBasis>, cfg: &ShotConfig) -> Result<Self> {
        let qubit = basis.is_some();
        let dim = (1 << n) << usize::from(qubit);
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: rho.nrows(),
            });
        }
        let mut rho = rho.clone();
        for (k, &eta) in cfg.efficiency.iter().enumerate() {
            amplitude_damp(&mut rho, n, k + 1, 1.0 - eta);
        }
        let (vals, vecs) = herm_eig(&rho);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -1e-8 {
            return Err(Error::NotPsd { min_eig: min });
        }
        let half = 1 << n;
        let mut weights = Vec::new();
        let mut states = Vec::new();
        for (i, &p) in vals.iter().enumerate() {
            if p <= 1e-14 {
                continue;
            }
            let mut v: Vec<C64> = vecs.column(i).iter().copied().collect();
            if let Some(b) = basis {
                let u = b.to_z();
                for r in 0..half {
                    let (x, y) = (v[r], v[half + r]);
                    v[r] = u[0][0] * x + u[0][1] * y;
                    v[half + r] = u[1][0] * x + u[1][1] * y;
                }
            }
            weights.push(p);
            states.push(v);
        }
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        for w in &mut weights {
            acc += *w / total;
            *w = acc;
        }
        Ok(Self {
            n,
            qubit,
            weights,
            states,
            noise_sd: (0.5 * cfg.n_noise).sqrt(),
            confusion: cfg.confusion,
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, fields: &mut Vec<Complex32>, outcomes: &mut Vec<bool>) {
        let u: f64 = rng.random();
        let idx = self
            .weights
            .partition_point(|&c| c < u)
            .min(self.states.len() - 1);
        let mut psi: Vec<C64> = self.states[idx].clone();
        if self.qubit {
            let h = psi.len() / 2;
            let pg: f64 = psi[..h].iter().map(|z| z.norm_sqr()).sum();
            let pe: f64 = psi[h..].iter().map(|z| z.norm_sqr()).sum();
            let e = rng.random::<f64>() * (pg + pe) >= pg;
            psi = if e {
                psi[h..].to_vec()
            } else {
                psi[..h].to_vec()
            };
            let flip = self.confusion[usize::from(!e)][usize::from(e)];
            let read = if rng.random::<f64>() < flip { !e } else { e };
            outcomes.push(read);
        }
        for _ in 0..self.n {
            let alpha = husimi_step(&mut psi, rng);
            let z = alpha + self.noise(rng);
            fields.push(Complex32::new(z.re as f32, z.im as f32));
        }
    }

    fn noise(&self, rng: &mut ChaCha8Rng) -> C64 {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im) * self.noise_sd
    }
}

/// Sample α for the leading mode of `psi` from its Husimi marginal and replace `psi` by
/// the normalised conditional state ⟨α|ψ⟩ of the remaining modes.
fn husimi_step(psi: &mut Vec<C64>, rng: &mut ChaCha8Rng) -> C64 {
    let h = psi.len() / 2;
    let (p0, p1) = psi.split_at(h);
    let r00: f64 = p0.iter().map(|z| z.norm_sqr()).sum();
    let r11: f64 = p1.iter().map(|z| z.norm_sqr()).sum();
    let w: C64 = p0.iter().zip(p1).map(|(a, b)| a.conj() * b).sum();
    // Radial density ∝ e^{−x}(ρ₀₀ + ρ₁₁x) in x = |α|²: a mixture of Exp(1) and Gamma(2, 1).
    let e1: f64 = Exp1.sample(rng);
    let x = if rng.random::<f64>() * (r00 + r11) < r00 {
        e1
    } else {
        let e2: f64 = Exp1.sample(rng);
        e1 + e2
    };
    let r = x.sqrt();
    let base = r00 + r11 * x;
    // Angular density ∝ 1 + 2r Re(e^{−iθ}w)/base, bounded by 2 since |w|² ≤ ρ₀₀ρ₁₁.
    let alpha = loop {
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        let a = C64::from_polar(r, theta);
        let dens = if base > 0.0 {
            1.0 + 2.0 * (a.conj() * w).re / base
        } else {
            1.0
        };
        if rng.random::<f64>() * 2.0 < dens {
            break a;
        }
    };
    let ac = alpha.conj();
    let next: Vec<C64> = p0.iter().zip(p1).map(|(a, b)| a + ac * b).collect();
    let norm = next.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    *psi = if norm > 0.0 {
        next.into_iter().map(|z| z / norm).collect()
    } else {
        next
    };
    alpha
}

fn run_chunks(
    shots: usize,
    seed: u64,
    stream0: u64,
    sampler: &Sampler,
) -> (Vec<Complex32>, Vec<bool>) {
    let chunks = shots.div_ceil(CHUNK);
    let job = |c: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream0 + c as u64);
        let count = CHUNK.min(shots - c * CHUNK);
        let mut f = Vec::with_capacity(count * sampler.n);
        let mut o = Vec::with_capacity(if sampler.qubit { count } else { 0 });
        for _ in 0..count {
            sampler.draw(&mut rng, &mut f, &mut o);
        }
        (f, o)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<(Vec<Complex32>, Vec<bool>)> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(Vec<Complex32>, Vec<bool>)> = (0..chunks).map(job).collect();
    let mut fields = Vec::with_capacity(shots * sampler.n);
    let mut outcomes = Vec::new();
    for (f, o) in parts {
        fields.extend(f);
        outcomes.extend(o);
    }
    (fields, outcomes)
}

/// Draw heterodyne shots S_k = a_k + h_k† from `rho` (qubit ⊗ photons when `basis` is
/// set, qubit as the most significant factor) together with a matched dark batch.
///
/// The photonic part is sampled from the Husimi distribution of an eigen-component of
/// ρ; adding independent complex-Gaussian noise with E|ζ|² = n_noise reproduces
/// ⟨S†S⟩ = ⟨a†a⟩ + n_noise + 1 and every moment with n, m ≤ 1 exactly in expectation.
pub fn synthesize_shots(
    rho: &CMat,
    n_photons: usize,
    basis: Option<QubitBasis>,
    cfg: &ShotConfig,
) -> Result<(ShotBatch, ShotBatch)> {
    cfg.validate(n_photons)?;
    let sampler = Sampler::new(rho, n_photons, basis, cfg)?;
    let (fields, outcomes) = run_chunks(cfg.shots, cfg.seed, 0, &sampler);
    let batch = ShotBatch {
        n_photons,
        dark: false,
        basis,
        fields,
        outcomes,
    };
    let dark = dark_batch(n_photons, cfg)?;
    Ok((batch, dark))
}

/// Noise-only records (all modes in vacuum).
pub fn dark_batch(n_photons: usize, cfg: &ShotConfig) -> Result<ShotBatch> {
    cfg.validate(n_photons)?;
    let d = 1 << n_photons;
    let mut vac = CMat::zeros(d, d);
    vac[(0, 0)] = C64::new(1.0, 0.0);
    let quiet = ShotConfig {
        efficiency: Vec::new(),
        ..cfg.clone()
    };
    let sampler = Sampler::new(&vac, n_photons, None, &quiet)?;
    let (fields, _) = run_chunks(
        cfg.dark_shots.unwrap_or(cfg.shots),
        cfg.seed,
        DARK_STREAM,
        &sampler,
    );
    Ok(ShotBatch {
        n_photons,
        dark: true,
        basis: None,
        fields,
        outcomes: Vec::new(),
    })
}

/// Mode-matching function f(t) = ā*(t)/‖ā‖ from an average output field ā, low-pass
/// filtered at `cutoff_hz` (three times the photon bandwidth in the standard pipeline)
/// and normalised to ∫|f|²dt = 1.
pub fn mode_function(field: &[C64], dt: f64, cutoff_hz: f64) -> Result<Vec<C64>> {
    require(!field.is_empty(), "field", "record is empty")?;
    require(
        dt > 0.0 && cutoff_hz > 0.0,
        "cutoff_hz",
        "time step and cutoff must be positive",
    )?;
    let n = field.len();
    let mut buf = field.to_vec();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (i, z) in buf.iter_mut().enumerate() {
        let k = if i <= n / 2 {
            i as f64
        } else {
            i as f64 - n as f64
        };
        if (k / (n as f64 * dt)).abs() > cutoff_hz {
            *z = ZERO;
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let norm = (buf.iter().map(|z| z.norm_sqr()).sum::<f64>() * dt).sqrt();
    if norm == 0.0 {
        return Err(Error::Domain(
            "mode function vanishes after filtering".into(),
        ));
    }
    Ok(buf.into_iter().map(|z| z.conj() / norm).collect())
}

/// S = ∫ f(t) a(t) dt.
pub fn project(record: &[C64], f: &[C64], dt: f64) -> C64 {
    record.iter().zip(f).map(|(a, w)| w * a).sum::<C64>() * dt
}
