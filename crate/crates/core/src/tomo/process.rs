//! Process tomography of the emitter–photon CZ gate in the Pauli χ representation
//! ℰ(ρ) = Σ χ_nm P_n ρ P_m†, P_{4a+b} = σ_a ⊗ σ_b with the emitter first.

use super::solver::{fista, project_psd, Functional, SolverOptions, WeightedLs};
use crate::error::{require, Error, Result};
use crate::linalg::{cis, fro, kron, min_eig, pauli, tr_prod, CMat, C64, ONE, ZERO};
use crate::noise::amplitude_damp;
use crate::optim::nelder_mead;
use crate::shots::{
    estimate_moments, synthesize_shots, EstimateOptions, MomentOperator, MomentTable, QubitBasis,
    QubitOp, ShotConfig, Signature,
};
use serde::{Deserialize, Serialize};

const LABELS: [&str; 16] = [
    "II", "IX", "IY", "IZ", "XI", "XX", "XY", "XZ", "YI", "YX", "YY", "YZ", "ZI", "ZX", "ZY", "ZZ",
];

/// Label of basis element `j` (II, IX, IY, IZ, XI, …, ZZ).
pub fn pauli_label(j: usize) -> &'static str {
    LABELS[j]
}

/// The 16 two-qubit Pauli products in χ order.
pub fn pauli_basis() -> Vec<CMat> {
    (0..16)
        .map(|j| kron(&pauli(j / 4), &pauli(j % 4)))
        .collect()
}

/// Process matrix of a two-qubit channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiMatrix(pub CMat);

impl ChiMatrix {
    /// χ of the unitary channel ρ ↦ UρU†: χ = c c†, c_n = Tr(P_n U)/4.
    pub fn unitary(u: &CMat) -> Self {
        let c = unitary_coefficients(u);
        Self(&c * c.adjoint())
    }

    /// ‖Σ χ_nm P_m† P_n − 𝕀‖_F.
    pub fn tp_residual(&self) -> f64 {
        fro(&(tp_map(&self.0) - CMat::identity(4, 4)))
    }

    pub fn min_eig(&self) -> f64 {
        min_eig(&self.0)
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let p = pauli_basis();
        let mut out = CMat::zeros(4, 4);
        for n in 0..16 {
            let left = &p[n] * rho;
            for m in 0..16 {
                let c = self.0[(n, m)];
                if c != ZERO {
                    out += &left * &p[m] * c;
                }
            }
        }
        out
    }

    /// χ of V ∘ ℰ: W χ W† with W_kn = Tr(P_k V P_n)/4.
    pub fn then_unitary(&self, v: &CMat) -> Self {
        let p = pauli_basis();
        let w = CMat::from_fn(16, 16, |k, n| tr_prod(&p[k], &(v * &p[n])) / 4.0);
        Self(&w * &self.0 * w.adjoint())
    }
}

fn unitary_coefficients(u: &CMat) -> nalgebra::DVector<C64> {
    let p = pauli_basis();
    nalgebra::DVector::from_iterator(16, p.iter().map(|pn| tr_prod(pn, u) / 4.0))
}

fn tp_map(chi: &CMat) -> CMat {
    let p = pauli_basis();
    let mut out = CMat::zeros(4, 4);
    for n in 0..16 {
        for m in 0..16 {
            out += &p[m] * &p[n] * chi[(n, m)];
        }
    }
    out
}

/// Adjoint of the trace-preservation map: T*(Y)_nm = Tr(P_n P_m Y).
fn tp_adjoint(y: &CMat) -> CMat {
    let p = pauli_basis();
    CMat::from_fn(16, 16, |n, m| tr_prod(&(&p[n] * &p[m]), y))
}

/// Projection onto {χ ⪰ 0, Σ χ_nm P_m†P_n = 𝕀} by Dykstra's alternating projections.
/// T T* = 64·id, so the affine step is χ − T*(T(χ) − 𝕀)/64.
pub fn project_cptp(m: &CMat) -> CMat {
    let id = CMat::identity(4, 4);
    let mut x = m.clone();
    let mut q = CMat::zeros(16, 16);
    for _ in 0..20_000 {
        let y = &x - tp_adjoint(&(tp_map(&x) - &id)) / C64::new(64.0, 0.0);
        let next = project_psd(&(&y + &q));
        q = &y + &q - &next;
        let moved = fro(&(&next - &x));
        x = next;
        if moved < 1e-13 && fro(&(tp_map(&x) - &id)) < 1e-10 {
            break;
        }
    }
    x
}

/// χ of the ideal CZ = diag(1, 1, 1, −1).
pub fn cz_chi() -> ChiMatrix {
    ChiMatrix::unitary(&cz())
}

fn cz() -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, ONE, ONE, -ONE]))
}

fn local_z(a: f64, b: f64) -> CMat {
    let z = |t: f64| CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, cis(t)]));
    kron(&z(a), &z(b))
}

/// χ of Z(a) ⊗ Z(b) with Z(θ) = diag(1, e^{iθ}) (emitter, photon).
pub fn local_z_chi(a: f64, b: f64) -> ChiMatrix {
    ChiMatrix::unitary(&local_z(a, b))
}

/// Process fidelity c†χc against the unitary `u`, with c its Pauli coefficients.
pub fn process_fidelity(chi: &ChiMatrix, u: &CMat) -> f64 {
    let c = unitary_coefficients(u);
    (c.adjoint() * &chi.0 * &c)[(0, 0)].re
}

/// Gauge-fixed process matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ZGauge {
    pub chi: ChiMatrix,
    /// Local-Z angles (emitter, photon) removed: χ_in = Z(angles) ∘ χ.
    pub angles: [f64; 2],
    pub fidelity: f64,
}

/// Maximise the CZ process fidelity over local Z rotations applied after the gate:
/// a 256 × 256 grid followed by a simplex refinement.
pub fn gauge_fix_local_z(chi: &ChiMatrix) -> ZGauge {
    let target = cz();
    // F(Z(θ)∘ℰ) = d†χd with d the Pauli coefficients of Z(θ)†·CZ.
    let fid = |a: f64, b: f64| -> f64 {
        let d = unitary_coefficients(&(local_z(a, b).adjoint() * &target));
        (d.adjoint() * &chi.0 * &d)[(0, 0)].re
    };
    // The coefficient vector only has II, IZ, ZI, ZZ components, so evaluate on that block.
    let idx = [0usize, 3, 12, 15];
    let block = CMat::from_fn(4, 4, |i, j| chi.0[(idx[i], idx[j])]);
    let fast = |a: f64, b: f64| -> f64 {
        let (ea, eb) = (cis(-a), cis(-b));
        let diag = [ONE, eb, ea, -ea * eb];
        let h = |s: [f64; 4]| diag.iter().zip(s).map(|(d, s)| d * s).sum::<C64>() / 4.0;
        let d = [
            h([1.0, 1.0, 1.0, 1.0]),
            h([1.0, -1.0, 1.0, -1.0]),
            h([1.0, 1.0, -1.0, -1.0]),
            h([1.0, -1.0, -1.0, 1.0]),
        ];
        let mut f = ZERO;
        for i in 0..4 {
            for j in 0..4 {
                f += d[i].conj() * block[(i, j)] * d[j];
            }
        }
        f.re
    };
    let n = 256;
    let step = std::f64::consts::TAU / n as f64;
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (i as f64 * step, j as f64 * step);
            let f = fast(a, b);
            if f > best.2 {
                best = (a, b, f);
            }
        }
    }
    let refined = nelder_mead(
        |x| -fid(x[0], x[1]),
        &[best.0, best.1],
        &[0.5 * step, 0.5 * step],
        1e-14,
        2000,
    );
    let wrap = |t: f64| {
        (t + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
    };
    let (a, b) = (refined.x[0], refined.x[1]);
    let fixed = chi.then_unitary(&local_z(a, b));
    ZGauge {
        fidelity: process_fidelity(&fixed, &target),
        chi: fixed,
        angles: [wrap(-a), wrap(-b)],
    }
}

/// Generalised preparation: thermal pin of the emitter, ideal rotation, photon loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepSpam {
    /// Energy loss of the prepared photon before the gate.
    pub loss: f64,
    /// Emitter |e⟩ population before the preparation rotation.
    pub thermal: f64,
}

impl PrepSpam {
    pub fn none() -> Self {
        Self {
            loss: 0.0,
            thermal: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require((0.0..1.0).contains(&self.loss), "loss", "must be in [0, 1)")?;
        require(
            (0.0..0.5).contains(&self.thermal),
            "thermal",
            "must be in [0, 0.5)",
        )
    }
}

impl Default for PrepSpam {
    fn default() -> Self {
        Self {
            loss: 0.13,
            thermal: 0.01,
        }
    }
}

/// Preparation unitaries taking |0⟩ to |0⟩, |1⟩, |+⟩, |+i⟩.
fn prep_unitaries() -> [CMat; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let r = |a: C64, b: C64, c: C64, d: C64| CMat::from_row_slice(2, 2, &[a, b, c, d]);
    let s = C64::new(h, 0.0);
    let si = C64::new(0.0, h);
    [
        CMat::identity(2, 2),
        r(ZERO, ONE, ONE, ZERO),
        r(s, -s, s, s),
        r(s, si, si, s),
    ]
}

/// The 16 input states ℬ_i(|g,0⟩⟨g,0|), i = 4·(emitter prep) + (photon prep), each
/// prep drawn from {0, 1, +, +i}.
pub fn prepared_states(spam: &PrepSpam) -> Vec<CMat> {
    let u = prep_unitaries();
    let mut pin_q = CMat::zeros(2, 2);
    pin_q[(0, 0)] = C64::new(1.0 - spam.thermal, 0.0);
    pin_q[(1, 1)] = C64::new(spam.thermal, 0.0);
    let mut vac = CMat::zeros(2, 2);
    vac[(0, 0)] = ONE;
    let mut out = Vec::with_capacity(16);
    for uq in &u {
        for up in &u {
            let q = uq * &pin_q * uq.adjoint();
            let p = up * &vac * up.adjoint();
            let mut rho = kron(&q, &p);
            // Emitter-as-MSB register: one photon, two emitter levels.
            amplitude_damp(&mut rho, 1, 1, spam.loss);
            out.push(rho);
        }
    }
    out
}

fn correlators() -> Vec<Signature> {
    Signature::all(1, &QubitOp::ALL)
        .into_iter()
        .filter(|s| !s.is_identity())
        .collect()
}

/// Reconstructed process with constraint diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessFit {
    pub chi: ChiMatrix,
    pub objective: f64,
    pub tp_residual: f64,
    pub min_eig: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Weighted least-squares χ over CPTP maps from one emitter-correlated single-photon
/// moment table per preparation (in [`prepared_states`] order).
pub fn mle_process(
    tables: &[MomentTable],
    spam: &PrepSpam,
    opts: &SolverOptions,
) -> Result<ProcessFit> {
    spam.validate()?;
    if tables.len() != 16 {
        return Err(Error::Missing(format!(
            "process data for 16 preparations, got {}",
            tables.len()
        )));
    }
    for (i, t) in tables.iter().enumerate() {
        if t.n_photons != 1 || !t.qubit {
            return Err(Error::Domain(format!(
                "preparation {i}: need emitter-correlated single-photon moments"
            )));
        }
        t.check_complete()
            .map_err(|e| Error::Missing(format!("preparation {i}: {e}")))?;
    }
    let p = pauli_basis();
    let sigs = correlators();
    let dense: Vec<CMat> = sigs
        .iter()
        .map(|s| MomentOperator::new(s, true).to_dense())
        .collect();
    let mut ops = Vec::with_capacity(16 * sigs.len());
    let mut data = Vec::with_capacity(ops.capacity());
    let mut vars = Vec::with_capacity(ops.capacity());
    for (sigma, table) in prepared_states(spam).iter().zip(tables) {
        let right: Vec<CMat> = p.iter().map(|pn| pn * sigma).collect();
        for (s, mj) in sigs.iter().zip(&dense) {
            // B_mn = Tr(P_m† M_j P_n σ_i), so the model moment is Tr(χ B).
            let left: Vec<CMat> = p.iter().map(|pm| pm * mj).collect();
            let b = CMat::from_fn(16, 16, |m, n| tr_prod(&left[m], &right[n]));
            ops.push(Functional::dense(&b));
            let mom = table.get(s).expect("checked complete");
            data.push(mom.mean);
            vars.push(mom.mean_variance());
        }
    }
    let problem = WeightedLs::new(ops, data, &vars, 16);
    let start = CMat::identity(16, 16) / C64::new(16.0, 0.0);
    let sol = fista(&problem, &project_cptp, start, opts);
    if !sol.converged {
        return Err(Error::NoConvergence(format!(
            "process reconstruction after {} iterations",
            sol.iterations
        )));
    }
    let chi = ChiMatrix(sol.x);
    Ok(ProcessFit {
        tp_residual: chi.tp_residual(),
        min_eig: chi.min_eig(),
        chi,
        objective: sol.objective,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
    })
}

/// Synthetic CZ characterisation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QptConfig {
    /// Preparation errors present in the data.
    pub spam: PrepSpam,
    /// Two-qubit Pauli depolarizing probability after the ideal CZ.
    pub depolarizing: f64,
    /// Emitter readout confusion C[i][j] = P(read i | true j).
    pub confusion: [[f64; 2]; 2],
    pub shots_per_setting: usize,
    pub n_noise: f64,
    pub seed: u64,
}

impl Default for QptConfig {
    fn default() -> Self {
        Self {
            spam: PrepSpam::default(),
            depolarizing: 0.03,
            confusion: crate::noise::symmetric_confusion(0.976),
            shots_per_setting: 100_000,
            n_noise: 3.5,
            seed: 11,
        }
    }
}

/// Moment tables per preparation, with and without readout-confusion inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct QptTables {
    pub corrected: Vec<MomentTable>,
    pub raw: Vec<MomentTable>,
}

/// The true channel: Pauli depolarizing of strength p after CZ.
pub fn true_process(p: f64) -> ChiMatrix {
    let mut chi = cz_chi().0 * C64::new(1.0 - p, 0.0);
    // ρ ↦ p/15 Σ_{P≠II} P CZ ρ CZ P = Σ_k (p/15) · χ_{P_k · CZ}.
    let basis = pauli_basis();
    let u = cz();
    for pk in basis.iter().skip(1) {
        chi += ChiMatrix::unitary(&(pk * &u)).0 * C64::new(p / 15.0, 0.0);
    }
    ChiMatrix(chi)
}

/// Heterodyne data for the 16 × 3 (preparation, emitter basis) settings.
pub fn synthesize_qpt(cfg: &QptConfig) -> Result<QptTables> {
    cfg.spam.validate()?;
    require(
        (0.0..=1.0).contains(&cfg.depolarizing),
        "depolarizing",
        "must be in [0, 1]",
    )?;
    let truth = true_process(cfg.depolarizing);
    let mut corrected = Vec::with_capacity(16);
    let mut raw = Vec::with_capacity(16);
    for (i, sigma) in prepared_states(&cfg.spam).iter().enumerate() {
        let out = truth.apply(sigma);
        let mut batches = Vec::with_capacity(3);
        let mut dark = None;
        for (b, basis) in QubitBasis::ALL.iter().enumerate() {
            let shots = ShotConfig {
                shots: cfg.shots_per_setting,
                n_noise: cfg.n_noise,
                seed: cfg
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add((3 * i + b) as u64),
                efficiency: Vec::new(),
                confusion: cfg.confusion,
                dark_shots: None,
            };
            let (batch, d) = synthesize_shots(&out, 1, Some(*basis), &shots)?;
            batches.push(batch);
            dark.get_or_insert(d);
        }
        let dark = dark.expect("three bases");
        corrected.push(estimate_moments(
            &batches,
            &dark,
            &EstimateOptions {
                confusion: Some(cfg.confusion),
                gain: Vec::new(),
            },
        )?);
        raw.push(estimate_moments(
            &batches,
            &dark,
            &EstimateOptions::default(),
        )?);
    }
    Ok(QptTables { corrected, raw })
}

/// Exact tables (zero variance) for a given channel and preparations.
pub fn qpt_tables(chi: &ChiMatrix, spam: &PrepSpam) -> Result<Vec<MomentTable>> {
    prepared_states(spam)
        .iter()
        .map(|s| crate::shots::exact_moments(&chi.apply(s), 1, true))
        .collect()
}

/// Outcome of a SPAM-corrected and an uncorrected reconstruction of the same data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QptReport {
    pub true_fidelity: f64,
    pub fidelity_spam_on: f64,
    pub fidelity_spam_off: f64,
    /// Gauge angles (emitter, photon) removed from each reconstruction.
    pub angles_spam_on: [f64; 2],
    pub angles_spam_off: [f64; 2],
    pub tp_residual: f64,
    pub min_eig: f64,
    /// Real and imaginary parts of the gauge-fixed SPAM-corrected χ, row-major.
    pub chi_re: Vec<Vec<f64>>,
    pub chi_im: Vec<Vec<f64>>,
    pub basis: Vec<String>,
}

/// Synthesize data, reconstruct with the generalised preparations and the
/// confusion-corrected moments (SPAM on) and with ideal preparations and raw moments
/// (SPAM off), and gauge-fix both.
pub fn simulate_qpt(cfg: &QptConfig, opts: &SolverOptions) -> Result<QptReport> {
    let data = synthesize_qpt(cfg)?;
    let on = mle_process(&data.corrected, &cfg.spam, opts)?;
    let off = mle_process(&data.raw, &PrepSpam::none(), opts)?;
    let g_on = gauge_fix_local_z(&on.chi);
    let g_off = gauge_fix_local_z(&off.chi);
    let m = &g_on.chi.0;
    Ok(QptReport {
        true_fidelity: process_fidelity(&true_process(cfg.depolarizing), &cz()),
        fidelity_spam_on: g_on.fidelity,
        fidelity_spam_off: g_off.fidelity,
        angles_spam_on: g_on.angles,
        angles_spam_off: g_off.angles,
        tp_residual: on.tp_residual,
        min_eig: on.min_eig,
        chi_re: (0..16)
            .map(|r| (0..16).map(|c| m[(r, c)].re).collect())
            .collect(),
        chi_im: (0..16)
            .map(|r| (0..16).map(|c| m[(r, c)].im).collect())
            .collect(),
        basis: LABELS.iter().map(|s| s.to_string()).collect(),
    })
}
