//! Constrained maximum-likelihood reconstruction of density matrices and process
//! matrices from moment tables, with parametric bootstrap intervals.

mod process;
mod solver;

pub use process::{
    cz_chi, gauge_fix_local_z, local_z_chi, mle_process, pauli_basis, pauli_label, prepared_states,
    process_fidelity, project_cptp, qpt_tables, simulate_qpt, synthesize_qpt, true_process,
    ChiMatrix, PrepSpam, ProcessFit, QptConfig, QptReport, QptTables, ZGauge,
};
pub use solver::{project_density, project_psd, SolverOptions};

use crate::error::{Error, Result};
use crate::linalg::{uhlmann, CMat, C64, ONE, ZERO};
use crate::protocol::DensityMatrix;
use crate::shots::{exact_moments, MomentOperator, MomentTable, QubitOp, Signature};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use solver::{fista, WeightedLs};

/// Reconstructed state with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFit {
    pub rho: CMat,
    pub n_photons: usize,
    pub qubit: bool,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective per accepted iteration (empty unless requested).
    pub history: Vec<f64>,
}

impl StateFit {
    /// Photonic density matrix (fails for qubit-correlated reconstructions).
    pub fn density(&self) -> Result<DensityMatrix> {
        if self.qubit {
            return Err(Error::Domain(
                "reconstruction includes the emitter qubit".into(),
            ));
        }
        Ok(DensityMatrix {
            n_photons: self.n_photons,
            rho: self.rho.clone(),
        })
    }
}

/// Signatures entering the objective: everything but the identity, which the trace
/// constraint fixes.
fn fit_signatures(table: &MomentTable) -> Vec<Signature> {
    table
        .required()
        .into_iter()
        .filter(|s| !s.is_identity())
        .collect()
}

fn state_problem(table: &MomentTable) -> Result<WeightedLs> {
    table.check_complete()?;
    let sigs = fit_signatures(table);
    let mut ops = Vec::with_capacity(sigs.len());
    let mut data = Vec::with_capacity(sigs.len());
    let mut vars = Vec::with_capacity(sigs.len());
    for s in &sigs {
        let m = table.get(s).expect("checked complete");
        ops.push(MomentOperator::new(s, table.qubit).into());
        data.push(m.mean);
        vars.push(m.mean_variance());
    }
    let dim = (1 << table.n_photons) << usize::from(table.qubit);
    Ok(WeightedLs::new(ops, data, &vars, dim))
}

/// Per-factor expansion of the matrix unit |c⟩⟨r| in the moment operators.
fn unit_expansion(c: usize, r: usize) -> Vec<((u8, u8), C64)> {
    match (c, r) {
        (0, 1) => vec![((0, 1), ONE)],
        (1, 0) => vec![((1, 0), ONE)],
        (1, 1) => vec![((1, 1), ONE)],
        _ => vec![((0, 0), ONE), ((1, 1), -ONE)],
    }
}

fn qubit_unit_expansion(c: usize, r: usize) -> Vec<(QubitOp, C64)> {
    let h = C64::new(0.5, 0.0);
    let ih = C64::new(0.0, 0.5);
    match (c, r) {
        (0, 0) => vec![(QubitOp::I, h), (QubitOp::Z, h)],
        (1, 1) => vec![(QubitOp::I, h), (QubitOp::Z, -h)],
        (0, 1) => vec![(QubitOp::X, h), (QubitOp::Y, ih)],
        _ => vec![(QubitOp::X, h), (QubitOp::Y, -ih)],
    }
}

/// Direct inversion ρ_rc = Tr(ρ|c⟩⟨r|) from the moments (not necessarily PSD).
pub fn linear_inversion(table: &MomentTable) -> Result<CMat> {
    table.check_complete()?;
    let n = table.n_photons;
    let d = 1usize << n;
    let dim = d << usize::from(table.qubit);
    let mut rho = CMat::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            let mut terms: Vec<(Signature, C64)> = if table.qubit {
                qubit_unit_expansion(c / d, r / d)
                    .into_iter()
                    .map(|(q, w)| {
                        (
                            Signature {
                                qubit: q,
                                orders: Vec::new(),
                            },
                            w,
                        )
                    })
                    .collect()
            } else {
                vec![(Signature::photonic(Vec::new()), ONE)]
            };
            for k in 0..n {
                let bit = 1 << (n - 1 - k);
                let (ck, rk) = (usize::from(c & bit != 0), usize::from(r & bit != 0));
                let exp = unit_expansion(ck, rk);
                terms = terms
                    .into_iter()
                    .flat_map(|(s, w)| {
                        exp.iter().map(move |&(o, v)| {
                            let mut s2 = s.clone();
                            s2.orders.push(o);
                            (s2, w * v)
                        })
                    })
                    .collect();
            }
            rho[(r, c)] = terms
                .iter()
                .map(|(s, w)| table.get(s).map_or(ZERO, |m| m.mean) * w)
                .sum();
        }
    }
    Ok(rho)
}

/// Weighted least-squares maximum-likelihood state over {ρ ⪰ 0, Tr ρ = 1}.
pub fn mle_state(table: &MomentTable, opts: &SolverOptions) -> Result<StateFit> {
    let start = project_density(&linear_inversion(table)?, 1.0);
    mle_state_from(table, start, opts)
}

/// As [`mle_state`], starting from `start`.
pub fn mle_state_from(table: &MomentTable, start: CMat, opts: &SolverOptions) -> Result<StateFit> {
    let problem = state_problem(table)?;
    if start.nrows() != problem.dim {
        return Err(Error::Dimension {
            expected: problem.dim,
            got: start.nrows(),
        });
    }
    let sol = fista(&problem, &|m| project_density(m, 1.0), start, opts);
    if !sol.converged {
        return Err(Error::NoConvergence(format!(
            "state reconstruction after {} iterations (objective {:.6e})",
            sol.iterations, sol.objective
        )));
    }
    Ok(StateFit {
        rho: sol.x,
        n_photons: table.n_photons,
        qubit: table.qubit,
        objective: sol.objective,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
        converged: sol.converged,
        history: sol.history,
    })
}

/// Value of the reconstruction objective at an arbitrary state.
pub fn state_objective(table: &MomentTable, rho: &CMat) -> Result<f64> {
    Ok(state_problem(table)?.value(rho))
}

/// Bootstrap settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            seed: 7,
            solver: SolverOptions::default(),
        }
    }
}

/// Percentile interval of the reconstructed fidelity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiReport {
    pub fidelity: f64,
    pub lower: f64,
    pub upper: f64,
    pub resamples: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl CiReport {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Sorted-sample indices of the 2.5% and 97.5% bounds: round(0.025n)−1 and round(0.975n)−1.
pub fn percentile_indices(n: usize) -> (usize, usize) {
    let lo = ((0.025 * n as f64).round() as usize).saturating_sub(1);
    let hi = ((0.975 * n as f64).round() as usize)
        .saturating_sub(1)
        .min(n.saturating_sub(1));
    (lo, hi)
}

/// Draw every moment from a normal with its mean and standard error (stream `stream` of
/// `seed`), keeping conjugate pairs consistent and self-conjugate moments real.
pub fn resample_table(table: &MomentTable, seed: u64, stream: u64) -> MomentTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    resample(table, &mut rng)
}

fn resample(table: &MomentTable, rng: &mut ChaCha8Rng) -> MomentTable {
    let mut out = table.clone();
    for (key, m) in &table.entries {
        let Ok(sig) = Signature::parse(key) else {
            continue;
        };
        let conj = sig.conjugate();
        let ck = conj.key();
        if ck < *key {
            continue;
        }
        let sd = m.mean_variance().sqrt();
        let z1: f64 = StandardNormal.sample(rng);
        let mean = if ck == *key {
            C64::new(m.mean.re + sd * z1, 0.0)
        } else {
            let z2: f64 = StandardNormal.sample(rng);
            m.mean + C64::new(z1, z2) * (sd * std::f64::consts::FRAC_1_SQRT_2)
        };
        if let Some(e) = out.entries.get_mut(key) {
            e.mean = mean;
        }
        if ck != *key {
            if let Some(e) = out.entries.get_mut(&ck) {
                e.mean = mean.conj();
            }
        }
    }
    out
}

/// Moment table of a large experiment under the normal approximation: exact means of
/// `truth`, per-shot variances taken from `per_shot`, `count` shots per moment, and one
/// normal draw per moment.
pub fn gaussian_dataset(
    truth: &CMat,
    per_shot: &MomentTable,
    count: u64,
    seed: u64,
) -> Result<MomentTable> {
    if count == 0 {
        return Err(Error::Invalid {
            field: "count",
            reason: "must be at least 1".into(),
        });
    }
    let mut table = exact_moments(truth, per_shot.n_photons, per_shot.qubit)?;
    for (key, m) in table.entries.iter_mut() {
        let src = per_shot
            .entries
            .get(key)
            .ok_or_else(|| Error::Missing(format!("per-shot variance of moment {key}")))?;
        m.variance = src.variance;
        m.count = count;
    }
    Ok(resample_table(&table, seed, 0))
}

/// Parametric bootstrap of the Uhlmann fidelity of the reconstruction against `target`.
pub fn bootstrap_ci(table: &MomentTable, target: &CMat, cfg: &BootstrapConfig) -> Result<CiReport> {
    let point = mle_state(table, &cfg.solver)?;
    let fidelity = uhlmann(&point.rho, target);
    let mut warnings = Vec::new();
    if cfg.resamples < 100 {
        warnings.push(format!(
            "only {} resamples; the interval is unreliable",
            cfg.resamples
        ));
    }
    if cfg.resamples == 0 {
        return Ok(CiReport {
            fidelity,
            lower: fidelity,
            upper: fidelity,
            resamples: 0,
            seed: cfg.seed,
            warnings,
        });
    }
    let job = |i: usize| -> Result<f64> {
        let t = resample_table(table, cfg.seed, i as u64);
        let fit = mle_state_from(&t, point.rho.clone(), &cfg.solver)?;
        Ok(uhlmann(&fit.rho, target))
    };
    #[cfg(feature = "parallel")]
    let fids: Result<Vec<f64>> = {
        use rayon::prelude::*;
        (0..cfg.resamples).into_par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fids: Result<Vec<f64>> = (0..cfg.resamples).map(job).collect();
    let mut fids = fids?;
    fids.sort_by(f64::total_cmp);
    let (lo, hi) = percentile_indices(fids.len());
    Ok(CiReport {
        fidelity,
        lower: fids[lo],
        upper: fids[hi],
        resamples: cfg.resamples,
        seed: cfg.seed,
        warnings,
    })
}
