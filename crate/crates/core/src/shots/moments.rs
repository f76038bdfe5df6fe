use super::{ShotBatch, CHUNK};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ONE, ZERO};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Qubit factor of a correlator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QubitOp {
    I,
    X,
    Y,
    Z,
}

impl QubitOp {
    pub const ALL: [QubitOp; 4] = [QubitOp::I, QubitOp::X, QubitOp::Y, QubitOp::Z];

    fn letter(self) -> char {
        match self {
            QubitOp::I => 'I',
            QubitOp::X => 'X',
            QubitOp::Y => 'Y',
            QubitOp::Z => 'Z',
        }
    }

    /// Image of basis state `s` (0 = g): (new state, amplitude).
    fn act(self, s: usize) -> (usize, C64) {
        match self {
            QubitOp::I => (s, ONE),
            QubitOp::X => (1 - s, ONE),
            QubitOp::Y => (
                1 - s,
                if s == 0 {
                    C64::new(0.0, 1.0)
                } else {
                    C64::new(0.0, -1.0)
                },
            ),
            QubitOp::Z => (s, if s == 0 { ONE } else { -ONE }),
        }
    }
}

/// Normal-ordered correlator σ ⊗ Π_k (a_k†)^{n_k} a_k^{m_k} with n_k, m_k ∈ {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    pub qubit: QubitOp,
    pub orders: Vec<(u8, u8)>,
}

impl Signature {
    pub fn photonic(orders: Vec<(u8, u8)>) -> Self {
        Self {
            qubit: QubitOp::I,
            orders,
        }
    }

    /// All 4ⁿ photonic signatures for each qubit factor, photon 1 varying slowest.
    pub fn all(n_photons: usize, qubit: &[QubitOp]) -> Vec<Signature> {
        let mut out = Vec::with_capacity(qubit.len() << (2 * n_photons));
        for &q in qubit {
            for code in 0..1usize << (2 * n_photons) {
                let orders = (0..n_photons)
                    .map(|k| {
                        let c = (code >> (2 * (n_photons - 1 - k))) & 3;
                        ((c >> 1) as u8, (c & 1) as u8)
                    })
                    .collect();
                out.push(Signature { qubit: q, orders });
            }
        }
        out
    }

    pub fn conjugate(&self) -> Self {
        Self {
            qubit: self.qubit,
            orders: self.orders.iter().map(|&(n, m)| (m, n)).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.qubit == QubitOp::I && self.orders.iter().all(|&o| o == (0, 0))
    }

    /// Total number of field operators.
    pub fn order(&self) -> usize {
        self.orders.iter().map(|&(n, m)| (n + m) as usize).sum()
    }

    pub fn key(&self) -> String {
        let body: Vec<String> = self.orders.iter().map(|(n, m)| format!("{n}{m}")).collect();
        format!("{}:{}", self.qubit.letter(), body.join("."))
    }

    pub fn parse(key: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("malformed moment signature '{key}'"));
        let (q, body) = key.split_once(':').ok_or_else(bad)?;
        let qubit = match q {
            "I" => QubitOp::I,
            "X" => QubitOp::X,
            "Y" => QubitOp::Y,
            "Z" => QubitOp::Z,
            _ => return Err(bad()),
        };
        let mut orders = Vec::new();
        if !body.is_empty() {
            for part in body.split('.') {
                let b = part.as_bytes();
                if b.len() != 2 || !b.iter().all(|c| *c == b'0' || *c == b'1') {
                    return Err(bad());
                }
                orders.push((b[0] - b'0', b[1] - b'0'));
            }
        }
        Ok(Self { qubit, orders })
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Estimated moment: sample mean, per-shot sample variance and shot count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub mean: C64,
    pub variance: f64,
    pub count: u64,
}

impl Moment {
    /// Variance of the mean.
    pub fn mean_variance(&self) -> f64 {
        self.variance / self.count.max(1) as f64
    }
}

/// Moments keyed by signature (see [`Signature::key`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub n_photons: usize,
    /// Whether qubit-correlated signatures are present.
    pub qubit: bool,
    pub entries: BTreeMap<String, Moment>,
}

impl MomentTable {
    pub fn get(&self, sig: &Signature) -> Option<&Moment> {
        self.entries.get(&sig.key())
    }

    pub fn mean(&self, key: &str) -> Option<C64> {
        self.entries.get(key).map(|m| m.mean)
    }

    /// Signatures a complete table must hold.
    pub fn required(&self) -> Vec<Signature> {
        let ops: &[QubitOp] = if self.qubit {
            &QubitOp::ALL
        } else {
            &[QubitOp::I]
        };
        Signature::all(self.n_photons, ops)
    }

    /// Error naming the first missing signature, if any.
    pub fn check_complete(&self) -> Result<()> {
        for s in self.required() {
            match self.get(&s) {
                None => return Err(Error::Missing(format!("moment signature {s}"))),
                Some(m) if m.count == 0 => {
                    return Err(Error::Missing(format!("moment signature {s} has no shots")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Largest |mean(conj sig) − conj(mean(sig))| over the table.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, m) in &self.entries {
            if let Ok(sig) = Signature::parse(k) {
                if let Some(c) = self.get(&sig.conjugate()) {
                    worst = worst.max((c.mean - m.mean.conj()).norm());
                }
            }
        }
        worst
    }
}

/// Sparse matrix of a correlator on (qubit ⊗) photons: at most one entry per column.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentOperator {
    pub dim: usize,
    /// (row, column, value)
    pub entries: Vec<(usize, usize, C64)>,
}

impl MomentOperator {
    pub fn new(sig: &Signature, qubit: bool) -> Self {
        let n = sig.orders.len();
        let d = 1 << n;
        let dim = d << usize::from(qubit);
        let mut entries = Vec::with_capacity(dim);
        'col: for col in 0..dim {
            let (mut row, mut val) = (col % d, ONE);
            for (k, &(cr, an)) in sig.orders.iter().enumerate() {
                let bit = 1 << (n - 1 - k);
                let occ = row & bit != 0;
                match (cr, an) {
                    (0, 0) => {}
                    (0, 1) if occ => row ^= bit,
                    (1, 0) if !occ => row ^= bit,
                    (1, 1) if occ => {}
                    _ => continue 'col,
                }
            }
            if qubit {
                let (q, a) = sig.qubit.act(col / d);
                row += q * d;
                val *= a;
            } else if sig.qubit != QubitOp::I {
                continue;
            }
            entries.push((row, col, val));
        }
        Self { dim, entries }
    }

    /// Tr(Aρ).
    pub fn expectation(&self, rho: &CMat) -> C64 {
        self.entries.iter().map(|&(r, c, v)| v * rho[(c, r)]).sum()
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v;
        }
        m
    }
}

/// Exact moments Tr(ρM) for every signature, with zero variance and unit count.
pub fn exact_moments(rho: &CMat, n_photons: usize, qubit: bool) -> Result<MomentTable> {
    let dim = (1 << n_photons) << usize::from(qubit);
    if rho.nrows() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: rho.nrows(),
        });
    }
    let ops: &[QubitOp] = if qubit { &QubitOp::ALL } else { &[QubitOp::I] };
    let entries = Signature::all(n_photons, ops)
        .into_iter()
        .map(|s| {
            let mean = MomentOperator::new(&s, qubit).expectation(rho);
            (
                s.key(),
                Moment {
                    mean,
                    variance: 0.0,
                    count: 1,
                },
            )
        })
        .collect();
    Ok(MomentTable {
        n_photons,
        qubit,
        entries,
    })
}

/// Corrections applied while estimating.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Qubit readout confusion to invert on qubit-correlated moments.
    pub confusion: Option<[[f64; 2]; 2]>,
    /// Relative detection gain per photon (⟨a†a⟩ scale); moments are divided by
    /// gain^{(n+m)/2}. Empty = no correction.
    pub gain: Vec<f64>,
}

/// Running sums for one batch chunk.
struct Sums {
    id: Vec<C64>,
    id_sq: Vec<f64>,
    q: Vec<C64>,
    q_sq: Vec<f64>,
    count: u64,
}

/// Deconvolved moments from signal batches and a dark batch.
///
/// With S = a + h† and h thermal, independent and circular, every normal-ordered moment
/// with n, m ≤ 1 follows from replacing |S_k|² by |S_k|² − ⟨|S_k|²⟩_dark in the shot
/// products, so each shot contributes an unbiased sample and the sample variance is the
/// per-shot variance of that estimator plus the propagated uncertainty of the dark
/// power (scaled so that `variance / count` is the variance of the mean). Qubit-correlated moments use shots that carry
/// outcomes; the identity factor pools all batches.
pub fn estimate_moments(
    batches: &[ShotBatch],
    dark: &ShotBatch,
    opts: &EstimateOptions,
) -> Result<MomentTable> {
    let first = batches
        .first()
        .ok_or_else(|| Error::Missing("no signal batches supplied".into()))?;
    let n = first.n_photons;
    if !dark.dark {
        return Err(Error::Domain(
            "dark batch is not flagged as noise-only".into(),
        ));
    }
    if dark.n_photons != n {
        return Err(Error::Missing(format!(
            "dark data for {n} photons (dark batch has {})",
            dark.n_photons
        )));
    }
    let qubit = first.basis.is_some();
    for b in batches {
        if b.n_photons != n || b.basis.is_some() != qubit {
            return Err(Error::Domain("signal batches differ in layout".into()));
        }
        if b.dark {
            return Err(Error::Domain("dark batch passed as signal".into()));
        }
        if (dark.shots() as f64) < b.shots() as f64 / 10.0 {
            return Err(Error::Missing(format!(
                "dark batch has {} shots; at least a tenth of {} required",
                dark.shots(),
                b.shots()
            )));
        }
    }
    if !opts.gain.is_empty() && opts.gain.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: opts.gain.len(),
        });
    }
    // Per-mode dark power N_k and the variance of its estimate.
    let nd = dark.shots() as f64;
    let (noise, noise_var): (Vec<f64>, Vec<f64>) = (1..=n)
        .map(|k| {
            let p: Vec<f64> = (0..dark.shots())
                .map(|s| dark.field(s, k).norm_sqr())
                .collect();
            let mean = p.iter().sum::<f64>() / nd;
            let var = p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nd - 1.0).max(1.0);
            (mean, var / nd)
        })
        .unzip();
    let size = 1usize << (2 * n);
    let scale: Vec<f64> = (0..size)
        .map(|code| {
            (0..n)
                .map(|k| {
                    let c = (code >> (2 * (n - 1 - k))) & 3;
                    let g = opts.gain.get(k).copied().unwrap_or(1.0);
                    g.powf(-0.5 * ((c >> 1) + (c & 1)) as f64)
                })
                .product()
        })
        .collect();
    // Weights turning (read g, read e) into the corrected ⟨σ⟩ contribution.
    let w = match opts.confusion {
        None => [1.0, -1.0],
        Some(c) => {
            let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
            if det.abs() < 1e-12 {
                return Err(Error::Singular("readout confusion matrix".into()));
            }
            // (1, −1)·C⁻¹
            [(c[1][1] + c[1][0]) / det, -(c[0][1] + c[0][0]) / det]
        }
    };

    let mut total_id = vec![ZERO; size];
    let mut total_id_sq = vec![0.0; size];
    let mut id_count = 0u64;
    let mut per_basis: BTreeMap<super::QubitBasis, (Vec<C64>, Vec<f64>, u64)> = BTreeMap::new();
    for b in batches {
        let s = batch_sums(b, &noise, &scale, w);
        for i in 0..size {
            total_id[i] += s.id[i];
            total_id_sq[i] += s.id_sq[i];
        }
        id_count += s.count;
        if let Some(basis) = b.basis {
            let e = per_basis
                .entry(basis)
                .or_insert_with(|| (vec![ZERO; size], vec![0.0; size], 0));
            for i in 0..size {
                e.0[i] += s.q[i];
                e.1[i] += s.q_sq[i];
            }
            e.2 += s.count;
        }
    }
    let sigs = Signature::all(n, &[QubitOp::I]);
    let mut entries = BTreeMap::new();
    let finish = |sum: C64, sq: f64, count: u64| {
        let c = count as f64;
        let mean = sum / c;
        let variance = if count > 1 {
            ((sq - c * mean.norm_sqr()) / (c - 1.0)).max(0.0)
        } else {
            0.0
        };
        Moment {
            mean,
            variance,
            count,
        }
    };
    let mut blocks: Vec<(QubitOp, Vec<Moment>)> = vec![(
        QubitOp::I,
        (0..size)
            .map(|i| finish(total_id[i], total_id_sq[i], id_count))
            .collect(),
    )];
    for (basis, (sum, sq, count)) in &per_basis {
        let op = match basis {
            super::QubitBasis::X => QubitOp::X,
            super::QubitBasis::Y => QubitOp::Y,
            super::QubitBasis::Z => QubitOp::Z,
        };
        blocks.push((
            op,
            (0..size).map(|i| finish(sum[i], sq[i], *count)).collect(),
        ));
    }
    // The subtracted N_k is itself an estimate: ∂⟨…a_k†a_k…⟩/∂N_k = −⟨…1_k…⟩/gain_k.
    for (op, block) in blocks {
        for i in 0..size {
            let mut extra = 0.0;
            for k in 0..n {
                let shift = 2 * (n - 1 - k);
                if (i >> shift) & 3 == 3 {
                    let lower = i & !(3 << shift);
                    let g = opts.gain.get(k).copied().unwrap_or(1.0);
                    extra += (block[lower].mean / g).norm_sqr() * noise_var[k];
                }
            }
            let mut m = block[i];
            m.variance += extra * m.count as f64;
            let sig = Signature {
                qubit: op,
                orders: sigs[i].orders.clone(),
            };
            entries.insert(sig.key(), m);
        }
    }
    Ok(MomentTable {
        n_photons: n,
        qubit,
        entries,
    })
}

fn batch_sums(b: &ShotBatch, noise: &[f64], scale: &[f64], w: [f64; 2]) -> Sums {
    let n = b.n_photons;
    let size = scale.len();
    let qubit = b.basis.is_some();
    let shots = b.shots();
    let chunks = shots.div_ceil(CHUNK);
    let job = |c: usize| {
        let mut s = Sums {
            id: vec![ZERO; size],
            id_sq: vec![0.0; size],
            q: vec![ZERO; if qubit { size } else { 0 }],
            q_sq: vec![0.0; if qubit { size } else { 0 }],
            count: 0,
        };
        let mut y = vec![ZERO; size];
        let mut tmp = vec![ZERO; size];
        for shot in c * CHUNK..((c + 1) * CHUNK).min(shots) {
            y[0] = ONE;
            let mut len = 1;
            for k in 1..=n {
                let z = b.field(shot, k);
                let f = [ONE, z, z.conj(), C64::new(z.norm_sqr() - noise[k - 1], 0.0)];
                for i in 0..len {
                    for (j, fj) in f.iter().enumerate() {
                        tmp[4 * i + j] = y[i] * fj;
                    }
                }
                len *= 4;
                y[..len].copy_from_slice(&tmp[..len]);
            }
            for i in 0..size {
                let v = y[i] * scale[i];
                s.id[i] += v;
                s.id_sq[i] += v.norm_sqr();
            }
            if qubit {
                let wq = w[usize::from(b.outcomes[shot])];
                for i in 0..size {
                    let v = y[i] * (scale[i] * wq);
                    s.q[i] += v;
                    s.q_sq[i] += v.norm_sqr();
                }
            }
            s.count += 1;
        }
        s
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Sums> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Sums> = (0..chunks).map(job).collect();
    let mut total = Sums {
        id: vec![ZERO; size],
        id_sq: vec![0.0; size],
        q: vec![ZERO; if qubit { size } else { 0 }],
        q_sq: vec![0.0; if qubit { size } else { 0 }],
        count: 0,
    };
    for p in parts {
        for i in 0..size {
            total.id[i] += p.id[i];
            total.id_sq[i] += p.id_sq[i];
        }
        for i in 0..p.q.len() {
            total.q[i] += p.q[i];
            total.q_sq[i] += p.q_sq[i];
        }
        total.count += p.count;
    }
    total
}

/// Relative gain of the fast photon class: ⟨a†a⟩_fast / ⟨a†a⟩_slow for `photon`, both
/// prepared from a full |f⟩ excitation.
pub fn bandwidth_gain_split(slow: &MomentTable, fast: &MomentTable, photon: usize) -> Result<f64> {
    let number = |t: &MomentTable| -> Result<f64> {
        let mut orders = vec![(0u8, 0u8); t.n_photons];
        let slot = orders
            .get_mut(photon.wrapping_sub(1))
            .ok_or_else(|| Error::Missing(format!("photon {photon} in moment table")))?;
        *slot = (1, 1);
        t.get(&Signature::photonic(orders))
            .map(|m| m.mean.re)
            .ok_or_else(|| Error::Missing(format!("⟨a†a⟩ of photon {photon}")))
    };
    let (s, f) = (number(slow)?, number(fast)?);
    if s <= 0.0 {
        return Err(Error::Domain(format!(
            "slow-class photon number {s} must be positive"
        )));
    }
    let ratio = f / s;
    if !(0.8..=1.2).contains(&ratio) {
        return Err(Error::CalibrationAlarm { ratio });
    }
    Ok(ratio)
}

/// Mean of Π S_k or S_k* over the listed (photon, conjugate) factors, and its standard error.
pub fn raw_moment(batch: &ShotBatch, factors: &[(usize, bool)]) -> (C64, f64) {
    let n = batch.shots();
    let vals: Vec<C64> = (0..n)
        .map(|s| {
            factors.iter().fold(ONE, |acc, &(k, conj)| {
                let z = batch.field(s, k);
                acc * if conj { z.conj() } else { z }
            })
        })
        .collect();
    let mean = vals.iter().sum::<C64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n.max(2) - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// ⟨(a†)²a²⟩ of one photon from fourth-order heterodyne moments:
/// E|S|⁴ − 4N·E|S|² + 2N² with N = E|S|²_dark. Returns (estimate, standard error).
pub fn number_squared_moment(batch: &ShotBatch, dark: &ShotBatch, photon: usize) -> (f64, f64) {
    let nd = (0..dark.shots())
        .map(|s| dark.field(s, photon).norm_sqr())
        .sum::<f64>()
        / dark.shots() as f64;
    let n = batch.shots();
    let vals: Vec<f64> = (0..n)
        .map(|s| {
            let p = batch.field(s, photon).norm_sqr();
            p * p - 4.0 * nd * p + 2.0 * nd * nd
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
