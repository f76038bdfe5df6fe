use crate::error::{require, Error, Result};
use crate::linalg::{herm_eig, CMat, C64};
use crate::optim::golden_section;
use serde::{Deserialize, Serialize};

/// Driven transmon ladder in the frame of a drive at ω_p:
/// H = Σ_j (jΔ + j(j−1)η/2)|j⟩⟨j| + (Ω/2)Σ_j √(j+1)(|j+1⟩⟨j| + h.c.), Δ = ω_ge − ω_p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcStarkModel {
    pub levels: usize,
    /// ω_ge − ω_p (rad/s).
    pub detuning: f64,
    /// ω_ef − ω_ge (rad/s).
    pub anharmonicity: f64,
    /// Emission rate into the waveguide at band centre (rad/s); Ω = |α|√(4Γ_1D).
    pub gamma_1d: f64,
}

impl AcStarkModel {
    pub fn reference() -> Self {
        use crate::units::mhz;
        Self {
            levels: 5,
            detuning: mhz(740.0),
            anharmonicity: mhz(-277.0),
            gamma_1d: 2.0 * mhz(35.16).powi(2) / mhz(33.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(
            self.levels >= 2,
            "levels",
            "need at least two transmon levels",
        )?;
        require(
            self.detuning != 0.0 && self.detuning.is_finite(),
            "detuning",
            "must be non-zero",
        )?;
        require(self.gamma_1d > 0.0, "gamma_1d", "must be positive")?;
        Ok(())
    }

    pub fn hamiltonian(&self, rabi: f64) -> CMat {
        let n = self.levels;
        let mut h = CMat::zeros(n, n);
        for j in 0..n {
            let jf = j as f64;
            h[(j, j)] = C64::new(
                jf * self.detuning + 0.5 * jf * (jf - 1.0) * self.anharmonicity,
                0.0,
            );
            if j + 1 < n {
                let c = C64::new(0.5 * rabi * (jf + 1.0).sqrt(), 0.0);
                h[(j + 1, j)] = c;
                h[(j, j + 1)] = c;
            }
        }
        h
    }

    /// Rabi frequency for a drive amplitude |α| in √(photons/s).
    pub fn rabi(&self, alpha: f64) -> f64 {
        alpha * (4.0 * self.gamma_1d).sqrt()
    }
}

/// Δ^AC = (E_ẽ − E_g̃) − Δ, with dressed states chosen by largest overlap with |g⟩, |e⟩.
pub fn stark_shift(model: &AcStarkModel, rabi: f64) -> f64 {
    let (vals, vecs) = herm_eig(&model.hamiltonian(rabi));
    let dressed = |bare: usize| {
        (0..vals.len())
            .max_by(|&a, &b| {
                vecs[(bare, a)]
                    .norm_sqr()
                    .total_cmp(&vecs[(bare, b)].norm_sqr())
            })
            .map(|i| vals[i])
            .unwrap_or(0.0)
    };
    dressed(1) - dressed(0) - model.detuning
}

/// Result of fitting the ADC-to-field conversion factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarkFit {
    /// G in √(photons/s) per ADC volt.
    pub gain: f64,
    pub rms_residual: f64,
    pub warnings: Vec<String>,
}

/// Fit G so that Δ^AC(Ω = V·G·√(4Γ_1D)) reproduces the measured shifts.
pub fn ac_stark_calibration(
    model: &AcStarkModel,
    volts: &[f64],
    shifts: &[f64],
) -> Result<StarkFit> {
    model.validate()?;
    if volts.len() != shifts.len() || volts.is_empty() {
        return Err(Error::Dimension {
            expected: volts.len(),
            got: shifts.len(),
        });
    }
    // Weak-drive curvature κ = Δ^AC/Ω² seeds the bracket.
    let probe = 1e-3 * model.detuning.abs();
    let kappa = stark_shift(model, probe) / (probe * probe);
    let s4: f64 = volts.iter().map(|v| v.powi(4)).sum();
    let s2y: f64 = volts.iter().zip(shifts).map(|(v, y)| v * v * y).sum();
    let g2 = s2y / (kappa * 4.0 * model.gamma_1d * s4);
    if !(g2 > 0.0 && g2.is_finite()) {
        return Err(Error::NoConvergence(
            "Stark shifts have the wrong sign for this detuning".into(),
        ));
    }
    let g0 = g2.sqrt();
    let cost = |lg: f64| -> f64 {
        let g = lg.exp();
        volts
            .iter()
            .zip(shifts)
            .map(|(v, y)| (stark_shift(model, model.rabi(v * g)) - y).powi(2))
            .sum()
    };
    let (lo, hi) = (g0.ln() - 1.5, g0.ln() + 1.5);
    let lg = golden_section(cost, lo, hi, 1e-10);
    if (lg - lo).abs() < 1e-6 || (hi - lg).abs() < 1e-6 {
        return Err(Error::NoConvergence("gain fit ran into its bracket".into()));
    }
    let gain = lg.exp();
    let mut warnings = Vec::new();
    let vmax = volts.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let omax = model.rabi(vmax * gain);
    if omax > 0.5 * model.detuning.abs() {
        warnings.push(format!(
            "peak Rabi frequency {:.3e} rad/s exceeds |Δ|/2; the drive is outside the dispersive regime",
            omax
        ));
    }
    Ok(StarkFit {
        gain,
        rms_residual: (cost(lg) / volts.len() as f64).sqrt(),
        warnings,
    })
}

/// Absolute calibration of the detection chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationG {
    pub gain: f64,
    pub efficiency: f64,
    pub n_noise: f64,
    /// ⟨a†a⟩ scale of the fast photon class relative to the slow one.
    pub fast_factor: f64,
}

impl CalibrationG {
    pub fn validate(&self) -> Result<()> {
        require(self.gain > 0.0, "gain", "must be positive")?;
        require(
            self.efficiency > 0.0 && self.efficiency <= 1.0,
            "efficiency",
            "must be in (0, 1]",
        )?;
        require(self.n_noise >= 0.0, "n_noise", "must be ≥ 0")?;
        require(
            (0.8..=1.2).contains(&self.fast_factor),
            "fast_factor",
            "must be in [0.8, 1.2]",
        )
    }
}
