//! Coupled-resonator-array (slow-light) waveguide: cosine dispersion, group
//! delay, emission rates and the capacitance → coupling conversion.

use crate::error::{require, Error, Result};
use crate::units::{ghz, mhz, FF, NH};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative margin kept away from the band edges, where the group delay diverges.
pub const BANDEDGE_MARGIN: f64 = 1e-9;

/// Parameters of the resonator array, all angular frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveguideSpec {
    pub n_cells: usize,
    pub hop_j: f64,
    pub passband_center: f64,
    pub taper_d1: f64,
    pub taper_d2: f64,
    pub taper_j1: f64,
    pub output_load: f64,
    pub roundtrip_loss: f64,
}

impl WaveguideSpec {
    /// Design targets of the fabricated array (J/2π = 33.5 MHz, ω_p/2π = 4.744 GHz).
    pub fn design() -> Self {
        Self {
            hop_j: mhz(33.5),
            passband_center: ghz(4.744),
            ..Self::fitted()
        }
    }

    /// Values extracted from the time-domain fits of the device.
    pub fn fitted() -> Self {
        Self {
            n_cells: 50,
            hop_j: mhz(33.96),
            passband_center: ghz(4.823),
            taper_d1: mhz(-6.0),
            taper_d2: mhz(-70.0),
            taper_j1: mhz(45.4),
            output_load: mhz(148.0),
            roundtrip_loss: 0.13,
        }
    }

    /// Same bulk parameters with an impedance-matched, reflectionless boundary:
    /// undetuned taper cells, J1 = J and κ = 2J.
    pub fn matched(self) -> Self {
        Self {
            taper_d1: 0.0,
            taper_d2: 0.0,
            taper_j1: self.hop_j,
            output_load: 2.0 * self.hop_j,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(
            self.n_cells >= 2,
            "n_cells",
            format!("need at least 2 cells, got {}", self.n_cells),
        )?;
        require(
            self.hop_j > 0.0 && self.hop_j.is_finite(),
            "hop_J",
            format!("must be positive, got {}", self.hop_j),
        )?;
        require(
            self.passband_center.is_finite(),
            "passband_center",
            "must be finite",
        )?;
        require(
            self.output_load >= 0.0,
            "output_load",
            format!("must be non-negative, got {}", self.output_load),
        )?;
        require(
            (0.0..1.0).contains(&self.roundtrip_loss),
            "roundtrip_loss",
            format!("must lie in [0, 1), got {}", self.roundtrip_loss),
        )?;
        Ok(())
    }

    /// Passband as (lower, upper) edge.
    pub fn passband(&self) -> (f64, f64) {
        (
            self.passband_center - 2.0 * self.hop_j,
            self.passband_center + 2.0 * self.hop_j,
        )
    }

    pub fn bandwidth(&self) -> f64 {
        4.0 * self.hop_j
    }
}

/// ω_k = ω_p + 2J cos k for k ∈ (0, π).
pub fn dispersion(spec: &WaveguideSpec, k: f64) -> Result<f64> {
    if !(k > 0.0 && k < PI) {
        return Err(Error::Domain(format!("wavevector {k} outside (0, π)")));
    }
    Ok(spec.passband_center + 2.0 * spec.hop_j * k.cos())
}

/// Inverse dispersion; errors outside the open passband.
pub fn wavevector(spec: &WaveguideSpec, omega: f64) -> Result<f64> {
    let x = (omega - spec.passband_center) / (2.0 * spec.hop_j);
    if x.abs() >= 1.0 - BANDEDGE_MARGIN {
        return Err(Error::BandEdge {
            omega,
            limit: 2.0 * spec.hop_j * (1.0 - BANDEDGE_MARGIN),
        });
    }
    Ok(x.acos())
}

/// One-way delay per unit cell, 1/|dω/dk| = 1/(2J sin k).
pub fn group_delay(spec: &WaveguideSpec, omega: f64) -> Result<f64> {
    let k = wavevector(spec, omega)?;
    Ok(1.0 / (2.0 * spec.hop_j * k.sin()))
}

/// Round-trip delay at band centre, τ_d = N/J.
pub fn round_trip(spec: &WaveguideSpec) -> f64 {
    spec.n_cells as f64 / spec.hop_j
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    EndCoupled,
    SideCoupled,
}

/// Emission rate into the array at band centre: 2g²/J (end) or g²/J (side).
pub fn gamma_1d(g_uc: f64, hop_j: f64, geometry: Geometry) -> Result<f64> {
    if !(hop_j > 0.0) {
        return Err(Error::Domain(format!(
            "hop rate must be positive, got {hop_j}"
        )));
    }
    let end = 2.0 * g_uc * g_uc / hop_j;
    Ok(match geometry {
        Geometry::EndCoupled => end,
        Geometry::SideCoupled => 0.5 * end,
    })
}

/// Lumped-element parameters (SI units: henry, farad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub l0: f64,
    pub c0: f64,
    pub cg: f64,
    pub c_qg: f64,
    pub c_sigma: f64,
}

impl CircuitParams {
    /// Emitter design values. The qubit's total capacitance is not quoted with the
    /// design values; 58.3 fF is the value consistent with the quoted 38.5 MHz.
    pub fn emitter_design() -> Self {
        Self {
            l0: 3.1 * NH,
            c0: 353.0 * FF,
            cg: 5.05 * FF,
            c_qg: 2.41 * FF,
            c_sigma: 58.3 * FF,
        }
    }

    /// Mirror design values; total capacitance inferred likewise (55.6 fF ↔ 85.6 MHz).
    pub fn mirror_design() -> Self {
        Self {
            c_qg: 5.37 * FF,
            c_sigma: 55.6 * FF,
            ..Self::emitter_design()
        }
    }

    /// The closed-form coupling assumes Cg ≪ C0; flagged when Cg/C0 > 0.1.
    pub fn weak_coupling_violated(&self) -> bool {
        self.cg / self.c0 > 0.1
    }

    /// Unit-cell resonance 1/√(L0 (C0 + 2Cg)).
    pub fn cell_frequency(&self) -> f64 {
        1.0 / (self.l0 * (self.c0 + 2.0 * self.cg)).sqrt()
    }
}

/// g_uc = C_qg ω_p / (2 √((C0 + 2Cg)(CΣ + C_qg))).
pub fn coupling_from_circuit(params: &CircuitParams, omega_p: f64) -> Result<f64> {
    let vals = [
        ("l0", params.l0),
        ("c0", params.c0),
        ("cg", params.cg),
        ("c_qg", params.c_qg),
        ("c_sigma", params.c_sigma),
    ];
    for (name, v) in vals {
        if !(v > 0.0) {
            return Err(Error::Domain(format!(
                "circuit parameter {name} must be positive, got {v}"
            )));
        }
    }
    if !(omega_p > 0.0) {
        return Err(Error::Domain("ω_p must be positive".into()));
    }
    Ok(params.c_qg * omega_p
        / (2.0 * ((params.c0 + 2.0 * params.cg) * (params.c_sigma + params.c_qg)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::to_mhz;

    #[test]
    fn band_center_maps_to_quarter_wavevector() {
        let s = WaveguideSpec::fitted();
        assert!((dispersion(&s, PI / 2.0).unwrap() - s.passband_center).abs() < 1e-3);
        assert!(dispersion(&s, 0.0).is_err());
        assert!(dispersion(&s, PI).is_err());
    }

    #[test]
    fn band_edge_rejected() {
        let s = WaveguideSpec::fitted();
        let (lo, hi) = s.passband();
        assert!(group_delay(&s, hi).is_err());
        assert!(group_delay(&s, lo).is_err());
        assert!(group_delay(&s, hi - 1e-3 * s.hop_j).is_ok());
    }

    #[test]
    fn emitter_coupling_from_design_capacitances() {
        let g = coupling_from_circuit(&CircuitParams::emitter_design(), ghz(4.744)).unwrap();
        assert!((to_mhz(g) - 38.5).abs() < 0.2, "{}", to_mhz(g));
        let gm = coupling_from_circuit(&CircuitParams::mirror_design(), ghz(4.744)).unwrap();
        assert!((to_mhz(gm) - 85.6).abs() < 0.3, "{}", to_mhz(gm));
    }

    #[test]
    fn validation_names_fields() {
        let mut s = WaveguideSpec::fitted();
        s.hop_j = -1.0;
        match s.validate() {
            Err(Error::Invalid { field, .. }) => assert_eq!(field, "hop_J"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
