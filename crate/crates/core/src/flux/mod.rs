//! Flux control of the emitter: tuning curve, sideband spectra under flux
//! modulation, DC-shift correction, shaped envelopes and step pre-distortion.

mod envelope;
mod predistort;
mod sideband;

pub use envelope::{erf_envelope, Envelope};
pub use predistort::{
    apply_step_response, predistort_square, DistortionModel, Kernel, PredistortOptions,
    Predistortion,
};
pub use sideband::{
    dc_correction, dc_correction_grid, drive_from_envelope, sideband_spectrum,
    sideband_spectrum_of, spectrum_from_trace, FluxDrive, ModulationPoint, SidebandSpectrum,
    SidebandWindow, XiTable,
};

use crate::error::{require, Error, Result};
use crate::units::{ghz, mhz};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Transmon parameters. Frequencies in rad/s, times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmonSpec {
    /// ge transition at the upper sweet spot (Φ = 0).
    pub f_max: f64,
    /// Anharmonicity ω_ef − ω_ge (negative).
    pub eta: f64,
    /// SQUID junction asymmetry d ∈ [0, 1].
    pub asymmetry: f64,
    pub t1: f64,
    pub t2_star: f64,
    pub thermal_pop: f64,
}

impl TransmonSpec {
    pub fn emitter() -> Self {
        Self {
            f_max: ghz(6.21),
            eta: mhz(-273.0),
            asymmetry: 0.0,
            t1: 34e-6,
            t2_star: 561e-9,
            thermal_pop: 0.01,
        }
    }

    /// ge frequency at the lower sweet spot (Φ = ½).
    pub fn f_min(&self) -> f64 {
        let e = self.eta.abs();
        (self.f_max + e) * self.asymmetry.sqrt() - e
    }

    /// Sets the asymmetry so that the lower sweet spot sits at `f_min`.
    pub fn with_f_min(mut self, f_min: f64) -> Result<Self> {
        let e = self.eta.abs();
        let r = (f_min + e) / (self.f_max + e);
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Invalid {
                field: "f_min",
                reason: format!("lower sweet spot {f_min:.4e} rad/s not below f_max"),
            });
        }
        self.asymmetry = r * r;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.f_max > 0.0, "f_max", "must be positive")?;
        require(
            self.eta < 0.0,
            "anharmonicity",
            format!("must be negative, got {}", self.eta),
        )?;
        require(
            (0.0..=1.0).contains(&self.asymmetry),
            "asymmetry",
            "must lie in [0, 1]",
        )?;
        require(self.f_max > self.f_min(), "f_min", "must be below f_max")?;
        require(
            (0.0..0.5).contains(&self.thermal_pop),
            "thermal_pop",
            format!("must lie in [0, 0.5), got {}", self.thermal_pop),
        )?;
        require(self.t2_star > 0.0, "t2_star", "must be positive")?;
        require(self.t1 > 0.0, "t1", "must be positive")?;
        Ok(())
    }

    /// ω_ge(Φ) for the asymmetric transmon.
    pub fn omega_ge(&self, phi: f64) -> f64 {
        let e = self.eta.abs();
        let d2 = self.asymmetry * self.asymmetry;
        let c = (PI * phi).cos();
        (self.f_max + e) * (d2 + (1.0 - d2) * c * c).sqrt().sqrt() - e
    }

    pub fn omega_ef(&self, phi: f64) -> f64 {
        self.omega_ge(phi) + self.eta
    }

    /// Smallest non-negative bias with ω_ge(Φ) = `omega` (bisection on [0, ½]).
    pub fn bias_for_ge(&self, omega: f64) -> Result<f64> {
        let (mut lo, mut hi) = (0.0, 0.5);
        let (top, bottom) = (self.omega_ge(lo), self.omega_ge(hi));
        if omega > top || omega < bottom {
            return Err(Error::Domain(format!(
                "ω_ge = {omega:.4e} rad/s outside tunable range [{bottom:.4e}, {top:.4e}]"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.omega_ge(mid) > omega {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// (ω_ge, ω_ef) at flux Φ (in flux quanta).
pub fn tuning_curve(spec: &TransmonSpec, phi: f64) -> (f64, f64) {
    (spec.omega_ge(phi), spec.omega_ef(phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::to_mhz;

    #[test]
    fn sweet_spots() {
        let s = TransmonSpec::emitter().with_f_min(ghz(3.9)).unwrap();
        assert!((s.omega_ge(0.0) - s.f_max).abs() < 1.0);
        assert!((s.omega_ge(0.5) - ghz(3.9)).abs() < 1e3);
        let (ge, ef) = tuning_curve(&s, 0.1);
        assert!((ge - ef - mhz(273.0)).abs() < 1e-3);
    }

    #[test]
    fn emission_bias_places_sideband_near_band_centre() {
        let s = TransmonSpec::emitter();
        let phi = s.bias_for_ge(ghz(5.55)).unwrap();
        assert!((s.omega_ge(phi) - ghz(5.55)).abs() < 1e3);
        let lower_sideband = s.omega_ef(phi) - mhz(450.0);
        assert!((to_mhz(lower_sideband) - 4823.0).abs() < 10.0);
    }
}
