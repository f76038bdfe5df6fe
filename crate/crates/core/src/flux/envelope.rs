use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniformly sampled coupling envelope ξ(t), starting at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl Envelope {
    pub fn constant(xi: f64, window: f64, dt: f64) -> Result<Self> {
        check_grid(window, dt)?;
        let n = (window / dt).round() as usize + 1;
        Ok(Self {
            dt,
            values: vec![xi; n],
        })
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.values.len().saturating_sub(1) as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| i as f64 * self.dt)
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// Instantaneous emission rate Γ·|ξ(t)|².
    pub fn gamma_track(&self, gamma: f64) -> Vec<f64> {
        self.values.iter().map(|&x| gamma * x * x).collect()
    }

    /// Linear interpolation; holds the last value past the end.
    pub fn at(&self, t: f64) -> f64 {
        if self.values.is_empty() || t < 0.0 {
            return 0.0;
        }
        let x = t / self.dt;
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let w = x - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

fn check_grid(window: f64, dt: f64) -> Result<()> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::Invalid {
            field: "window",
            reason: format!("must be positive, got {window}"),
        });
    }
    if !(dt > 0.0 && dt <= window) {
        return Err(Error::Invalid {
            field: "dt",
            reason: format!("must lie in (0, window], got {dt}"),
        });
    }
    Ok(())
}

/// ξ(t) = ξ_M erf²(t/t_R + δ) sampled on [0, window].
pub fn erf_envelope(t_r: f64, delta: f64, xi_max: f64, window: f64, dt: f64) -> Result<Envelope> {
    if !(t_r > 0.0 && t_r.is_finite()) {
        return Err(Error::Invalid {
            field: "t_R",
            reason: format!("must be positive, got {t_r}"),
        });
    }
    if !delta.is_finite() || !xi_max.is_finite() {
        return Err(Error::Domain("envelope parameters must be finite".into()));
    }
    check_grid(window, dt)?;
    let n = (window / dt).round() as usize + 1;
    let values = (0..n)
        .map(|i| {
            // erf² is even; clamp so that negative arguments do not make the envelope dip.
            let e = libm::erf((i as f64 * dt / t_r + delta).max(0.0));
            xi_max * e * e
        })
        .collect();
    Ok(Envelope { dt, values })
}
