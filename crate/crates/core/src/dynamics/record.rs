use crate::linalg::{C64, ZERO};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Time series produced by a lattice run. `a_out` is in √(photons/s), `flux` in photons/s.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputRecord {
    pub dt: f64,
    pub t: Vec<f64>,
    pub a_out: Vec<C64>,
    pub flux: Vec<f64>,
    pub emitter_pop: Vec<f64>,
    pub mirror_pop: Vec<f64>,
    /// Cumulative emitted excitation ∫κ|ψ_out|² dt.
    pub emitted: Vec<f64>,
    /// Norm of the state that remains in the system.
    pub remaining: Vec<f64>,
    pub initial_norm: f64,
    #[serde(skip)]
    pub final_state: Vec<C64>,
}

impl OutputRecord {
    pub(crate) fn with_capacity(n: usize, dt: f64) -> Self {
        Self {
            dt,
            t: Vec::with_capacity(n),
            a_out: Vec::with_capacity(n),
            flux: Vec::with_capacity(n),
            emitter_pop: Vec::with_capacity(n),
            mirror_pop: Vec::with_capacity(n),
            emitted: Vec::with_capacity(n),
            remaining: Vec::with_capacity(n),
            initial_norm: 0.0,
            final_state: Vec::new(),
        }
    }

    pub(crate) fn push(
        &mut self,
        t: f64,
        psi: &[C64],
        kappa: f64,
        out_site: usize,
        mirror_site: usize,
        emitted: f64,
    ) {
        let amp = kappa.sqrt() * psi[out_site];
        self.t.push(t);
        self.a_out.push(amp);
        self.flux.push(amp.norm_sqr());
        self.emitter_pop.push(psi[0].norm_sqr());
        self.mirror_pop.push(psi[mirror_site].norm_sqr());
        self.emitted.push(emitted);
        self.remaining.push(psi.iter().map(|z| z.norm_sqr()).sum());
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Total emitted excitation.
    pub fn energy(&self) -> f64 {
        self.emitted.last().copied().unwrap_or(0.0)
    }

    /// Emitted excitation in [t0, t1].
    pub fn energy_between(&self, t0: f64, t1: f64) -> f64 {
        self.cumulative_at(t1) - self.cumulative_at(t0)
    }

    fn cumulative_at(&self, t: f64) -> f64 {
        if self.t.is_empty() {
            return 0.0;
        }
        let x = (t / self.dt).clamp(0.0, (self.t.len() - 1) as f64);
        let i = x.floor() as usize;
        if i + 1 >= self.t.len() {
            return self.emitted[i];
        }
        let w = x - i as f64;
        self.emitted[i] * (1.0 - w) + self.emitted[i + 1] * w
    }

    /// |remaining + emitted − initial| at the end of the run.
    pub fn norm_defect(&self) -> f64 {
        match (self.remaining.last(), self.emitted.last()) {
            (Some(r), Some(e)) => (r + e - self.initial_norm).abs(),
            _ => 0.0,
        }
    }

    /// Time of maximum flux in [t0, t1].
    pub fn peak_time(&self, t0: f64, t1: f64) -> Option<f64> {
        let mut best: Option<(usize, f64)> = None;
        for (i, (&t, &f)) in self.t.iter().zip(&self.flux).enumerate() {
            if t < t0 || t > t1 {
                continue;
            }
            if best.is_none_or(|b| f > b.1) {
                best = Some((i, f));
            }
        }
        let (i, _) = best?;
        // Parabolic refinement on the sampled peak.
        if i == 0 || i + 1 >= self.flux.len() {
            return Some(self.t[i]);
        }
        let (a, b, c) = (self.flux[i - 1], self.flux[i], self.flux[i + 1]);
        let den = a - 2.0 * b + c;
        let off = if den.abs() > 0.0 {
            0.5 * (a - c) / den
        } else {
            0.0
        };
        Some(self.t[i] + off.clamp(-1.0, 1.0) * self.dt)
    }

    /// Full width at half maximum of the flux in time.
    pub fn time_fwhm(&self) -> f64 {
        half_max_width(&self.flux, self.dt)
    }

    /// FWHM of the output-field power spectrum |Â(ω)|² over the samples in [t0, t1], in Hz.
    pub fn power_spectrum_fwhm(&self, t0: f64, t1: f64) -> f64 {
        let seg: Vec<C64> = self
            .t
            .iter()
            .zip(&self.a_out)
            .filter(|(&t, _)| t >= t0 && t <= t1)
            .map(|(_, &a)| a)
            .collect();
        let n = seg.len();
        if n < 4 {
            return 0.0;
        }
        let m = (32 * n).next_power_of_two();
        let mut buf = vec![ZERO; m];
        buf[..n].copy_from_slice(&seg);
        FftPlanner::<f64>::new()
            .plan_fft_forward(m)
            .process(&mut buf);
        // Reorder to ascending frequency before measuring the width.
        let mut p: Vec<f64> = buf.iter().map(|z| z.norm_sqr()).collect();
        p.rotate_left(m / 2);
        let df = 1.0 / (m as f64 * self.dt);
        half_max_width(&p, df)
    }

    /// Emitted energy in successive windows of length `period` centered on `first + k·period`.
    pub fn echo_energies(&self, first: f64, period: f64, count: usize) -> Vec<f64> {
        (0..count)
            .map(|k| {
                let c = first + k as f64 * period;
                self.energy_between(c - 0.5 * period, c + 0.5 * period)
            })
            .collect()
    }

    /// CSV with columns t, Re⟨a_out⟩, Im⟨a_out⟩, flux.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_s,re_a_out_sqrt_hz,im_a_out_sqrt_hz,flux_photons_per_s\n");
        for i in 0..self.len() {
            s.push_str(&format!(
                "{:.6e},{:.9e},{:.9e},{:.9e}\n",
                self.t[i], self.a_out[i].re, self.a_out[i].im, self.flux[i]
            ));
        }
        s
    }
}

/// Width at half maximum of a single-peaked sampled curve, with linear interpolation.
pub(crate) fn half_max_width(y: &[f64], dx: f64) -> f64 {
    let Some((imax, &ymax)) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) else {
        return 0.0;
    };
    if ymax <= 0.0 {
        return 0.0;
    }
    let h = 0.5 * ymax;
    let mut lo = imax;
    while lo > 0 && y[lo - 1] >= h {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < y.len() && y[hi + 1] >= h {
        hi += 1;
    }
    let left = if lo > 0 {
        lo as f64 - (y[lo] - h) / (y[lo] - y[lo - 1])
    } else {
        0.0
    };
    let right = if hi + 1 < y.len() {
        hi as f64 + (y[hi] - h) / (y[hi] - y[hi + 1])
    } else {
        hi as f64
    };
    (right - left) * dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_fwhm() {
        let sigma = 10.0;
        let y: Vec<f64> = (0..201)
            .map(|i| (-((i as f64 - 100.0) / sigma).powi(2) / 2.0).exp())
            .collect();
        let w = half_max_width(&y, 1.0);
        assert!((w - 2.3548 * sigma).abs() < 0.05, "{w}");
    }
}
