use super::TransmonSpec;
use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use crate::units::TWO_PI;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

/// Convergence target of the DC correction, in rad/s (1 kHz).
const DC_TOL: f64 = TWO_PI * 1e3;
/// Table resolution for amplitude → ξ inversion.
pub const TABLE_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandWindow {
    pub periods: f64,
    pub samples_per_period: usize,
}

impl Default for SidebandWindow {
    fn default() -> Self {
        Self {
            periods: 64.0,
            samples_per_period: 64,
        }
    }
}

impl SidebandWindow {
    fn whole_periods(&self) -> Result<usize> {
        if self.periods < 1.0 || (self.periods - self.periods.round()).abs() > 1e-9 {
            return Err(Error::NonIntegerWindow {
                periods: self.periods,
            });
        }
        if self.samples_per_period < 4 || !self.samples_per_period.is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "samples per period must be even and >= 4, got {}",
                self.samples_per_period
            )));
        }
        Ok(self.periods.round() as usize)
    }
}

/// Φ(t) = Φ_B + Φ_DC + Φ_AC sin(ω_mod t) with constant amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationPoint {
    pub phi_b: f64,
    pub phi_ac: f64,
    pub phi_dc: f64,
    pub omega_mod: f64,
}

impl ModulationPoint {
    pub fn new(phi_b: f64, phi_ac: f64, omega_mod: f64) -> Self {
        Self {
            phi_b,
            phi_ac,
            phi_dc: 0.0,
            omega_mod,
        }
    }

    pub fn flux(&self, t: f64) -> f64 {
        self.phi_b + self.phi_dc + self.phi_ac * (self.omega_mod * t).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidebandSpectrum {
    /// Lowest order stored; `xi[i]` is order `min_order + i`.
    pub min_order: i32,
    pub xi: Vec<C64>,
    /// Time-averaged ef frequency ω̃ under modulation.
    pub mean_frequency: f64,
    /// δ_DC = ω̃ − ω_ef(Φ_B).
    pub dc_shift: f64,
}

impl SidebandSpectrum {
    pub fn xi(&self, s: i32) -> C64 {
        let i = s - self.min_order;
        if i < 0 || i as usize >= self.xi.len() {
            ZERO
        } else {
            self.xi[i as usize]
        }
    }

    /// Amplitude of the first lower sideband (s = +1), the one tuned into the passband.
    pub fn emission(&self) -> C64 {
        self.xi(1)
    }

    pub fn total_weight(&self) -> f64 {
        self.xi.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn orders(&self) -> impl Iterator<Item = (i32, C64)> + '_ {
        self.xi
            .iter()
            .enumerate()
            .map(move |(i, &z)| (self.min_order + i as i32, z))
    }
}

/// Fourier coefficients ξ_s of e^{−iφ_osc(t)} for a sampled, periodic frequency trace.
///
/// `omega` holds ω(t) (rad/s) on a uniform grid of step `dt` covering `periods`
/// whole modulation periods. The oscillating phase φ_osc = ∫(ω − ω̃)dt is
/// integrated spectrally. Returns the mean frequency ω̃, the lowest order and
/// ξ_s for s ∈ [1 − spp/2, spp/2].
pub fn spectrum_from_trace(
    omega: &[f64],
    dt: f64,
    samples_per_period: usize,
    periods: usize,
) -> (f64, i32, Vec<C64>) {
    let m = omega.len();
    assert_eq!(
        m,
        samples_per_period * periods,
        "trace length must equal spp × periods"
    );
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);

    let mut buf: Vec<C64> = omega.iter().map(|&w| C64::new(w, 0.0)).collect();
    fwd.process(&mut buf);
    let mean = buf[0].re / m as f64;
    let record = m as f64 * dt;
    buf[0] = ZERO;
    for (n, z) in buf.iter_mut().enumerate().skip(1) {
        if 2 * n == m {
            *z = ZERO;
            continue;
        }
        let signed = if 2 * n < m {
            n as f64
        } else {
            n as f64 - m as f64
        };
        *z /= C64::new(0.0, TWO_PI * signed / record);
    }
    inv.process(&mut buf);

    for z in buf.iter_mut() {
        *z = C64::from_polar(1.0, -z.re / m as f64);
    }
    fwd.process(&mut buf);
    let half = (samples_per_period / 2) as i32;
    let min_order = 1 - half;
    let xi = (min_order..=half)
        .map(|s| {
            let bin = (s as i64 * periods as i64).rem_euclid(m as i64) as usize;
            buf[bin] / m as f64
        })
        .collect();
    (mean, min_order, xi)
}

/// Frequency trace of the ef transition over the window.
fn ef_trace(spec: &TransmonSpec, point: &ModulationPoint, spp: usize, periods: usize) -> Vec<f64> {
    let m = spp * periods;
    (0..m)
        .map(|n| {
            let theta = TWO_PI * n as f64 / spp as f64;
            spec.omega_ef(point.phi_b + point.phi_dc + point.phi_ac * theta.sin())
        })
        .collect()
}

/// Sideband decomposition of e^{−iφ(t)} for the ef transition under constant-amplitude modulation.
pub fn sideband_spectrum(
    spec: &TransmonSpec,
    point: &ModulationPoint,
    window: SidebandWindow,
) -> Result<SidebandSpectrum> {
    let periods = window.whole_periods()?;
    if !(point.omega_mod > 0.0) {
        return Err(Error::Domain(
            "modulation frequency must be positive".into(),
        ));
    }
    let spp = window.samples_per_period;
    let trace = ef_trace(spec, point, spp, periods);
    let dt = TWO_PI / point.omega_mod / spp as f64;
    let (mean, min_order, xi) = spectrum_from_trace(&trace, dt, spp, periods);
    Ok(SidebandSpectrum {
        min_order,
        xi,
        mean_frequency: mean,
        dc_shift: mean - spec.omega_ef(point.phi_b),
    })
}

/// Sideband spectrum of an arbitrary periodic frequency modulation ω(θ), θ = ω_mod t.
/// Used to check the Bessel limit on linear tuning curves.
pub fn sideband_spectrum_of(
    freq: impl Fn(f64) -> f64,
    omega_mod: f64,
    window: SidebandWindow,
) -> Result<(f64, i32, Vec<C64>)> {
    let periods = window.whole_periods()?;
    let spp = window.samples_per_period;
    let trace: Vec<f64> = (0..spp * periods)
        .map(|n| freq(TWO_PI * n as f64 / spp as f64))
        .collect();
    let dt = TWO_PI / omega_mod / spp as f64;
    let (mean, min_order, xi) = spectrum_from_trace(&trace, dt, spp, periods);
    Ok((mean, min_order, xi))
}

/// Period-averaged ef frequency (one period suffices: the trace is exactly periodic).
fn mean_ef(spec: &TransmonSpec, phi_center: f64, phi_ac: f64, spp: usize) -> f64 {
    (0..spp)
        .map(|n| spec.omega_ef(phi_center + phi_ac * (TWO_PI * n as f64 / spp as f64).sin()))
        .sum::<f64>()
        / spp as f64
}

/// Φ_DC keeping the modulated mean frequency equal to the static ω_ef(Φ_B), found by bisection.
///
/// The tuning curve is even in Φ, so the search runs on |Φ_B| and the sign is restored at the end.
pub fn dc_correction(spec: &TransmonSpec, phi_b: f64, phi_ac: f64, omega_mod: f64) -> Result<f64> {
    if !(omega_mod > 0.0) {
        return Err(Error::Domain(
            "modulation frequency must be positive".into(),
        ));
    }
    let spp = SidebandWindow::default().samples_per_period;
    let b = phi_b.abs();
    let sign = if phi_b < 0.0 { -1.0 } else { 1.0 };
    let target = spec.omega_ef(b);
    let f = |dc: f64| mean_ef(spec, b + dc, phi_ac, spp) - target;
    let f0 = f(0.0);
    if f0.abs() < 0.05 * DC_TOL {
        return Ok(0.0);
    }
    // A low mean is raised by moving toward the upper sweet spot, a high one toward Φ = ½.
    let (mut lo, mut hi) = if f0 < 0.0 { (-b, 0.0) } else { (0.0, 0.5 - b) };
    let mut flo = f(lo);
    if flo.signum() == f(hi).signum() {
        return Err(Error::NoDcRoot { amplitude: phi_ac });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < 0.05 * DC_TOL {
            return Ok(sign * mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    if f(mid).abs() < DC_TOL {
        Ok(sign * mid)
    } else {
        Err(Error::NoDcRoot { amplitude: phi_ac })
    }
}

pub fn dc_correction_grid(
    spec: &TransmonSpec,
    phi_b: f64,
    grid: &[f64],
    omega_mod: f64,
) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&a| dc_correction(spec, phi_b, a, omega_mod))
        .collect()
}

/// Monotone map Φ_AC ↦ |ξ₁| (with DC correction) on [0, Φ_AC at the first maximum].
#[derive(Debug, Clone, PartialEq)]
pub struct XiTable {
    pub phi_b: f64,
    pub omega_mod: f64,
    pub phi_ac: Vec<f64>,
    pub phi_dc: Vec<f64>,
    pub xi: Vec<f64>,
}

type TableKey = [u64; 6];

fn table_cache() -> &'static RwLock<HashMap<TableKey, Arc<XiTable>>> {
    static CACHE: OnceLock<RwLock<HashMap<TableKey, Arc<XiTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

impl XiTable {
    fn emission_amplitude(
        spec: &TransmonSpec,
        phi_b: f64,
        phi_ac: f64,
        omega_mod: f64,
    ) -> Option<(f64, f64)> {
        let dc = dc_correction(spec, phi_b, phi_ac, omega_mod).ok()?;
        let mut p = ModulationPoint::new(phi_b, phi_ac, omega_mod);
        p.phi_dc = dc;
        let s = sideband_spectrum(spec, &p, SidebandWindow::default()).ok()?;
        Some((dc, s.emission().norm()))
    }

    pub fn build(spec: &TransmonSpec, phi_b: f64, omega_mod: f64) -> Result<Self> {
        let ac_max = (0.5 - phi_b.abs()).min(0.35);
        if ac_max <= 0.0 {
            return Err(Error::Domain(format!(
                "bias {phi_b} leaves no modulation range"
            )));
        }
        // Coarse scan for the first maximum of |ξ₁|.
        let coarse = 96;
        let mut best = (0.0, 0.0);
        let mut prev = -1.0;
        for i in 1..=coarse {
            let a = ac_max * i as f64 / coarse as f64;
            match Self::emission_amplitude(spec, phi_b, a, omega_mod) {
                Some((_, x)) if x > prev => {
                    prev = x;
                    best = (a, x);
                }
                _ => break,
            }
        }
        if best.0 == 0.0 {
            return Err(Error::NoDcRoot {
                amplitude: ac_max / coarse as f64,
            });
        }
        // Refine the peak location with golden-section search on the bracketing cells.
        let step = ac_max / coarse as f64;
        let (mut a, mut b) = ((best.0 - step).max(0.0), (best.0 + step).min(ac_max));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let amp = |x: f64| {
            Self::emission_amplitude(spec, phi_b, x, omega_mod)
                .map(|v| v.1)
                .unwrap_or(-1.0)
        };
        for _ in 0..40 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if amp(c) > amp(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let peak = 0.5 * (a + b);

        let mut phi_ac = Vec::with_capacity(TABLE_POINTS);
        let mut phi_dc = Vec::with_capacity(TABLE_POINTS);
        let mut xi = Vec::with_capacity(TABLE_POINTS);
        for i in 0..TABLE_POINTS {
            let amp_i = peak * i as f64 / (TABLE_POINTS - 1) as f64;
            let (dc, x) = if i == 0 {
                (0.0, 0.0)
            } else {
                Self::emission_amplitude(spec, phi_b, amp_i, omega_mod)
                    .ok_or(Error::NoDcRoot { amplitude: amp_i })?
            };
            if let Some(&last) = xi.last() {
                if x <= last {
                    break;
                }
            }
            phi_ac.push(amp_i);
            phi_dc.push(dc);
            xi.push(x);
        }
        Ok(Self {
            phi_b,
            omega_mod,
            phi_ac,
            phi_dc,
            xi,
        })
    }

    /// Shared, lazily built table for (spec, bias, modulation frequency).
    pub fn cached(spec: &TransmonSpec, phi_b: f64, omega_mod: f64) -> Result<Arc<Self>> {
        let key = [
            spec.f_max.to_bits(),
            spec.eta.to_bits(),
            spec.asymmetry.to_bits(),
            phi_b.to_bits(),
            omega_mod.to_bits(),
            TABLE_POINTS as u64,
        ];
        if let Some(t) = table_cache()
            .read()
            .expect("xi table cache poisoned")
            .get(&key)
        {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(Self::build(spec, phi_b, omega_mod)?);
        table_cache()
            .write()
            .expect("xi table cache poisoned")
            .entry(key)
            .or_insert_with(|| Arc::clone(&table));
        Ok(table)
    }

    pub fn max_xi(&self) -> f64 {
        self.xi.last().copied().unwrap_or(0.0)
    }

    /// (Φ_AC, Φ_DC) producing |ξ₁| = `xi` by linear interpolation on the monotone table.
    pub fn invert(&self, xi: f64) -> Result<(f64, f64)> {
        if xi < 0.0 || xi > self.max_xi() * (1.0 + 1e-12) {
            return Err(Error::Unreachable {
                requested: xi,
                max: self.max_xi(),
            });
        }
        if xi == 0.0 {
            return Ok((0.0, 0.0));
        }
        let j = self
            .xi
            .partition_point(|&v| v < xi)
            .clamp(1, self.xi.len() - 1);
        let (x0, x1) = (self.xi[j - 1], self.xi[j]);
        let w = if x1 > x0 { (xi - x0) / (x1 - x0) } else { 0.0 };
        let lerp = |v: &[f64]| v[j - 1] + w * (v[j] - v[j - 1]);
        Ok((lerp(&self.phi_ac), lerp(&self.phi_dc)))
    }
}

/// Sampled flux drive: Φ(t) = Φ_B + Φ_DC(t) + Φ_AC(t) sin(ω_mod t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxDrive {
    pub phi_b: f64,
    pub omega_mod: f64,
    pub dt: f64,
    pub phi_ac: Vec<f64>,
    pub phi_dc: Vec<f64>,
}

impl FluxDrive {
    pub fn len(&self) -> usize {
        self.phi_ac.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi_ac.is_empty()
    }

    pub fn point(&self, i: usize) -> ModulationPoint {
        ModulationPoint {
            phi_b: self.phi_b,
            phi_ac: self.phi_ac[i],
            phi_dc: self.phi_dc[i],
            omega_mod: self.omega_mod,
        }
    }

    /// Full flux waveform Φ(t) on the drive grid.
    pub fn waveform(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let t = i as f64 * self.dt;
                self.phi_b + self.phi_dc[i] + self.phi_ac[i] * (self.omega_mod * t).sin()
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_s,phi_ac_phi0,phi_dc_phi0\n");
        for i in 0..self.len() {
            s.push_str(&format!(
                "{:.6e},{:.9},{:.9}\n",
                i as f64 * self.dt,
                self.phi_ac[i],
                self.phi_dc[i]
            ));
        }
        s
    }
}

/// Map a target |ξ(t)| onto the AC amplitude and DC-correction tracks.
pub fn drive_from_envelope(
    spec: &TransmonSpec,
    phi_b: f64,
    omega_mod: f64,
    xi_target: &[f64],
    dt: f64,
) -> Result<FluxDrive> {
    let table = XiTable::cached(spec, phi_b, omega_mod)?;
    let mut phi_ac = Vec::with_capacity(xi_target.len());
    let mut phi_dc = Vec::with_capacity(xi_target.len());
    for &x in xi_target {
        let (a, d) = table.invert(x)?;
        phi_ac.push(a);
        phi_dc.push(d);
    }
    Ok(FluxDrive {
        phi_b,
        omega_mod,
        dt,
        phi_ac,
        phi_dc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz;
    use std::f64::consts::PI;

    fn bessel(n: i32, x: f64) -> f64 {
        // (1/π)∫₀^π cos(nτ − x sin τ) dτ by the trapezoid rule (spectrally accurate here).
        let k = 4000;
        let h = PI / k as f64;
        let mut s = 0.0;
        for i in 0..=k {
            let t = i as f64 * h;
            let w = if i == 0 || i == k { 0.5 } else { 1.0 };
            s += w * (n as f64 * t - x * t.sin()).cos();
        }
        s * h / PI
    }

    #[test]
    fn unmodulated_is_carrier_only() {
        let spec = TransmonSpec::emitter();
        let s = sideband_spectrum(
            &spec,
            &ModulationPoint::new(0.2, 0.0, mhz(450.0)),
            SidebandWindow::default(),
        )
        .unwrap();
        assert!((s.xi(0).norm() - 1.0).abs() < 1e-12);
        assert!(s.xi(1).norm() < 1e-12);
        assert!(s.dc_shift.abs() < 1e-3);
    }

    #[test]
    fn linear_curve_gives_bessel_amplitudes() {
        let wm = mhz(450.0);
        let beta = 1.3;
        let (_, _, xi) = sideband_spectrum_of(
            |th| 1e10 + beta * wm * th.sin(),
            wm,
            SidebandWindow::default(),
        )
        .unwrap();
        let min = 1 - 32;
        for s in -4..=4 {
            let got = xi[(s - min) as usize].norm();
            assert!((got - bessel(s, beta).abs()).abs() < 1e-6, "s={s}: {got}");
        }
    }

    #[test]
    fn fractional_window_rejected() {
        let spec = TransmonSpec::emitter();
        let w = SidebandWindow {
            periods: 10.5,
            samples_per_period: 64,
        };
        assert!(matches!(
            sideband_spectrum(&spec, &ModulationPoint::new(0.2, 0.1, mhz(450.0)), w),
            Err(Error::NonIntegerWindow { .. })
        ));
    }

    #[test]
    fn dc_correction_holds_carrier() {
        let spec = TransmonSpec::emitter();
        let dc = dc_correction(&spec, 0.234, 0.1, mhz(450.0)).unwrap();
        let mut p = ModulationPoint::new(0.234, 0.1, mhz(450.0));
        p.phi_dc = dc;
        let s = sideband_spectrum(&spec, &p, SidebandWindow::default()).unwrap();
        assert!(s.dc_shift.abs() < TWO_PI * 1e3, "{}", s.dc_shift);
        assert_eq!(dc_correction(&spec, 0.234, 0.0, mhz(450.0)).unwrap(), 0.0);
    }
}
