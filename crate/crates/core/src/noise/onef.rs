use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Highest admissible lowest-resolved frequency of a record.
pub const MAX_LOWEST_BIN_HZ: f64 = 50.0;

/// Power-law frequency noise δ(t) (rad/s) with PSD ∝ 1/f^exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneOverFSpec {
    /// Gaussian Ramsey 1/e time the amplitude is calibrated to.
    pub t2_star: f64,
    /// Requested lowest resolved frequency (Hz); the record length is rounded up to a power of two.
    pub f_low: f64,
    pub sample_rate: f64,
    pub exponent: f64,
    /// Segments cut from each independently generated record.
    pub segments_per_record: usize,
    pub seed: u64,
}

impl Default for OneOverFSpec {
    fn default() -> Self {
        Self {
            t2_star: 561e-9,
            f_low: 50.0,
            sample_rate: 20e6,
            exponent: 1.0,
            segments_per_record: 8,
            seed: 0x5eed,
        }
    }
}

impl OneOverFSpec {
    pub fn record_len(&self) -> usize {
        ((self.sample_rate / self.f_low).ceil() as usize).next_power_of_two()
    }

    pub fn lowest_bin(&self) -> f64 {
        self.sample_rate / self.record_len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.t2_star) {
            return Err(Error::Invalid {
                field: "t2_star",
                reason: format!("must be positive, got {}", self.t2_star),
            });
        }
        if !pos(self.f_low) || self.f_low > MAX_LOWEST_BIN_HZ {
            return Err(Error::Invalid {
                field: "f_low",
                reason: format!("must be in (0, {MAX_LOWEST_BIN_HZ}] Hz, got {}", self.f_low),
            });
        }
        if !pos(self.sample_rate) || self.sample_rate < 1e3 * self.f_low {
            return Err(Error::Invalid {
                field: "sample_rate",
                reason: format!("must exceed 1000·f_low, got {}", self.sample_rate),
            });
        }
        if !(self.exponent.is_finite() && (0.0..=3.0).contains(&self.exponent)) {
            return Err(Error::Invalid {
                field: "exponent",
                reason: format!("must be in [0, 3], got {}", self.exponent),
            });
        }
        if self.segments_per_record == 0 {
            return Err(Error::Invalid {
                field: "segments_per_record",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Unit-amplitude spectral weight of positive bin m.
    fn weight(&self, m: usize) -> f64 {
        let f = m as f64 * self.lowest_bin();
        f.powf(-self.exponent)
    }

    /// Var φ(t) of the accumulated phase for unit amplitude, from the discrete spectrum.
    pub fn phase_variance_unit(&self, t: f64) -> f64 {
        let n = self.record_len();
        let mut v = 0.0;
        for m in 1..=n / 2 {
            let w = 2.0 * PI * m as f64 * self.lowest_bin();
            let mult = if m == n / 2 { 1.0 } else { 2.0 };
            let s = (0.5 * w * t).sin();
            v += mult * self.weight(m) * 4.0 * s * s / (w * w);
        }
        v
    }

    /// Amplitude at which the ensemble Ramsey coherence exp(−Var φ/2) reaches 1/e at T2*.
    pub fn calibrate(&self) -> Result<OneOverF> {
        self.validate()?;
        let var = self.phase_variance_unit(self.t2_star);
        Ok(OneOverF {
            spec: self.clone(),
            amplitude: Some((2.0 / var).sqrt()),
        })
    }

    pub fn uncalibrated(&self) -> OneOverF {
        OneOverF {
            spec: self.clone(),
            amplitude: None,
        }
    }
}

/// A noise source; generation requires a calibrated amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneOverF {
    pub spec: OneOverFSpec,
    pub amplitude: Option<f64>,
}

impl OneOverF {
    /// Noise of a fixed amplitude (e.g. zero).
    pub fn with_amplitude(spec: &OneOverFSpec, amplitude: f64) -> Self {
        Self {
            spec: spec.clone(),
            amplitude: Some(amplitude),
        }
    }

    fn amp(&self) -> Result<f64> {
        self.amplitude.ok_or(Error::Uncalibrated)
    }

    /// Full record `index`: conjugate-symmetric complex-normal spectrum, inverse FFT.
    pub fn record(&self, index: u64) -> Result<Vec<f64>> {
        let amp = self.amp()?;
        let spec = &self.spec;
        let n = spec.record_len();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(index);
        let mut buf = vec![ZERO; n];
        for m in 1..=n / 2 {
            let s = amp * spec.weight(m).sqrt();
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            if m == n / 2 {
                buf[m] = C64::new(s * re, 0.0);
            } else {
                let z = C64::new(re, im) * (s / 2f64.sqrt());
                buf[m] = z;
                buf[n - m] = z.conj();
            }
        }
        FftPlanner::<f64>::new()
            .plan_fft_inverse(n)
            .process(&mut buf);
        Ok(buf.into_iter().map(|z| z.re).collect())
    }

    /// `count` segments of `len` samples. Realization i comes from record i / per_record,
    /// at offset (i mod per_record)·(n / per_record).
    pub fn segments(&self, count: usize, len: usize) -> Result<Vec<Vec<f64>>> {
        let spec = &self.spec;
        let n = spec.record_len();
        let per = spec.segments_per_record;
        if len == 0 || per * len > n {
            return Err(Error::Invalid {
                field: "segment_len",
                reason: format!("{per} segments of {len} samples exceed the {n}-sample record"),
            });
        }
        let records = count.div_ceil(per);
        let stride = n / per;
        let gen = |r: usize| -> Result<Vec<Vec<f64>>> {
            let rec = self.record(r as u64)?;
            Ok((0..per)
                .filter(|j| r * per + j < count)
                .map(|j| rec[j * stride..j * stride + len].to_vec())
                .collect())
        };
        #[cfg(feature = "parallel")]
        let chunks: Vec<Result<Vec<Vec<f64>>>> = {
            use rayon::prelude::*;
            (0..records).into_par_iter().map(gen).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let chunks: Vec<Result<Vec<Vec<f64>>>> = (0..records).map(gen).collect();
        let mut out = Vec::with_capacity(count);
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.spec.sample_rate
    }
}

/// Cumulative trapezoid integral of a sampled signal.
pub fn integrate(samples: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in samples.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dt;
        out.push(acc);
    }
    out
}

/// Linear interpolation into a cumulative phase array.
pub fn phase_at(cum: &[f64], dt: f64, t: f64) -> f64 {
    let x = (t / dt).clamp(0.0, (cum.len() - 1) as f64);
    let i = x.floor() as usize;
    if i + 1 >= cum.len() {
        return cum[cum.len() - 1];
    }
    let w = x - i as f64;
    cum[i] * (1.0 - w) + cum[i + 1] * w
}

/// Log-log slope of the record's periodogram over [10·f_low, f_s/10], fitted on
/// logarithmically binned averages. Returns the exponent α of 1/f^α.
pub fn periodogram_exponent(record: &[f64], sample_rate: f64) -> f64 {
    let n = record.len();
    let mut buf: Vec<C64> = record.iter().map(|&x| C64::new(x, 0.0)).collect();
    FftPlanner::<f64>::new()
        .plan_fft_forward(n)
        .process(&mut buf);
    let df = sample_rate / n as f64;
    let (lo, hi) = (10.0 * df, sample_rate / 10.0);
    let nbins = 40;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut sums = vec![(0.0, 0usize); nbins];
    for (m, z) in buf.iter().enumerate().take(n / 2).skip(1) {
        let f = m as f64 * df;
        if f < lo || f >= hi {
            continue;
        }
        let b = (((f.ln() - llo) / (lhi - llo)) * nbins as f64) as usize;
        sums[b.min(nbins - 1)].0 += z.norm_sqr();
        sums[b.min(nbins - 1)].1 += 1;
    }
    let pts: Vec<(f64, f64)> = sums
        .iter()
        .enumerate()
        .filter(|(_, s)| s.1 > 0)
        .map(|(b, s)| {
            let fc = (llo + (b as f64 + 0.5) / nbins as f64 * (lhi - llo)).exp();
            (fc.ln(), (s.0 / s.1 as f64).ln())
        })
        .collect();
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / k, sy / k);
    let (num, den) = pts.iter().fold((0.0, 0.0), |a, p| {
        (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2))
    });
    -num / den
}

/// Ensemble coherence |⟨e^{iφ}⟩| of Ramsey (free evolution) and Hahn-echo sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    pub times: Vec<f64>,
    pub ramsey: Vec<f64>,
    pub echo: Vec<f64>,
}

impl CoherenceCurve {
    /// Gaussian fit ln C = a − (t/T)² over the points with C ≥ 1/e: (T, R²).
    pub fn gaussian_fit(&self) -> (f64, f64) {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.ramsey)
            .filter(|(_, &c)| c >= (-1.0f64).exp() && c > 0.0)
            .map(|(&t, &c)| (t * t, c.ln()))
            .collect();
        let k = pts.len() as f64;
        let (mx, my) = pts
            .iter()
            .fold((0.0, 0.0), |a, p| (a.0 + p.0 / k, a.1 + p.1 / k));
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        let ss_res: f64 = pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
        let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        ((-1.0 / slope).sqrt(), 1.0 - ss_res / ss_tot)
    }

    /// First time the Ramsey coherence drops below 1/e (linear interpolation).
    pub fn ramsey_1e(&self) -> Option<f64> {
        let th = (-1.0f64).exp();
        self.ramsey
            .windows(2)
            .zip(self.times.windows(2))
            .find_map(|(c, t)| {
                (c[0] >= th && c[1] < th)
                    .then(|| t[0] + (c[0] - th) / (c[0] - c[1]) * (t[1] - t[0]))
            })
    }
}

/// Ramsey and echo coherence at `times` averaged over `realizations` noise segments.
pub fn simulate_coherence(
    noise: &OneOverF,
    times: &[f64],
    realizations: usize,
) -> Result<CoherenceCurve> {
    let dt = noise.dt();
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let len = (t_max / dt).ceil() as usize + 2;
    let segs = noise.segments(realizations, len)?;
    let mut ramsey = vec![ZERO; times.len()];
    let mut echo = vec![ZERO; times.len()];
    for s in &segs {
        let cum = integrate(s, dt);
        for (i, &t) in times.iter().enumerate() {
            let p = phase_at(&cum, dt, t);
            let half = phase_at(&cum, dt, 0.5 * t);
            ramsey[i] += C64::from_polar(1.0, p);
            echo[i] += C64::from_polar(1.0, 2.0 * half - p);
        }
    }
    let r = realizations as f64;
    Ok(CoherenceCurve {
        times: times.to_vec(),
        ramsey: ramsey.iter().map(|z| z.norm() / r).collect(),
        echo: echo.iter().map(|z| z.norm() / r).collect(),
    })
}
