//! Digital pre-compensation of a flux line against a modeled step-response
//! distortion: exponential/oscillatory IIR inverses followed by a short FIR.

use crate::error::{Error, Result};
use crate::linalg::{C64, ONE, ZERO};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// One distortion term A·e^{−t/τ}·cos(ωt + φ) in the step response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub amplitude: f64,
    pub tau: f64,
    pub omega: f64,
    pub phase: f64,
}

impl Kernel {
    pub fn exponential(amplitude: f64, tau: f64) -> Self {
        Self {
            amplitude,
            tau,
            omega: 0.0,
            phase: 0.0,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (-t / self.tau).exp() * (self.omega * t + self.phase).cos()
    }

    /// (pole, residue) pairs of the sampled kernel; oscillatory terms give a conjugate pair.
    fn poles(&self, dt: f64) -> Vec<(C64, C64)> {
        let r = (-dt / self.tau).exp();
        if self.omega == 0.0 {
            let c = self.amplitude * self.phase.cos();
            vec![(C64::new(r, 0.0), C64::new(c, 0.0))]
        } else {
            let p = C64::from_polar(r, self.omega * dt);
            let c = C64::from_polar(0.5 * self.amplitude, self.phase);
            vec![(p, c), (p.conj(), c.conj())]
        }
    }
}

/// Step response s(t) = 1 + Σ kernels (fraction of final value).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DistortionModel {
    pub kernels: Vec<Kernel>,
}

impl DistortionModel {
    pub fn new(kernels: Vec<Kernel>) -> Self {
        Self { kernels }
    }

    pub fn step_response(&self, dt: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                1.0 + self.kernels.iter().map(|k| k.value(t)).sum::<f64>()
            })
            .collect()
    }
}

/// Output of a line with sampled step response `step` driven by `x` (discrete convolution
/// with the step differences; the response holds its last value beyond the record).
pub fn apply_step_response(step: &[f64], x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = (0..step.len())
        .map(|i| step[i] - if i == 0 { 0.0 } else { step[i - 1] })
        .collect();
    let mut y = vec![0.0; x.len()];
    for (n, yn) in y.iter_mut().enumerate() {
        let kmax = n.min(h.len() - 1);
        let mut acc = 0.0;
        for k in 0..=kmax {
            acc += h[k] * x[n - k];
        }
        *yn = acc;
    }
    y
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredistortOptions {
    pub max_kernels: usize,
    pub fir_taps: usize,
    pub fir_regularization: f64,
    /// Samples used by the exponential fit (the record is decimated down to this).
    pub fit_samples: usize,
    /// Step responses whose RMS deviation from unity is below this are left alone.
    pub skip_below: f64,
}

impl Default for PredistortOptions {
    fn default() -> Self {
        Self {
            max_kernels: 4,
            fir_taps: 32,
            fir_regularization: 1e-8,
            fit_samples: 300,
            skip_below: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predistortion {
    pub waveform: Vec<f64>,
    pub kernels: Vec<Kernel>,
    pub fir: Vec<f64>,
    /// RMS of (distorted output − target).
    pub residual_rms: f64,
}

fn settle_check(step: &[f64]) -> Result<()> {
    let last = *step
        .last()
        .ok_or_else(|| Error::Missing("empty step response".into()))?;
    if !last.is_finite() || (last - 1.0).abs() > 0.01 {
        return Err(Error::NotSettled {
            deviation: last - 1.0,
        });
    }
    if step[0].abs() < 1e-3 {
        return Err(Error::Domain(
            "step response has no instantaneous component".into(),
        ));
    }
    Ok(())
}

/// Matrix-pencil fit of r[n] ≈ Σ c_k z_kⁿ; returns (pole, residue) pairs.
fn pencil(r: &[f64], max_poles: usize) -> Result<Vec<(C64, C64)>> {
    let n = r.len();
    let l = n / 3;
    if l < 2 {
        return Ok(Vec::new());
    }
    let rows = n - l;
    let y = DMatrix::from_fn(rows, l + 1, |i, j| r[i + j]);
    let svd = y.svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return Ok(Vec::new());
    }
    let vt = svd.v_t.as_ref().expect("requested V");
    let order = sv
        .iter()
        .filter(|&&s| s > 1e-9 * smax)
        .count()
        .min(max_poles);
    if order == 0 {
        return Ok(Vec::new());
    }
    let v = vt.rows(0, order).transpose(); // (l+1) × order
    let v1 = v.rows(0, l).into_owned();
    let v2 = v.rows(1, l).into_owned();
    let pinv = v1
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let psi = pinv * v2;
    let z: Vec<C64> = psi.complex_eigenvalues().iter().map(|p| p.conj()).collect();

    // Residues by complex least squares on the full record.
    let a = DMatrix::<C64>::from_fn(n, z.len(), |i, k| z[k].powu(i as u32));
    let b = DVector::<C64>::from_iterator(n, r.iter().map(|&v| C64::new(v, 0.0)));
    let ah = a.adjoint();
    let c = (&ah * &a)
        .lu()
        .solve(&(&ah * b))
        .ok_or_else(|| Error::Singular("exponential amplitude fit".into()))?;
    Ok(z.into_iter().zip(c.iter().copied()).collect())
}

fn to_kernels(terms: &[(C64, C64)], dt: f64) -> Vec<Kernel> {
    let mut out = Vec::new();
    for &(p, c) in terms {
        if p.norm() >= 1.0 || p.norm() < 1e-12 || c.norm() < 1e-7 {
            continue;
        }
        let tau = -dt / p.norm().ln();
        let omega = p.arg() / dt;
        if omega.abs() < 1e-9 / dt {
            out.push(Kernel {
                amplitude: c.re,
                tau,
                omega: 0.0,
                phase: 0.0,
            });
        } else if omega > 0.0 {
            // Keep one member of each conjugate pair.
            out.push(Kernel {
                amplitude: 2.0 * c.norm(),
                tau,
                omega,
                phase: c.arg(),
            });
        }
    }
    out
}

fn poly_mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Inverse of H(z) = 1 + Σ c_k (1 − z⁻¹)/(1 − p_k z⁻¹) as a real (num, den) pair in z⁻¹.
fn inverse_iir(kernels: &[Kernel], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let terms: Vec<(C64, C64)> = kernels.iter().flat_map(|k| k.poles(dt)).collect();
    let mut d = vec![ONE];
    for &(p, _) in &terms {
        d = poly_mul(&d, &[ONE, -p]);
    }
    let mut nume = d.clone();
    for (k, &(_, ck)) in terms.iter().enumerate() {
        let mut part = vec![ck, -ck];
        for (j, &(pj, _)) in terms.iter().enumerate() {
            if j != k {
                part = poly_mul(&part, &[ONE, -pj]);
            }
        }
        for (i, v) in part.into_iter().enumerate() {
            nume[i] += v;
        }
    }
    let n_re: Vec<f64> = nume.iter().map(|z| z.re).collect();
    let d_re: Vec<f64> = d.iter().map(|z| z.re).collect();
    // Roots of N must lie inside the unit circle for a stable inverse.
    if n_re[0].abs() < 1e-12 {
        return Err(Error::UnstableFilter {
            radius: f64::INFINITY,
        });
    }
    let deg = n_re.len() - 1;
    if deg > 0 {
        let comp = DMatrix::<f64>::from_fn(deg, deg, |i, j| {
            if i == 0 {
                -n_re[j + 1] / n_re[0]
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let radius = comp
            .complex_eigenvalues()
            .iter()
            .fold(0.0_f64, |m, z| m.max(z.norm()));
        if radius >= 1.0 {
            return Err(Error::UnstableFilter { radius });
        }
    }
    // Inverse filter: x = (D / N) y.
    Ok((d_re, n_re))
}

fn run_iir(num: &[f64], den: &[f64], y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; y.len()];
    for n in 0..y.len() {
        let mut acc = 0.0;
        for (i, &b) in num.iter().enumerate() {
            if i <= n {
                acc += b * y[n - i];
            }
        }
        for (i, &a) in den.iter().enumerate().skip(1) {
            if i <= n {
                acc -= a * x[n - i];
            }
        }
        x[n] = acc / den[0];
    }
    x
}

fn fir_filter(taps: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            taps.iter()
                .enumerate()
                .take(n + 1)
                .map(|(k, &g)| g * x[n - k])
                .sum()
        })
        .collect()
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Pre-compensates `target` for a line whose sampled step response (fraction of final value,
/// sample period `dt`) is `step`.
pub fn predistort_square(
    step: &[f64],
    dt: f64,
    target: &[f64],
    opts: &PredistortOptions,
) -> Result<Predistortion> {
    settle_check(step)?;
    if !(dt > 0.0) {
        return Err(Error::Invalid {
            field: "dt",
            reason: "must be positive".into(),
        });
    }
    let dev = rms(step.iter().map(|&s| s - 1.0));
    if dev < opts.skip_below {
        let out = apply_step_response(step, target);
        return Ok(Predistortion {
            waveform: target.to_vec(),
            kernels: Vec::new(),
            fir: vec![1.0],
            residual_rms: rms(out.iter().zip(target).map(|(a, b)| a - b)),
        });
    }

    // Exponential fit on a decimated copy of the residual s − 1.
    let q = step.len().div_ceil(opts.fit_samples.max(8)).max(1);
    let dec: Vec<f64> = step.iter().step_by(q).map(|&s| s - 1.0).collect();
    let terms = pencil(&dec, 2 * opts.max_kernels)?;
    let mut kernels = to_kernels(&terms, dt * q as f64);
    kernels.sort_by(|a, b| b.amplitude.abs().partial_cmp(&a.amplitude.abs()).unwrap());
    kernels.truncate(opts.max_kernels);

    // Stage 1: IIR inverse of the fitted model; fall back to identity if it cannot be inverted.
    let stage1 = match inverse_iir(&kernels, dt) {
        Ok((num, den)) => run_iir(&num, &den, target),
        Err(Error::UnstableFilter { .. }) => {
            kernels.clear();
            target.to_vec()
        }
        Err(e) => return Err(e),
    };

    // Stage 2: short FIR g minimising ‖g ∗ distort(stage1) − target‖² + λ‖g − δ‖².
    let o = apply_step_response(step, &stage1);
    let l = opts.fir_taps.max(1).min(o.len());
    let mut ata = DMatrix::<f64>::zeros(l, l);
    let mut atb = DVector::<f64>::zeros(l);
    for n in 0..o.len() {
        for i in 0..l.min(n + 1) {
            let oi = o[n - i];
            atb[i] += oi * target[n];
            for j in 0..l.min(n + 1) {
                ata[(i, j)] += oi * o[n - j];
            }
        }
    }
    let scale = (0..l)
        .map(|i| ata[(i, i)])
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let lam = opts.fir_regularization * scale;
    for i in 0..l {
        ata[(i, i)] += lam;
    }
    atb[0] += lam;
    let g = ata
        .cholesky()
        .map(|ch| ch.solve(&atb))
        .ok_or_else(|| Error::Singular("FIR correction normal equations".into()))?;
    let fir: Vec<f64> = g.iter().copied().collect();
    let waveform = fir_filter(&fir, &stage1);
    let out = apply_step_response(step, &waveform);
    let residual_rms = rms(out.iter().zip(target).map(|(a, b)| a - b));
    Ok(Predistortion {
        waveform,
        kernels,
        fir,
        residual_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::NS;

    fn square(n: usize, on: usize, off: usize) -> Vec<f64> {
        (0..n)
            .map(|i| if i >= on && i < off { 1.0 } else { 0.0 })
            .collect()
    }

    #[test]
    fn ideal_line_is_identity() {
        let step = vec![1.0; 500];
        let t = square(400, 20, 300);
        let p = predistort_square(&step, NS, &t, &PredistortOptions::default()).unwrap();
        assert_eq!(p.waveform, t);
    }

    #[test]
    fn unsettled_response_rejected() {
        let step: Vec<f64> = (0..500)
            .map(|i| 1.0 - 0.2 * (-(i as f64) / 2000.0).exp())
            .collect();
        let t = square(400, 20, 300);
        assert!(matches!(
            predistort_square(&step, NS, &t, &PredistortOptions::default()),
            Err(Error::NotSettled { .. })
        ));
    }

    #[test]
    fn pencil_recovers_single_pole() {
        let r: Vec<f64> = (0..200).map(|n| -0.05 * 0.97f64.powi(n)).collect();
        let t = pencil(&r, 8).unwrap();
        assert_eq!(t.len(), 1);
        assert!((t[0].0.re - 0.97).abs() < 1e-9);
        assert!((t[0].1.re + 0.05).abs() < 1e-9);
    }
}
