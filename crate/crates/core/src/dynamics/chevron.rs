use super::Transition;
use crate::error::{Error, Result};
use crate::optim::nelder_mead;
use crate::units::{mhz, to_mhz};
use crate::waveguide::round_trip;
use crate::waveguide::WaveguideSpec;
use serde::{Deserialize, Serialize};

/// Closed emitter + array model used for chevron maps. Valid for times shorter than the
/// round trip, before anything reflected off the far end can return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChevronModel {
    pub n_cells: usize,
    pub omega_p: f64,
    pub hop_j: f64,
    pub g_uc: f64,
    pub g_nuc: f64,
    pub xi: f64,
    pub transition: Transition,
}

impl ChevronModel {
    pub fn fitted(xi: f64) -> Self {
        let w = WaveguideSpec::fitted();
        Self {
            n_cells: w.n_cells,
            omega_p: w.passband_center,
            hop_j: w.hop_j,
            g_uc: mhz(35.16),
            g_nuc: mhz(2.27),
            xi,
            transition: Transition::Ef,
        }
    }

    /// Emitter population at each time for an emitter sideband at absolute frequency `omega`.
    ///
    /// The open chain has standing-wave modes ε_m = 2J cos(mπ/(N+1)); the emitter couples to
    /// them through cells 1 and 2, giving an arrow matrix whose eigenvalues solve the secular
    /// equation z − Δ = Σ c_m²/(z − ε_m), one root in each gap between consecutive ε_m.
    pub fn decay(&self, omega: f64, times: &[f64]) -> Vec<f64> {
        let (levels, weights) = self.spectrum(omega - self.omega_p);
        times
            .iter()
            .map(|&t| {
                let (mut re, mut im) = (0.0, 0.0);
                for (&l, &w) in levels.iter().zip(&weights) {
                    let ph = l * t;
                    re += w * ph.cos();
                    im -= w * ph.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    /// Eigenvalues and emitter weights |⟨e|λ⟩|² of the emitter + open-chain Hamiltonian.
    fn spectrum(&self, delta: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_cells;
        let c = self.transition.matrix_element() * self.xi;
        let norm = (2.0 / (n as f64 + 1.0)).sqrt();
        let mut modes: Vec<(f64, f64)> = (1..=n)
            .map(|m| {
                let q = m as f64 * std::f64::consts::PI / (n as f64 + 1.0);
                let amp = c * norm * (self.g_uc * q.sin() + self.g_nuc * (2.0 * q).sin());
                (2.0 * self.hop_j * q.cos(), amp * amp)
            })
            .collect();
        modes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let scale = self.hop_j.abs().max(delta.abs()).max(1.0);
        // Uncoupled modes are eigenstates with no emitter weight.
        modes.retain(|&(_, c2)| c2 > 1e-24 * scale * scale);
        let total: f64 = modes.iter().map(|m| m.1).sum();
        let df = |z: f64| {
            1.0 + modes
                .iter()
                .map(|&(e, c2)| c2 / ((z - e) * (z - e)))
                .sum::<f64>()
        };
        let reach = delta.abs() + 2.0 * self.hop_j.abs() + total.sqrt() + scale;
        let mut edges = vec![-reach];
        edges.extend(modes.iter().map(|m| m.0));
        edges.push(reach);
        let last = edges.len() - 2;
        let mut levels = Vec::with_capacity(edges.len() - 1);
        let mut weights = Vec::with_capacity(edges.len() - 1);
        for (i, w) in edges.windows(2).enumerate() {
            // h = f·q with q vanishing at the bracketing poles: smooth, same sign as f inside.
            let (pl, pr) = (i > 0, i < last);
            let hq = |z: f64| -> (f64, f64) {
                let q = if pl { z - w[0] } else { 1.0 } * if pr { w[1] - z } else { 1.0 };
                let dq = match (pl, pr) {
                    (true, true) => w[1] + w[0] - 2.0 * z,
                    (true, false) => 1.0,
                    (false, true) => -1.0,
                    (false, false) => 0.0,
                };
                let mut sum = 0.0;
                let mut dsum = 0.0;
                let mut edge_terms = 0.0;
                let mut edge_dterms = 0.0;
                for (k, &(e, c2)) in modes.iter().enumerate() {
                    let is_left = pl && k + 1 == i;
                    let is_right = pr && k == i;
                    if is_left || is_right {
                        // c²/(z−e)·q with the pole cancelled analytically.
                        let other = if is_left {
                            if pr {
                                w[1] - z
                            } else {
                                1.0
                            }
                        } else if pl {
                            -(z - w[0])
                        } else {
                            -1.0
                        };
                        let dother = if is_left {
                            if pr {
                                -1.0
                            } else {
                                0.0
                            }
                        } else if pl {
                            -1.0
                        } else {
                            0.0
                        };
                        edge_terms += c2 * other;
                        edge_dterms += c2 * dother;
                    } else {
                        sum += c2 / (z - e);
                        dsum -= c2 / ((z - e) * (z - e));
                    }
                }
                let g = z - delta - sum;
                let dg = 1.0 - dsum;
                (g * q - edge_terms, dg * q + g * dq - edge_dterms)
            };
            let (mut lo, mut hi) = (w[0], w[1]);
            let mut z = 0.5 * (lo + hi);
            for _ in 0..100 {
                let (h, dh) = hq(z);
                if h > 0.0 {
                    hi = z;
                } else {
                    lo = z;
                }
                let newton = z - h / dh;
                let next = if newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
                let step = (next - z).abs();
                z = next;
                if step < 1e-12 * scale || hi - lo < 1e-12 * scale {
                    break;
                }
            }
            levels.push(z);
            weights.push(1.0 / df(z));
        }
        (levels, weights)
    }
}

/// Emitter population map over (sideband frequency, time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChevronMap {
    pub frequencies: Vec<f64>,
    pub times: Vec<f64>,
    /// `population[i][j]` at frequency i and time j.
    pub population: Vec<Vec<f64>>,
}

impl ChevronMap {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frequency_hz,t_s,population\n");
        for (i, &f) in self.frequencies.iter().enumerate() {
            for (j, &t) in self.times.iter().enumerate() {
                s.push_str(&format!(
                    "{:.6e},{:.6e},{:.9}\n",
                    f / crate::units::TWO_PI,
                    t,
                    self.population[i][j]
                ));
            }
        }
        s
    }
}

pub fn chevron(model: &ChevronModel, frequencies: &[f64], times: &[f64]) -> Result<ChevronMap> {
    let spec = WaveguideSpec {
        n_cells: model.n_cells,
        hop_j: model.hop_j,
        ..WaveguideSpec::fitted()
    };
    spec.validate()?;
    if let Some(&t) = times.iter().find(|&&t| t >= round_trip(&spec)) {
        return Err(Error::Invalid {
            field: "times",
            reason: format!("{t:.3e} s reaches the round trip; the closed model no longer applies"),
        });
    }
    Ok(ChevronMap {
        frequencies: frequencies.to_vec(),
        times: times.to_vec(),
        population: frequencies.iter().map(|&w| model.decay(w, times)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChevronFit {
    pub omega_p: f64,
    pub hop_j: f64,
    pub g_uc: f64,
    pub g_nuc: f64,
    pub rms_residual: f64,
    pub evaluations: usize,
}

/// Fit (ω_p, J, g_uc, g_nuc) to a measured chevron at known ξ and cell count.
pub fn fit_chevron(
    map: &ChevronMap,
    n_cells: usize,
    xi: f64,
    transition: Transition,
) -> Result<ChevronFit> {
    let nf = map.frequencies.len();
    if nf < 5 || map.times.len() < 5 {
        return Err(Error::Missing(
            "chevron needs at least 5 frequencies and 5 times".into(),
        ));
    }
    let last = map.times.len() - 1;
    // Initial guesses from the map: depth-weighted centre, width of the decaying region,
    // and the 1/e time at the centre.
    let depth: Vec<f64> = map.population.iter().map(|p| 1.0 - p[last]).collect();
    let wsum: f64 = depth.iter().sum();
    if wsum <= 0.0 {
        return Err(Error::Missing("emitter never decays in the chevron".into()));
    }
    let center = map
        .frequencies
        .iter()
        .zip(&depth)
        .map(|(f, d)| f * d)
        .sum::<f64>()
        / wsum;
    let band: Vec<f64> = map
        .frequencies
        .iter()
        .zip(&depth)
        .filter(|(_, &d)| d > 0.5)
        .map(|(&f, _)| f)
        .collect();
    let width = band
        .last()
        .zip(band.first())
        .map(|(a, b)| a - b)
        .unwrap_or(mhz(100.0));
    let j0 = (width / 4.0).max(mhz(5.0));
    let ic = (0..nf)
        .min_by(|&a, &b| {
            (map.frequencies[a] - center)
                .abs()
                .total_cmp(&(map.frequencies[b] - center).abs())
        })
        .unwrap();
    let t_e = map
        .times
        .iter()
        .zip(&map.population[ic])
        .find(|(_, &p)| p < (-1.0f64).exp())
        .map(|(&t, _)| t)
        .unwrap_or(map.times[last]);
    let c = transition.matrix_element() * xi;
    let g0 = ((j0 / t_e) / (2.0 * c * c)).sqrt();

    let to_model = |p: &[f64]| ChevronModel {
        n_cells,
        omega_p: center + mhz(p[0]),
        hop_j: mhz(p[1]),
        g_uc: mhz(p[2]),
        g_nuc: mhz(p[3]),
        xi,
        transition,
    };
    let cost = |p: &[f64]| -> f64 {
        if p[1] <= 0.5 || p[2] <= 0.0 {
            return 1e9;
        }
        let m = to_model(p);
        map.frequencies
            .iter()
            .zip(&map.population)
            .map(|(&w, obs)| {
                m.decay(w, &map.times)
                    .iter()
                    .zip(obs)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
            })
            .sum()
    };
    let mut x = vec![0.0, to_mhz(j0), to_mhz(g0), 1.0];
    let mut evaluations = 0;
    let mut value = f64::INFINITY;
    // Restarted simplex: each restart shrinks the initial steps.
    for (scale, budget) in [(1.0, 700), (0.1, 300)] {
        let step = [5.0 * scale, 2.0 * scale, 3.0 * scale, 1.0 * scale];
        let m = nelder_mead(cost, &x, &step, 1e-10, budget);
        evaluations += m.evaluations;
        x = m.x;
        value = m.value;
    }
    let model = to_model(&x);
    let count = (nf * map.times.len()) as f64;
    Ok(ChevronFit {
        omega_p: model.omega_p,
        hop_j: model.hop_j,
        g_uc: model.g_uc,
        g_nuc: model.g_nuc.abs(),
        rms_residual: (value / count).sqrt(),
        evaluations,
    })
}
