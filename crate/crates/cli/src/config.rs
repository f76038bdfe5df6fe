//! Experiment configuration. Frequencies are ordinary frequencies in Hz and times are in
//! seconds; conversion to the angular units of the simulator happens here and nowhere else.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slowlight::dynamics::{LatticeSystem, Transition};
use slowlight::flux::TransmonSpec;
use slowlight::noise::{symmetric_confusion, BudgetConfig, ChannelStack, OneOverFSpec};
use slowlight::protocol::{Durations, Target};
use slowlight::shots::ShotConfig;
use slowlight::tomo::{PrepSpam, QptConfig, SolverOptions};
use slowlight::units::hz;
use slowlight::waveguide::{gamma_1d, round_trip, Geometry, WaveguideSpec};
use std::fmt;
use std::path::Path;

/// One problem found while reading or checking a config, located by its dotted key path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct Checker {
    issues: Vec<Issue>,
}

impl Checker {
    fn check(&mut self, ok: bool, path: &str, message: impl Into<String>) {
        if !ok {
            self.issues.push(Issue {
                path: path.to_string(),
                message: message.into(),
            });
        }
    }

    fn positive(&mut self, v: f64, path: &str) {
        self.check(
            v > 0.0 && v.is_finite(),
            path,
            format!("must be positive, got {v}"),
        );
    }

    fn finite(&mut self, v: f64, path: &str) {
        self.check(v.is_finite(), path, format!("must be finite, got {v}"));
    }

    fn unit(&mut self, v: f64, path: &str) {
        self.check(
            (0.0..1.0).contains(&v),
            path,
            format!("must lie in [0, 1), got {v}"),
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveguideSection {
    pub n_cells: usize,
    #[serde(rename = "hop_J")]
    pub hop_j: f64,
    pub passband_center: f64,
    pub taper_d1: f64,
    pub taper_d2: f64,
    #[serde(rename = "taper_J1")]
    pub taper_j1: f64,
    pub output_load: f64,
}

impl Default for WaveguideSection {
    fn default() -> Self {
        Self {
            n_cells: 50,
            hop_j: 33.96e6,
            passband_center: 4.823e9,
            taper_d1: -6e6,
            taper_d2: -70e6,
            taper_j1: 45.4e6,
            output_load: 148e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransmonSection {
    pub f_max: f64,
    pub anharmonicity: f64,
    pub asymmetry: f64,
    pub t1: f64,
    pub t2_star: f64,
}

impl Default for TransmonSection {
    fn default() -> Self {
        Self {
            f_max: 6.21e9,
            anharmonicity: -273e6,
            asymmetry: 0.0,
            t1: 34e-6,
            t2_star: 561e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSection {
    /// Emitter coupling to the first cell.
    pub g_uc: f64,
    /// Emitter coupling to the second cell.
    pub g_nuc: f64,
    /// Peak emission rate of shaped pulses; sets ξ_max = √(rate / Γ_1D^ef).
    pub peak_rate: f64,
    pub mirror_g_uc: f64,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self {
            g_uc: 35.16e6,
            g_nuc: 2.27e6,
            peak_rate: 40.8e6,
            mirror_g_uc: 57e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelsSection {
    pub roundtrip_loss: f64,
    pub thermal_pop: f64,
    pub residual_f: f64,
    pub cz_depolarizing: f64,
    /// Assignment fidelity of both emitter states.
    pub readout_fidelity: f64,
}

impl Default for ChannelsSection {
    fn default() -> Self {
        Self {
            roundtrip_loss: 0.13,
            thermal_pop: 0.01,
            residual_f: 0.01,
            cz_depolarizing: 0.01,
            readout_fidelity: 0.976,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub f_low: f64,
    pub sample_rate: f64,
    pub exponent: f64,
    pub segments_per_record: usize,
    pub realizations: usize,
    /// Feedback delay; the round trip of the configured waveguide when absent.
    pub tau_d: Option<f64>,
    pub rotation_time: f64,
    pub cz_time: f64,
    pub slow_emission_time: f64,
    pub fast_emission_time: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            f_low: 50.0,
            sample_rate: 20e6,
            exponent: 1.0,
            segments_per_record: 8,
            realizations: 2000,
            tau_d: None,
            rotation_time: 20e-9,
            cz_time: 100e-9,
            slow_emission_time: 100e-9,
            fast_emission_time: 30e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmissionSection {
    pub rise_time: f64,
    pub delta: f64,
    pub window: f64,
    /// Time at which the residual emitter population is read.
    pub bin: f64,
    pub dt: f64,
    pub grid_rise_times: Vec<f64>,
    pub grid_deltas: Vec<f64>,
}

impl Default for EmissionSection {
    fn default() -> Self {
        Self {
            rise_time: 15e-9,
            delta: 0.33,
            window: 30e-9,
            bin: 30e-9,
            dt: 0.05e-9,
            grid_rise_times: vec![10e-9, 15e-9, 20e-9],
            grid_deltas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MirrorSection {
    /// Spectral FWHM of the probe photon.
    pub bandwidth: f64,
    pub detuning: f64,
    /// Detuning the mirror jumps to when it releases the photon.
    pub release_detuning: f64,
}

impl Default for MirrorSection {
    fn default() -> Self {
        Self {
            bandwidth: 9.8e6,
            detuning: 0.0,
            release_detuning: 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CzSection {
    pub bandwidth: f64,
}

impl Default for CzSection {
    fn default() -> Self {
        Self { bandwidth: 9.9e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChevronSection {
    pub xi: f64,
    pub f_start: f64,
    pub f_step: f64,
    pub n_frequencies: usize,
    pub t_step: f64,
    pub n_times: usize,
    /// Constant sideband amplitude of the time-domain decay fit.
    pub decay_xi: f64,
}

impl Default for ChevronSection {
    fn default() -> Self {
        Self {
            xi: 0.22,
            f_start: 4.72e9,
            f_step: 5e6,
            n_frequencies: 41,
            t_step: 5e-9,
            n_times: 41,
            decay_xi: 0.14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShotsSection {
    pub count: usize,
    pub n_noise: f64,
}

impl Default for ShotsSection {
    fn default() -> Self {
        Self {
            count: 1_000_000,
            n_noise: 3.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            max_iter: d.max_iter,
            tol: d.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QptSection {
    pub depolarizing: f64,
    pub shots_per_setting: usize,
}

impl Default for QptSection {
    fn default() -> Self {
        Self {
            depolarizing: 0.03,
            shots_per_setting: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateSection {
    pub state: String,
}

impl Default for StateSection {
    fn default() -> Self {
        Self {
            state: "cluster4_2d".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSection {
    pub resamples: usize,
    /// Shots per moment of the normal-approximation dataset.
    pub dataset_shots: u64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            resamples: 1000,
            dataset_shots: 500_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub waveguide: WaveguideSection,
    pub transmon: TransmonSection,
    pub coupling: CouplingSection,
    pub channels: ChannelsSection,
    pub noise: NoiseSection,
    pub emission: EmissionSection,
    pub mirror: MirrorSection,
    pub cz: CzSection,
    pub chevron: ChevronSection,
    pub shots: ShotsSection,
    pub solver: SolverSection,
    pub qpt: QptSection,
    pub cluster: StateSection,
    pub tomography: StateSection,
    pub bootstrap: BootstrapSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            waveguide: WaveguideSection::default(),
            transmon: TransmonSection::default(),
            coupling: CouplingSection::default(),
            channels: ChannelsSection::default(),
            noise: NoiseSection::default(),
            emission: EmissionSection::default(),
            mirror: MirrorSection::default(),
            cz: CzSection::default(),
            chevron: ChevronSection::default(),
            shots: ShotsSection::default(),
            solver: SolverSection::default(),
            qpt: QptSection::default(),
            cluster: StateSection::default(),
            tomography: StateSection::default(),
            bootstrap: BootstrapSection::default(),
        }
    }
}

/// Parse TOML text. Syntax errors and unknown or mistyped keys come back as a single issue.
pub fn parse(text: &str) -> Result<Config, Issue> {
    let de = toml::Deserializer::parse(text).map_err(|e| Issue {
        path: "<syntax>".into(),
        message: e.message().to_string(),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Issue {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().message().to_string(),
        }
    })
}

/// Read, parse and check a config file, returning every issue found.
pub fn load(path: &Path) -> Result<Config, Vec<Issue>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Issue {
            path: "<file>".into(),
            message: format!("{}: {e}", path.display()),
        }]
    })?;
    let cfg = parse(&text).map_err(|i| vec![i])?;
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(issues)
    }
}

/// Sub-seed for one module, derived from the master seed so modules never share a stream.
pub fn derive_seed(master: u64, module: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(module.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

impl Config {
    /// Every invariant violation, in key order of the file.
    pub fn validate(&self) -> Vec<Issue> {
        let mut c = Checker { issues: Vec::new() };
        let w = &self.waveguide;
        c.check(w.n_cells >= 2, "waveguide.n_cells", "need at least 2 cells");
        c.positive(w.hop_j, "waveguide.hop_J");
        c.positive(w.passband_center, "waveguide.passband_center");
        c.finite(w.taper_d1, "waveguide.taper_d1");
        c.finite(w.taper_d2, "waveguide.taper_d2");
        c.positive(w.taper_j1, "waveguide.taper_J1");
        c.check(
            w.output_load >= 0.0 && w.output_load.is_finite(),
            "waveguide.output_load",
            format!("must be non-negative, got {}", w.output_load),
        );

        let t = &self.transmon;
        c.positive(t.f_max, "transmon.f_max");
        c.check(
            t.anharmonicity < 0.0,
            "transmon.anharmonicity",
            format!("must be negative, got {}", t.anharmonicity),
        );
        c.check(
            (0.0..=1.0).contains(&t.asymmetry),
            "transmon.asymmetry",
            format!("must lie in [0, 1], got {}", t.asymmetry),
        );
        c.positive(t.t1, "transmon.t1");
        c.positive(t.t2_star, "transmon.t2_star");

        let g = &self.coupling;
        c.positive(g.g_uc, "coupling.g_uc");
        c.check(
            g.g_nuc >= 0.0 && g.g_nuc.is_finite(),
            "coupling.g_nuc",
            "must be non-negative",
        );
        c.positive(g.peak_rate, "coupling.peak_rate");
        c.positive(g.mirror_g_uc, "coupling.mirror_g_uc");
        if c.issues.is_empty() {
            let gamma = self.gamma_ef();
            c.check(
                hz(g.peak_rate) <= gamma,
                "coupling.peak_rate",
                format!(
                    "exceeds the full-coupling rate Γ_1D^ef = {:.4e} Hz",
                    gamma / std::f64::consts::TAU
                ),
            );
        }

        let ch = &self.channels;
        c.unit(ch.roundtrip_loss, "channels.roundtrip_loss");
        c.check(
            (0.0..0.5).contains(&ch.thermal_pop),
            "channels.thermal_pop",
            format!("must lie in [0, 0.5), got {}", ch.thermal_pop),
        );
        c.unit(ch.residual_f, "channels.residual_f");
        c.unit(ch.cz_depolarizing, "channels.cz_depolarizing");
        c.check(
            ch.readout_fidelity > 0.5 && ch.readout_fidelity <= 1.0,
            "channels.readout_fidelity",
            format!("must lie in (0.5, 1], got {}", ch.readout_fidelity),
        );

        let n = &self.noise;
        c.check(
            n.f_low > 0.0 && n.f_low <= slowlight::noise::MAX_LOWEST_BIN_HZ,
            "noise.f_low",
            format!(
                "must lie in (0, {}] Hz, got {}",
                slowlight::noise::MAX_LOWEST_BIN_HZ,
                n.f_low
            ),
        );
        c.positive(n.sample_rate, "noise.sample_rate");
        c.check(
            n.exponent > 0.0 && n.exponent < 2.0,
            "noise.exponent",
            format!("must lie in (0, 2), got {}", n.exponent),
        );
        c.check(
            n.segments_per_record >= 1,
            "noise.segments_per_record",
            "must be at least 1",
        );
        c.check(
            n.realizations >= 1,
            "noise.realizations",
            "must be at least 1",
        );
        if let Some(tau) = n.tau_d {
            c.positive(tau, "noise.tau_d");
        }
        c.positive(n.rotation_time, "noise.rotation_time");
        c.positive(n.cz_time, "noise.cz_time");
        c.positive(n.slow_emission_time, "noise.slow_emission_time");
        c.positive(n.fast_emission_time, "noise.fast_emission_time");

        let e = &self.emission;
        c.positive(e.rise_time, "emission.rise_time");
        c.finite(e.delta, "emission.delta");
        c.positive(e.window, "emission.window");
        c.positive(e.bin, "emission.bin");
        c.positive(e.dt, "emission.dt");
        c.check(
            e.dt < e.window,
            "emission.dt",
            "must be shorter than the window",
        );
        c.check(
            e.grid_rise_times.iter().all(|&v| v > 0.0),
            "emission.grid_rise_times",
            "entries must be positive",
        );
        c.check(
            e.grid_deltas.windows(2).all(|w| w[1] > w[0]),
            "emission.grid_deltas",
            "must be strictly increasing",
        );

        c.positive(self.mirror.bandwidth, "mirror.bandwidth");
        c.finite(self.mirror.detuning, "mirror.detuning");
        c.finite(self.mirror.release_detuning, "mirror.release_detuning");
        c.positive(self.cz.bandwidth, "cz.bandwidth");

        let h = &self.chevron;
        c.check(
            h.xi > 0.0 && h.xi <= 1.0,
            "chevron.xi",
            format!("must lie in (0, 1], got {}", h.xi),
        );
        c.positive(h.f_start, "chevron.f_start");
        c.positive(h.f_step, "chevron.f_step");
        c.check(
            h.n_frequencies >= 5,
            "chevron.n_frequencies",
            "need at least 5",
        );
        c.positive(h.t_step, "chevron.t_step");
        c.check(h.n_times >= 5, "chevron.n_times", "need at least 5");
        c.check(
            h.decay_xi > 0.0 && h.decay_xi <= 1.0,
            "chevron.decay_xi",
            format!("must lie in (0, 1], got {}", h.decay_xi),
        );

        c.check(self.shots.count >= 1, "shots.count", "must be at least 1");
        c.check(
            self.shots.n_noise >= 0.0 && self.shots.n_noise.is_finite(),
            "shots.n_noise",
            format!("must be non-negative, got {}", self.shots.n_noise),
        );
        c.check(
            self.solver.max_iter >= 1,
            "solver.max_iter",
            "must be at least 1",
        );
        c.positive(self.solver.tol, "solver.tol");
        c.check(
            (0.0..=1.0).contains(&self.qpt.depolarizing),
            "qpt.depolarizing",
            "must lie in [0, 1]",
        );
        c.check(
            self.qpt.shots_per_setting >= 1,
            "qpt.shots_per_setting",
            "must be at least 1",
        );
        for (path, s) in [
            ("cluster.state", &self.cluster.state),
            ("tomography.state", &self.tomography.state),
        ] {
            if let Err(e) = s.parse::<Target>() {
                c.check(false, path, e.to_string());
            }
        }
        c.check(
            self.bootstrap.dataset_shots >= 1,
            "bootstrap.dataset_shots",
            "must be at least 1",
        );

        // Cross-checks by the simulator itself, mapped back onto config keys.
        if c.issues.is_empty() {
            if let Err(e) = self.transmon().validate() {
                c.check(false, "transmon", e.to_string());
            }
            if let Err(e) = self.noise_spec().validate() {
                c.check(false, "noise", e.to_string());
            }
        }
        c.issues
    }

    /// SHA-256 of the canonical JSON form of the effective config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn waveguide(&self) -> WaveguideSpec {
        let w = &self.waveguide;
        WaveguideSpec {
            n_cells: w.n_cells,
            hop_j: hz(w.hop_j),
            passband_center: hz(w.passband_center),
            taper_d1: hz(w.taper_d1),
            taper_d2: hz(w.taper_d2),
            taper_j1: hz(w.taper_j1),
            output_load: hz(w.output_load),
            roundtrip_loss: self.channels.roundtrip_loss,
        }
    }

    pub fn transmon(&self) -> TransmonSpec {
        let t = &self.transmon;
        TransmonSpec {
            f_max: hz(t.f_max),
            eta: hz(t.anharmonicity),
            asymmetry: t.asymmetry,
            t1: t.t1,
            t2_star: t.t2_star,
            thermal_pop: self.channels.thermal_pop,
        }
    }

    /// Lattice with the configured couplings, ef transition, ξ = 0 and no mirror.
    pub fn lattice(&self) -> LatticeSystem {
        LatticeSystem {
            waveguide: self.waveguide(),
            g_uc: hz(self.coupling.g_uc),
            g_nuc: hz(self.coupling.g_nuc),
            transition: Transition::Ef,
            ..LatticeSystem::fitted()
        }
    }

    /// Full-coupling ef emission rate into the array (rad/s).
    pub fn gamma_ef(&self) -> f64 {
        gamma_1d(
            std::f64::consts::SQRT_2 * hz(self.coupling.g_uc),
            hz(self.waveguide.hop_j),
            Geometry::EndCoupled,
        )
        .unwrap_or(f64::NAN)
    }

    /// Peak sideband amplitude of shaped emission.
    pub fn xi_max(&self) -> f64 {
        (hz(self.coupling.peak_rate) / self.gamma_ef()).sqrt()
    }

    pub fn tau_d(&self) -> f64 {
        self.noise
            .tau_d
            .unwrap_or_else(|| round_trip(&self.waveguide()))
    }

    pub fn channels(&self) -> ChannelStack {
        let ch = &self.channels;
        ChannelStack {
            loss: ch.roundtrip_loss,
            thermal_pop: ch.thermal_pop,
            residual_f: ch.residual_f,
            cz_depolarizing: ch.cz_depolarizing,
            confusion: symmetric_confusion(ch.readout_fidelity),
        }
    }

    pub fn noise_spec(&self) -> OneOverFSpec {
        let n = &self.noise;
        OneOverFSpec {
            t2_star: self.transmon.t2_star,
            f_low: n.f_low,
            sample_rate: n.sample_rate,
            exponent: n.exponent,
            segments_per_record: n.segments_per_record,
            seed: derive_seed(self.seed, "noise"),
        }
    }

    pub fn durations(&self) -> Durations {
        let n = &self.noise;
        Durations {
            rotation: n.rotation_time,
            cz: n.cz_time,
            mirror: 0.0,
            emit: [
                ("slow".to_string(), n.slow_emission_time),
                ("fast".to_string(), n.fast_emission_time),
            ]
            .into(),
        }
    }

    pub fn budget(&self, target: Target) -> BudgetConfig {
        BudgetConfig {
            target,
            channels: self.channels(),
            noise: self.noise_spec(),
            realizations: self.noise.realizations,
            durations: self.durations(),
            tau_d: self.tau_d(),
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            max_iter: self.solver.max_iter,
            tol: self.solver.tol,
            record_history: false,
        }
    }

    pub fn shot_config(&self, module: &str) -> ShotConfig {
        ShotConfig {
            shots: self.shots.count,
            n_noise: self.shots.n_noise,
            seed: derive_seed(self.seed, module),
            ..ShotConfig::default()
        }
    }

    pub fn qpt(&self) -> QptConfig {
        QptConfig {
            spam: PrepSpam {
                loss: self.channels.roundtrip_loss,
                thermal: self.channels.thermal_pop,
            },
            depolarizing: self.qpt.depolarizing,
            confusion: symmetric_confusion(self.channels.readout_fidelity),
            shots_per_setting: self.qpt.shots_per_setting,
            n_noise: self.shots.n_noise,
            seed: derive_seed(self.seed, "qpt"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert_eq!(Config::default().validate(), Vec::new());
    }

    #[test]
    fn sub_seeds_differ_by_module_and_master() {
        assert_ne!(derive_seed(1, "noise"), derive_seed(1, "shots"));
        assert_ne!(derive_seed(1, "noise"), derive_seed(2, "noise"));
        assert_eq!(derive_seed(9, "qpt"), derive_seed(9, "qpt"));
    }

    #[test]
    fn units_are_converted_once() {
        let c = Config::default();
        let w = c.waveguide();
        assert!((w.hop_j / (std::f64::consts::TAU * 33.96e6) - 1.0).abs() < 1e-15);
        assert!((c.tau_d() - 50.0 / w.hop_j).abs() < 1e-18);
    }
}
