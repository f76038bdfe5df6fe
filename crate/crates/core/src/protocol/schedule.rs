use crate::dynamics::Transition;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MirrorGate {
    Open,
    Close,
}

/// One entry of a pulse schedule. Photon indices are 1-based in emission order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    /// Rotation by `angle` about the equatorial axis at `phase` (0 = x, π/2 = y);
    /// virtual-Z offsets are folded into `phase`.
    Rotation {
        transition: Transition,
        angle: f64,
        phase: f64,
    },
    Emit {
        photon: usize,
        envelope: String,
    },
    CzFeedback {
        photon: usize,
    },
    Mirror {
        gate: MirrorGate,
    },
    Idle {
        duration: f64,
    },
}

impl Step {
    pub fn ge(angle: f64, phase: f64) -> Self {
        Step::Rotation {
            transition: Transition::Ge,
            angle,
            phase,
        }
    }

    pub fn ef(angle: f64, phase: f64) -> Self {
        Step::Rotation {
            transition: Transition::Ef,
            angle,
            phase,
        }
    }

    /// π/2 about y on the ge transition.
    pub fn half_ge() -> Self {
        Self::ge(FRAC_PI_2, FRAC_PI_2)
    }

    pub fn pi_ge() -> Self {
        Self::ge(PI, FRAC_PI_2)
    }

    pub fn pi_ef() -> Self {
        Self::ef(PI, FRAC_PI_2)
    }

    pub fn emit(photon: usize, envelope: &str) -> Self {
        Step::Emit {
            photon,
            envelope: envelope.to_string(),
        }
    }

    pub fn cz(photon: usize) -> Self {
        Step::CzFeedback { photon }
    }
}

/// Check the schedule invariants and return the photon count.
pub fn validate(steps: &[Step]) -> Result<usize> {
    let mut emitted: Vec<usize> = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        match s {
            Step::Emit { photon, .. } => {
                if *photon == 0 {
                    return Err(Error::Schedule(format!(
                        "step {i}: photon indices start at 1"
                    )));
                }
                if emitted.contains(photon) {
                    return Err(Error::Schedule(format!(
                        "step {i}: photon {photon} emitted twice"
                    )));
                }
                if *photon != emitted.len() + 1 {
                    return Err(Error::Schedule(format!(
                        "step {i}: photon {photon} emitted out of order (expected {})",
                        emitted.len() + 1
                    )));
                }
                emitted.push(*photon);
            }
            Step::CzFeedback { photon } => {
                if !emitted.contains(photon) {
                    return Err(Error::Schedule(format!(
                        "step {i}: feedback on photon {photon} before it was emitted"
                    )));
                }
            }
            Step::Rotation { angle, phase, .. } => {
                if !(angle.is_finite() && phase.is_finite()) {
                    return Err(Error::Schedule(format!("step {i}: non-finite rotation")));
                }
            }
            Step::Idle { duration } => {
                if !(*duration >= 0.0 && duration.is_finite()) {
                    return Err(Error::Schedule(format!(
                        "step {i}: idle duration {duration} must be ≥ 0"
                    )));
                }
            }
            Step::Mirror { .. } => {}
        }
    }
    Ok(emitted.len())
}

/// Step durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Durations {
    pub rotation: f64,
    pub cz: f64,
    pub mirror: f64,
    /// Emission window per envelope id.
    pub emit: BTreeMap<String, f64>,
}

impl Default for Durations {
    fn default() -> Self {
        Self {
            rotation: 20e-9,
            cz: 100e-9,
            mirror: 0.0,
            emit: BTreeMap::from([("slow".to_string(), 100e-9), ("fast".to_string(), 30e-9)]),
        }
    }
}

impl Durations {
    pub fn of(&self, step: &Step) -> Result<f64> {
        Ok(match step {
            Step::Rotation { .. } => self.rotation,
            Step::Emit { envelope, .. } => *self
                .emit
                .get(envelope)
                .ok_or_else(|| Error::Schedule(format!("unknown envelope id '{envelope}'")))?,
            Step::CzFeedback { .. } => self.cz,
            Step::Mirror { .. } => self.mirror,
            Step::Idle { duration } => *duration,
        })
    }
}

/// A step placed on the time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timed {
    pub index: usize,
    pub start: f64,
    pub end: f64,
}

/// Back-to-back placement of the steps.
pub fn timeline(steps: &[Step], durations: &Durations) -> Result<Vec<Timed>> {
    let mut t = 0.0;
    steps
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let d = durations.of(s)?;
            let start = t;
            t += d;
            Ok(Timed {
                index,
                start,
                end: t,
            })
        })
        .collect()
}

/// Insert idles so that each feedback starts no earlier than the photon's return, one
/// round trip after the end of its emission (or of its previous feedback).
pub fn align_feedback(steps: &[Step], durations: &Durations, tau_d: f64) -> Result<Vec<Step>> {
    validate(steps)?;
    let mut out = Vec::with_capacity(steps.len());
    let mut t = 0.0;
    let mut last_pass: BTreeMap<usize, f64> = BTreeMap::new();
    for s in steps {
        if let Step::CzFeedback { photon } = s {
            let ret = last_pass[photon] + tau_d;
            if ret > t {
                out.push(Step::Idle { duration: ret - t });
                t = ret;
            }
        }
        t += durations.of(s)?;
        match s {
            Step::Emit { photon, .. } | Step::CzFeedback { photon } => {
                last_pass.insert(*photon, t);
            }
            _ => {}
        }
        out.push(s.clone());
    }
    Ok(out)
}
