use super::compile_and_run;
use super::schedule::Step;
use super::states::{Graph, PureState};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

/// States generated in the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Fock1,
    Ghz2,
    Cluster2,
    Ghz3,
    Cluster31d,
    Triangle3,
    Cluster42d,
    Ring5,
    Tetra5,
}

impl Target {
    pub const ALL: [Target; 9] = [
        Target::Fock1,
        Target::Ghz2,
        Target::Cluster2,
        Target::Ghz3,
        Target::Cluster31d,
        Target::Triangle3,
        Target::Cluster42d,
        Target::Ring5,
        Target::Tetra5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::Fock1 => "fock1",
            Target::Ghz2 => "ghz2",
            Target::Cluster2 => "cluster2",
            Target::Ghz3 => "ghz3",
            Target::Cluster31d => "cluster3_1d",
            Target::Triangle3 => "triangle3",
            Target::Cluster42d => "cluster4_2d",
            Target::Ring5 => "ring5",
            Target::Tetra5 => "tetra5",
        }
    }

    pub fn n_photons(self) -> usize {
        match self {
            Target::Fock1 => 1,
            Target::Ghz2 | Target::Cluster2 => 2,
            Target::Ghz3 | Target::Cluster31d | Target::Triangle3 => 3,
            Target::Cluster42d => 4,
            Target::Ring5 | Target::Tetra5 => 5,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Invalid {
                field: "target",
                reason: format!(
                    "unknown state '{s}' (expected one of {})",
                    Target::ALL.map(|t| t.name()).join(", ")
                ),
            })
    }
}

/// Envelope id of photon `k`: fed-back photons use the narrowband pulse.
fn envelope(target: Target, k: usize) -> &'static str {
    let fed_back = match target {
        Target::Triangle3 | Target::Cluster42d | Target::Ring5 => k == 1,
        Target::Tetra5 => k == 1 || k == 2,
        _ => false,
    };
    if fed_back {
        "slow"
    } else {
        "fast"
    }
}

/// One emission cycle: π/2_ge, π_ef (phase chosen so that the emitted branch carries +1),
/// emit. Leaves the emitter entangled with photon k.
fn cycle(target: Target, k: usize, feedback: &[usize]) -> Vec<Step> {
    let mut s = vec![Step::half_ge()];
    s.extend(feedback.iter().map(|&j| Step::cz(j)));
    s.push(Step::ef(PI, FRAC_PI_2 + PI));
    s.push(Step::emit(k, envelope(target, k)));
    s
}

/// Map the emitter qubit onto photon k and return the emitter to |g⟩:
/// π_ef, π_ge, emit, π_ge.
fn transfer(target: Target, k: usize) -> Vec<Step> {
    vec![
        Step::pi_ef(),
        Step::pi_ge(),
        Step::emit(k, envelope(target, k)),
        Step::pi_ge(),
    ]
}

/// Pulse schedule that prepares `target` from the vacuum.
pub fn circuit(target: Target) -> Vec<Step> {
    let t = target;
    let mut s = Vec::new();
    match t {
        Target::Fock1 => {
            s.push(Step::pi_ge());
            s.push(Step::pi_ef());
            s.push(Step::emit(1, envelope(t, 1)));
            s.push(Step::pi_ge());
        }
        Target::Ghz2 | Target::Ghz3 => {
            let n = t.n_photons();
            s.push(Step::half_ge());
            s.push(Step::pi_ef());
            s.push(Step::emit(1, envelope(t, 1)));
            for k in 2..n {
                s.push(Step::pi_ef());
                s.push(Step::emit(k, envelope(t, k)));
            }
            s.extend(transfer(t, n));
        }
        Target::Cluster2 | Target::Cluster31d => {
            let n = t.n_photons();
            for k in 1..n {
                s.extend(cycle(t, k, &[]));
            }
            s.push(Step::half_ge());
            s.extend(transfer(t, n));
        }
        Target::Triangle3 | Target::Cluster42d | Target::Ring5 => {
            // Chain 1…n with the last vertex closed onto photon 1 by one feedback.
            let n = t.n_photons();
            for k in 1..n {
                s.extend(cycle(t, k, &[]));
            }
            s.push(Step::half_ge());
            s.push(Step::cz(1));
            s.extend(transfer(t, n));
        }
        Target::Tetra5 => {
            // Chain 1-2-3-4-5 plus feedback edges 1-3, 1-4 and 2-4 (photon 1 twice).
            s.extend(cycle(t, 1, &[]));
            s.extend(cycle(t, 2, &[]));
            s.extend(cycle(t, 3, &[1]));
            s.extend(cycle(t, 4, &[1, 2]));
            s.push(Step::half_ge());
            s.extend(transfer(t, 5));
        }
    }
    s
}

/// Graph whose graph state equals the target up to local Z rotations, where one exists.
pub fn target_graph(target: Target) -> Option<Graph> {
    let n = target.n_photons();
    match target {
        Target::Fock1 | Target::Ghz2 | Target::Ghz3 => None,
        Target::Cluster2 | Target::Cluster31d => Some(Graph::path(n)),
        Target::Triangle3 | Target::Cluster42d | Target::Ring5 => Some(Graph::cycle(n)),
        Target::Tetra5 => Some(Graph {
            n,
            edges: vec![(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4), (4, 5)],
        }),
    }
}

/// Ideal photonic state of a named target, from its circuit.
pub fn target_state(name: &str) -> Result<PureState> {
    let t: Target = name.parse()?;
    compile_and_run(&circuit(t))?.photonic()
}
