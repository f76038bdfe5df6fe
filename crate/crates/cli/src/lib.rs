//! Batch front end of the simulator: config files, named experiments and stamped,
//! reproducible output files.

pub mod config;
pub mod experiments;
pub mod output;

use config::{Config, Issue};
use experiments::{Experiment, RunOptions};
use output::{Artifacts, Stamp};
use slowlight::shots::MomentTable;
use std::fmt;
use std::path::Path;

/// Environment variable holding the default output directory.
pub const OUT_ENV: &str = "SLOWLIGHT_OUT";

#[derive(Debug)]
pub enum Failure {
    Config(Vec<Issue>),
    Physics(slowlight::Error),
    Io(std::io::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Physics(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(issues) => {
                write!(f, "invalid configuration:")?;
                for i in issues {
                    write!(f, "\n  {i}")?;
                }
                Ok(())
            }
            Failure::Physics(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<slowlight::Error> for Failure {
    fn from(e: slowlight::Error) -> Self {
        Failure::Physics(e)
    }
}

fn issue(path: &str, message: impl fmt::Display) -> Failure {
    Failure::Config(vec![Issue {
        path: path.into(),
        message: message.to_string(),
    }])
}

/// Config from `path` (built-in defaults when absent) with command-line overrides applied.
pub fn prepare(
    path: Option<&Path>,
    seed: Option<u64>,
    shots: Option<usize>,
) -> Result<Config, Failure> {
    let mut cfg = match path {
        Some(p) => config::load(p).map_err(Failure::Config)?,
        None => Config::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = shots {
        cfg.shots.count = n;
    }
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(Failure::Config(issues))
    }
}

/// Read a moment table, either bare or as written by `tomography-from-moments`.
pub fn load_moments(path: &Path) -> Result<MomentTable, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| issue("--moments", format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| issue("--moments", e))?;
    let inner = v.get("moments").cloned().unwrap_or(v);
    serde_json::from_value(inner).map_err(|e| issue("--moments", e))
}

/// Run one experiment in-process and stamp its results.
pub fn execute(
    exp: Experiment,
    cfg: &Config,
    opts: &RunOptions,
) -> Result<(Stamp, Artifacts), Failure> {
    if let Some(s) = &opts.state {
        s.parse::<slowlight::protocol::Target>()
            .map_err(|e| issue("--state", e))?;
    }
    let artifacts = experiments::run(exp, cfg, opts)?;
    let stamp = Stamp {
        experiment: exp.name().to_string(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
    };
    Ok((stamp, artifacts))
}
