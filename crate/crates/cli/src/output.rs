use serde_json::{Map, Value};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Results of one experiment: a JSON summary and named CSV traces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    pub summary: Map<String, Value>,
    /// (name, CSV body starting with its column header).
    pub traces: Vec<(String, String)>,
    /// Additional JSON documents, e.g. a synthesized moment table.
    pub documents: Vec<(String, Value)>,
}

impl Artifacts {
    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn trace(&mut self, name: &str, csv: String) {
        self.traces.push((name.to_string(), csv));
    }
}

/// Provenance stamped into every file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stamp {
    pub experiment: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Stamp {
    fn wrap(&self, key: &str, body: Value) -> Value {
        let mut m = Map::new();
        m.insert("experiment".into(), self.experiment.clone().into());
        m.insert("config_sha256".into(), self.config_sha256.clone().into());
        m.insert("seed".into(), self.seed.into());
        m.insert(key.into(), body);
        Value::Object(m)
    }

    fn csv_header(&self) -> String {
        format!(
            "# experiment={} config_sha256={} seed={}\n",
            self.experiment, self.config_sha256, self.seed
        )
    }
}

/// The summary document as written to disk (keys sorted, trailing newline).
pub fn summary_json(stamp: &Stamp, a: &Artifacts) -> String {
    let doc = stamp.wrap("results", Value::Object(a.summary.clone()));
    let mut s = serde_json::to_string_pretty(&doc).expect("summary serializes");
    s.push('\n');
    s
}

pub fn trace_csv(stamp: &Stamp, body: &str) -> String {
    let mut s = stamp.csv_header();
    s.push_str(body);
    s
}

/// Write `<experiment>.json`, `<experiment>_<trace>.csv` and `<experiment>_<doc>.json`
/// into `dir`, returning the paths written.
pub fn write(dir: &Path, stamp: &Stamp, a: &Artifacts) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let p = dir.join(format!("{}.json", stamp.experiment));
    fs::write(&p, summary_json(stamp, a))?;
    written.push(p);
    for (name, body) in &a.traces {
        let p = dir.join(format!("{}_{name}.csv", stamp.experiment));
        fs::write(&p, trace_csv(stamp, body))?;
        written.push(p);
    }
    for (name, doc) in &a.documents {
        let p = dir.join(format!("{}_{name}.json", stamp.experiment));
        let mut s = serde_json::to_string_pretty(&stamp.wrap(name, doc.clone()))
            .expect("document serializes");
        s.push('\n');
        fs::write(&p, s)?;
        written.push(p);
    }
    Ok(written)
}
