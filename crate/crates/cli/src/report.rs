//! JSON reports and CSV exports.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// One invariant check.
#[derive(Debug, Clone, Serialize)]
pub struct Audit {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Audit {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Versions {
    clarke_core: &'static str,
    clarke_cli: &'static str,
}

#[derive(Serialize)]
struct Document<'a> {
    config: &'a RunConfig,
    versions: Versions,
    results: &'a serde_json::Value,
    invariant_audits: &'a [Audit],
    timings: &'a BTreeMap<String, f64>,
}

/// Everything a command produces.
#[derive(Debug, Default)]
pub struct Report {
    pub results: serde_json::Value,
    pub audits: Vec<Audit>,
    pub timings: BTreeMap<String, f64>,
    /// CSV exports as `(file name, contents)`.
    pub csv: Vec<(String, String)>,
    /// Plot-data CSV, written only when requested.
    pub plots: Vec<(String, String)>,
    wall_clock: bool,
}

impl Report {
    pub fn new(cfg: &RunConfig) -> Self {
        Self { wall_clock: cfg.outputs.wall_clock, ..Self::default() }
    }

    /// Run a stage, recording its duration when wall-clock timing is on.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.wall_clock {
            self.timings.insert(name.to_string(), start.elapsed().as_secs_f64());
        }
        out
    }

    /// Record the time since `start` for a stage run outside [`Report::stage`].
    pub fn record(&mut self, name: &str, start: Instant) {
        if self.wall_clock {
            self.timings.insert(name.to_string(), start.elapsed().as_secs_f64());
        }
    }

    pub fn audit(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.audits.push(Audit::new(name, passed, detail));
    }

    pub fn audits_passed(&self) -> bool {
        self.audits.iter().all(|a| a.passed)
    }

    pub fn summary(&self) -> String {
        let failed: Vec<&str> = self.audits.iter().filter(|a| !a.passed).map(|a| a.name.as_str()).collect();
        if failed.is_empty() {
            format!("{} audits passed", self.audits.len())
        } else {
            format!("{} of {} audits failed: {}", failed.len(), self.audits.len(), failed.join(", "))
        }
    }

    pub fn to_json(&self, cfg: &RunConfig) -> Result<String, CliError> {
        let doc = Document {
            config: cfg,
            versions: Versions { clarke_core: clarke_core::VERSION, clarke_cli: env!("CARGO_PKG_VERSION") },
            results: &self.results,
            invariant_audits: &self.audits,
            timings: &self.timings,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(std::io::Error::other(e)))
    }

    pub fn write(&self, cfg: &RunConfig) -> Result<(), CliError> {
        let json = self.to_json(cfg)?;
        match &cfg.outputs.report {
            Some(path) => std::fs::write(path, json + "\n")?,
            None => {
                let mut out = std::io::stdout().lock();
                writeln!(out, "{json}")?;
            }
        }
        if let Some(dir) = &cfg.outputs.csv_dir {
            std::fs::create_dir_all(dir)?;
            for (name, body) in &self.csv {
                std::fs::write(dir.join(name), body)?;
            }
            if cfg.outputs.plot_data {
                for (name, body) in &self.plots {
                    std::fs::write(dir.join(name), body)?;
                }
            }
        }
        Ok(())
    }
}

/// Serialize rows with a header through the `csv` writer.
pub fn csv_table<R: AsRef<[String]>>(header: &[&str], rows: impl IntoIterator<Item = R>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.as_ref()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report values serialize")
}
