//! Result table and run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{emit_config, parse_config, ExperimentSpec};
use crate::error::HarnessError;
use crate::sweep::SweepRow;

pub const COLUMNS: [&str; 10] = [
    "sweep_value",
    "scheme",
    "avg_rate_bps_hz",
    "outage",
    "delta",
    "blocks",
    "realizations",
    "seed",
    "wall_time_s",
    "error",
];

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

fn writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(buf)
}

/// The result table as bytes. Numbers use Rust's shortest round-trip
/// formatting, so output is identical for identical inputs.
pub fn results_csv(spec: &ExperimentSpec, rows: &[SweepRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    {
        let mut w = writer(&mut buf);
        w.write_record(COLUMNS).expect("in-memory write");
        for r in rows {
            let time = if spec.record_wall_time { r.wall_time_s.to_string() } else { String::new() };
            let rec: Vec<String> = match &r.result {
                Ok(res) => vec![
                    r.sweep_value.to_string(),
                    r.scheme.name().into(),
                    res.avg_rate.to_string(),
                    res.outage.to_string(),
                    res.delta.to_string(),
                    res.blocks.len().to_string(),
                    res.realizations().to_string(),
                    spec.seed.to_string(),
                    time,
                    String::new(),
                ],
                Err(e) => vec![
                    r.sweep_value.to_string(),
                    r.scheme.name().into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    spec.plan.blocks.to_string(),
                    String::new(),
                    spec.seed.to_string(),
                    time,
                    e.clone(),
                ],
            };
            w.write_record(&rec).expect("in-memory write");
        }
        w.flush().expect("in-memory flush");
    }
    buf
}

pub fn timings_csv(rows: &[SweepRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    {
        let mut w = writer(&mut buf);
        w.write_record(["sweep_value", "scheme", "wall_time_s"]).expect("in-memory write");
        for r in rows {
            w.write_record([r.sweep_value.to_string(), r.scheme.name().into(), r.wall_time_s.to_string()])
                .expect("in-memory write");
        }
        w.flush().expect("in-memory flush");
    }
    buf
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub library_version: String,
    pub seed: u64,
    pub columns: Vec<String>,
    /// Canonical configuration document; parse it to recover the spec.
    pub config: String,
}

impl Manifest {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            library_version: irs_d2d::VERSION.into(),
            seed: spec.seed,
            columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
            config: emit_config(&spec.doc),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Parse {
            line: Some(e.line()),
            message: format!("manifest: {e}"),
        })
    }

    pub fn spec(&self) -> Result<ExperimentSpec, HarnessError> {
        parse_config(&self.config, &[])
    }
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf, HarnessError> {
    fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// Writes `results.csv`, `timings.csv` and `manifest.json` into `dir`.
pub fn emit_results(spec: &ExperimentSpec, rows: &[SweepRow], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    Ok(vec![
        write(dir.join(RESULTS_FILE), &results_csv(spec, rows))?,
        write(dir.join(TIMINGS_FILE), &timings_csv(rows))?,
        write(dir.join(MANIFEST_FILE), Manifest::new(spec).to_json().as_bytes())?,
    ])
}
