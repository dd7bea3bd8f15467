//! Result tables and run manifests on disk.
//!
//! Each run writes `results.csv` and `manifest.json` into a fresh directory
//! named after the UTC start time; existing directories are never reused.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::montecarlo::{ExperimentConfig, ExperimentOutput, GridStats, ResultRow, Scheme};

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULTS_HEADER: [&str; 7] = [
    "scheme", "snr_db", "sigma_e2", "L", "alpha_c", "esr", "std_err",
];

const SELECTION_NOTE: &str = "multi-branch selection scores branches on the same error samples \
later used for rate averaging, which biases MB ESR slightly upward";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed results file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub sigma_e2: f64,
    pub branches: usize,
    pub alpha_c: f64,
    pub esr: f64,
    pub std_err: f64,
}

impl From<&ResultRow> for ResultRecord {
    fn from(r: &ResultRow) -> Self {
        Self {
            scheme: r.scheme,
            snr_db: r.snr_db,
            sigma_e2: r.sigma_e2,
            branches: r.branches,
            alpha_c: r.alpha_c,
            esr: r.esr,
            std_err: r.std_err,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowTiming {
    pub scheme: String,
    pub snr_db: f64,
    pub sigma_e2: f64,
    #[serde(rename = "L")]
    pub branches: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub version: String,
    pub timestamp: String,
    pub grid: Vec<GridStats>,
    pub rows: Vec<RowTiming>,
    pub wall_time_s: f64,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(
        config: &ExperimentConfig,
        output: &ExperimentOutput,
        started: DateTime<Utc>,
    ) -> Self {
        Self {
            config: config.clone(),
            master_seed: config.master_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: started.to_rfc3339(),
            grid: output.grid_stats.clone(),
            rows: output
                .rows
                .iter()
                .map(|r| RowTiming {
                    scheme: r.scheme.name().to_string(),
                    snr_db: r.snr_db,
                    sigma_e2: r.sigma_e2,
                    branches: r.branches,
                    wall_time_s: r.wall_time_s,
                })
                .collect(),
            wall_time_s: output.wall_time_s,
            notes: vec![SELECTION_NOTE.to_string()],
        }
    }
}

/// Writes the table to any sink. Floats use the shortest decimal that
/// parses back to the same value.
pub fn write_results_csv<W: io::Write>(rows: &[ResultRecord], sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.scheme.name().to_string(),
            r.snr_db.to_string(),
            r.sigma_e2.to_string(),
            r.branches.to_string(),
            r.alpha_c.to_string(),
            r.esr.to_string(),
            r.std_err.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Creates `out_dir/run-<timestamp>[-n]` and writes both files into it.
pub fn write_results(
    rows: &[ResultRecord],
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<PathBuf, OutputError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let dir = fresh_dir(out_dir)?;

    let results = dir.join(RESULTS_FILE);
    let file = fs::File::create_new(&results).map_err(io_err(&results))?;
    write_results_csv(rows, io::BufWriter::new(file)).map_err(|e| OutputError::Io {
        path: results.clone(),
        source: io::Error::other(e),
    })?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
    Ok(dir)
}

fn fresh_dir(out_dir: &Path) -> Result<PathBuf, OutputError> {
    let stamp = Utc::now().format("run-%Y%m%dT%H%M%S%.3fZ").to_string();
    for n in 0.. {
        let name = if n == 0 {
            stamp.clone()
        } else {
            format!("{stamp}-{n}")
        };
        let dir = out_dir.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(&dir)(e)),
        }
    }
    unreachable!()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>, OutputError> {
    let malformed = |message: String| OutputError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(e.to_string()))?;
    let header = reader.headers().map_err(|e| malformed(e.to_string()))?;
    if header.iter().ne(RESULTS_HEADER) {
        return Err(malformed(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let line = i + 2;
        let num = |j: usize| -> Result<f64, OutputError> {
            record[j].parse().map_err(|_| {
                malformed(format!(
                    "line {line}: bad {} {:?}",
                    RESULTS_HEADER[j], &record[j]
                ))
            })
        };
        rows.push(ResultRecord {
            scheme: record[0]
                .parse()
                .map_err(|e| malformed(format!("line {line}: {e}")))?,
            snr_db: num(1)?,
            sigma_e2: num(2)?,
            branches: record[3]
                .parse()
                .map_err(|_| malformed(format!("line {line}: bad L {:?}", &record[3])))?,
            alpha_c: num(4)?,
            esr: num(5)?,
            std_err: num(6)?,
        });
    }
    Ok(rows)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| OutputError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
