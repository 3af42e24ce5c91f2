//! Line-delimited metrics records with a versioned schema. Unknown fields
//! are rejected on read; the first line of every file names the schema.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::EpisodeMetrics;
use crate::env::{ConstraintTag, StepOutcome};
use crate::error::{Error, Result};

pub const TRAIN_SCHEMA: &str = "llmlink.train-metrics/1";
pub const STEP_SCHEMA: &str = "llmlink.step-metrics/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
}

/// Per-step record as emitted by the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub episode: u32,
    pub step: u32,
    pub user: u32,
    pub compression_level: u8,
    pub power_level: u8,
    pub kappa: f64,
    pub p_tx_w: f64,
    pub snr: f64,
    pub ber: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub fidelity: f64,
    pub energy_j: f64,
    pub latency_s: f64,
    pub reward: f64,
    pub violated: Vec<ConstraintTag>,
}

impl StepRecord {
    pub fn from_outcome(episode: u32, step: u32, outcome: &StepOutcome) -> Vec<StepRecord> {
        outcome
            .users
            .iter()
            .enumerate()
            .map(|(user, u)| StepRecord {
                episode,
                step,
                user: user as u32,
                compression_level: u.action.compression_level,
                power_level: u.action.power_level,
                kappa: u.kappa,
                p_tx_w: u.p_tx_w,
                snr: u.link.snr,
                ber: u.link.ber,
                f1: u.fidelity.f1,
                f2: u.fidelity.f2,
                f3: u.fidelity.f3,
                fidelity: u.fidelity.f,
                energy_j: u.cost.energy_total_j,
                latency_s: u.cost.time_total_s,
                reward: u.reward,
                violated: u.violated.clone(),
            })
            .collect()
    }
}

/// Writes a schema header plus one JSON record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, schema: &str, records: &[T]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer(&mut w, &Header { schema: schema.to_string() })
        .map_err(|e| Error::Metrics(e.to_string()))?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Metrics(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSONL file back, enforcing the schema name and rejecting
/// unknown fields.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, schema: &str) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Metrics("empty metrics file".into()))??;
    let header: Header =
        serde_json::from_str(&header_line).map_err(|e| Error::Metrics(e.to_string()))?;
    if header.schema != schema {
        return Err(Error::Metrics(format!(
            "schema mismatch: expected {schema}, found {}",
            header.schema
        )));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Metrics(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_train_metrics(path: &Path, metrics: &[EpisodeMetrics]) -> Result<()> {
    write_jsonl(path, TRAIN_SCHEMA, metrics)
}

pub fn read_train_metrics(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    read_jsonl(path, TRAIN_SCHEMA)
}

pub fn write_step_metrics(path: &Path, records: &[StepRecord]) -> Result<()> {
    write_jsonl(path, STEP_SCHEMA, records)
}

pub fn read_step_metrics(path: &Path) -> Result<Vec<StepRecord>> {
    read_jsonl(path, STEP_SCHEMA)
}
