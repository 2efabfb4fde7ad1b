//! JSON and CSV writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::figure1::Figure1Result;
use crate::harness::ExperimentResult;
use crate::ExperimentError;

pub const RATES_CSV_HEADER: [&str; 7] = ["n", "m", "beta", "mean_dist2", "stderr", "trials", "failures"];
pub const FIGURE1_CSV_HEADER: [&str; 5] = ["beta", "component", "t", "estimate", "truth"];

fn csv_err(e: csv::Error) -> ExperimentError {
    ExperimentError::Output(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), ExperimentError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| ExperimentError::Output(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Serialized JSON with any top-level `timestamp` field removed.
pub fn json_without_timestamp(text: &str) -> Result<String, ExperimentError> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| ExperimentError::Output(e.to_string()))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("timestamp");
    }
    serde_json::to_string_pretty(&value).map_err(|e| ExperimentError::Output(e.to_string()))
}

pub fn write_rates_csv(result: &ExperimentResult, path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(RATES_CSV_HEADER).map_err(csv_err)?;
    for c in &result.cells {
        w.write_record([
            c.n.to_string(),
            c.m.to_string(),
            opt(c.beta),
            opt(c.mean_dist2),
            opt(c.stderr),
            c.trials.to_string(),
            c.failures.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_figure1_csv(result: &Figure1Result, path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(FIGURE1_CSV_HEADER).map_err(csv_err)?;
    for block in &result.blocks {
        for (j, curve) in block.curves.iter().enumerate() {
            for (i, v) in curve.iter().enumerate() {
                w.write_record([
                    block.beta.to_string(),
                    (j + 1).to_string(),
                    result.grid[i].to_string(),
                    v.to_string(),
                    result.truth[j][i].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
