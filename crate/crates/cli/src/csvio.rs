//! Trace CSV format: header `device_id,frame_seq,timestamp_ns`, one row per frame.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const HEADER: [&str; 3] = ["device_id", "frame_seq", "timestamp_ns"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceCsvRecord {
    pub device_id: String,
    pub frame_seq: i64,
    pub timestamp_ns: i64,
}

/// Rows of one device, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceRows {
    pub device_id: String,
    pub frame_seq: Vec<i64>,
    pub timestamps: Vec<i64>,
}

/// Parses CSV bytes and groups rows by device in order of first appearance.
pub fn parse(bytes: &[u8], path: &Path) -> Result<Vec<DeviceRows>, CliError> {
    let err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(err(1, "empty input, expected a header line".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(err(
            1,
            format!(
                "header must be `{}`, got `{}`",
                HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut devices: Vec<DeviceRows> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), csv_message(&e)))?;
        let line = row.position().map_or(0, |p| p.line());
        let rec: TraceCsvRecord = row
            .deserialize(Some(&header))
            .map_err(|e| err(line, csv_message(&e)))?;
        if rec.timestamp_ns < 0 {
            return Err(err(
                line,
                format!("negative timestamp_ns {}", rec.timestamp_ns),
            ));
        }
        match devices.iter_mut().find(|d| d.device_id == rec.device_id) {
            Some(d) => {
                d.frame_seq.push(rec.frame_seq);
                d.timestamps.push(rec.timestamp_ns);
            }
            None => devices.push(DeviceRows {
                device_id: rec.device_id,
                frame_seq: vec![rec.frame_seq],
                timestamps: vec![rec.timestamp_ns],
            }),
        }
    }
    if devices.is_empty() {
        return Err(err(2, "no data rows after the header".into()));
    }
    Ok(devices)
}

fn csv_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    }
}

pub fn write<W: std::io::Write>(out: W, rows: &[TraceCsvRecord]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
