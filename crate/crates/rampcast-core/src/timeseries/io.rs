//! Canonical on-disk frame format.
//!
//! One CSV with a `timestamp` column, the 13 channel value columns in
//! canonical order, then 13 `<channel>_flag` columns (`observed`, `imputed`,
//! or `missing`). Missing value cells are written empty. Floats use Rust's
//! shortest round-trip formatting, so write → read → write is byte-stable.

use std::path::Path;

use chrono::NaiveDateTime;

use super::{
    CellFlag, Column, SeriesFrame, StationSet, TimeIndex, NUM_CHANNELS, NUM_IRRADIANCE_STATIONS,
    NUM_TEMPERATURE_STATIONS,
};
use crate::error::{Error, Result};

fn flag_name(flag: CellFlag) -> &'static str {
    match flag {
        CellFlag::Missing => "missing",
        CellFlag::Observed => "observed",
        CellFlag::Imputed => "imputed",
    }
}

fn parse_flag(raw: &str) -> Option<CellFlag> {
    match raw {
        "missing" => Some(CellFlag::Missing),
        "observed" => Some(CellFlag::Observed),
        "imputed" => Some(CellFlag::Imputed),
        _ => None,
    }
}

/// Write a frame to `path` in the canonical format.
pub fn write_frame(frame: &SeriesFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;

    let names = frame.stations().column_names();
    let mut header = vec!["timestamp".to_string()];
    header.extend(names.iter().cloned());
    header.extend(names.iter().map(|n| format!("{n}_flag")));
    writer.write_record(&header).map_err(|e| Error::csv(path, e))?;

    let mut record = Vec::with_capacity(1 + 2 * NUM_CHANNELS);
    for k in 0..frame.index().count() {
        record.clear();
        record.push(frame.index().timestamp(k).format("%Y-%m-%dT%H:%M:%S").to_string());
        for c in 0..NUM_CHANNELS {
            let col = frame.column(c);
            record.push(match col.flags[k] {
                CellFlag::Missing => String::new(),
                _ => format!("{}", col.values[k]),
            });
        }
        for c in 0..NUM_CHANNELS {
            record.push(flag_name(frame.column(c).flags[k]).to_string());
        }
        writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a frame written by [`write_frame`], recovering the station set from
/// the header names.
pub fn read_frame(path: impl AsRef<Path>) -> Result<SeriesFrame> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();

    let expected_len = 1 + 2 * NUM_CHANNELS;
    if headers.len() != expected_len {
        return Err(Error::Ingest {
            path: path.into(),
            line: 1,
            reason: format!("expected {expected_len} columns, got {}", headers.len()),
        });
    }
    let names: Vec<&str> = headers.iter().skip(1).take(NUM_CHANNELS).collect();
    let mut temperature = Vec::new();
    let mut irradiance = Vec::new();
    for name in &names[4..] {
        if let Some(id) = name.strip_prefix("temp_") {
            temperature.push(id.to_string());
        } else if let Some(id) = name.strip_prefix("irr_") {
            irradiance.push(id.to_string());
        } else {
            return Err(Error::Ingest {
                path: path.into(),
                line: 1,
                reason: format!("unrecognized channel column '{name}'"),
            });
        }
    }
    if temperature.len() != NUM_TEMPERATURE_STATIONS || irradiance.len() != NUM_IRRADIANCE_STATIONS
    {
        return Err(Error::Ingest {
            path: path.into(),
            line: 1,
            reason: "station columns out of canonical order".into(),
        });
    }
    let stations = StationSet::new(temperature, irradiance)?;

    let mut timestamps: Vec<NaiveDateTime> = Vec::new();
    let mut columns: Vec<Column> = (0..NUM_CHANNELS).map(|_| Column::missing(0)).collect();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(timestamps.len() as u64 + 2);
        let raw_ts = record.get(0).unwrap_or("");
        let ts = NaiveDateTime::parse_from_str(raw_ts, "%Y-%m-%dT%H:%M:%S").map_err(|_| {
            Error::Ingest {
                path: path.into(),
                line,
                reason: format!("unparseable timestamp '{raw_ts}'"),
            }
        })?;
        timestamps.push(ts);
        for c in 0..NUM_CHANNELS {
            let raw_flag = record.get(1 + NUM_CHANNELS + c).unwrap_or("");
            let flag = parse_flag(raw_flag).ok_or_else(|| Error::Ingest {
                path: path.into(),
                line,
                reason: format!("unrecognized flag '{raw_flag}'"),
            })?;
            let raw_value = record.get(1 + c).unwrap_or("");
            let value = if flag.is_present() {
                raw_value.parse::<f64>().map_err(|_| Error::Ingest {
                    path: path.into(),
                    line,
                    reason: format!("unparseable value '{raw_value}'"),
                })?
            } else {
                f64::NAN
            };
            columns[c].values.push(value);
            columns[c].flags.push(flag);
        }
    }
    if timestamps.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no data rows", path.display())));
    }

    let index = TimeIndex::new(timestamps[0], timestamps.len())?;
    for (k, ts) in timestamps.iter().enumerate() {
        if index.position(*ts) != Some(k) {
            return Err(Error::Ingest {
                path: path.into(),
                line: k as u64 + 2,
                reason: format!("timestamp {ts} breaks the 5-minute grid"),
            });
        }
    }
    SeriesFrame::from_parts(index, stations, columns)
}
