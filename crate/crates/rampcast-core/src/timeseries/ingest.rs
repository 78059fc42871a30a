//! Delimited-file ingestion and fragment merging.
//!
//! Input files are comma-separated with a header row and RFC-3339-style local
//! timestamps (`2021-03-01T12:05:00`, a space instead of `T` also parses).
//! Rows are snapped to the nearest 5-minute grid point; two rows landing on
//! the same point are a conflict.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{NaiveDateTime, Timelike};

use super::{
    CellFlag, ChannelKey, Column, Fragment, PowerChannel, SeriesFrame, StationSet, TimeIndex,
    WeatherKind, NUM_CHANNELS, STEP_MINUTES,
};
use crate::error::{Error, Result};

/// Column names for a power file: one timestamp column plus the four MW
/// channels.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PowerSchema {
    pub timestamp: String,
    pub net_load: String,
    pub load: String,
    pub pv: String,
    pub wind: String,
}

impl Default for PowerSchema {
    fn default() -> Self {
        PowerSchema {
            timestamp: "timestamp".into(),
            net_load: "net_load_mw".into(),
            load: "load_mw".into(),
            pv: "pv_mw".into(),
            wind: "wind_mw".into(),
        }
    }
}

/// Column names for a weather-station file.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WeatherSchema {
    pub timestamp: String,
    pub value: String,
}

impl Default for WeatherSchema {
    fn default() -> Self {
        WeatherSchema {
            timestamp: "timestamp".into(),
            value: "value".into(),
        }
    }
}

/// How merge_align treats gaps.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FillPolicy {
    /// Any gap is an error.
    Reject,
    /// Copy the last present value over gaps up to `max_gap` periods.
    ForwardFill { max_gap: usize },
    /// Linearly interpolate gaps up to `max_gap` periods (needs both ends).
    Linear { max_gap: usize },
}

impl Default for FillPolicy {
    /// 30 minutes of forward fill; longer dropouts stay visible as holes.
    fn default() -> Self {
        FillPolicy::ForwardFill { max_gap: 6 }
    }
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M"))
        .ok()
}

/// Round to the nearest 5-minute grid point (half rounds up), dropping
/// seconds.
fn snap_to_grid(ts: NaiveDateTime) -> NaiveDateTime {
    let step_secs = STEP_MINUTES * 60;
    let within = (ts.minute() as i64 % STEP_MINUTES) * 60 + ts.second() as i64;
    let base = ts - chrono::Duration::seconds(within);
    if within * 2 >= step_secs {
        base + chrono::Duration::seconds(step_secs)
    } else {
        base
    }
}

/// Rows of (timestamp, per-target values) collected from one file.
struct RawRows {
    rows: Vec<(NaiveDateTime, Vec<f64>)>,
}

fn read_rows(path: &Path, timestamp_col: &str, value_cols: &[&str]) -> Result<RawRows> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;

    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col_index = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Ingest {
                path: path.into(),
                line: 1,
                reason: format!("missing column '{name}'"),
            }
        })
    };

    let ts_idx = col_index(timestamp_col)?;
    let value_idx: Vec<usize> = value_cols
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(rows.len() as u64 + 2);
        let raw_ts = record.get(ts_idx).unwrap_or("");
        let ts = parse_timestamp(raw_ts).ok_or_else(|| Error::Ingest {
            path: path.into(),
            line,
            reason: format!("unparseable timestamp '{raw_ts}'"),
        })?;
        let mut values = Vec::with_capacity(value_idx.len());
        for (&idx, name) in value_idx.iter().zip(value_cols) {
            let raw = record.get(idx).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| Error::Ingest {
                path: path.into(),
                line,
                reason: format!("unparseable value '{raw}' in column '{name}'"),
            })?;
            values.push(v);
        }
        rows.push((snap_to_grid(ts), values));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no data rows", path.display())));
    }
    Ok(RawRows { rows })
}

/// Lay snapped rows onto a grid fragment, rejecting duplicates.
fn grid_fragment(path: &Path, rows: &RawRows, value_of: impl Fn(&[f64]) -> f64) -> Result<(TimeIndex, Column)> {
    let mut by_ts: BTreeMap<NaiveDateTime, f64> = BTreeMap::new();
    for (ts, values) in &rows.rows {
        if by_ts.insert(*ts, value_of(values)).is_some() {
            return Err(Error::DuplicateTimestamp {
                path: path.into(),
                timestamp: ts.format("%Y-%m-%dT%H:%M:%S").to_string(),
            });
        }
    }
    let start = *by_ts.keys().next().unwrap();
    let end = *by_ts.keys().next_back().unwrap();
    let count = ((end - start).num_minutes() / STEP_MINUTES) as usize + 1;
    let index = TimeIndex::new(start, count)?;
    let mut column = Column::missing(count);
    for (ts, v) in by_ts {
        let k = index.position(ts).expect("snapped timestamp on grid");
        column.values[k] = v;
        column.flags[k] = CellFlag::Observed;
    }
    Ok((index, column))
}

/// Ingest the four MW power channels from one delimited file.
pub fn ingest_power(path: impl AsRef<Path>, schema: &PowerSchema) -> Result<Vec<Fragment>> {
    let path = path.as_ref();
    let cols = [
        schema.net_load.as_str(),
        schema.load.as_str(),
        schema.pv.as_str(),
        schema.wind.as_str(),
    ];
    let rows = read_rows(path, &schema.timestamp, &cols)?;
    let mut fragments = Vec::with_capacity(4);
    for (i, channel) in PowerChannel::ALL.iter().enumerate() {
        let (index, column) = grid_fragment(path, &rows, |vals| vals[i])?;
        fragments.push(Fragment {
            key: ChannelKey::Power(*channel),
            index,
            column,
        });
    }
    Ok(fragments)
}

/// Ingest one weather-station file. The station must be configured, and
/// irradiance values must be non-negative.
pub fn ingest_weather(
    path: impl AsRef<Path>,
    station_id: &str,
    kind: WeatherKind,
    stations: &StationSet,
    schema: &WeatherSchema,
) -> Result<Fragment> {
    let path = path.as_ref();
    let key = ChannelKey::Station(kind, station_id.to_string());
    stations.column_of(&key)?; // unknown station -> config error

    let rows = read_rows(path, &schema.timestamp, &[schema.value.as_str()])?;
    if kind == WeatherKind::Irradiance {
        for (ts, values) in &rows.rows {
            if values[0] < 0.0 {
                return Err(Error::Validation(format!(
                    "negative irradiance {} at {} in {}",
                    values[0],
                    ts.format("%Y-%m-%dT%H:%M:%S"),
                    path.display()
                )));
            }
        }
    }
    let (index, column) = grid_fragment(path, &rows, |vals| vals[0])?;
    Ok(Fragment { key, index, column })
}

/// Spans of consecutive missing cells: (start position, length).
fn missing_runs(flags: &[CellFlag]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut k = 0;
    while k < flags.len() {
        if flags[k] == CellFlag::Missing {
            let start = k;
            while k < flags.len() && flags[k] == CellFlag::Missing {
                k += 1;
            }
            runs.push((start, k - start));
        } else {
            k += 1;
        }
    }
    runs
}

fn fill_column(column: &mut Column, policy: FillPolicy) {
    match policy {
        FillPolicy::Reject => {}
        FillPolicy::ForwardFill { max_gap } => {
            for (start, len) in missing_runs(&column.flags) {
                if len <= max_gap && start > 0 {
                    let v = column.values[start - 1];
                    for k in start..start + len {
                        column.values[k] = v;
                        column.flags[k] = CellFlag::Imputed;
                    }
                }
            }
        }
        FillPolicy::Linear { max_gap } => {
            for (start, len) in missing_runs(&column.flags) {
                let end = start + len;
                if len <= max_gap && start > 0 && end < column.flags.len() {
                    let left = column.values[start - 1];
                    let right = column.values[end];
                    for (i, k) in (start..end).enumerate() {
                        let w = (i + 1) as f64 / (len + 1) as f64;
                        column.values[k] = left + (right - left) * w;
                        column.flags[k] = CellFlag::Imputed;
                    }
                }
            }
        }
    }
}

/// Merge fragments into one frame over the union time range.
///
/// Overlapping fragments must agree (first occurrence wins on exact
/// agreement; differing values are a conflict). Gaps up to the policy's
/// `max_gap` are filled and flagged imputed; longer gaps stay missing.
/// With [`FillPolicy::Reject`], any missing cell is an error.
pub fn merge_align(
    fragments: &[Fragment],
    policy: FillPolicy,
    stations: &StationSet,
) -> Result<SeriesFrame> {
    if fragments.is_empty() {
        return Err(Error::EmptyInput("no fragments to merge".into()));
    }
    let start = fragments.iter().map(|f| f.index.start()).min().unwrap();
    let end = fragments.iter().map(|f| f.index.end()).max().unwrap();
    let count = ((end - start).num_minutes() / STEP_MINUTES) as usize + 1;
    let index = TimeIndex::new(start, count)?;

    let mut columns: Vec<Column> = (0..NUM_CHANNELS).map(|_| Column::missing(count)).collect();
    for fragment in fragments {
        let c = stations.column_of(&fragment.key)?;
        let column = &mut columns[c];
        for k in 0..fragment.index.count() {
            if fragment.column.flags[k] == CellFlag::Missing {
                continue;
            }
            let v = fragment.column.values[k];
            let pos = index
                .position(fragment.index.timestamp(k))
                .expect("fragment grid inside union grid");
            match column.flags[pos] {
                CellFlag::Missing => {
                    column.values[pos] = v;
                    column.flags[pos] = CellFlag::Observed;
                }
                _ => {
                    if column.values[pos] != v {
                        return Err(Error::Conflict {
                            timestamp: index
                                .timestamp(pos)
                                .format("%Y-%m-%dT%H:%M:%S")
                                .to_string(),
                            left: column.values[pos],
                            right: v,
                        });
                    }
                }
            }
        }
    }

    for column in &mut columns {
        fill_column(column, policy);
    }

    if policy == FillPolicy::Reject {
        let names = stations.column_names();
        let mut spans = Vec::new();
        for (c, column) in columns.iter().enumerate() {
            for (s, len) in missing_runs(&column.flags) {
                spans.push(format!(
                    "{} {}..{}",
                    names[c],
                    index.timestamp(s).format("%Y-%m-%dT%H:%M"),
                    index.timestamp(s + len - 1).format("%Y-%m-%dT%H:%M")
                ));
            }
        }
        if !spans.is_empty() {
            return Err(Error::Gap(format!(
                "{} gap span(s) under reject policy: {}",
                spans.len(),
                spans.join(", ")
            )));
        }
    }

    SeriesFrame::from_parts(index, stations.clone(), columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn stations() -> StationSet {
        StationSet::new(
            vec!["sf".into(), "sj".into(), "la".into(), "sac".into()],
            vec!["r1".into(), "r2".into(), "r3".into(), "r4".into(), "r5".into()],
        )
        .unwrap()
    }

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn power_rows_on_exact_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "p.csv",
            "timestamp,net_load_mw,load_mw,pv_mw,wind_mw\n\
             2021-03-01T12:00:00,20000,25000,4000,1000\n\
             2021-03-01T12:05:00,20100,25100,4000,1000\n",
        );
        let frags = ingest_power(&path, &PowerSchema::default()).unwrap();
        assert_eq!(frags.len(), 4);
        let net = &frags[0];
        assert_eq!(net.index.count(), 2);
        assert!(net.column.flags.iter().all(|f| f.is_present()));
        assert_eq!(net.column.values, vec![20000.0, 20100.0]);
    }

    #[test]
    fn gap_recorded_in_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "p.csv",
            "timestamp,net_load_mw,load_mw,pv_mw,wind_mw\n\
             2021-03-01T12:00:00,1,2,3,4\n\
             2021-03-01T12:10:00,5,6,7,8\n",
        );
        let frags = ingest_power(&path, &PowerSchema::default()).unwrap();
        let net = &frags[0];
        assert_eq!(net.index.count(), 3);
        assert_eq!(net.column.flags[1], CellFlag::Missing);
    }

    #[test]
    fn duplicate_timestamp_is_conflict() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "p.csv",
            "timestamp,net_load_mw,load_mw,pv_mw,wind_mw\n\
             2021-03-01T12:00:00,1,2,3,4\n\
             2021-03-01T12:00:00,9,9,9,9\n",
        );
        let err = ingest_power(&path, &PowerSchema::default()).unwrap_err();
        match err {
            Error::DuplicateTimestamp { timestamp, .. } => {
                assert!(timestamp.contains("12:00:00"))
            }
            other => panic!("expected duplicate error, got {other}"),
        }
    }

    #[test]
    fn empty_file_is_empty_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "p.csv", "timestamp,net_load_mw,load_mw,pv_mw,wind_mw\n");
        assert!(matches!(
            ingest_power(&path, &PowerSchema::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn unknown_station_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "w.csv", "timestamp,value\n2021-03-01T00:00:00,50\n");
        let err = ingest_weather(
            &path,
            "nowhere",
            WeatherKind::Temperature,
            &stations(),
            &WeatherSchema::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn negative_irradiance_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "w.csv",
            "timestamp,value\n2021-03-01T00:00:00,10\n2021-03-01T00:05:00,-5.0\n",
        );
        let err = ingest_weather(
            &path,
            "r1",
            WeatherKind::Irradiance,
            &stations(),
            &WeatherSchema::default(),
        )
        .unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("00:05")),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn valid_station_binds_channel() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "w.csv", "timestamp,value\n2021-03-01T00:00:00,61.5\n");
        let frag = ingest_weather(
            &path,
            "sj",
            WeatherKind::Temperature,
            &stations(),
            &WeatherSchema::default(),
        )
        .unwrap();
        assert_eq!(stations().column_of(&frag.key).unwrap(), 5);
    }

    fn fragment(key: ChannelKey, start: &str, values: &[Option<f64>]) -> Fragment {
        let start = NaiveDateTime::parse_from_str(start, "%Y-%m-%dT%H:%M:%S").unwrap();
        let index = TimeIndex::new(start, values.len()).unwrap();
        let mut column = Column::missing(values.len());
        for (k, v) in values.iter().enumerate() {
            if let Some(v) = v {
                column.values[k] = *v;
                column.flags[k] = CellFlag::Observed;
            }
        }
        Fragment { key, index, column }
    }

    #[test]
    fn contiguous_fragments_concatenate() {
        let a = fragment(
            ChannelKey::Power(PowerChannel::Load),
            "2021-03-01T00:00:00",
            &[Some(1.0), Some(2.0)],
        );
        let b = fragment(
            ChannelKey::Power(PowerChannel::Load),
            "2021-03-01T00:10:00",
            &[Some(3.0), Some(4.0)],
        );
        let frame = merge_align(&[a, b], FillPolicy::default(), &stations()).unwrap();
        assert_eq!(frame.index().count(), 4);
        assert_eq!(frame.imputed_cells(), 0);
        let load = frame.power(PowerChannel::Load);
        assert_eq!(load.values[..4], [1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn forward_fill_flags_imputed() {
        let a = fragment(
            ChannelKey::Power(PowerChannel::Load),
            "2021-03-01T00:00:00",
            &[Some(5.0), None, Some(7.0)],
        );
        let frame = merge_align(
            &[a],
            FillPolicy::ForwardFill { max_gap: 3 },
            &stations(),
        )
        .unwrap();
        let load = frame.power(PowerChannel::Load);
        assert_eq!(load.values[1], 5.0);
        assert_eq!(load.flags[1], CellFlag::Imputed);
    }

    #[test]
    fn long_hole_stays_missing() {
        let mut values = vec![Some(1.0)];
        values.extend(std::iter::repeat(None).take(10));
        values.push(Some(2.0));
        let a = fragment(
            ChannelKey::Power(PowerChannel::Load),
            "2021-03-01T00:00:00",
            &values,
        );
        let frame = merge_align(
            &[a],
            FillPolicy::ForwardFill { max_gap: 3 },
            &stations(),
        )
        .unwrap();
        let load = frame.power(PowerChannel::Load);
        assert!(load.flags[1..11].iter().all(|f| *f == CellFlag::Missing));
    }

    #[test]
    fn linear_fill_interpolates() {
        let a = fragment(
            ChannelKey::Power(PowerChannel::Load),
            "2021-03-01T00:00:00",
            &[Some(0.0), None, None, None, Some(8.0)],
        );
        let frame = merge_align(&[a], FillPolicy::Linear { max_gap: 3 }, &stations()).unwrap();
        let load = frame.power(PowerChannel::Load);
        assert_eq!(load.values[..5], [0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(load.flags[2], CellFlag::Imputed);
    }

    #[test]
    fn conflicting_overlap_errors() {
        let a = fragment(
            ChannelKey::Power(PowerChannel::Load),
            "2021-03-01T00:00:00",
            &[Some(1.0)],
        );
        let b = fragment(
            ChannelKey::Power(PowerChannel::Load),
            "2021-03-01T00:00:00",
            &[Some(2.0)],
        );
        assert!(matches!(
            merge_align(&[a, b], FillPolicy::default(), &stations()),
            Err(Error::Conflict { .. })
        ));
    }

    #[test]
    fn agreeing_overlap_is_idempotent() {
        let a = fragment(
            ChannelKey::Power(PowerChannel::Load),
            "2021-03-01T00:00:00",
            &[Some(1.0), Some(2.0)],
        );
        let frame = merge_align(&[a.clone(), a], FillPolicy::default(), &stations()).unwrap();
        let load = frame.power(PowerChannel::Load);
        assert_eq!(load.values[..2], [1.0, 2.0]);
        assert_eq!(frame.imputed_cells(), 0);
    }

    #[test]
    fn reject_policy_lists_spans() {
        let a = fragment(
            ChannelKey::Power(PowerChannel::Load),
            "2021-03-01T00:00:00",
            &[Some(1.0), None, Some(3.0)],
        );
        let err = merge_align(&[a], FillPolicy::Reject, &stations()).unwrap_err();
        match err {
            Error::Gap(msg) => assert!(msg.contains("load")),
            other => panic!("expected gap error, got {other}"),
        }
    }

    #[test]
    fn snapping_rounds_to_nearest() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "p.csv",
            "timestamp,net_load_mw,load_mw,pv_mw,wind_mw\n\
             2021-03-01T12:02:00,1,2,3,4\n\
             2021-03-01T12:08:00,5,6,7,8\n",
        );
        let frags = ingest_power(&path, &PowerSchema::default()).unwrap();
        let net = &frags[0];
        // 12:02 -> 12:00, 12:08 -> 12:10
        assert_eq!(
            net.index.start(),
            NaiveDateTime::parse_from_str("2021-03-01T12:00:00", "%Y-%m-%dT%H:%M:%S").unwrap()
        );
        assert_eq!(net.index.count(), 3);
        assert_eq!(net.column.flags[1], CellFlag::Missing);
    }
}
