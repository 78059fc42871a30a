//! 5-minute multi-channel time series: grid, frame, ingestion, synthesis.
//!
//! A [`SeriesFrame`] holds 13 aligned channels (4 power, 4 temperature
//! stations, 5 irradiance stations) on a regular 5-minute grid, with a
//! per-cell flag telling observed from imputed from missing cells. Frames are
//! immutable once merged and safe to share across threads.

mod ingest;
mod io;
mod synth;

pub use ingest::{ingest_power, ingest_weather, merge_align, FillPolicy, PowerSchema, WeatherSchema};
pub use io::{read_frame, write_frame};
pub use synth::{synth_duck, SynthParams};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

/// Periods per calendar day at 5-minute resolution.
pub const PERIODS_PER_DAY: usize = 288;

/// Grid step in minutes.
pub const STEP_MINUTES: i64 = 5;

/// Number of channels in a full frame: net load, load, PV, wind,
/// 4 temperature stations, 5 irradiance stations.
pub const NUM_CHANNELS: usize = 13;

pub const NUM_TEMPERATURE_STATIONS: usize = 4;
pub const NUM_IRRADIANCE_STATIONS: usize = 5;

/// Regular 5-minute time grid: `start + k * 5min` for `k in [0, count)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeIndex {
    start: NaiveDateTime,
    count: usize,
}

impl TimeIndex {
    pub fn new(start: NaiveDateTime, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Argument("time index needs count >= 1".into()));
        }
        if start.second() != 0 || start.nanosecond() != 0 || start.minute() % 5 != 0 {
            return Err(Error::Argument(format!(
                "time index start {start} is not aligned to the 5-minute grid"
            )));
        }
        Ok(TimeIndex { start, count })
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn end(&self) -> NaiveDateTime {
        self.timestamp(self.count - 1)
    }

    pub fn timestamp(&self, k: usize) -> NaiveDateTime {
        debug_assert!(k < self.count);
        self.start + Duration::minutes(STEP_MINUTES * k as i64)
    }

    /// Grid position of `ts`, if it is on the grid and inside the range.
    pub fn position(&self, ts: NaiveDateTime) -> Option<usize> {
        if ts < self.start {
            return None;
        }
        let delta = (ts - self.start).num_minutes();
        if delta % STEP_MINUTES != 0 || ts.second() != 0 {
            return None;
        }
        let k = (delta / STEP_MINUTES) as usize;
        (k < self.count).then_some(k)
    }

    pub fn timestamps(&self) -> impl Iterator<Item = NaiveDateTime> + '_ {
        (0..self.count).map(|k| self.timestamp(k))
    }
}

/// Presence state of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellFlag {
    /// No value at this grid point.
    Missing,
    /// Value as ingested.
    Observed,
    /// Value filled in by the merge fill policy.
    Imputed,
}

impl CellFlag {
    pub fn is_present(self) -> bool {
        !matches!(self, CellFlag::Missing)
    }
}

/// One channel's values over a grid. Missing cells hold NaN and must not be
/// read without consulting the flag.
#[derive(Debug, Clone)]
pub struct Column {
    pub values: Vec<f64>,
    pub flags: Vec<CellFlag>,
}

impl Column {
    pub fn missing(len: usize) -> Self {
        Column {
            values: vec![f64::NAN; len],
            flags: vec![CellFlag::Missing; len],
        }
    }

    pub fn value(&self, k: usize) -> Option<f64> {
        self.flags[k].is_present().then(|| self.values[k])
    }
}

/// The four MW power channels, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerChannel {
    NetLoad,
    Load,
    Pv,
    Wind,
}

impl PowerChannel {
    pub const ALL: [PowerChannel; 4] = [
        PowerChannel::NetLoad,
        PowerChannel::Load,
        PowerChannel::Pv,
        PowerChannel::Wind,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PowerChannel::NetLoad => "net_load",
            PowerChannel::Load => "load",
            PowerChannel::Pv => "pv",
            PowerChannel::Wind => "wind",
        }
    }
}

/// Weather channel kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeatherKind {
    Temperature,
    Irradiance,
}

/// A channel named the way ingestion sees it: power channels by role,
/// weather channels by station id. Station ids are resolved to canonical
/// column positions when fragments are merged against a [`StationSet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelKey {
    Power(PowerChannel),
    Station(WeatherKind, String),
}

impl std::fmt::Display for ChannelKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelKey::Power(p) => write!(f, "{}", p.name()),
            ChannelKey::Station(WeatherKind::Temperature, id) => write!(f, "temp_{id}"),
            ChannelKey::Station(WeatherKind::Irradiance, id) => write!(f, "irr_{id}"),
        }
    }
}

/// The configured weather stations: exactly 4 temperature and 5 irradiance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationSet {
    temperature: Vec<String>,
    irradiance: Vec<String>,
}

impl StationSet {
    pub fn new(temperature: Vec<String>, irradiance: Vec<String>) -> Result<Self> {
        if temperature.len() != NUM_TEMPERATURE_STATIONS {
            return Err(Error::Config(format!(
                "expected {} temperature stations, got {}",
                NUM_TEMPERATURE_STATIONS,
                temperature.len()
            )));
        }
        if irradiance.len() != NUM_IRRADIANCE_STATIONS {
            return Err(Error::Config(format!(
                "expected {} irradiance stations, got {}",
                NUM_IRRADIANCE_STATIONS,
                irradiance.len()
            )));
        }
        Ok(StationSet {
            temperature,
            irradiance,
        })
    }

    pub fn temperature(&self) -> &[String] {
        &self.temperature
    }

    pub fn irradiance(&self) -> &[String] {
        &self.irradiance
    }

    /// Canonical column index for a channel key, or a config error if the
    /// station is not in the set.
    pub fn column_of(&self, key: &ChannelKey) -> Result<usize> {
        match key {
            ChannelKey::Power(p) => Ok(*p as usize),
            ChannelKey::Station(WeatherKind::Temperature, id) => self
                .temperature
                .iter()
                .position(|s| s == id)
                .map(|i| 4 + i)
                .ok_or_else(|| Error::Config(format!("unknown temperature station '{id}'"))),
            ChannelKey::Station(WeatherKind::Irradiance, id) => self
                .irradiance
                .iter()
                .position(|s| s == id)
                .map(|i| 4 + NUM_TEMPERATURE_STATIONS + i)
                .ok_or_else(|| Error::Config(format!("unknown irradiance station '{id}'"))),
        }
    }

    /// Column headers in canonical order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = PowerChannel::ALL.iter().map(|p| p.name().into()).collect();
        names.extend(self.temperature.iter().map(|s| format!("temp_{s}")));
        names.extend(self.irradiance.iter().map(|s| format!("irr_{s}")));
        names
    }
}

/// A single-channel piece of series, produced by ingestion or synthesis.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub key: ChannelKey,
    pub index: TimeIndex,
    pub column: Column,
}

/// Calendar attributes of one day. `day_of_week` is 0 = Monday .. 6 = Sunday.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayCalendar {
    pub date: NaiveDate,
    pub day_of_week: u32,
    pub month_of_year: u32,
    pub periods: usize,
}

impl DayCalendar {
    pub fn of(date: NaiveDate) -> Self {
        DayCalendar {
            date,
            day_of_week: date.weekday().num_days_from_monday(),
            month_of_year: date.month(),
            periods: PERIODS_PER_DAY,
        }
    }
}

/// Aligned multi-channel 5-minute series over one grid.
#[derive(Debug, Clone)]
pub struct SeriesFrame {
    index: TimeIndex,
    stations: StationSet,
    columns: Vec<Column>,
}

impl SeriesFrame {
    pub(crate) fn from_parts(
        index: TimeIndex,
        stations: StationSet,
        columns: Vec<Column>,
    ) -> Result<Self> {
        if columns.len() != NUM_CHANNELS {
            return Err(Error::Shape(format!(
                "frame needs {NUM_CHANNELS} columns, got {}",
                columns.len()
            )));
        }
        for col in &columns {
            if col.values.len() != index.count() || col.flags.len() != index.count() {
                return Err(Error::Shape("column length != index count".into()));
            }
        }
        Ok(SeriesFrame {
            index,
            stations,
            columns,
        })
    }

    pub fn index(&self) -> &TimeIndex {
        &self.index
    }

    pub fn stations(&self) -> &StationSet {
        &self.stations
    }

    pub fn column(&self, c: usize) -> &Column {
        &self.columns[c]
    }

    pub fn power(&self, channel: PowerChannel) -> &Column {
        &self.columns[channel as usize]
    }

    /// Grid position of 00:00 on `date`, if the whole day lies inside the
    /// index range.
    pub fn day_offset(&self, date: NaiveDate) -> Option<usize> {
        let midnight = date.and_hms_opt(0, 0, 0).unwrap();
        let pos = self.index.position(midnight)?;
        (pos + PERIODS_PER_DAY <= self.index.count()).then_some(pos)
    }

    /// All calendar dates fully covered by the grid, in order.
    pub fn covered_dates(&self) -> Vec<NaiveDate> {
        let mut dates = Vec::new();
        let mut date = self.index.start().date();
        if self.index.start().time() != chrono::NaiveTime::from_hms_opt(0, 0, 0).unwrap() {
            date = date.succ_opt().unwrap();
        }
        while self.day_offset(date).is_some() {
            dates.push(date);
            date = date.succ_opt().unwrap();
        }
        dates
    }

    /// The 288 values of `channel` on `date`, or None if the day is not
    /// fully covered or has a mask hole. Imputed values count as present.
    pub fn day_values(&self, channel: usize, date: NaiveDate) -> Option<Vec<f64>> {
        let offset = self.day_offset(date)?;
        let col = &self.columns[channel];
        let mut out = Vec::with_capacity(PERIODS_PER_DAY);
        for k in offset..offset + PERIODS_PER_DAY {
            out.push(col.value(k)?);
        }
        Some(out)
    }

    /// Grid points where the net-load identity `net = load - pv - wind`
    /// fails beyond `1e-6 * max(1, |load|)`, checked wherever all three
    /// components and net load are present.
    pub fn identity_violations(&self) -> Vec<(NaiveDateTime, f64)> {
        let net = self.power(PowerChannel::NetLoad);
        let load = self.power(PowerChannel::Load);
        let pv = self.power(PowerChannel::Pv);
        let wind = self.power(PowerChannel::Wind);
        let mut out = Vec::new();
        for k in 0..self.index.count() {
            if let (Some(n), Some(l), Some(s), Some(w)) =
                (net.value(k), load.value(k), pv.value(k), wind.value(k))
            {
                let residual = n - (l - s - w);
                if residual.abs() > 1e-6 * f64::max(1.0, l.abs()) {
                    out.push((self.index.timestamp(k), residual));
                }
            }
        }
        out
    }

    /// Count of cells flagged imputed across all channels.
    pub fn imputed_cells(&self) -> usize {
        self.columns
            .iter()
            .flat_map(|c| c.flags.iter())
            .filter(|f| **f == CellFlag::Imputed)
            .count()
    }

    /// Count of missing cells across all channels.
    pub fn missing_cells(&self) -> usize {
        self.columns
            .iter()
            .flat_map(|c| c.flags.iter())
            .filter(|f| **f == CellFlag::Missing)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dt(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap()
    }

    #[test]
    fn index_timestamps_are_grid_closed() {
        let idx = TimeIndex::new(dt("2021-03-01 06:00:00"), 10).unwrap();
        for k in 0..10 {
            let ts = idx.timestamp(k);
            assert_eq!(ts, dt("2021-03-01 06:00:00") + Duration::minutes(5 * k as i64));
            assert_eq!(idx.position(ts), Some(k));
        }
        assert_eq!(idx.position(dt("2021-03-01 06:02:00")), None);
        assert_eq!(idx.position(dt("2021-03-01 05:55:00")), None);
    }

    #[test]
    fn misaligned_start_rejected() {
        assert!(TimeIndex::new(dt("2021-03-01 06:02:00"), 4).is_err());
        assert!(TimeIndex::new(dt("2021-03-01 06:00:00"), 0).is_err());
    }

    #[test]
    fn day_calendar_fields() {
        // 2021-03-01 was a Monday.
        let cal = DayCalendar::of(NaiveDate::from_ymd_opt(2021, 3, 1).unwrap());
        assert_eq!(cal.day_of_week, 0);
        assert_eq!(cal.month_of_year, 3);
        assert_eq!(cal.periods, 288);
    }

    #[test]
    fn station_set_requires_exact_counts() {
        let too_few = StationSet::new(vec!["a".into()], vec![]);
        assert!(too_few.is_err());
        let ok = StationSet::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec!["p".into(), "q".into(), "r".into(), "s".into(), "t".into()],
        )
        .unwrap();
        assert_eq!(
            ok.column_of(&ChannelKey::Station(WeatherKind::Irradiance, "r".into()))
                .unwrap(),
            10
        );
        assert!(ok
            .column_of(&ChannelKey::Station(WeatherKind::Temperature, "zz".into()))
            .is_err());
    }
}
