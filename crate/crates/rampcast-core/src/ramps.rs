//! Daily primary three-hour net-load ramp labels.
//!
//! For each complete day the label is the largest signed *increase* of net
//! load across any exactly-36-period (3-hour) window that lies fully inside
//! the day: magnitude in MW and the 0-based 5-minute start period. Ties go to
//! the earliest start, so labels are deterministic. Downward ramps never win,
//! even when larger in absolute value — flexible-capacity planning targets
//! upward ramps.

use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};
use crate::exec;
use crate::timeseries::{PowerChannel, SeriesFrame, PERIODS_PER_DAY, STEP_MINUTES};

/// Ramp window length in 5-minute periods (3 hours).
pub const RAMP_WINDOW: usize = 36;

/// Number of candidate windows per day. The rise is measured between the
/// samples exactly 36 periods apart, so the last start period whose window
/// endpoint still lies inside the day is 251.
pub const NUM_WINDOWS: usize = PERIODS_PER_DAY - RAMP_WINDOW; // 252

/// Latest legal start period.
pub const MAX_START_PERIOD: usize = NUM_WINDOWS - 1; // 251

/// Ground-truth label for one day's primary three-hour net-load ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct RampLabel {
    pub date: NaiveDate,
    /// Signed rise over the window, `net(start + 36) - net(start)`, in MW.
    pub magnitude_mw: f64,
    /// 0-based 5-minute period of day where the window starts, in
    /// [0, [`MAX_START_PERIOD`]].
    pub start_period: usize,
    pub start_timestamp: NaiveDateTime,
}

impl RampLabel {
    /// Build a label; the start timestamp is derived from the period index.
    pub fn new(date: NaiveDate, magnitude_mw: f64, start_period: usize) -> Self {
        let start_timestamp = date.and_hms_opt(0, 0, 0).unwrap()
            + chrono::Duration::minutes(STEP_MINUTES * start_period as i64);
        RampLabel {
            date,
            magnitude_mw,
            start_period,
            start_timestamp,
        }
    }
}

/// Largest 36-period rise in one day's 288 net-load values; ties break to
/// the earliest start period.
pub fn extract_ramp(date: NaiveDate, series: &[f64]) -> Result<RampLabel> {
    if series.len() != PERIODS_PER_DAY {
        return Err(Error::Shape(format!(
            "extract_ramp needs {PERIODS_PER_DAY} values, got {}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::IncompleteDay(date));
    }
    let mut best_start = 0;
    let mut best_rise = series[RAMP_WINDOW] - series[0];
    for t in 1..=MAX_START_PERIOD {
        let rise = series[t + RAMP_WINDOW] - series[t];
        if rise > best_rise {
            best_rise = rise;
            best_start = t;
        }
    }
    Ok(RampLabel::new(date, best_rise, best_start))
}

/// One label per complete day of the frame, chronologically ordered. Days
/// with a mask hole in net load are skipped with a logged reason.
pub fn build_label_set(frame: &SeriesFrame) -> Result<Vec<RampLabel>> {
    let dates = frame.covered_dates();
    if dates.is_empty() {
        return Err(Error::EmptyLabelSet(
            "frame covers no complete calendar day".into(),
        ));
    }
    let net_channel = PowerChannel::NetLoad as usize;
    let per_day = exec::map(&dates, |date| {
        match frame.day_values(net_channel, *date) {
            Some(series) => extract_ramp(*date, &series).map(Some),
            None => Ok(None), // mask hole: skip, don't fail the set
        }
    });
    let mut labels = Vec::with_capacity(dates.len());
    for (date, outcome) in dates.iter().zip(per_day) {
        match outcome {
            Ok(Some(label)) => labels.push(label),
            Ok(None) | Err(Error::IncompleteDay(_)) => {
                log::warn!("skipping {date}: net load has a mask hole");
            }
            Err(e) => return Err(e),
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyLabelSet(
            "every covered day has a mask hole in net load".into(),
        ));
    }
    Ok(labels)
}

/// Write labels as CSV: date, magnitude_mw, start_period, start_timestamp.
pub fn write_labels(labels: &[RampLabel], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record(["date", "magnitude_mw", "start_period", "start_timestamp"])
        .map_err(|e| Error::csv(path, e))?;
    for label in labels {
        writer
            .write_record([
                label.date.format("%Y-%m-%d").to_string(),
                format!("{}", label.magnitude_mw),
                label.start_period.to_string(),
                label.start_timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read labels written by [`write_labels`].
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<RampLabel>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |what: &str| Error::Ingest {
            path: path.into(),
            line,
            reason: format!("unparseable {what} '{}'", field(0)),
        };
        let date = NaiveDate::parse_from_str(field(0), "%Y-%m-%d").map_err(|_| bad("date"))?;
        let magnitude_mw: f64 = field(1).parse().map_err(|_| bad("magnitude"))?;
        let start_period: usize = field(2).parse().map_err(|_| bad("start period"))?;
        if start_period > MAX_START_PERIOD {
            return Err(Error::Validation(format!(
                "start period {start_period} exceeds {MAX_START_PERIOD} in {}",
                path.display()
            )));
        }
        labels.push(RampLabel::new(date, magnitude_mw, start_period));
    }
    if labels.is_empty() {
        return Err(Error::EmptyLabelSet(format!(
            "{} holds no labels",
            path.display()
        )));
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Independent oracle: enumerate every window whose endpoint sample lies
    /// inside the day (252 of them) and pick the largest rise, scanning in
    /// order so the earliest tie wins.
    fn oracle(series: &[f64]) -> (f64, usize) {
        assert_eq!(series.len(), PERIODS_PER_DAY);
        let mut best: Option<(f64, usize)> = None;
        for t in 0..=MAX_START_PERIOD {
            let rise = series[t + RAMP_WINDOW] - series[t];
            best = match best {
                None => Some((rise, t)),
                Some((b, _)) if rise > b => Some((rise, t)),
                keep => keep,
            };
        }
        best.unwrap()
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 6, 15).unwrap()
    }

    #[test]
    fn constant_series_is_zero_at_start_zero() {
        let series = vec![25_000.0; PERIODS_PER_DAY];
        let label = extract_ramp(date(), &series).unwrap();
        assert_eq!(label.magnitude_mw, 0.0);
        assert_eq!(label.start_period, 0);
        assert_eq!(
            label.start_timestamp,
            date().and_hms_opt(0, 0, 0).unwrap()
        );
    }

    #[test]
    fn linear_rise_ties_to_earliest() {
        let series: Vec<f64> = (0..PERIODS_PER_DAY).map(|t| 10.0 * t as f64).collect();
        let label = extract_ramp(date(), &series).unwrap();
        assert_eq!(label.magnitude_mw, 360.0);
        assert_eq!(label.start_period, 0);
    }

    #[test]
    fn downward_ramp_never_wins() {
        // Big drop early, small rise late: the small rise must win.
        let mut series = vec![0.0; PERIODS_PER_DAY];
        for t in 0..60 {
            series[t] = -100.0 * t as f64; // steep fall
        }
        for t in 60..PERIODS_PER_DAY {
            series[t] = series[59] + 2.0 * (t - 59) as f64; // gentle rise
        }
        let label = extract_ramp(date(), &series).unwrap();
        assert!(label.magnitude_mw > 0.0);
        assert_eq!(label.magnitude_mw, 72.0);
    }

    #[test]
    fn thousand_seeded_random_days_match_oracle() {
        let mut rng = crate::rng::stream_rng(99, crate::rng::Stream::Synth, 0, 0);
        for _ in 0..1000 {
            let series: Vec<f64> = (0..PERIODS_PER_DAY)
                .map(|_| rng.gen_range(-50_000.0..50_000.0))
                .collect();
            let label = extract_ramp(date(), &series).unwrap();
            let (mag, start) = oracle(&series);
            assert_eq!(label.magnitude_mw, mag);
            assert_eq!(label.start_period, start);
        }
    }

    #[test]
    fn hole_is_incomplete_day() {
        let mut series = vec![1.0; PERIODS_PER_DAY];
        series[100] = f64::NAN;
        assert!(matches!(
            extract_ramp(date(), &series),
            Err(Error::IncompleteDay(_))
        ));
    }

    #[test]
    fn window_exactness() {
        let mut rng = crate::rng::stream_rng(5, crate::rng::Stream::Synth, 1, 0);
        let series: Vec<f64> = (0..PERIODS_PER_DAY)
            .map(|_| rng.gen_range(0.0..1000.0))
            .collect();
        let label = extract_ramp(date(), &series).unwrap();
        assert_eq!(
            label.magnitude_mw,
            series[label.start_period + RAMP_WINDOW] - series[label.start_period]
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn oracle_equivalence(series in proptest::collection::vec(-1e6f64..1e6, PERIODS_PER_DAY)) {
            let label = extract_ramp(date(), &series).unwrap();
            let (mag, start) = oracle(&series);
            prop_assert_eq!(label.magnitude_mw, mag);
            prop_assert_eq!(label.start_period, start);
        }

        #[test]
        fn shift_invariance(
            series in proptest::collection::vec(-1e5f64..1e5, PERIODS_PER_DAY),
            c in -1e5f64..1e5,
        ) {
            let base = extract_ramp(date(), &series).unwrap();
            let shifted: Vec<f64> = series.iter().map(|v| v + c).collect();
            let moved = extract_ramp(date(), &shifted).unwrap();
            prop_assert_eq!(base.start_period, moved.start_period);
            prop_assert!((base.magnitude_mw - moved.magnitude_mw).abs() <= 1e-6);
        }

        #[test]
        fn scale_equivariance(
            series in proptest::collection::vec(-1e5f64..1e5, PERIODS_PER_DAY),
            lambda in 1e-3f64..1e3,
        ) {
            let base = extract_ramp(date(), &series).unwrap();
            let scaled: Vec<f64> = series.iter().map(|v| v * lambda).collect();
            let result = extract_ramp(date(), &scaled).unwrap();
            prop_assert_eq!(base.start_period, result.start_period);
            let expected = base.magnitude_mw * lambda;
            prop_assert!((result.magnitude_mw - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn label_set_on_synth_matches_oracle() {
        use crate::timeseries::{synth_duck, SynthParams};
        let frame = synth_duck(7, 30, &SynthParams::default()).unwrap();
        let labels = build_label_set(&frame).unwrap();
        assert_eq!(labels.len(), 30);
        for label in &labels {
            let series = frame
                .day_values(PowerChannel::NetLoad as usize, label.date)
                .unwrap();
            let (mag, start) = oracle(&series);
            assert_eq!(label.magnitude_mw, mag);
            assert_eq!(label.start_period, start);
        }
        // Chronological order.
        for pair in labels.windows(2) {
            assert!(pair[0].date < pair[1].date);
        }
    }

    #[test]
    fn labels_round_trip_through_csv() {
        use crate::timeseries::{synth_duck, SynthParams};
        let frame = synth_duck(11, 5, &SynthParams::default()).unwrap();
        let labels = build_label_set(&frame).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        write_labels(&labels, &path).unwrap();
        let back = read_labels(&path).unwrap();
        assert_eq!(back, labels);
    }

    #[test]
    fn synth_ramps_start_after_noon() {
        use crate::timeseries::{synth_duck, SynthParams};
        let frame = synth_duck(7, 100, &SynthParams::default()).unwrap();
        let labels = build_label_set(&frame).unwrap();
        let after_noon = labels
            .iter()
            .filter(|l| l.start_period >= PERIODS_PER_DAY / 2)
            .count();
        assert!(
            after_noon >= 90,
            "only {after_noon}/100 primary ramps start after 12:00"
        );
    }
}
