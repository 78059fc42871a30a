//! Feature windows, scaling, and the sequential dataset split.
//!
//! A forecast for day δ sees the previous afternoon: the 96 five-minute
//! periods from 12:00 to 19:55 of day δ−1, over all 13 physical channels,
//! min-max scaled to [−1, 1], plus one-hot day-of-week and month-of-year
//! encodings of each row's own timestamp — 32 columns in all. Scalers (for
//! features and targets alike) are fitted on the training partition only and
//! applied without clamping, so validation/test extremes stay visible.

use chrono::NaiveDate;
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::exec;
use crate::ramps::RampLabel;
use crate::timeseries::{DayCalendar, SeriesFrame, NUM_CHANNELS};

/// Look-back window length T: 96 periods (12:00–19:55).
pub const LOOKBACK: usize = 96;

/// First period of the look-back window within day δ−1 (12:00).
pub const WINDOW_START_PERIOD: usize = 144;

/// Calendar encoding width: 7 day-of-week + 12 month-of-year.
pub const CALENDAR_DIM: usize = 19;

/// Total feature columns: 13 physical + 19 calendar.
pub const NUM_FEATURE_COLUMNS: usize = NUM_CHANNELS + CALENDAR_DIM;

/// Which quantity a network predicts: the primary ramp's magnitude or its
/// start period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Magnitude,
    StartTime,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Magnitude => "magnitude",
            TargetKind::StartTime => "start_time",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "magnitude" => Ok(TargetKind::Magnitude),
            "start_time" => Ok(TargetKind::StartTime),
            other => Err(Error::Config(format!("unknown target '{other}'"))),
        }
    }

    /// The scaled training target of one sample.
    pub fn scaled_target(self, sample: &Sample) -> f64 {
        match self {
            TargetKind::Magnitude => sample.scaled_magnitude,
            TargetKind::StartTime => sample.scaled_start,
        }
    }

    /// The target's scaler within a fitted [`ScalerSet`].
    pub fn scaler(self, scalers: &ScalerSet) -> &ScalerParams {
        match self {
            TargetKind::Magnitude => &scalers.magnitude_gw,
            TargetKind::StartTime => &scalers.start_period,
        }
    }
}

/// Fitted min-max transform for one feature or target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    pub feature: String,
    pub min: f64,
    pub max: f64,
}

impl ScalerParams {
    /// Fit over a non-empty, all-finite value stream.
    pub fn fit(feature: impl Into<String>, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let feature = feature.into();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut any = false;
        for v in values {
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "feature '{feature}' has non-finite values in the training partition"
                )));
            }
            min = min.min(v);
            max = max.max(v);
            any = true;
        }
        if !any {
            return Err(Error::EmptyInput(format!(
                "no training values to fit scaler for '{feature}'"
            )));
        }
        Ok(ScalerParams { feature, min, max })
    }

    /// Map min→−1, max→+1; a degenerate (constant) feature maps to 0.
    pub fn transform(&self, x: f64) -> f64 {
        if self.max > self.min {
            2.0 * (x - self.min) / (self.max - self.min) - 1.0
        } else {
            0.0
        }
    }

    /// Exact algebraic inverse; degenerate scalers return the constant.
    pub fn invert(&self, y: f64) -> f64 {
        if self.max > self.min {
            self.min + (y + 1.0) * (self.max - self.min) / 2.0
        } else {
            self.min
        }
    }
}

/// Inverse of the target transform (free function per the pipeline's public
/// surface; identical to [`ScalerParams::invert`]).
pub fn invert_target(scaled: f64, scaler: &ScalerParams) -> f64 {
    scaler.invert(scaled)
}

/// The full set of fitted scalers: 13 channel scalers in canonical column
/// order plus the two target scalers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerSet {
    pub channels: Vec<ScalerParams>,
    /// Magnitude target scaler, fitted in GW (MW / 1000).
    pub magnitude_gw: ScalerParams,
    /// Start-period target scaler, fitted on 0-based period indices.
    pub start_period: ScalerParams,
}

/// One scaled 96×32 input matrix for forecast day `date`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    /// Forecast day δ; the rows cover 12:00–19:55 of δ−1.
    pub date: NaiveDate,
    pub x: Array2<f64>,
}

/// A feature window with its targets, ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub date: NaiveDate,
    pub window: FeatureWindow,
    pub target_magnitude_mw: f64,
    pub target_start: usize,
    /// Magnitude target after GW conversion and min-max scaling.
    pub scaled_magnitude: f64,
    /// Start-period target after min-max scaling.
    pub scaled_start: f64,
}

/// One-hot day-of-week (0 = Monday) and month (1–12) encoding.
pub fn encode_calendar(day_of_week: u32, month: u32) -> Result<[f64; CALENDAR_DIM]> {
    if day_of_week > 6 {
        return Err(Error::Argument(format!(
            "day_of_week {day_of_week} outside 0..=6"
        )));
    }
    if !(1..=12).contains(&month) {
        return Err(Error::Argument(format!("month {month} outside 1..=12")));
    }
    let mut out = [0.0; CALENDAR_DIM];
    out[day_of_week as usize] = 1.0;
    out[7 + (month as usize - 1)] = 1.0;
    Ok(out)
}

/// Raw (unscaled) 96×13 physical window feeding the forecast for day `date`:
/// periods 144–239 of day `date − 1` across all channels. Errors if any cell
/// is missing (imputed cells are fine).
pub fn raw_window(frame: &SeriesFrame, date: NaiveDate) -> Result<Array2<f64>> {
    let prev = date.pred_opt().unwrap();
    let offset = frame.day_offset(prev).ok_or_else(|| Error::SkipSample {
        date,
        reason: format!("previous day {prev} not covered by the frame"),
    })?;
    let mut x = Array2::zeros((LOOKBACK, NUM_CHANNELS));
    for c in 0..NUM_CHANNELS {
        let column = frame.column(c);
        for r in 0..LOOKBACK {
            let k = offset + WINDOW_START_PERIOD + r;
            x[[r, c]] = column.value(k).ok_or_else(|| Error::SkipSample {
                date,
                reason: format!(
                    "missing {} at {} in the look-back window",
                    frame.stations().column_names()[c],
                    frame.index().timestamp(k)
                ),
            })?;
        }
    }
    Ok(x)
}

/// Fit the 13 channel scalers and both target scalers from the training
/// partition only: the raw windows and labels of `train_dates`.
pub fn fit_scalers(
    frame: &SeriesFrame,
    labels: &[RampLabel],
    train_dates: &[NaiveDate],
) -> Result<ScalerSet> {
    if train_dates.is_empty() {
        return Err(Error::EmptyInput(
            "cannot fit scalers on an empty training partition".into(),
        ));
    }
    let windows: Vec<Array2<f64>> = train_dates
        .iter()
        .map(|d| raw_window(frame, *d))
        .collect::<Result<_>>()?;
    let names = frame.stations().column_names();
    let channels = names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            ScalerParams::fit(
                name.clone(),
                windows.iter().flat_map(|w| w.column(c).to_vec()),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let train_labels: Vec<&RampLabel> = train_dates
        .iter()
        .map(|d| {
            labels.iter().find(|l| l.date == *d).ok_or_else(|| Error::SkipSample {
                date: *d,
                reason: "no ramp label for this training date".into(),
            })
        })
        .collect::<Result<_>>()?;
    let magnitude_gw = ScalerParams::fit(
        "target_magnitude_gw",
        train_labels.iter().map(|l| l.magnitude_mw / 1000.0),
    )?;
    let start_period = ScalerParams::fit(
        "target_start_period",
        train_labels.iter().map(|l| l.start_period as f64),
    )?;
    Ok(ScalerSet {
        channels,
        magnitude_gw,
        start_period,
    })
}

/// Build the scaled, calendar-encoded feature window for forecast day
/// `date` — no label needed, so this also serves forecast-only use on days
/// whose own net load is still unknown.
pub fn build_window(
    frame: &SeriesFrame,
    scalers: &ScalerSet,
    date: NaiveDate,
) -> Result<FeatureWindow> {
    let raw = raw_window(frame, date)?;
    let prev = date.pred_opt().unwrap();
    let calendar = {
        let cal = DayCalendar::of(prev);
        encode_calendar(cal.day_of_week, cal.month_of_year)?
    };
    let mut x = Array2::zeros((LOOKBACK, NUM_FEATURE_COLUMNS));
    for r in 0..LOOKBACK {
        for c in 0..NUM_CHANNELS {
            x[[r, c]] = scalers.channels[c].transform(raw[[r, c]]);
        }
        // Every row of the window lies inside day δ−1, so each row's own
        // timestamp carries the same calendar encoding.
        for (i, v) in calendar.iter().enumerate() {
            x[[r, NUM_CHANNELS + i]] = *v;
        }
    }
    debug_assert!(
        prev.and_hms_opt(19, 55, 0).unwrap() < date.and_hms_opt(0, 0, 0).unwrap(),
        "look-back window must end before day δ begins"
    );
    Ok(FeatureWindow { date, x })
}

/// Build the scaled sample for forecast day `date` from the frame, the label
/// set, and already-fitted scalers.
pub fn build_sample(
    frame: &SeriesFrame,
    labels: &[RampLabel],
    scalers: &ScalerSet,
    date: NaiveDate,
) -> Result<Sample> {
    let label = labels
        .iter()
        .find(|l| l.date == date)
        .ok_or_else(|| Error::SkipSample {
            date,
            reason: "no ramp label for this date".into(),
        })?;
    let window = build_window(frame, scalers, date)?;
    Ok(Sample {
        date,
        window,
        target_magnitude_mw: label.magnitude_mw,
        target_start: label.start_period,
        scaled_magnitude: scalers.magnitude_gw.transform(label.magnitude_mw / 1000.0),
        scaled_start: scalers.start_period.transform(label.start_period as f64),
    })
}

/// Contiguous chronological split: floor(0.70·n) train, floor(0.15·n)
/// validation, remainder test.
pub fn split_sequential<T>(items: &[T]) -> Result<(&[T], &[T], &[T])> {
    split_at(items, 0.70, 0.15)
}

/// [`split_sequential`] at arbitrary fractions: floor(train_frac·n) train,
/// floor(val_frac·n) validation, remainder test.
pub fn split_at<T>(items: &[T], train_frac: f64, val_frac: f64) -> Result<(&[T], &[T], &[T])> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::Validation(format!(
            "split fractions must be positive with train + val < 1, \
             got train {train_frac} val {val_frac}"
        )));
    }
    let n = items.len();
    if n < 3 {
        return Err(Error::Validation(format!(
            "need at least 3 samples to split, got {n}"
        )));
    }
    let train = (train_frac * n as f64).floor() as usize;
    let val = (val_frac * n as f64).floor() as usize;
    Ok((
        &items[..train],
        &items[train..train + val],
        &items[train + val..],
    ))
}

/// A fully built dataset: every usable sample, scaled with train-fitted
/// scalers, plus the partition sizes of the sequential split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub scalers: ScalerSet,
    pub train_len: usize,
    pub val_len: usize,
}

impl Dataset {
    pub fn train(&self) -> &[Sample] {
        &self.samples[..self.train_len]
    }

    pub fn val(&self) -> &[Sample] {
        &self.samples[self.train_len..self.train_len + self.val_len]
    }

    pub fn test(&self) -> &[Sample] {
        &self.samples[self.train_len + self.val_len..]
    }
}

/// End-to-end dataset construction: find the labeled days whose previous
/// afternoon is complete, split them sequentially, fit scalers on the
/// training partition, and scale every sample with those scalers. Days with
/// unusable windows are skipped with a logged reason.
pub fn build_dataset(frame: &SeriesFrame, labels: &[RampLabel]) -> Result<Dataset> {
    build_dataset_with_split(frame, labels, 0.70, 0.15)
}

/// [`build_dataset`] with configurable split fractions.
pub fn build_dataset_with_split(
    frame: &SeriesFrame,
    labels: &[RampLabel],
    train_frac: f64,
    val_frac: f64,
) -> Result<Dataset> {
    let mut dates = Vec::with_capacity(labels.len());
    for label in labels {
        match raw_window(frame, label.date) {
            Ok(_) => dates.push(label.date),
            Err(Error::SkipSample { date, reason }) => {
                log::warn!("skipping sample for {date}: {reason}");
            }
            Err(e) => return Err(e),
        }
    }
    let (train_dates, val_dates, test_dates) = split_at(&dates, train_frac, val_frac)?;
    let scalers = fit_scalers(frame, labels, train_dates)?;

    let samples = exec::map(&dates, |date| build_sample(frame, labels, &scalers, *date))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        train_len: train_dates.len(),
        val_len: val_dates.len(),
        samples,
        scalers,
    })
    .map(|d| {
        debug_assert_eq!(d.test().len(), test_dates.len());
        d
    })
}
