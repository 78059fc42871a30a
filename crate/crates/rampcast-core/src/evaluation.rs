//! Benchmarks, metrics, walk-forward evaluation, and report emission.
//!
//! Four columns, as in the published comparison: the proposed LSTM model
//! (PM), GRU and SRN benchmarks trained the same way, and the naïve
//! persistence model (NPM) that repeats yesterday's observed ramp. Metrics
//! are MSE/MAE/MAPE over per-day error terms, aggregated as the unweighted
//! mean and the population standard deviation. Magnitudes are scored in GW;
//! start times in 5-minute period indices (MAPE uses 1-based indices in the
//! denominator so period 0 cannot divide by zero).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::exec;
use crate::features::{Sample, TargetKind};
use crate::ramps::RampLabel;
use crate::training::{predict_magnitude, predict_start_detailed, TrainedModel};

/// Table column identifiers, in emission order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    /// The proposed (LSTM) model.
    Pm,
    Gru,
    Srn,
    /// Naïve persistence.
    Npm,
}

/// All four, in the published column order.
pub const MODEL_ORDER: [ModelId; 4] = [ModelId::Pm, ModelId::Gru, ModelId::Srn, ModelId::Npm];

impl ModelId {
    pub fn name(self) -> &'static str {
        match self {
            ModelId::Pm => "PM",
            ModelId::Gru => "GRU",
            ModelId::Srn => "SRN",
            ModelId::Npm => "NPM",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "PM" => Ok(ModelId::Pm),
            "GRU" => Ok(ModelId::Gru),
            "SRN" => Ok(ModelId::Srn),
            "NPM" => Ok(ModelId::Npm),
            other => Err(Error::Validation(format!("unknown model id '{other}'"))),
        }
    }
}

/// One model's forecast for one test day, next to the recorded label.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRecord {
    pub date: NaiveDate,
    pub model: ModelId,
    pub pred_magnitude_gw: f64,
    pub actual_magnitude_gw: f64,
    pub pred_start: usize,
    pub actual_start: usize,
}

/// Mean and population standard deviation of one metric's error terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

/// One model's row: the three metrics plus the MAPE exclusion count.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMetrics {
    pub model: ModelId,
    pub mse: Stat,
    pub mae: Stat,
    pub mape: Stat,
    /// Records dropped from MAPE because the actual was exactly zero.
    pub mape_excluded: usize,
}

/// The 4-model × 3-metric × {mean, std} table for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub target: TargetKind,
    pub models: Vec<ModelMetrics>,
}

/// The metrics of one record list (one model's records).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub mse: Stat,
    pub mae: Stat,
    pub mape: Stat,
    pub mape_excluded: usize,
}

/// Per-record error terms for one target field. `mape` is `None` when the
/// record is excluded (zero actual).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorTerms {
    pub mse: f64,
    pub mae: f64,
    pub mape: Option<f64>,
}

/// The error terms of one record: e_MSE = (a−p)², e_MAE = |a−p|,
/// e_MAPE = 100·|a−p|/|a|. Start times use 0-based period indices for
/// MSE/MAE and 1-based indices in the MAPE denominator.
pub fn error_terms(record: &ForecastRecord, field: TargetKind) -> ErrorTerms {
    let (actual, pred, denom) = match field {
        TargetKind::Magnitude => {
            let a = record.actual_magnitude_gw;
            (a, record.pred_magnitude_gw, a.abs())
        }
        TargetKind::StartTime => {
            let a = record.actual_start as f64;
            (a, record.pred_start as f64, a + 1.0)
        }
    };
    let abs_err = (actual - pred).abs();
    ErrorTerms {
        mse: abs_err * abs_err,
        mae: abs_err,
        mape: (denom != 0.0).then(|| 100.0 * abs_err / denom),
    }
}

fn mean_and_population_std(values: &[f64]) -> Stat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Stat {
        mean,
        std: var.sqrt(),
    }
}

/// MSE/MAE/MAPE of one model's records on one target field.
pub fn metrics(records: &[ForecastRecord], field: TargetKind) -> Result<MetricSummary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("metrics over zero records".into()));
    }
    let mut mse = Vec::with_capacity(records.len());
    let mut mae = Vec::with_capacity(records.len());
    let mut mape = Vec::with_capacity(records.len());
    for r in records {
        let e = error_terms(r, field);
        mse.push(e.mse);
        mae.push(e.mae);
        if let Some(m) = e.mape {
            mape.push(m);
        }
    }
    let mape_excluded = records.len() - mape.len();
    if mape.is_empty() {
        return Err(Error::Numerical(
            "every actual is zero; MAPE is undefined for this record set".into(),
        ));
    }
    if mape_excluded > 0 {
        log::info!(
            "MAPE: excluded {mape_excluded} of {} records with zero actuals",
            records.len()
        );
    }
    Ok(MetricSummary {
        mse: mean_and_population_std(&mse),
        mae: mean_and_population_std(&mae),
        mape: mean_and_population_std(&mape),
        mape_excluded,
    })
}

/// The naïve persistence forecast for day δ: the most recent label before δ,
/// verbatim — `(magnitude_mw, start_period)`. For the first test day that is
/// the last pre-test label. `labels` must be sorted by date.
pub fn npm_forecast(labels: &[RampLabel], date: NaiveDate) -> Result<(f64, usize)> {
    let idx = labels.partition_point(|l| l.date < date);
    if idx == 0 {
        return Err(Error::Validation(format!(
            "no label before {date}; the persistence benchmark needs one"
        )));
    }
    let prev = &labels[idx - 1];
    Ok((prev.magnitude_mw, prev.start_period))
}

/// A trained magnitude/start-time pair for one architecture.
#[derive(Debug, Clone)]
pub struct ModelPair {
    pub magnitude: TrainedModel,
    pub start: TrainedModel,
}

/// The full evaluation product: per-day records plus one table per target.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub records: Vec<ForecastRecord>,
    pub magnitude: MetricTable,
    pub start: MetricTable,
    /// Start predictions the clamp changed, across PM/GRU/SRN.
    pub clamped_start_predictions: usize,
}

impl Evaluation {
    /// Total magnitude-MAPE exclusions, for the manifest.
    pub fn mape_excluded_total(&self) -> usize {
        self.magnitude
            .models
            .iter()
            .map(|m| m.mape_excluded)
            .sum()
    }
}

fn check_pair(pair: &ModelPair, which: &str, reference: &ModelPair) -> Result<()> {
    if pair.magnitude.config.target != TargetKind::Magnitude
        || pair.start.config.target != TargetKind::StartTime
    {
        return Err(Error::Config(format!(
            "{which} pair's models are not (magnitude, start_time)"
        )));
    }
    for model in [&pair.magnitude, &pair.start] {
        if model.scalers != reference.magnitude.scalers {
            return Err(Error::PartitionMismatch(format!(
                "{which} models were fitted with different scalers — \
                 the models do not share a training partition"
            )));
        }
    }
    Ok(())
}

/// Walk-forward evaluation over the sequential test partition: one record
/// per test day per model, scored into a magnitude table and a start-time
/// table. `labels` is the full chronological label set (the persistence
/// benchmark reads the day before each test day from it).
pub fn evaluate(
    pm: &ModelPair,
    gru: &ModelPair,
    srn: &ModelPair,
    labels: &[RampLabel],
    test: &[Sample],
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test partition is empty".into()));
    }
    if !labels.windows(2).all(|w| w[0].date < w[1].date) {
        return Err(Error::Validation(
            "label set must be sorted by date with no duplicates".into(),
        ));
    }
    check_pair(pm, "PM", pm)?;
    check_pair(gru, "GRU", pm)?;
    check_pair(srn, "SRN", pm)?;
    for s in test {
        let label = labels
            .binary_search_by_key(&s.date, |l| l.date)
            .map_err(|_| {
                Error::PartitionMismatch(format!("test sample {} has no label", s.date))
            })?;
        if labels[label].magnitude_mw != s.target_magnitude_mw
            || labels[label].start_period != s.target_start
        {
            return Err(Error::PartitionMismatch(format!(
                "test sample {} disagrees with its label",
                s.date
            )));
        }
    }

    struct DayOutput {
        records: [ForecastRecord; 4],
        clamped: usize,
    }

    let per_day: Vec<Result<DayOutput>> = exec::map(test, |sample| {
        let actual_gw = sample.target_magnitude_mw / 1000.0;
        let actual_start = sample.target_start;
        let mut clamped = 0;
        let mut neural = |id: ModelId, pair: &ModelPair| -> Result<ForecastRecord> {
            let mag = predict_magnitude(&pair.magnitude, &sample.window)?;
            let start = predict_start_detailed(&pair.start, &sample.window)?;
            if start.clamped {
                clamped += 1;
            }
            Ok(ForecastRecord {
                date: sample.date,
                model: id,
                pred_magnitude_gw: mag,
                actual_magnitude_gw: actual_gw,
                pred_start: start.period,
                actual_start,
            })
        };
        let pm_rec = neural(ModelId::Pm, pm)?;
        let gru_rec = neural(ModelId::Gru, gru)?;
        let srn_rec = neural(ModelId::Srn, srn)?;
        let (npm_mw, npm_start) = npm_forecast(labels, sample.date)?;
        let npm_rec = ForecastRecord {
            date: sample.date,
            model: ModelId::Npm,
            pred_magnitude_gw: npm_mw / 1000.0,
            actual_magnitude_gw: actual_gw,
            pred_start: npm_start,
            actual_start,
        };
        Ok(DayOutput {
            records: [pm_rec, gru_rec, srn_rec, npm_rec],
            clamped,
        })
    });

    let mut records = Vec::with_capacity(test.len() * 4);
    let mut clamped_start_predictions = 0;
    for day in per_day {
        let day = day?;
        clamped_start_predictions += day.clamped;
        records.extend(day.records);
    }

    let table = |target: TargetKind| -> Result<MetricTable> {
        let mut models = Vec::with_capacity(4);
        for id in MODEL_ORDER {
            let own: Vec<ForecastRecord> =
                records.iter().filter(|r| r.model == id).cloned().collect();
            let summary = metrics(&own, target)?;
            models.push(ModelMetrics {
                model: id,
                mse: summary.mse,
                mae: summary.mae,
                mape: summary.mape,
                mape_excluded: summary.mape_excluded,
            });
        }
        Ok(MetricTable { target, models })
    };

    Ok(Evaluation {
        magnitude: table(TargetKind::Magnitude)?,
        start: table(TargetKind::StartTime)?,
        records,
        clamped_start_predictions,
    })
}

/// Data-range and methodology facts recorded next to the numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub data_range: (NaiveDate, NaiveDate),
    pub train_range: (NaiveDate, NaiveDate),
    pub val_range: (NaiveDate, NaiveDate),
    pub test_range: (NaiveDate, NaiveDate),
    pub clamped_start_predictions: usize,
    pub magnitude_mape_excluded: usize,
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub metrics: PathBuf,
    pub forecasts: PathBuf,
    pub manifest: PathBuf,
}

/// Write the metrics file, the per-day forecast file, and the run manifest.
/// All three are deterministic functions of their inputs, so a rerun is
/// byte-identical.
pub fn emit_report(
    evaluation: &Evaluation,
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<ReportPaths> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let paths = ReportPaths {
        metrics: out_dir.join("metrics.txt"),
        forecasts: out_dir.join("forecasts.csv"),
        manifest: out_dir.join("manifest.txt"),
    };

    let mut m = String::from("rampcast-metrics 1\n");
    for table in [&evaluation.magnitude, &evaluation.start] {
        write_table(&mut m, table);
    }
    fs::write(&paths.metrics, m).map_err(|e| Error::io(&paths.metrics, e))?;

    let mut f = String::from("date,model,pred_mag_gw,act_mag_gw,pred_start,act_start\n");
    for r in &evaluation.records {
        let _ = writeln!(
            f,
            "{},{},{},{},{},{}",
            r.date,
            r.model.name(),
            r.pred_magnitude_gw,
            r.actual_magnitude_gw,
            r.pred_start,
            r.actual_start
        );
    }
    fs::write(&paths.forecasts, f).map_err(|e| Error::io(&paths.forecasts, e))?;

    let mut man = String::from("rampcast-manifest 1\n");
    let _ = writeln!(man, "config_hash {}", manifest.config_hash);
    let _ = writeln!(man, "seed {}", manifest.seed);
    for (name, (a, b)) in [
        ("data_range", manifest.data_range),
        ("train_range", manifest.train_range),
        ("val_range", manifest.val_range),
        ("test_range", manifest.test_range),
    ] {
        let _ = writeln!(man, "{name} {a}..{b}");
    }
    let _ = writeln!(
        man,
        "clamped_start_predictions {}",
        manifest.clamped_start_predictions
    );
    let _ = writeln!(
        man,
        "magnitude_mape_excluded {}",
        manifest.magnitude_mape_excluded
    );
    man.push_str("std_definition population\n");
    man.push_str("magnitude_units GW\n");
    man.push_str("start_units five_minute_period\n");
    man.push_str("start_mape_denominator one_based_period\n");
    fs::write(&paths.manifest, man).map_err(|e| Error::io(&paths.manifest, e))?;

    Ok(paths)
}

fn write_table(out: &mut String, table: &MetricTable) {
    let target = table.target.name();
    for row in &table.models {
        let model = row.model.name();
        for (metric, stat) in [("MSE", row.mse), ("MAE", row.mae), ("MAPE", row.mape)] {
            let _ = writeln!(out, "{target}.{model}.{metric}.mean {}", stat.mean);
            let _ = writeln!(out, "{target}.{model}.{metric}.std {}", stat.std);
        }
        let _ = writeln!(out, "{target}.{model}.mape_excluded {}", row.mape_excluded);
    }
}

/// Parse a metrics file back into its tables (inverse of the emission in
/// [`emit_report`]).
pub fn read_metric_tables(path: &Path) -> Result<(MetricTable, MetricTable)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("rampcast-metrics 1") {
        return Err(Error::Validation(format!(
            "{}: not a metrics file",
            path.display()
        )));
    }
    let mut tables = Vec::new();
    for target in [TargetKind::Magnitude, TargetKind::StartTime] {
        let mut models = Vec::new();
        for id in MODEL_ORDER {
            let mut stats = [Stat {
                mean: f64::NAN,
                std: f64::NAN,
            }; 3];
            for (mi, metric) in ["MSE", "MAE", "MAPE"].iter().enumerate() {
                let mut pair = [f64::NAN; 2];
                for (si, stat_name) in ["mean", "std"].iter().enumerate() {
                    let key = format!("{}.{}.{metric}.{stat_name}", target.name(), id.name());
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::Validation("metrics file truncated".into()))?;
                    let value = line.strip_prefix(&key).and_then(|v| v.strip_prefix(' '));
                    let value = value.ok_or_else(|| {
                        Error::Validation(format!("expected '{key} <value>', got '{line}'"))
                    })?;
                    pair[si] = value
                        .parse()
                        .map_err(|_| Error::Validation(format!("bad value in '{line}'")))?;
                }
                stats[mi] = Stat {
                    mean: pair[0],
                    std: pair[1],
                };
            }
            let key = format!("{}.{}.mape_excluded", target.name(), id.name());
            let line = lines
                .next()
                .ok_or_else(|| Error::Validation("metrics file truncated".into()))?;
            let value = line
                .strip_prefix(&key)
                .and_then(|v| v.strip_prefix(' '))
                .ok_or_else(|| {
                    Error::Validation(format!("expected '{key} <value>', got '{line}'"))
                })?;
            let mape_excluded = value
                .parse()
                .map_err(|_| Error::Validation(format!("bad count in '{line}'")))?;
            models.push(ModelMetrics {
                model: id,
                mse: stats[0],
                mae: stats[1],
                mape: stats[2],
                mape_excluded,
            });
        }
        tables.push(MetricTable { target, models });
    }
    let start = tables.pop().expect("two tables");
    let magnitude = tables.pop().expect("two tables");
    Ok((magnitude, start))
}
