//! The six pipeline commands. Each one reads the shared config, works from
//! files the previous stage wrote into the output directory, and writes its
//! own artifacts there — no state crosses commands except through files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;

use rampcast_core::evaluation::{
    evaluate, emit_report, Evaluation, ModelPair, RunManifest, MODEL_ORDER,
};
use rampcast_core::features::{
    build_dataset_with_split, build_window, Dataset, Sample, TargetKind,
};
use rampcast_core::neural::{read_checkpoint, write_checkpoint, CellKind, Checkpoint};
use rampcast_core::ramps::{build_label_set, read_labels, write_labels, RampLabel};
use rampcast_core::timeseries::{
    ingest_power, ingest_weather, merge_align, read_frame, synth_duck, write_frame, Fragment,
    SeriesFrame, WeatherKind,
};
use rampcast_core::training::{
    predict_magnitude, predict_start_detailed, train_with_rescue, write_history, TrainConfig,
    TrainedModel,
};
use rampcast_core::{Error, Result};

use crate::config::{config_hash, RunConfig};

/// Where each pipeline artifact lives under the output directory.
pub struct OutPaths {
    root: PathBuf,
}

impl OutPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutPaths { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn frame(&self) -> PathBuf {
        self.root.join("frame.csv")
    }

    pub fn labels(&self) -> PathBuf {
        self.root.join("labels.csv")
    }

    pub fn checkpoint(&self, cell: CellKind, target: TargetKind) -> PathBuf {
        self.root.join(format!("{}-{}.ckpt", cell.name(), target.name()))
    }

    pub fn history(&self, cell: CellKind, target: TargetKind) -> PathBuf {
        self.root
            .join(format!("{}-{}-history.csv", cell.name(), target.name()))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    fn ensure_root(&self) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))
    }
}

/// Missing prerequisite files are user errors with a hint, not I/O faults.
fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} not found; {hint}",
            path.display()
        )))
    }
}

fn print_frame_summary(frame: &SeriesFrame, path: &Path) {
    let index = frame.index();
    println!(
        "frame: {} periods  {} .. {}",
        index.count(),
        index.start(),
        index.end()
    );
    println!(
        "imputed cells: {}   missing cells: {}",
        frame.imputed_cells(),
        frame.missing_cells()
    );
    println!(
        "net-load identity violations: {}",
        frame.identity_violations().len()
    );
    println!("wrote {}", path.display());
}

fn synthesize(config: &RunConfig, days: Option<usize>) -> Result<SeriesFrame> {
    let days = days.unwrap_or(config.synth.days);
    if days == 0 {
        return Err(Error::Config("days must be at least 1".into()));
    }
    let params = config.synth_params()?;
    synth_duck(config.seed, days, &params)
}

/// `ingest`: read the raw CSVs (or synthesize) into one aligned frame file.
pub fn cmd_ingest(config: &RunConfig, synthetic: bool, days: Option<usize>) -> Result<()> {
    let paths = OutPaths::new(&config.out_dir);
    paths.ensure_root()?;
    let frame = if synthetic {
        synthesize(config, days)?
    } else {
        let power_path = config.data.power.as_ref().ok_or_else(|| {
            Error::Config(
                "no power CSV configured; set [data] power = \"...\" or pass --synthetic".into(),
            )
        })?;
        let stations = config.station_set()?;
        let mut fragments: Vec<Fragment> =
            ingest_power(power_path, &config.data.power_columns)?;
        for (kind, ids, files) in [
            (
                WeatherKind::Temperature,
                stations.temperature().to_vec(),
                &config.data.temperature,
            ),
            (
                WeatherKind::Irradiance,
                stations.irradiance().to_vec(),
                &config.data.irradiance,
            ),
        ] {
            for id in &ids {
                let file = files.get(id).ok_or_else(|| {
                    Error::Config(format!(
                        "no CSV configured for {} station '{id}'",
                        match kind {
                            WeatherKind::Temperature => "temperature",
                            WeatherKind::Irradiance => "irradiance",
                        }
                    ))
                })?;
                require(file, &format!("station '{id}' needs its data file"))?;
                fragments.push(ingest_weather(
                    file,
                    id,
                    kind,
                    &stations,
                    &config.data.weather_columns,
                )?);
            }
        }
        merge_align(&fragments, config.data.fill, &stations)?
    };
    write_frame(&frame, paths.frame())?;
    print_frame_summary(&frame, &paths.frame());
    Ok(())
}

/// `synth`: generate a synthetic duck-curve frame (explicit generator).
pub fn cmd_synth(config: &RunConfig, days: Option<usize>) -> Result<()> {
    let paths = OutPaths::new(&config.out_dir);
    paths.ensure_root()?;
    let frame = synthesize(config, days)?;
    write_frame(&frame, paths.frame())?;
    print_frame_summary(&frame, &paths.frame());
    Ok(())
}

/// `label`: extract each complete day's primary three-hour ramp.
pub fn cmd_label(config: &RunConfig) -> Result<()> {
    let paths = OutPaths::new(&config.out_dir);
    require(&paths.frame(), "run `rampcast ingest` or `rampcast synth` first")?;
    let frame = read_frame(paths.frame())?;
    let labels = build_label_set(&frame)?;
    write_labels(&labels, paths.labels())?;
    println!("labels: {} days", labels.len());
    println!("wrote {}", paths.labels().display());
    Ok(())
}

fn load_inputs(config: &RunConfig, paths: &OutPaths) -> Result<(Vec<RampLabel>, Dataset)> {
    require(&paths.frame(), "run `rampcast ingest` or `rampcast synth` first")?;
    require(&paths.labels(), "run `rampcast label` first")?;
    let frame = read_frame(paths.frame())?;
    let labels = read_labels(paths.labels())?;
    let dataset =
        build_dataset_with_split(&frame, &labels, config.split.train, config.split.val)?;
    Ok((labels, dataset))
}

/// `train`: train one network and write its checkpoint + loss history.
pub fn cmd_train(
    config: &RunConfig,
    target: TargetKind,
    cell_override: Option<CellKind>,
) -> Result<()> {
    let paths = OutPaths::new(&config.out_dir);
    let (_, dataset) = load_inputs(config, &paths)?;
    let train_config = config.train_config(target, cell_override)?;
    let cell = train_config.spec.layers[0].kind;
    let sizes: Vec<usize> = train_config.spec.layers.iter().map(|l| l.hidden).collect();
    println!(
        "training {} {}: layers {:?}, lr {}, {} train / {} val samples",
        cell.name(),
        target.name(),
        sizes,
        train_config.learning_rate,
        dataset.train().len(),
        dataset.val().len()
    );
    let started = Instant::now();
    let trained = train_with_rescue(
        &train_config,
        dataset.train(),
        dataset.val(),
        &dataset.scalers,
        Some(paths.root()),
    )?;
    let last = trained.history.last().expect("nonempty history");
    println!(
        "stopped after epoch {} ({:.1} s); best epoch {} with val loss {:.6}",
        last.epoch,
        started.elapsed().as_secs_f64(),
        trained.best_epoch,
        trained
            .history
            .iter()
            .map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min),
    );
    write_checkpoint(&paths.checkpoint(cell, target), &trained.to_checkpoint())?;
    write_history(&paths.history(cell, target), &trained.history)?;
    println!("wrote {}", paths.checkpoint(cell, target).display());
    Ok(())
}

/// Reconstruct a usable model from a checkpoint; published hyperparameters
/// stand in for the (unrecorded) training settings, which evaluation and
/// forecasting never read.
fn model_from_checkpoint(ckpt: Checkpoint) -> Result<TrainedModel> {
    let cell = ckpt.params.spec.layers[0].kind;
    let input_size = ckpt.params.spec.input_size;
    let mut config = TrainConfig::for_target(ckpt.target, cell, input_size, ckpt.seed)?;
    config.spec = ckpt.params.spec.clone();
    Ok(TrainedModel {
        params: ckpt.params,
        scalers: ckpt.scalers,
        config,
        history: vec![],
        best_epoch: 0,
    })
}

fn load_model(paths: &OutPaths, cell: CellKind, target: TargetKind) -> Result<TrainedModel> {
    let path = paths.checkpoint(cell, target);
    if !path.exists() {
        return Err(Error::Checkpoint(format!(
            "missing checkpoint {}; run `rampcast train --target {} --cell {}`",
            path.display(),
            target.name(),
            cell.name()
        )));
    }
    let ckpt = read_checkpoint(&path)?;
    if ckpt.target != target {
        return Err(Error::Checkpoint(format!(
            "{} holds a {} model, expected {}",
            path.display(),
            ckpt.target.name(),
            target.name()
        )));
    }
    model_from_checkpoint(ckpt)
}

fn load_pair(paths: &OutPaths, cell: CellKind) -> Result<ModelPair> {
    Ok(ModelPair {
        magnitude: load_model(paths, cell, TargetKind::Magnitude)?,
        start: load_model(paths, cell, TargetKind::StartTime)?,
    })
}

fn partition_range(samples: &[Sample]) -> (NaiveDate, NaiveDate) {
    (
        samples.first().expect("nonempty partition").date,
        samples.last().expect("nonempty partition").date,
    )
}

fn print_tables(evaluation: &Evaluation) {
    for (title, table) in [
        ("magnitude (GW)", &evaluation.magnitude),
        ("start time (period)", &evaluation.start),
    ] {
        println!("\n{title}");
        println!(
            "  {:<5} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "model", "MSE mean", "MSE std", "MAE mean", "MAE std", "MAPE mean", "MAPE std"
        );
        for row in &table.models {
            println!(
                "  {:<5} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>12.5}",
                row.model.name(),
                row.mse.mean,
                row.mse.std,
                row.mae.mean,
                row.mae.std,
                row.mape.mean,
                row.mape.std
            );
        }
    }
}

/// `evaluate`: score PM/GRU/SRN/NPM on the test split and write the report.
pub fn cmd_evaluate(config: &RunConfig) -> Result<()> {
    let paths = OutPaths::new(&config.out_dir);
    let (labels, dataset) = load_inputs(config, &paths)?;
    let pm = load_pair(&paths, CellKind::Lstm)?;
    let gru = load_pair(&paths, CellKind::Gru)?;
    let srn = load_pair(&paths, CellKind::Srn)?;

    let evaluation = evaluate(&pm, &gru, &srn, &labels, dataset.test())?;

    let all_dates: Vec<NaiveDate> = dataset.samples.iter().map(|s| s.date).collect();
    let manifest = RunManifest {
        config_hash: config_hash(config),
        seed: config.seed,
        data_range: (
            *all_dates.first().expect("nonempty dataset"),
            *all_dates.last().expect("nonempty dataset"),
        ),
        train_range: partition_range(dataset.train()),
        val_range: partition_range(dataset.val()),
        test_range: partition_range(dataset.test()),
        clamped_start_predictions: evaluation.clamped_start_predictions,
        magnitude_mape_excluded: evaluation.mape_excluded_total(),
    };
    let report = emit_report(&evaluation, &manifest, &paths.report_dir())?;

    println!(
        "evaluated {} test days × {} models",
        dataset.test().len(),
        MODEL_ORDER.len()
    );
    print_tables(&evaluation);
    println!("\nreport written to {}", paths.report_dir().display());
    println!(
        "  {}\n  {}\n  {}",
        report.metrics.display(),
        report.forecasts.display(),
        report.manifest.display()
    );
    Ok(())
}

/// `forecast`: one day's ramp forecast from the proposed model's
/// checkpoints, with wall-clock inference times.
pub fn cmd_forecast(config: &RunConfig, date: NaiveDate) -> Result<()> {
    let paths = OutPaths::new(&config.out_dir);
    require(&paths.frame(), "run `rampcast ingest` or `rampcast synth` first")?;
    let frame = read_frame(paths.frame())?;
    let magnitude = load_model(&paths, CellKind::Lstm, TargetKind::Magnitude)?;
    let start = load_model(&paths, CellKind::Lstm, TargetKind::StartTime)?;
    if magnitude.scalers != start.scalers {
        return Err(Error::PartitionMismatch(
            "the magnitude and start-time checkpoints were trained on different \
             data partitions"
                .into(),
        ));
    }

    let window = build_window(&frame, &magnitude.scalers, date)?;

    let t0 = Instant::now();
    let mu = predict_magnitude(&magnitude, &window)?;
    let mu_ms = t0.elapsed().as_secs_f64() * 1000.0;
    let t1 = Instant::now();
    let kappa = predict_start_detailed(&start, &window)?;
    let kappa_ms = t1.elapsed().as_secs_f64() * 1000.0;

    let prev = date.pred_opt().expect("date has a predecessor");
    let clock = kappa_clock(kappa.period);
    println!("forecast for {date} (inputs: {prev} 12:00–19:55)");
    println!("  magnitude: {mu:.3} GW   [{mu_ms:.1} ms]");
    print!("  start:     period {} = {clock}   [{kappa_ms:.1} ms]", kappa.period);
    if kappa.clamped {
        print!("   (clamped from {:.1})", kappa.raw);
    }
    println!();
    Ok(())
}

fn kappa_clock(period: usize) -> String {
    format!("{:02}:{:02}", period * 5 / 60, period * 5 % 60)
}
