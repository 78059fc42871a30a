//! The one declarative run configuration.
//!
//! Every command reads the same TOML file; flags only override config keys
//! (`--seed`, `--out`, and per-command switches), and the output directory
//! may additionally come from `RAMPCAST_OUT`. An absent file means "all
//! defaults", which are the published hyperparameters, so
//! `rampcast synth && rampcast label && …` works with no config at all.
//!
//! Reproducibility: the manifest records a hash of the *effective*
//! configuration (after overrides, with the output directory blanked, since
//! where results land cannot affect what they are).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use rampcast_core::features::{TargetKind, LOOKBACK, NUM_FEATURE_COLUMNS};
use rampcast_core::neural::{CellKind, NetworkSpec};
use rampcast_core::timeseries::{
    FillPolicy, PowerSchema, StationSet, SynthParams, WeatherSchema, STEP_MINUTES,
};
use rampcast_core::training::TrainConfig;
use rampcast_core::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Top-level seed; every random draw flows from it through named
    /// substreams (init, shuffle, dropout, synth).
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Label for the naive-local-time data (informational; no conversion).
    pub timezone: String,
    pub data: DataConfig,
    pub stations: StationConfig,
    pub window: WindowConfig,
    pub split: SplitConfig,
    pub train: TrainSection,
    /// Benchmark cells trained alongside the proposed model.
    pub benchmarks: Vec<String>,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out_dir: PathBuf::from("runs/rampcast"),
            timezone: "US/Pacific".into(),
            data: DataConfig::default(),
            stations: StationConfig::default(),
            window: WindowConfig::default(),
            split: SplitConfig::default(),
            train: TrainSection::default(),
            benchmarks: vec!["gru".into(), "srn".into()],
            synth: SynthConfig::default(),
        }
    }
}

/// Input file paths and their column maps.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Power CSV (net load, load, PV, wind). Absent means synthetic-only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<PathBuf>,
    /// Station id → CSV path for each temperature station.
    pub temperature: BTreeMap<String, PathBuf>,
    /// Station id → CSV path for each irradiance station.
    pub irradiance: BTreeMap<String, PathBuf>,
    pub power_columns: PowerSchema,
    pub weather_columns: WeatherSchema,
    pub fill: FillPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationConfig {
    pub temperature: Vec<String>,
    pub irradiance: Vec<String>,
}

impl Default for StationConfig {
    fn default() -> Self {
        StationConfig {
            temperature: vec!["t1".into(), "t2".into(), "t3".into(), "t4".into()],
            irradiance: vec![
                "i1".into(),
                "i2".into(),
                "i3".into(),
                "i4".into(),
                "i5".into(),
            ],
        }
    }
}

/// The look-back window over the previous day's afternoon.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// First period's local clock time, "HH:MM".
    pub start: String,
    /// Exclusive end, "HH:MM".
    pub end: String,
    /// Look-back length in 5-minute periods; must equal the window span.
    pub lookback: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            start: "12:00".into(),
            end: "20:00".into(),
            lookback: LOOKBACK,
        }
    }
}

/// Chronological split fractions; must sum to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

/// Per-target training settings. Anything left out falls back to the
/// published value for that target.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub magnitude: TrainSettings,
    pub start_time: TrainSettings,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    /// Cell kind: "lstm" (default), "gru", or "srn".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// Hidden sizes, bottom layer first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<usize>>,
    /// Per-layer dropout rates, same length as `layers`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    /// Gradient-norm clip; 0 disables clipping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
}

/// Synthetic duck-curve generator settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub days: usize,
    /// First generated calendar date, "YYYY-MM-DD".
    pub start_date: String,
    pub base_load_mw: f64,
    pub solar_capacity_mw: f64,
    pub wind_capacity_mw: f64,
    pub cloud_variability: f64,
    pub noise_mw: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let p = SynthParams::default();
        SynthConfig {
            days: 120,
            start_date: p.start_date.to_string(),
            base_load_mw: p.base_load_mw,
            solar_capacity_mw: p.solar_capacity_mw,
            wind_capacity_mw: p.wind_capacity_mw,
            cloud_variability: p.cloud_variability,
            noise_mw: p.noise_mw,
        }
    }
}

impl RunConfig {
    /// Load and validate a config file; `None` means all defaults.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let config = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("config {}: {e}", p.display())))?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.station_set()?;
        self.window.validate()?;
        self.split.validate()?;
        let mut benches: Vec<&str> = self.benchmarks.iter().map(String::as_str).collect();
        benches.sort_unstable();
        if benches != ["gru", "srn"] {
            return Err(Error::Config(format!(
                "benchmarks must be exactly [\"gru\", \"srn\"] (the report table has \
                 fixed columns PM, GRU, SRN, NPM), got {:?}",
                self.benchmarks
            )));
        }
        if self.synth.days == 0 {
            return Err(Error::Config("synth.days must be at least 1".into()));
        }
        self.synth_params()?;
        // Surface bad training settings at load time, not mid-pipeline.
        for target in [TargetKind::Magnitude, TargetKind::StartTime] {
            self.train_config(target, None)?;
        }
        Ok(())
    }

    pub fn station_set(&self) -> Result<StationSet> {
        StationSet::new(
            self.stations.temperature.clone(),
            self.stations.irradiance.clone(),
        )
    }

    pub fn synth_params(&self) -> Result<SynthParams> {
        let start_date: NaiveDate = self.synth.start_date.parse().map_err(|_| {
            Error::Config(format!(
                "synth.start_date '{}' is not a YYYY-MM-DD date",
                self.synth.start_date
            ))
        })?;
        Ok(SynthParams {
            start_date,
            base_load_mw: self.synth.base_load_mw,
            solar_capacity_mw: self.synth.solar_capacity_mw,
            wind_capacity_mw: self.synth.wind_capacity_mw,
            cloud_variability: self.synth.cloud_variability,
            noise_mw: self.synth.noise_mw,
            stations: self.station_set()?,
        })
    }

    /// Resolve the effective [`TrainConfig`] for one target: published
    /// defaults overridden by the config file, then by `cell_override`.
    pub fn train_config(
        &self,
        target: TargetKind,
        cell_override: Option<CellKind>,
    ) -> Result<TrainConfig> {
        let s = match target {
            TargetKind::Magnitude => &self.train.magnitude,
            TargetKind::StartTime => &self.train.start_time,
        };
        let cell = match (cell_override, &s.cell) {
            (Some(kind), _) => kind,
            (None, Some(name)) => CellKind::parse(name)?,
            (None, None) => CellKind::Lstm,
        };
        let mut config = TrainConfig::for_target(target, cell, NUM_FEATURE_COLUMNS, self.seed)?;
        if let Some(lr) = s.learning_rate {
            config.learning_rate = lr;
        }
        if let Some(b) = s.batch_size {
            config.batch_size = b;
        }
        if let Some(e) = s.max_epochs {
            config.max_epochs = e;
        }
        if let Some(p) = s.patience {
            config.patience = p;
        }
        if let Some(c) = s.clip_norm {
            config.clip_norm = (c > 0.0).then_some(c);
        }
        if s.layers.is_some() || s.dropout.is_some() {
            let layers = s.layers.clone().unwrap_or_else(|| {
                config.spec.layers.iter().map(|l| l.hidden).collect()
            });
            let dropout = s.dropout.clone().unwrap_or_else(|| {
                config.spec.layers.iter().map(|l| l.dropout).collect()
            });
            if layers.len() != dropout.len() {
                return Err(Error::Config(format!(
                    "train.{}: {} layer sizes but {} dropout rates",
                    target.name(),
                    layers.len(),
                    dropout.len()
                )));
            }
            config.spec = NetworkSpec::stacked(cell, NUM_FEATURE_COLUMNS, &layers, &dropout)?;
        }
        config.validate()?;
        Ok(config)
    }
}

impl WindowConfig {
    fn validate(&self) -> Result<()> {
        let parse = |s: &str| {
            NaiveTime::parse_from_str(s, "%H:%M")
                .map_err(|_| Error::Config(format!("window time '{s}' is not HH:MM")))
        };
        let start = parse(&self.start)?;
        let end = parse(&self.end)?;
        let span_min = (end - start).num_minutes();
        if span_min <= 0 {
            return Err(Error::Config(format!(
                "window end {} must be after start {}",
                self.end, self.start
            )));
        }
        let periods = span_min / STEP_MINUTES;
        if span_min % STEP_MINUTES != 0 || periods as usize != self.lookback {
            return Err(Error::Config(format!(
                "window {}–{} spans {span_min} min = {periods} five-minute periods, \
                 but lookback is {}",
                self.start, self.end, self.lookback
            )));
        }
        // The feature pipeline is built for the published window; reject
        // anything else rather than silently ignoring the setting.
        let default = WindowConfig::default();
        if self.start != default.start || self.lookback != LOOKBACK {
            return Err(Error::Config(format!(
                "this build supports only the {}–{} window (lookback {})",
                default.start, default.end, LOOKBACK
            )));
        }
        Ok(())
    }
}

impl SplitConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!(
                    "split.{name} must be in (0, 1), got {v}"
                )));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// FNV-1a hash of the effective config, with the output directory blanked
/// (where results land cannot affect what they are).
pub fn config_hash(config: &RunConfig) -> String {
    let mut canonical = config.clone();
    canonical.out_dir = PathBuf::new();
    let text = toml::to_string(&canonical).expect("config serializes to TOML");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_hyperparameters() {
        let config = RunConfig::default();
        config.validate().unwrap();

        let mag = config.train_config(TargetKind::Magnitude, None).unwrap();
        assert_eq!(mag.learning_rate, 3e-3);
        let sizes: Vec<usize> = mag.spec.layers.iter().map(|l| l.hidden).collect();
        assert_eq!(sizes, [512, 1024, 256]);
        let rates: Vec<f64> = mag.spec.layers.iter().map(|l| l.dropout).collect();
        assert_eq!(rates, [0.15, 0.35, 0.40]);
        assert!(mag.spec.layers.iter().all(|l| l.kind == CellKind::Lstm));

        let start = config.train_config(TargetKind::StartTime, None).unwrap();
        assert_eq!(start.learning_rate, 2.831e-5);
        let sizes: Vec<usize> = start.spec.layers.iter().map(|l| l.hidden).collect();
        assert_eq!(sizes, [128, 256, 32]);
        let rates: Vec<f64> = start.spec.layers.iter().map(|l| l.dropout).collect();
        assert_eq!(rates, [0.20, 0.10, 0.10]);
    }

    #[test]
    fn partial_file_overrides_only_named_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "seed = 99\n\
             [train.magnitude]\n\
             layers = [8, 4]\n\
             dropout = [0.1, 0.1]\n\
             max_epochs = 3\n",
        )
        .unwrap();
        let config = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(config.seed, 99);

        let mag = config.train_config(TargetKind::Magnitude, None).unwrap();
        let sizes: Vec<usize> = mag.spec.layers.iter().map(|l| l.hidden).collect();
        assert_eq!(sizes, [8, 4]);
        assert_eq!(mag.max_epochs, 3);
        assert_eq!(mag.learning_rate, 3e-3); // untouched default
        assert_eq!(mag.seed, 99); // seed flows into training

        // The other target is untouched.
        let start = config.train_config(TargetKind::StartTime, None).unwrap();
        let sizes: Vec<usize> = start.spec.layers.iter().map(|l| l.hidden).collect();
        assert_eq!(sizes, [128, 256, 32]);
    }

    #[test]
    fn cell_override_switches_the_whole_stack() {
        let config = RunConfig::default();
        let gru = config
            .train_config(TargetKind::Magnitude, Some(CellKind::Gru))
            .unwrap();
        assert!(gru.spec.layers.iter().all(|l| l.kind == CellKind::Gru));
        // Same sizes and learning rate as the proposed model.
        let sizes: Vec<usize> = gru.spec.layers.iter().map(|l| l.hidden).collect();
        assert_eq!(sizes, [512, 1024, 256]);
        assert_eq!(gru.learning_rate, 3e-3);
    }

    #[test]
    fn invariants_are_enforced() {
        let mut config = RunConfig::default();
        config.stations.temperature.pop();
        assert!(matches!(config.validate().unwrap_err(), Error::Config(_)));

        let mut config = RunConfig::default();
        config.split.test = 0.20;
        let err = config.validate().unwrap_err().to_string();
        assert!(err.contains("sum to 1"), "{err}");

        let mut config = RunConfig::default();
        config.window.lookback = 90;
        assert!(matches!(config.validate().unwrap_err(), Error::Config(_)));

        let mut config = RunConfig::default();
        config.benchmarks = vec!["gru".into()];
        assert!(matches!(config.validate().unwrap_err(), Error::Config(_)));

        let mut config = RunConfig::default();
        config.train.start_time.dropout = Some(vec![0.5]);
        assert!(matches!(config.validate().unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn unknown_keys_and_bad_toml_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "sede = 7\n").unwrap();
        assert!(matches!(
            RunConfig::load(Some(&path)).unwrap_err(),
            Error::Config(_)
        ));
        fs::write(&path, "seed = [not toml").unwrap();
        assert!(matches!(
            RunConfig::load(Some(&path)).unwrap_err(),
            Error::Config(_)
        ));
        assert!(matches!(
            RunConfig::load(Some(Path::new("/nonexistent/run.toml"))).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn config_hash_ignores_out_dir_but_sees_everything_else() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.out_dir = PathBuf::from("/somewhere/else");
        assert_eq!(config_hash(&a), config_hash(&b));

        let mut c = RunConfig::default();
        c.seed = 8;
        assert_ne!(config_hash(&a), config_hash(&c));

        let mut d = RunConfig::default();
        d.train.magnitude.learning_rate = Some(1e-4);
        assert_ne!(config_hash(&a), config_hash(&d));

        assert_eq!(config_hash(&a).len(), 16);
    }
}
